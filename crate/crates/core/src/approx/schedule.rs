//! The interleaved scales `η_s < δ_s < … < η_1 < δ_1 < θ` and the nesting radii `ε_ij`.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::bump::{plateau_scale, SAFETY};
use crate::error::{Error, Result};
use crate::report::{fmt_f64, CertificateReport};
use crate::strat::Stratification;

/// Maps a stratum's neighbourhood scale `δ_j` to the scale `c_j` below which every later
/// nesting radius `ε_ij` must stay, so that the stratum's cut-off bump removes the region.
pub type KillScale = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// Per-stratum data driving the schedule.
#[derive(Clone)]
pub struct ScheduleInput {
    pub lip_l: f64,
    pub open: bool,
    pub kill_scale: Option<KillScale>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantSchedule {
    pub kappa: f64,
    /// Lipschitz constant `A` of the approximated function.
    pub lipschitz_a: f64,
    pub theta: f64,
    pub lip_l: Vec<f64>,
    pub open: Vec<bool>,
    pub delta: Vec<f64>,
    pub eta: Vec<f64>,
    /// `eps[i][j]` for `j ≤ i`.
    pub eps: Vec<Vec<f64>>,
    /// Cut-off scales `c_j` of non-open strata, when the schedule was built for a cut-off partition.
    pub kill: Vec<Option<f64>>,
    pub final_eta: f64,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InfeasibleSchedule(format!("{name} = {v}")))
    }
}

/// Builds the schedule for strata listed by non-decreasing dimension.
pub fn schedule_from_inputs(inputs: &[ScheduleInput], a: f64, kappa: f64) -> Result<ConstantSchedule> {
    if inputs.is_empty() {
        return Err(Error::EmptyStratification);
    }
    if !(a > 0.0) || !(kappa > 0.0) {
        return Err(Error::InvalidInput(format!("need A > 0 and kappa > 0, got A = {a}, kappa = {kappa}")));
    }
    let s = inputs.len();
    let lip_l: Vec<f64> = inputs.iter().map(|c| c.lip_l).collect();
    let min_l = lip_l.iter().copied().fold(f64::INFINITY, f64::min);
    let theta = positive("theta", SAFETY * 1f64.min(kappa * min_l / a))?;
    let mut delta = Vec::with_capacity(s);
    let mut eta: Vec<f64> = Vec::with_capacity(s);
    let mut eps: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut kill: Vec<Option<f64>> = Vec::with_capacity(s);
    for (i, input) in inputs.iter().enumerate() {
        let d = if i == 0 {
            SAFETY * theta.min(lip_l[0])
        } else {
            let prev = eta[i - 1];
            if input.open {
                SAFETY * prev / (1.0 + prev)
            } else {
                let l = input.lip_l;
                SAFETY * (prev / (1.0 + prev)).min(l * prev / (1.0 + l * (prev + 1.0)))
            }
        };
        let d = positive(&format!("delta_{}", i + 1), d)?;
        delta.push(d);
        let c = match (&input.kill_scale, input.open) {
            (Some(f), false) => Some(positive(&format!("cut-off scale {}", i + 1), f(d)?)?),
            _ => None,
        };
        kill.push(c);
        let mut e = if i == 0 { d / 2.0 } else { SAFETY * d };
        if i > 0 {
            for j in 0..i {
                let prev = eps[i - 1][j];
                e = e.min(SAFETY * (delta[j] - prev) / (1.0 + prev));
                if let Some(cj) = kill[j] {
                    e = e.min(SAFETY * (cj - prev) / (1.0 + prev));
                }
            }
        }
        if let Some(ci) = c {
            e = e.min(SAFETY * ci);
        }
        let e = positive(&format!("eta_{}", i + 1), e)?;
        eta.push(e);
        let mut row: Vec<f64> = if i == 0 { Vec::new() } else { eps[i - 1].iter().map(|p| p + e + e * p).collect() };
        row.push(e);
        eps.push(row);
    }
    let last = &eps[s - 1];
    let final_eta = (0..s).map(|i| SAFETY * (delta[i] - last[i]) / (1.0 + last[i])).fold(f64::INFINITY, f64::min);
    let final_eta = positive("final eta", final_eta)?;
    Ok(ConstantSchedule {
        kappa,
        lipschitz_a: a,
        theta,
        lip_l,
        open: inputs.iter().map(|c| c.open).collect(),
        delta,
        eta,
        eps,
        kill,
        final_eta,
    })
}

fn plain_inputs(s: &Stratification) -> Vec<ScheduleInput> {
    s.strata.iter().map(|c| ScheduleInput { lip_l: if c.is_open() { 1.0 } else { c.lip_l() }, open: c.is_open(), kill_scale: None }).collect()
}

/// The schedule determined by the strata alone.
pub fn schedule_constants(s: &Stratification, a: f64, kappa: f64) -> Result<ConstantSchedule> {
    schedule_from_inputs(&plain_inputs(s), a, kappa)
}

/// The schedule with cut-off scales: stratum `j`'s cut-off bump has support
/// `0.9 ρ_j(δ_j)` and plateau `ρ_j(0.9 ρ_j(δ_j))`, a third of which bounds the
/// nesting radii around `Z_j`.
pub fn cutoff_schedule(s: &Stratification, a: f64, kappa: f64) -> Result<ConstantSchedule> {
    let mut inputs = plain_inputs(s);
    for (j, input) in inputs.iter_mut().enumerate() {
        if input.open {
            continue;
        }
        let strat = s.clone();
        input.kill_scale = Some(Arc::new(move |delta: f64| {
            let support = cutoff_support(&strat, j, delta)?;
            Ok(plateau_scale(&strat, j, support)? / 3.0)
        }));
    }
    schedule_from_inputs(&inputs, a, kappa)
}

/// Support scale of the cut-off bump of stratum `j` given its neighbourhood scale.
pub fn cutoff_support(s: &Stratification, j: usize, delta: f64) -> Result<f64> {
    Ok(SAFETY * plateau_scale(s, j, delta)?)
}

impl ConstantSchedule {
    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// The chain `η_s < δ_s < … < η_1 < δ_1 < θ < 1`, `ε_ij < δ_j`, the `θ` condition,
    /// and the slab condition for non-open strata.
    pub fn chain_report(&self) -> CertificateReport {
        let mut r = CertificateReport::new();
        let st = "schedule";
        r.check(st, "theta < 1", &[], self.theta < 1.0);
        r.check(st, "delta_1 < theta", &[], self.delta[0] < self.theta);
        for i in 0..self.len() {
            let loc = [(i + 1) as f64];
            r.check(st, "eta_i < delta_i", &loc, self.eta[i] < self.delta[i] && self.eta[i] > 0.0);
            if i > 0 {
                r.check(st, "delta_i < eta_(i-1)", &loc, self.delta[i] < self.eta[i - 1]);
                if !self.open[i] {
                    let prev = self.eta[i - 1];
                    let ratio = self.delta[i] / (prev - self.delta[i] * (prev + 1.0));
                    r.check(st, "slab condition", &loc, ratio > 0.0 && ratio < self.lip_l[i]);
                }
            }
            r.check(st, "A theta / L_i < kappa", &loc, self.lipschitz_a * self.theta / self.lip_l[i] < self.kappa);
            r.check(st, "eps_ii = eta_i", &loc, self.eps[i][i] == self.eta[i]);
            for j in 0..=i {
                r.check(st, "eps_ij < delta_j", &[(i + 1) as f64, (j + 1) as f64], self.eps[i][j] < self.delta[j]);
                if let Some(c) = self.kill[j] {
                    r.check(st, "eps_ij <= cut-off scale", &[(i + 1) as f64, (j + 1) as f64], self.eps[i][j] <= c);
                }
            }
        }
        r.check(st, "final eta", &[], self.final_eta > 0.0);
        r
    }

    /// Every constant, one `name,value` line each.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,value\n");
        let mut line = |k: String, v: f64| {
            let _ = writeln!(out, "{k},{}", fmt_f64(v));
        };
        line("kappa".into(), self.kappa);
        line("A".into(), self.lipschitz_a);
        line("theta".into(), self.theta);
        for i in 0..self.len() {
            line(format!("L_{}", i + 1), self.lip_l[i]);
            line(format!("delta_{}", i + 1), self.delta[i]);
            line(format!("eta_{}", i + 1), self.eta[i]);
            if let Some(c) = self.kill[i] {
                line(format!("cutoff_{}", i + 1), c);
            }
            for j in 0..=i {
                line(format!("eps_{}_{}", i + 1, j + 1), self.eps[i][j]);
            }
        }
        line("eta".into(), self.final_eta);
        out
    }
}
