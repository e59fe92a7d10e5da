//! The cut-off partition on the carved sets, assembly of `f = Σ f_i ω_i`, and the
//! regularized distance.

use std::sync::Arc;

use rayon::prelude::*;

use super::carve::{carve_sets, coverage_check, CarvedSets};
use super::local::{local_approx, LocalApprox};
use super::schedule::{cutoff_schedule, cutoff_support, ConstantSchedule};
use crate::bump::{bump_stratum, normalize, BumpFunction, POSITIVITY_FLOOR};
use crate::cells::Cell;
use crate::error::{Error, Result};
use crate::field::{DerivativeKind, FieldRef, ScalarField};
use crate::grid::{log_spaced, GridSpec};
use crate::jet::Jet;
use crate::oracle::{g_eta_verdict, DistanceField, DistanceOracle, Point, Verdict};
use crate::regular::{RegularFunction, RegularityCertificate};
use crate::report::CertificateReport;
use crate::strat::Stratification;

/// `1` on an open cell, `0` elsewhere.
struct Indicator(Arc<Cell>);

impl ScalarField for Indicator {
    fn dim(&self) -> usize {
        self.0.n
    }
    fn eval_jet(&self, x: &[Jet]) -> Jet {
        let pt: Vec<f64> = x.iter().map(Jet::value).collect();
        Jet::constant(x[0].space(), if self.0.contains(&pt) { 1.0 } else { 0.0 })
    }
}

/// `base · Π (1 - killer)`.
struct TowerTerm {
    base: FieldRef,
    killers: Vec<FieldRef>,
}

impl ScalarField for TowerTerm {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn eval_jet(&self, x: &[Jet]) -> Jet {
        let mut acc = self.base.eval_jet(x);
        for k in &self.killers {
            if acc.value() == 0.0 {
                break;
            }
            acc = acc.mul(&k.eval_jet(x).neg().add_scalar(1.0));
        }
        acc
    }
    fn derivative_kind(&self) -> DerivativeKind {
        if std::iter::once(&self.base).chain(&self.killers).all(|f| f.derivative_kind() == DerivativeKind::Exact) {
            DerivativeKind::Exact
        } else {
            DerivativeKind::FiniteDifference
        }
    }
}

/// Partition of unity whose `i`-th term is the stratum's bump (the indicator of the
/// stratum when it is open) times `1 - K_j` for every earlier non-open stratum, `K_j`
/// being a cut-off bump inside the plateau of stratum `j`'s bump.
#[derive(Clone)]
pub struct TowerPartition {
    pub psis: Vec<RegularFunction>,
    pub omegas: Vec<RegularFunction>,
    /// Bumps of non-open strata; `None` for open ones.
    pub bases: Vec<Option<BumpFunction>>,
    pub killers: Vec<Option<BumpFunction>>,
}

impl TowerPartition {
    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        let psi: Vec<f64> = self.psis.iter().map(|f| f.value(x)).collect();
        let total: f64 = psi.iter().sum();
        psi.iter().map(|v| v / total).collect()
    }
}

/// Builds the partition for a schedule from [`cutoff_schedule`]. Fails with
/// `CoverageGap` when the terms sum below the positivity floor at a grid point.
pub fn tower_partition(s: &Stratification, schedule: &ConstantSchedule, carved: &CarvedSets, p: usize) -> Result<TowerPartition> {
    let mut bases = Vec::with_capacity(s.len());
    let mut killers: Vec<Option<BumpFunction>> = Vec::with_capacity(s.len());
    let mut psis = Vec::with_capacity(s.len());
    for (i, cell) in s.strata.iter().enumerate() {
        let (base_field, base_cert, base) = if cell.is_open() {
            let cert = RegularityCertificate::from_orders(s.w.clone(), 0, vec![0.0; p + 1]).with_sup(1.0);
            (Arc::new(Indicator(cell.clone())) as FieldRef, cert, None)
        } else {
            let b = bump_stratum(s, i, schedule.delta[i], p)?;
            (b.psi.field.clone(), b.psi.cert.clone(), Some(b))
        };
        let mut cert = base_cert;
        let mut fields = Vec::new();
        for k in killers.iter().flatten() {
            let one_minus = RegularityCertificate::from_orders(s.w.clone(), 0, k.psi.cert.orders.clone()).with_sup(1.0);
            cert = cert.product(&one_minus)?;
            fields.push(k.psi.field.clone());
        }
        let field: FieldRef = if fields.is_empty() { base_field } else { Arc::new(TowerTerm { base: base_field, killers: fields }) };
        psis.push(RegularFunction::new(field, cert.with_sup(1.0)));
        bases.push(base);
        killers.push(if cell.is_open() {
            None
        } else {
            if schedule.kill[i].is_none() {
                return Err(Error::InvalidInput("the partition needs a schedule with cut-off scales".into()));
            }
            Some(bump_stratum(s, i, cutoff_support(s, i, schedule.delta[i])?, p)?)
        });
    }
    let fields: Vec<FieldRef> = psis.iter().map(|f| f.field.clone()).collect();
    let gap = carved.points.par_iter().find_any(|x| fields.iter().map(|f| f.value(x)).sum::<f64>() < POSITIVITY_FLOOR);
    if let Some(x) = gap {
        let total: f64 = fields.iter().map(|f| f.value(x)).sum();
        return Err(Error::CoverageGap(format!("partition sum {total} below {POSITIVITY_FLOOR} at {x:?}")));
    }
    let omegas = normalize(&psis, s.n)?;
    Ok(TowerPartition { psis, omegas, bases, killers })
}

/// `Σ f_i ψ_i / Σ ψ_j`, dropping terms where `ψ_i` vanishes.
struct Assembled {
    n: usize,
    fs: Vec<RegularFunction>,
    psis: Vec<FieldRef>,
}

impl ScalarField for Assembled {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval_jet(&self, x: &[Jet]) -> Jet {
        let pt: Vec<f64> = x.iter().map(Jet::value).collect();
        let space = x[0].space();
        let mut total = Jet::constant(space, 0.0);
        let mut acc = Jet::constant(space, 0.0);
        for (f, psi) in self.fs.iter().zip(&self.psis) {
            let w = psi.eval_jet(x);
            if w.value() == 0.0 {
                continue;
            }
            let fj = if f.in_domain(&pt) { f.field.eval_jet(x) } else { Jet::constant(space, f64::NAN) };
            acc = acc.add(&fj.mul(&w));
            total = total.add(&w);
        }
        acc.div(&total)
    }
    fn derivative_kind(&self) -> DerivativeKind {
        let all = self.fs.iter().map(|f| &f.field).chain(&self.psis);
        if all.into_iter().all(|f| f.derivative_kind() == DerivativeKind::Exact) {
            DerivativeKind::Exact
        } else {
            DerivativeKind::FiniteDifference
        }
    }
}

/// `f = Σ f_i ω_i` with the summed product certificates. Fails with `SupportLeak` when
/// some `ψ_i > 0` at a grid point outside `G_{δ_i}(Z_i)`.
pub fn assemble(
    s: &Stratification,
    locals: &[LocalApprox],
    partition: &TowerPartition,
    carved: &CarvedSets,
    schedule: &ConstantSchedule,
) -> Result<RegularFunction> {
    if locals.len() != partition.psis.len() || locals.is_empty() {
        return Err(Error::InvalidInput(format!("{} local approximants for {} partition terms", locals.len(), partition.psis.len())));
    }
    let w = s.w.as_ref();
    for (i, psi) in partition.psis.iter().enumerate() {
        let z = carved.z[i].as_ref();
        let leak = carved.points.par_iter().find_any(|x| {
            psi.value(x) > 0.0
                && g_eta_verdict(z.distance(x), z.covering_radius(), w.distance(x), w.covering_radius(), schedule.delta[i]) == Verdict::Out
        });
        if let Some(x) = leak {
            return Err(Error::SupportLeak { index: i, point: x.clone() });
        }
    }
    let mut cert = locals[0].f.cert.product(&partition.omegas[0].cert)?;
    for (l, o) in locals.iter().zip(&partition.omegas).skip(1) {
        cert = cert.sum(&l.f.cert.product(&o.cert)?)?;
    }
    let field = Assembled {
        n: s.n,
        fs: locals.iter().map(|l| l.f.clone()).collect(),
        psis: partition.psis.iter().map(|f| f.field.clone()).collect(),
    };
    Ok(RegularFunction::new(Arc::new(field), cert))
}

#[derive(Clone)]
pub struct Approximation {
    pub f: RegularFunction,
    pub schedule: ConstantSchedule,
    pub carved: CarvedSets,
    pub locals: Vec<LocalApprox>,
    pub partition: TowerPartition,
    pub report: CertificateReport,
}

/// Checks `|g(x) - g(y)| ≤ A |x - y|` on neighbouring and strided pairs of grid points.
fn lipschitz_sanity(g: &dyn ScalarField, a: f64, points: &[Point]) -> Result<()> {
    let strides = [1, 7, points.len() / 3 + 1];
    for stride in strides {
        let bad = (0..points.len().saturating_sub(stride)).into_par_iter().find_any(|&k| {
            let (x, y) = (&points[k], &points[k + stride]);
            let dist = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
            (g.value(x) - g.value(y)).abs() > a * dist * (1.0 + 1e-9) + 1e-12
        });
        if let Some(k) = bad {
            return Err(Error::LipschitzViolation(format!(
                "|g(x) - g(y)| exceeds {a} |x - y| at x = {:?}, y = {:?}",
                points[k],
                points[k + stride]
            )));
        }
    }
    Ok(())
}

/// Approximates an `A`-Lipschitz `g` by `f` regular near `W` with
/// `|f - g| ≤ κ d(x, W)`, checking every stage on the grid.
pub fn approximate(s: &Stratification, g: &FieldRef, a: f64, p: usize, kappa: f64, grid: &GridSpec) -> Result<Approximation> {
    let schedule = cutoff_schedule(s, a, kappa)?;
    let carved = carve_sets(s, &schedule, grid)?;
    lipschitz_sanity(g.as_ref(), a, &carved.points)?;
    let mut report = coverage_check(s, &carved, &schedule);
    let locals = (0..s.len()).map(|i| local_approx(i, s, g, &schedule, &carved, p)).collect::<Result<Vec<_>>>()?;
    for l in &locals {
        report.merge(l.report.clone());
    }
    let partition = tower_partition(s, &schedule, &carved, p)?;
    let f = assemble(s, &locals, &partition, &carved, &schedule)?;
    let w = s.w.as_ref();
    let rows: Vec<(Point, f64, f64)> = carved
        .points
        .par_iter()
        .map(|x| {
            let d = w.distance(x);
            (x.clone(), d, (f.value(x) - g.value(x)).abs())
        })
        .collect();
    for (x, d, err) in rows {
        report.check_le("approx", "|f - g| <= kappa d", &x, kappa * d, err, 1e-12 * d.max(1.0));
    }
    for q in 1..=p {
        report.fit(&format!("f.cert_M_{q}"), f.cert.orders[q]);
    }
    Ok(Approximation { f, schedule, carved, locals, partition, report })
}

/// Width of the collar around `W` excluded from the equivalence and derivative fits.
pub const FIT_COLLAR: f64 = 1e-3;

/// Candidates refined by local search in the derivative fit.
const SEARCH_SEEDS: usize = 20;

#[derive(Clone)]
pub struct RegularizedDistance {
    pub approximation: Approximation,
    /// `max(f / d, d / f)` over the grid.
    pub a_hat: f64,
    /// `b_hat[q]` bounds `|D^α f| d^{q-1}` over `|α| = q` on the grid.
    pub b_hat: Vec<f64>,
    /// The same fit on the refined grid.
    pub b_hat_refined: Vec<f64>,
    pub report: CertificateReport,
}

impl RegularizedDistance {
    pub fn f(&self) -> &RegularFunction {
        &self.approximation.f
    }
}

/// `max_{|α| = q} |D^α f(x)| d(x, W)^{q-1}` for `q = 1..=p`.
fn scaled_derivatives(f: &dyn ScalarField, w: &dyn DistanceOracle, x: &[f64], p: usize) -> Vec<f64> {
    let jet = f.jet_at(x, p);
    let d = w.distance(x);
    (0..=p).map(|q| if q == 0 { 0.0 } else { jet.max_abs_derivative(q) * d.powi(q as i32 - 1) }).collect()
}

/// Pattern search for a local maximum of the order-`q` scaled derivative from `x`.
fn climb(f: &dyn ScalarField, w: &dyn DistanceOracle, grid: &GridSpec, x: &[f64], q: usize, p: usize) -> f64 {
    let admissible = |y: &[f64]| grid.bbox.contains(y) && w.distance(y) > FIT_COLLAR;
    let mut best = x.to_vec();
    let mut value = scaled_derivatives(f, w, &best, p)[q];
    let mut step = grid.pitch() / 2.0;
    while step > grid.pitch() * 1e-3 {
        let mut moved = false;
        for axis in 0..best.len() {
            for sign in [-1.0, 1.0] {
                let mut y = best.clone();
                y[axis] += sign * step;
                if !admissible(&y) {
                    continue;
                }
                let v = scaled_derivatives(f, w, &y, p)[q];
                if v > value {
                    value = v;
                    best = y;
                    moved = true;
                }
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    value
}

/// Points at relative offsets `r·d(z, W)` along each axis from samples `z` of the
/// non-open strata, taken at the grid's sampling; the thin transitions of the bumps
/// around those strata are easily missed by the grid alone.
fn stratum_probes(s: &Stratification, grid: &GridSpec, offsets: &[f64]) -> Vec<Point> {
    let w = s.w.as_ref();
    let mut out = Vec::new();
    for cell in s.strata.iter().filter(|c| !c.is_open()) {
        let (samples, _) = cell.samples(grid);
        let stride = (samples.len() / PROBE_SAMPLES).max(1);
        for z in samples.iter().step_by(stride) {
            let dz = w.distance(z);
            for axis in 0..s.n {
                for sign in [-1.0, 1.0] {
                    for r in offsets {
                        let mut x = z.clone();
                        x[axis] += sign * r * dz;
                        if grid.bbox.contains(&x) && w.distance(&x) > FIT_COLLAR {
                            out.push(x);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Samples per non-open stratum used to place probes.
const PROBE_SAMPLES: usize = 64;

/// Fits the derivative constants on the grid (off the collar) and on probes around the
/// non-open strata at relative `offsets`, refining the largest values by local search
/// so the fit does not depend on the grid pitch.
pub fn fit_derivative_constants(f: &dyn ScalarField, s: &Stratification, grid: &GridSpec, p: usize, offsets: &[f64]) -> Result<Vec<f64>> {
    let w = s.w.as_ref();
    let mut points = grid.points_off(w, FIT_COLLAR)?;
    points.extend(stratum_probes(s, grid, offsets));
    let values: Vec<Vec<f64>> = points.par_iter().map(|x| scaled_derivatives(f, w, x, p)).collect();
    let mut fit = vec![0.0; p + 1];
    for q in 1..=p {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| values[b][q].total_cmp(&values[a][q]));
        let seeds = &order[..SEARCH_SEEDS.min(order.len())];
        fit[q] = seeds.par_iter().map(|&k| climb(f, w, grid, &points[k], q, p)).reduce(|| 0.0, f64::max);
    }
    Ok(fit)
}

/// Relative offsets spanning the scales of a schedule, from a tenth of the smallest
/// scale to twice the largest.
pub fn schedule_offsets(schedule: &ConstantSchedule) -> Vec<f64> {
    let small = schedule.kill.iter().flatten().copied().chain([schedule.final_eta]).fold(f64::INFINITY, f64::min);
    let large = schedule.delta.iter().copied().fold(0.0, f64::max);
    log_spaced(0.1 * small, 2.0 * large, 48)
}

/// Maximum relative drift of the derivative fit under grid refinement.
pub const MAX_REFINEMENT_DRIFT: f64 = 0.1;

/// The approximation of `d(·, W)` itself, with the fitted equivalence constant
/// `A` against the claimed `1/(1-κ)` and derivative constants `B_q` on the grid and
/// the refined grid.
pub fn regularized_distance(s: &Stratification, p: usize, kappa: f64, grid: &GridSpec) -> Result<RegularizedDistance> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidInput(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    let g: FieldRef = Arc::new(DistanceField { set: s.w.clone() });
    let approximation = approximate(s, &g, 1.0, p, kappa, grid)?;
    let f = approximation.f.field.as_ref();
    let w = s.w.as_ref();
    let mut report = approximation.report.clone();
    let points = grid.points_off(w, FIT_COLLAR)?;
    let ratios: Vec<(Point, f64)> = points
        .par_iter()
        .map(|x| {
            let (v, d) = (f.value(x), w.distance(x));
            (x.clone(), if v > 0.0 { f64::max(v / d, d / v) } else { f64::INFINITY })
        })
        .collect();
    if let Some((x, _)) = ratios.iter().find(|(_, r)| r.is_infinite()) {
        return Err(Error::NonPositiveF { point: x.clone(), value: f.value(x) });
    }
    let a_hat = ratios.iter().map(|(_, r)| *r).fold(1.0, f64::max);
    let a_claim = 1.0 / (1.0 - kappa);
    report.fit("A_hat", a_hat);
    report.check_le("regdist", "equivalence A_hat <= 1/(1-kappa)", &[], a_claim, a_hat, 0.0);
    let offsets = schedule_offsets(&approximation.schedule);
    let b_hat = fit_derivative_constants(f, s, grid, p, &offsets)?;
    let b_hat_refined = fit_derivative_constants(f, s, &grid.refined(), p, &offsets)?;
    for q in 1..=p {
        report.fit(&format!("B_hat_{q}"), b_hat[q]);
        report.fit(&format!("B_hat_{q}.refined"), b_hat_refined[q]);
        let drift = (b_hat_refined[q] - b_hat[q]).abs() / b_hat[q].max(f64::MIN_POSITIVE);
        report.fit(&format!("B_hat_{q}.drift"), drift);
        report.check_le("regdist", &format!("order {q} refinement drift"), &[], MAX_REFINEMENT_DRIFT, drift, 0.0);
        report.check_le("regdist", &format!("order {q} fit within certificate"), &[], approximation.f.cert.orders[q], b_hat_refined[q], 0.0);
    }
    Ok(RegularizedDistance { approximation, a_hat, b_hat, b_hat_refined, report })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundingBox;
    use crate::strat::{half_line_scene, points_on_line};

    #[test]
    fn two_rays_reproduce_abs() {
        let bbox = BoundingBox::cube(1, 2.0);
        let s = points_on_line(&[0.0], bbox.clone()).unwrap();
        let g: FieldRef = Arc::new(DistanceField { set: s.w.clone() });
        let ap = approximate(&s, &g, 1.0, 2, 0.1, &GridSpec::new(bbox, 401)).unwrap();
        for x in [-1.5, -0.01, 1e-4, 0.3, 1.9] {
            assert!((ap.f.value(&[x]) - x.abs()).abs() < 1e-14);
        }
        assert!(ap.report.passed(), "{}", ap.report);
    }

    #[test]
    fn half_line_regularized_distance() {
        let bbox = BoundingBox::cube(2, 1.0);
        let s = half_line_scene(bbox.clone()).unwrap();
        let rd = regularized_distance(&s, 2, 0.1, &GridSpec::new(bbox, 41)).unwrap();
        assert!(rd.a_hat <= 1.0 / 0.9, "{}", rd.a_hat);
        for x in [[0.5, 0.0], [0.5, 0.01], [-0.5, 0.2], [0.1, -0.3]] {
            let d = s.w.distance(&x);
            assert!((rd.f().value(&x) - d).abs() <= 0.1 * d);
        }
        assert_ne!(rd.report.verdict(), crate::report::Status::Fail, "{}", rd.report);
    }

    #[test]
    fn plain_schedule_is_rejected_by_the_partition() {
        let bbox = BoundingBox::cube(2, 1.0);
        let s = half_line_scene(bbox.clone()).unwrap();
        let sched = super::super::schedule::schedule_constants(&s, 1.0, 0.1).unwrap();
        let carved = carve_sets(&s, &sched, &GridSpec::new(bbox, 21)).unwrap();
        assert!(matches!(tower_partition(&s, &sched, &carved, 2), Err(Error::InvalidInput(_))));
    }
}
