//! Local approximants `f_i` on `G_{δ_i}(Z_i)`: `g` composed with the graph map on
//! graph strata, `g` itself on open strata, the constant `g(z)` on point strata.

use std::sync::Arc;

use rayon::prelude::*;

use super::carve::CarvedSets;
use super::schedule::ConstantSchedule;
use crate::cells::{graph_compose_g, CellKind, GraphComposition};
use crate::error::{Error, Result};
use crate::field::{fd_partial, fd_step, Constant, DerivativeKind, FieldRef, JetFn, ScalarField};
use crate::grid::GridSpec;
use crate::jet::{multi_index_enumerate, Jet};
use crate::oracle::{g_eta_verdict, DistanceOracle, Point, Verdict};
use crate::regular::{RegularFunction, RegularityCertificate};
use crate::report::CertificateReport;
use crate::strat::Stratification;

/// Headroom on derivative constants fitted from samples.
pub const FIT_HEADROOM: f64 = 1.25;

#[derive(Clone)]
pub struct LocalApprox {
    pub index: usize,
    /// `f_i` with exponent-1 certificate on `G_{δ_i}(Z_i)`.
    pub f: RegularFunction,
    /// `A δ_i / L_i` (`A δ_i` on point strata), zero on open strata.
    pub error_bound: f64,
    pub report: CertificateReport,
}

/// Largest `|D^α g(x)| d(x, W)^{|α|-1}` per order over `points`.
pub fn fit_exponent_one(g: &dyn ScalarField, w: &dyn DistanceOracle, points: &[Point], p: usize) -> Result<Vec<f64>> {
    let n = w.dim();
    let alphas: Vec<_> = multi_index_enumerate(n, p).into_iter().filter(|a| a.order() >= 1).collect();
    let exact = g.derivative_kind() == DerivativeKind::Exact;
    let rows: Vec<Result<Vec<f64>>> = points
        .par_iter()
        .map(|x| {
            let d = w.distance(x);
            let mut out = vec![0.0; p + 1];
            let jet = if exact { Some(g.jet_at(x, p)) } else { None };
            for a in &alphas {
                let q = a.order();
                let v = match &jet {
                    Some(j) => j.derivative(a).unwrap(),
                    None => fd_partial(g, x, a, fd_step(d))?,
                };
                out[q] = f64::max(out[q], v.abs() * d.powi(q as i32 - 1));
            }
            Ok(out)
        })
        .collect();
    let mut fit = vec![0.0; p + 1];
    for r in rows {
        for (f, v) in fit.iter_mut().zip(r?) {
            *f = f64::max(*f, v);
        }
    }
    Ok(fit)
}

/// Grid points of `G_{δ_i}(Z_i)` with an `in` verdict.
fn neighbourhood_points(carved: &CarvedSets, s: &Stratification, i: usize, delta: f64) -> Vec<Point> {
    let z = carved.z[i].as_ref();
    let w = s.w.as_ref();
    carved
        .points
        .par_iter()
        .filter(|x| g_eta_verdict(z.distance(x), z.covering_radius(), w.distance(x), w.covering_radius(), delta) == Verdict::In)
        .cloned()
        .collect()
}

/// Builds `f_i`, checks the slab or stratum containment of `G_{δ_i}(Z_i)` and the
/// error bound `|f_i - g| ≤ A (δ_i / L_i) d(x, W)` on the grid.
pub fn local_approx(
    i: usize,
    s: &Stratification,
    g: &FieldRef,
    schedule: &ConstantSchedule,
    carved: &CarvedSets,
    p: usize,
) -> Result<LocalApprox> {
    let cell = s.strata[i].clone();
    let a = schedule.lipschitz_a;
    let delta = schedule.delta[i];
    let l = schedule.lip_l[i];
    let pts = neighbourhood_points(carved, s, i, delta);
    let mut report = CertificateReport::new();
    let stage = format!("local {}", cell.id);
    if cell.is_open() {
        if let Some(x) = pts.iter().find(|x| !cell.contains(x)) {
            return Err(Error::ContainmentViolation { stratum: cell.id.clone(), point: x.clone() });
        }
        let inside: Vec<Point> = carved.points.iter().filter(|x| cell.contains(x)).cloned().collect();
        let fit = fit_exponent_one(g.as_ref(), s.w.as_ref(), &inside, p)?;
        for q in 1..=p {
            report.fit(&format!("{}.f_M_hat_{q}", cell.id), fit[q]);
        }
        let orders = fit.iter().map(|v| v * FIT_HEADROOM).collect();
        let cert = RegularityCertificate::from_orders(s.w.clone(), 1, orders).with_sup(a);
        let mut f = RegularFunction::new(g.clone(), cert);
        let c = cell.clone();
        f.domain = Some(Arc::new(move |x: &[f64]| c.contains(x)));
        return Ok(LocalApprox { index: i, f, error_bound: 0.0, report });
    }

    if let CellKind::Point { at } = &cell.kind {
        // |g(z)| ≤ A d(z, W) ≤ A (1 + δ) d(x, W) on G_δ({z}).
        let value = g.value(at);
        let cert = RegularityCertificate::from_orders(s.w.clone(), 1, vec![0.0; p + 1]).with_sup(a * (1.0 + delta));
        let error_bound = a * delta;
        for x in &pts {
            let d = s.w.distance(x);
            report.check_le(&stage, "error bound", x, error_bound * d, (value - g.value(x)).abs(), 1e-9 * d);
        }
        let mut f = RegularFunction::new(Arc::new(Constant { n: cell.n, c: value }), cert);
        let (z, w) = (at.clone(), s.w.clone());
        f.domain = Some(Arc::new(move |x: &[f64]| {
            let r = x.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            r <= delta * w.distance(x)
        }));
        return Ok(LocalApprox { index: i, f, error_bound, report });
    }

    if let Some(x) = pts.iter().find(|x| !cell.over_base(x)) {
        return Err(Error::ContainmentViolation { stratum: cell.id.clone(), point: x.clone() });
    }
    let m = cell.dim();
    let composed: FieldRef = Arc::new(GraphComposition::new(cell.clone(), g.clone())?);
    let field = {
        let (cell, composed) = (cell.clone(), composed.clone());
        JetFn::new(cell.n, move |x: &[Jet]| composed.eval_jet(&cell.jets_to_local(x)[..m]))
    };
    let field: FieldRef = if composed.derivative_kind() == DerivativeKind::Exact {
        Arc::new(field)
    } else {
        Arc::new(Sampled(Arc::new(field)))
    };
    let fit_grid = GridSpec::new(s.bbox.clone(), 200);
    let (_, g_report) = graph_compose_g(&cell, g.clone(), p, &fit_grid)?;
    // The distance from the foot point to the frontier of the stratum is at least
    // `base · d(x, W)`, which turns base-side constants into constants in `d(x, W)`.
    let base = if i == 0 {
        l - delta
    } else {
        let prev = schedule.eta[i - 1];
        let gap = prev - delta * (prev + 1.0);
        gap * (l - delta / gap)
    };
    if !(base > 0.0) {
        return Err(Error::InfeasibleSchedule(format!("stratum {}: non-positive frontier factor {base}", cell.id)));
    }
    let mut orders = vec![0.0; p + 1];
    for q in 1..=p {
        let b = g_report.fitted(&format!("{}.g_M_hat_{q}", cell.id)).unwrap_or(0.0) * FIT_HEADROOM;
        report.fit(&format!("{}.f_M_hat_{q}", cell.id), b);
        orders[q] = b * base.powi(1 - q as i32);
    }
    report.merge(g_report);
    let cert = RegularityCertificate::from_orders(s.w.clone(), 1, orders).with_sup(a * (1.0 + delta / l));
    let error_bound = a * delta / l;
    for x in &pts {
        let d = s.w.distance(x);
        let err = (field.value(x) - g.value(x)).abs();
        report.check_le(&stage, "error bound", x, error_bound * d, err, 1e-9 * d);
    }
    let mut f = RegularFunction::new(field, cert);
    let c = cell.clone();
    f.domain = Some(Arc::new(move |x: &[f64]| c.over_base(x)));
    Ok(LocalApprox { index: i, f, error_bound, report })
}

/// Marks a field as finite-difference only.
struct Sampled(FieldRef);

impl ScalarField for Sampled {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval_jet(&self, x: &[Jet]) -> Jet {
        self.0.eval_jet(x)
    }
    fn derivative_kind(&self) -> DerivativeKind {
        DerivativeKind::FiniteDifference
    }
}
