//! Bump functions `ψ` that equal 1 on `G_ρ(Z, W)` and vanish off `G_η(Z, W)`,
//! built stratum by stratum with explicit constants, their unions, and the
//! partition of unity subordinate to a covering by unions of strata.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cells::{graph_compose_g, validate_cell, CellKind};
use crate::error::{Error, Result};
use crate::field::{Constant, FieldRef, JetFn};
use crate::grid::GridSpec;
use crate::jet::Jet;
use crate::oracle::{g_eta_contains, g_eta_verdict, DistanceField, DistanceOracle, EmptySet, OracleRef, Point, Union, Verdict};
use crate::regular::{bell, probe_derivative_bounds, smoothstep_p, Combined, RegularFunction, RegularityCertificate};
use crate::report::CertificateReport;
use crate::strat::Stratification;

/// Margin applied to every strict inequality between constants.
pub const SAFETY: f64 = 0.9;

/// Resolution of the base grid on which graph maps are fitted.
const FIT_RESOLUTION: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpConstants {
    /// Support scale: `supp ψ ⊂ G_η(Z, W)`.
    pub eta: f64,
    /// Plateau scale: `ψ ≡ 1` on `G_ρ(Z, W)`.
    pub rho: f64,
    /// Support scale of the boundary bump.
    pub eta_prime: Option<f64>,
    /// Plateau scale of the boundary bump.
    pub rho_prime: Option<f64>,
    /// Slab-escape parameter, in `(0, L)`.
    pub delta: Option<f64>,
    /// Scale of the squared ratio fed to the plateau function.
    pub gamma: Option<f64>,
    /// Plateau and outer radius of a point bump.
    pub radii: Option<(f64, f64)>,
}

impl BumpConstants {
    fn plain(eta: f64, rho: f64) -> BumpConstants {
        BumpConstants { eta, rho, eta_prime: None, rho_prime: None, delta: None, gamma: None, radii: None }
    }
}

/// Constants of a point bump at distance `d` from `W`: `(ρ, r, R)`.
pub fn point_bump_radii(d: f64, eta: f64) -> (f64, f64, f64) {
    let big_r = SAFETY * eta / (1.0 + eta) * d;
    let mut rho = (eta / 4.0).min(0.5);
    while rho / (1.0 - rho) * d >= big_r {
        rho *= 0.5;
    }
    (rho, rho / (1.0 - rho) * d, big_r)
}

/// Constants of a graph-cell bump with Lipschitz factor `l`, given the plateau `ρ′` of the boundary bump.
pub fn cell_bump_constants(l: f64, eta: f64, eta_prime: f64, rho_prime: f64) -> BumpConstants {
    let delta = l / 2.0;
    let rd = rho_prime * delta;
    let gamma = SAFETY * 3.0 * rd * rd / (2.0 * (1.0 + rd) * (1.0 + rd));
    let sg = gamma.sqrt();
    let rho = SAFETY * rd.min(l * sg / (3f64.sqrt() + sg));
    BumpConstants {
        eta,
        rho,
        eta_prime: Some(eta_prime),
        rho_prime: Some(rho_prime),
        delta: Some(delta),
        gamma: Some(gamma),
        radii: None,
    }
}

/// A `[0, 1]`-valued function with exponent-0 certificate, plateau on `G_ρ(Z, W)`
/// and support in `G_η(Z, W)`.
#[derive(Clone)]
pub struct BumpFunction {
    pub psi: RegularFunction,
    pub target: OracleRef,
    pub constants: BumpConstants,
    pub label: String,
    /// The boundary bump that `psi` blends into, when one was built.
    pub lambda: Option<Box<BumpFunction>>,
}

impl BumpFunction {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.psi.value(x)
    }

    pub fn eta(&self) -> f64 {
        self.constants.eta
    }

    pub fn rho(&self) -> f64 {
        self.constants.rho
    }

    pub fn w(&self) -> &OracleRef {
        &self.psi.cert.w
    }
}

fn plateau_field(p: usize) -> FieldRef {
    Arc::new(smoothstep_p(p))
}

/// The bump that vanishes identically, standing in for an empty boundary.
pub fn zero_bump(w: OracleRef, eta: f64, rho: f64, p: usize) -> BumpFunction {
    let n = w.dim();
    let cert = RegularityCertificate::uniform(w.clone(), 0, p, 0.0).with_sup(0.0);
    BumpFunction {
        psi: RegularFunction::new(Arc::new(Constant { n, c: 0.0 }), cert),
        target: Arc::new(EmptySet { n }),
        constants: BumpConstants::plain(eta, rho),
        label: "empty".into(),
        lambda: None,
    }
}

/// Radial bump around `z`: `P(1/3 + (|x - z|² - r²) / (3(R² - r²)))`.
pub fn bump_point(z: &[f64], w: OracleRef, eta: f64, p: usize) -> Result<BumpFunction> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let d = w.distance(z);
    if d <= w.covering_radius() {
        return Err(Error::OnW);
    }
    let (rho, r, big_r) = point_bump_radii(d, eta);
    let width = 3.0 * (big_r * big_r - r * r);
    let n = z.len();
    let pf = plateau_field(p);
    let centre = z.to_vec();
    let field = {
        let (pf, centre) = (pf.clone(), centre.clone());
        JetFn::new(n, move |x: &[Jet]| {
            let mut sq = x[0].add_scalar(-centre[0]).square();
            for k in 1..n {
                sq = sq.add(&x[k].add_scalar(-centre[k]).square());
            }
            let arg = sq.add_scalar(-r * r).scale(1.0 / width).add_scalar(1.0 / 3.0);
            pf.eval_jet(&[arg])
        })
    };
    // Off the outer ball ψ is flat, inside it `d(x, W) ≤ d + R`; the argument has first
    // partials at most `2R/width`, second partials `2/width`, nothing higher.
    let phi = probe_derivative_bounds(pf.as_ref(), (0.0, 1.0), p);
    let inner = [2.0 * big_r / width, 2.0 / width];
    let mut orders = vec![0.0; p + 1];
    for (q, slot) in orders.iter_mut().enumerate().skip(1) {
        let x: Vec<f64> = (0..q).map(|i| inner.get(i).copied().unwrap_or(0.0)).collect();
        let k_q: f64 = (1..=q).map(|m| phi[m] * bell(q, m, &x)).sum();
        *slot = k_q * (d + big_r).powi(q as i32);
    }
    let cert = RegularityCertificate::from_orders(w.clone(), 0, orders).with_sup(1.0);
    let mut constants = BumpConstants::plain(eta, rho);
    constants.radii = Some((r, big_r));
    Ok(BumpFunction {
        psi: RegularFunction::new(Arc::new(field), cert),
        target: Arc::new(crate::oracle::PointSet { z: centre }),
        constants,
        label: format!("point {z:?}"),
        lambda: None,
    })
}

/// `1 - P(ψ_1 + … + ψ_k)` for bumps sharing `W` and `η`.
pub fn bump_union(bumps: &[BumpFunction], p: usize) -> Result<BumpFunction> {
    let first = bumps.first().ok_or(Error::EmptySet)?;
    for b in &bumps[1..] {
        if !Arc::ptr_eq(b.w(), first.w()) {
            return Err(Error::MixedReference);
        }
        if b.eta() != first.eta() {
            return Err(Error::MixedReference);
        }
    }
    let mut sum = first.psi.cert.clone();
    for b in &bumps[1..] {
        sum = sum.sum(&b.psi.cert)?;
    }
    let pf = plateau_field(p);
    let range = (0.0, sum.sup.unwrap_or(bumps.len() as f64));
    let phi = probe_derivative_bounds(pf.as_ref(), range, p);
    let mut cert = sum.compose(&phi)?;
    cert.sup = Some(1.0);
    let fields: Vec<FieldRef> = bumps.iter().map(|b| b.psi.field.clone()).collect();
    let refs: Vec<&FieldRef> = fields.iter().collect();
    let n = first.w().dim();
    let field = Combined::new(n, &refs, {
        let fields = fields.clone();
        move |x: &[Jet]| {
            let mut s = fields[0].eval_jet(x);
            for f in &fields[1..] {
                s = s.add(&f.eval_jet(x));
            }
            pf.eval_jet(&[s]).neg().add_scalar(1.0)
        }
    });
    let target: OracleRef = if bumps.len() == 1 {
        first.target.clone()
    } else {
        Arc::new(Union { n, parts: bumps.iter().map(|b| b.target.clone()).collect() })
    };
    let rho = bumps.iter().map(|b| b.rho()).fold(f64::INFINITY, f64::min);
    let labels: Vec<&str> = bumps.iter().map(|b| b.label.as_str()).collect();
    Ok(BumpFunction {
        psi: RegularFunction::new(Arc::new(field), cert),
        target,
        constants: BumpConstants::plain(first.eta(), rho),
        label: format!("union [{}]", labels.join(", ")),
        lambda: None,
    })
}

/// Bump for stratum `i` of `s`, dispatching on its dimension.
pub fn bump_stratum(s: &Stratification, i: usize, eta: f64, p: usize) -> Result<BumpFunction> {
    let cell = &s.strata[i];
    match &cell.kind {
        CellKind::Point { at } => {
            let mut b = bump_point(at, s.w.clone(), eta, p)?;
            b.target = cell.clone();
            b.label = cell.id.clone();
            Ok(b)
        }
        _ if cell.is_open() => bump_open_cell(s, i, eta, p),
        _ => bump_cell(s, i, eta, p),
    }
}

/// The bump of the frontier `Z′ = ∂Z \ W` of stratum `i` at scale at most `eta`,
/// or `None` when the frontier is empty.
fn boundary_bump(s: &Stratification, i: usize, eta: f64, p: usize) -> Result<Option<BumpFunction>> {
    let dim = s.strata[i].dim();
    let parts = s.boundary_of(i)?;
    if parts.is_empty() {
        return Ok(None);
    }
    if let Some(&j) = parts.iter().find(|&&j| s.strata[j].dim() >= dim) {
        return Err(Error::RecursionBase {
            stratum: s.strata[i].id.clone(),
            detail: format!("frontier stratum {} is not of lower dimension", s.strata[j].id),
        });
    }
    let eta = frontier_scale(s, parts, eta);
    let bumps = parts.iter().map(|&j| bump_stratum(s, j, eta, p)).collect::<Result<Vec<_>>>()?;
    bump_union(&bumps, p).map(Some)
}

/// Graph strata need a scale below their own Lipschitz factor; a smaller
/// scale only shrinks the support.
fn frontier_scale(s: &Stratification, parts: &[usize], eta: f64) -> f64 {
    parts
        .iter()
        .filter(|&&j| !s.strata[j].is_open() && s.strata[j].dim() > 0)
        .map(|&j| SAFETY * s.strata[j].lip_l())
        .fold(eta, f64::min)
}

/// The plateau scale `ρ` that [`bump_stratum`] would produce for stratum `i` at
/// support scale `eta`, without building the bump.
pub fn plateau_scale(s: &Stratification, i: usize, eta: f64) -> Result<f64> {
    let cell = &s.strata[i];
    let frontier = |eta: f64| -> Result<Option<f64>> {
        let parts = s.boundary_of(i)?;
        if parts.is_empty() {
            return Ok(None);
        }
        let eta = frontier_scale(s, parts, eta);
        let mut rho = f64::INFINITY;
        for &j in parts {
            rho = rho.min(plateau_scale(s, j, eta)?);
        }
        Ok(Some(rho))
    };
    match &cell.kind {
        CellKind::Point { at } => Ok(point_bump_radii(s.w.distance(at), eta).0),
        _ if cell.is_open() => Ok(frontier(eta)?.unwrap_or(SAFETY * eta)),
        _ => {
            let l = cell.lip_l();
            if !(eta > 0.0) || eta >= l {
                return Err(Error::EtaTooLarge { stratum: cell.id.clone(), eta, lip_l: l });
            }
            let eta_prime = eta / 2.0;
            let rho_prime = frontier(eta_prime)?.unwrap_or(SAFETY * eta_prime);
            Ok(cell_bump_constants(l, eta, eta_prime, rho_prime).rho)
        }
    }
}

/// Fitted per-order constants `C_q` with `|D^q φ(u)| ≤ C_q d(u, ∂T)^{1-q}` for the graph
/// map and for `u ↦ d((u, φ(u)), W)`.
fn graph_fits(s: &Stratification, i: usize, p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let cell = &s.strata[i];
    let grid = GridSpec::new(s.bbox.clone(), FIT_RESOLUTION);
    let map_report = validate_cell(cell, p, &grid)?;
    let g: FieldRef = Arc::new(DistanceField { set: s.w.clone() });
    let (_, g_report) = graph_compose_g(cell, g, p, &grid)?;
    let mut phi = vec![0.0; p + 1];
    let mut g_fit = vec![0.0; p + 1];
    for q in 1..=p {
        phi[q] = map_report.fitted(&format!("{}.graph.M_hat_{q}", cell.id)).unwrap_or(0.0);
        g_fit[q] = g_report.fitted(&format!("{}.g_M_hat_{q}", cell.id)).unwrap_or(0.0);
    }
    phi[1] = phi[1].max(cell.lipschitz_m);
    Ok((phi, g_fit))
}

/// Bump for a graph stratum `Z = {(u, φ(u))}` of dimension below the ambient one:
/// `(1 - λ) P(|w - φ(u)|² / (γ d((u, φ(u)), W)²)) + λ` over the base, `λ` elsewhere.
pub fn bump_cell(s: &Stratification, i: usize, eta: f64, p: usize) -> Result<BumpFunction> {
    let cell = s.strata[i].clone();
    let CellKind::Graph { base, .. } = &cell.kind else {
        return Err(Error::InvalidInput(format!("stratum {} is not a graph cell", cell.id)));
    };
    if base.interval_bounds().is_none() {
        return Err(Error::UnsupportedDimension { supported: "graphs over intervals", got: cell.n });
    }
    let l = cell.lip_l();
    if !(eta > 0.0) || eta >= l {
        return Err(Error::EtaTooLarge { stratum: cell.id.clone(), eta, lip_l: l });
    }
    let eta_prime = eta / 2.0;
    let lambda = match boundary_bump(s, i, eta_prime, p)? {
        Some(b) => b,
        None => zero_bump(s.w.clone(), eta_prime, SAFETY * eta_prime, p),
    };
    let rho_prime = lambda.rho();
    let constants = cell_bump_constants(l, eta, eta_prime, rho_prime);
    let (gamma, delta) = (constants.gamma.unwrap(), constants.delta.unwrap());

    let m = base.n;
    let pf = plateau_field(p);
    let g: FieldRef = Arc::new(DistanceField { set: s.w.clone() });
    let g_on_graph: FieldRef = Arc::new(crate::cells::GraphComposition::new(cell.clone(), g)?);
    let lam = lambda.psi.field.clone();
    let field = Combined::new(cell.n, &[&g_on_graph, &lam, &pf], {
        let (cell, pf, g_on_graph, lam) = (cell.clone(), pf.clone(), g_on_graph.clone(), lam.clone());
        move |x: &[Jet]| {
            let xv: Vec<f64> = x.iter().map(Jet::value).collect();
            let lam_j = lam.eval_jet(x);
            if !cell.over_base(&xv) {
                return lam_j;
            }
            let y = cell.jets_to_local(x);
            let phi = cell.phi_jets(&y[..m]).unwrap();
            let mut sq = y[m].sub(&phi[0]).square();
            for (k, ph) in phi.iter().enumerate().skip(1) {
                sq = sq.add(&y[m + k].sub(ph).square());
            }
            let g = g_on_graph.eval_jet(&y[..m]);
            let ratio = sq.div(&g.square().scale(gamma));
            let pq = pf.eval_jet(&[ratio]);
            lam_j.neg().add_scalar(1.0).mul(&pq).add(&lam_j)
        }
    });

    // On the blending region `d(x, W)` is comparable to `d((u, φ(u)), W)` and to the
    // distance from the foot point to the frontier, which turns the fitted base
    // constants into constants in `d(x, W)`.
    let (phi_fit, g_fit) = graph_fits(s, i, p)?;
    let c = (rho_prime * (1.0 - delta / l)).min(1.0 - eta / l);
    let scale = |q: usize| (l * c).powi(1 - q as i32);
    let w = s.w.clone();
    let mut e_orders = vec![0.0; p + 1];
    let mut g_orders = vec![0.0; p + 1];
    for q in 1..=p {
        e_orders[q] = if q == 1 { phi_fit[1].max(1.0) } else { phi_fit[q] * scale(q) };
        g_orders[q] = g_fit[q] * scale(q);
    }
    let e = RegularityCertificate::from_orders(w.clone(), 1, e_orders).with_sup(eta / l);
    let gc = RegularityCertificate::from_orders(w.clone(), 1, g_orders)
        .with_sup(1.0 + eta / l)
        .with_lower(1.0 - eta / l);
    let ratio = e.product(&gc.reciprocal()?)?;
    let mut sq = ratio.product(&ratio)?;
    for _ in 1..cell.n - m {
        sq = sq.sum(&ratio.product(&ratio)?)?;
    }
    let q_cert = sq.scale(1.0 / gamma);
    let phi_bounds = probe_derivative_bounds(pf.as_ref(), (0.0, q_cert.sup.unwrap()), p);
    let pq = q_cert.compose(&phi_bounds)?;
    let one_minus = RegularityCertificate::from_orders(w.clone(), 0, lambda.psi.cert.orders.clone()).with_sup(1.0);
    let blended = one_minus.product(&pq)?.sum(&lambda.psi.cert)?;
    let orders = blended.orders.iter().zip(&lambda.psi.cert.orders).map(|(a, b)| a.max(*b)).collect();
    let cert = RegularityCertificate::from_orders(w, 0, orders).with_sup(1.0);

    Ok(BumpFunction {
        psi: RegularFunction::new(Arc::new(field), cert),
        target: cell.clone(),
        constants,
        label: cell.id.clone(),
        lambda: Some(Box::new(lambda)),
    })
}

/// Bump for an open stratum: 1 on the stratum, the frontier bump `λ` elsewhere.
pub fn bump_open_cell(s: &Stratification, i: usize, eta: f64, p: usize) -> Result<BumpFunction> {
    let cell = s.strata[i].clone();
    if !cell.is_open() {
        return Err(Error::InvalidInput(format!("stratum {} is not open", cell.id)));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let lambda = match boundary_bump(s, i, eta, p)? {
        Some(b) => b,
        None => zero_bump(s.w.clone(), eta, SAFETY * eta, p),
    };
    let lam = lambda.psi.field.clone();
    let field = Combined::new(cell.n, &[&lam], {
        let (cell, lam) = (cell.clone(), lam.clone());
        move |x: &[Jet]| {
            let xv: Vec<f64> = x.iter().map(Jet::value).collect();
            if cell.contains(&xv) {
                Jet::constant(x[0].space(), 1.0)
            } else {
                lam.eval_jet(x)
            }
        }
    });
    let cert = RegularityCertificate::from_orders(s.w.clone(), 0, lambda.psi.cert.orders.clone()).with_sup(1.0);
    let mut constants = BumpConstants::plain(eta, lambda.rho());
    constants.eta_prime = Some(lambda.eta());
    constants.rho_prime = Some(lambda.rho());
    Ok(BumpFunction {
        psi: RegularFunction::new(Arc::new(field), cert),
        target: cell.clone(),
        constants,
        label: cell.id.clone(),
        lambda: Some(Box::new(lambda)),
    })
}

/// Whether `x` lies in the region where a graph-cell bump must coincide with its
/// frontier bump: `d(x, Z) > δ d(x, ∂Z)` or `x ∈ G_ρ′(Z′, W)`.
pub fn in_blend_free_region(s: &Stratification, i: usize, bump: &BumpFunction, x: &[f64]) -> Result<Verdict> {
    let (Some(delta), Some(rho_prime), Some(lambda)) = (bump.constants.delta, bump.constants.rho_prime, &bump.lambda) else {
        return Err(Error::InvalidInput("not a graph-cell bump".into()));
    };
    let cell = &s.strata[i];
    let dz = cell.distance(x);
    let rz = cell.covering_radius();
    let d_frontier = cell
        .frontier_points()
        .iter()
        .map(|f| f.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min);
    let far = if dz - rz > delta * d_frontier {
        Verdict::In
    } else if dz + rz <= delta * d_frontier {
        Verdict::Out
    } else {
        Verdict::Ambiguous
    };
    let near = g_eta_contains(lambda.target.as_ref(), s.w.as_ref(), rho_prime, x)?;
    Ok(match (far, near) {
        (Verdict::In, _) | (_, Verdict::In) => Verdict::In,
        (Verdict::Out, Verdict::Out) => Verdict::Out,
        _ => Verdict::Ambiguous,
    })
}

/// Checks range, plateau and support of `b` at `points` off `W`.
pub fn check_bump(b: &BumpFunction, points: &[Point]) -> Result<CertificateReport> {
    let w = b.w().clone();
    let rows: Vec<Result<(Point, f64, Verdict, Verdict)>> = points
        .par_iter()
        .map(|x| {
            let v = b.value(x);
            let plateau = g_eta_contains(b.target.as_ref(), w.as_ref(), b.rho(), x)?;
            let support = g_eta_contains(b.target.as_ref(), w.as_ref(), b.eta(), x)?;
            Ok((x.clone(), v, plateau, support))
        })
        .collect();
    let mut report = CertificateReport::new();
    let stage = format!("bump {}", b.label);
    for r in rows {
        let (x, v, plateau, support) = r?;
        report.check(&stage, "range", &x, (0.0..=1.0).contains(&v));
        if plateau == Verdict::In {
            report.check_le(&stage, "plateau", &x, 0.0, (1.0 - v).abs(), 1e-12);
        }
        if support == Verdict::Out {
            report.check_le(&stage, "support", &x, 0.0, v.abs(), 1e-12);
        }
    }
    Ok(report)
}

/// Partition of unity `ω_i = ψ_i / Σ ψ_j` subordinate to a covering by unions of strata.
#[derive(Clone)]
pub struct Partition {
    pub omegas: Vec<RegularFunction>,
    pub bumps: Vec<BumpFunction>,
    pub eta: f64,
}

impl Partition {
    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        self.omegas.iter().map(|o| o.value(x)).collect()
    }
}

/// On grid points off `W`: `Σ ω_i = 1` within `1e-12`, `0 ≤ ω_i ≤ 1`, and no `ω_i > 0`
/// at a point with an `out` verdict for `G_η(U_i)`.
pub fn check_partition(s: &Stratification, partition: &Partition, covering: &[Vec<usize>], grid: &GridSpec) -> Result<CertificateReport> {
    let points = grid.points_off(s.w.as_ref(), 0.0)?;
    let sets: Vec<OracleRef> = covering
        .iter()
        .map(|u| {
            let parts: Vec<OracleRef> = u.iter().map(|&j| s.strata[j].clone() as OracleRef).collect();
            if parts.len() == 1 {
                parts[0].clone()
            } else {
                Arc::new(Union { n: s.n, parts }) as OracleRef
            }
        })
        .collect();
    let w = s.w.as_ref();
    let rows: Vec<(Point, Vec<f64>, Vec<bool>)> = points
        .par_iter()
        .map(|x| {
            let vals = partition.values(x);
            let outside = sets
                .iter()
                .map(|u| g_eta_verdict(u.distance(x), u.covering_radius(), w.distance(x), w.covering_radius(), partition.eta) == Verdict::Out)
                .collect();
            (x.clone(), vals, outside)
        })
        .collect();
    let mut report = CertificateReport::new();
    for (x, vals, outside) in rows {
        let total: f64 = vals.iter().sum();
        report.check_le("partition", "sum is one", &x, 1e-12, (total - 1.0).abs(), 0.0);
        for (v, out) in vals.iter().zip(outside) {
            report.check("partition", "value in [0, 1]", &x, (0.0..=1.0 + 1e-15).contains(v));
            if out {
                report.check("partition", "support", &x, *v == 0.0);
            }
        }
    }
    Ok(report)
}

/// Lower bound on `Σ ψ_j` required at every grid point.
pub const POSITIVITY_FLOOR: f64 = 0.5;

/// Builds the partition for `covering[i]` = stratum indices making up `U_i`, at scale `eta`.
pub fn partition_of_unity(s: &Stratification, covering: &[Vec<usize>], eta: f64, p: usize, grid: &GridSpec) -> Result<Partition> {
    if covering.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut bumps = Vec::with_capacity(covering.len());
    for u in covering {
        let parts = u.iter().map(|&j| bump_stratum(s, j, eta, p)).collect::<Result<Vec<_>>>()?;
        bumps.push(if parts.len() == 1 { parts.into_iter().next().unwrap() } else { bump_union(&parts, p)? });
    }
    let points = grid.points_off(s.w.as_ref(), 0.0)?;
    let fields: Vec<FieldRef> = bumps.iter().map(|b| b.psi.field.clone()).collect();
    let gap = points.par_iter().find_any(|x| fields.iter().map(|f| f.value(x)).sum::<f64>() < POSITIVITY_FLOOR);
    if let Some(x) = gap {
        let total: f64 = fields.iter().map(|f| f.value(x)).sum();
        return Err(Error::CoverageGap(format!("bump sum {total} below {POSITIVITY_FLOOR} at {x:?}")));
    }
    let psis: Vec<RegularFunction> = bumps.iter().map(|b| b.psi.clone()).collect();
    let omegas = normalize(&psis, s.w.dim())?;
    Ok(Partition { omegas, bumps, eta })
}

/// `ψ_i / Σ ψ_j` with certificates, given that the sum stays above the positivity floor.
pub fn normalize(psis: &[RegularFunction], n: usize) -> Result<Vec<RegularFunction>> {
    let first = psis.first().ok_or(Error::EmptySet)?;
    let mut total = first.cert.clone();
    for b in &psis[1..] {
        total = total.sum(&b.cert)?;
    }
    let inv = total.with_lower(POSITIVITY_FLOOR).reciprocal()?;
    let fields: Vec<FieldRef> = psis.iter().map(|b| b.field.clone()).collect();
    let refs: Vec<&FieldRef> = fields.iter().collect();
    let mut out = Vec::with_capacity(psis.len());
    for (i, b) in psis.iter().enumerate() {
        let cert = b.cert.product(&inv)?;
        let field = Combined::new(n, &refs, {
            let fields = fields.clone();
            move |x: &[Jet]| {
                let vals: Vec<Jet> = fields.iter().map(|f| f.eval_jet(x)).collect();
                let mut s = vals[0].clone();
                for v in &vals[1..] {
                    s = s.add(v);
                }
                vals[i].div(&s)
            }
        });
        out.push(RegularFunction::new(Arc::new(field), cert));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundingBox;
    use crate::field::ScalarField;
    use crate::oracle::{PointSet, Segment};
    use crate::regular::{cert_verify, Probe};
    use crate::strat::{half_line_scene, points_on_line};

    fn origin() -> OracleRef {
        Arc::new(PointSet { z: vec![0.0] })
    }

    #[test]
    fn point_bump_radii_example() {
        let b = bump_point(&[1.0], origin(), 0.4, 2).unwrap();
        let (r, big_r) = b.constants.radii.unwrap();
        assert!((b.rho() - 0.1).abs() < 1e-15);
        assert!((r - 1.0 / 9.0).abs() < 1e-15);
        assert!((big_r - 0.9 * 0.4 / 1.4).abs() < 1e-15);
        assert_eq!(b.value(&[1.0]), 1.0);
        assert_eq!(b.value(&[1.3]), 0.0);
        assert_eq!(b.value(&[1.0 + r * 0.999]), 1.0);
        assert_eq!(b.value(&[1.0 - big_r * 1.001]), 0.0);
    }

    #[test]
    fn point_bump_large_eta_shrinks_plateau() {
        let (rho, r, big_r) = point_bump_radii(1.0, 3.0);
        assert!(rho < 0.75 && r < big_r);
    }

    #[test]
    fn point_on_w_is_rejected() {
        assert!(matches!(bump_point(&[0.0], origin(), 0.4, 2), Err(Error::OnW)));
    }

    #[test]
    fn point_bump_certificate_verifies() {
        let b = bump_point(&[1.0], origin(), 0.4, 3).unwrap();
        let pts: Vec<Point> = (0..400).map(|i| vec![0.7 + 0.6 * i as f64 / 399.0]).collect();
        let r = cert_verify(&b.psi, &pts, Probe::Exact).unwrap();
        assert!(r.passed(), "{r}");
        let r = check_bump(&b, &pts).unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn cell_constants_examples() {
        let c = cell_bump_constants(1.0, 0.9, 0.45, 0.5);
        assert!((c.gamma.unwrap() - 0.054).abs() < 1e-12);
        let bound = 0.054f64.sqrt() / (3f64.sqrt() + 0.054f64.sqrt());
        assert!((bound - 0.1183).abs() < 1e-4);
        assert!((c.rho - 0.9 * bound).abs() < 1e-12);
        assert!((c.rho - 0.1065).abs() < 1e-4);
    }

    #[test]
    fn union_midpoint_and_plateaus() {
        let w = origin();
        let a = bump_point(&[1.0], w.clone(), 0.4, 2).unwrap();
        let b = bump_point(&[-1.0], w.clone(), 0.4, 2).unwrap();
        let u = bump_union(&[a.clone(), b], 2).unwrap();
        assert_eq!(u.value(&[1.0]), 1.0);
        assert_eq!(u.value(&[-1.0]), 1.0);
        assert_eq!(u.value(&[0.5]), 0.0);
        let single = bump_union(&[a], 2).unwrap();
        assert_eq!(single.value(&[1.0]), 1.0);
        assert_eq!(single.value(&[2.0]), 0.0);
        // Σψ = 0.5 lands on the midpoint of the plateau function.
        assert!((smoothstep_p(3).value(&[0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn union_rejects_mixed_references() {
        let a = bump_point(&[1.0], origin(), 0.4, 2).unwrap();
        let b = bump_point(&[1.0], origin(), 0.4, 2).unwrap();
        assert!(matches!(bump_union(&[a.clone(), b], 2), Err(Error::MixedReference)));
        let c = bump_point(&[2.0], a.w().clone(), 0.3, 2).unwrap();
        assert!(matches!(bump_union(&[a, c], 2), Err(Error::MixedReference)));
    }

    #[test]
    fn open_ray_bump_is_indicator() {
        let s = points_on_line(&[0.0], BoundingBox::cube(1, 2.0)).unwrap();
        let i = s.index_of("c1").unwrap();
        let b = bump_open_cell(&s, i, 0.5, 2).unwrap();
        assert_eq!(b.value(&[0.3]), 1.0);
        assert_eq!(b.value(&[-0.3]), 0.0);
        assert_eq!(b.psi.cert.m(), 0.0);
    }

    #[test]
    fn axis_bump_on_half_line_scene() {
        let bbox = BoundingBox::cube(2, 1.0);
        let s = half_line_scene(bbox.clone()).unwrap();
        let i = s.index_of("axis").unwrap();
        assert!(matches!(bump_cell(&s, i, 1.0, 2), Err(Error::EtaTooLarge { .. })));
        let b = bump_cell(&s, i, 0.5, 2).unwrap();
        for x in [0.01, 0.3, 0.9] {
            assert_eq!(b.value(&[x, 0.0]), 1.0);
        }
        let grid = GridSpec::new(bbox, 61);
        let pts = grid.points_off(s.w.as_ref(), 1e-3).unwrap();
        let r = check_bump(&b, &pts).unwrap();
        assert!(r.passed(), "{r}");
        let r = cert_verify(&b.psi, &pts, Probe::FiniteDifference).unwrap();
        assert_ne!(r.verdict(), crate::report::Status::Fail, "{r}");
        for x in &pts {
            if in_blend_free_region(&s, i, &b, x).unwrap() == Verdict::In {
                assert_eq!(b.value(x), b.lambda.as_ref().unwrap().value(x));
            }
        }
    }

    #[test]
    fn plateau_scale_matches_construction() {
        let s = half_line_scene(BoundingBox::cube(2, 1.0)).unwrap();
        for i in 0..s.len() {
            let b = bump_stratum(&s, i, 0.3, 2).unwrap();
            assert_eq!(plateau_scale(&s, i, 0.3).unwrap(), b.rho());
        }
        let s = points_on_line(&[0.0, 1.0], BoundingBox::cube(1, 2.0)).unwrap();
        for i in 0..s.len() {
            assert_eq!(plateau_scale(&s, i, 0.3).unwrap(), bump_stratum(&s, i, 0.3, 2).unwrap().rho());
        }
    }

    #[test]
    fn half_plane_bump_blends_into_axis_bump() {
        let bbox = BoundingBox::cube(2, 1.0);
        let s = half_line_scene(bbox.clone()).unwrap();
        let i = s.index_of("upper").unwrap();
        let b = bump_open_cell(&s, i, 0.5, 2).unwrap();
        assert_eq!(b.value(&[0.2, 0.3]), 1.0);
        assert_eq!(b.value(&[0.5, 0.0]), 1.0);
        assert_eq!(b.value(&[-0.5, -0.3]), 0.0);
        let pts = GridSpec::new(bbox, 61).points_off(s.w.as_ref(), 1e-3).unwrap();
        assert!(check_bump(&b, &pts).unwrap().passed());
    }

    #[test]
    fn partition_sums_to_one_and_detects_gaps() {
        let bbox = BoundingBox::cube(2, 1.0);
        let s = half_line_scene(bbox.clone()).unwrap();
        let grid = GridSpec::new(bbox, 41);
        let cover: Vec<Vec<usize>> = (0..s.len()).map(|i| vec![i]).collect();
        let part = partition_of_unity(&s, &cover, 0.5, 2, &grid).unwrap();
        for x in grid.points_off(s.w.as_ref(), 1e-3).unwrap() {
            let v = part.values(&x);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(v.iter().all(|o| (0.0..=1.0).contains(o)));
        }
        let r = check_partition(&s, &part, &cover, &grid).unwrap();
        assert!(r.passed(), "{r}");
        let gap = partition_of_unity(&s, &cover[..2], 0.5, 2, &grid);
        assert!(matches!(gap, Err(Error::CoverageGap(_))));
    }

    #[test]
    fn single_element_partition_is_one() {
        let w: OracleRef = Arc::new(Segment::half_line(vec![0.0, 0.0], vec![-1.0, 0.0]));
        let b = zero_bump(w, 0.5, 0.4, 2);
        assert_eq!(b.value(&[0.3, 0.3]), 0.0);
        let s = points_on_line(&[0.0], BoundingBox::cube(1, 2.0)).unwrap();
        let grid = GridSpec::new(BoundingBox::cube(1, 2.0), 40);
        let part = partition_of_unity(&s, &[vec![0, 1]], 0.5, 2, &grid).unwrap();
        for x in grid.points_off(s.w.as_ref(), 1e-3).unwrap() {
            assert_eq!(part.values(&x), vec![1.0]);
        }
    }
}
