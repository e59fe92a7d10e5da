//! Distance oracles with error bounds and the relative-neighbourhood predicate.

use std::fmt;
use std::sync::Arc;

use kdtree::distance::squared_euclidean;
use kdtree::KdTree;

use crate::error::{Error, Result};
use crate::field::{fd_step, DerivativeKind, Polynomial, SampledFn, ScalarField};
use crate::grid::BoundingBox;
use crate::jet::Jet;

pub type Point = Vec<f64>;

/// Evaluates `d(x, S)` for some set `S`.
///
/// The oracle never overestimates by more than nothing and never
/// underestimates by more than [`covering_radius`](DistanceOracle::covering_radius):
/// `eval(x) - covering_radius <= d(x, S) <= eval(x)`.
pub trait DistanceOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn distance(&self, x: &[f64]) -> f64;

    fn covering_radius(&self) -> f64 {
        0.0
    }

    /// Taylor jet of `x ↦ d(x, S)` on the smooth branch active at the
    /// expansion point, for analytic sets.
    fn distance_jet(&self, _x: &[Jet]) -> Option<Jet> {
        None
    }

    /// Points of `S` inside `bbox` at roughly `spacing` apart.
    fn sample(&self, _bbox: &BoundingBox, _spacing: f64) -> Vec<Point> {
        Vec::new()
    }

    fn describe(&self) -> String {
        "set".into()
    }
}

pub type OracleRef = Arc<dyn DistanceOracle>;

fn jet_norm(diff: &[Jet]) -> Jet {
    let mut acc = diff[0].square();
    for d in &diff[1..] {
        acc = acc.add(&d.square());
    }
    acc.sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The empty set: distance `+∞` everywhere.
pub struct EmptySet {
    pub n: usize,
}

impl DistanceOracle for EmptySet {
    fn dim(&self) -> usize {
        self.n
    }
    fn distance(&self, _x: &[f64]) -> f64 {
        f64::INFINITY
    }
    fn describe(&self) -> String {
        "empty".into()
    }
}

pub struct PointSet {
    pub z: Point,
}

impl DistanceOracle for PointSet {
    fn dim(&self) -> usize {
        self.z.len()
    }
    fn distance(&self, x: &[f64]) -> f64 {
        dist(x, &self.z)
    }
    fn distance_jet(&self, x: &[Jet]) -> Option<Jet> {
        let diff: Vec<Jet> = x.iter().zip(&self.z).map(|(a, &b)| a.add_scalar(-b)).collect();
        Some(jet_norm(&diff))
    }
    fn sample(&self, bbox: &BoundingBox, _spacing: f64) -> Vec<Point> {
        if bbox.contains(&self.z) {
            vec![self.z.clone()]
        } else {
            Vec::new()
        }
    }
    fn describe(&self) -> String {
        format!("point {:?}", self.z)
    }
}

/// A segment `[a, b]`, or the half-line `a + t·dir, t ≥ 0` when `unbounded`.
pub struct Segment {
    pub a: Point,
    pub b: Point,
    pub unbounded: bool,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Segment {
        Segment { a, b, unbounded: false }
    }

    pub fn half_line(origin: Point, direction: Point) -> Segment {
        let len = norm(&direction);
        let b = origin.iter().zip(&direction).map(|(o, d)| o + d / len).collect();
        Segment { a: origin, b, unbounded: true }
    }

    fn param(&self, x: &[f64]) -> f64 {
        let ab: Vec<f64> = self.b.iter().zip(&self.a).map(|(b, a)| b - a).collect();
        let ax: Vec<f64> = x.iter().zip(&self.a).map(|(x, a)| x - a).collect();
        let t = ax.iter().zip(&ab).map(|(p, q)| p * q).sum::<f64>() / ab.iter().map(|v| v * v).sum::<f64>();
        if self.unbounded {
            t.max(0.0)
        } else {
            t.clamp(0.0, 1.0)
        }
    }
}

impl DistanceOracle for Segment {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn distance(&self, x: &[f64]) -> f64 {
        let t = self.param(x);
        let p: Vec<f64> = self.a.iter().zip(&self.b).map(|(a, b)| a + t * (b - a)).collect();
        dist(x, &p)
    }

    fn distance_jet(&self, x: &[Jet]) -> Option<Jet> {
        let xv: Vec<f64> = x.iter().map(Jet::value).collect();
        let t = self.param(&xv);
        let at_end = t <= 0.0 || (!self.unbounded && t >= 1.0);
        if at_end {
            let e = if t <= 0.0 { &self.a } else { &self.b };
            let diff: Vec<Jet> = x.iter().zip(e).map(|(a, &b)| a.add_scalar(-b)).collect();
            return Some(jet_norm(&diff));
        }
        let ab: Vec<f64> = self.b.iter().zip(&self.a).map(|(b, a)| b - a).collect();
        let ab2: f64 = ab.iter().map(|v| v * v).sum();
        let mut tj = x[0].lift(0.0);
        for k in 0..x.len() {
            tj = tj.add(&x[k].add_scalar(-self.a[k]).scale(ab[k] / ab2));
        }
        let diff: Vec<Jet> = (0..x.len())
            .map(|k| x[k].add_scalar(-self.a[k]).sub(&tj.scale(ab[k])))
            .collect();
        Some(jet_norm(&diff))
    }

    fn sample(&self, bbox: &BoundingBox, spacing: f64) -> Vec<Point> {
        let ab: Vec<f64> = self.b.iter().zip(&self.a).map(|(b, a)| b - a).collect();
        let len = norm(&ab);
        let t_max = if self.unbounded {
            // Far enough to leave any box.
            (bbox.diameter() + dist(&self.a, &bbox.center())) / len
        } else {
            1.0
        };
        let steps = ((t_max * len) / spacing).ceil().max(1.0) as usize;
        (0..=steps)
            .map(|i| {
                let t = t_max * i as f64 / steps as f64;
                self.a.iter().zip(&ab).map(|(a, d)| a + t * d).collect::<Point>()
            })
            .filter(|p| bbox.contains(p))
            .collect()
    }

    fn describe(&self) -> String {
        if self.unbounded {
            format!("half-line from {:?}", self.a)
        } else {
            format!("segment {:?}-{:?}", self.a, self.b)
        }
    }
}

/// Circle of radius `r` about `c` in the plane.
pub struct Circle {
    pub c: Point,
    pub r: f64,
}

impl DistanceOracle for Circle {
    fn dim(&self) -> usize {
        2
    }
    fn distance(&self, x: &[f64]) -> f64 {
        (dist(x, &self.c) - self.r).abs()
    }
    fn distance_jet(&self, x: &[Jet]) -> Option<Jet> {
        let diff: Vec<Jet> = x.iter().zip(&self.c).map(|(a, &b)| a.add_scalar(-b)).collect();
        let rho = jet_norm(&diff).add_scalar(-self.r);
        Some(if rho.value() >= 0.0 { rho } else { rho.neg() })
    }
    fn sample(&self, bbox: &BoundingBox, spacing: f64) -> Vec<Point> {
        let n = ((2.0 * std::f64::consts::PI * self.r) / spacing).ceil().max(8.0) as usize;
        (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                vec![self.c[0] + self.r * a.cos(), self.c[1] + self.r * a.sin()]
            })
            .filter(|p| bbox.contains(p))
            .collect()
    }
    fn describe(&self) -> String {
        format!("circle c={:?} r={}", self.c, self.r)
    }
}

/// Graph `{(t, q(t)) : lo ≤ t ≤ hi}` of a univariate polynomial in the plane.
pub struct PolyGraph {
    pub q: Polynomial,
    pub lo: f64,
    pub hi: f64,
}

impl PolyGraph {
    fn q_jet(&self, t: &Jet) -> Jet {
        self.q.eval_jets(std::slice::from_ref(t))
    }

    fn q_val(&self, t: f64) -> f64 {
        let s = crate::jet::JetSpace::get(1, 0);
        self.q_jet(&Jet::constant(s, t)).value()
    }

    fn q_derivs(&self, t: f64, order: usize) -> Jet {
        let tj = &Jet::seed(&[t], order)[0];
        self.q_jet(tj)
    }

    fn nearest_param(&self, x: &[f64]) -> f64 {
        nearest_on_graph(&|t| self.q_val(t), self.lo, self.hi, x).0
    }
}

/// Nearest point of the planar graph `{(t, q(t)) : lo ≤ t ≤ hi}` to `x`:
/// returns the parameter and the distance. Dense sampling over the only
/// parameter window that can beat the vertical projection, then golden-section refinement.
pub fn nearest_on_graph(q: &dyn Fn(f64) -> f64, lo: f64, hi: f64, x: &[f64]) -> (f64, f64) {
    let sq = |t: f64| (x[0] - t).powi(2) + (x[1] - q(t)).powi(2);
    let t0 = x[0].clamp(lo, hi);
    let reach = sq(t0).sqrt();
    let a = (x[0] - reach).max(lo);
    let b = (x[0] + reach).min(hi);
    let n = 400;
    let mut best = (t0, sq(t0));
    for i in 0..=n {
        let t = a + (b - a) * i as f64 / n as f64;
        let v = sq(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    let h = (b - a) / n as f64;
    let (mut l, mut r) = ((best.0 - h).max(a), (best.0 + h).min(b));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = r - g * (r - l);
        let m2 = l + g * (r - l);
        if sq(m1) < sq(m2) {
            r = m2;
        } else {
            l = m1;
        }
    }
    let t = 0.5 * (l + r);
    if sq(t) < best.1 {
        (t, sq(t).sqrt())
    } else {
        (best.0, best.1.sqrt())
    }
}

impl DistanceOracle for PolyGraph {
    fn dim(&self) -> usize {
        2
    }

    fn distance(&self, x: &[f64]) -> f64 {
        let t = self.nearest_param(x);
        dist(x, &[t, self.q_val(t)])
    }

    fn distance_jet(&self, x: &[Jet]) -> Option<Jet> {
        let xv: Vec<f64> = x.iter().map(Jet::value).collect();
        let t0 = self.nearest_param(&xv);
        if t0 <= self.lo || t0 >= self.hi {
            let e = [t0, self.q_val(t0)];
            let diff: Vec<Jet> = x.iter().zip(&e).map(|(a, &b)| a.add_scalar(-b)).collect();
            return Some(jet_norm(&diff));
        }
        // Newton on the stationarity condition F(t) = (x0 - t) + (x1 - q(t)) q'(t) = 0, in jet arithmetic.
        let p = x[0].space().p();
        let mut t = x[0].lift(t0);
        for _ in 0..=p + 1 {
            let (qv, dq, ddq) = self.q_taylor(&t);
            let f = x[0].sub(&t).add(&x[1].sub(&qv).mul(&dq));
            let ft = dq.mul(&dq).neg().add_scalar(-1.0).add(&x[1].sub(&qv).mul(&ddq));
            t = t.sub(&f.div(&ft));
        }
        let qv = self.q_taylor(&t).0;
        Some(jet_norm(&[x[0].sub(&t), x[1].sub(&qv)]))
    }

    fn sample(&self, bbox: &BoundingBox, spacing: f64) -> Vec<Point> {
        let lo = self.lo.max(bbox.lo[0]);
        let hi = self.hi.min(bbox.hi[0]);
        if lo > hi {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut t = lo;
        while t <= hi {
            let p = vec![t, self.q_val(t)];
            if bbox.contains(&p) {
                out.push(p);
            }
            let slope = self.q_derivs(t, 1).coeffs()[1];
            t += spacing / (1.0 + slope * slope).sqrt();
        }
        out
    }

    fn describe(&self) -> String {
        format!("polynomial graph on [{}, {}]", self.lo, self.hi)
    }
}

impl PolyGraph {
    /// `(q(t), q'(t), q''(t))` for a jet argument.
    fn q_taylor(&self, t: &Jet) -> (Jet, Jet, Jet) {
        let coeffs = self.q.coeffs();
        let deriv = |c: &[f64]| -> Vec<f64> { c.iter().enumerate().skip(1).map(|(i, v)| v * i as f64).collect() };
        let d1 = deriv(&coeffs);
        let d2 = deriv(&d1);
        let horner = |c: &[f64]| -> Jet {
            let mut acc = t.lift(0.0);
            for v in c.iter().rev() {
                acc = acc.mul(t).add_scalar(*v);
            }
            acc
        };
        (horner(&coeffs), horner(&d1), horner(&d2))
    }
}

/// Sampled point cloud with a declared covering radius.
pub struct PointCloud {
    n: usize,
    points: Vec<Point>,
    tree: KdTree<f64, usize, Point>,
    covering_radius: f64,
}

impl PointCloud {
    pub fn new(n: usize, points: Vec<Point>, covering_radius: f64) -> PointCloud {
        let mut tree = KdTree::new(n);
        for (i, p) in points.iter().enumerate() {
            tree.add(p.clone(), i).expect("finite point coordinates");
        }
        PointCloud { n, points, tree, covering_radius }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nearest(&self, x: &[f64]) -> Option<(f64, usize)> {
        if self.points.is_empty() {
            return None;
        }
        let found = self.tree.nearest(x, 1, &squared_euclidean).ok()?;
        found.first().map(|(d2, &i)| (d2.sqrt(), i))
    }
}

impl DistanceOracle for PointCloud {
    fn dim(&self) -> usize {
        self.n
    }
    fn distance(&self, x: &[f64]) -> f64 {
        self.nearest(x).map(|(d, _)| d).unwrap_or(f64::INFINITY)
    }
    fn covering_radius(&self) -> f64 {
        self.covering_radius
    }
    fn sample(&self, bbox: &BoundingBox, _spacing: f64) -> Vec<Point> {
        self.points.iter().filter(|p| bbox.contains(p)).cloned().collect()
    }
    fn describe(&self) -> String {
        format!("point cloud ({} points, covering radius {})", self.points.len(), self.covering_radius)
    }
}

/// Union of sets; covering radius is the largest member radius.
pub struct Union {
    pub n: usize,
    pub parts: Vec<OracleRef>,
}

impl Union {
    fn argmin(&self, x: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.parts.iter().enumerate() {
            let d = p.distance(x);
            if best.map_or(true, |(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        best.map(|b| b.0)
    }
}

impl DistanceOracle for Union {
    fn dim(&self) -> usize {
        self.n
    }
    fn distance(&self, x: &[f64]) -> f64 {
        self.parts.iter().map(|p| p.distance(x)).fold(f64::INFINITY, f64::min)
    }
    fn covering_radius(&self) -> f64 {
        self.parts.iter().map(|p| p.covering_radius()).fold(0.0, f64::max)
    }
    fn distance_jet(&self, x: &[Jet]) -> Option<Jet> {
        let xv: Vec<f64> = x.iter().map(Jet::value).collect();
        self.argmin(&xv).and_then(|i| self.parts[i].distance_jet(x))
    }
    fn sample(&self, bbox: &BoundingBox, spacing: f64) -> Vec<Point> {
        self.parts.iter().flat_map(|p| p.sample(bbox, spacing)).collect()
    }
    fn describe(&self) -> String {
        let parts: Vec<String> = self.parts.iter().map(|p| p.describe()).collect();
        parts.join(" ∪ ")
    }
}

/// The field `x ↦ d(x, S)`, exact where the oracle provides jets.
pub struct DistanceField {
    pub set: OracleRef,
}

impl ScalarField for DistanceField {
    fn dim(&self) -> usize {
        self.set.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.set.distance(x)
    }

    fn eval_jet(&self, x: &[Jet]) -> Jet {
        if let Some(j) = self.set.distance_jet(x) {
            return j;
        }
        let xv: Vec<f64> = x.iter().map(Jet::value).collect();
        let set = self.set.clone();
        let step = fd_step(set.distance(&xv));
        SampledFn::new(xv.len(), step, move |y: &[f64]| set.distance(y)).eval_jet(x)
    }

    fn derivative_kind(&self) -> DerivativeKind {
        let probe = Jet::seed(&vec![0.5; self.set.dim()], 1);
        if self.set.distance_jet(&probe).is_some() {
            DerivativeKind::Exact
        } else {
            DerivativeKind::FiniteDifference
        }
    }
}

/// Three-valued membership verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    In,
    Out,
    Ambiguous,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::In => write!(f, "in"),
            Verdict::Out => write!(f, "out"),
            Verdict::Ambiguous => write!(f, "ambiguous"),
        }
    }
}

/// Membership of `x` in `G_η(Z, W) = {x ∉ W : d(x, Z) < η d(x, W)}`.
pub fn g_eta_contains(z: &dyn DistanceOracle, w: &dyn DistanceOracle, eta: f64, x: &[f64]) -> Result<Verdict> {
    let dw = w.distance(x);
    let rw = w.covering_radius();
    if dw <= rw {
        return Err(Error::OnTargetSet { distance: dw });
    }
    Ok(g_eta_verdict(z.distance(x), z.covering_radius(), dw, rw, eta))
}

/// The verdict rule on precomputed distances.
pub fn g_eta_verdict(dz: f64, rz: f64, dw: f64, rw: f64, eta: f64) -> Verdict {
    if dz.is_infinite() {
        return Verdict::Out;
    }
    if dz + rz < eta * (dw - rw) {
        Verdict::In
    } else if dz - rz >= eta * (dw + rw) {
        Verdict::Out
    } else {
        Verdict::Ambiguous
    }
}

/// `ε + η + εη`: the scale of `G_ε(G_η(Z, W), W)` relative to `Z`.
pub fn g_eta_compose_bound(eps: f64, eta: f64) -> f64 {
    eps + eta + eps * eta
}

/// Exact Hausdorff distance between two finite point sets.
pub fn hausdorff_distance(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let n = a[0].len();
    Ok(directed(a, b, n).max(directed(b, a, n)))
}

fn directed(a: &[Point], b: &[Point], n: usize) -> f64 {
    let cloud = PointCloud::new(n, b.to_vec(), 0.0);
    a.iter().map(|p| cloud.distance(p)).fold(0.0, f64::max)
}
