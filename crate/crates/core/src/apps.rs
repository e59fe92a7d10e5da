//! Applications of the regularized distance: a flat function vanishing exactly on `W`,
//! level-set approximations of `W`, and the `λ(ε)` diagnostic.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::contour::extract;
use crate::error::{Error, Result};
use crate::field::{fd_partial, fd_step, DerivativeKind, FieldRef, ScalarField};
use crate::grid::{log_spaced, BoundingBox};
use crate::jet::{multi_index_enumerate, Jet, MultiIndex};
use crate::oracle::{hausdorff_distance, DistanceOracle, OracleRef, Point, PointCloud};
use crate::report::{fmt_f64, CertificateReport};

/// Tolerance on `|f - t|` for extracted level-set points.
pub const LEVEL_TOL: f64 = 1e-9;

/// `h = f^{p+1}` off `W`, exactly zero on it.
pub struct ZeroSetFunction {
    pub f: FieldRef,
    pub w: OracleRef,
    pub p: usize,
}

impl ScalarField for ZeroSetFunction {
    fn dim(&self) -> usize {
        self.w.dim()
    }

    fn eval_jet(&self, x: &[Jet]) -> Jet {
        let pt: Vec<f64> = x.iter().map(Jet::value).collect();
        if self.w.distance(&pt) <= self.w.covering_radius() {
            return Jet::constant(x[0].space(), 0.0);
        }
        self.f.eval_jet(x).powi(self.p as u32 + 1)
    }

    fn derivative_kind(&self) -> DerivativeKind {
        self.f.derivative_kind()
    }
}

/// Builds `h = f^{p+1}`, failing with `NonPositiveF` if `f ≤ 0` at a probe point off `W`.
pub fn zero_set_function(f: FieldRef, w: OracleRef, p: usize, probes: &[Point]) -> Result<ZeroSetFunction> {
    let bad = probes.par_iter().find_any(|x| w.distance(x) > w.covering_radius() && !(f.value(x) > 0.0));
    if let Some(x) = bad {
        return Err(Error::NonPositiveF { point: x.clone(), value: f.value(x) });
    }
    Ok(ZeroSetFunction { f, w, p })
}

/// `A^{-(p+1)} d^{p+1} ≤ h ≤ A^{p+1} d^{p+1}` at each point off `W`.
pub fn zero_set_equivalence(h: &ZeroSetFunction, a: f64, points: &[Point]) -> CertificateReport {
    let mut report = CertificateReport::new();
    let e = h.p as i32 + 1;
    for x in points {
        let d = h.w.distance(x);
        if d <= h.w.covering_radius() {
            report.check("zeroset", "zero on W", x, h.value(x) == 0.0);
            continue;
        }
        let v = h.value(x);
        let scale = d.powi(e);
        report.check_le("zeroset", "upper equivalence", x, a.powi(e) * scale, v, 1e-12 * scale);
        report.check_le("zeroset", "lower equivalence", x, -a.powi(-e) * scale, -v, 1e-12 * scale);
    }
    report
}

/// Points `a + s·dir` for `s` log-spaced from `s_max` down to `s_min`.
pub fn approach_sequence(a: &[f64], dir: &[f64], s_max: f64, s_min: f64, count: usize) -> Vec<Point> {
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut steps = log_spaced(s_min, s_max, count);
    steps.reverse();
    steps.iter().map(|s| a.iter().zip(dir).map(|(ai, di)| ai + s * di / norm).collect()).collect()
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

fn alpha_label(alpha: &MultiIndex) -> String {
    let parts: Vec<String> = alpha.entries().iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(" "))
}

/// Fits the exponent of `|D^α h|` against `d(x, W)` along `approach` for every
/// `|α| ≤ p` (fits named `flatness.exponent(α)`), passing when the exponent is at least
/// `p + 1 - |α| - 0.1`. Partials vanishing along the whole sequence count as infinitely flat.
pub fn flatness_check(h: &dyn ScalarField, w: &dyn DistanceOracle, p: usize, approach: &[Point]) -> Result<CertificateReport> {
    if approach.len() < 2 {
        return Err(Error::InvalidInput("flatness needs at least two approach points".into()));
    }
    let exact = h.derivative_kind() == DerivativeKind::Exact;
    let mut report = CertificateReport::new();
    report.note(format!("derivatives: {}", h.derivative_kind()));
    for alpha in multi_index_enumerate(w.dim(), p) {
        let q = alpha.order();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for x in approach {
            let d = w.distance(x);
            let v = if exact { h.derivative(x, &alpha) } else { fd_partial(h, x, &alpha, fd_step(d))? };
            if v != 0.0 {
                xs.push(d.ln());
                ys.push(v.abs().ln());
            }
        }
        let exponent = if xs.len() < 2 { f64::INFINITY } else { slope(&xs, &ys) };
        let label = alpha_label(&alpha);
        report.fit(&format!("flatness.exponent{label}"), exponent);
        let expected = (p + 1 - q) as f64;
        report.check_le("flatness", &format!("exponent{label}"), &[], -(expected - 0.1), -exponent, 0.0);
    }
    Ok(report)
}

/// Sampled points of `f^{-1}(t)`.
#[derive(Debug, Clone)]
pub struct LevelSet {
    pub t: f64,
    pub points: Vec<Point>,
    /// Index pairs of contour segments (planar case).
    pub segments: Vec<(usize, usize)>,
    pub resolution: usize,
    pub tol: f64,
}

/// Extracts `{f = t}` in `bbox` (dimension 1 or 2). Fails with `EmptyLevelSet` when no
/// crossing is found.
pub fn level_set_extract(f: &dyn ScalarField, t: f64, bbox: &BoundingBox, resolution: usize) -> Result<LevelSet> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("level must be positive, got {t}")));
    }
    let contour = extract(&|x: &[f64]| f.value(x), t, bbox, resolution, LEVEL_TOL)?;
    if contour.points.is_empty() {
        return Err(Error::EmptyLevelSet(t));
    }
    Ok(LevelSet { t, points: contour.points, segments: contour.segments, resolution, tol: LEVEL_TOL })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub t: f64,
    pub hausdorff: f64,
    pub resolution: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTable {
    /// Sorted by decreasing `t`.
    pub rows: Vec<ConvergenceRow>,
    /// Levels where the point count jumped, hinting at a critical value nearby.
    pub warnings: Vec<String>,
}

impl ConvergenceTable {
    /// Non-increasing up to 10% noise, and the last distance within `a·t + slack`.
    pub fn converging(&self, a: f64, slack: f64) -> bool {
        let monotone = self.rows.windows(2).all(|r| r[1].hausdorff <= 1.1 * r[0].hausdorff);
        match self.rows.last() {
            Some(last) => monotone && last.hausdorff <= a * last.t + slack,
            None => false,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,hausdorff,resolution,points\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", fmt_f64(r.t), fmt_f64(r.hausdorff), r.resolution, r.count);
        }
        out
    }
}

/// `d_H(H_t, W)` for each `t`, with `W` given by samples.
pub fn hausdorff_convergence(
    f: &dyn ScalarField,
    w_samples: &[Point],
    t_list: &[f64],
    bbox: &BoundingBox,
    resolution: usize,
) -> Result<(ConvergenceTable, Vec<LevelSet>)> {
    if t_list.is_empty() || t_list.iter().any(|t| !(*t > 0.0)) || t_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("levels must be positive and strictly decreasing".into()));
    }
    let mut table = ConvergenceTable::default();
    let mut sets = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let set = level_set_extract(f, t, bbox, resolution)?;
        let hausdorff = hausdorff_distance(&set.points, w_samples)?;
        if let Some(prev) = table.rows.last() {
            let (a, b) = (prev.count as f64, set.points.len() as f64);
            if (b - a).abs() > 0.5 * a {
                table.warnings.push(format!("point count changed from {a} to {b} between levels {} and {t}", prev.t));
            }
        }
        table.rows.push(ConvergenceRow { t, hausdorff, resolution, count: set.points.len() });
        sets.push(set);
    }
    Ok((table, sets))
}

/// `λ(ε) = sup_{a ∈ W} d(a, ∂W^ε)`, with `∂W^ε` the `ε`-contour of the distance to the samples.
pub fn lambda_eps(w_samples: &[Point], eps: f64, bbox: &BoundingBox, resolution: usize) -> Result<f64> {
    let first = w_samples.first().ok_or(Error::EmptySet)?;
    let cloud = PointCloud::new(first.len(), w_samples.to_vec(), 0.0);
    let contour = extract(&|x: &[f64]| cloud.distance(x), eps, bbox, resolution, LEVEL_TOL)?;
    if contour.points.is_empty() {
        return Err(Error::EmptyContour(eps));
    }
    let boundary = PointCloud::new(first.len(), contour.points, 0.0);
    Ok(w_samples.par_iter().map(|a| boundary.distance(a)).reduce(|| 0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::JetFn;
    use crate::oracle::{Circle, DistanceField, PointSet};
    use std::sync::Arc;

    fn origin() -> OracleRef {
        Arc::new(PointSet { z: vec![0.0] })
    }

    #[test]
    fn power_of_abs_is_flat() {
        let w = origin();
        let f: FieldRef = Arc::new(DistanceField { set: w.clone() });
        let h = zero_set_function(f, w.clone(), 1, &[vec![0.5], vec![-0.5]]).unwrap();
        assert_eq!(h.value(&[0.0]), 0.0);
        assert!((h.value(&[0.3]) - 0.09).abs() < 1e-15);
        let seq = approach_sequence(&[0.0], &[1.0], 1e-1, 1e-6, 30);
        let r = flatness_check(&h, w.as_ref(), 1, &seq).unwrap();
        assert!(r.passed(), "{r}");
        assert!((r.fitted("flatness.exponent(1)").unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cube_second_derivative_exponent_one() {
        let w = origin();
        let h = JetFn::new(1, |x: &[Jet]| x[0].powi(3));
        let seq = approach_sequence(&[0.0], &[1.0], 1e-1, 1e-6, 30);
        let r = flatness_check(&h, w.as_ref(), 2, &seq).unwrap();
        assert!((r.fitted("flatness.exponent(2)").unwrap() - 1.0).abs() < 1e-9);
        assert!(r.passed());
    }

    #[test]
    fn abs_is_not_flat() {
        let w = origin();
        let h = DistanceField { set: w.clone() };
        let seq = approach_sequence(&[0.0], &[1.0], 1e-1, 1e-6, 30);
        let r = flatness_check(&h, w.as_ref(), 1, &seq).unwrap();
        assert!(!r.passed());
        assert!(r.fitted("flatness.exponent(1)").unwrap().abs() < 1e-9);
    }

    #[test]
    fn nonpositive_f_is_rejected() {
        let w = origin();
        let f: FieldRef = Arc::new(JetFn::new(1, |x: &[Jet]| x[0].clone()));
        assert!(matches!(zero_set_function(f, w, 2, &[vec![-0.5]]), Err(Error::NonPositiveF { .. })));
    }

    #[test]
    fn circle_power_value() {
        let w: OracleRef = Arc::new(Circle { c: vec![0.0, 0.0], r: 1.0 });
        let f: FieldRef = Arc::new(DistanceField { set: w.clone() });
        let h = zero_set_function(f, w, 2, &[]).unwrap();
        assert!((h.value(&[1.1, 0.0]) - 1e-3).abs() < 1e-15);
        assert!(zero_set_equivalence(&h, 1.0, &[vec![1.1, 0.0], vec![0.0, 0.5]]).passed());
    }

    #[test]
    fn abs_level_set_has_two_roots() {
        let h = DistanceField { set: origin() };
        let set = level_set_extract(&h, 0.25, &BoundingBox::cube(1, 1.0), 101).unwrap();
        let mut xs: Vec<f64> = set.points.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs.len(), 2);
        assert!((xs[0] + 0.25).abs() < 1e-9 && (xs[1] - 0.25).abs() < 1e-9);
        assert!(matches!(level_set_extract(&h, 5.0, &BoundingBox::cube(1, 1.0), 101), Err(Error::EmptyLevelSet(_))));
    }

    #[test]
    fn circle_levels_converge_linearly() {
        let w: OracleRef = Arc::new(Circle { c: vec![0.0, 0.0], r: 1.0 });
        let h = DistanceField { set: w.clone() };
        let bbox = BoundingBox::cube(2, 1.5);
        let samples = w.sample(&bbox, 0.005);
        let (table, sets) = hausdorff_convergence(&h, &samples, &[0.2, 0.1], &bbox, 121).unwrap();
        for (row, set) in table.rows.iter().zip(&sets) {
            assert!((row.hausdorff - row.t).abs() < 0.01, "{row:?}");
            assert!(set.points.iter().all(|x| (h.value(x) - row.t).abs() <= LEVEL_TOL));
        }
        assert!(table.converging(1.0, 0.05));
        assert!(hausdorff_convergence(&h, &samples, &[0.1, 0.2], &bbox, 121).is_err());
    }

    #[test]
    fn lambda_of_a_point_is_eps() {
        let bbox = BoundingBox::cube(2, 1.0);
        let l = lambda_eps(&[vec![0.0, 0.0]], 0.2, &bbox, 201).unwrap();
        assert!((l / 0.2 - 1.0).abs() < 0.02, "{l}");
        assert!(matches!(lambda_eps(&[vec![0.0, 0.0]], 5.0, &bbox, 51), Err(Error::EmptyContour(_))));
    }
}
