//! Stratifications of the complement of a closed set, their boundary relation,
//! the numeric validator, and builders for a few standard scenes.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cells::{validate_cell, Bound, Cell};
use crate::error::{Error, Result};
use crate::field::{FieldRef, Polynomial};
use crate::grid::{BoundingBox, GridSpec};
use crate::oracle::{Circle, DistanceOracle, OracleRef, Point, PointSet, PolyGraph, Segment, Union};
use crate::report::CertificateReport;

/// Strata of `ℝⁿ \ W`, ordered by non-decreasing dimension.
#[derive(Clone)]
pub struct Stratification {
    pub n: usize,
    pub w: OracleRef,
    pub strata: Vec<Arc<Cell>>,
    /// Region in which boundary relations are sampled.
    pub bbox: BoundingBox,
    /// `boundary[i]`: indices of strata meeting the frontier of stratum `i` off `W`.
    boundary: Vec<Vec<usize>>,
    /// Frontier samples of stratum `i` that lie neither on `W` nor on a lower stratum.
    unresolved: Vec<Vec<Point>>,
    reordered: bool,
}

impl Stratification {
    pub fn new(w: OracleRef, strata: Vec<Cell>, bbox: BoundingBox) -> Result<Stratification> {
        if strata.is_empty() {
            return Err(Error::EmptyStratification);
        }
        let n = w.dim();
        if let Some(bad) = strata.iter().find(|c| c.n != n) {
            return Err(Error::InvalidInput(format!("stratum {} has ambient dimension {}, W has {}", bad.id, bad.n, n)));
        }
        if n > 2 {
            return Err(Error::UnsupportedDimension { supported: "1 or 2", got: n });
        }
        let reordered = strata.windows(2).any(|p| p[0].dim() > p[1].dim());
        let mut strata: Vec<Arc<Cell>> = strata.into_iter().map(Arc::new).collect();
        strata.sort_by_key(|c| c.dim());
        let spacing = bbox.diameter() / 400.0;
        let mut boundary = Vec::with_capacity(strata.len());
        let mut unresolved = Vec::with_capacity(strata.len());
        for c in &strata {
            let mut hits = Vec::new();
            let mut missing = Vec::new();
            for x in c.boundary_samples(&bbox, spacing) {
                let scale = 1.0 + x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let tol = 1e-7 * scale;
                if w.distance(&x) <= tol.max(w.covering_radius()) {
                    continue;
                }
                let owner = strata
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.dim() < c.dim())
                    .find(|(_, s)| s.distance(&x) <= tol + s.covering_radius());
                match owner {
                    Some((j, _)) => {
                        if !hits.contains(&j) {
                            hits.push(j);
                        }
                    }
                    None => missing.push(x),
                }
            }
            hits.sort_unstable();
            boundary.push(hits);
            unresolved.push(missing);
        }
        Ok(Stratification { n, w, strata, bbox, boundary, unresolved, reordered })
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    /// Lower-dimensional strata making up the frontier of stratum `i` off `W`.
    pub fn boundary_of(&self, i: usize) -> Result<&[usize]> {
        if let Some(x) = self.unresolved[i].first() {
            return Err(Error::RecursionBase {
                stratum: self.strata[i].id.clone(),
                detail: format!("frontier point {x:?} lies on no lower-dimensional stratum"),
            });
        }
        Ok(&self.boundary[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.strata.iter().position(|c| c.id == id)
    }

    /// Whether the input listed strata out of dimension order.
    pub fn was_reordered(&self) -> bool {
        self.reordered
    }

    /// Index of the stratum containing `x`, open strata first.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        self.strata.iter().rposition(|c| c.contains(x))
    }
}

/// Checks coverage, disjointness, the frontier condition, dimension order,
/// and every cell's regularity on `grid`.
pub fn validate_stratification(s: &Stratification, p: usize, grid: &GridSpec) -> Result<CertificateReport> {
    if s.is_empty() {
        return Err(Error::EmptyStratification);
    }
    let mut report = CertificateReport::new();
    if s.was_reordered() {
        report.note("strata were reordered by dimension");
    }
    let order: Vec<String> = s.strata.iter().map(|c| c.id.clone()).collect();
    report.note(format!("order: {}", order.join(", ")));
    let pts = grid.points_off(s.w.as_ref(), 0.0)?;
    let counts: Vec<(Point, usize)> = pts
        .into_par_iter()
        .map(|x| {
            let c = s.strata.iter().filter(|c| c.contains(&x)).count();
            (x, c)
        })
        .collect();
    for (x, c) in &counts {
        report.check("stratification", "coverage", x, *c > 0);
        report.check("stratification", "disjointness", x, *c <= 1);
    }
    for (i, c) in s.strata.iter().enumerate() {
        for x in &s.unresolved[i] {
            report.check("stratification", &format!("frontier of {}", c.id), x, false);
        }
        if s.unresolved[i].is_empty() {
            report.check("stratification", &format!("frontier of {}", c.id), &[], true);
        }
        report.merge(validate_cell(c, p, grid)?);
    }
    Ok(report)
}

fn poly(nvars: usize, coeffs: &[f64]) -> Polynomial {
    Polynomial::from_graded_coeffs(nvars, coeffs).expect("builder coefficients are complete")
}

/// Complement of finitely many points on the line: the open intervals between them.
pub fn points_on_line(points: &[f64], bbox: BoundingBox) -> Result<Stratification> {
    let mut pts = points.to_vec();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.is_empty() {
        return Err(Error::EmptySet);
    }
    let parts: Vec<OracleRef> = pts.iter().map(|&p| Arc::new(PointSet { z: vec![p] }) as OracleRef).collect();
    let w: OracleRef = if parts.len() == 1 { parts[0].clone() } else { Arc::new(Union { n: 1, parts }) };
    let mut strata = vec![Cell::interval("c0", None, Some(pts[0]))];
    for (k, pair) in pts.windows(2).enumerate() {
        strata.push(Cell::interval(&format!("c{}", k + 1), Some(pair[0]), Some(pair[1])));
    }
    strata.push(Cell::interval(&format!("c{}", pts.len()), Some(*pts.last().unwrap()), None));
    Stratification::new(w, strata, bbox)
}

/// Complement in the plane of the graph of a univariate polynomial `q`
/// (coefficients by ascending degree): the regions above and below.
pub fn polynomial_graph_curve(coeffs: &[f64], bbox: BoundingBox) -> Result<Stratification> {
    let q = poly(1, coeffs);
    let lip = q.lipschitz_on_box(bbox.radius());
    let w: OracleRef = Arc::new(PolyGraph { q: q.clone(), lo: f64::NEG_INFINITY, hi: f64::INFINITY });
    let qf: FieldRef = Arc::new(q);
    let above = Cell::open_2d("above", Cell::interval("line", None, None), Bound::Field(qf.clone()), Bound::PosInf, lip);
    let below = Cell::open_2d("below", Cell::interval("line", None, None), Bound::NegInf, Bound::Field(qf), lip);
    Stratification::new(w, vec![above, below], bbox)
}

/// `W` the closed negative x-axis in the plane; strata the positive x-axis
/// and the open upper and lower half-planes.
pub fn half_line_scene(bbox: BoundingBox) -> Result<Stratification> {
    let w: OracleRef = Arc::new(Segment::half_line(vec![0.0, 0.0], vec![-1.0, 0.0]));
    let zero: FieldRef = Arc::new(poly(1, &[0.0]));
    let axis = Cell::graph_2d("axis", Cell::interval("pos", Some(0.0), None), zero, 0.0);
    let upper = Cell::open_2d("upper", Cell::interval("line", None, None), Bound::Const(0.0), Bound::PosInf, 0.0);
    let lower = Cell::open_2d("lower", Cell::interval("line", None, None), Bound::NegInf, Bound::Const(0.0), 0.0);
    Stratification::new(w, vec![axis, upper, lower], bbox)
}

/// `W` the unit circle; strata the open disk and the open exterior.
pub fn unit_circle_scene(bbox: BoundingBox) -> Result<Stratification> {
    let w: OracleRef = Arc::new(Circle { c: vec![0.0, 0.0], r: 1.0 });
    // Graded order in (x, y): 1, y, x, y², xy, x².
    let inside = Cell::region("inside", poly(2, &[1.0, 0.0, 0.0, -1.0, 0.0, -1.0]), w.clone());
    let outside = Cell::region("outside", poly(2, &[-1.0, 0.0, 0.0, 1.0, 0.0, 1.0]), w.clone());
    Stratification::new(w, vec![inside, outside], bbox)
}
