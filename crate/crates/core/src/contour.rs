//! Level-set extraction: root bracketing on a line, marching squares in the plane.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::BoundingBox;
use crate::oracle::Point;

/// Points on `{f = t}` and, in the plane, the contour segments joining them.
#[derive(Debug, Clone, Default)]
pub struct Contour {
    pub points: Vec<Point>,
    /// Index pairs into `points`.
    pub segments: Vec<(usize, usize)>,
}

/// Refines a sign change of `f - t` on the segment `a → b` by bisection.
fn bisect<F: Fn(&[f64]) -> f64>(f: &F, t: f64, a: &[f64], b: &[f64], fa: f64, tol: f64) -> Option<Point> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut sa = (fa - t).signum();
    let at = |s: f64| -> Point { a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect() };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p = at(mid);
        let v = f(&p) - t;
        if v.abs() <= tol {
            return Some(p);
        }
        if hi - lo < 1e-300 {
            break;
        }
        if v.signum() == sa {
            lo = mid;
            sa = v.signum();
        } else {
            hi = mid;
        }
    }
    // A jump rather than a crossing.
    None
}

/// Extracts `{f = t}` inside `bbox` on a node grid with `resolution` nodes per axis,
/// refining every crossing until `|f - t| ≤ tol`.
pub fn extract<F>(f: &F, t: f64, bbox: &BoundingBox, resolution: usize, tol: f64) -> Result<Contour>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    match bbox.dim() {
        1 => Ok(extract_1d(f, t, bbox, resolution, tol)),
        2 => Ok(extract_2d(f, t, bbox, resolution, tol)),
        n => Err(Error::UnsupportedDimension { supported: "1 or 2", got: n }),
    }
}

fn node(bbox: &BoundingBox, res: usize, k: usize, i: usize) -> f64 {
    bbox.lo[k] + (bbox.hi[k] - bbox.lo[k]) * i as f64 / (res - 1) as f64
}

fn extract_1d<F: Fn(&[f64]) -> f64 + Sync>(f: &F, t: f64, bbox: &BoundingBox, res: usize, tol: f64) -> Contour {
    let res = res.max(2);
    let xs: Vec<f64> = (0..res).map(|i| node(bbox, res, 0, i)).collect();
    let vals: Vec<f64> = xs.par_iter().map(|x| f(&[*x])).collect();
    let mut points = Vec::new();
    for i in 0..res - 1 {
        let (a, b) = (vals[i] - t, vals[i + 1] - t);
        if a == 0.0 {
            points.push(vec![xs[i]]);
        } else if a * b < 0.0 {
            if let Some(p) = bisect(f, t, &[xs[i]], &[xs[i + 1]], vals[i], tol) {
                points.push(p);
            }
        }
    }
    if vals[res - 1] == t {
        points.push(vec![xs[res - 1]]);
    }
    Contour { points, segments: Vec::new() }
}

fn extract_2d<F: Fn(&[f64]) -> f64 + Sync>(f: &F, t: f64, bbox: &BoundingBox, res: usize, tol: f64) -> Contour {
    let res = res.max(2);
    let at = |i: usize, j: usize| vec![node(bbox, res, 0, i), node(bbox, res, 1, j)];
    let vals: Vec<f64> = (0..res * res).into_par_iter().map(|k| f(&at(k / res, k % res)) - t).collect();
    let v = |i: usize, j: usize| vals[i * res + j];
    // Nodes exactly on the level are nudged to the positive side so crossings stay on edges.
    let sign = |i: usize, j: usize| v(i, j) >= 0.0;

    // Edge ids: horizontal (i,j)-(i+1,j) and vertical (i,j)-(i,j+1).
    let mut edges: Vec<(bool, usize, usize)> = Vec::new();
    for i in 0..res {
        for j in 0..res {
            if i + 1 < res && sign(i, j) != sign(i + 1, j) {
                edges.push((true, i, j));
            }
            if j + 1 < res && sign(i, j) != sign(i, j + 1) {
                edges.push((false, i, j));
            }
        }
    }
    let crossings: Vec<Option<Point>> = edges
        .par_iter()
        .map(|&(horiz, i, j)| {
            let (i2, j2) = if horiz { (i + 1, j) } else { (i, j + 1) };
            let a = at(i, j);
            let b = at(i2, j2);
            if v(i, j) == 0.0 {
                return Some(a);
            }
            bisect(f, t, &a, &b, v(i, j) + t, tol)
        })
        .collect();
    let mut points = Vec::new();
    let mut index: HashMap<(bool, usize, usize), usize> = HashMap::new();
    for (e, c) in edges.iter().zip(crossings) {
        if let Some(p) = c {
            index.insert(*e, points.len());
            points.push(p);
        }
    }
    let mut segments = Vec::new();
    for i in 0..res - 1 {
        for j in 0..res - 1 {
            // Cell edges in ring order: bottom, right, top, left.
            let ring = [(true, i, j), (false, i + 1, j), (true, i, j + 1), (false, i, j)];
            let hits: Vec<usize> = ring.iter().filter_map(|e| index.get(e).copied()).collect();
            match hits.len() {
                2 => segments.push((hits[0], hits[1])),
                4 => {
                    let centre = f(&[0.5 * (node(bbox, res, 0, i) + node(bbox, res, 0, i + 1)), 0.5 * (node(bbox, res, 1, j) + node(bbox, res, 1, j + 1))]) - t;
                    // Separate the corner whose sign differs from the centre.
                    if (centre >= 0.0) == sign(i, j) {
                        segments.push((hits[0], hits[1]));
                        segments.push((hits[2], hits[3]));
                    } else {
                        segments.push((hits[3], hits[0]));
                        segments.push((hits[1], hits[2]));
                    }
                }
                _ => {}
            }
        }
    }
    Contour { points, segments }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_contour_points_are_on_level() {
        let f = |x: &[f64]| (x[0] * x[0] + x[1] * x[1]).sqrt();
        let c = extract(&f, 0.5, &BoundingBox::cube(2, 1.0), 41, 1e-9).unwrap();
        assert!(!c.points.is_empty());
        for p in &c.points {
            assert!((f(p) - 0.5).abs() <= 1e-9);
        }
        // A closed curve: every point is used by exactly two segments.
        let mut uses = vec![0; c.points.len()];
        for (a, b) in &c.segments {
            uses[*a] += 1;
            uses[*b] += 1;
        }
        assert!(uses.iter().all(|&u| u == 2));
    }

    #[test]
    fn abs_roots_on_line() {
        let f = |x: &[f64]| x[0].abs();
        let c = extract(&f, 0.25, &BoundingBox::cube(1, 1.0), 100, 1e-9).unwrap();
        assert_eq!(c.points.len(), 2);
        assert!((c.points[0][0] + 0.25).abs() < 1e-9);
        assert!((c.points[1][0] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn jumps_are_not_crossings() {
        let f = |x: &[f64]| if x[0] < 0.1 { -1.0 } else { 1.0 };
        let c = extract(&f, 0.0, &BoundingBox::cube(1, 1.0), 10, 1e-9).unwrap();
        assert!(c.points.is_empty());
    }
}
