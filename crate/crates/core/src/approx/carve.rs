//! Carved strata `Z_i` and the nested neighbourhoods around them, as sample clouds.

use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;

use super::schedule::ConstantSchedule;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::oracle::{g_eta_verdict, DistanceOracle, OracleRef, Point, PointCloud, Union, Verdict};
use crate::report::CertificateReport;
use crate::strat::Stratification;

#[derive(Clone)]
pub struct CarvedSets {
    /// `z[i]`: samples of `Z_i`.
    pub z: Vec<Arc<PointCloud>>,
    /// `nested[i][j]` for `j ≤ i`: samples of `G_{η_i}(G_{η_{i-1}}(…G_{η_j}(Z_j)…))`.
    pub nested: Vec<Vec<Arc<PointCloud>>>,
    pub grid: GridSpec,
    /// Grid points off `W` used for every membership test.
    pub points: Vec<Point>,
}

impl CarvedSets {
    /// `U_i`, the outermost nested neighbourhood of `Z_i`.
    pub fn u(&self, i: usize) -> &Arc<PointCloud> {
        &self.nested[self.nested.len() - 1][i]
    }

    /// The set whose `η_i`-neighbourhood is `nested[i][j]`.
    pub fn inner(&self, i: usize, j: usize) -> &Arc<PointCloud> {
        if j == i {
            &self.z[i]
        } else {
            &self.nested[i - 1][j]
        }
    }
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

fn verdict(set: &dyn DistanceOracle, w: &dyn DistanceOracle, eta: f64, x: &[f64]) -> Verdict {
    g_eta_verdict(set.distance(x), set.covering_radius(), w.distance(x), w.covering_radius(), eta)
}

/// Grid points (and the inner samples) not `out` of `G_η(inner)`.
fn neighbourhood(inner: &PointCloud, w: &dyn DistanceOracle, eta: f64, points: &[Point], cr: f64) -> PointCloud {
    let mut pts: Vec<Point> = points.par_iter().filter(|x| verdict(inner, w, eta, x) != Verdict::Out).cloned().collect();
    let seen: HashSet<Vec<u64>> = pts.iter().map(|x| key(x)).collect();
    pts.extend(inner.points().iter().filter(|x| !seen.contains(&key(x))).cloned());
    PointCloud::new(w.dim(), pts, cr.max(inner.covering_radius()))
}

/// `Z_1 = C_1`, `Z_{i+1} = C_{i+1}` minus the nested neighbourhoods of the earlier
/// carved sets; margin-ambiguous samples are kept. Fails with `CoverageGap` when a
/// grid point off `W` lies outside every `U_i`.
pub fn carve_sets(s: &Stratification, schedule: &ConstantSchedule, grid: &GridSpec) -> Result<CarvedSets> {
    if schedule.len() != s.len() {
        return Err(Error::InvalidInput(format!("schedule has {} strata, stratification {}", schedule.len(), s.len())));
    }
    let w = s.w.as_ref();
    let points = grid.points_off(w, 0.0)?;
    let cr = grid.pitch() * (s.n as f64).sqrt();
    let mut z: Vec<Arc<PointCloud>> = Vec::with_capacity(s.len());
    let mut nested: Vec<Vec<Arc<PointCloud>>> = Vec::with_capacity(s.len());
    for i in 0..s.len() {
        let (samples, sample_cr) = s.strata[i].samples(grid);
        let kept: Vec<Point> = if i == 0 {
            samples
        } else {
            samples
                .into_par_iter()
                .filter(|y| {
                    (0..i).all(|j| {
                        let inner: &PointCloud = if j == i - 1 { &z[i - 1] } else { &nested[i - 2][j] };
                        verdict(inner, w, schedule.eta[i - 1], y) != Verdict::In
                    })
                })
                .collect()
        };
        z.push(Arc::new(PointCloud::new(s.n, kept, sample_cr)));
        let row: Vec<Arc<PointCloud>> = (0..=i)
            .map(|j| {
                let inner: &PointCloud = if j == i { &z[i] } else { &nested[i - 1][j] };
                Arc::new(neighbourhood(inner, w, schedule.eta[i], &points, cr))
            })
            .collect();
        nested.push(row);
    }
    let carved = CarvedSets { z, nested, grid: grid.clone(), points };
    let last = s.len() - 1;
    let gap = carved.points.par_iter().find_any(|x| {
        (0..s.len()).all(|j| verdict(carved.inner(last, j).as_ref(), w, schedule.eta[last], x) == Verdict::Out)
    });
    if let Some(x) = gap {
        return Err(Error::CoverageGap(format!("grid point {x:?} lies in no U_i")));
    }
    Ok(carved)
}

/// Verifies the schedule chain, the covering implication for every `i`, the frontier
/// estimate `d(z, C_1 ∪ … ∪ C_i) ≥ η_i d(z, W)` on samples of `Z_{i+1}`, and the nesting
/// bound `G_{η_i}(…G_{η_j}(Z_j)…) ⊂ G_{ε_ij}(Z_j)` on samples.
pub fn coverage_check(s: &Stratification, carved: &CarvedSets, schedule: &ConstantSchedule) -> CertificateReport {
    let mut report = schedule.chain_report();
    let w = s.w.as_ref();
    for i in 0..s.len() {
        let lower: OracleRef = if i == 0 {
            s.strata[0].clone()
        } else {
            Arc::new(Union { n: s.n, parts: s.strata[..=i].iter().map(|c| c.clone() as OracleRef).collect() })
        };
        let eta = schedule.eta[i];
        let rows: Vec<(Point, bool)> = carved
            .points
            .par_iter()
            .filter(|x| verdict(lower.as_ref(), w, eta, x) == Verdict::In)
            .map(|x| {
                let covered = (0..=i).any(|j| verdict(carved.inner(i, j).as_ref(), w, eta, x) != Verdict::Out);
                (x.clone(), covered)
            })
            .collect();
        for (x, ok) in rows {
            report.check("coverage", &format!("stratum {} covering", i + 1), &x, ok);
        }
        if i + 1 < s.len() {
            let earlier: Vec<OracleRef> = s.strata[..=i].iter().map(|c| c.clone() as OracleRef).collect();
            for zpt in carved.z[i + 1].points() {
                let d_lower = earlier.iter().map(|c| c.distance(zpt)).fold(f64::INFINITY, f64::min);
                let dw = w.distance(zpt);
                let margin = carved.z[i + 1].covering_radius() + w.covering_radius() * (1.0 + eta);
                report.check_le("coverage", &format!("stratum {} frontier distance", i + 2), zpt, -eta * dw, -d_lower.min(dw), margin);
            }
        }
        for j in 0..=i {
            let z = carved.z[j].as_ref();
            let eps = schedule.eps[i][j];
            let cloud = carved.nested[i][j].as_ref();
            // Each sampled neighbourhood step may admit points one covering radius out.
            let slack = z.covering_radius() + (i - j + 1) as f64 * cloud.covering_radius();
            let bad: Vec<Point> = cloud
                .points()
                .par_iter()
                .filter(|x| w.distance(x) > w.covering_radius())
                .filter(|x| g_eta_verdict(z.distance(x), slack, w.distance(x), w.covering_radius(), eps) == Verdict::Out)
                .cloned()
                .collect();
            let stage = format!("nesting {} {}", i + 1, j + 1);
            report.check("coverage", &stage, &[], bad.is_empty());
            for x in bad.into_iter().take(20) {
                report.check("coverage", &stage, &x, false);
            }
        }
    }
    report
}
