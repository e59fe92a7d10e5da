//! Sample grids over axis-aligned boxes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::{DistanceOracle, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> BoundingBox {
        assert_eq!(lo.len(), hi.len(), "box corner dimensions differ");
        BoundingBox { lo, hi }
    }

    /// The cube `[-r, r]^n`.
    pub fn cube(n: usize, r: f64) -> BoundingBox {
        BoundingBox::new(vec![-r; n], vec![r; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
    }

    pub fn center(&self) -> Point {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// Largest extent over all axes.
    pub fn radius(&self) -> f64 {
        self.lo.iter().chain(&self.hi).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A regular node grid with `resolution` nodes per axis, optionally jittered.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub bbox: BoundingBox,
    pub resolution: usize,
    pub seed: Option<u64>,
}

impl GridSpec {
    pub fn new(bbox: BoundingBox, resolution: usize) -> GridSpec {
        GridSpec { bbox, resolution, seed: None }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> GridSpec {
        self.seed = seed;
        self
    }

    /// Same box at twice the node density.
    pub fn refined(&self) -> GridSpec {
        GridSpec { bbox: self.bbox.clone(), resolution: 2 * self.resolution - 1, seed: self.seed }
    }

    pub fn pitch(&self) -> f64 {
        let r = self.resolution.max(2) as f64 - 1.0;
        self.bbox.lo.iter().zip(&self.bbox.hi).map(|(l, h)| (h - l) / r).fold(0.0, f64::max)
    }

    pub fn points(&self) -> Vec<Point> {
        let n = self.bbox.dim();
        let res = self.resolution.max(1);
        let axis = |k: usize, i: usize| -> f64 {
            if res == 1 {
                0.5 * (self.bbox.lo[k] + self.bbox.hi[k])
            } else {
                self.bbox.lo[k] + (self.bbox.hi[k] - self.bbox.lo[k]) * i as f64 / (res - 1) as f64
            }
        };
        let total = res.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut p = vec![0.0; n];
            // Last axis varies fastest.
            for k in (0..n).rev() {
                p[k] = axis(k, rem % res);
                rem /= res;
            }
            out.push(p);
        }
        if let Some(seed) = self.seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let amp = 0.25 * self.pitch();
            for p in &mut out {
                for v in p.iter_mut() {
                    *v += rng.gen_range(-amp..=amp);
                }
            }
        }
        out
    }

    /// Grid nodes farther than `collar` (and the oracle's covering radius) from `w`.
    pub fn points_off(&self, w: &dyn DistanceOracle, collar: f64) -> Result<Vec<Point>> {
        let keep = collar.max(w.covering_radius());
        let pts: Vec<Point> = self.points().into_iter().filter(|x| w.distance(x) > keep).collect();
        if pts.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(pts)
    }
}

/// `count` values from `lo` to `hi` equally spaced in `log10`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)).collect()
}

/// `lo, lo·r, lo·r², …` while the value stays `≥ hi` (for decreasing ratios).
pub fn geometric(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start * ratio.powi(i as i32)).collect()
}
