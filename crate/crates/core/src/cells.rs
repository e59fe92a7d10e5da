//! Regular cells: open cells between two bounding functions, graphs of maps
//! over open cells, single points, and open regions `{q > 0}` whose boundary
//! is handed over as a separate set.
//!
//! Geometry is implemented for ambient dimension 1 and 2. Every cell carries
//! a coordinate permutation; formulas are evaluated in local coordinates
//! `y[k] = x[perm[k]]`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{fd_partial, fd_step, DerivativeKind, FieldRef, Polynomial, ScalarField};
use crate::grid::{BoundingBox, GridSpec};
use crate::jet::{multi_index_enumerate, Jet};
use crate::oracle::{nearest_on_graph, DistanceOracle, OracleRef, Point};
use crate::report::CertificateReport;

/// `L = 1/√(1 + M²)` for a Lipschitz constant `M`.
pub fn lip_to_l(m: f64) -> Result<f64> {
    if m < 0.0 || m.is_nan() {
        return Err(Error::NegativeLipschitz(m));
    }
    Ok((1.0 / (1.0 + m * m)).sqrt())
}

/// One side of an open cell.
#[derive(Clone)]
pub enum Bound {
    NegInf,
    PosInf,
    Const(f64),
    /// A function of the base coordinates.
    Field(FieldRef),
}

impl Bound {
    pub fn at(&self, u: &[f64]) -> f64 {
        match self {
            Bound::NegInf => f64::NEG_INFINITY,
            Bound::PosInf => f64::INFINITY,
            Bound::Const(c) => *c,
            Bound::Field(f) => f.value(u),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Bound::Const(_) | Bound::Field(_))
    }

    fn field(&self) -> Option<&FieldRef> {
        match self {
            Bound::Field(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Clone)]
pub enum CellKind {
    Point { at: Point },
    /// `{(u, t) : u ∈ base, lower(u) < t < upper(u)}`; `base` is `None` on the line.
    Open { base: Option<Arc<Cell>>, lower: Bound, upper: Bound },
    /// `{(u, φ(u)) : u ∈ base}` with one map component per graph coordinate.
    Graph { base: Arc<Cell>, map: Vec<FieldRef> },
    /// `{x : q(x) > 0}`; `boundary` is the set `{q = 0}`.
    Region { q: Polynomial, boundary: OracleRef },
}

#[derive(Clone)]
pub struct Cell {
    pub id: String,
    pub n: usize,
    pub kind: CellKind,
    pub perm: Vec<usize>,
    pub lipschitz_m: f64,
}

/// Relative tolerance used for membership of lower-dimensional cells.
pub const ON_CELL_TOL: f64 = 1e-9;

impl Cell {
    /// The open interval `(lo, hi)` on the line; `None` means unbounded.
    pub fn interval(id: &str, lo: Option<f64>, hi: Option<f64>) -> Cell {
        Cell {
            id: id.into(),
            n: 1,
            kind: CellKind::Open {
                base: None,
                lower: lo.map_or(Bound::NegInf, Bound::Const),
                upper: hi.map_or(Bound::PosInf, Bound::Const),
            },
            perm: vec![0],
            lipschitz_m: 0.0,
        }
    }

    pub fn point(id: &str, at: Point) -> Cell {
        let n = at.len();
        Cell { id: id.into(), n, kind: CellKind::Point { at }, perm: (0..n).collect(), lipschitz_m: 0.0 }
    }

    /// Open cell in the plane over an interval base.
    pub fn open_2d(id: &str, base: Cell, lower: Bound, upper: Bound, lipschitz_m: f64) -> Cell {
        Cell {
            id: id.into(),
            n: 2,
            kind: CellKind::Open { base: Some(Arc::new(base)), lower, upper },
            perm: vec![0, 1],
            lipschitz_m,
        }
    }

    /// Graph of `map` over an interval base in the plane.
    pub fn graph_2d(id: &str, base: Cell, map: FieldRef, lipschitz_m: f64) -> Cell {
        Cell {
            id: id.into(),
            n: 2,
            kind: CellKind::Graph { base: Arc::new(base), map: vec![map] },
            perm: vec![0, 1],
            lipschitz_m,
        }
    }

    pub fn region(id: &str, q: Polynomial, boundary: OracleRef) -> Cell {
        let n = q.nvars();
        Cell { id: id.into(), n, kind: CellKind::Region { q, boundary }, perm: (0..n).collect(), lipschitz_m: 0.0 }
    }

    pub fn with_perm(mut self, perm: Vec<usize>) -> Cell {
        self.perm = perm;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            CellKind::Point { .. } => 0,
            CellKind::Open { .. } | CellKind::Region { .. } => self.n,
            CellKind::Graph { base, .. } => base.n,
        }
    }

    pub fn is_open(&self) -> bool {
        self.dim() == self.n
    }

    pub fn lip_l(&self) -> f64 {
        lip_to_l(self.lipschitz_m).unwrap_or(1.0)
    }

    pub fn to_local(&self, x: &[f64]) -> Point {
        self.perm.iter().map(|&k| x[k]).collect()
    }

    pub fn to_global(&self, y: &[f64]) -> Point {
        let mut x = vec![0.0; y.len()];
        for (k, &pk) in self.perm.iter().enumerate() {
            x[pk] = y[k];
        }
        x
    }

    pub fn jets_to_local(&self, x: &[Jet]) -> Vec<Jet> {
        self.perm.iter().map(|&k| x[k].clone()).collect()
    }

    pub fn jets_to_global(&self, y: &[Jet]) -> Vec<Jet> {
        let mut x = y.to_vec();
        for (k, &pk) in self.perm.iter().enumerate() {
            x[pk] = y[k].clone();
        }
        x
    }

    /// Endpoints of an interval cell on the line.
    pub fn interval_bounds(&self) -> Option<(f64, f64)> {
        match &self.kind {
            CellKind::Open { base: None, lower, upper } => Some((lower.at(&[]), upper.at(&[]))),
            _ => None,
        }
    }

    /// Base interval of a planar open or graph cell.
    pub fn base_interval(&self) -> Option<(f64, f64)> {
        match &self.kind {
            CellKind::Open { base: Some(b), .. } | CellKind::Graph { base: b, .. } => b.interval_bounds(),
            _ => None,
        }
    }

    /// The graph map of a graph cell, evaluated at base point `u`.
    pub fn phi(&self, u: &[f64]) -> Option<Point> {
        match &self.kind {
            CellKind::Graph { map, .. } => Some(map.iter().map(|f| f.value(u)).collect()),
            _ => None,
        }
    }

    pub fn phi_jets(&self, u: &[Jet]) -> Option<Vec<Jet>> {
        match &self.kind {
            CellKind::Graph { map, .. } => Some(map.iter().map(|f| f.eval_jet(u)).collect()),
            _ => None,
        }
    }

    /// Whether the base coordinates of global point `x` lie in the base cell.
    pub fn over_base(&self, x: &[f64]) -> bool {
        match &self.kind {
            CellKind::Open { base: Some(b), .. } | CellKind::Graph { base: b, .. } => {
                let y = self.to_local(x);
                b.contains(&y[..b.n])
            }
            CellKind::Open { base: None, .. } | CellKind::Region { .. } => true,
            CellKind::Point { .. } => false,
        }
    }

    /// Exact membership for open cells, membership within [`ON_CELL_TOL`] otherwise.
    pub fn contains(&self, x: &[f64]) -> bool {
        let y = self.to_local(x);
        let scale = 1.0 + y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        match &self.kind {
            CellKind::Point { at } => dist(x, at) <= ON_CELL_TOL * scale,
            CellKind::Open { base, lower, upper } => {
                let m = self.n - 1;
                if let Some(b) = base {
                    if !b.contains(&y[..m]) {
                        return false;
                    }
                }
                let t = y[m];
                lower.at(&y[..m]) < t && t < upper.at(&y[..m])
            }
            CellKind::Graph { base, .. } => {
                let m = base.n;
                if !base.contains(&y[..m]) {
                    return false;
                }
                let phi = self.phi(&y[..m]).unwrap();
                dist(&y[m..], &phi) <= ON_CELL_TOL * scale
            }
            CellKind::Region { q, .. } => q.value(x) > 0.0,
        }
    }

    fn unsupported(&self) -> Error {
        Error::UnsupportedDimension { supported: "1 or 2", got: self.n }
    }

    /// Distance from `x` to the cell.
    pub fn distance_to(&self, x: &[f64]) -> Result<f64> {
        if self.n > 2 {
            return Err(self.unsupported());
        }
        let y = self.to_local(x);
        Ok(match &self.kind {
            CellKind::Point { at } => dist(x, at),
            CellKind::Open { base: None, lower, upper } => {
                let (a, b) = (lower.at(&[]), upper.at(&[]));
                (a - y[0]).max(y[0] - b).max(0.0)
            }
            CellKind::Open { .. } if self.contains(x) => 0.0,
            CellKind::Open { base: Some(b), lower, upper } => {
                let (a, bb) = b.interval_bounds().ok_or_else(|| self.unsupported())?;
                let mut best = f64::INFINITY;
                for bound in [lower, upper] {
                    if bound.is_finite() {
                        let f = |t: f64| bound.at(&[t]);
                        best = best.min(nearest_on_graph(&f, a, bb, &y).1);
                    }
                }
                for end in [a, bb] {
                    if end.is_finite() {
                        let (l, h) = (lower.at(&[end]), upper.at(&[end]));
                        let dy = y[1].clamp(l.min(h), h.max(l)) - y[1];
                        best = best.min(((y[0] - end).powi(2) + dy * dy).sqrt());
                    }
                }
                best
            }
            CellKind::Graph { base, map } => match base.interval_bounds() {
                Some((a, b)) => {
                    let f = |t: f64| map[0].value(&[t]);
                    nearest_on_graph(&f, a, b, &y).1
                }
                None => match &base.kind {
                    CellKind::Point { at } => dist(&y, &[at[0], map[0].value(at)]),
                    _ => return Err(self.unsupported()),
                },
            },
            CellKind::Region { boundary, .. } => {
                if self.contains(x) {
                    0.0
                } else {
                    boundary.distance(x)
                }
            }
        })
    }

    /// Closure points of the frontier `closure(C) \ C` (finite ones).
    pub fn frontier_points(&self) -> Vec<Point> {
        match &self.kind {
            CellKind::Graph { base, .. } => match base.interval_bounds() {
                Some((a, b)) => [a, b]
                    .into_iter()
                    .filter(|t| t.is_finite())
                    .map(|t| {
                        let phi = self.phi(&[t]).unwrap();
                        self.to_global(&[t, phi[0]])
                    })
                    .collect(),
                None => Vec::new(),
            },
            CellKind::Open { base: None, lower, upper } => {
                [lower.at(&[]), upper.at(&[])].into_iter().filter(|t| t.is_finite()).map(|t| vec![t]).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Samples of the frontier inside `bbox`, about `spacing` apart.
    pub fn boundary_samples(&self, bbox: &BoundingBox, spacing: f64) -> Vec<Point> {
        match &self.kind {
            CellKind::Point { .. } => Vec::new(),
            CellKind::Graph { .. } => self.frontier_points().into_iter().filter(|p| bbox.contains(p)).collect(),
            CellKind::Open { base: None, .. } => self.frontier_points().into_iter().filter(|p| bbox.contains(p)).collect(),
            CellKind::Open { base: Some(b), lower, upper } => {
                let (a, bb) = b.interval_bounds().unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
                let r = bbox.radius();
                let (lo, hi) = (a.max(-r), bb.min(r));
                let mut out = Vec::new();
                if lo < hi {
                    let steps = ((hi - lo) / spacing).ceil() as usize;
                    for i in 0..=steps {
                        let t = lo + (hi - lo) * i as f64 / steps as f64;
                        for bound in [lower, upper] {
                            if bound.is_finite() {
                                out.push(self.to_global(&[t, bound.at(&[t])]));
                            }
                        }
                    }
                }
                for end in [a, bb] {
                    if end.is_finite() {
                        let (l, h) = (lower.at(&[end]).max(-r), upper.at(&[end]).min(r));
                        let steps = ((h - l).max(0.0) / spacing).ceil() as usize;
                        for i in 0..=steps {
                            let s = if steps == 0 { l } else { l + (h - l) * i as f64 / steps as f64 };
                            out.push(self.to_global(&[end, s]));
                        }
                    }
                }
                out.into_iter().filter(|p| bbox.contains(p)).collect()
            }
            CellKind::Region { boundary, .. } => boundary.sample(bbox, spacing),
        }
    }

    /// Sample points of the cell inside `bbox` and the covering radius of the sample
    /// (every cell point in the box lies within it of some sample).
    pub fn samples(&self, grid: &GridSpec) -> (Vec<Point>, f64) {
        let pitch = grid.pitch();
        match &self.kind {
            CellKind::Point { at } => (if grid.bbox.contains(at) { vec![at.clone()] } else { Vec::new() }, 0.0),
            CellKind::Graph { base, .. } => {
                let local_box = BoundingBox::new(self.to_local(&grid.bbox.lo), self.to_local(&grid.bbox.hi));
                let (a, b) = base.interval_bounds().unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
                let r = grid.bbox.radius();
                let (lo, hi) = (a.max(-r), b.min(r));
                let mut out = Vec::new();
                if lo < hi {
                    let steps = ((hi - lo) / pitch).ceil().max(1.0) as usize;
                    for i in 0..steps {
                        let t = lo + (hi - lo) * (i as f64 + 0.5) / steps as f64;
                        let y = vec![t, self.phi(&[t]).unwrap()[0]];
                        if local_box.contains(&y) || grid.bbox.contains(&self.to_global(&y)) {
                            out.push(self.to_global(&y));
                        }
                    }
                }
                let h = (hi - lo) / (((hi - lo) / pitch).ceil().max(1.0));
                (out, 0.5 * h * (1.0 + self.lipschitz_m * self.lipschitz_m).sqrt())
            }
            _ => {
                let pts: Vec<Point> = grid.points().into_iter().filter(|x| self.contains(x)).collect();
                (pts, pitch * (self.n as f64).sqrt())
            }
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl DistanceOracle for Cell {
    fn dim(&self) -> usize {
        self.n
    }

    fn distance(&self, x: &[f64]) -> f64 {
        self.distance_to(x).expect("cell geometry is limited to the line and the plane")
    }

    fn covering_radius(&self) -> f64 {
        match &self.kind {
            CellKind::Region { boundary, .. } => boundary.covering_radius(),
            // Golden-section refinement of curve distances.
            CellKind::Graph { .. } | CellKind::Open { base: Some(_), .. } => 1e-9,
            _ => 0.0,
        }
    }

    fn sample(&self, bbox: &BoundingBox, spacing: f64) -> Vec<Point> {
        let res = (bbox.diameter() / spacing).ceil().max(2.0) as usize;
        self.samples(&GridSpec::new(bbox.clone(), res)).0
    }

    fn describe(&self) -> String {
        format!("cell {} (dim {})", self.id, self.dim())
    }
}

/// The maps of a cell that certificates apply to: bounding functions or graph components.
fn cell_maps(cell: &Cell) -> Vec<(&'static str, FieldRef)> {
    match &cell.kind {
        CellKind::Open { lower, upper, .. } => {
            let mut v = Vec::new();
            if let Some(f) = lower.field() {
                v.push(("lower", f.clone()));
            }
            if let Some(f) = upper.field() {
                v.push(("upper", f.clone()));
            }
            v
        }
        CellKind::Graph { map, .. } => map.iter().map(|f| ("graph", f.clone())).collect(),
        _ => Vec::new(),
    }
}

/// Base nodes: cell centres of `resolution` equal pieces of the base interval clipped to the grid box.
fn base_nodes(cell: &Cell, grid: &GridSpec, resolution: usize) -> Vec<f64> {
    let Some((a, b)) = cell.base_interval() else { return Vec::new() };
    let local_lo = cell.to_local(&grid.bbox.lo);
    let local_hi = cell.to_local(&grid.bbox.hi);
    let lo = a.max(local_lo[0]);
    let hi = b.min(local_hi[0]);
    if !(lo < hi) {
        return Vec::new();
    }
    (0..resolution).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / resolution as f64).collect()
}

fn derivative_of(f: &dyn ScalarField, u: &[f64], alpha: &crate::jet::MultiIndex, d_boundary: f64) -> Result<f64> {
    match f.derivative_kind() {
        DerivativeKind::Exact => Ok(f.derivative(u, alpha)),
        DerivativeKind::FiniteDifference => fd_partial(f, u, alpha, fd_step(d_boundary)),
    }
}

/// Largest `|D^α f(u)| · d(u, ∂T)^{|α|-1}` per order `1..=p` over the nodes.
fn fit_orders(f: &dyn ScalarField, nodes: &[f64], bounds: (f64, f64), p: usize) -> Result<(Vec<f64>, Vec<(f64, f64)>)> {
    let mut fitted = vec![0.0_f64; p + 1];
    let mut slopes = Vec::new();
    for &u in nodes {
        let d = (u - bounds.0).min(bounds.1 - u);
        for alpha in multi_index_enumerate(1, p).into_iter().filter(|a| a.order() >= 1) {
            let q = alpha.order();
            if !d.is_finite() && q > 1 {
                // No frontier: higher-order ratios have no finite scale to compare against.
                continue;
            }
            let v = derivative_of(f, &[u], &alpha, d)?.abs();
            let ratio = if d.is_finite() { v * d.powi(q as i32 - 1) } else { v };
            fitted[q] = fitted[q].max(ratio);
            if q == 1 {
                slopes.push((u, v));
            }
        }
    }
    Ok((fitted, slopes))
}

/// Checks the bounding or graph maps of `cell` on a base grid derived from `grid`:
/// fits `M̂` in `|D^α φ(u)| ≤ M̂ d(u, ∂T)^{1-|α|}`, requires the fit to be stable
/// when the base grid is doubled, and checks the declared Lipschitz constant.
pub fn validate_cell(cell: &Cell, p: usize, grid: &GridSpec) -> Result<CertificateReport> {
    let mut report = CertificateReport::new();
    let maps = cell_maps(cell);
    if maps.is_empty() {
        report.fit(&format!("{}.M_hat", cell.id), 0.0);
        return Ok(report);
    }
    let bounds = cell.base_interval().ok_or_else(|| cell.unsupported())?;
    let nodes = base_nodes(cell, grid, grid.resolution);
    if nodes.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let fine = base_nodes(cell, grid, 2 * grid.resolution);
    let stage = format!("cell {}", cell.id);
    let mut m_hat: f64 = 0.0;
    for (role, f) in &maps {
        let (coarse_fit, slopes) = fit_orders(f.as_ref(), &nodes, bounds, p)?;
        let (fine_fit, _) = fit_orders(f.as_ref(), &fine, bounds, p)?;
        for q in 1..=p {
            m_hat = m_hat.max(fine_fit[q]);
            report.fit(&format!("{}.{}.M_hat_{}", cell.id, role, q), fine_fit[q]);
            // A bounded ratio settles under refinement; an unbounded one keeps growing.
            let claimed = 1.5 * coarse_fit[q] + 1e-9;
            report.check_le(&stage, &format!("{role} order {q} refinement"), &[], claimed, fine_fit[q], 0.0);
        }
        for (u, slope) in &slopes {
            report.check_le(&stage, &format!("{role} lipschitz"), &[*u], cell.lipschitz_m, *slope, 1e-9 * (1.0 + cell.lipschitz_m));
        }
        for w in nodes.windows(2) {
            let diff = (f.value(&[w[1]]) - f.value(&[w[0]])).abs();
            report.check_le(&stage, &format!("{role} lipschitz pairs"), &[w[0], w[1]], cell.lipschitz_m * (w[1] - w[0]), diff, 1e-9);
        }
    }
    report.fit(&format!("{}.M_hat", cell.id), m_hat);
    if let CellKind::Open { lower, upper, .. } = &cell.kind {
        for &u in &nodes {
            let ok = lower.at(&[u]) < upper.at(&[u]);
            report.check(&stage, "lower below upper", &[u], ok);
        }
    }
    Ok(report)
}

/// The sandwich `L|w - φ(u)| ≤ d(x, Z) ≤ |w - φ(u)|` over the base, and
/// `d(x, Z) ≥ L d(x, ∂Z)` off it.
pub fn cell_distance_envelope_check(cell: &Cell, z: &dyn DistanceOracle, x: &[f64]) -> Result<CertificateReport> {
    let mut report = CertificateReport::new();
    let CellKind::Graph { base, .. } = &cell.kind else {
        return Err(Error::InvalidInput(format!("cell {} is not a graph cell", cell.id)));
    };
    let l = cell.lip_l();
    let d = z.distance(x);
    let margin = z.covering_radius() + 1e-9 * (1.0 + d);
    let stage = format!("envelope {}", cell.id);
    let y = cell.to_local(x);
    let m = base.n;
    if cell.over_base(x) {
        let phi = cell.phi(&y[..m]).unwrap();
        let vert = dist(&y[m..], &phi);
        report.check_le(&stage, "lower", x, d, l * vert, margin);
        report.check_le(&stage, "upper", x, vert, d, margin);
    } else {
        let frontier = cell.frontier_points();
        let d_frontier = frontier.iter().map(|p| dist(x, p)).fold(f64::INFINITY, f64::min);
        report.check_le(&stage, "off-base", x, d, l * d_frontier, margin);
    }
    Ok(report)
}

/// `u ↦ g(u, φ(u))` for a graph cell.
pub struct GraphComposition {
    cell: Arc<Cell>,
    g: FieldRef,
}

impl GraphComposition {
    pub fn new(cell: Arc<Cell>, g: FieldRef) -> Result<GraphComposition> {
        if !matches!(cell.kind, CellKind::Graph { .. }) {
            return Err(Error::InvalidInput(format!("cell {} is not a graph cell", cell.id)));
        }
        Ok(GraphComposition { cell, g })
    }
}

impl ScalarField for GraphComposition {
    fn dim(&self) -> usize {
        self.cell.dim()
    }

    fn eval_jet(&self, u: &[Jet]) -> Jet {
        let mut y: Vec<Jet> = u.to_vec();
        y.extend(self.cell.phi_jets(u).unwrap());
        self.g.eval_jet(&self.cell.jets_to_global(&y))
    }

    fn derivative_kind(&self) -> DerivativeKind {
        let maps_exact = cell_maps(&self.cell).iter().all(|(_, f)| f.derivative_kind() == DerivativeKind::Exact);
        if maps_exact && self.g.derivative_kind() == DerivativeKind::Exact {
            DerivativeKind::Exact
        } else {
            DerivativeKind::FiniteDifference
        }
    }
}

/// Composes `g` with the graph map and fits its regularity constant over the base.
pub fn graph_compose_g(cell: &Arc<Cell>, g: FieldRef, p: usize, grid: &GridSpec) -> Result<(FieldRef, CertificateReport)> {
    let comp: FieldRef = Arc::new(GraphComposition::new(cell.clone(), g)?);
    let bounds = cell.base_interval().ok_or_else(|| cell.unsupported())?;
    let nodes = base_nodes(cell, grid, grid.resolution);
    if nodes.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let fine = base_nodes(cell, grid, 2 * grid.resolution);
    let (coarse_fit, _) = fit_orders(comp.as_ref(), &nodes, bounds, p)?;
    let (fine_fit, _) = fit_orders(comp.as_ref(), &fine, bounds, p)?;
    let mut report = CertificateReport::new();
    let stage = format!("compose {}", cell.id);
    for q in 1..=p {
        report.fit(&format!("{}.g_M_hat_{}", cell.id, q), fine_fit[q]);
        report.check_le(&stage, &format!("order {q} refinement"), &[], 1.5 * coarse_fit[q] + 1e-9, fine_fit[q], 0.0);
    }
    report.note(format!("derivatives: {}", comp.derivative_kind()));
    Ok((comp, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Constant, JetFn};
    use crate::oracle::Segment;

    fn line_graph(lo: Option<f64>, hi: Option<f64>, slope: f64) -> Cell {
        let map: FieldRef = Arc::new(JetFn::new(1, move |x: &[Jet]| x[0].scale(slope)));
        Cell::graph_2d("z", Cell::interval("t", lo, hi), map, slope.abs())
    }

    #[test]
    fn lip_to_l_examples() {
        assert_eq!(lip_to_l(0.0).unwrap(), 1.0);
        assert_eq!(lip_to_l(1.0).unwrap(), std::f64::consts::FRAC_1_SQRT_2);
        assert_eq!(lip_to_l(2.0).unwrap(), 0.4472135954999579);
        assert!(matches!(lip_to_l(-1.0), Err(Error::NegativeLipschitz(_))));
    }

    #[test]
    fn validate_cell_examples() {
        let grid = GridSpec::new(BoundingBox::cube(2, 2.0), 50);
        let zero: FieldRef = Arc::new(Constant { n: 1, c: 0.0 });
        let flat = Cell::graph_2d("flat", Cell::interval("t", Some(0.0), None), zero, 0.0);
        let r = validate_cell(&flat, 2, &grid).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.fitted("flat.M_hat"), Some(0.0));

        let diag = line_graph(Some(0.0), Some(1.0), 1.0);
        let r = validate_cell(&diag, 2, &grid).unwrap();
        assert!(r.passed(), "{r}");
        assert!((r.fitted("z.M_hat").unwrap() - 1.0).abs() < 1e-12);

        let sqrt: FieldRef = Arc::new(JetFn::new(1, |x: &[Jet]| x[0].sqrt()));
        let root = Cell::graph_2d("root", Cell::interval("t", Some(0.0), Some(1.0)), sqrt, 1.0);
        let r = validate_cell(&root, 1, &grid).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn distance_to_cells() {
        let diag = line_graph(None, None, 1.0);
        assert!((diag.distance(&[0.0, 1.0]) - 0.5f64.sqrt()).abs() < 1e-9);
        let ray = line_graph(Some(0.0), None, 1.0);
        assert!((ray.distance(&[-1.0, 0.0]) - 1.0).abs() < 1e-9);
        let upper = Cell::open_2d("up", Cell::interval("t", None, None), Bound::Const(0.0), Bound::PosInf, 0.0);
        assert_eq!(upper.distance(&[0.3, 2.0]), 0.0);
        assert!((upper.distance(&[0.3, -2.0]) - 2.0).abs() < 1e-9);
        let iv = Cell::interval("i", Some(0.0), Some(1.0));
        assert_eq!(iv.distance(&[3.0]), 2.0);
        assert!(iv.contains(&[0.5]) && !iv.contains(&[1.0]));
    }

    #[test]
    fn permuted_cells_swap_axes() {
        // The vertical line x = 0 as a graph over the y axis.
        let zero: FieldRef = Arc::new(Constant { n: 1, c: 0.0 });
        let vertical = Cell::graph_2d("v", Cell::interval("t", None, None), zero, 0.0).with_perm(vec![1, 0]);
        assert!(vertical.contains(&[0.0, 5.0]));
        assert!(!vertical.contains(&[5.0, 0.0]));
        assert!((vertical.distance(&[2.0, 7.0]) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn envelope_examples() {
        let zero: FieldRef = Arc::new(Constant { n: 1, c: 0.0 });
        let flat = Cell::graph_2d("flat", Cell::interval("t", None, None), zero, 0.0);
        let r = cell_distance_envelope_check(&flat, &flat, &[0.4, -0.7]).unwrap();
        assert!(r.passed(), "{r}");

        let diag = line_graph(None, None, 1.0);
        let r = cell_distance_envelope_check(&diag, &diag, &[0.0, 1.0]).unwrap();
        assert!(r.passed(), "{r}");

        let ray = line_graph(Some(0.0), None, 1.0);
        let r = cell_distance_envelope_check(&ray, &ray, &[-1.0, 0.0]).unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn graph_compose_examples() {
        let grid = GridSpec::new(BoundingBox::cube(2, 1.0), 40);
        let diag = Arc::new(line_graph(Some(0.0), Some(1.0), 1.0));
        let sum: FieldRef = Arc::new(JetFn::new(2, |x: &[Jet]| x[0].add(&x[1])));
        let (h, r) = graph_compose_g(&diag, sum, 2, &grid).unwrap();
        assert!(r.passed());
        assert!((h.value(&[0.3]) - 0.6).abs() < 1e-15);
        assert!((h.derivative(&[0.3], &crate::jet::MultiIndex::new(vec![1])) - 2.0).abs() < 1e-15);

        let zero: FieldRef = Arc::new(Constant { n: 1, c: 0.0 });
        let flat = Arc::new(Cell::graph_2d("flat", Cell::interval("t", Some(0.0), None), zero, 0.0));
        let w = Arc::new(Segment::half_line(vec![0.0, 0.0], vec![-1.0, 0.0]));
        let abs_w: FieldRef = Arc::new(JetFn::new(2, |x: &[Jet]| x[1].square().sqrt()));
        let (h, _) = graph_compose_g(&flat, abs_w, 1, &grid).unwrap();
        assert_eq!(h.value(&[0.5]), 0.0);
        let dist: FieldRef = Arc::new(crate::oracle::DistanceField { set: w });
        let (h, r) = graph_compose_g(&flat, dist, 2, &grid).unwrap();
        assert!(r.passed());
        assert!((h.value(&[0.25]) - 0.25).abs() < 1e-15);
    }
}
