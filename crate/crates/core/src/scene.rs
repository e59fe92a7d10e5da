//! Scene files: a line-oriented format with `[w]`, `[stratum <id>]`, `[params]` and
//! `[grid]` sections holding `key = value` entries.
//!
//! ```text
//! [w]
//! point = 0
//!
//! [stratum left]
//! kind = interval
//! hi = 0
//!
//! [stratum right]
//! kind = interval
//! lo = 0
//!
//! [params]
//! dim = 1
//! p = 2
//! kappa = 0.1
//!
//! [grid]
//! lo = -2
//! hi = 2
//! resolution = 401
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::cells::{Bound, Cell};
use crate::error::{Error, Result};
use crate::field::{FieldRef, Polynomial};
use crate::grid::{BoundingBox, GridSpec};
use crate::oracle::{Circle, DistanceField, OracleRef, Point, PointCloud, PointSet, PolyGraph, Segment, Union};
use crate::strat::Stratification;

/// One piece of `W`.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Point(Point),
    Segment(Point, Point),
    Polyline(Vec<Point>),
    Circle { center: Point, radius: f64 },
    HalfLine { origin: Point, direction: Point },
    /// Graph `y = q(x)` of a polynomial, coefficients by ascending degree.
    Graph(Vec<f64>),
    /// Points read from a file, one comma-separated point per line.
    Cloud { path: String, covering_radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundDecl {
    NegInf,
    PosInf,
    /// Polynomial in the base coordinate, ascending degree.
    Poly(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StratumKind {
    Interval { lo: Option<f64>, hi: Option<f64> },
    Point(Point),
    Open { base: (Option<f64>, Option<f64>), lower: BoundDecl, upper: BoundDecl },
    Graph { base: (Option<f64>, Option<f64>), map: Vec<f64> },
    /// `{q > 0}` for `q` in graded coefficient order; its boundary is taken to be `W`.
    Region { q: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumDecl {
    pub id: String,
    pub kind: StratumKind,
    pub perm: Option<Vec<usize>>,
    pub lipschitz: f64,
}

/// The Lipschitz function approximated by the `approx` run.
#[derive(Debug, Clone, PartialEq)]
pub enum GDecl {
    Distance,
    Polynomial { coeffs: Vec<f64>, lipschitz: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub p: usize,
    pub kappa: f64,
    pub eta: Option<f64>,
    pub t_list: Vec<f64>,
    pub seed: Option<u64>,
    pub g: GDecl,
    /// Sets of the partition, each a list of stratum ids.
    pub covering: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDecl {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
    pub refine: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dim: usize,
    pub w: Vec<Primitive>,
    pub strata: Vec<StratumDecl>,
    pub params: Params,
    pub grid: GridDecl,
}

#[derive(Clone, Copy)]
struct Pos {
    line: usize,
    column: usize,
}

fn syntax(pos: Pos, message: impl Into<String>) -> Error {
    Error::SyntaxError { line: pos.line, column: pos.column, message: message.into() }
}

fn semantic(message: impl Into<String>) -> Error {
    Error::SemanticError(message.into())
}

struct Entry {
    key: String,
    value: String,
    pos: Pos,
}

impl Entry {
    fn number(&self) -> Result<f64> {
        parse_number(self.value.trim(), self.pos)
    }

    fn numbers(&self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        let mut col = self.pos.column;
        for part in self.value.split(',') {
            let lead = part.len() - part.trim_start().len();
            out.push(parse_number(part.trim(), Pos { line: self.pos.line, column: col + lead })?);
            col += part.len() + 1;
        }
        Ok(out)
    }

    fn integer(&self) -> Result<u64> {
        self.value.trim().parse().map_err(|_| syntax(self.pos, format!("expected an integer, found `{}`", self.value.trim())))
    }

    fn bound(&self) -> Result<BoundDecl> {
        match self.value.trim() {
            "-inf" => Ok(BoundDecl::NegInf),
            "inf" | "+inf" => Ok(BoundDecl::PosInf),
            _ => Ok(BoundDecl::Poly(self.numbers()?)),
        }
    }

    fn optional(&self) -> Result<Option<f64>> {
        match self.value.trim() {
            "-inf" | "inf" | "+inf" => Ok(None),
            _ => self.number().map(Some),
        }
    }
}

fn parse_number(s: &str, pos: Pos) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(syntax(pos, format!("expected a finite number, found `{s}`"))),
    }
}

struct Section {
    name: String,
    arg: Option<String>,
    pos: Pos,
    entries: Vec<Entry>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn require(&self, key: &str) -> Result<&Entry> {
        self.get(key).ok_or_else(|| semantic(format!("section [{}] (line {}) is missing `{key}`", self.name, self.pos.line)))
    }

    fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
            Some(e) => Err(semantic(format!("unknown key `{}` in [{}] at line {}", e.key, self.name, e.pos.line))),
            None => Ok(()),
        }
    }
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("");
        let trimmed = body.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = body.len() - body.trim_start().len();
        let pos = Pos { line, column: indent + 1 };
        if let Some(rest) = trimmed.strip_prefix('[') {
            let inner = rest.strip_suffix(']').ok_or_else(|| syntax(pos, "section header must end with `]`"))?;
            let mut words = inner.split_whitespace();
            let name = words.next().ok_or_else(|| syntax(pos, "empty section header"))?.to_string();
            let arg = words.next().map(str::to_string);
            if words.next().is_some() {
                return Err(syntax(pos, "section header takes at most one argument"));
            }
            sections.push(Section { name, arg, pos, entries: Vec::new() });
            continue;
        }
        let eq = body.find('=').ok_or_else(|| syntax(pos, "expected `key = value`"))?;
        let key = body[..eq].trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(syntax(pos, format!("invalid key `{key}`")));
        }
        let value = &body[eq + 1..];
        let lead = value.len() - value.trim_start().len();
        let entry = Entry { key: key.to_string(), value: value.trim().to_string(), pos: Pos { line, column: eq + 2 + lead } };
        match sections.last_mut() {
            Some(s) => {
                if s.get(key).is_some() && s.name != "w" {
                    return Err(syntax(pos, format!("duplicate key `{key}`")));
                }
                s.entries.push(entry)
            }
            None => return Err(syntax(pos, "entry before any section header")),
        }
    }
    Ok(sections)
}

fn points(values: &[f64], dim: usize, what: &str) -> Result<Vec<Point>> {
    if values.is_empty() || values.len() % dim != 0 {
        return Err(semantic(format!("{what} needs a multiple of {dim} coordinates, got {}", values.len())));
    }
    Ok(values.chunks(dim).map(<[f64]>::to_vec).collect())
}

fn one_point(values: &[f64], dim: usize, what: &str) -> Result<Point> {
    if values.len() != dim {
        return Err(semantic(format!("{what} needs {dim} coordinates, got {}", values.len())));
    }
    Ok(values.to_vec())
}

fn parse_primitive(e: &Entry, dim: usize) -> Result<Primitive> {
    match e.key.as_str() {
        "point" => Ok(Primitive::Point(one_point(&e.numbers()?, dim, "point")?)),
        "segment" => {
            let p = points(&e.numbers()?, dim, "segment")?;
            if p.len() != 2 {
                return Err(semantic("segment needs two endpoints"));
            }
            Ok(Primitive::Segment(p[0].clone(), p[1].clone()))
        }
        "polyline" => {
            let p = points(&e.numbers()?, dim, "polyline")?;
            if p.len() < 2 {
                return Err(semantic("polyline needs at least two vertices"));
            }
            Ok(Primitive::Polyline(p))
        }
        "circle" => {
            let v = e.numbers()?;
            if dim != 2 || v.len() != 3 || !(v[2] > 0.0) {
                return Err(semantic("circle is `cx, cy, r` with r > 0 in the plane"));
            }
            Ok(Primitive::Circle { center: v[..2].to_vec(), radius: v[2] })
        }
        "half_line" => {
            let p = points(&e.numbers()?, dim, "half_line")?;
            if p.len() != 2 || p[1].iter().all(|v| *v == 0.0) {
                return Err(semantic("half_line needs an origin and a non-zero direction"));
            }
            Ok(Primitive::HalfLine { origin: p[0].clone(), direction: p[1].clone() })
        }
        "graph" => {
            if dim != 2 {
                return Err(semantic("graph primitives live in the plane"));
            }
            Ok(Primitive::Graph(e.numbers()?))
        }
        "cloud" => {
            let (path, cr) = e.value.rsplit_once(',').ok_or_else(|| syntax(e.pos, "cloud is `path, covering_radius`"))?;
            let cr = parse_number(cr.trim(), Pos { line: e.pos.line, column: e.pos.column + path.len() + 1 })?;
            Ok(Primitive::Cloud { path: path.trim().to_string(), covering_radius: cr })
        }
        other => Err(semantic(format!("unknown primitive `{other}` at line {}", e.pos.line))),
    }
}

fn base_of(sec: &Section) -> Result<(Option<f64>, Option<f64>)> {
    Ok((sec.get("base_lo").map(Entry::optional).transpose()?.flatten(), sec.get("base_hi").map(Entry::optional).transpose()?.flatten()))
}

fn parse_stratum(sec: &Section, dim: usize) -> Result<StratumDecl> {
    let id = sec.arg.clone().ok_or_else(|| syntax(sec.pos, "stratum section needs an id: `[stratum <id>]`"))?;
    let kind_entry = sec.require("kind")?;
    let common = ["kind", "perm", "lipschitz"];
    let allow = |extra: &[&str]| -> Result<()> {
        let all: Vec<&str> = common.iter().chain(extra).copied().collect();
        sec.only(&all)
    };
    let kind = match kind_entry.value.trim() {
        "interval" => {
            allow(&["lo", "hi"])?;
            if dim != 1 {
                return Err(semantic(format!("interval stratum {id} needs dim = 1")));
            }
            StratumKind::Interval {
                lo: sec.get("lo").map(Entry::optional).transpose()?.flatten(),
                hi: sec.get("hi").map(Entry::optional).transpose()?.flatten(),
            }
        }
        "point" => {
            allow(&["at"])?;
            StratumKind::Point(one_point(&sec.require("at")?.numbers()?, dim, "point stratum")?)
        }
        "open" => {
            allow(&["base_lo", "base_hi", "lower", "upper"])?;
            if dim != 2 {
                return Err(semantic(format!("open stratum {id} needs dim = 2; use `interval` on the line")));
            }
            StratumKind::Open { base: base_of(sec)?, lower: sec.require("lower")?.bound()?, upper: sec.require("upper")?.bound()? }
        }
        "graph" => {
            allow(&["base_lo", "base_hi", "map"])?;
            if dim != 2 {
                return Err(semantic(format!("graph stratum {id} needs dim = 2")));
            }
            StratumKind::Graph { base: base_of(sec)?, map: sec.require("map")?.numbers()? }
        }
        "region" => {
            allow(&["q"])?;
            StratumKind::Region { q: sec.require("q")?.numbers()? }
        }
        other => return Err(semantic(format!("unknown stratum kind `{other}` at line {}", kind_entry.pos.line))),
    };
    let perm = match sec.get("perm") {
        Some(e) => {
            let v: Vec<usize> = e.numbers()?.iter().map(|x| *x as usize).collect();
            let mut sorted = v.clone();
            sorted.sort_unstable();
            if sorted != (0..dim).collect::<Vec<_>>() {
                return Err(semantic(format!("perm of stratum {id} is not a permutation of 0..{dim}")));
            }
            Some(v)
        }
        None => None,
    };
    let lipschitz = sec.get("lipschitz").map(Entry::number).transpose()?.unwrap_or(0.0);
    if lipschitz < 0.0 {
        return Err(semantic(format!("lipschitz of stratum {id} is negative")));
    }
    Ok(StratumDecl { id, kind, perm, lipschitz })
}

fn parse_params(sec: &Section) -> Result<(usize, Params)> {
    sec.only(&["dim", "p", "kappa", "eta", "t_list", "seed", "g", "g_coeffs", "g_lipschitz", "covering"])?;
    let dim = sec.require("dim")?.integer()? as usize;
    if !(1..=2).contains(&dim) {
        return Err(semantic(format!("dim must be 1 or 2, got {dim}")));
    }
    let p = sec.require("p")?.integer()? as usize;
    if p < 1 {
        return Err(semantic("p must be at least 1"));
    }
    let kappa = sec.require("kappa")?.number()?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(semantic("kappa out of range (0, 1)"));
    }
    let eta = sec.get("eta").map(Entry::number).transpose()?;
    if eta.is_some_and(|e| !(e > 0.0)) {
        return Err(semantic("eta must be positive"));
    }
    let t_list = sec.get("t_list").map(Entry::numbers).transpose()?.unwrap_or_default();
    if t_list.iter().any(|t| !(*t > 0.0)) || t_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(semantic("t_list must be positive and strictly decreasing"));
    }
    let seed = sec.get("seed").map(Entry::integer).transpose()?;
    let g = match sec.get("g").map(|e| e.value.trim()) {
        None | Some("distance") => GDecl::Distance,
        Some("polynomial") => GDecl::Polynomial {
            coeffs: sec.require("g_coeffs")?.numbers()?,
            lipschitz: sec.require("g_lipschitz")?.number()?,
        },
        Some(other) => return Err(semantic(format!("unknown g `{other}`"))),
    };
    let covering = sec.get("covering").map(|e| {
        e.value.split(';').map(|set| set.split('+').map(|id| id.trim().to_string()).filter(|s| !s.is_empty()).collect()).collect()
    });
    Ok((dim, Params { p, kappa, eta, t_list, seed, g, covering }))
}

fn parse_grid(sec: &Section, dim: usize) -> Result<GridDecl> {
    sec.only(&["lo", "hi", "resolution", "refine"])?;
    let lo = sec.require("lo")?.numbers()?;
    let hi = sec.require("hi")?.numbers()?;
    if lo.len() != dim || hi.len() != dim {
        return Err(semantic(format!("grid lo and hi need {dim} coordinates")));
    }
    if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
        return Err(semantic("grid lo must be below hi"));
    }
    let resolution = sec.require("resolution")?.integer()? as usize;
    if resolution < 2 {
        return Err(semantic("grid resolution must be at least 2"));
    }
    let refine = sec.get("refine").map(Entry::integer).transpose()?.unwrap_or(1) as usize;
    Ok(GridDecl { lo, hi, resolution, refine })
}

/// Parses and validates a scene.
pub fn parse_scene(text: &str) -> Result<Scene> {
    let sections = split_sections(text)?;
    let find = |name: &str| -> Result<&Section> {
        let mut it = sections.iter().filter(|s| s.name == name);
        let first = it.next().ok_or_else(|| semantic(format!("missing [{name}] section")))?;
        if let Some(dup) = it.next() {
            return Err(syntax(dup.pos, format!("duplicate [{name}] section")));
        }
        Ok(first)
    };
    if let Some(s) = sections.iter().find(|s| !["w", "stratum", "params", "grid"].contains(&s.name.as_str())) {
        return Err(semantic(format!("unknown section [{}] at line {}", s.name, s.pos.line)));
    }
    let (dim, params) = parse_params(find("params")?)?;
    let w_sec = find("w")?;
    if w_sec.entries.is_empty() {
        return Err(semantic("[w] declares no primitives"));
    }
    let w = w_sec.entries.iter().map(|e| parse_primitive(e, dim)).collect::<Result<Vec<_>>>()?;
    let mut strata: Vec<StratumDecl> = Vec::new();
    for sec in sections.iter().filter(|s| s.name == "stratum") {
        let decl = parse_stratum(sec, dim)?;
        if strata.iter().any(|s| s.id == decl.id) {
            return Err(semantic(format!("duplicate stratum id `{}`", decl.id)));
        }
        strata.push(decl);
    }
    if strata.is_empty() {
        return Err(semantic("no strata declared"));
    }
    if let Some(cov) = &params.covering {
        for id in cov.iter().flatten() {
            if !strata.iter().any(|s| &s.id == id) {
                return Err(semantic(format!("covering references unknown stratum `{id}`")));
            }
        }
        if cov.iter().any(Vec::is_empty) {
            return Err(semantic("covering has an empty set"));
        }
    }
    let grid = parse_grid(find("grid")?, dim)?;
    Ok(Scene { dim, w, strata, params, grid })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn opt(v: Option<f64>, inf: &str) -> String {
    v.map_or(inf.to_string(), |x| format!("{x:?}"))
}

fn bound_text(b: &BoundDecl) -> String {
    match b {
        BoundDecl::NegInf => "-inf".into(),
        BoundDecl::PosInf => "inf".into(),
        BoundDecl::Poly(c) => join(c),
    }
}

impl Scene {
    /// Normalized text that parses back to an equal scene.
    pub fn dump(&self) -> String {
        let mut out = String::from("[w]\n");
        for prim in &self.w {
            let line = match prim {
                Primitive::Point(p) => format!("point = {}", join(p)),
                Primitive::Segment(a, b) => format!("segment = {}, {}", join(a), join(b)),
                Primitive::Polyline(ps) => format!("polyline = {}", join(&ps.concat())),
                Primitive::Circle { center, radius } => format!("circle = {}, {radius:?}", join(center)),
                Primitive::HalfLine { origin, direction } => format!("half_line = {}, {}", join(origin), join(direction)),
                Primitive::Graph(c) => format!("graph = {}", join(c)),
                Primitive::Cloud { path, covering_radius } => format!("cloud = {path}, {covering_radius:?}"),
            };
            let _ = writeln!(out, "{line}");
        }
        for s in &self.strata {
            let _ = writeln!(out, "\n[stratum {}]", s.id);
            match &s.kind {
                StratumKind::Interval { lo, hi } => {
                    let _ = writeln!(out, "kind = interval\nlo = {}\nhi = {}", opt(*lo, "-inf"), opt(*hi, "inf"));
                }
                StratumKind::Point(p) => {
                    let _ = writeln!(out, "kind = point\nat = {}", join(p));
                }
                StratumKind::Open { base, lower, upper } => {
                    let _ = writeln!(
                        out,
                        "kind = open\nbase_lo = {}\nbase_hi = {}\nlower = {}\nupper = {}",
                        opt(base.0, "-inf"),
                        opt(base.1, "inf"),
                        bound_text(lower),
                        bound_text(upper)
                    );
                }
                StratumKind::Graph { base, map } => {
                    let _ = writeln!(out, "kind = graph\nbase_lo = {}\nbase_hi = {}\nmap = {}", opt(base.0, "-inf"), opt(base.1, "inf"), join(map));
                }
                StratumKind::Region { q } => {
                    let _ = writeln!(out, "kind = region\nq = {}", join(q));
                }
            }
            if let Some(perm) = &s.perm {
                let _ = writeln!(out, "perm = {}", perm.iter().map(usize::to_string).collect::<Vec<_>>().join(", "));
            }
            let _ = writeln!(out, "lipschitz = {:?}", s.lipschitz);
        }
        let p = &self.params;
        let _ = writeln!(out, "\n[params]\ndim = {}\np = {}\nkappa = {:?}", self.dim, p.p, p.kappa);
        if let Some(eta) = p.eta {
            let _ = writeln!(out, "eta = {eta:?}");
        }
        if !p.t_list.is_empty() {
            let _ = writeln!(out, "t_list = {}", join(&p.t_list));
        }
        if let Some(seed) = p.seed {
            let _ = writeln!(out, "seed = {seed}");
        }
        match &p.g {
            GDecl::Distance => {
                let _ = writeln!(out, "g = distance");
            }
            GDecl::Polynomial { coeffs, lipschitz } => {
                let _ = writeln!(out, "g = polynomial\ng_coeffs = {}\ng_lipschitz = {lipschitz:?}", join(coeffs));
            }
        }
        if let Some(cov) = &p.covering {
            let sets: Vec<String> = cov.iter().map(|s| s.join(" + ")).collect();
            let _ = writeln!(out, "covering = {}", sets.join("; "));
        }
        let g = &self.grid;
        let _ = writeln!(out, "\n[grid]\nlo = {}\nhi = {}\nresolution = {}\nrefine = {}", join(&g.lo), join(&g.hi), g.resolution, g.refine);
        out
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(self.grid.lo.clone(), self.grid.hi.clone())
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.bbox(), self.grid.resolution).with_seed(self.params.seed)
    }

    /// The set `W`; cloud paths are resolved against `base_dir`.
    pub fn build_w(&self, base_dir: &Path) -> Result<OracleRef> {
        let n = self.dim;
        let mut parts: Vec<OracleRef> = Vec::new();
        for prim in &self.w {
            match prim {
                Primitive::Point(p) => parts.push(Arc::new(PointSet { z: p.clone() })),
                Primitive::Segment(a, b) => parts.push(Arc::new(Segment::new(a.clone(), b.clone()))),
                Primitive::Polyline(ps) => {
                    for pair in ps.windows(2) {
                        parts.push(Arc::new(Segment::new(pair[0].clone(), pair[1].clone())));
                    }
                }
                Primitive::Circle { center, radius } => parts.push(Arc::new(Circle { c: center.clone(), r: *radius })),
                Primitive::HalfLine { origin, direction } => parts.push(Arc::new(Segment::half_line(origin.clone(), direction.clone()))),
                Primitive::Graph(c) => parts.push(Arc::new(PolyGraph {
                    q: Polynomial::from_graded_coeffs(1, c)?,
                    lo: f64::NEG_INFINITY,
                    hi: f64::INFINITY,
                })),
                Primitive::Cloud { path, covering_radius } => {
                    let text = std::fs::read_to_string(base_dir.join(path))?;
                    let mut pts = Vec::new();
                    for (k, line) in text.lines().enumerate() {
                        let line = line.trim();
                        if line.is_empty() || line.starts_with('#') {
                            continue;
                        }
                        let entry = Entry { key: String::new(), value: line.to_string(), pos: Pos { line: k + 1, column: 1 } };
                        pts.push(one_point(&entry.numbers()?, n, "cloud point")?);
                    }
                    if pts.is_empty() {
                        return Err(Error::EmptySet);
                    }
                    parts.push(Arc::new(PointCloud::new(n, pts, *covering_radius)));
                }
            }
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Arc::new(Union { n, parts }) })
    }

    /// The validated-order stratification of the complement of `W`.
    pub fn build(&self, base_dir: &Path) -> Result<Stratification> {
        let w = self.build_w(base_dir)?;
        let interval = |id: &str, (lo, hi): (Option<f64>, Option<f64>)| Cell::interval(id, lo, hi);
        let bound = |b: &BoundDecl| -> Result<Bound> {
            Ok(match b {
                BoundDecl::NegInf => Bound::NegInf,
                BoundDecl::PosInf => Bound::PosInf,
                BoundDecl::Poly(c) if c.len() == 1 => Bound::Const(c[0]),
                BoundDecl::Poly(c) => Bound::Field(Arc::new(Polynomial::from_graded_coeffs(1, c)?)),
            })
        };
        let mut cells = Vec::with_capacity(self.strata.len());
        for s in &self.strata {
            let cell = match &s.kind {
                StratumKind::Interval { lo, hi } => Cell::interval(&s.id, *lo, *hi),
                StratumKind::Point(p) => Cell::point(&s.id, p.clone()),
                StratumKind::Open { base, lower, upper } => {
                    Cell::open_2d(&s.id, interval(&format!("{}.base", s.id), *base), bound(lower)?, bound(upper)?, s.lipschitz)
                }
                StratumKind::Graph { base, map } => {
                    let map: FieldRef = Arc::new(Polynomial::from_graded_coeffs(1, map)?);
                    Cell::graph_2d(&s.id, interval(&format!("{}.base", s.id), *base), map, s.lipschitz)
                }
                StratumKind::Region { q } => Cell::region(&s.id, Polynomial::from_graded_coeffs(self.dim, q)?, w.clone()),
            };
            cells.push(match &s.perm {
                Some(p) => cell.with_perm(p.clone()),
                None => cell,
            });
        }
        Stratification::new(w, cells, self.bbox())
    }

    /// The function for `approx` runs and its Lipschitz constant.
    pub fn g(&self, s: &Stratification) -> Result<(FieldRef, f64)> {
        Ok(match &self.params.g {
            GDecl::Distance => (Arc::new(DistanceField { set: s.w.clone() }), 1.0),
            GDecl::Polynomial { coeffs, lipschitz } => (Arc::new(Polynomial::from_graded_coeffs(self.dim, coeffs)?), *lipschitz),
        })
    }

    /// The declared covering as stratum indices of `s`; one set per stratum by default.
    pub fn covering(&self, s: &Stratification) -> Result<Vec<Vec<usize>>> {
        match &self.params.covering {
            None => Ok((0..s.len()).map(|i| vec![i]).collect()),
            Some(sets) => sets
                .iter()
                .map(|set| {
                    set.iter().map(|id| s.index_of(id).ok_or_else(|| semantic(format!("covering references unknown stratum `{id}`")))).collect()
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_RAYS: &str = "\
# W = {0} on the line
[w]
point = 0

[stratum left]
kind = interval
hi = 0

[stratum right]
kind = interval
lo = 0

[params]
dim = 1
p = 2
kappa = 0.1

[grid]
lo = -2
hi = 2
resolution = 401
";

    const HALF_LINE: &str = "\
[w]
half_line = 0, 0, -1, 0

[stratum axis]
kind = graph
base_lo = 0
map = 0

[stratum upper]
kind = open
lower = 0
upper = inf

[stratum lower]
kind = open
lower = -inf
upper = 0

[params]
dim = 2
p = 2
kappa = 0.1
t_list = 0.2, 0.1

[grid]
lo = -1, -1
hi = 1, 1
resolution = 41
";

    #[test]
    fn two_rays() {
        let scene = parse_scene(TWO_RAYS).unwrap();
        assert_eq!(scene.dim, 1);
        assert_eq!(scene.w, vec![Primitive::Point(vec![0.0])]);
        assert_eq!(scene.strata.len(), 2);
        let s = scene.build(Path::new(".")).unwrap();
        assert!(s.strata.iter().all(|c| c.is_open()));
    }

    #[test]
    fn half_line_has_one_graph_cell() {
        let scene = parse_scene(HALF_LINE).unwrap();
        let graphs = scene.strata.iter().filter(|s| matches!(s.kind, StratumKind::Graph { .. })).count();
        assert_eq!(graphs, 1);
        let s = scene.build(Path::new(".")).unwrap();
        assert_eq!(s.strata.iter().filter(|c| c.is_open()).count(), 2);
        assert_eq!(s.strata[0].dim(), 1);
    }

    #[test]
    fn kappa_out_of_range() {
        let text = TWO_RAYS.replace("kappa = 0.1", "kappa = 1.5");
        match parse_scene(&text) {
            Err(Error::SemanticError(m)) => assert!(m.contains("kappa out of range")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let text = TWO_RAYS.replace("lo = 0", "lo = zero");
        match parse_scene(&text) {
            Err(Error::SyntaxError { line, column, .. }) => assert_eq!((line, column), (11, 6)),
            other => panic!("{other:?}"),
        }
        match parse_scene("[w]\npoint 0\n") {
            Err(Error::SyntaxError { line: 2, column: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_scene(&TWO_RAYS.replace("lo = -2\n", "lo = -2\nhi = 3, x\n")) {
            Err(Error::SyntaxError { message, .. }) => assert!(message.contains("duplicate") || message.contains("number")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors() {
        assert!(matches!(parse_scene(&TWO_RAYS.replace("point = 0", "blob = 0")), Err(Error::SemanticError(_))));
        let dangling = TWO_RAYS.replace("kappa = 0.1", "kappa = 0.1\ncovering = left; middle");
        assert!(matches!(parse_scene(&dangling), Err(Error::SemanticError(m)) if m.contains("middle")));
        let dup = TWO_RAYS.replace("[stratum right]", "[stratum left]");
        assert!(matches!(parse_scene(&dup), Err(Error::SemanticError(_))));
    }

    #[test]
    fn dump_round_trips() {
        for text in [TWO_RAYS, HALF_LINE] {
            let scene = parse_scene(text).unwrap();
            let again = parse_scene(&scene.dump()).unwrap();
            assert_eq!(scene, again);
            assert_eq!(scene.dump(), again.dump());
        }
        let mut scene = parse_scene(HALF_LINE).unwrap();
        scene.params.covering = Some(vec![vec!["axis".into(), "upper".into()], vec!["lower".into()]]);
        scene.params.g = GDecl::Polynomial { coeffs: vec![0.0, 0.5, 0.25], lipschitz: 0.6 };
        scene.params.eta = Some(0.3);
        scene.params.seed = Some(7);
        scene.w.push(Primitive::Circle { center: vec![0.1, 0.2], radius: 1.0 / 3.0 });
        assert_eq!(parse_scene(&scene.dump()).unwrap(), scene);
    }

    #[test]
    fn covering_indices_follow_the_reordered_strata() {
        let text = HALF_LINE.replace("kappa = 0.1", "kappa = 0.1\ncovering = upper + axis; lower");
        let scene = parse_scene(&text).unwrap();
        let s = scene.build(Path::new(".")).unwrap();
        let cov = scene.covering(&s).unwrap();
        assert_eq!(cov, vec![vec![s.index_of("upper").unwrap(), 0], vec![s.index_of("lower").unwrap()]]);
    }
}
