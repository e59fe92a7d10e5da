//! Regularity certificates `|D^α f(x)| ≤ M d(x, W)^{k-|α|}`, the plateau
//! function, and certificate arithmetic for products, reciprocals,
//! compositions, sums and scalings.
//!
//! Certificates keep one constant per derivative order, `|D^α f| ≤ M_q d^{k-q}`
//! for `|α| = q`; the single constant of the definition is their maximum.
//! Combinator constants come from the Leibniz and Faà di Bruno expansions,
//! so they are sound by construction; [`cert_verify`] checks them independently.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{fd_partial, fd_step, DerivativeKind, FieldRef, ScalarField};
use crate::jet::{binomial, factorial, multi_index_enumerate, Jet};
use crate::oracle::{OracleRef, Point};
use crate::report::CertificateReport;

#[derive(Clone)]
pub struct RegularityCertificate {
    pub w: OracleRef,
    pub k: i32,
    /// `orders[q]` bounds derivatives of order `q` for `1 ≤ q ≤ p`; `orders[0]` is unused.
    pub orders: Vec<f64>,
    /// `A` with `|f| ≤ A d^k`.
    pub sup: Option<f64>,
    /// `a` with `a d^k ≤ |f|`.
    pub lower: Option<f64>,
}

impl std::fmt::Debug for RegularityCertificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegularityCertificate")
            .field("k", &self.k)
            .field("orders", &self.orders)
            .field("sup", &self.sup)
            .field("lower", &self.lower)
            .finish()
    }
}

/// Partial Bell polynomial `B_{n,k}(x_1, …, x_{n-k+1})`; `x[i-1]` holds `x_i`.
pub fn bell(n: usize, k: usize, x: &[f64]) -> f64 {
    let mut table = vec![vec![0.0; k + 1]; n + 1];
    table[0][0] = 1.0;
    for nn in 1..=n {
        for kk in 1..=k.min(nn) {
            let mut acc = 0.0;
            for i in 1..=nn - kk + 1 {
                acc += binomial(nn - 1, i - 1) * x[i - 1] * table[nn - i][kk - 1];
            }
            table[nn][kk] = acc;
        }
    }
    table[n][k]
}

impl RegularityCertificate {
    /// The same constant `m` at every order `1..=p`.
    pub fn uniform(w: OracleRef, k: i32, p: usize, m: f64) -> RegularityCertificate {
        let mut orders = vec![m; p + 1];
        orders[0] = 0.0;
        RegularityCertificate { w, k, orders, sup: None, lower: None }
    }

    pub fn from_orders(w: OracleRef, k: i32, orders: Vec<f64>) -> RegularityCertificate {
        RegularityCertificate { w, k, orders, sup: None, lower: None }
    }

    pub fn with_sup(mut self, a: f64) -> Self {
        self.sup = Some(a);
        self
    }

    pub fn with_lower(mut self, a: f64) -> Self {
        self.lower = Some(a);
        self
    }

    pub fn p(&self) -> usize {
        self.orders.len() - 1
    }

    /// The single constant `M = max_q M_q`.
    pub fn m(&self) -> f64 {
        self.orders[1..].iter().copied().fold(0.0, f64::max)
    }

    fn check_compatible(&self, o: &RegularityCertificate) -> Result<()> {
        if !Arc::ptr_eq(&self.w, &o.w) {
            return Err(Error::CertificateMismatch("different reference sets".into()));
        }
        if self.p() != o.p() {
            return Err(Error::CertificateMismatch(format!("orders {} and {}", self.p(), o.p())));
        }
        Ok(())
    }

    /// Per-order bounds with the sup bound in slot 0.
    fn with_value_slot(&self) -> Result<Vec<f64>> {
        let a = self.sup.ok_or(Error::MissingSupBound)?;
        let mut v = self.orders.clone();
        v[0] = a;
        Ok(v)
    }

    /// Leibniz rule: exponent `k + l`, `M_q = Σ_j C(q, j) F_j G_{q-j}` with `F_0 = A_f`.
    pub fn product(&self, o: &RegularityCertificate) -> Result<RegularityCertificate> {
        self.check_compatible(o)?;
        let f = self.with_value_slot()?;
        let g = o.with_value_slot()?;
        let p = self.p();
        let mut orders = vec![0.0; p + 1];
        for (q, slot) in orders.iter_mut().enumerate().skip(1) {
            *slot = (0..=q).map(|j| binomial(q, j) * f[j] * g[q - j]).sum();
        }
        let lower = match (self.lower, o.lower) {
            (Some(a), Some(b)) => Some(a * b),
            _ => None,
        };
        Ok(RegularityCertificate { w: self.w.clone(), k: self.k + o.k, orders, sup: Some(f[0] * g[0]), lower })
    }

    /// Reciprocal: exponent `-k`, `M_q = Σ_m m! a^{-(m+1)} B_{q,m}(F_1, …)`.
    pub fn reciprocal(&self) -> Result<RegularityCertificate> {
        let a = self.lower.ok_or(Error::MissingLowerBound)?;
        let p = self.p();
        let x = &self.orders[1..];
        let mut orders = vec![0.0; p + 1];
        for (q, slot) in orders.iter_mut().enumerate().skip(1) {
            *slot = (1..=q).map(|m| factorial(m) * a.powi(-(m as i32 + 1)) * bell(q, m, x)).sum();
        }
        Ok(RegularityCertificate {
            w: self.w.clone(),
            k: -self.k,
            orders,
            sup: Some(1.0 / a),
            lower: self.sup.map(|s| 1.0 / s),
        })
    }

    /// `Φ ∘ f` for bounded `f` (exponent 0), given `phi[m] ≥ sup |Φ^{(m)}|` on the range of `f`.
    pub fn compose(&self, phi: &[f64]) -> Result<RegularityCertificate> {
        if self.k != 0 || self.sup.is_none() {
            return Err(Error::UnboundedInner);
        }
        let p = self.p();
        if phi.len() < p + 1 {
            return Err(Error::InvalidInput(format!("need {} derivative bounds of the outer function, got {}", p + 1, phi.len())));
        }
        let x = &self.orders[1..];
        let mut orders = vec![0.0; p + 1];
        for (q, slot) in orders.iter_mut().enumerate().skip(1) {
            *slot = (1..=q).map(|m| phi[m] * bell(q, m, x)).sum();
        }
        Ok(RegularityCertificate { w: self.w.clone(), k: 0, orders, sup: Some(phi[0]), lower: None })
    }

    /// Sum of two functions with the same exponent.
    pub fn sum(&self, o: &RegularityCertificate) -> Result<RegularityCertificate> {
        self.check_compatible(o)?;
        if self.k != o.k {
            return Err(Error::CertificateMismatch(format!("exponents {} and {}", self.k, o.k)));
        }
        let orders = self.orders.iter().zip(&o.orders).map(|(a, b)| a + b).collect();
        let sup = match (self.sup, o.sup) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        Ok(RegularityCertificate { w: self.w.clone(), k: self.k, orders, sup, lower: None })
    }

    /// `c · f`.
    pub fn scale(&self, c: f64) -> RegularityCertificate {
        RegularityCertificate {
            w: self.w.clone(),
            k: self.k,
            orders: self.orders.iter().map(|v| v * c.abs()).collect(),
            sup: self.sup.map(|s| s * c.abs()),
            lower: self.lower.map(|s| s * c.abs()),
        }
    }
}

/// A field with a regularity certificate, defined off `W` (and inside `domain` when given).
#[derive(Clone)]
pub struct RegularFunction {
    pub field: FieldRef,
    pub cert: RegularityCertificate,
    pub domain: Option<Arc<dyn Fn(&[f64]) -> bool + Send + Sync>>,
}

impl RegularFunction {
    pub fn new(field: FieldRef, cert: RegularityCertificate) -> RegularFunction {
        RegularFunction { field, cert, domain: None }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.field.value(x)
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.domain.as_ref().map_or(true, |d| d(x))
    }

    fn intersect_domain(&self, o: &RegularFunction) -> Option<Arc<dyn Fn(&[f64]) -> bool + Send + Sync>> {
        match (&self.domain, &o.domain) {
            (None, None) => None,
            (Some(d), None) | (None, Some(d)) => Some(d.clone()),
            (Some(a), Some(b)) => {
                let (a, b) = (a.clone(), b.clone());
                Some(Arc::new(move |x: &[f64]| a(x) && b(x)))
            }
        }
    }
}

/// A field assembled from other fields by a jet closure.
pub struct Combined {
    n: usize,
    kind: DerivativeKind,
    op: Box<dyn Fn(&[Jet]) -> Jet + Send + Sync>,
}

impl Combined {
    pub fn new(n: usize, parts: &[&FieldRef], op: impl Fn(&[Jet]) -> Jet + Send + Sync + 'static) -> Combined {
        let kind = if parts.iter().all(|f| f.derivative_kind() == DerivativeKind::Exact) {
            DerivativeKind::Exact
        } else {
            DerivativeKind::FiniteDifference
        };
        Combined { n, kind, op: Box::new(op) }
    }
}

impl ScalarField for Combined {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval_jet(&self, x: &[Jet]) -> Jet {
        (self.op)(x)
    }
    fn derivative_kind(&self) -> DerivativeKind {
        self.kind
    }
}

pub fn cert_product(f: &RegularFunction, g: &RegularFunction) -> Result<RegularFunction> {
    let cert = f.cert.product(&g.cert)?;
    let (a, b) = (f.field.clone(), g.field.clone());
    let field = Combined::new(a.dim(), &[&a, &b], {
        let (a, b) = (a.clone(), b.clone());
        move |x: &[Jet]| a.eval_jet(x).mul(&b.eval_jet(x))
    });
    Ok(RegularFunction { field: Arc::new(field), cert, domain: f.intersect_domain(g) })
}

/// `1/f`; probes `points` first and aborts if `|f|` dips below the claimed lower bound.
pub fn cert_reciprocal(f: &RegularFunction, points: &[Point]) -> Result<RegularFunction> {
    let a = f.cert.lower.ok_or(Error::MissingLowerBound)?;
    for x in points {
        let d = f.cert.w.distance(x);
        let claimed = a * d.powi(f.cert.k);
        let observed = f.value(x).abs();
        if observed < claimed * (1.0 - 1e-12) {
            return Err(Error::ZeroDenominatorDetected { point: x.clone(), observed, claimed });
        }
    }
    let cert = f.cert.reciprocal()?;
    let inner = f.field.clone();
    let field = Combined::new(inner.dim(), &[&inner], {
        let inner = inner.clone();
        move |x: &[Jet]| inner.eval_jet(x).recip()
    });
    Ok(RegularFunction { field: Arc::new(field), cert, domain: f.domain.clone() })
}

/// `Φ ∘ f` with derivative bounds of `Φ` probed on `range`.
pub fn cert_compose(phi: &FieldRef, f: &RegularFunction, range: (f64, f64)) -> Result<RegularFunction> {
    if f.cert.k != 0 || f.cert.sup.is_none() {
        return Err(Error::UnboundedInner);
    }
    let bounds = probe_derivative_bounds(phi.as_ref(), range, f.cert.p());
    let cert = f.cert.compose(&bounds)?;
    let inner = f.field.clone();
    let outer = phi.clone();
    let field = Combined::new(inner.dim(), &[&inner, &outer], {
        let (inner, outer) = (inner.clone(), outer.clone());
        move |x: &[Jet]| outer.eval_jet(&[inner.eval_jet(x)])
    });
    Ok(RegularFunction { field: Arc::new(field), cert, domain: f.domain.clone() })
}

/// `sup |Φ^{(m)}|` on `range` for `m = 0..=p`, from a dense probe with a 1% allowance.
pub fn probe_derivative_bounds(phi: &dyn ScalarField, range: (f64, f64), p: usize) -> Vec<f64> {
    let samples = 4001;
    let mut out = vec![0.0_f64; p + 1];
    for i in 0..samples {
        let t = range.0 + (range.1 - range.0) * i as f64 / (samples - 1) as f64;
        let j = phi.jet_at(&[t], p);
        for (m, slot) in out.iter_mut().enumerate() {
            *slot = slot.max(j.coeffs()[m].abs() * factorial(m));
        }
    }
    out.iter().map(|v| v * 1.01).collect()
}

/// How `cert_verify` obtains derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    FiniteDifference,
    Exact,
}

/// Compares `|D^α f(x)|` against `M_q d(x, W)^{k-q}` for `1 ≤ |α| ≤ p` at every point,
/// and the sup and lower bounds when present.
pub fn cert_verify(rf: &RegularFunction, points: &[Point], probe: Probe) -> Result<CertificateReport> {
    let cert = &rf.cert;
    let n = rf.field.dim();
    let alphas: Vec<_> = multi_index_enumerate(n, cert.p()).into_iter().filter(|a| a.order() >= 1).collect();
    let rows: Vec<Result<Vec<(Point, String, f64, f64, f64)>>> = points
        .par_iter()
        .filter(|x| rf.in_domain(x))
        .map(|x| {
            let d = cert.w.distance(x);
            let mut out = Vec::new();
            let jet = match probe {
                Probe::Exact => Some(rf.field.jet_at(x, cert.p())),
                Probe::FiniteDifference => None,
            };
            for alpha in &alphas {
                let q = alpha.order();
                let observed = match &jet {
                    Some(j) => j.derivative(alpha).unwrap().abs(),
                    None => fd_partial(rf.field.as_ref(), x, alpha, fd_step(d))?.abs(),
                };
                let claimed = cert.orders[q] * d.powi(cert.k - q as i32);
                // Finite differences carry O(step²) relative error.
                let margin = match probe {
                    Probe::Exact => 1e-9 * claimed,
                    Probe::FiniteDifference => 1e-4 * claimed + 1e-7 * d.powi(cert.k - q as i32),
                };
                out.push((x.clone(), format!("order {q}"), claimed, observed, margin));
            }
            let v = rf.value(x).abs();
            if let Some(a) = cert.sup {
                out.push((x.clone(), "sup".into(), a * d.powi(cert.k), v, 1e-12 * a * d.powi(cert.k)));
            }
            if let Some(a) = cert.lower {
                // Stored negated so that `observed ≤ claimed` reads `a d^k ≤ |f|`.
                out.push((x.clone(), "lower".into(), -a * d.powi(cert.k), -v, 1e-12 * a * d.powi(cert.k)));
            }
            Ok(out)
        })
        .collect();
    let mut report = CertificateReport::new();
    for r in rows {
        for (x, check, claimed, observed, margin) in r? {
            report.check_le("cert_verify", &check, &x, claimed, observed, margin);
        }
    }
    Ok(report)
}

/// The plateau function: `1` on `(-∞, 1/3]`, `0` on `[2/3, ∞)`, and the reversed
/// Hermite smoothstep of degree `2p+1` in between.
pub struct SmoothStep {
    p: usize,
    /// Coefficients of the smoothstep `S(s)` in powers of `s`.
    s_coeffs: Vec<f64>,
}

pub fn smoothstep_p(p: usize) -> SmoothStep {
    assert!(p >= 1, "plateau order must be positive");
    let mut s_coeffs = vec![0.0; 2 * p + 2];
    for j in 0..=p {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        s_coeffs[p + 1 + j] = sign * binomial(p + j, j) * binomial(2 * p + 1, p - j);
    }
    SmoothStep { p, s_coeffs }
}

impl SmoothStep {
    pub fn order(&self) -> usize {
        self.p
    }

    /// `P^{(k)}(t)` for `k = 0..=order`.
    pub fn derivatives(&self, t: f64, order: usize) -> Vec<f64> {
        let mut out = vec![0.0; order + 1];
        if t <= 1.0 / 3.0 {
            out[0] = 1.0;
            return out;
        }
        if t >= 2.0 / 3.0 {
            return out;
        }
        let s = 3.0 * t - 1.0;
        let mut c = self.s_coeffs.clone();
        let mut chain = 1.0;
        for (k, slot) in out.iter_mut().enumerate() {
            let v = c.iter().rev().fold(0.0, |acc, a| acc * s + a);
            *slot = if k == 0 { 1.0 - v } else { -chain * v };
            c = c.iter().enumerate().skip(1).map(|(i, a)| a * i as f64).collect();
            if c.is_empty() {
                c.push(0.0);
            }
            chain *= 3.0;
        }
        out
    }
}

impl ScalarField for SmoothStep {
    fn dim(&self) -> usize {
        1
    }
    fn eval_jet(&self, x: &[Jet]) -> Jet {
        let p = x[0].space().p();
        x[0].compose_univariate(&self.derivatives(x[0].value(), p))
    }
}
