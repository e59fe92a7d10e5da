//! Evaluable scalar fields and the finite-difference probe.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{binomial, multi_index_enumerate, Jet, JetSpace, MultiIndex};

/// How a field's partial derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeKind {
    Exact,
    FiniteDifference,
}

impl fmt::Display for DerivativeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DerivativeKind::Exact => write!(f, "exact"),
            DerivativeKind::FiniteDifference => write!(f, "finite-difference"),
        }
    }
}

/// A real function on (an open subset of) `ℝⁿ`.
///
/// Fields are evaluated on jets: passing seeded coordinate jets returns the
/// Taylor expansion of the field, passing the jets of some inner map returns
/// the expansion of the composition.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval_jet(&self, x: &[Jet]) -> Jet;

    fn value(&self, x: &[f64]) -> f64 {
        let space = JetSpace::get(x.len(), 0);
        let pts: Vec<Jet> = x.iter().map(|&v| Jet::constant(space, v)).collect();
        self.eval_jet(&pts).value()
    }

    fn in_domain(&self, _x: &[f64]) -> bool {
        true
    }

    fn derivative_kind(&self) -> DerivativeKind {
        DerivativeKind::Exact
    }

    /// `D^α f(x)`; `α = 0` gives the value.
    fn derivative(&self, x: &[f64], alpha: &MultiIndex) -> f64 {
        let jet = self.eval_jet(&Jet::seed(x, alpha.order()));
        jet.derivative(alpha).expect("order within jet")
    }

    /// Full Taylor jet at `x` to order `p`.
    fn jet_at(&self, x: &[f64], p: usize) -> Jet {
        self.eval_jet(&Jet::seed(x, p))
    }
}

pub type FieldRef = Arc<dyn ScalarField>;

/// Finite-difference step used at distance `d_w` from the singular set.
pub fn fd_step(d_w: f64) -> f64 {
    (1e-3 * d_w).max(1e-6)
}

/// Iterated central-difference estimate of `D^α f(x)` with per-axis step `step`.
pub fn fd_partial(f: &dyn ScalarField, x: &[f64], alpha: &MultiIndex, step: f64) -> Result<f64> {
    let n = x.len();
    assert_eq!(alpha.dim(), n, "multi-index dimension mismatch");
    // Build the tensor stencil: per axis k, offsets (a_k/2 - j) h with weights (-1)^j C(a_k, j).
    let mut stencil: Vec<(Vec<f64>, f64)> = vec![(vec![0.0; n], 1.0)];
    for (axis, &a) in alpha.entries().iter().enumerate() {
        if a == 0 {
            continue;
        }
        let a = a as usize;
        let mut next = Vec::with_capacity(stencil.len() * (a + 1));
        for (off, w) in &stencil {
            for j in 0..=a {
                let mut o = off.clone();
                o[axis] += (a as f64 / 2.0 - j as f64) * step;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                next.push((o, w * sign * binomial(a, j)));
            }
        }
        stencil = next;
    }
    let mut acc = 0.0;
    let mut pt = vec![0.0; n];
    for (off, w) in &stencil {
        for k in 0..n {
            pt[k] = x[k] + off[k];
        }
        if !f.in_domain(&pt) {
            return Err(Error::StencilOutsideDomain { point: pt.clone() });
        }
        acc += w * f.value(&pt);
    }
    Ok(acc / step.powi(alpha.order() as i32))
}

/// A constant field.
pub struct Constant {
    pub n: usize,
    pub c: f64,
}

impl ScalarField for Constant {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval_jet(&self, x: &[Jet]) -> Jet {
        x[0].lift(self.c)
    }
}

/// The coordinate projection `x ↦ x_axis`.
pub struct Coordinate {
    pub n: usize,
    pub axis: usize,
}

impl ScalarField for Coordinate {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval_jet(&self, x: &[Jet]) -> Jet {
        x[self.axis].clone()
    }
}

/// A polynomial with coefficients in graded lexicographic monomial order.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: Vec<(MultiIndex, f64)>,
}

impl Polynomial {
    /// Builds from a coefficient list whose length must be `C(nvars + deg, deg)`.
    pub fn from_graded_coeffs(nvars: usize, coeffs: &[f64]) -> Result<Polynomial> {
        let mut deg = 0;
        loop {
            let count = binomial(nvars + deg, deg) as usize;
            if count == coeffs.len() {
                break;
            }
            if count > coeffs.len() {
                return Err(Error::InvalidInput(format!(
                    "{} coefficients do not fill a complete graded basis in {} variable(s)",
                    coeffs.len(),
                    nvars
                )));
            }
            deg += 1;
        }
        let terms = multi_index_enumerate(nvars, deg).into_iter().zip(coeffs.iter().copied()).collect();
        Ok(Polynomial { nvars, terms })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn coeffs(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.1).collect()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().filter(|t| t.1 != 0.0).map(|t| t.0.order()).max().unwrap_or(0)
    }

    /// Sum of `|coefficient| · (monomial Lipschitz bound)` on `[-r, r]^n`.
    pub fn lipschitz_on_box(&self, r: f64) -> f64 {
        let mut grad = vec![0.0; self.nvars];
        for (a, c) in &self.terms {
            for (k, g) in grad.iter_mut().enumerate() {
                let e = a.entries()[k];
                if e > 0 {
                    *g += c.abs() * e as f64 * r.powi(a.order() as i32 - 1);
                }
            }
        }
        grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn eval_jets(&self, x: &[Jet]) -> Jet {
        let mut out = x[0].lift(0.0);
        for (a, c) in &self.terms {
            if *c == 0.0 {
                continue;
            }
            let mut m = x[0].lift(*c);
            for (k, &e) in a.entries().iter().enumerate() {
                if e > 0 {
                    m = m.mul(&x[k].powi(e));
                }
            }
            out = out.add(&m);
        }
        out
    }
}

impl ScalarField for Polynomial {
    fn dim(&self) -> usize {
        self.nvars
    }
    fn eval_jet(&self, x: &[Jet]) -> Jet {
        self.eval_jets(x)
    }
}

/// A field built from a jet closure.
pub struct JetFn<F> {
    n: usize,
    f: F,
}

impl<F> JetFn<F>
where
    F: Fn(&[Jet]) -> Jet + Send + Sync,
{
    pub fn new(n: usize, f: F) -> Self {
        JetFn { n, f }
    }
}

impl<F> ScalarField for JetFn<F>
where
    F: Fn(&[Jet]) -> Jet + Send + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }
    fn eval_jet(&self, x: &[Jet]) -> Jet {
        (self.f)(x)
    }
}

/// A value-only field; derivatives come from finite differences.
pub struct SampledFn<F> {
    n: usize,
    f: F,
    step: f64,
}

impl<F> SampledFn<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(n: usize, step: f64, f: F) -> Self {
        SampledFn { n, f, step }
    }
}

impl<F> ScalarField for SampledFn<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn derivative_kind(&self) -> DerivativeKind {
        DerivativeKind::FiniteDifference
    }

    fn eval_jet(&self, x: &[Jet]) -> Jet {
        let p = x[0].space().p();
        let x0: Vec<f64> = x.iter().map(Jet::value).collect();
        let own = JetSpace::get(self.n, p);
        let mut c = vec![0.0; own.len()];
        for (i, alpha) in own.indices().iter().enumerate() {
            c[i] = if alpha.order() == 0 {
                (self.f)(&x0)
            } else {
                fd_partial(self, &x0, alpha, self.step).unwrap_or(f64::NAN) / alpha.factorial()
            };
        }
        Jet::from_coeffs(own, &c).compose(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn fd_on_quadratics_and_bilinear() {
        let sq = JetFn::new(1, |x: &[Jet]| x[0].square());
        let d1 = fd_partial(&sq, &[1.0], &idx(&[1]), 1e-3).unwrap();
        assert!((d1 - 2.0).abs() < 1e-9);
        let d2 = fd_partial(&sq, &[0.0], &idx(&[2]), 1e-3).unwrap();
        assert!((d2 - 2.0).abs() < 1e-6);
        let xy = JetFn::new(2, |x: &[Jet]| x[0].mul(&x[1]));
        let dxy = fd_partial(&xy, &[3.0, 5.0], &idx(&[1, 1]), 1e-3).unwrap();
        assert!((dxy - 1.0).abs() < 1e-7);
    }

    #[test]
    fn fd_reports_stencil_leaving_domain() {
        struct Half;
        impl ScalarField for Half {
            fn dim(&self) -> usize {
                1
            }
            fn eval_jet(&self, x: &[Jet]) -> Jet {
                x[0].clone()
            }
            fn in_domain(&self, x: &[f64]) -> bool {
                x[0] > 0.0
            }
        }
        let err = fd_partial(&Half, &[1e-4], &idx(&[1]), 1e-3).unwrap_err();
        assert!(matches!(err, Error::StencilOutsideDomain { .. }));
    }

    #[test]
    fn polynomial_from_graded_coeffs() {
        // 1 + 2y + 3x + 4y^2 + 5xy + 6x^2 in variables (x, y) with graded order (0,0),(0,1),(1,0),(0,2),(1,1),(2,0).
        let p = Polynomial::from_graded_coeffs(2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(p.degree(), 2);
        let v = p.value(&[1.0, 2.0]);
        assert_eq!(v, 1.0 + 4.0 + 3.0 + 16.0 + 10.0 + 6.0);
        assert!(Polynomial::from_graded_coeffs(2, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sampled_field_reports_fd_kind_and_close_derivatives() {
        let f = SampledFn::new(1, 1e-3, |x: &[f64]| x[0].powi(3));
        assert_eq!(f.derivative_kind(), DerivativeKind::FiniteDifference);
        let d = f.derivative(&[2.0], &idx(&[1]));
        assert!((d - 12.0).abs() < 1e-5);
    }
}
