//! Multi-indices and truncated multivariate Taylor jets.
//!
//! A [`Jet`] carries every Taylor coefficient `c_α` with `|α| ≤ p` of a
//! function of `n` variables at a point, so `D^α f = α! · c_α`. Arithmetic on
//! jets is forward-mode differentiation to order `p`, which gives exact
//! partial derivatives of every composed field in the crate.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use smallvec::SmallVec;

/// A multi-index `α ∈ ℕⁿ`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// The index with a single `1` at `axis`.
    pub fn unit(n: usize, axis: usize) -> Self {
        let mut e = vec![0; n];
        e[axis] = 1;
        MultiIndex(e)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|α|`.
    pub fn order(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    /// `α! = Π α_i!`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&e| factorial(e as usize)).product()
    }

    pub fn checked_add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Graded lexicographic comparison key.
    fn graded_key(&self) -> (usize, &[u32]) {
        (self.order(), &self.0)
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// All `α ∈ ℕⁿ` with `|α| ≤ p`, each once, in graded lexicographic order.
pub fn multi_index_enumerate(n: usize, p: usize) -> Vec<MultiIndex> {
    assert!(n >= 1, "ambient dimension must be positive");
    let mut out = Vec::new();
    for order in 0..=p {
        let mut level = Vec::new();
        compositions(n, order, &mut vec![0; n], 0, &mut level);
        level.sort();
        out.extend(level.into_iter().map(MultiIndex));
    }
    out
}

fn compositions(n: usize, remaining: usize, cur: &mut Vec<u32>, pos: usize, out: &mut Vec<Vec<u32>>) {
    if pos == n - 1 {
        cur[pos] = remaining as u32;
        out.push(cur.clone());
        return;
    }
    for k in 0..=remaining {
        cur[pos] = k as u32;
        compositions(n, remaining - k, cur, pos + 1, out);
    }
}

/// Index layout and product table shared by all jets of the same `(n, p)`.
pub struct JetSpace {
    n: usize,
    p: usize,
    indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
    /// `(i, j, k)` with `indices[i] + indices[j] == indices[k]`.
    products: Vec<(usize, usize, usize)>,
    /// Start offset of each order block within `indices`.
    order_start: Vec<usize>,
}

impl JetSpace {
    /// Returns the interned space for `(n, p)`.
    pub fn get(n: usize, p: usize) -> &'static JetSpace {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), &'static JetSpace>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        guard
            .entry((n, p))
            .or_insert_with(|| Box::leak(Box::new(JetSpace::build(n, p))))
    }

    fn build(n: usize, p: usize) -> JetSpace {
        let indices = multi_index_enumerate(n, p);
        debug_assert!(indices.windows(2).all(|w| w[0].graded_key() < w[1].graded_key()));
        let lookup: HashMap<_, _> = indices.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
        let mut products = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                if a.order() + b.order() <= p {
                    let k = lookup[&a.checked_add(b)];
                    products.push((i, j, k));
                }
            }
        }
        let mut order_start = vec![0; p + 2];
        for q in 0..=p + 1 {
            order_start[q] = indices.iter().position(|a| a.order() >= q).unwrap_or(indices.len());
        }
        JetSpace { n, p, indices, lookup, products, order_start }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    /// Range of coefficient slots holding indices of exactly order `q`.
    pub fn order_range(&self, q: usize) -> std::ops::Range<usize> {
        self.order_start[q]..self.order_start[q + 1]
    }
}

type Coeffs = SmallVec<[f64; 10]>;

/// Truncated Taylor expansion of a scalar function of `n` variables.
#[derive(Clone)]
pub struct Jet {
    space: &'static JetSpace,
    c: Coeffs,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet").field("n", &self.space.n).field("p", &self.space.p).field("c", &self.c).finish()
    }
}

impl Jet {
    pub fn constant(space: &'static JetSpace, value: f64) -> Jet {
        let mut c: Coeffs = SmallVec::from_elem(0.0, space.len());
        c[0] = value;
        Jet { space, c }
    }

    pub fn from_coeffs(space: &'static JetSpace, c: &[f64]) -> Jet {
        assert_eq!(c.len(), space.len(), "coefficient count mismatch");
        Jet { space, c: c.iter().copied().collect() }
    }

    /// The coordinate function `x_axis` expanded at `value`.
    pub fn variable(space: &'static JetSpace, axis: usize, value: f64) -> Jet {
        let mut j = Jet::constant(space, value);
        if space.p >= 1 {
            let pos = space.position(&MultiIndex::unit(space.n, axis)).expect("unit index present");
            j.c[pos] = 1.0;
        }
        j
    }

    /// Seeds one variable jet per coordinate of `x`.
    pub fn seed(x: &[f64], p: usize) -> Vec<Jet> {
        let space = JetSpace::get(x.len(), p);
        x.iter().enumerate().map(|(i, &v)| Jet::variable(space, i, v)).collect()
    }

    pub fn space(&self) -> &'static JetSpace {
        self.space
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    /// A constant in the same space as `self`.
    pub fn lift(&self, value: f64) -> Jet {
        Jet::constant(self.space, value)
    }

    /// `D^α` at the expansion point; `None` if `|α| > p`.
    pub fn derivative(&self, alpha: &MultiIndex) -> Option<f64> {
        self.space.position(alpha).map(|i| self.c[i] * alpha.factorial())
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, o: &Jet) -> Jet {
        debug_assert!(std::ptr::eq(self.space, o.space));
        let c = self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect();
        Jet { space: self.space, c }
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        debug_assert!(std::ptr::eq(self.space, o.space));
        let c = self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect();
        Jet { space: self.space, c }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut r = self.clone();
        r.c[0] += s;
        r
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet { space: self.space, c: self.c.iter().map(|v| v * s).collect() }
    }

    pub fn neg(&self) -> Jet {
        self.scale(-1.0)
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        debug_assert!(std::ptr::eq(self.space, o.space));
        let mut c: Coeffs = SmallVec::from_elem(0.0, self.c.len());
        for &(i, j, k) in &self.space.products {
            c[k] += self.c[i] * o.c[j];
        }
        Jet { space: self.space, c }
    }

    pub fn square(&self) -> Jet {
        self.mul(self)
    }

    /// Composes a univariate function with `self`, given its derivatives
    /// `derivs[k] = Φ^{(k)}(self.value())` for `k = 0..=p`.
    pub fn compose_univariate(&self, derivs: &[f64]) -> Jet {
        let p = self.space.p;
        let mut h = self.clone();
        h.c[0] = 0.0;
        let mut out = self.lift(derivs[0]);
        let mut power = self.lift(1.0);
        for (k, d) in derivs.iter().enumerate().take(p + 1).skip(1) {
            power = power.mul(&h);
            if *d != 0.0 {
                let w = d / factorial(k);
                for (o, v) in out.c.iter_mut().zip(&power.c) {
                    *o += w * v;
                }
            }
        }
        out
    }

    pub fn recip(&self) -> Jet {
        let v = self.value();
        let p = self.space.p;
        let mut d = Vec::with_capacity(p + 1);
        let mut coef = 1.0;
        for k in 0..=p {
            d.push(coef / v.powi(k as i32 + 1));
            coef *= -((k + 1) as f64);
        }
        self.compose_univariate(&d)
    }

    pub fn div(&self, o: &Jet) -> Jet {
        self.mul(&o.recip())
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    /// `self^e` for real `e`; requires a positive value unless `e` is a
    /// non-negative integer.
    pub fn powf(&self, e: f64) -> Jet {
        let v = self.value();
        let p = self.space.p;
        let mut d = Vec::with_capacity(p + 1);
        let mut coef = 1.0;
        for k in 0..=p {
            let expo = e - k as f64;
            d.push(if coef == 0.0 { 0.0 } else { coef * v.powf(expo) });
            coef *= expo;
        }
        self.compose_univariate(&d)
    }

    pub fn powi(&self, e: u32) -> Jet {
        let mut out = self.lift(1.0);
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    pub fn sin(&self) -> Jet {
        let v = self.value();
        let d: Vec<f64> = (0..=self.space.p)
            .map(|k| match k % 4 {
                0 => v.sin(),
                1 => v.cos(),
                2 => -v.sin(),
                _ => -v.cos(),
            })
            .collect();
        self.compose_univariate(&d)
    }

    /// Multivariate substitution: `self` is a jet in `m` variables expanded
    /// at `inner[k].value()`, and `inner` are jets in another space.
    pub fn compose(&self, inner: &[Jet]) -> Jet {
        assert_eq!(inner.len(), self.space.n, "composition arity mismatch");
        let target = inner[0].space;
        let shifts: Vec<Jet> = inner
            .iter()
            .map(|j| {
                let mut h = j.clone();
                h.c[0] = 0.0;
                h
            })
            .collect();
        // Monomials h^β in graded order: each is h^{β - e_k} · h_k.
        let mut monos: Vec<Jet> = Vec::with_capacity(self.space.len());
        let mut out = Jet::constant(target, 0.0);
        for (idx, beta) in self.space.indices.iter().enumerate() {
            let mono = if beta.order() == 0 {
                Jet::constant(target, 1.0)
            } else {
                let k = beta.0.iter().position(|&e| e > 0).unwrap();
                let mut prev = beta.0.clone();
                prev[k] -= 1;
                let prev_idx = self.space.lookup[&MultiIndex(prev)];
                monos[prev_idx].mul(&shifts[k])
            };
            let coef = self.c[idx];
            if coef != 0.0 {
                for (o, v) in out.c.iter_mut().zip(&mono.c) {
                    *o += coef * v;
                }
            }
            monos.push(mono);
        }
        out
    }

    /// Sum of `|c_α|·α!` over indices of order exactly `q`, i.e. the largest
    /// partial of order `q` is at most this.
    pub fn max_abs_derivative(&self, q: usize) -> f64 {
        self.space
            .order_range(q)
            .map(|i| (self.c[i] * self.space.indices[i].factorial()).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn enumerate_small_cases() {
        assert_eq!(multi_index_enumerate(1, 0), vec![idx(&[0])]);
        assert_eq!(multi_index_enumerate(2, 1), vec![idx(&[0, 0]), idx(&[0, 1]), idx(&[1, 0])]);
        let six = multi_index_enumerate(2, 2);
        assert_eq!(six.len(), 6);
        let orders: Vec<usize> = six.iter().map(|a| a.order()).collect();
        assert_eq!(orders, vec![0, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn enumerate_counts_match_binomial() {
        for n in 1..4 {
            for p in 0..5 {
                let all = multi_index_enumerate(n, p);
                assert_eq!(all.len() as f64, binomial(n + p, p));
                let mut dedup = all.clone();
                dedup.dedup();
                assert_eq!(dedup.len(), all.len());
            }
        }
    }

    #[test]
    fn product_rule_on_polynomials() {
        // f(x,y) = x^2 y at (2,3): f_x = 12, f_xy = 4, f_xx = 6.
        let v = Jet::seed(&[2.0, 3.0], 3);
        let f = v[0].square().mul(&v[1]);
        assert_eq!(f.value(), 12.0);
        assert_eq!(f.derivative(&idx(&[1, 0])).unwrap(), 12.0);
        assert_eq!(f.derivative(&idx(&[1, 1])).unwrap(), 4.0);
        assert_eq!(f.derivative(&idx(&[2, 0])).unwrap(), 6.0);
        assert_eq!(f.derivative(&idx(&[2, 1])).unwrap(), 2.0);
        assert_eq!(f.derivative(&idx(&[0, 2])).unwrap(), 0.0);
    }

    #[test]
    fn recip_and_sqrt_match_closed_forms() {
        let x = &Jet::seed(&[4.0], 3)[0];
        let r = x.recip();
        assert!((r.derivative(&idx(&[1])).unwrap() + 1.0 / 16.0).abs() < 1e-15);
        assert!((r.derivative(&idx(&[3])).unwrap() + 6.0 / 256.0).abs() < 1e-15);
        let s = x.sqrt();
        assert!((s.derivative(&idx(&[1])).unwrap() - 0.25).abs() < 1e-15);
        // d²/dx² sqrt(x) = -1/4 x^{-3/2} = -1/32 at 4.
        assert!((s.derivative(&idx(&[2])).unwrap() + 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn multivariate_composition_is_chain_rule() {
        // outer(a, b) = a*b expanded at (1, 2); inner a = u^2, b = u + 1 at u = 1.
        let outer_vars = Jet::seed(&[1.0, 2.0], 2);
        let outer = outer_vars[0].mul(&outer_vars[1]);
        let u = &Jet::seed(&[1.0], 2)[0];
        let inner = [u.square(), u.add_scalar(1.0)];
        let h = outer.compose(&inner);
        // h(u) = u^3 + u^2: h' = 3 + 2 = 5, h'' = 6 + 2 = 8.
        assert!((h.value() - 2.0).abs() < 1e-15);
        assert!((h.derivative(&idx(&[1])).unwrap() - 5.0).abs() < 1e-14);
        assert!((h.derivative(&idx(&[2])).unwrap() - 8.0).abs() < 1e-14);
    }
}
