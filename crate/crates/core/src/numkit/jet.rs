use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use super::scalar::Scalar;

type LayoutCache = HashMap<(usize, usize), Arc<Layout>>;

/// Index bookkeeping for dense multivariate Taylor coefficients truncated at
/// a total order. Layouts are interned, so jets built with the same
/// `(nvars, order)` share one table.
pub struct Layout {
    nvars: usize,
    order: usize,
    indices: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    // products[g] lists every (a, b) with alpha_a + alpha_b = alpha_g
    products: Vec<Vec<(u32, u32)>>,
    // shift[v][a] = index of alpha_a + e_v, or NONE when it exceeds the order
    shift: Vec<Vec<u32>>,
}

const NONE: u32 = u32::MAX;

impl fmt::Debug for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Layout")
            .field("nvars", &self.nvars)
            .field("order", &self.order)
            .field("len", &self.indices.len())
            .finish()
    }
}

fn compositions(total: usize, parts: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if parts == 1 {
        prefix.push(total as u8);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first as u8);
        compositions(total - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

impl Layout {
    fn build(nvars: usize, order: usize) -> Layout {
        assert!(nvars > 0, "a jet needs at least one variable");
        let mut indices = Vec::new();
        for d in 0..=order {
            compositions(d, nvars, &mut Vec::with_capacity(nvars), &mut indices);
        }
        let degree: Vec<usize> = indices
            .iter()
            .map(|a| a.iter().map(|&v| v as usize).sum())
            .collect();
        let lookup: HashMap<Vec<u8>, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        let len = indices.len();
        let mut products = vec![Vec::new(); len];
        let mut sum = vec![0u8; nvars];
        for a in 0..len {
            for b in 0..len {
                if degree[a] + degree[b] > order {
                    continue;
                }
                for v in 0..nvars {
                    sum[v] = indices[a][v] + indices[b][v];
                }
                products[lookup[&sum]].push((a as u32, b as u32));
            }
        }
        let shift = (0..nvars)
            .map(|v| {
                indices
                    .iter()
                    .map(|a| {
                        let mut t = a.clone();
                        t[v] += 1;
                        lookup.get(&t).map_or(NONE, |&i| i as u32)
                    })
                    .collect()
            })
            .collect();
        Layout {
            nvars,
            order,
            indices,
            lookup,
            products,
            shift,
        }
    }

    /// Interned layout for `nvars` variables truncated at total `order`.
    pub fn get(nvars: usize, order: usize) -> Arc<Layout> {
        static CACHE: OnceLock<Mutex<LayoutCache>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("layout cache poisoned");
        guard
            .entry((nvars, order))
            .or_insert_with(|| Arc::new(Layout::build(nvars, order)))
            .clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn multi_index(&self, i: usize) -> &[u8] {
        &self.indices[i]
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    fn same_shape(&self, other: &Layout) -> bool {
        self.nvars == other.nvars && self.order == other.order
    }
}

/// Truncated multivariate Taylor polynomial with coefficients in `S`.
///
/// Coefficients are stored in Taylor normalisation (`c_alpha = d^alpha f / alpha!`).
/// A jet without a layout is a constant and combines with any other jet.
#[derive(Clone)]
pub struct Jet<S> {
    layout: Option<Arc<Layout>>,
    c: Vec<S>,
}

impl<S: Scalar> fmt::Debug for Jet<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.layout {
            None => write!(f, "Jet::constant({:?})", self.c[0]),
            Some(l) => f
                .debug_struct("Jet")
                .field("nvars", &l.nvars)
                .field("order", &l.order)
                .field("coeffs", &self.c)
                .finish(),
        }
    }
}

fn check_compatible(a: &Arc<Layout>, b: &Arc<Layout>) {
    assert!(
        Arc::ptr_eq(a, b) || a.same_shape(b),
        "combining jets with different layouts ({:?} vs {:?})",
        a,
        b
    );
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

impl<S: Scalar> Jet<S> {
    pub fn constant(v: S) -> Self {
        Jet {
            layout: None,
            c: vec![v],
        }
    }

    /// Jet of the coordinate `var` with the given value.
    pub fn variable(layout: &Arc<Layout>, var: usize, value: S) -> Self {
        assert!(var < layout.nvars);
        let mut j = Self::zeros(layout);
        j.c[0] = value;
        if layout.order >= 1 {
            let mut alpha = vec![0u8; layout.nvars];
            alpha[var] = 1;
            j.c[layout.lookup[&alpha]] = S::from_f64(1.0);
        }
        j
    }

    pub fn from_coeffs(layout: &Arc<Layout>, coeffs: Vec<S>) -> Self {
        assert_eq!(coeffs.len(), layout.len());
        Jet {
            layout: Some(layout.clone()),
            c: coeffs,
        }
    }

    fn zeros(layout: &Arc<Layout>) -> Self {
        Jet {
            layout: Some(layout.clone()),
            c: vec![S::from_f64(0.0); layout.len()],
        }
    }

    pub fn layout(&self) -> Option<&Arc<Layout>> {
        self.layout.as_ref()
    }

    pub fn coeffs(&self) -> &[S] {
        &self.c
    }

    /// The value slot.
    pub fn val(&self) -> &S {
        &self.c[0]
    }

    /// Taylor coefficient of the multi-index `alpha`.
    pub fn coeff(&self, alpha: &[u8]) -> S {
        match &self.layout {
            None => {
                if alpha.iter().all(|&a| a == 0) {
                    self.c[0].clone()
                } else {
                    S::from_f64(0.0)
                }
            }
            Some(l) => {
                let deg: usize = alpha.iter().map(|&a| a as usize).sum();
                assert!(deg <= l.order, "requested order {deg} exceeds jet order {}", l.order);
                self.c[l.lookup[alpha]].clone()
            }
        }
    }

    /// Mixed partial derivative, one entry of `vars` per differentiation.
    pub fn deriv(&self, vars: &[usize]) -> S {
        if vars.is_empty() {
            return self.c[0].clone();
        }
        let Some(l) = &self.layout else {
            return S::from_f64(0.0);
        };
        let mut alpha = vec![0u8; l.nvars];
        for &v in vars {
            alpha[v] += 1;
        }
        let weight: f64 = alpha.iter().map(|&a| factorial(a as usize)).product();
        self.coeff(&alpha) * weight
    }

    /// Partial derivative as a jet; the top-degree coefficients become zero
    /// because the information needed for them is not carried.
    pub fn partial(&self, var: usize) -> Self {
        let Some(l) = &self.layout else {
            return Self::constant(S::from_f64(0.0));
        };
        let mut out = Vec::with_capacity(l.len());
        for (a, alpha) in l.indices.iter().enumerate() {
            let t = l.shift[var][a];
            if t == NONE {
                out.push(S::from_f64(0.0));
            } else {
                out.push(self.c[t as usize].clone() * (alpha[var] as f64 + 1.0));
            }
        }
        Jet {
            layout: Some(l.clone()),
            c: out,
        }
    }

    fn promote_to(&mut self, layout: &Arc<Layout>) {
        match &self.layout {
            Some(l) => check_compatible(l, layout),
            None => {
                let v = self.c.pop().expect("constant jet has a value");
                *self = Self::zeros(layout);
                self.c[0] = v;
            }
        }
    }

    fn map(&self, f: impl Fn(&S) -> S) -> Self {
        Jet {
            layout: self.layout.clone(),
            c: self.c.iter().map(f).collect(),
        }
    }

    /// Applies a univariate function through its Taylor coefficients
    /// `t[k] = f^(k)(u0) / k!` about the value slot (Horner in the nilpotent part).
    fn compose(&self, t: &[S]) -> Self {
        let Some(l) = &self.layout else {
            return Self::constant(t[0].clone());
        };
        let mut h = self.clone();
        h.c[0] = S::from_f64(0.0);
        let k = l.order.min(t.len() - 1);
        let mut r = Self::constant(t[k].clone());
        for tk in t[..k].iter().rev() {
            r = r * h.clone();
            r.c[0].add_assign_ref(tk);
        }
        r
    }

    fn order(&self) -> usize {
        self.layout.as_ref().map_or(0, |l| l.order)
    }

    /// Powers `base^0 .. base^k` times optional scalar weights.
    fn powers(base: &S, k: usize) -> Vec<S> {
        let mut out = Vec::with_capacity(k + 1);
        out.push(S::from_f64(1.0));
        for i in 1..=k {
            let next = out[i - 1].clone() * base.clone();
            out.push(next);
        }
        out
    }
}

/// Seeds the `2n` coordinates `(x, y)` as jets of the given order:
/// variable `k < n` is `x^k`, variable `n + k` is `y^k`.
pub fn lift(x: &[f64], y: &[f64], order: usize) -> (Vec<Jet<f64>>, Vec<Jet<f64>>) {
    lift_generic(x, y, order)
}

pub(crate) fn lift_generic<S: Scalar>(x: &[S], y: &[S], order: usize) -> (Vec<Jet<S>>, Vec<Jet<S>>) {
    let n = x.len();
    assert_eq!(n, y.len());
    let layout = Layout::get(2 * n, order);
    let xs = x
        .iter()
        .enumerate()
        .map(|(k, v)| Jet::variable(&layout, k, v.clone()))
        .collect();
    let ys = y
        .iter()
        .enumerate()
        .map(|(k, v)| Jet::variable(&layout, n + k, v.clone()))
        .collect();
    (xs, ys)
}

/// Seeds only the direction `y`, keeping `x` constant.
pub(crate) fn lift_y<S: Scalar>(x: &[S], y: &[S], order: usize) -> (Vec<Jet<S>>, Vec<Jet<S>>) {
    let n = y.len();
    let layout = Layout::get(n, order);
    let xs = x.iter().map(|v| Jet::constant(v.clone())).collect();
    let ys = y
        .iter()
        .enumerate()
        .map(|(k, v)| Jet::variable(&layout, k, v.clone()))
        .collect();
    (xs, ys)
}

impl<S: Scalar> Add for Jet<S> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.add_assign_ref(&rhs);
        self
    }
}

impl<S: Scalar> Sub for Jet<S> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self.add_assign_ref(&(-rhs));
        self
    }
}

impl<S: Scalar> Neg for Jet<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Jet {
            layout: self.layout,
            c: self.c.into_iter().map(|v| -v).collect(),
        }
    }
}

impl<S: Scalar> Mul for Jet<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        match (&self.layout, &rhs.layout) {
            (None, None) => Self::constant(self.c[0].clone() * rhs.c[0].clone()),
            (None, Some(_)) => rhs.map(|v| self.c[0].clone() * v.clone()),
            (Some(_), None) => self.map(|v| v.clone() * rhs.c[0].clone()),
            (Some(l), Some(_)) => {
                let mut out = Self::zeros(l);
                out.mul_add_assign(&self, &rhs);
                out
            }
        }
    }
}

impl<S: Scalar> Div for Jet<S> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl<S: Scalar> Add<f64> for Jet<S> {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.c[0] = self.c[0].clone() + rhs;
        self
    }
}

impl<S: Scalar> Sub<f64> for Jet<S> {
    type Output = Self;
    fn sub(mut self, rhs: f64) -> Self {
        self.c[0] = self.c[0].clone() - rhs;
        self
    }
}

impl<S: Scalar> Mul<f64> for Jet<S> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.map(|v| v.clone() * rhs)
    }
}

impl<S: Scalar> Scalar for Jet<S> {
    fn from_f64(v: f64) -> Self {
        Self::constant(S::from_f64(v))
    }

    fn value(&self) -> f64 {
        self.c[0].value()
    }

    fn add_assign_ref(&mut self, other: &Self) {
        match (&self.layout, &other.layout) {
            (_, None) => self.c[0].add_assign_ref(&other.c[0]),
            (None, Some(_)) => {
                let v = self.c[0].clone();
                *self = other.clone();
                self.c[0].add_assign_ref(&v);
            }
            (Some(a), Some(b)) => {
                check_compatible(a, b);
                for (s, o) in self.c.iter_mut().zip(&other.c) {
                    s.add_assign_ref(o);
                }
            }
        }
    }

    fn mul_add_assign(&mut self, a: &Self, b: &Self) {
        match (&a.layout, &b.layout) {
            (None, None) => self.c[0].mul_add_assign(&a.c[0], &b.c[0]),
            (None, Some(l)) => {
                self.promote_to(l);
                for (s, bv) in self.c.iter_mut().zip(&b.c) {
                    s.mul_add_assign(&a.c[0], bv);
                }
            }
            (Some(l), None) => {
                self.promote_to(l);
                for (s, av) in self.c.iter_mut().zip(&a.c) {
                    s.mul_add_assign(av, &b.c[0]);
                }
            }
            (Some(l), Some(lb)) => {
                check_compatible(l, lb);
                self.promote_to(l);
                let l = l.clone();
                for (g, pairs) in l.products.iter().enumerate() {
                    let slot = &mut self.c[g];
                    for &(i, j) in pairs {
                        slot.mul_add_assign(&a.c[i as usize], &b.c[j as usize]);
                    }
                }
            }
        }
    }

    fn recip(&self) -> Self {
        let u0 = &self.c[0];
        let r = u0.recip();
        let k = self.order();
        let mut t = Self::powers(&r, k);
        for (i, ti) in t.iter_mut().enumerate() {
            // (-1)^i r^(i+1)
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            *ti = ti.clone() * r.clone() * sign;
        }
        self.compose(&t)
    }

    fn sqrt(&self) -> Self {
        let u0 = &self.c[0];
        let s = u0.sqrt();
        let k = self.order();
        let rp = Self::powers(&u0.recip(), k);
        let mut binom = 1.0;
        let mut t = Vec::with_capacity(k + 1);
        for (i, ri) in rp.iter().enumerate() {
            if i > 0 {
                binom *= (0.5 - (i as f64 - 1.0)) / i as f64;
            }
            t.push(s.clone() * ri.clone() * binom);
        }
        self.compose(&t)
    }

    fn exp(&self) -> Self {
        let e = self.c[0].exp();
        let t: Vec<S> = (0..=self.order())
            .map(|i| e.clone() * (1.0 / factorial(i)))
            .collect();
        self.compose(&t)
    }

    fn ln(&self) -> Self {
        let u0 = &self.c[0];
        let k = self.order();
        let rp = Self::powers(&u0.recip(), k);
        let mut t = Vec::with_capacity(k + 1);
        t.push(u0.ln());
        for (i, ri) in rp.iter().enumerate().skip(1) {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            t.push(ri.clone() * (sign / i as f64));
        }
        self.compose(&t)
    }

    fn sin(&self) -> Self {
        let (s, c) = (self.c[0].sin(), self.c[0].cos());
        let cycle = [s.clone(), c.clone(), -s, -c];
        let t: Vec<S> = (0..=self.order())
            .map(|i| cycle[i % 4].clone() * (1.0 / factorial(i)))
            .collect();
        self.compose(&t)
    }

    fn cos(&self) -> Self {
        let (s, c) = (self.c[0].sin(), self.c[0].cos());
        let cycle = [c.clone(), -s.clone(), -c, s];
        let t: Vec<S> = (0..=self.order())
            .map(|i| cycle[i % 4].clone() * (1.0 / factorial(i)))
            .collect();
        self.compose(&t)
    }

    fn is_constant(&self) -> bool {
        self.layout.is_none() && self.c[0].is_constant()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_sizes_match_binomials() {
        // C(nvars + order, order)
        assert_eq!(Layout::get(6, 3).len(), 84);
        assert_eq!(Layout::get(3, 2).len(), 10);
        assert_eq!(Layout::get(1, 4).len(), 5);
    }

    #[test]
    fn lift_seeds_unit_first_order_coefficients() {
        let (x, y) = lift(&[0.0], &[1.0], 1);
        assert_eq!(x[0].val(), &0.0);
        assert_eq!(x[0].deriv(&[0]), 1.0);
        assert_eq!(x[0].deriv(&[1]), 0.0);
        assert_eq!(y[0].val(), &1.0);
        assert_eq!(y[0].deriv(&[1]), 1.0);
        assert_eq!(y[0].deriv(&[0]), 0.0);
    }

    #[test]
    fn square_of_lifted_three() {
        let l = Layout::get(1, 3);
        let y = Jet::variable(&l, 0, 3.0);
        let f = y.clone() * y;
        assert_eq!(f.coeff(&[0]), 9.0);
        assert_eq!(f.coeff(&[1]), 6.0);
        assert_eq!(f.coeff(&[2]), 1.0);
        assert_eq!(f.coeff(&[3]), 0.0);
        assert_eq!(f.deriv(&[0, 0]), 2.0);
    }

    #[test]
    fn elementary_functions_match_closed_forms() {
        let l = Layout::get(1, 3);
        let u = Jet::variable(&l, 0, 0.7);
        let checks: Vec<(Jet<f64>, [f64; 4])> = vec![
            (
                u.sqrt(),
                [0.7f64.sqrt(), 0.5 * 0.7f64.powf(-0.5), -0.25 * 0.7f64.powf(-1.5), 0.375 * 0.7f64.powf(-2.5)],
            ),
            (u.exp(), [0.7f64.exp(); 4]),
            (u.ln(), [0.7f64.ln(), 1.0 / 0.7, -1.0 / 0.49, 2.0 / 0.343]),
            (u.sin(), [0.7f64.sin(), 0.7f64.cos(), -0.7f64.sin(), -0.7f64.cos()]),
            (u.cos(), [0.7f64.cos(), -0.7f64.sin(), -0.7f64.cos(), 0.7f64.sin()]),
            (u.recip(), [1.0 / 0.7, -1.0 / 0.49, 2.0 / 0.343, -6.0 / 0.2401]),
        ];
        for (jet, expect) in checks {
            for (k, e) in expect.iter().enumerate() {
                let d = jet.deriv(&vec![0; k]);
                assert!((d - e).abs() <= 1e-12 * e.abs().max(1.0), "k={k}: {d} vs {e}");
            }
        }
    }

    #[test]
    fn constants_broadcast_against_jets() {
        let l = Layout::get(2, 2);
        let a = Jet::variable(&l, 0, 2.0);
        let c = Jet::<f64>::constant(5.0);
        let s = c.clone() + a.clone();
        assert_eq!(*s.val(), 7.0);
        assert_eq!(s.deriv(&[0]), 1.0);
        let p = c * a;
        assert_eq!(p.deriv(&[0]), 5.0);
        assert_eq!(p.deriv(&[1]), 0.0);
    }

    #[test]
    fn partial_lowers_the_available_order() {
        let l = Layout::get(2, 3);
        let x = Jet::variable(&l, 0, 1.5);
        let y = Jet::variable(&l, 1, -0.5);
        // f = x^2 y
        let f = x.clone() * x * y;
        let fx = f.partial(0);
        assert!((fx.val() - 2.0 * 1.5 * -0.5).abs() < 1e-15);
        assert!((fx.deriv(&[1]) - 3.0).abs() < 1e-15);
        assert!((fx.deriv(&[0]) - 2.0 * -0.5).abs() < 1e-15);
        assert!((fx.deriv(&[0, 1]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn nested_jets_give_second_derivatives_of_derivatives() {
        // f(t) = t^3 at t = 2; outer first-derivative of the inner first derivative = 12
        let inner = Layout::get(1, 1);
        let outer = Layout::get(1, 1);
        let t_outer = Jet::variable(&outer, 0, 2.0);
        let t: Jet<Jet<f64>> = Jet::variable(&inner, 0, t_outer);
        let f = t.clone() * t.clone() * t;
        let df = f.deriv(&[0]);
        assert!((df.val() - 12.0).abs() < 1e-14);
        assert!((df.deriv(&[0]) - 12.0).abs() < 1e-14);
    }
}
