//! Hermite polynomials and Hermite functions with derivatives, tensor-product
//! basis terms, and Gauss–Legendre rules.
//!
//! Polynomials follow the probabilists' convention `He_{s+1} = x He_s - s He_{s-1}`.
//! Hermite functions are `ψ_s(x) = He_s(x) exp(-x²/4)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cst, from_usize, Scalar};

/// Value with first and second derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2<T> {
    pub value: T,
    pub d1: T,
    pub d2: T,
}

impl<T: Scalar> Jet2<T> {
    pub fn one() -> Self {
        Self { value: T::one(), d1: T::zero(), d2: T::zero() }
    }
}

/// `He_degree(x)` and its first two derivatives.
pub fn hermite_poly<T: Scalar>(degree: usize, x: T) -> Jet2<T> {
    hermite_poly_table(degree, x)[degree]
}

/// All polynomials `He_0..=He_max` at `x`.
pub fn hermite_poly_table<T: Scalar>(max_degree: usize, x: T) -> Vec<Jet2<T>> {
    let mut he = Vec::with_capacity(max_degree + 1);
    he.push(T::one());
    if max_degree >= 1 {
        he.push(x);
    }
    for s in 1..max_degree {
        let next = x * he[s] - from_usize::<T>(s) * he[s - 1];
        he.push(next);
    }
    (0..=max_degree)
        .map(|s| {
            let fs = from_usize::<T>(s);
            let d1 = if s >= 1 { fs * he[s - 1] } else { T::zero() };
            let d2 = if s >= 2 { fs * from_usize::<T>(s - 1) * he[s - 2] } else { T::zero() };
            Jet2 { value: he[s], d1, d2 }
        })
        .collect()
}

/// `ψ_degree(x) = He_degree(x)·exp(-x²/4)` and its first two derivatives.
pub fn hermite_fn<T: Scalar>(degree: usize, x: T) -> Jet2<T> {
    hermite_fn_table(degree, x)[degree]
}

/// All Hermite functions `ψ_0..=ψ_max` at `x`.
pub fn hermite_fn_table<T: Scalar>(max_degree: usize, x: T) -> Vec<Jet2<T>> {
    let g = (-x * x * cst(0.25)).exp();
    let half = cst::<T>(0.5);
    hermite_poly_table(max_degree, x)
        .into_iter()
        .map(|p| {
            // (p e)' = (p' - x p / 2) e,  (p e)'' = (p'' - x p' + (x²/4 - 1/2) p) e
            let value = p.value * g;
            let d1 = (p.d1 - half * x * p.value) * g;
            let d2 = (p.d2 - x * p.d1 + (x * x * cst(0.25) - half) * p.value) * g;
            Jet2 { value, d1, d2 }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    Polynomial,
    Function,
    Constant,
}

/// Tensor-product basis element: one univariate factor per input axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisTerm {
    pub kinds: Vec<AxisKind>,
    pub index: Vec<usize>,
}

impl BasisTerm {
    pub fn polynomial(index: Vec<usize>) -> Self {
        Self { kinds: vec![AxisKind::Polynomial; index.len()], index }
    }

    pub fn function(index: Vec<usize>) -> Self {
        Self { kinds: vec![AxisKind::Function; index.len()], index }
    }

    pub fn constant(arity: usize) -> Self {
        Self { kinds: vec![AxisKind::Constant; arity], index: vec![0; arity] }
    }

    pub fn arity(&self) -> usize {
        self.index.len()
    }

    pub fn total_degree(&self) -> usize {
        self.index.iter().zip(&self.kinds).filter(|(_, k)| **k != AxisKind::Constant).map(|(d, _)| *d).sum()
    }

    pub fn is_constant(&self) -> bool {
        self.kinds.iter().all(|k| *k == AxisKind::Constant)
            || (self.kinds.iter().all(|k| *k == AxisKind::Polynomial) && self.index.iter().all(|&d| d == 0))
    }
}

/// Value, gradient and Hessian of a basis term at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct TermEval<T> {
    pub value: T,
    pub grad: Vec<T>,
    pub mixed2: Vec<Vec<T>>,
}

/// Univariate factor of one axis.
pub fn axis_eval<T: Scalar>(kind: AxisKind, degree: usize, x: T) -> Jet2<T> {
    match kind {
        AxisKind::Polynomial => hermite_poly(degree, x),
        AxisKind::Function => hermite_fn(degree, x),
        AxisKind::Constant => Jet2::one(),
    }
}

/// Product-rule evaluation of a tensor-product term.
pub fn term_eval<T: Scalar>(term: &BasisTerm, point: &[T]) -> Result<TermEval<T>> {
    if point.len() != term.arity() {
        return Err(Error::Dimension { expected: term.arity(), got: point.len() });
    }
    let factors: Vec<Jet2<T>> =
        term.kinds.iter().zip(&term.index).zip(point).map(|((&k, &d), &x)| axis_eval(k, d, x)).collect();
    Ok(product_eval(&factors))
}

pub(crate) fn product_eval<T: Scalar>(factors: &[Jet2<T>]) -> TermEval<T> {
    let m = factors.len();
    let value = factors.iter().fold(T::one(), |p, f| p * f.value);
    let others = |skip: &[usize]| {
        factors.iter().enumerate().filter(|(i, _)| !skip.contains(i)).fold(T::one(), |p, (_, f)| p * f.value)
    };
    let grad: Vec<T> = (0..m).map(|j| factors[j].d1 * others(&[j])).collect();
    let mut mixed2 = vec![vec![T::zero(); m]; m];
    for j in 0..m {
        mixed2[j][j] = factors[j].d2 * others(&[j]);
        for l in (j + 1)..m {
            let v = factors[j].d1 * factors[l].d1 * others(&[j, l]);
            mixed2[j][l] = v;
            mixed2[l][j] = v;
        }
    }
    TermEval { value, grad, mixed2 }
}

/// All multi-indices of the given arity with total degree `<= max_total`,
/// in graded lexicographic order starting from the zero index.
pub fn multi_indices(arity: usize, max_total: usize) -> Vec<Vec<usize>> {
    fn rec(arity: usize, remaining: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == arity {
            out.push(prefix.clone());
            return;
        }
        for d in 0..=remaining {
            prefix.push(d);
            rec(arity, remaining - d, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(arity, max_total, &mut Vec::with_capacity(arity), &mut out);
    out.sort_by(|a, b| {
        let (sa, sb): (usize, usize) = (a.iter().sum(), b.iter().sum());
        sa.cmp(&sb).then_with(|| b.cmp(a))
    });
    out
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> QuadratureRule<T> {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Integrates `f` over `[a, b]` with the affine image of the rule.
    pub fn integrate<F: FnMut(T) -> T>(&self, a: T, b: T, mut f: F) -> T {
        let half = (b - a) * cst(0.5);
        let mid = (a + b) * cst(0.5);
        self.nodes.iter().zip(&self.weights).fold(T::zero(), |acc, (&t, &w)| acc + w * f(mid + half * t)) * half
    }
}

/// Nodes and weights of the `order`-point Gauss–Legendre rule.
///
/// Roots of `P_order` are found by Newton iteration in `f64` from the
/// Chebyshev-like initial guesses, then converted to `T`. Nodes are returned
/// in increasing order.
pub fn gauss_legendre<T: Scalar>(order: usize) -> QuadratureRule<T> {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    QuadratureRule { nodes: nodes.into_iter().map(cst).collect(), weights: weights.into_iter().map(cst).collect() }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> impl Iterator<Item = f64> {
        (0..=100).map(|i| -5.0 + 0.1 * i as f64)
    }

    #[test]
    fn low_degree_values() {
        let j = hermite_poly(0, 3.7);
        assert_eq!((j.value, j.d1, j.d2), (1.0, 0.0, 0.0));
        let j = hermite_poly(1, 2.0);
        assert_eq!((j.value, j.d1, j.d2), (2.0, 1.0, 0.0));
        // He₂(x) = x² - 1
        let j = hermite_poly(2, 1.5);
        assert!((j.value - (1.5f64 * 1.5 - 1.0)).abs() < 1e-15);
        assert!((j.d1 - 3.0).abs() < 1e-15);
        assert!((j.d2 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn hermite_function_values() {
        assert_eq!(hermite_fn(0, 0.0f64).value, 1.0);
        let j = hermite_fn(1, 0.0f64);
        assert_eq!(j.value, 0.0);
        assert_eq!(j.d1, 1.0);
        let j = hermite_fn(0, 2.0f64);
        assert!((j.value - (-1.0f64).exp()).abs() < 1e-15);
        assert!((j.value - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn recurrence_and_derivative_identity() {
        let max = 8;
        for x in grid() {
            let t = hermite_poly_table(max, x);
            for s in 1..max {
                let lhs = t[s + 1].value;
                let rhs = x * t[s].value - s as f64 * t[s - 1].value;
                assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
                assert!((t[s].d1 - s as f64 * t[s - 1].value).abs() <= 1e-10 * (1.0 + t[s].d1.abs()));
            }
        }
    }

    #[test]
    fn function_derivatives_match_finite_differences() {
        let h = 1e-5;
        for x in grid() {
            for s in 0..5 {
                let j = hermite_fn(s, x);
                let fd1 = (hermite_fn(s, x + h).value - hermite_fn(s, x - h).value) / (2.0 * h);
                let fd2 = (hermite_fn(s, x + h).d1 - hermite_fn(s, x - h).d1) / (2.0 * h);
                assert!((j.d1 - fd1).abs() <= 1e-6 * (1.0 + j.d1.abs()));
                assert!((j.d2 - fd2).abs() <= 1e-6 * (1.0 + j.d2.abs()));
            }
        }
    }

    #[test]
    fn term_eval_products() {
        let t = BasisTerm::polynomial(vec![0, 0]);
        let e = term_eval(&t, &[0.3, -1.2]).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.grad, vec![0.0, 0.0]);

        let t = BasisTerm::polynomial(vec![1, 0]);
        assert_eq!(term_eval(&t, &[0.7, 4.0]).unwrap().value, 0.7);

        let t = BasisTerm::polynomial(vec![1, 1]);
        let e = term_eval(&t, &[2.0, 3.0]).unwrap();
        assert_eq!(e.value, 6.0);
        assert_eq!(e.mixed2[0][1], 1.0);
        assert_eq!(e.grad, vec![3.0, 2.0]);

        assert!(matches!(term_eval(&t, &[1.0]), Err(Error::Dimension { expected: 2, got: 1 })));
    }

    #[test]
    fn term_gradients_match_finite_differences() {
        let terms = [
            BasisTerm::function(vec![2, 1, 0]),
            BasisTerm::polynomial(vec![1, 2, 1]),
            BasisTerm {
                kinds: vec![AxisKind::Polynomial, AxisKind::Function, AxisKind::Constant],
                index: vec![2, 1, 0],
            },
        ];
        let x: [f64; 3] = [0.4, -1.1, 0.9];
        let h = 1e-5;
        for t in &terms {
            let e = term_eval(t, &x).unwrap();
            for j in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let fd = (term_eval(t, &xp).unwrap().value - term_eval(t, &xm).unwrap().value) / (2.0 * h);
                assert!((fd - e.grad[j]).abs() <= 1e-5 * e.grad[j].abs().max(1e-3));
                for l in 0..3 {
                    let fd2 = (term_eval(t, &xp).unwrap().grad[l] - term_eval(t, &xm).unwrap().grad[l]) / (2.0 * h);
                    assert!((fd2 - e.mixed2[j][l]).abs() <= 1e-5 * e.mixed2[j][l].abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn multi_index_enumeration() {
        let m = multi_indices(2, 2);
        assert_eq!(m.len(), 6);
        assert_eq!(m[0], vec![0, 0]);
        assert!(m.iter().all(|i| i.iter().sum::<usize>() <= 2));
        assert_eq!(multi_indices(0, 2), vec![Vec::<usize>::new()]);
        assert_eq!(multi_indices(3, 2).len(), 10);
    }

    #[test]
    fn gauss_legendre_closed_forms() {
        let r = gauss_legendre::<f64>(1);
        assert_eq!(r.nodes, vec![0.0]);
        assert!((r.weights[0] - 2.0).abs() < 1e-15);

        let r = gauss_legendre::<f64>(2);
        let s = 1.0 / 3f64.sqrt();
        assert!((r.nodes[0] + s).abs() < 1e-15 && (r.nodes[1] - s).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-14 && (r.weights[1] - 1.0).abs() < 1e-14);
        assert!((r.integrate(-1.0, 1.0, |x| x * x) - 2.0 / 3.0).abs() < 1e-15);

        let r = gauss_legendre::<f64>(5);
        assert!((r.integrate(-1.0, 1.0, |x| x.powi(8)) - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_exactness() {
        for order in 1..=12 {
            let r = gauss_legendre::<f64>(order);
            assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for p in 0..(2 * order) {
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                let got = r.integrate(-1.0, 1.0, |x| x.powi(p as i32));
                assert!((got - exact).abs() < 1e-10, "order {order} degree {p}: {got} vs {exact}");
            }
            // affine image on [0, 3]
            let got = r.integrate(0.0, 3.0, |x| x.powi((2 * order - 1) as i32));
            let exact = 3f64.powi(2 * order as i32) / (2 * order) as f64;
            assert!((got - exact).abs() <= 1e-10 * exact);
        }
    }

    #[test]
    fn single_precision_path() {
        let j = hermite_poly(2, 1.5f32);
        assert!((j.value - 1.25).abs() < 1e-6);
        let r = gauss_legendre::<f32>(3);
        assert!((r.integrate(-1.0, 1.0, |x| x * x * x * x) - 0.4).abs() < 1e-5);
    }
}
