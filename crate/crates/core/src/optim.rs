//! Deterministic smooth minimizers: damped Newton and BFGS, both with
//! Armijo backtracking. Objectives return `None` for infeasible points, which
//! the line search treats as a rejected step.

use crate::linalg::{dot, inf_norm, Cholesky};
use crate::scalar::{cst, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 200, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<T>,
}

const ARMIJO: f64 = 1e-4;

fn step_to<T: Scalar>(x: &[T], dir: &[T], t: T) -> Vec<T> {
    x.iter().zip(dir).map(|(&a, &b)| a + t * b).collect()
}

/// Backtracking along `dir` from `x`; returns the accepted point and value.
fn backtrack<T: Scalar, V>(x: &[T], f0: T, slope: T, dir: &[T], max: usize, value: &mut V) -> Option<(Vec<T>, T)>
where
    V: FnMut(&[T]) -> Option<T>,
{
    let mut t = T::one();
    let half = cst::<T>(0.5);
    let c = cst::<T>(ARMIJO);
    for _ in 0..=max {
        let cand = step_to(x, dir, t);
        if let Some(f) = value(&cand) {
            if f.is_finite() && f <= f0 + c * t * slope {
                return Some((cand, f));
            }
        }
        t = t * half;
    }
    None
}

/// Newton's method on `full(x) -> (f, ∇f, ∇²f)` (Hessian row-major). When the
/// Hessian is not positive definite, a multiple of the identity is added until
/// it factors.
pub fn newton_minimize<T, F, V>(
    x0: Vec<T>,
    mut full: F,
    mut value: V,
    opts: &MinimizeOptions,
) -> Option<MinimizeResult<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Option<(T, Vec<T>, Vec<T>)>,
    V: FnMut(&[T]) -> Option<T>,
{
    let n = x0.len();
    let tol = cst::<T>(opts.tol);
    let mut x = x0;
    let (mut f, mut g, mut h) = full(&x)?;
    if !f.is_finite() {
        return None;
    }
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        if inf_norm(&g) <= tol {
            converged = true;
            break;
        }
        let scale = (0..n).fold(T::zero(), |m, i| m.max(h[i * n + i].abs())) + T::one();
        let mut mu = T::zero();
        let mut accepted = None;
        for _ in 0..30 {
            let mut hd = h.clone();
            for i in 0..n {
                hd[i * n + i] = hd[i * n + i] + mu;
            }
            if let Some(ch) = Cholesky::factor(&hd, n) {
                let dir: Vec<T> = ch.solve(&g).into_iter().map(|v| -v).collect();
                let slope = dot(&g, &dir);
                if slope < T::zero() {
                    if let Some(found) = backtrack(&x, f, slope, &dir, opts.max_backtracks, &mut value) {
                        accepted = Some(found);
                        break;
                    }
                }
            }
            mu = if mu == T::zero() { cst::<T>(1e-8) * scale } else { mu * cst(10.0) };
        }
        let Some((xn, fnew)) = accepted else { break };
        iterations += 1;
        let stalled = f - fnew <= T::epsilon() * (T::one() + f.abs());
        x = xn;
        let Some((f2, g2, h2)) = full(&x) else { break };
        f = f2.min(fnew);
        g = g2;
        h = h2;
        history.push(f);
        if stalled && inf_norm(&g) > tol {
            // no measurable progress is possible at this precision
            break;
        }
    }
    if inf_norm(&g) <= tol {
        converged = true;
    }
    Some(MinimizeResult { grad_norm: inf_norm(&g), x, value: f, iterations, converged, history })
}

/// BFGS on `eval(x) -> (f, ∇f)` with an inverse-Hessian update.
pub fn bfgs_minimize<T, F>(x0: Vec<T>, mut eval: F, opts: &MinimizeOptions) -> Option<MinimizeResult<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Option<(T, Vec<T>)>,
{
    let n = x0.len();
    let tol = cst::<T>(opts.tol);
    let mut x = x0;
    let (mut f, mut g) = eval(&x)?;
    if !f.is_finite() {
        return None;
    }
    let identity = |n: usize| {
        let mut m = vec![T::zero(); n * n];
        (0..n).for_each(|i| m[i * n + i] = T::one());
        m
    };
    let mut hinv = identity(n);
    let mut history = vec![f];
    let mut iterations = 0;
    let mut converged = false;
    let mut restarted = false;
    while iterations < opts.max_iters {
        if inf_norm(&g) <= tol {
            converged = true;
            break;
        }
        let mut dir: Vec<T> = (0..n).map(|i| -dot(&hinv[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < T::zero()) {
            hinv = identity(n);
            dir = g.iter().map(|&v| -v).collect();
            slope = dot(&g, &dir);
        }
        let mut value = |p: &[T]| eval(p).map(|r| r.0);
        let Some((xn, fnew)) = backtrack(&x, f, slope, &dir, opts.max_backtracks, &mut value) else {
            if restarted {
                break;
            }
            hinv = identity(n);
            restarted = true;
            continue;
        };
        restarted = false;
        let Some((_, gn)) = eval(&xn) else { break };
        let s: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = gn.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            let rho = T::one() / sy;
            let hy: Vec<T> = (0..n).map(|i| dot(&hinv[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] =
                        hinv[i * n + j] - rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        iterations += 1;
        let stalled = f - fnew <= T::epsilon() * (T::one() + f.abs());
        x = xn;
        f = fnew;
        g = gn;
        history.push(f);
        if stalled && inf_norm(&g) > tol {
            break;
        }
    }
    if inf_norm(&g) <= tol {
        converged = true;
    }
    Some(MinimizeResult { grad_norm: inf_norm(&g), x, value: f, iterations, converged, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        let h = vec![2.0 - 400.0 * (b - 3.0 * a * a), -400.0 * a, -400.0 * a, 200.0];
        (f, g, h)
    }

    #[test]
    fn newton_rosenbrock() {
        let r = newton_minimize(
            vec![-1.2, 1.0],
            |x| Some(rosenbrock(x)),
            |x| Some(rosenbrock(x).0),
            &MinimizeOptions { tol: 1e-9, max_iters: 200, max_backtracks: 40 },
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bfgs_rosenbrock() {
        let r = bfgs_minimize(
            vec![-1.2, 1.0],
            |x| {
                let (f, g, _) = rosenbrock(x);
                Some((f, g))
            },
            &MinimizeOptions { tol: 1e-8, max_iters: 500, max_backtracks: 40 },
        )
        .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // minimum of (x-3)^2 but x > 2 is infeasible
        let r = newton_minimize(
            vec![0.0f64],
            |x| (x[0] <= 2.0).then(|| ((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)], vec![2.0])),
            |x| (x[0] <= 2.0).then(|| (x[0] - 3.0).powi(2)),
            &MinimizeOptions { tol: 1e-12, max_iters: 60, max_backtracks: 60 },
        )
        .unwrap();
        assert!(r.x[0] <= 2.0 && r.x[0] > 1.9);
        assert!(!r.converged);
    }
}
