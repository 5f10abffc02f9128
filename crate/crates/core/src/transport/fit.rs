//! Maximum-likelihood fit of the map coefficients.
//!
//! The negative log-likelihood separates over components, so each component is
//! fitted on its own with Newton steps on cached per-sample quantities:
//! `S = Φ·c + AᵀG A` and `h(x) = Aᵀ g(x_k)`.

use serde::{Deserialize, Serialize};

use crate::data::{SampleMatrix, Standardization};
use crate::error::{Error, Result};
use crate::optim::{newton_minimize, MinimizeOptions};
use crate::scalar::{cst, from_usize, Scalar};

use super::eval::{ComponentPlan, MapEvaluator};
use super::spec::{ParamVector, TriangularMapSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Stop when the gradient inf-norm of every component falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Recorded for provenance; the optimizer itself is deterministic.
    pub seed: u64,
    /// Coefficient of `Σ α²` added to the objective.
    pub ridge: f64,
    /// Standardize columns before fitting.
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 100, seed: 0, ridge: 1e-8, standardize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDiagnostics<T> {
    pub objective: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics<T> {
    /// Final penalized negative log-likelihood per sample.
    pub objective: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    pub components: Vec<ComponentDiagnostics<T>>,
    /// Total objective after every accepted step, first entry at the start.
    pub history: Vec<T>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedMap<T> {
    pub spec: TriangularMapSpec,
    pub alpha_star: ParamVector<T>,
    pub diagnostics: FitDiagnostics<T>,
    pub standardization: Standardization<T>,
    pub options: FitOptions,
}

impl<T: Scalar> FittedMap<T> {
    /// Wrap known coefficients with an identity standardization.
    pub fn from_params(spec: &TriangularMapSpec, alpha: ParamVector<T>) -> Result<Self> {
        MapEvaluator::<T>::new(spec)?;
        if alpha.len() != spec.n_coeffs() {
            return Err(Error::Dimension { expected: spec.n_coeffs(), got: alpha.len() });
        }
        let diagnostics = FitDiagnostics {
            objective: T::nan(),
            grad_norm: T::nan(),
            iterations: 0,
            converged: false,
            components: Vec::new(),
            history: Vec::new(),
            warnings: Vec::new(),
        };
        Ok(Self {
            spec: spec.clone(),
            alpha_star: alpha,
            diagnostics,
            standardization: Standardization::identity(spec.dim),
            options: FitOptions { standardize: false, ..FitOptions::default() },
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn evaluator(&self) -> MapEvaluator<T> {
        MapEvaluator::new(&self.spec).expect("validated at fit time")
    }

    pub fn standardize(&self, x: &[T]) -> Vec<T> {
        self.standardization.apply_point(x)
    }

    /// Map applied to a raw observation.
    pub fn transform(&self, x: &[T]) -> Result<Vec<T>> {
        self.evaluator().map_eval(self.alpha_star.as_slice(), &self.standardize(x))
    }

    /// Log-density of the fitted model at a raw observation.
    pub fn log_density(&self, x: &[T]) -> Result<T> {
        let z = self.standardize(x);
        Ok(self.evaluator().log_pullback(self.alpha_star.as_slice(), &z)? + self.standardization.log_jacobian())
    }
}

/// Per-sample quantities of one component that do not depend on α.
pub(crate) struct ComponentCache<T> {
    n: usize,
    nc: usize,
    nh: usize,
    ne: usize,
    h_last: Vec<usize>,
    phi: Vec<T>,
    pv: Vec<T>,
    gram: Vec<T>,
    gx: Vec<T>,
}

impl<T: Scalar> ComponentCache<T> {
    pub fn build(ev: &MapEvaluator<T>, k: usize, samples: &SampleMatrix<T>) -> Self {
        let plan: &ComponentPlan = &ev.comps[k];
        let (nc, nh, ne) = (plan.nc, plan.nh, plan.n_last());
        let n = samples.n();
        let mut cache = Self {
            n,
            nc,
            nh,
            ne,
            h_last: plan.h_last.clone(),
            phi: Vec::with_capacity(n * nc),
            pv: Vec::with_capacity(n * nh),
            gram: Vec::with_capacity(n * ne * ne),
            gx: Vec::with_capacity(n * ne),
        };
        for x in samples.rows() {
            let x = &x[..=k];
            let tables = ev.tables(x);
            let (phi, pv) = ev.prefix_values(plan, &tables);
            cache.phi.extend(phi);
            cache.pv.extend(pv);
            cache.gram.extend(ev.gram(plan, x[k]));
            cache.gx.extend(ev.last_at(plan, x[k]).into_iter().map(|j| j.value));
        }
        cache
    }

    #[cfg(test)]
    pub fn n_params(&self) -> usize {
        self.nc + self.nh
    }

    /// Mean of `½S² − log h²` over samples plus `½ log 2π`, with optional
    /// gradient and Hessian. Errors carry the index of a sample where `h = 0`.
    pub fn objective(
        &self,
        theta: &[T],
        want_grad: bool,
        want_hess: bool,
    ) -> std::result::Result<(T, Vec<T>, Vec<T>), usize> {
        let (nc, nh, ne) = (self.nc, self.nh, self.ne);
        let p = nc + nh;
        let two = cst::<T>(2.0);
        let half = cst::<T>(0.5);
        let mut val = T::zero();
        let mut grad = vec![T::zero(); if want_grad { p } else { 0 }];
        let mut hess = vec![T::zero(); if want_hess { p * p } else { 0 }];
        let mut a = vec![T::zero(); ne];
        let mut ga = vec![T::zero(); ne];
        let mut gs = vec![T::zero(); p];
        let mut gh = vec![T::zero(); p];
        for i in 0..self.n {
            let phi = &self.phi[i * nc..(i + 1) * nc];
            let pv = &self.pv[i * nh..(i + 1) * nh];
            let g = &self.gram[i * ne * ne..(i + 1) * ne * ne];
            let gx = &self.gx[i * ne..(i + 1) * ne];
            let c = phi.iter().zip(&theta[..nc]).fold(T::zero(), |acc, (&u, &w)| acc + u * w);
            a.iter_mut().for_each(|v| *v = T::zero());
            for (s, &pvs) in pv.iter().enumerate() {
                let e = self.h_last[s];
                a[e] = a[e] + theta[nc + s] * pvs;
            }
            for e in 0..ne {
                ga[e] = (0..ne).fold(T::zero(), |acc, f| acc + g[e * ne + f] * a[f]);
            }
            let s_val = c + (0..ne).fold(T::zero(), |acc, e| acc + a[e] * ga[e]);
            let h = (0..ne).fold(T::zero(), |acc, e| acc + a[e] * gx[e]);
            let h2 = h * h;
            if !(h2 > T::zero()) || !h2.is_finite() || !s_val.is_finite() {
                return Err(i);
            }
            val = val + half * s_val * s_val - h2.ln();
            if !want_grad {
                continue;
            }
            gs[..nc].copy_from_slice(phi);
            gh[..nc].iter_mut().for_each(|v| *v = T::zero());
            for (s, &pvs) in pv.iter().enumerate() {
                let e = self.h_last[s];
                gs[nc + s] = two * pvs * ga[e];
                gh[nc + s] = pvs * gx[e];
            }
            let inv_h = T::one() / h;
            for r in 0..p {
                grad[r] = grad[r] + s_val * gs[r] - two * gh[r] * inv_h;
            }
            if !want_hess {
                continue;
            }
            let w = two / h2;
            for r in 0..p {
                let (sr, hr) = (gs[r], gh[r]);
                let row = &mut hess[r * p..(r + 1) * p];
                for q in r..p {
                    row[q] = row[q] + sr * gs[q] + w * hr * gh[q];
                }
            }
            let ts = two * s_val;
            for s in 0..nh {
                let es = self.h_last[s];
                let f = ts * pv[s];
                let row = &mut hess[(nc + s) * p..(nc + s + 1) * p];
                for q in s..nh {
                    row[nc + q] = row[nc + q] + f * pv[q] * g[es * ne + self.h_last[q]];
                }
            }
        }
        let nf = from_usize::<T>(self.n);
        let const_term = cst::<T>(0.5 * (2.0 * std::f64::consts::PI).ln());
        val = val / nf + const_term;
        grad.iter_mut().for_each(|v| *v = *v / nf);
        if want_hess {
            for r in 0..p {
                for q in r..p {
                    let v = hess[r * p + q] / nf;
                    hess[r * p + q] = v;
                    hess[q * p + r] = v;
                }
            }
        }
        Ok((val, grad, hess))
    }
}

fn check_dims<T: Scalar>(spec: &TriangularMapSpec, samples: &SampleMatrix<T>) -> Result<()> {
    if samples.d() != spec.dim {
        return Err(Error::Dimension { expected: spec.dim, got: samples.d() });
    }
    if samples.n() == 0 {
        return Err(Error::Data("no samples".into()));
    }
    Ok(())
}

/// Mean negative log pullback density and its exact gradient in α.
pub fn nll_objective<T: Scalar>(
    spec: &TriangularMapSpec,
    alpha: &ParamVector<T>,
    samples: &SampleMatrix<T>,
) -> Result<(T, Vec<T>)> {
    check_dims(spec, samples)?;
    let ev = MapEvaluator::new(spec)?;
    if alpha.len() != ev.n_coeffs() {
        return Err(Error::Dimension { expected: ev.n_coeffs(), got: alpha.len() });
    }
    let mut value = T::zero();
    let mut grad = Vec::with_capacity(alpha.len());
    for k in 0..spec.dim {
        let cache = ComponentCache::build(&ev, k, samples);
        let (v, g, _) = cache
            .objective(ev.local(alpha.as_slice(), k), true, false)
            .map_err(|sample| Error::DegenerateMap { sample, component: k })?;
        value = value + v;
        grad.extend(g);
    }
    Ok((value, grad))
}

fn with_ridge<T: Scalar>(ridge: T, theta: &[T], out: (T, Vec<T>, Vec<T>), want_hess: bool) -> (T, Vec<T>, Vec<T>) {
    let (mut v, mut g, mut h) = out;
    let p = theta.len();
    let two = cst::<T>(2.0);
    for r in 0..p {
        v = v + ridge * theta[r] * theta[r];
        if !g.is_empty() {
            g[r] = g[r] + two * ridge * theta[r];
        }
        if want_hess {
            h[r * p + r] = h[r * p + r] + two * ridge;
        }
    }
    (v, g, h)
}

/// Fit the map to the samples by penalized maximum likelihood.
pub fn fit_map<T: Scalar>(
    spec: &TriangularMapSpec,
    samples: &SampleMatrix<T>,
    opts: &FitOptions,
) -> Result<FittedMap<T>> {
    check_dims(spec, samples)?;
    if let Some((i, j)) = samples.first_non_finite() {
        return Err(Error::Data(format!("non-finite value at row {i}, column {j}")));
    }
    let ev = MapEvaluator::<T>::new(spec)?;
    let standardization =
        if opts.standardize { Standardization::fit(samples)? } else { Standardization::identity(spec.dim) };
    let z = standardization.apply(samples)?;
    let mut warnings = Vec::new();
    if samples.n() < ev.n_coeffs() {
        warnings.push(format!("{} samples for {} coefficients", samples.n(), ev.n_coeffs()));
    }
    let ridge = cst::<T>(opts.ridge);
    let init = spec.identity_params::<T>();
    let minimize = MinimizeOptions { tol: opts.tol, max_iters: opts.max_iters, max_backtracks: 50 };

    let caches: Vec<ComponentCache<T>> = (0..spec.dim).map(|k| ComponentCache::build(&ev, k, &z)).collect();
    let mut current = Vec::with_capacity(spec.dim);
    for (k, cache) in caches.iter().enumerate() {
        let theta = ev.local(init.as_slice(), k);
        let (v, _, _) = cache.objective(theta, false, false).map_err(|i| {
            Error::Data(format!("objective is not finite at initialization (sample {i}, component {k})"))
        })?;
        current.push(with_ridge(ridge, theta, (v, Vec::new(), Vec::new()), false).0);
    }
    if let Some(k) = current.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("objective is not finite at initialization (component {k})")));
    }

    let mut alpha = init.0.clone();
    let mut history = vec![current.iter().copied().sum::<T>()];
    let mut components = Vec::with_capacity(spec.dim);
    for (k, cache) in caches.iter().enumerate() {
        let start = spec.component_range(k).start;
        let theta0 = ev.local(init.as_slice(), k).to_vec();
        let result = newton_minimize(
            theta0,
            |t| cache.objective(t, true, true).ok().map(|o| with_ridge(ridge, t, o, true)),
            |t| cache.objective(t, false, false).ok().map(|o| with_ridge(ridge, t, o, false).0),
            &minimize,
        )
        .ok_or(Error::DegenerateMap { sample: 0, component: k })?;
        let others: T = current.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| *v).sum();
        history.extend(result.history.iter().skip(1).map(|&v| others + v));
        current[k] = result.value;
        alpha[start..start + result.x.len()].copy_from_slice(&result.x);
        components.push(ComponentDiagnostics {
            objective: result.value,
            grad_norm: result.grad_norm,
            iterations: result.iterations,
            converged: result.converged,
        });
    }
    let diagnostics = FitDiagnostics {
        objective: current.iter().copied().sum(),
        grad_norm: components.iter().fold(T::zero(), |m, c| m.max(c.grad_norm)),
        iterations: components.iter().map(|c| c.iterations).sum(),
        converged: components.iter().all(|c| c.converged),
        components,
        history,
        warnings,
    };
    Ok(FittedMap {
        spec: spec.clone(),
        alpha_star: ParamVector(alpha),
        diagnostics,
        standardization,
        options: opts.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, rho: f64, seed: u64) -> SampleMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                if d > 1 {
                    r[1] = rho * r[0] + (1.0 - rho * rho).sqrt() * r[1];
                }
                r
            })
            .collect();
        SampleMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn single_sample_objective() {
        let spec = TriangularMapSpec::new(2, 2);
        let alpha = spec.identity_params::<f64>();
        let x = SampleMatrix::from_rows(&[vec![0.4, -1.3]]).unwrap();
        let (v, _) = nll_objective(&spec, &alpha, &x).unwrap();
        let lp = super::super::log_pullback(&spec, &alpha, &[0.4, -1.3]).unwrap();
        assert!((v + lp).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = TriangularMapSpec::new(2, 2);
        let x = gaussian(50, 2, 0.3, 3);
        let n = spec.n_coeffs();
        let mut alpha = spec.identity_params::<f64>();
        for i in 0..n {
            alpha[i] += 0.1 * ((i as f64) * 2.1).sin();
        }
        let (_, g) = nll_objective(&spec, &alpha, &x).unwrap();
        for i in 0..n {
            let mut ap = alpha.clone();
            let mut am = alpha.clone();
            ap[i] += 1e-6;
            am[i] -= 1e-6;
            let fd = (nll_objective(&spec, &ap, &x).unwrap().0 - nll_objective(&spec, &am, &x).unwrap().0) / 2e-6;
            assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "slot {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let spec = TriangularMapSpec::new(2, 2);
        let x = gaussian(30, 2, 0.3, 5);
        let ev = MapEvaluator::<f64>::new(&spec).unwrap();
        let cache = ComponentCache::build(&ev, 1, &x);
        let p = cache.n_params();
        let mut theta: Vec<f64> = (0..p).map(|i| 0.1 * (i as f64).cos()).collect();
        theta[spec.components[1].c_terms.len()] = 1.0;
        let (_, _, h) = cache.objective(&theta, true, true).unwrap();
        for r in 0..p {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[r] += 1e-6;
            tm[r] -= 1e-6;
            let gp = cache.objective(&tp, true, false).unwrap().1;
            let gm = cache.objective(&tm, true, false).unwrap().1;
            for q in 0..p {
                let fd = (gp[q] - gm[q]) / 2e-6;
                assert!((fd - h[r * p + q]).abs() < 1e-5 * (1.0 + fd.abs()), "({r},{q}) {fd} vs {}", h[r * p + q]);
            }
        }
    }

    #[test]
    fn identity_on_standard_normal() {
        let spec = TriangularMapSpec::new(2, 2);
        let x = gaussian(4000, 2, 0.0, 11);
        let (v, _) = nll_objective(&spec, &spec.identity_params(), &x).unwrap();
        let expect = (2.0 * std::f64::consts::PI).ln() + 1.0;
        assert!((v - expect).abs() < 0.05, "{v} vs {expect}");
    }

    #[test]
    fn fit_standard_normal_and_determinism() {
        let spec = TriangularMapSpec::new(2, 2);
        let x = gaussian(2000, 2, 0.0, 7);
        let f = fit_map(&spec, &x, &FitOptions::default()).unwrap();
        assert!(f.diagnostics.converged, "{:?}", f.diagnostics);
        assert!(f.diagnostics.history.windows(2).all(|w| w[1] <= w[0]));
        let p = f.evaluator().partials(f.alpha_star.as_slice(), &[0.0, 0.0]).unwrap();
        assert!(p.dkk.iter().all(|v| (v - 1.0).abs() < 0.1), "{:?}", p.dkk);
        let g = fit_map(&spec, &x, &FitOptions::default()).unwrap();
        assert_eq!(f.alpha_star, g.alpha_star);
    }

    #[test]
    fn fit_correlated_gaussian_slope() {
        let spec = TriangularMapSpec::new(2, 2);
        let x = gaussian(5000, 2, 0.5, 21);
        let f = fit_map(&spec, &x, &FitOptions::default()).unwrap();
        assert!(f.diagnostics.converged);
        let p = f.evaluator().partials(f.alpha_star.as_slice(), &[0.0, 0.0]).unwrap();
        let target = -0.5 / 0.75f64.sqrt();
        assert!((p.jacobian[1][0] - target).abs() < 0.1 * target.abs(), "{}", p.jacobian[1][0]);
    }

    #[test]
    fn non_finite_data_is_rejected() {
        let spec = TriangularMapSpec::new(2, 1);
        let x = SampleMatrix::from_rows(&[vec![0.0, 1.0], vec![f64::NAN, 0.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(fit_map(&spec, &x, &FitOptions::default()), Err(Error::Data(_))));
    }
}
