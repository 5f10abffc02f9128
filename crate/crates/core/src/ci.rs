//! Conditional-independence scores from a fitted map.
//!
//! For a pair `(u, v)` the score is the mean over samples of the squared mixed
//! partial `∂²_{uv} log p`. Its spread is estimated with the delta method
//! through the Fisher information of the map coefficients. All derivatives
//! are taken in the standardized coordinates of the fitted map.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SampleMatrix;
use crate::error::{Error, Result};
use crate::linalg::{symmetrize_from_upper, syr_upper, Cholesky};
use crate::scalar::{cst, from_usize, to_f64, Scalar};
use crate::transport::{fit_map, FitOptions, FittedMap, MapEvaluator, TriangularMapSpec};

/// How the threshold is formed from the delta-method quadratic form `ς`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `τ = δ·√ς`.
    #[default]
    Sqrt,
    /// `τ = δ·ς`.
    Raw,
}

impl ThresholdRule {
    pub fn tau(self, delta: f64, sigma: f64) -> f64 {
        match self {
            ThresholdRule::Sqrt => delta * sigma.max(0.0).sqrt(),
            ThresholdRule::Raw => delta * sigma.max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CiOptions {
    pub degree: usize,
    pub delta: f64,
    pub threshold: ThresholdRule,
    /// Fisher regularization; `None` uses `1e-8 · trace / dim`.
    pub fisher_lambda: Option<f64>,
    /// Extra random variable orders to average over (0 keeps only the canonical order).
    pub random_orders: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for CiOptions {
    fn default() -> Self {
        Self {
            degree: 2,
            delta: 2.0,
            threshold: ThresholdRule::Sqrt,
            fisher_lambda: None,
            random_orders: 0,
            seed: 0,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate<T> {
    pub dim: usize,
    /// Row-major `dim × dim`, regularization included.
    pub matrix: Vec<T>,
    pub lambda: T,
}

impl<T: Scalar> FisherEstimate<T> {
    pub fn get(&self, i: usize, j: usize) -> T {
        self.matrix[i * self.dim + j]
    }

    pub fn cholesky(&self) -> Result<Cholesky<T>> {
        Cholesky::factor(&self.matrix, self.dim)
            .ok_or_else(|| Error::Conditioning(format!("Fisher information of size {} is singular", self.dim)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaReport {
    /// Column indices of the subset, ascending; tables are indexed by position.
    pub subset: Vec<usize>,
    pub n: usize,
    pub delta: f64,
    pub threshold: ThresholdRule,
    pub omega: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub tau: Vec<Vec<f64>>,
    /// `true` means independent.
    pub decisions: Vec<Vec<bool>>,
}

impl OmegaReport {
    /// Build the report from score tables, applying the threshold rule.
    pub fn from_tables(
        subset: Vec<usize>,
        n: usize,
        omega: Vec<Vec<f64>>,
        sigma: Vec<Vec<f64>>,
        delta: f64,
        threshold: ThresholdRule,
    ) -> Self {
        let m = subset.len();
        let mut tau = vec![vec![0.0; m]; m];
        let mut decisions = vec![vec![false; m]; m];
        for u in 0..m {
            for v in 0..m {
                if u != v {
                    tau[u][v] = threshold.tau(delta, sigma[u][v]);
                    decisions[u][v] = omega[u][v] < tau[u][v];
                }
            }
        }
        Self { subset, n, delta, threshold, omega, sigma, tau, decisions }
    }

    /// Position of a column index inside the subset.
    pub fn position(&self, column: usize) -> Option<usize> {
        self.subset.iter().position(|&c| c == column)
    }

    /// Decision for two column indices of the subset.
    pub fn independent(&self, a: usize, b: usize) -> Option<bool> {
        Some(self.decisions[self.position(a)?][self.position(b)?])
    }

    /// Same scores thresholded with a different `δ`.
    pub fn with_delta(&self, delta: f64) -> Self {
        Self::from_tables(self.subset.clone(), self.n, self.omega.clone(), self.sigma.clone(), delta, self.threshold)
    }
}

fn check_pair(d: usize, k: usize, l: usize) -> Result<()> {
    if k == l {
        return Err(Error::Inconsistent(format!("pair ({k}, {l}) must be distinct")));
    }
    if k >= d || l >= d {
        return Err(Error::Dimension { expected: d, got: k.max(l) + 1 });
    }
    Ok(())
}

fn degenerate(sample: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::DegenerateMap { component, .. } => Error::DegenerateMap { sample, component },
        other => other,
    }
}

/// `∂²_{kl} log p` at the raw point `x`, in standardized coordinates.
pub fn log_density_mixed_second<T: Scalar>(fitted: &FittedMap<T>, x: &[T], k: usize, l: usize) -> Result<T> {
    check_pair(fitted.dim(), k, l)?;
    let ev = fitted.evaluator();
    mixed_second_at(&ev, fitted.alpha_star.as_slice(), &fitted.standardize(x), k, l)
}

fn mixed_second_at<T: Scalar>(ev: &MapEvaluator<T>, alpha: &[T], z: &[T], k: usize, l: usize) -> Result<T> {
    ev.check(alpha, z)?;
    let tables = ev.tables(z);
    let mut total = T::zero();
    for m in k.max(l)..ev.dim() {
        let cd = ev.component_derivs(m, &tables, z, ev.local(alpha, m), false);
        if !(cd.h != T::zero()) || !cd.h.is_finite() {
            return Err(Error::DegenerateMap { sample: 0, component: m });
        }
        total = total + cd.log_term_mixed(k, l);
    }
    Ok(total)
}

/// Score tables and gradients accumulated in a single pass over the samples.
struct Pass<T> {
    /// `Σ_i D_uv²` for `u < v`, indexed by pair.
    sum_sq: Vec<T>,
    /// `Σ_i D_uv ∇_α D_uv` per pair (empty unless requested).
    sum_dgrad: Vec<Vec<T>>,
    /// `Σ_i s_i s_iᵀ` upper triangle (empty unless requested).
    score_outer: Vec<T>,
}

fn pair_list(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|u| (u + 1..d).map(move |v| (u, v))).collect()
}

fn pass<T: Scalar>(fitted: &FittedMap<T>, samples: &SampleMatrix<T>, grads: bool, fisher: bool) -> Result<Pass<T>> {
    let d = fitted.dim();
    if samples.d() != d {
        return Err(Error::Dimension { expected: d, got: samples.d() });
    }
    let ev = fitted.evaluator();
    let alpha = fitted.alpha_star.as_slice();
    let np = alpha.len();
    let pairs = pair_list(d);
    let mut out = Pass {
        sum_sq: vec![T::zero(); pairs.len()],
        sum_dgrad: if grads { vec![vec![T::zero(); np]; pairs.len()] } else { Vec::new() },
        score_outer: if fisher { vec![T::zero(); np * np] } else { Vec::new() },
    };
    let need_grads = grads || fisher;
    let two = cst::<T>(2.0);
    let mut local_grad = Vec::new();
    let mut score = vec![T::zero(); np];
    let mut dvals = vec![T::zero(); pairs.len()];
    for (i, x) in samples.rows().enumerate() {
        let z = fitted.standardize(x);
        let tables = ev.tables(&z);
        let derivs: Vec<_> = (0..d)
            .map(|m| {
                let cd = ev.component_derivs(m, &tables, &z, ev.local(alpha, m), need_grads);
                if !(cd.h != T::zero()) || !cd.h.is_finite() || !cd.s.is_finite() {
                    Err(Error::DegenerateMap { sample: i, component: m })
                } else {
                    Ok(cd)
                }
            })
            .collect::<Result<_>>()?;
        for (q, &(u, v)) in pairs.iter().enumerate() {
            dvals[q] = (v..d).fold(T::zero(), |acc, m| acc + derivs[m].log_term_mixed(u, v));
            out.sum_sq[q] = out.sum_sq[q] + dvals[q] * dvals[q];
        }
        if grads {
            for (q, &(u, v)) in pairs.iter().enumerate() {
                for (m, cd) in derivs.iter().enumerate().skip(v) {
                    let off = ev.offsets[m];
                    let p = ev.comps[m].n_local();
                    local_grad.resize(p, T::zero());
                    cd.log_term_mixed_grad(u, v, &mut local_grad);
                    let acc = &mut out.sum_dgrad[q][off..off + p];
                    for r in 0..p {
                        acc[r] = acc[r] + dvals[q] * local_grad[r];
                    }
                }
            }
        }
        if fisher {
            for (m, cd) in derivs.iter().enumerate() {
                let g = cd.grads.as_ref().expect("gradients requested");
                let off = ev.offsets[m];
                for r in 0..g.p {
                    score[off + r] = -cd.s * g.s[r] + two * g.h[r] / cd.h;
                }
            }
            syr_upper(&mut out.score_outer, np, T::one(), &score);
        }
    }
    Ok(out)
}

fn pair_index(d: usize, k: usize, l: usize) -> usize {
    let (u, v) = (k.min(l), k.max(l));
    u * d - u * (u + 1) / 2 + (v - u - 1)
}

/// Mean squared mixed partial over the samples.
pub fn omega_score<T: Scalar>(fitted: &FittedMap<T>, samples: &SampleMatrix<T>, k: usize, l: usize) -> Result<T> {
    check_pair(fitted.dim(), k, l)?;
    let n = samples.n();
    if n == 0 {
        return Err(Error::Data("no samples".into()));
    }
    let mut sum = T::zero();
    let ev = fitted.evaluator();
    for (i, x) in samples.rows().enumerate() {
        let v =
            mixed_second_at(&ev, fitted.alpha_star.as_slice(), &fitted.standardize(x), k, l).map_err(degenerate(i))?;
        sum = sum + v * v;
    }
    Ok(sum / from_usize::<T>(n))
}

fn finish_fisher<T: Scalar>(mut matrix: Vec<T>, np: usize, n: usize, lambda: Option<f64>) -> FisherEstimate<T> {
    symmetrize_from_upper(&mut matrix, np);
    let nf = from_usize::<T>(n);
    matrix.iter_mut().for_each(|v| *v = *v / nf);
    let trace = (0..np).fold(T::zero(), |acc, i| acc + matrix[i * np + i]);
    let lambda = match lambda {
        Some(l) => cst::<T>(l),
        None => cst::<T>(1e-8) * trace / from_usize::<T>(np.max(1)),
    };
    for i in 0..np {
        matrix[i * np + i] = matrix[i * np + i] + lambda;
    }
    FisherEstimate { dim: np, matrix, lambda }
}

/// Mean outer product of per-sample scores `∇_α log p` plus `λ I`.
pub fn fisher_information<T: Scalar>(
    fitted: &FittedMap<T>,
    samples: &SampleMatrix<T>,
    lambda: Option<f64>,
) -> Result<FisherEstimate<T>> {
    if samples.n() < 2 {
        return Err(Error::Data(format!("need at least 2 samples, got {}", samples.n())));
    }
    let p = pass(fitted, samples, false, true)?;
    Ok(finish_fisher(p.score_outer, fitted.alpha_star.len(), samples.n(), lambda))
}

fn quad_form<T: Scalar>(chol: &Cholesky<T>, grad: &[T], n: usize) -> T {
    chol.inv_quad_form(grad) / from_usize::<T>(n)
}

/// Delta-method quadratic form `(1/n) ∇Ωᵀ Γ⁻¹ ∇Ω`.
pub fn omega_sigma<T: Scalar>(
    fitted: &FittedMap<T>,
    samples: &SampleMatrix<T>,
    k: usize,
    l: usize,
    fisher: &FisherEstimate<T>,
) -> Result<T> {
    check_pair(fitted.dim(), k, l)?;
    if fisher.dim != fitted.alpha_star.len() {
        return Err(Error::Dimension { expected: fitted.alpha_star.len(), got: fisher.dim });
    }
    let n = samples.n();
    if n == 0 {
        return Err(Error::Data("no samples".into()));
    }
    let chol = fisher.cholesky()?;
    let p = pass(fitted, samples, true, false)?;
    let q = pair_index(fitted.dim(), k, l);
    let scale = cst::<T>(2.0) / from_usize::<T>(n);
    let grad: Vec<T> = p.sum_dgrad[q].iter().map(|&v| v * scale).collect();
    Ok(quad_form(&chol, &grad, n).max(T::zero()))
}

/// Ω and ς tables for a fitted map over all its variables, in one pass.
pub fn omega_tables<T: Scalar>(
    fitted: &FittedMap<T>,
    samples: &SampleMatrix<T>,
    lambda: Option<f64>,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let d = fitted.dim();
    let n = samples.n();
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 samples, got {n}")));
    }
    let p = pass(fitted, samples, true, true)?;
    let fisher = finish_fisher(p.score_outer, fitted.alpha_star.len(), n, lambda);
    let chol = fisher.cholesky()?;
    let nf = from_usize::<T>(n);
    let scale = cst::<T>(2.0) / nf;
    let mut omega = vec![vec![0.0; d]; d];
    let mut sigma = vec![vec![0.0; d]; d];
    for (q, (u, v)) in pair_list(d).into_iter().enumerate() {
        let om = to_f64(p.sum_sq[q] / nf);
        let grad: Vec<T> = p.sum_dgrad[q].iter().map(|&g| g * scale).collect();
        let sg = to_f64(quad_form(&chol, &grad, n)).max(0.0);
        omega[u][v] = om;
        omega[v][u] = om;
        sigma[u][v] = sg;
        sigma[v][u] = sg;
    }
    Ok((omega, sigma))
}

/// Fit a map on the columns `subset` (ascending) and threshold every pair.
pub fn omega_report<T: Scalar>(samples: &SampleMatrix<T>, subset: &[usize], opts: &CiOptions) -> Result<OmegaReport> {
    let mut z: Vec<usize> = subset.to_vec();
    z.sort_unstable();
    z.dedup();
    let wrap = |e: Error| Error::Subset { subset: z.clone(), source: Box::new(e) };
    if z.len() < 2 {
        return Err(wrap(Error::Inconsistent("subset needs at least two variables".into())));
    }
    if !(opts.delta > 0.0) {
        return Err(Error::Config(format!("delta must be positive, got {}", opts.delta)));
    }
    let m = z.len();
    let spec = TriangularMapSpec::new(m, opts.degree);
    let mut orders = vec![(0..m).collect::<Vec<_>>()];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_orders {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        orders.push(perm);
    }
    let mut omega = vec![vec![0.0; m]; m];
    let mut sigma = vec![vec![0.0; m]; m];
    for perm in &orders {
        let cols: Vec<usize> = perm.iter().map(|&p| z[p]).collect();
        let sub = samples.select_columns(&cols).map_err(wrap)?;
        let fitted = fit_map(&spec, &sub, &opts.fit).map_err(wrap)?;
        let (om, sg) = omega_tables(&fitted, &sub, opts.fisher_lambda).map_err(wrap)?;
        for a in 0..m {
            for b in 0..m {
                omega[perm[a]][perm[b]] += om[a][b];
                sigma[perm[a]][perm[b]] += sg[a][b];
            }
        }
    }
    let r = orders.len() as f64;
    omega.iter_mut().flatten().for_each(|v| *v /= r);
    sigma.iter_mut().flatten().for_each(|v| *v /= r);
    Ok(OmegaReport::from_tables(z, samples.n(), omega, sigma, opts.delta, opts.threshold))
}
