//! ANM and PNL losses of causal orderings, and ordering selection within an
//! equivalence class.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SampleMatrix;
use crate::error::{Error, Result};
use crate::graph::{compatible_ordering, enumerate_mec, Dag, Ordering, Pdag};
use crate::hermite::hermite_fn_table;
use crate::linalg::{inf_norm, symmetrize_from_upper, Cholesky};
use crate::transport::{fit_map, FitOptions, FittedMap, TriangularMapSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Anm,
    Pnl,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "anm" => Ok(LossKind::Anm),
            "pnl" => Ok(LossKind::Pnl),
            other => Err(Error::Config(format!("unknown loss kind {other:?}, expected anm or pnl"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    /// Degree of the transport map fitted per ordering.
    pub degree: usize,
    /// Highest Hermite-function degree in `b`.
    pub bk_degree: usize,
    /// Final Huber transition width of the smoothed absolute value.
    pub huber_width: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub fit: FitOptions,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { degree: 3, bk_degree: 3, huber_width: 1e-3, max_iters: 500, tol: 1e-9, fit: FitOptions::default() }
    }
}

/// Recalibration map `B(u) = ∫_0^u b(t)² dt` with
/// `b = Σ_j β_j ψ_j + β_c`; coefficients are `[β_0..β_deg, β_c]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BkSpec {
    pub degree: usize,
}

impl BkSpec {
    pub fn n_coeffs(&self) -> usize {
        self.degree + 2
    }

    /// Coefficients for `B = id`.
    pub fn identity(&self) -> Vec<f64> {
        let mut beta = vec![0.0; self.n_coeffs()];
        beta[self.degree + 1] = 1.0;
        beta
    }

    /// Basis values and derivatives at `u`.
    fn basis(&self, u: f64) -> (Vec<f64>, Vec<f64>) {
        let t = hermite_fn_table(self.degree, u);
        let mut v: Vec<f64> = t.iter().map(|j| j.value).collect();
        let mut d: Vec<f64> = t.iter().map(|j| j.d1).collect();
        v.push(1.0);
        d.push(0.0);
        (v, d)
    }

    /// `(b(u), b'(u))`.
    pub fn eval(&self, beta: &[f64], u: f64) -> (f64, f64) {
        let (v, d) = self.basis(u);
        (dot(beta, &v), dot(beta, &d))
    }

    /// `B'(u) = b(u)²`.
    pub fn derivative(&self, beta: &[f64], u: f64) -> f64 {
        self.eval(beta, u).0.powi(2)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BkFit {
    pub beta: Vec<f64>,
    /// Sum over samples of absolute residuals at `beta`.
    pub loss: f64,
    /// Smoothed objective (per sample) at `beta`.
    pub surrogate: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingScore {
    pub ordering: Ordering,
    pub kind: LossKind,
    pub losses: Vec<f64>,
    pub gamma: Vec<f64>,
    pub total: f64,
    pub bk: Vec<BkFit>,
}

/// Component `k` of the map and its partials at every (standardized) sample.
struct ComponentData {
    k: usize,
    /// `S_k(x_i)`.
    s: Vec<f64>,
    /// `∂_k S_k(x_i)`.
    d: Vec<f64>,
    /// `∂_l S_k(x_i)` for `l < k`, sample-major.
    jac: Vec<f64>,
    /// `∂_l ∂_k S_k(x_i)` for `l < k`, sample-major.
    mixed: Vec<f64>,
}

fn component_data(fitted: &FittedMap<f64>, samples: &SampleMatrix<f64>) -> Result<Vec<ComponentData>> {
    let d = fitted.dim();
    if samples.d() != d {
        return Err(Error::Dimension { expected: d, got: samples.d() });
    }
    let ev = fitted.evaluator();
    let alpha = fitted.alpha_star.as_slice();
    let mut out: Vec<ComponentData> =
        (0..d).map(|k| ComponentData { k, s: Vec::new(), d: Vec::new(), jac: Vec::new(), mixed: Vec::new() }).collect();
    for (i, row) in samples.rows().enumerate() {
        let z = fitted.standardize(row);
        let values = ev.map_eval(alpha, &z).map_err(|_| Error::DegenerateMap { sample: i, component: 0 })?;
        let p = ev.partials(alpha, &z)?;
        for (k, c) in out.iter_mut().enumerate() {
            c.s.push(values[k]);
            c.d.push(p.dkk[k]);
            for l in 0..k {
                c.jac.push(p.jacobian[k][l]);
                c.mixed.push(p.hessians[k][l][k]);
            }
        }
    }
    Ok(out)
}

fn huber(r: f64, w: f64) -> (f64, f64) {
    if r.abs() <= w {
        (r * r / (2.0 * w), r / w)
    } else {
        (r.abs() - 0.5 * w, r.signum())
    }
}

/// Widths from 1 down to the target, each solve warm-started from the last.
fn continuation(target: f64) -> Vec<f64> {
    let mut out: Vec<f64> = (0..).map(|i| 10f64.powi(-i)).take_while(|w| *w > target * 1.000_001).collect();
    out.push(target);
    out
}

/// Residuals and their Jacobian (row-major, one row per residual).
struct Residuals {
    r: Vec<f64>,
    jac: Vec<f64>,
}

/// `(1/n) Σ huber(r_i)`.
fn smoothed_value(r: &[f64], w: f64, n: f64) -> f64 {
    r.iter().map(|&v| huber(v, w).0).sum::<f64>() / n
}

/// Minimize `(1/n) Σ huber(r_i(β))` by damped Gauss–Newton with the
/// reweighting `min(1/w, 1/|r_i|)`, over a decreasing sequence of widths.
fn minimize_huber<F>(beta0: Vec<f64>, n: f64, opts: &ScoreOptions, mut residuals: F) -> (Vec<f64>, f64, usize, bool)
where
    F: FnMut(&[f64]) -> Option<Residuals>,
{
    let p = beta0.len();
    let mut beta = beta0;
    let mut iterations = 0;
    let mut converged = false;
    let Some(mut cur) = residuals(&beta) else { return (beta, f64::NAN, 0, false) };
    let mut value = f64::NAN;
    for w in continuation(opts.huber_width) {
        value = smoothed_value(&cur.r, w, n);
        let mut mu = 1e-3;
        converged = false;
        for _ in 0..opts.max_iters {
            let mut g = vec![0.0; p];
            let mut h = vec![0.0; p * p];
            for (i, &ri) in cur.r.iter().enumerate() {
                let row = &cur.jac[i * p..(i + 1) * p];
                let (_, dh) = huber(ri, w);
                let omega = 1.0 / ri.abs().max(w);
                for a in 0..p {
                    g[a] += dh * row[a] / n;
                    for b in a..p {
                        h[a * p + b] += omega * row[a] * row[b] / n;
                    }
                }
            }
            symmetrize_from_upper(&mut h, p);
            if inf_norm(&g) <= opts.tol {
                converged = true;
                break;
            }
            iterations += 1;
            let mut accepted = false;
            for _ in 0..40 {
                let mut damped = h.clone();
                let scale = (0..p).map(|a| h[a * p + a]).fold(0.0f64, f64::max).max(1e-12);
                for a in 0..p {
                    damped[a * p + a] += mu * (h[a * p + a] + 1e-6 * scale);
                }
                let Some(chol) = Cholesky::factor(&damped, p) else {
                    mu *= 10.0;
                    continue;
                };
                let step = chol.solve(&g);
                let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - s).collect();
                if let Some(next) = residuals(&cand) {
                    let v = smoothed_value(&next.r, w, n);
                    if v.is_finite() && v < value {
                        let rel = (value - v) / value.abs().max(1e-300);
                        beta = cand;
                        cur = next;
                        value = v;
                        mu = (mu / 3.0).max(1e-12);
                        accepted = true;
                        if rel < 1e-12 {
                            converged = true;
                        }
                        break;
                    }
                }
                mu *= 4.0;
            }
            if !accepted || converged {
                converged = true;
                break;
            }
        }
    }
    (beta, value, iterations, converged)
}

/// ANM residuals `b(S_k)² ∂_k S_k − 1`.
fn anm_residuals(c: &ComponentData, basis: &[(Vec<f64>, Vec<f64>)], beta: &[f64]) -> Residuals {
    let p = beta.len();
    let n = c.s.len();
    let mut out = Residuals { r: Vec::with_capacity(n), jac: Vec::with_capacity(n * p) };
    for i in 0..n {
        let v = &basis[i].0;
        let b = dot(beta, v);
        out.r.push(b * b * c.d[i] - 1.0);
        out.jac.extend(v.iter().map(|vj| 2.0 * b * vj * c.d[i]));
    }
    out
}

/// Mixed residuals `∂_l∂_k (B∘S_k)(x_i)` for `l < k`, sample-major, divided by
/// `N = mean_i B'(S_k) ∂_k S_k`. `None` when `N` is not positive.
fn pnl_residuals(c: &ComponentData, basis: &[(Vec<f64>, Vec<f64>)], beta: &[f64]) -> Option<(Residuals, f64)> {
    let (k, n, p) = (c.k, c.s.len(), beta.len());
    let nf = n as f64;
    let mut e = vec![0.0; n * k];
    let mut de = vec![0.0; n * k * p];
    let mut norm = 0.0;
    let mut dnorm = vec![0.0; p];
    for i in 0..n {
        let (v, dv) = &basis[i];
        let b = dot(beta, v);
        let db = dot(beta, dv);
        let di = c.d[i];
        norm += b * b * di / nf;
        for j in 0..p {
            dnorm[j] += 2.0 * b * v[j] * di / nf;
        }
        for l in 0..k {
            let jl = c.jac[i * k + l];
            let hl = c.mixed[i * k + l];
            e[i * k + l] = 2.0 * b * db * jl * di + b * b * hl;
            for j in 0..p {
                de[(i * k + l) * p + j] = 2.0 * (v[j] * db + b * dv[j]) * jl * di + 2.0 * b * v[j] * hl;
            }
        }
    }
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    let r: Vec<f64> = e.iter().map(|v| v / norm).collect();
    let mut jac = vec![0.0; n * k * p];
    for idx in 0..n * k {
        for j in 0..p {
            jac[idx * p + j] = (de[idx * p + j] * norm - e[idx] * dnorm[j]) / (norm * norm);
        }
    }
    Some((Residuals { r, jac }, norm))
}

fn fit_anm_component(c: &ComponentData, bk: BkSpec, opts: &ScoreOptions) -> BkFit {
    let basis: Vec<_> = c.s.iter().map(|&u| bk.basis(u)).collect();
    let n = c.s.len() as f64;
    let (beta, surrogate, iterations, converged) =
        minimize_huber(bk.identity(), n, opts, |b| Some(anm_residuals(c, &basis, b)));
    let loss = anm_residuals(c, &basis, &beta).r.iter().map(|v| v.abs()).sum();
    BkFit { beta, loss, surrogate, iterations, converged }
}

fn fit_pnl_component(c: &ComponentData, bk: BkSpec, opts: &ScoreOptions) -> BkFit {
    if c.k == 0 {
        return BkFit { beta: bk.identity(), loss: 0.0, surrogate: 0.0, iterations: 0, converged: true };
    }
    let basis: Vec<_> = c.s.iter().map(|&u| bk.basis(u)).collect();
    let n = c.s.len() as f64;
    let (mut beta, surrogate, iterations, converged) =
        minimize_huber(bk.identity(), n, opts, |b| pnl_residuals(c, &basis, b).map(|r| r.0));
    let Some((res, norm)) = pnl_residuals(c, &basis, &beta) else {
        return BkFit { beta, loss: f64::INFINITY, surrogate, iterations, converged: false };
    };
    // rescale b so that the normalization holds exactly
    beta.iter_mut().for_each(|b| *b /= norm.sqrt());
    let loss = res.r.iter().map(|v| v.abs()).sum();
    BkFit { beta, loss, surrogate, iterations, converged }
}

fn fit_component(c: &ComponentData, kind: LossKind, opts: &ScoreOptions) -> BkFit {
    let bk = BkSpec { degree: opts.bk_degree };
    match kind {
        LossKind::Anm => fit_anm_component(c, bk, opts),
        LossKind::Pnl => fit_pnl_component(c, bk, opts),
    }
}

fn component_for(fitted: &FittedMap<f64>, k: usize, samples: &SampleMatrix<f64>) -> Result<ComponentData> {
    if k >= fitted.dim() {
        return Err(Error::Dimension { expected: fitted.dim(), got: k + 1 });
    }
    Ok(component_data(fitted, samples)?.swap_remove(k))
}

/// Fit `B_k` minimizing `Σ_i |∂_k(B_k∘S_k)(x_i) − 1|`. `samples` must be in the
/// column order the map was fitted on; `k` is 0-based.
pub fn fit_bk_anm(
    fitted: &FittedMap<f64>,
    k: usize,
    samples: &SampleMatrix<f64>,
    opts: &ScoreOptions,
) -> Result<BkFit> {
    Ok(fit_anm_component(&component_for(fitted, k, samples)?, BkSpec { degree: opts.bk_degree }, opts))
}

/// Fit `B_k` minimizing `Σ_i Σ_{l<k} |∂_l∂_k(B_k∘S_k)(x_i)|` under the
/// normalization `mean_i ∂_k(B_k∘S_k)(x_i) = 1`.
pub fn fit_bk_pnl(
    fitted: &FittedMap<f64>,
    k: usize,
    samples: &SampleMatrix<f64>,
    opts: &ScoreOptions,
) -> Result<BkFit> {
    Ok(fit_pnl_component(&component_for(fitted, k, samples)?, BkSpec { degree: opts.bk_degree }, opts))
}

/// Exact loss of component `k` at fixed coefficients `beta`, without fitting.
pub fn bk_loss(
    fitted: &FittedMap<f64>,
    k: usize,
    samples: &SampleMatrix<f64>,
    kind: LossKind,
    beta: &[f64],
) -> Result<f64> {
    if beta.len() < 2 {
        return Err(Error::Dimension { expected: 2, got: beta.len() });
    }
    let bk = BkSpec { degree: beta.len() - 2 };
    let c = component_for(fitted, k, samples)?;
    let basis: Vec<_> = c.s.iter().map(|&u| bk.basis(u)).collect();
    Ok(match kind {
        LossKind::Anm => anm_residuals(&c, &basis, beta).r.iter().map(|v| v.abs()).sum(),
        LossKind::Pnl if k == 0 => 0.0,
        LossKind::Pnl => match pnl_residuals(&c, &basis, beta) {
            Some((res, _)) => res.r.iter().map(|v| v.abs()).sum(),
            None => f64::INFINITY,
        },
    })
}

fn check_gamma(gamma: &[f64], d: usize) -> Result<()> {
    if gamma.len() != d {
        return Err(Error::Dimension { expected: d, got: gamma.len() });
    }
    if let Some(g) = gamma.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
        return Err(Error::Config(format!("weights must be positive, got {g}")));
    }
    Ok(())
}

/// Loss of `ordering` (variables listed from first to last): fit a map on the
/// permuted columns, then fit every `B_k`.
pub fn ordering_loss(
    samples: &SampleMatrix<f64>,
    ordering: &Ordering,
    kind: LossKind,
    gamma: &[f64],
    opts: &ScoreOptions,
) -> Result<OrderingScore> {
    let d = samples.d();
    check_gamma(gamma, d)?;
    let wrap = |e: Error| Error::Ordering { ordering: ordering.as_slice().to_vec(), source: Box::new(e) };
    if ordering.len() != d {
        return Err(wrap(Error::Dimension { expected: d, got: ordering.len() }));
    }
    let permuted = samples.select_columns(ordering.as_slice()).map_err(wrap)?;
    let spec = TriangularMapSpec::new(d, opts.degree);
    let fitted = fit_map(&spec, &permuted, &opts.fit).map_err(wrap)?;
    let comps = component_data(&fitted, &permuted).map_err(wrap)?;
    let bk: Vec<BkFit> = comps.par_iter().map(|c| fit_component(c, kind, opts)).collect();
    let losses: Vec<f64> = bk.iter().map(|b| b.loss).collect();
    let total = losses.iter().zip(gamma).map(|(l, g)| l * g).sum();
    Ok(OrderingScore { ordering: ordering.clone(), kind, losses, gamma: gamma.to_vec(), total, bk })
}

pub fn anm_loss(
    samples: &SampleMatrix<f64>,
    ordering: &Ordering,
    gamma: &[f64],
    opts: &ScoreOptions,
) -> Result<OrderingScore> {
    ordering_loss(samples, ordering, LossKind::Anm, gamma, opts)
}

pub fn pnl_loss(
    samples: &SampleMatrix<f64>,
    ordering: &Ordering,
    gamma: &[f64],
    opts: &ScoreOptions,
) -> Result<OrderingScore> {
    ordering_loss(samples, ordering, LossKind::Pnl, gamma, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingSelection {
    pub dag: Dag,
    pub best: usize,
    /// One score per possible ordering, in enumeration order.
    pub scores: Vec<OrderingScore>,
    pub diagnostic: Option<String>,
}

impl OrderingSelection {
    /// Rank (1 = best) of `ordering` among the scored orderings.
    pub fn rank_of(&self, ordering: &Ordering) -> Option<usize> {
        let pos = self.scores.iter().position(|s| &s.ordering == ordering)?;
        let t = self.scores[pos].total;
        Some(1 + self.scores.iter().filter(|s| s.total < t).count())
    }
}

/// Score every possible ordering of the equivalence class of `cpdag` and
/// return the member attaining the smallest total; ties go to the
/// lexicographically smallest ordering.
pub fn select_ordering(
    cpdag: &Pdag,
    samples: &SampleMatrix<f64>,
    kind: LossKind,
    gamma: &[f64],
    opts: &ScoreOptions,
) -> Result<OrderingSelection> {
    if cpdag.d() != samples.d() {
        return Err(Error::Dimension { expected: cpdag.d(), got: samples.d() });
    }
    check_gamma(gamma, samples.d())?;
    let mec = enumerate_mec(cpdag);
    if mec.members.is_empty() {
        return Err(Error::Inconsistent(mec.diagnostic.unwrap_or_else(|| "empty equivalence class".into())));
    }
    let mut candidates: Vec<(Ordering, Dag)> = Vec::new();
    for dag in mec.members {
        let o = compatible_ordering(&dag);
        if !candidates.iter().any(|(c, _)| c == &o) {
            candidates.push((o, dag));
        }
    }
    let scores: Vec<OrderingScore> =
        candidates.par_iter().map(|(o, _)| ordering_loss(samples, o, kind, gamma, opts)).collect::<Result<_>>()?;
    let best = (0..scores.len())
        .min_by(|&a, &b| {
            scores[a]
                .total
                .total_cmp(&scores[b].total)
                .then_with(|| scores[a].ordering.as_slice().cmp(scores[b].ordering.as_slice()))
        })
        .expect("nonempty");
    Ok(OrderingSelection { dag: candidates[best].1.clone(), best, scores, diagnostic: mec.diagnostic })
}

/// One row per ordering: label, per-position losses, total.
pub fn write_scores_csv<W: Write>(scores: &[OrderingScore], names: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = scores.first().map_or(0, |s| s.losses.len());
    let mut header = vec!["ordering".to_string()];
    header.extend((1..=d).map(|k| format!("loss_{k}")));
    header.push("total".into());
    w.write_record(&header)?;
    for s in scores {
        let mut row = vec![s.ordering.label(names)];
        row.extend(s.losses.iter().map(|v| v.to_string()));
        row.push(s.total.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
