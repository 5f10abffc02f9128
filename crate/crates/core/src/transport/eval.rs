//! Evaluation of the map, its spatial derivatives, and their α-gradients.
//!
//! Every `h`-term factors as `P_s(x_0..x_{k-1}) · g_e(x_k)` where `g_e` is one
//! of a few last-axis functions (a Hermite function or the constant). The
//! integral of `h²` over the last axis is then `Aᵀ G(x_k) A` with
//! `A_e = Σ_{s: e(s)=e} a_s P_s` and `G(x_k) = ∫_0^{x_k} g gᵀ dt`, so the
//! quadrature only ever touches the small Gram matrix `G`.

use crate::error::{Error, Result};
use crate::hermite::{gauss_legendre, hermite_fn_table, hermite_poly_table, product_eval, AxisKind, Jet2};
use crate::scalar::{cst, Scalar};

use super::spec::{ParamVector, QuadratureSettings, TriangularMapSpec};

#[derive(Debug, Clone)]
pub(crate) struct ComponentPlan {
    pub nc: usize,
    pub nh: usize,
    c_factors: Vec<Vec<(AxisKind, usize)>>,
    h_factors: Vec<Vec<(AxisKind, usize)>>,
    pub h_last: Vec<usize>,
    last_fns: Vec<LastFn>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LastFn {
    One,
    Hermite(usize),
}

impl ComponentPlan {
    pub fn n_local(&self) -> usize {
        self.nc + self.nh
    }

    pub fn n_last(&self) -> usize {
        self.last_fns.len()
    }
}

/// Per-spec evaluation plan with the quadrature rule resolved.
#[derive(Debug, Clone)]
pub struct MapEvaluator<T> {
    pub(crate) comps: Vec<ComponentPlan>,
    pub(crate) offsets: Vec<usize>,
    n_coeffs: usize,
    max_poly: usize,
    max_fn: usize,
    rule_nodes: Vec<T>,
    rule_weights: Vec<T>,
    settings: QuadratureSettings,
}

/// Per-axis univariate tables at one point.
pub(crate) struct AxisTables<T> {
    poly: Vec<Vec<Jet2<T>>>,
    func: Vec<Vec<Jet2<T>>>,
}

impl<T: Scalar> AxisTables<T> {
    #[inline]
    fn factor(&self, axis: usize, kind: AxisKind, degree: usize) -> Jet2<T> {
        match kind {
            AxisKind::Polynomial => self.poly[axis][degree],
            AxisKind::Function => self.func[axis][degree],
            AxisKind::Constant => Jet2::one(),
        }
    }
}

/// Spatial derivatives of one component at a point, optionally with their
/// gradients in the component's local coefficients (`c` first, then `h`).
#[derive(Debug, Clone)]
pub(crate) struct ComponentDerivs<T> {
    pub m: usize,
    pub s: T,
    pub ds: Vec<T>,
    pub dds: Vec<T>,
    pub h: T,
    pub dh: Vec<T>,
    pub ddh: Vec<T>,
    pub grads: Option<ComponentGrads<T>>,
}

/// Gradients are stored quantity-major: `ds[j * p + r]`, `dds[(j * m + l) * p + r]`.
#[derive(Debug, Clone)]
pub(crate) struct ComponentGrads<T> {
    pub p: usize,
    pub s: Vec<T>,
    pub ds: Vec<T>,
    pub dds: Vec<T>,
    pub h: Vec<T>,
    pub dh: Vec<T>,
    pub ddh: Vec<T>,
}

impl<T: Scalar> MapEvaluator<T> {
    pub fn new(spec: &TriangularMapSpec) -> Result<Self> {
        spec.validate()?;
        let mut max_poly = 0;
        let mut max_fn = 0;
        let comps = spec
            .components
            .iter()
            .enumerate()
            .map(|(k, comp)| {
                let c_factors: Vec<Vec<(AxisKind, usize)>> = comp
                    .c_terms
                    .iter()
                    .map(|t| t.kinds.iter().copied().zip(t.index.iter().copied()).collect())
                    .collect();
                let mut last_fns: Vec<LastFn> = Vec::new();
                let mut h_last = Vec::with_capacity(comp.h_terms.len());
                let mut h_factors = Vec::with_capacity(comp.h_terms.len());
                for t in &comp.h_terms {
                    let lf = match (t.kinds[k], t.index[k]) {
                        (AxisKind::Function, d) => LastFn::Hermite(d),
                        _ => LastFn::One,
                    };
                    let e = match last_fns.iter().position(|&f| f == lf) {
                        Some(e) => e,
                        None => {
                            last_fns.push(lf);
                            last_fns.len() - 1
                        }
                    };
                    h_last.push(e);
                    h_factors.push(t.kinds[..k].iter().copied().zip(t.index[..k].iter().copied()).collect::<Vec<_>>());
                }
                for f in c_factors.iter().chain(h_factors.iter()).flatten() {
                    match f.0 {
                        AxisKind::Polynomial => max_poly = max_poly.max(f.1),
                        AxisKind::Function => max_fn = max_fn.max(f.1),
                        AxisKind::Constant => {}
                    }
                }
                for f in &last_fns {
                    if let LastFn::Hermite(d) = f {
                        max_fn = max_fn.max(*d);
                    }
                }
                ComponentPlan { nc: comp.c_terms.len(), nh: comp.h_terms.len(), c_factors, h_factors, h_last, last_fns }
            })
            .collect();
        let rule = gauss_legendre::<T>(spec.quadrature.order);
        Ok(Self {
            comps,
            offsets: spec.components.iter().map(|c| c.offset).collect(),
            n_coeffs: spec.n_coeffs(),
            max_poly,
            max_fn,
            rule_nodes: rule.nodes,
            rule_weights: rule.weights,
            settings: spec.quadrature.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn n_coeffs(&self) -> usize {
        self.n_coeffs
    }

    pub(crate) fn check(&self, alpha: &[T], x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        if alpha.len() != self.n_coeffs {
            return Err(Error::Dimension { expected: self.n_coeffs, got: alpha.len() });
        }
        Ok(())
    }

    pub(crate) fn local<'a>(&self, alpha: &'a [T], k: usize) -> &'a [T] {
        let start = self.offsets[k];
        &alpha[start..start + self.comps[k].n_local()]
    }

    pub(crate) fn tables(&self, x: &[T]) -> AxisTables<T> {
        AxisTables {
            poly: x.iter().map(|&v| hermite_poly_table(self.max_poly, v)).collect(),
            func: x.iter().map(|&v| hermite_fn_table(self.max_fn, v)).collect(),
        }
    }

    fn last_fn_values(&self, plan: &ComponentPlan, t: T, out: &mut [Jet2<T>]) {
        let needs_fn = plan.last_fns.iter().any(|f| matches!(f, LastFn::Hermite(_)));
        let table = if needs_fn { hermite_fn_table(self.max_fn, t) } else { Vec::new() };
        for (o, f) in out.iter_mut().zip(&plan.last_fns) {
            *o = match f {
                LastFn::One => Jet2::one(),
                LastFn::Hermite(d) => table[*d],
            };
        }
    }

    /// Gram matrix `G_{ee'}(x) = ∫_0^x g_e g_e' dt`, row-major `ne × ne`.
    pub(crate) fn gram(&self, plan: &ComponentPlan, x: T) -> Vec<T> {
        let ne = plan.n_last();
        let mut g = vec![T::zero(); ne * ne];
        let cutoff = cst::<T>(self.settings.tail_cutoff);
        let xc = x.max(-cutoff).min(cutoff);
        let tail = x - xc;
        if xc != T::zero() {
            let width = cst::<T>(self.settings.panel_width);
            let panels = (xc.abs() / width).ceil().to_usize().unwrap_or(1).max(1);
            let step = xc / T::from_usize(panels).expect("panel count");
            let half = step * cst(0.5);
            let mut vals = vec![Jet2::one(); ne];
            for p in 0..panels {
                let mid = step * T::from_usize(p).expect("panel index") + half;
                for (&node, &w) in self.rule_nodes.iter().zip(&self.rule_weights) {
                    let t = mid + half * node;
                    self.last_fn_values(plan, t, &mut vals);
                    let wt = w * half;
                    for a in 0..ne {
                        let wa = wt * vals[a].value;
                        for b in a..ne {
                            g[a * ne + b] = g[a * ne + b] + wa * vals[b].value;
                        }
                    }
                }
            }
        }
        if tail != T::zero() {
            for (a, fa) in plan.last_fns.iter().enumerate() {
                for (b, fb) in plan.last_fns.iter().enumerate().skip(a) {
                    if *fa == LastFn::One && *fb == LastFn::One {
                        g[a * ne + b] = g[a * ne + b] + tail;
                    }
                }
            }
        }
        for a in 0..ne {
            for b in 0..a {
                g[a * ne + b] = g[b * ne + a];
            }
        }
        g
    }

    /// Prefix values `P_s` (no derivatives) of the `h`-terms and `Φ_r` of the `c`-terms.
    pub(crate) fn prefix_values(&self, plan: &ComponentPlan, tables: &AxisTables<T>) -> (Vec<T>, Vec<T>) {
        let phi = plan
            .c_factors
            .iter()
            .map(|fs| fs.iter().enumerate().fold(T::one(), |p, (j, &(kind, d))| p * tables.factor(j, kind, d).value))
            .collect();
        let pv = plan
            .h_factors
            .iter()
            .map(|fs| fs.iter().enumerate().fold(T::one(), |p, (j, &(kind, d))| p * tables.factor(j, kind, d).value))
            .collect();
        (phi, pv)
    }

    /// Last-axis function values at `x_k` (value, first, second derivative).
    pub(crate) fn last_at(&self, plan: &ComponentPlan, xk: T) -> Vec<Jet2<T>> {
        let mut vals = vec![Jet2::one(); plan.n_last()];
        self.last_fn_values(plan, xk, &mut vals);
        vals
    }

    /// `(S_k(x), h_k(x))`.
    pub(crate) fn component_value(&self, k: usize, tables: &AxisTables<T>, x: &[T], coef: &[T]) -> (T, T) {
        let plan = &self.comps[k];
        let (phi, pv) = self.prefix_values(plan, tables);
        let c: T = phi.iter().zip(&coef[..plan.nc]).fold(T::zero(), |acc, (&p, &w)| acc + p * w);
        let ne = plan.n_last();
        let mut a = vec![T::zero(); ne];
        for (s, &p) in pv.iter().enumerate() {
            let e = plan.h_last[s];
            a[e] = a[e] + coef[plan.nc + s] * p;
        }
        let g = self.gram(plan, x[k]);
        let mut sh = T::zero();
        for i in 0..ne {
            for j in 0..ne {
                sh = sh + a[i] * g[i * ne + j] * a[j];
            }
        }
        let gx = self.last_at(plan, x[k]);
        let h = a.iter().zip(&gx).fold(T::zero(), |acc, (&ai, gi)| acc + ai * gi.value);
        (c + sh, h)
    }

    /// Full second-order spatial derivatives of component `k`.
    pub(crate) fn component_derivs(
        &self,
        k: usize,
        tables: &AxisTables<T>,
        x: &[T],
        coef: &[T],
        with_grads: bool,
    ) -> ComponentDerivs<T> {
        let plan = &self.comps[k];
        let m = k + 1;
        let (nc, nh) = (plan.nc, plan.nh);
        let p = nc + nh;
        let ne = plan.n_last();
        let two = cst::<T>(2.0);

        let mut s = T::zero();
        let mut ds = vec![T::zero(); m];
        let mut dds = vec![T::zero(); m * m];

        let mut grads = with_grads.then(|| ComponentGrads {
            p,
            s: vec![T::zero(); p],
            ds: vec![T::zero(); m * p],
            dds: vec![T::zero(); m * m * p],
            h: vec![T::zero(); p],
            dh: vec![T::zero(); m * p],
            ddh: vec![T::zero(); m * m * p],
        });

        // c part, prefix axes only
        for (r, fs) in plan.c_factors.iter().enumerate() {
            let factors: Vec<Jet2<T>> =
                fs.iter().enumerate().map(|(j, &(kind, d))| tables.factor(j, kind, d)).collect();
            let te = product_eval(&factors);
            let w = coef[r];
            s = s + w * te.value;
            for j in 0..k {
                ds[j] = ds[j] + w * te.grad[j];
                for l in 0..k {
                    dds[j * m + l] = dds[j * m + l] + w * te.mixed2[j][l];
                }
            }
            if let Some(g) = grads.as_mut() {
                g.s[r] = te.value;
                for j in 0..k {
                    g.ds[j * p + r] = te.grad[j];
                    for l in 0..k {
                        g.dds[(j * m + l) * p + r] = te.mixed2[j][l];
                    }
                }
            }
        }

        // h part: prefix jets and aggregated coefficients per last-axis function
        let mut pj = Vec::with_capacity(nh);
        let mut a = vec![T::zero(); ne];
        let mut aj = vec![T::zero(); ne * k];
        let mut ajl = vec![T::zero(); ne * k * k];
        for (sidx, fs) in plan.h_factors.iter().enumerate() {
            let factors: Vec<Jet2<T>> =
                fs.iter().enumerate().map(|(j, &(kind, d))| tables.factor(j, kind, d)).collect();
            let te = product_eval(&factors);
            let e = plan.h_last[sidx];
            let w = coef[nc + sidx];
            a[e] = a[e] + w * te.value;
            for j in 0..k {
                aj[e * k + j] = aj[e * k + j] + w * te.grad[j];
                for l in 0..k {
                    ajl[(e * k + j) * k + l] = ajl[(e * k + j) * k + l] + w * te.mixed2[j][l];
                }
            }
            pj.push(te);
        }

        let g = self.gram(plan, x[k]);
        let gx = self.last_at(plan, x[k]);
        let matvec = |v: &dyn Fn(usize) -> T| -> Vec<T> {
            (0..ne).map(|i| (0..ne).fold(T::zero(), |acc, j| acc + g[i * ne + j] * v(j))).collect()
        };
        let ga = matvec(&|e| a[e]);
        let gaj: Vec<Vec<T>> = (0..k).map(|j| matvec(&|e| aj[e * k + j])).collect();
        let gajl: Vec<Vec<T>> = (0..k * k).map(|jl| matvec(&|e| ajl[(e * k + jl / k) * k + jl % k])).collect();
        let dot_e = |u: &dyn Fn(usize) -> T, v: &[T]| (0..ne).fold(T::zero(), |acc, e| acc + u(e) * v[e]);

        s = s + dot_e(&|e| a[e], &ga);
        for j in 0..k {
            ds[j] = ds[j] + two * dot_e(&|e| a[e], &gaj[j]);
            for l in 0..k {
                let v = two * (dot_e(&|e| aj[e * k + j], &gaj[l]) + dot_e(&|e| a[e], &gajl[j * k + l]));
                dds[j * m + l] = dds[j * m + l] + v;
            }
        }

        let gxv: Vec<T> = gx.iter().map(|j| j.value).collect();
        let gx1: Vec<T> = gx.iter().map(|j| j.d1).collect();
        let gx2: Vec<T> = gx.iter().map(|j| j.d2).collect();
        let h = dot_e(&|e| a[e], &gxv);
        let mut dh = vec![T::zero(); m];
        let mut ddh = vec![T::zero(); m * m];
        for j in 0..k {
            dh[j] = dot_e(&|e| aj[e * k + j], &gxv);
            let hjk = dot_e(&|e| aj[e * k + j], &gx1);
            ddh[j * m + k] = hjk;
            ddh[k * m + j] = hjk;
            for l in 0..k {
                ddh[j * m + l] = dot_e(&|e| ajl[(e * k + j) * k + l], &gxv);
            }
        }
        dh[k] = dot_e(&|e| a[e], &gx1);
        ddh[k * m + k] = dot_e(&|e| a[e], &gx2);

        ds[k] = h * h;
        for j in 0..k {
            let v = two * h * dh[j];
            dds[j * m + k] = v;
            dds[k * m + j] = v;
        }
        dds[k * m + k] = two * h * dh[k];

        if let Some(gr) = grads.as_mut() {
            for (sidx, te) in pj.iter().enumerate() {
                let r = nc + sidx;
                let e = plan.h_last[sidx];
                gr.s[r] = two * te.value * ga[e];
                for j in 0..k {
                    gr.ds[j * p + r] = two * (te.value * gaj[j][e] + te.grad[j] * ga[e]);
                    for l in 0..k {
                        gr.dds[(j * m + l) * p + r] = two
                            * (te.grad[j] * gaj[l][e]
                                + te.grad[l] * gaj[j][e]
                                + te.value * gajl[j * k + l][e]
                                + te.mixed2[j][l] * ga[e]);
                    }
                }
                gr.h[r] = te.value * gxv[e];
                for j in 0..k {
                    gr.dh[j * p + r] = te.grad[j] * gxv[e];
                    for l in 0..k {
                        gr.ddh[(j * m + l) * p + r] = te.mixed2[j][l] * gxv[e];
                    }
                    let v = te.grad[j] * gx1[e];
                    gr.ddh[(j * m + k) * p + r] = v;
                    gr.ddh[(k * m + j) * p + r] = v;
                }
                gr.dh[k * p + r] = te.value * gx1[e];
                gr.ddh[(k * m + k) * p + r] = te.value * gx2[e];
            }
            // derivatives involving the last axis come from h² at x
            for r in 0..p {
                let ghr = gr.h[r];
                gr.ds[k * p + r] = two * h * ghr;
                for j in 0..k {
                    let v = two * (ghr * dh[j] + h * gr.dh[j * p + r]);
                    gr.dds[(j * m + k) * p + r] = v;
                    gr.dds[(k * m + j) * p + r] = v;
                }
                gr.dds[(k * m + k) * p + r] = two * (ghr * dh[k] + h * gr.dh[k * p + r]);
            }
        }

        ComponentDerivs { m, s, ds, dds, h, dh, ddh, grads }
    }
}

impl<T: Scalar> ComponentDerivs<T> {
    /// `∂²_{uv}` of `-½S² + log h²` for axes `u, v ≤ k`.
    pub fn log_term_mixed(&self, u: usize, v: usize) -> T {
        let m = self.m;
        let two = cst::<T>(2.0);
        let h = self.h;
        -self.ds[u] * self.ds[v] - self.s * self.dds[u * m + v]
            + two * (self.ddh[u * m + v] / h - self.dh[u] * self.dh[v] / (h * h))
    }

    /// Local gradient of [`Self::log_term_mixed`].
    pub fn log_term_mixed_grad(&self, u: usize, v: usize, out: &mut [T]) {
        let g = self.grads.as_ref().expect("gradients requested");
        let (m, p) = (self.m, g.p);
        let two = cst::<T>(2.0);
        let h = self.h;
        let h2 = h * h;
        let uv = u * m + v;
        for r in 0..p {
            let d1 = -(self.ds[v] * g.ds[u * p + r] + self.ds[u] * g.ds[v * p + r]);
            let d2 = -(self.dds[uv] * g.s[r] + self.s * g.dds[uv * p + r]);
            let d3 = two
                * (g.ddh[uv * p + r] / h
                    - self.ddh[uv] * g.h[r] / h2
                    - (g.dh[u * p + r] * self.dh[v] + self.dh[u] * g.dh[v * p + r]) / h2
                    + two * self.dh[u] * self.dh[v] * g.h[r] / (h2 * h));
            out[r] = d1 + d2 + d3;
        }
    }
}

/// Spatial partial derivatives of the map at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MapPartials<T> {
    /// `∂S_k/∂x_k`.
    pub dkk: Vec<T>,
    /// `jacobian[k][l] = ∂S_k/∂x_l` for `l ≤ k`.
    pub jacobian: Vec<Vec<T>>,
    /// `hessians[k][j][l] = ∂²S_k/∂x_j∂x_l` for `j, l ≤ k`.
    pub hessians: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> MapEvaluator<T> {
    pub fn map_eval(&self, alpha: &[T], x: &[T]) -> Result<Vec<T>> {
        self.check(alpha, x)?;
        let tables = self.tables(x);
        Ok((0..self.dim()).map(|k| self.component_value(k, &tables, x, self.local(alpha, k)).0).collect())
    }

    /// `(S_k(x), h_k(x))` for every component.
    pub fn values_and_diag(&self, alpha: &[T], x: &[T]) -> Result<Vec<(T, T)>> {
        self.check(alpha, x)?;
        let tables = self.tables(x);
        Ok((0..self.dim()).map(|k| self.component_value(k, &tables, x, self.local(alpha, k))).collect())
    }

    pub fn partials(&self, alpha: &[T], x: &[T]) -> Result<MapPartials<T>> {
        self.check(alpha, x)?;
        let tables = self.tables(x);
        let mut out = MapPartials { dkk: Vec::new(), jacobian: Vec::new(), hessians: Vec::new() };
        for k in 0..self.dim() {
            let cd = self.component_derivs(k, &tables, x, self.local(alpha, k), false);
            let m = cd.m;
            out.dkk.push(cd.ds[k]);
            out.jacobian.push(cd.ds.clone());
            out.hessians.push((0..m).map(|j| cd.dds[j * m..(j + 1) * m].to_vec()).collect());
        }
        Ok(out)
    }

    /// `log S^#η(x) = Σ_k [log φ(S_k(x)) + log ∂_k S_k(x)]`.
    pub fn log_pullback(&self, alpha: &[T], x: &[T]) -> Result<T> {
        self.check(alpha, x)?;
        let tables = self.tables(x);
        let half_log_2pi = cst::<T>(0.5 * (2.0 * std::f64::consts::PI).ln());
        let mut total = T::zero();
        for k in 0..self.dim() {
            let (s, h) = self.component_value(k, &tables, x, self.local(alpha, k));
            let diag = h * h;
            if !(diag > T::zero()) || !diag.is_finite() || !s.is_finite() {
                return Err(Error::DegenerateMap { sample: 0, component: k });
            }
            total = total - cst::<T>(0.5) * s * s - half_log_2pi + diag.ln();
        }
        Ok(total)
    }

    /// Hessian of `log S^#η` at `x`, row-major `d × d`.
    pub fn log_density_hessian(&self, alpha: &[T], x: &[T]) -> Result<Vec<T>> {
        self.check(alpha, x)?;
        let d = self.dim();
        let tables = self.tables(x);
        let mut hess = vec![T::zero(); d * d];
        for k in 0..d {
            let cd = self.component_derivs(k, &tables, x, self.local(alpha, k), false);
            if !(cd.h != T::zero()) || !cd.h.is_finite() {
                return Err(Error::DegenerateMap { sample: 0, component: k });
            }
            for u in 0..=k {
                for v in 0..=k {
                    hess[u * d + v] = hess[u * d + v] + cd.log_term_mixed(u, v);
                }
            }
        }
        Ok(hess)
    }
}

pub fn map_eval<T: Scalar>(spec: &TriangularMapSpec, alpha: &ParamVector<T>, x: &[T]) -> Result<Vec<T>> {
    MapEvaluator::new(spec)?.map_eval(alpha.as_slice(), x)
}

pub fn partials<T: Scalar>(spec: &TriangularMapSpec, alpha: &ParamVector<T>, x: &[T]) -> Result<MapPartials<T>> {
    MapEvaluator::new(spec)?.partials(alpha.as_slice(), x)
}

pub fn log_pullback<T: Scalar>(spec: &TriangularMapSpec, alpha: &ParamVector<T>, x: &[T]) -> Result<T> {
    MapEvaluator::new(spec)?.log_pullback(alpha.as_slice(), x)
}
