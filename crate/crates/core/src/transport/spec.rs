//! Coefficient layout of a monotone lower-triangular map.
//!
//! Component `k` (0-based) is
//! `S_k(x_0..x_k) = c_k(x_0..x_{k-1}) + ∫_0^{x_k} h_k(x_0..x_{k-1}, t)² dt`
//! with `c_k` a combination of Hermite polynomials and `h_k` a combination of
//! Hermite functions plus a constant term.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{multi_indices, AxisKind, BasisTerm};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    /// Terms of `c_k`, arity `k`.
    pub c_terms: Vec<BasisTerm>,
    /// Terms of `h_k`, arity `k + 1`. The first entry is the constant term.
    pub h_terms: Vec<BasisTerm>,
    /// First coefficient slot of this component.
    pub offset: usize,
}

impl ComponentSpec {
    pub fn n_coeffs(&self) -> usize {
        self.c_terms.len() + self.h_terms.len()
    }
}

/// Composite Gauss–Legendre settings for the integral over the last axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Nodes per panel.
    pub order: usize,
    /// Maximum panel width.
    pub panel_width: f64,
    /// Beyond `|t| > tail_cutoff` every Hermite function is treated as zero
    /// and only the constant term is integrated (exactly).
    pub tail_cutoff: f64,
}

impl QuadratureSettings {
    pub fn for_degree(h_degree: usize) -> Self {
        Self { order: h_degree + 3, panel_width: 1.0, tail_cutoff: 12.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangularMapSpec {
    pub dim: usize,
    pub c_degree: usize,
    pub h_degree: usize,
    pub components: Vec<ComponentSpec>,
    pub quadrature: QuadratureSettings,
}

impl TriangularMapSpec {
    /// Total-degree basis with the same maximum degree for `c` and `h`.
    pub fn new(dim: usize, degree: usize) -> Self {
        Self::with_degrees(dim, degree, degree)
    }

    pub fn with_degrees(dim: usize, c_degree: usize, h_degree: usize) -> Self {
        let mut offset = 0;
        let components = (0..dim)
            .map(|k| {
                let c_terms: Vec<BasisTerm> =
                    multi_indices(k, c_degree).into_iter().map(BasisTerm::polynomial).collect();
                let mut h_terms = vec![BasisTerm::constant(k + 1)];
                h_terms.extend(multi_indices(k + 1, h_degree).into_iter().map(BasisTerm::function));
                let comp = ComponentSpec { c_terms, h_terms, offset };
                offset += comp.n_coeffs();
                comp
            })
            .collect();
        Self { dim, c_degree, h_degree, components, quadrature: QuadratureSettings::for_degree(h_degree) }
    }

    /// Spec with explicit term lists; offsets are assigned contiguously.
    pub fn from_terms(terms: Vec<(Vec<BasisTerm>, Vec<BasisTerm>)>) -> Result<Self> {
        let dim = terms.len();
        let mut offset = 0;
        let mut c_degree = 0;
        let mut h_degree = 0;
        let mut components = Vec::with_capacity(dim);
        for (c_terms, h_terms) in terms {
            c_degree = c_terms.iter().map(BasisTerm::total_degree).fold(c_degree, usize::max);
            h_degree = h_terms.iter().map(BasisTerm::total_degree).fold(h_degree, usize::max);
            let comp = ComponentSpec { c_terms, h_terms, offset };
            offset += comp.n_coeffs();
            components.push(comp);
        }
        let spec = Self { dim, c_degree, h_degree, components, quadrature: QuadratureSettings::for_degree(h_degree) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_quadrature(mut self, q: QuadratureSettings) -> Self {
        self.quadrature = q;
        self
    }

    pub fn n_coeffs(&self) -> usize {
        self.components.last().map_or(0, |c| c.offset + c.n_coeffs())
    }

    pub fn component_range(&self, k: usize) -> Range<usize> {
        let c = &self.components[k];
        c.offset..c.offset + c.n_coeffs()
    }

    pub fn c_range(&self, k: usize) -> Range<usize> {
        let c = &self.components[k];
        c.offset..c.offset + c.c_terms.len()
    }

    pub fn h_range(&self, k: usize) -> Range<usize> {
        let c = &self.components[k];
        let start = c.offset + c.c_terms.len();
        start..start + c.h_terms.len()
    }

    /// Index of the constant `h` term of component `k`.
    pub fn h_constant_slot(&self, k: usize) -> usize {
        let c = &self.components[k];
        let pos = c.h_terms.iter().position(BasisTerm::is_constant).unwrap_or(0);
        self.h_range(k).start + pos
    }

    /// Parameters of the identity map: `c ≡ 0`, `h ≡ 1`.
    pub fn identity_params<T: Scalar>(&self) -> ParamVector<T> {
        let mut alpha = vec![T::zero(); self.n_coeffs()];
        for k in 0..self.dim {
            alpha[self.h_constant_slot(k)] = T::one();
        }
        ParamVector(alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.len() != self.dim {
            return Err(Error::Config(format!("{} components for dimension {}", self.components.len(), self.dim)));
        }
        let mut expected_offset = 0;
        for (k, comp) in self.components.iter().enumerate() {
            if comp.offset != expected_offset {
                return Err(Error::Config(format!("component {k}: non-contiguous coefficient slots")));
            }
            expected_offset += comp.n_coeffs();
            if let Some(t) = comp.c_terms.iter().find(|t| t.arity() != k) {
                return Err(Error::Config(format!("component {k}: c-term {t:?} has wrong arity")));
            }
            if let Some(t) = comp.h_terms.iter().find(|t| t.arity() != k + 1) {
                return Err(Error::Config(format!("component {k}: h-term {t:?} has wrong arity")));
            }
            if !comp.h_terms.iter().any(BasisTerm::is_constant) {
                return Err(Error::Config(format!("component {k}: h-terms lack the constant term")));
            }
            for t in &comp.h_terms {
                let last = *t.kinds.last().expect("arity >= 1");
                let deg = *t.index.last().expect("arity >= 1");
                let decays = last == AxisKind::Function
                    || last == AxisKind::Constant
                    || (last == AxisKind::Polynomial && deg == 0);
                if !decays {
                    return Err(Error::Config(format!(
                        "component {k}: h-term {t:?} must be a Hermite function or constant on the last axis"
                    )));
                }
            }
        }
        if self.quadrature.order == 0 || !(self.quadrature.panel_width > 0.0) {
            return Err(Error::Config("quadrature order and panel width must be positive".into()));
        }
        Ok(())
    }
}

/// Coefficient vector `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector<T>(pub Vec<T>);

impl<T: Scalar> ParamVector<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl<T> std::ops::Index<usize> for ParamVector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> std::ops::IndexMut<usize> for ParamVector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}
