//! Empirical one-dimensional monotone transport `T = F_ν⁻¹ ∘ F_μ`.

use crate::scalar::{from_usize, Scalar};

/// Nondecreasing step map between two empirical distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneStepMap<T> {
    source: Vec<T>,
    target: Vec<T>,
}

impl<T: Scalar> MonotoneStepMap<T> {
    /// Empirical c.d.f. of the source at `x`.
    pub fn source_cdf(&self, x: T) -> T {
        let count = self.source.partition_point(|&s| s <= x);
        from_usize::<T>(count) / from_usize::<T>(self.source.len())
    }

    /// Generalized inverse of the target c.d.f.
    pub fn target_quantile(&self, u: T) -> T {
        let m = self.target.len();
        let pos = (u * from_usize::<T>(m)).ceil().to_usize().unwrap_or(0);
        self.target[pos.clamp(1, m) - 1]
    }

    pub fn eval(&self, x: T) -> T {
        self.target_quantile(self.source_cdf(x))
    }
}

/// Build the map; returns `None` when either sample is empty.
pub fn brenier_1d<T: Scalar>(source: &[T], target: &[T]) -> Option<MonotoneStepMap<T>> {
    if source.is_empty() || target.is_empty() {
        return None;
    }
    let sort = |v: &[T]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        v
    };
    Some(MonotoneStepMap { source: sort(source), target: sort(target) })
}
