//! Noise distributions for structural equations.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Gamma, Gumbel, Normal, Pareto, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rejection attempts before a truncated draw gives up.
const MAX_REJECTIONS: usize = 10_000;

/// A univariate noise law, built from base families and transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseSpec {
    Gaussian {
        mean: f64,
        sd: f64,
    },
    /// Location-scale Gumbel (maximum convention).
    Gumbel {
        location: f64,
        scale: f64,
    },
    /// Rate parameterization, mean `1/rate`.
    Exponential {
        rate: f64,
    },
    /// Shape and scale, mean `shape * scale`.
    Gamma {
        shape: f64,
        scale: f64,
    },
    /// 0/1 with success probability `p`.
    Bernoulli {
        p: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// Density proportional to `x^(-exponent)` on `[1, inf)`; `exponent > 1`.
    Power {
        exponent: f64,
    },
    /// Product of independent draws.
    Product {
        factors: Vec<NoiseSpec>,
    },
    /// `scale * inner + shift`.
    Affine {
        inner: Box<NoiseSpec>,
        scale: f64,
        shift: f64,
    },
    /// `inner ^ exponent` (integer exponents keep the sign).
    Pow {
        inner: Box<NoiseSpec>,
        exponent: f64,
    },
    /// `ln(inner + offset)`.
    Log {
        inner: Box<NoiseSpec>,
        offset: f64,
    },
    /// `inner` conditioned on `inner <= max`, by rejection.
    Truncated {
        inner: Box<NoiseSpec>,
        max: f64,
    },
}

fn bad(msg: String) -> Error {
    Error::Config(msg)
}

impl NoiseSpec {
    pub fn standard_normal() -> Self {
        NoiseSpec::Gaussian { mean: 0.0, sd: 1.0 }
    }

    pub fn affine(inner: NoiseSpec, scale: f64, shift: f64) -> Self {
        NoiseSpec::Affine { inner: Box::new(inner), scale, shift }
    }

    pub fn product(factors: impl IntoIterator<Item = NoiseSpec>) -> Self {
        NoiseSpec::Product { factors: factors.into_iter().collect() }
    }

    pub fn pow(inner: NoiseSpec, exponent: f64) -> Self {
        NoiseSpec::Pow { inner: Box::new(inner), exponent }
    }

    pub fn log(inner: NoiseSpec, offset: f64) -> Self {
        NoiseSpec::Log { inner: Box::new(inner), offset }
    }

    pub fn truncated(inner: NoiseSpec, max: f64) -> Self {
        NoiseSpec::Truncated { inner: Box::new(inner), max }
    }

    /// Check that parameters lie in their family domains.
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(bad(format!("{name} must be finite, got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            NoiseSpec::Gaussian { mean, sd } => {
                finite("gaussian mean", *mean)?;
                positive("gaussian sd", *sd)
            }
            NoiseSpec::Gumbel { location, scale } => {
                finite("gumbel location", *location)?;
                positive("gumbel scale", *scale)
            }
            NoiseSpec::Exponential { rate } => positive("exponential rate", *rate),
            NoiseSpec::Gamma { shape, scale } => {
                positive("gamma shape", *shape)?;
                positive("gamma scale", *scale)
            }
            NoiseSpec::Bernoulli { p } => {
                if (0.0..=1.0).contains(p) {
                    Ok(())
                } else {
                    Err(bad(format!("bernoulli p must lie in [0, 1], got {p}")))
                }
            }
            NoiseSpec::Uniform { low, high } => {
                finite("uniform low", *low)?;
                finite("uniform high", *high)?;
                if low < high {
                    Ok(())
                } else {
                    Err(bad(format!("uniform needs low < high, got [{low}, {high}]")))
                }
            }
            NoiseSpec::Power { exponent } => {
                if *exponent > 1.0 && exponent.is_finite() {
                    Ok(())
                } else {
                    Err(bad(format!("power-law exponent must exceed 1, got {exponent}")))
                }
            }
            NoiseSpec::Product { factors } => {
                if factors.is_empty() {
                    return Err(bad("product needs at least one factor".into()));
                }
                factors.iter().try_for_each(NoiseSpec::validate)
            }
            NoiseSpec::Affine { inner, scale, shift } => {
                finite("affine shift", *shift)?;
                finite("affine scale", *scale)?;
                if *scale == 0.0 {
                    return Err(bad("affine scale must be nonzero".into()));
                }
                inner.validate()
            }
            NoiseSpec::Pow { inner, exponent } => {
                finite("pow exponent", *exponent)?;
                inner.validate()
            }
            NoiseSpec::Log { inner, offset } => {
                finite("log offset", *offset)?;
                inner.validate()
            }
            NoiseSpec::Truncated { inner, max } => {
                finite("truncation bound", *max)?;
                inner.validate()
            }
        }
    }

    /// One draw. Parameters are assumed valid.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(match self {
            NoiseSpec::Gaussian { mean, sd } => Normal::new(*mean, *sd).map_err(|e| bad(e.to_string()))?.sample(rng),
            NoiseSpec::Gumbel { location, scale } => {
                Gumbel::new(*location, *scale).map_err(|e| bad(e.to_string()))?.sample(rng)
            }
            NoiseSpec::Exponential { rate } => Exp::new(*rate).map_err(|e| bad(e.to_string()))?.sample(rng),
            NoiseSpec::Gamma { shape, scale } => {
                Gamma::new(*shape, *scale).map_err(|e| bad(e.to_string()))?.sample(rng)
            }
            NoiseSpec::Bernoulli { p } => {
                if Bernoulli::new(*p).map_err(|e| bad(e.to_string()))?.sample(rng) {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseSpec::Uniform { low, high } => Uniform::new(*low, *high).map_err(|e| bad(e.to_string()))?.sample(rng),
            NoiseSpec::Power { exponent } => {
                Pareto::new(1.0, exponent - 1.0).map_err(|e| bad(e.to_string()))?.sample(rng)
            }
            NoiseSpec::Product { factors } => {
                let mut v = 1.0;
                for f in factors {
                    v *= f.sample(rng)?;
                }
                v
            }
            NoiseSpec::Affine { inner, scale, shift } => scale * inner.sample(rng)? + shift,
            NoiseSpec::Pow { inner, exponent } => {
                let v = inner.sample(rng)?;
                if exponent.fract() == 0.0 {
                    v.powi(*exponent as i32)
                } else {
                    v.powf(*exponent)
                }
            }
            NoiseSpec::Log { inner, offset } => (inner.sample(rng)? + offset).ln(),
            NoiseSpec::Truncated { inner, max } => {
                for _ in 0..MAX_REJECTIONS {
                    let v = inner.sample(rng)?;
                    if v <= *max {
                        return Ok(v);
                    }
                }
                return Err(bad(format!("truncation at {max} rejected {MAX_REJECTIONS} draws in a row")));
            }
        })
    }
}
