//! Named SEMs used by the experiments and tests.

use super::{ModelClass, NoiseSpec, SemSpec};
use crate::error::{Error, Result};

pub const PRESET_NAMES: &[&str] = &[
    "pcot6",
    "anm6",
    "vstruct3",
    "linear_gaussian(rho)",
    "linear_gaussian_sem(d)",
    "lingam2",
    "pnl2",
    "pnl_exp2",
    "sachs5",
];

fn n01() -> NoiseSpec {
    NoiseSpec::standard_normal()
}

fn gumbel(location: f64, scale: f64) -> NoiseSpec {
    NoiseSpec::Gumbel { location, scale }
}

fn exp(rate: f64) -> NoiseSpec {
    NoiseSpec::Exponential { rate }
}

fn ber_half() -> NoiseSpec {
    NoiseSpec::Bernoulli { p: 0.5 }
}

/// `(inner + shift) / div`
fn shifted(inner: NoiseSpec, shift: f64, div: f64) -> NoiseSpec {
    NoiseSpec::affine(inner, 1.0 / div, shift / div)
}

/// Six-variable SEM for PC experiments; graph 1→3, 2→3, 1→5, 4→5, 4→6, 5→6.
pub fn pcot6() -> SemSpec {
    SemSpec::from_equations(
        vec![
            ("U", NoiseSpec::affine(NoiseSpec::product([n01(), n01()]), 0.2, 0.0)),
            ("U", shifted(gumbel(0.0, 0.7), -2.5, 2.5)),
            ("X1^2 + X2 + U", NoiseSpec::affine(NoiseSpec::product([n01(), exp(1.0)]), 1.0 / 8.0, 0.0)),
            ("U", shifted(NoiseSpec::product([ber_half(), exp(1.0)]), -3.0, 2.0)),
            (
                "0.5*X1^2 - 0.5*X4^2 + X1*X4 + U",
                shifted(NoiseSpec::product([ber_half(), NoiseSpec::Gamma { shape: 2.0, scale: 3.0 }]), -24.0, 12.0),
            ),
            ("X4^3 - X5 + U", NoiseSpec::affine(gumbel(0.0, 0.5), 1.0, -1.5)),
        ],
        ModelClass::Anm,
    )
    .expect("valid preset")
}

/// Six-variable ANM for ordering experiments; graph 1→2, 1→3, 2→4, 3→6, 4→5, 5→6, 1→5.
pub fn anm6() -> SemSpec {
    let log_chi = || NoiseSpec::log(NoiseSpec::pow(n01(), 2.0), 1.0);
    SemSpec::from_equations(
        vec![
            ("U", NoiseSpec::affine(NoiseSpec::pow(n01(), 2.0), 0.2, 0.0)),
            ("0.5*X1^2 + U", NoiseSpec::affine(NoiseSpec::Gaussian { mean: -2.5, sd: 1.0 }, 0.5, 0.0)),
            ("log(X1^2) + U", log_chi()),
            ("2*X2*(X2 + 1) + U", NoiseSpec::affine(NoiseSpec::pow(n01(), 2.0), 0.3, 0.0)),
            ("0.5*X1^2 - 0.5*X4^2 + X1*X4 + U", log_chi()),
            ("0.25*X3^2 - X5 + U", n01()),
        ],
        ModelClass::Anm,
    )
    .expect("valid preset")
}

/// Three-variable v-structure 1→3←2 with a heavy-tailed root. The collider is a
/// deterministic function of its parents; its noise is drawn but unused.
pub fn vstruct3() -> SemSpec {
    let c = (4.0f64 / 3.0).sqrt();
    let u1 = NoiseSpec::truncated(NoiseSpec::affine(NoiseSpec::Power { exponent: 4.0 }, c, -1.5 * c), 1000.0);
    SemSpec::from_equations(
        vec![
            ("U/450", u1),
            ("U", shifted(gumbel(0.0, 0.7), -2.5, 2.5)),
            ("(X2^3 + log(abs(X2)*X1^2))/15", NoiseSpec::product([ber_half(), exp(0.5)])),
        ],
        ModelClass::General,
    )
    .expect("valid preset")
}

/// Standard bivariate Gaussian with correlation `rho`.
pub fn linear_gaussian(rho: f64) -> Result<SemSpec> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Config(format!("correlation must lie in (-1, 1), got {rho}")));
    }
    let sd = (1.0 - rho * rho).sqrt();
    SemSpec::from_equations(
        vec![("U", n01()), (&format!("{rho}*X1 + U"), NoiseSpec::Gaussian { mean: 0.0, sd })],
        ModelClass::Anm,
    )
}

/// Gaussian chain `X_k = 0.8 X_{k-1} + U_k` with unit noises.
pub fn linear_gaussian_sem(d: usize) -> Result<SemSpec> {
    if d < 1 {
        return Err(Error::Config("linear_gaussian_sem needs d >= 1".into()));
    }
    let exprs: Vec<String> = (0..d).map(|k| if k == 0 { "U".to_string() } else { format!("0.8*X{k} + U") }).collect();
    SemSpec::from_equations(exprs.iter().map(|e| (e.as_str(), n01())).collect(), ModelClass::Anm)
}

/// Linear model with Gumbel noises, `X2 = X1 + U`.
pub fn lingam2() -> SemSpec {
    SemSpec::from_equations(vec![("U", gumbel(0.0, 1.0)), ("X1 + U", gumbel(0.0, 1.0))], ModelClass::Anm)
        .expect("valid preset")
}

/// Post-nonlinear pair `X2 = (0.3*X1 + U)^3`.
pub fn pnl2() -> SemSpec {
    SemSpec::from_equations(
        vec![("U", NoiseSpec::Uniform { low: -2.0, high: 2.0 }), ("(0.3*X1 + U)^3", n01())],
        ModelClass::Pnl,
    )
    .expect("valid preset")
}

/// Post-nonlinear pair `X2 = exp((0.5*X1^2 + U)/2)` with Gaussian noises.
pub fn pnl_exp2() -> SemSpec {
    SemSpec::from_equations(vec![("U", n01()), ("exp(0.5*(0.5*X1^2 + U))", n01())], ModelClass::Pnl)
        .expect("valid preset")
}

/// Synthetic ANM on the five-protein graph 1→2, 1→3, 1→4, 2→3, 2→5, 3→4, 4→5.
pub fn sachs5() -> SemSpec {
    let unif = || NoiseSpec::Uniform { low: -1.0, high: 1.0 };
    SemSpec::from_equations(
        vec![
            ("U", unif()),
            ("X1^2 + U", unif()),
            ("X1 - X2^2 + U", unif()),
            ("X3^2 + 0.5*X1 + U", unif()),
            ("X2^2 - X4 + U", unif()),
        ],
        ModelClass::Anm,
    )
    .expect("valid preset")
    .with_names(["raf", "mek", "plcg", "pip2", "pip3"].iter().map(|s| s.to_string()).collect())
    .expect("five names")
}

fn arg(name: &str, prefix: &str) -> Option<String> {
    name.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')').map(|s| s.trim().to_string())
}

/// Look up a preset by name; parameterized presets use call syntax,
/// e.g. `linear_gaussian(0.5)` or `linear_gaussian_sem(4)`.
pub fn preset(name: &str) -> Result<SemSpec> {
    let name = name.trim();
    let bad_arg = |a: &str| Error::Config(format!("bad preset argument {a:?} in {name}"));
    if let Some(a) = arg(name, "linear_gaussian_sem") {
        return linear_gaussian_sem(a.parse().map_err(|_| bad_arg(&a))?);
    }
    if let Some(a) = arg(name, "linear_gaussian") {
        return linear_gaussian(a.parse().map_err(|_| bad_arg(&a))?);
    }
    Ok(match name {
        "pcot6" => pcot6(),
        "anm6" => anm6(),
        "vstruct3" => vstruct3(),
        "lingam2" => lingam2(),
        "pnl2" => pnl2(),
        "pnl_exp2" => pnl_exp2(),
        "sachs5" => sachs5(),
        _ => return Err(Error::Config(format!("unknown preset {name:?}; available: {}", PRESET_NAMES.join(", ")))),
    })
}
