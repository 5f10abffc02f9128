//! Monotone lower-triangular transport maps.

mod brenier;
mod eval;
mod fit;
mod spec;

pub use brenier::{brenier_1d, MonotoneStepMap};
pub use eval::{log_pullback, map_eval, partials, MapEvaluator, MapPartials};
pub use fit::{fit_map, nll_objective, ComponentDiagnostics, FitDiagnostics, FitOptions, FittedMap};
pub use spec::{ComponentSpec, ParamVector, QuadratureSettings, TriangularMapSpec};
