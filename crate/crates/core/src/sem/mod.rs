//! Structural equation models: specification, sampling, and presets.

mod expr;
mod noise;
mod presets;

pub use expr::{BinOp, Expr, Func};
pub use noise::NoiseSpec;
pub use presets::{preset, PRESET_NAMES};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{default_names, SampleMatrix};
use crate::error::{Error, Result};
use crate::graph::Dag;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelClass {
    #[default]
    General,
    /// `X_k = g_k(parents) + U_k`.
    Anm,
    /// `X_k = h_k(g_k(parents) + U_k)` with `h_k` invertible.
    Pnl,
}

/// Assignment of one node: a mechanism over parents and its noise `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNode", into = "RawNode")]
pub struct NodeSpec {
    source: String,
    expr: Expr,
    pub noise: NoiseSpec,
}

#[derive(Serialize, Deserialize)]
struct RawNode {
    expr: String,
    noise: NoiseSpec,
}

impl TryFrom<RawNode> for NodeSpec {
    type Error = Error;
    fn try_from(raw: RawNode) -> Result<Self> {
        NodeSpec::new(&raw.expr, raw.noise)
    }
}

impl From<NodeSpec> for RawNode {
    fn from(n: NodeSpec) -> Self {
        RawNode { expr: n.source, noise: n.noise }
    }
}

impl NodeSpec {
    pub fn new(expr: &str, noise: NoiseSpec) -> Result<Self> {
        Ok(Self { source: expr.to_string(), expr: Expr::parse(expr)?, noise })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSem", into = "RawSem")]
pub struct SemSpec {
    dag: Dag,
    names: Vec<String>,
    nodes: Vec<NodeSpec>,
    class: ModelClass,
}

#[derive(Serialize, Deserialize)]
struct RawSem {
    dag: Dag,
    #[serde(default)]
    names: Option<Vec<String>>,
    nodes: Vec<NodeSpec>,
    #[serde(default)]
    class: ModelClass,
}

impl TryFrom<RawSem> for SemSpec {
    type Error = Error;
    fn try_from(raw: RawSem) -> Result<Self> {
        let names = raw.names.unwrap_or_else(|| default_names(raw.dag.d()));
        SemSpec::new(raw.dag, raw.nodes, raw.class)?.with_names(names)
    }
}

impl From<SemSpec> for RawSem {
    fn from(s: SemSpec) -> Self {
        RawSem { dag: s.dag, names: Some(s.names), nodes: s.nodes, class: s.class }
    }
}

impl SemSpec {
    /// Validate mechanisms against the graph and the class tag.
    pub fn new(dag: Dag, nodes: Vec<NodeSpec>, class: ModelClass) -> Result<Self> {
        let d = dag.d();
        if nodes.len() != d {
            return Err(Error::Dimension { expected: d, got: nodes.len() });
        }
        for (k, node) in nodes.iter().enumerate() {
            let parents = dag.parents(k);
            if let Some(v) = node.expr.variables().into_iter().find(|v| !parents.contains(v)) {
                return Err(Error::Config(format!(
                    "node X{} references X{} which is not one of its parents",
                    k + 1,
                    v + 1
                )));
            }
            node.noise.validate().map_err(|e| Error::Config(format!("node X{}: {e}", k + 1)))?;
            let ok = match class {
                ModelClass::General => true,
                ModelClass::Anm => node.expr.is_additive_in_noise(),
                ModelClass::Pnl => node.expr.noise_count() == 1,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "node X{} mechanism {:?} does not fit the {class:?} class",
                    k + 1,
                    node.source
                )));
            }
        }
        Ok(Self { names: default_names(d), dag, nodes, class })
    }

    /// Build from `(expression, noise)` pairs, reading parents off the expressions.
    pub fn from_equations(equations: Vec<(&str, NoiseSpec)>, class: ModelClass) -> Result<Self> {
        let d = equations.len();
        let mut nodes = Vec::with_capacity(d);
        let mut edges = Vec::new();
        for (k, (src, noise)) in equations.into_iter().enumerate() {
            let node = NodeSpec::new(src, noise)?;
            for v in node.expr.variables() {
                if v >= d {
                    return Err(Error::Config(format!("node X{} references X{} beyond {d} variables", k + 1, v + 1)));
                }
                edges.push((v, k));
            }
            nodes.push(node);
        }
        SemSpec::new(Dag::new(d, edges)?, nodes, class)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(Error::Dimension { expected: self.d(), got: names.len() });
        }
        self.names = names;
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.dag.d()
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn class(&self) -> ModelClass {
        self.class
    }

    /// Evaluate node `k`'s mechanism at parent values `x` (full-length row) and noise `u`.
    pub fn mechanism(&self, k: usize, x: &[f64], u: f64) -> f64 {
        self.nodes[k].expr.eval(x, u)
    }
}

/// `n` i.i.d. draws by ancestral sampling; noises are drawn node by node in
/// topological order from one ChaCha stream seeded with `seed`.
pub fn sample(spec: &SemSpec, n: usize, seed: u64) -> Result<SampleMatrix<f64>> {
    if n == 0 {
        return Err(Error::Data("sample size must be at least 1".into()));
    }
    let d = spec.d();
    let order = spec.dag.topological_order().ok_or_else(|| Error::Graph("cycle in SEM graph".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; n * d];
    for &k in &order {
        let node = &spec.nodes[k];
        for i in 0..n {
            let u = node.noise.sample(&mut rng).map_err(|e| Error::Generation { node: k, reason: e.to_string() })?;
            let v = node.expr.eval(&data[i * d..(i + 1) * d], u);
            if !v.is_finite() {
                return Err(Error::Generation {
                    node: k,
                    reason: format!("non-finite value {v} at row {i} (noise {u})"),
                });
            }
            data[i * d + k] = v;
        }
    }
    SampleMatrix::new(n, d, data)?.with_names(spec.names.clone())
}
