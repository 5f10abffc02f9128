//! Directed and partially directed graphs over vertices `0..d`.

mod cpdag;
mod dsep;
mod metrics;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cpdag::{
    compatible_ordering, enumerate_mec, essential_graph, meek_closure, orient_v_structures, possible_orderings,
    MecEnumeration,
};
pub use dsep::d_separated;
pub use metrics::{structural_metrics, StructuralMetrics};

pub type Edge = (usize, usize);

fn unordered(a: usize, b: usize) -> Edge {
    (a.min(b), a.max(b))
}

/// Directed acyclic graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDag")]
pub struct Dag {
    d: usize,
    edges: BTreeSet<Edge>,
}

#[derive(Deserialize)]
struct RawDag {
    d: usize,
    edges: Vec<Edge>,
}

impl TryFrom<RawDag> for Dag {
    type Error = Error;
    fn try_from(raw: RawDag) -> Result<Self> {
        Dag::new(raw.d, raw.edges)
    }
}

impl Dag {
    pub fn new(d: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= d || b >= d {
                return Err(Error::Graph(format!("edge ({a}, {b}) out of range for {d} vertices")));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop at {a}")));
            }
            if set.contains(&(b, a)) {
                return Err(Error::Graph(format!("edge ({a}, {b}) present in both directions")));
            }
            if !set.insert((a, b)) {
                return Err(Error::Graph(format!("duplicate edge ({a}, {b})")));
            }
        }
        let dag = Self { d, edges: set };
        if dag.topological_order().is_none() {
            return Err(Error::Graph("graph has a directed cycle".into()));
        }
        Ok(dag)
    }

    pub fn empty(d: usize) -> Self {
        Self { d, edges: BTreeSet::new() }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a, b))
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.0 == v).map(|e| e.1).collect()
    }

    /// Kahn's algorithm, smallest available vertex first.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg = vec![0usize; self.d];
        for &(_, b) in &self.edges {
            indeg[b] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..self.d).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.d);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &(_, b) in self.edges.range((v, 0)..(v + 1, 0)) {
                indeg[b] -= 1;
                if indeg[b] == 0 {
                    ready.insert(b);
                }
            }
        }
        (order.len() == self.d).then_some(order)
    }

    /// Unordered skeleton edges `(min, max)`.
    pub fn skeleton(&self) -> BTreeSet<Edge> {
        self.edges.iter().map(|&(a, b)| unordered(a, b)).collect()
    }

    /// Triples `(a, c, b)` with `a → c ← b`, `a < b`, and `a, b` nonadjacent.
    pub fn v_structures(&self) -> BTreeSet<(usize, usize, usize)> {
        let mut out = BTreeSet::new();
        for c in 0..self.d {
            let pa = self.parents(c);
            for (i, &a) in pa.iter().enumerate() {
                for &b in &pa[i + 1..] {
                    if !self.adjacent(a, b) {
                        out.insert((a.min(b), c, a.max(b)));
                    }
                }
            }
        }
        out
    }

    pub fn to_pdag(&self) -> Pdag {
        Pdag { d: self.d, directed: self.edges.clone(), undirected: BTreeSet::new(), conflicts: BTreeSet::new() }
    }

    pub fn to_dot(&self, names: Option<&[String]>) -> String {
        self.to_pdag().to_dot(names)
    }
}

/// Partially directed graph. Undirected edges are stored as `(min, max)`.
/// Conflicted edges are undirected edges on which orientation rules disagreed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPdag")]
pub struct Pdag {
    d: usize,
    directed: BTreeSet<Edge>,
    undirected: BTreeSet<Edge>,
    conflicts: BTreeSet<Edge>,
}

#[derive(Deserialize)]
struct RawPdag {
    d: usize,
    #[serde(default)]
    directed: Vec<Edge>,
    #[serde(default)]
    undirected: Vec<Edge>,
    #[serde(default)]
    conflicts: Vec<Edge>,
}

impl TryFrom<RawPdag> for Pdag {
    type Error = Error;
    fn try_from(raw: RawPdag) -> Result<Self> {
        let mut p = Pdag::new(raw.d, raw.directed, raw.undirected)?;
        for (a, b) in raw.conflicts {
            let e = unordered(a, b);
            if !p.undirected.contains(&e) {
                return Err(Error::Graph(format!("conflict ({a}, {b}) is not an undirected edge")));
            }
            p.conflicts.insert(e);
        }
        Ok(p)
    }
}

impl Pdag {
    pub fn new(
        d: usize,
        directed: impl IntoIterator<Item = Edge>,
        undirected: impl IntoIterator<Item = Edge>,
    ) -> Result<Self> {
        let mut p = Self::empty(d);
        for (a, b) in undirected {
            p.check_new(a, b)?;
            p.undirected.insert(unordered(a, b));
        }
        for (a, b) in directed {
            p.check_new(a, b)?;
            p.directed.insert((a, b));
        }
        Ok(p)
    }

    fn check_new(&self, a: usize, b: usize) -> Result<()> {
        if a >= self.d || b >= self.d {
            return Err(Error::Graph(format!("edge ({a}, {b}) out of range for {} vertices", self.d)));
        }
        if a == b {
            return Err(Error::Graph(format!("self-loop at {a}")));
        }
        if self.adjacent(a, b) {
            return Err(Error::Graph(format!("edge between {a} and {b} given twice")));
        }
        Ok(())
    }

    pub fn empty(d: usize) -> Self {
        Self { d, directed: BTreeSet::new(), undirected: BTreeSet::new(), conflicts: BTreeSet::new() }
    }

    /// Complete undirected graph.
    pub fn complete(d: usize) -> Self {
        let mut p = Self::empty(d);
        for a in 0..d {
            for b in a + 1..d {
                p.undirected.insert((a, b));
            }
        }
        p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn directed(&self) -> &BTreeSet<Edge> {
        &self.directed
    }

    pub fn undirected(&self) -> &BTreeSet<Edge> {
        &self.undirected
    }

    pub fn conflicts(&self) -> &BTreeSet<Edge> {
        &self.conflicts
    }

    pub fn has_directed(&self, a: usize, b: usize) -> bool {
        self.directed.contains(&(a, b))
    }

    pub fn has_undirected(&self, a: usize, b: usize) -> bool {
        self.undirected.contains(&unordered(a, b))
    }

    pub fn is_conflict(&self, a: usize, b: usize) -> bool {
        self.conflicts.contains(&unordered(a, b))
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.has_undirected(a, b) || self.has_directed(a, b) || self.has_directed(b, a)
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.d).filter(|&u| u != v && self.adjacent(u, v)).collect()
    }

    pub fn undirected_neighbors(&self, v: usize) -> Vec<usize> {
        (0..self.d).filter(|&u| u != v && self.has_undirected(u, v)).collect()
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        (0..self.d).filter(|&u| self.has_directed(u, v)).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.d).filter(|&u| self.has_directed(v, u)).collect()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.d).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn skeleton(&self) -> BTreeSet<Edge> {
        self.directed.iter().map(|&(a, b)| unordered(a, b)).chain(self.undirected.iter().copied()).collect()
    }

    pub fn n_edges(&self) -> usize {
        self.directed.len() + self.undirected.len()
    }

    pub fn remove_edge(&mut self, a: usize, b: usize) {
        self.undirected.remove(&unordered(a, b));
        self.conflicts.remove(&unordered(a, b));
        self.directed.remove(&(a, b));
        self.directed.remove(&(b, a));
    }

    /// Turn the undirected edge `a − b` into `a → b`. Returns false if not undirected.
    pub fn orient(&mut self, a: usize, b: usize) -> bool {
        if self.undirected.remove(&unordered(a, b)) {
            self.conflicts.remove(&unordered(a, b));
            self.directed.insert((a, b));
            true
        } else {
            false
        }
    }

    pub(crate) fn mark_conflict(&mut self, a: usize, b: usize) {
        if self.has_undirected(a, b) {
            self.conflicts.insert(unordered(a, b));
        }
    }

    /// Graph with every edge undirected.
    pub fn skeleton_graph(&self) -> Pdag {
        Pdag { d: self.d, directed: BTreeSet::new(), undirected: self.skeleton(), conflicts: BTreeSet::new() }
    }

    /// Same edge marks ignoring conflict bookkeeping.
    pub fn same_marks(&self, other: &Pdag) -> bool {
        self.d == other.d && self.directed == other.directed && self.undirected == other.undirected
    }

    pub fn is_fully_directed(&self) -> bool {
        self.undirected.is_empty()
    }

    pub fn has_directed_cycle(&self) -> bool {
        Dag { d: self.d, edges: self.directed.clone() }.topological_order().is_none()
    }

    pub fn to_dot(&self, names: Option<&[String]>) -> String {
        let label = |v: usize| match names {
            Some(n) if v < n.len() => n[v].clone(),
            _ => format!("X{}", v + 1),
        };
        let mut s = String::from("digraph G {\n");
        for v in 0..self.d {
            s.push_str(&format!("  {v} [label=\"{}\"];\n", label(v)));
        }
        for &(a, b) in &self.directed {
            s.push_str(&format!("  {a} -> {b};\n"));
        }
        for &(a, b) in &self.undirected {
            let style = if self.conflicts.contains(&(a, b)) { ", color=red" } else { "" };
            s.push_str(&format!("  {a} -> {b} [dir=none{style}];\n"));
        }
        s.push_str("}\n");
        s
    }
}

/// Separating sets recorded for removed edges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SepSetTable {
    d: usize,
    sets: BTreeMap<String, Vec<usize>>,
}

impl SepSetTable {
    pub fn new(d: usize) -> Self {
        Self { d, sets: BTreeMap::new() }
    }

    fn key(a: usize, b: usize) -> String {
        let (a, b) = unordered(a, b);
        format!("{a},{b}")
    }

    pub fn insert(&mut self, a: usize, b: usize, mut set: Vec<usize>) {
        set.sort_unstable();
        self.sets.insert(Self::key(a, b), set);
    }

    pub fn get(&self, a: usize, b: usize) -> Option<&[usize]> {
        self.sets.get(&Self::key(a, b)).map(Vec::as_slice)
    }

    pub fn contains_pair(&self, a: usize, b: usize) -> bool {
        self.sets.contains_key(&Self::key(a, b))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Edge, &[usize])> {
        self.sets.iter().map(|(k, v)| {
            let mut it = k.split(',').map(|t| t.parse::<usize>().expect("valid key"));
            ((it.next().expect("first"), it.next().expect("second")), v.as_slice())
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }
}

/// Permutation of `0..d`; `order[i]` is the vertex at position `i`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Ordering(Vec<usize>);

impl TryFrom<Vec<usize>> for Ordering {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Ordering::new(v)
    }
}

impl From<Ordering> for Vec<usize> {
    fn from(o: Ordering) -> Self {
        o.0
    }
}

impl Ordering {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let d = order.len();
        let mut seen = vec![false; d];
        for &v in &order {
            if v >= d || seen[v] {
                return Err(Error::Graph(format!("{order:?} is not a permutation")));
            }
            seen[v] = true;
        }
        Ok(Self(order))
    }

    pub fn identity(d: usize) -> Self {
        Self((0..d).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `position()[v]` is the rank of vertex `v`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (i, &v) in self.0.iter().enumerate() {
            pos[v] = i;
        }
        pos
    }

    /// Every edge goes from an earlier to a later vertex.
    pub fn is_compatible(&self, dag: &Dag) -> bool {
        let pos = self.positions();
        self.0.len() == dag.d() && dag.edges().iter().all(|&(a, b)| pos[a] < pos[b])
    }

    /// `"X1->X3->X2"` style label.
    pub fn label(&self, names: &[String]) -> String {
        self.0
            .iter()
            .map(|&v| names.get(v).cloned().unwrap_or_else(|| format!("X{}", v + 1)))
            .collect::<Vec<_>>()
            .join("->")
    }

    /// Parse a label produced by [`Ordering::label`] or a 1-based chain like `"1->3->2"`.
    pub fn parse(label: &str, names: &[String]) -> Result<Self> {
        let order = label
            .split("->")
            .map(|tok| {
                let tok = tok.trim();
                names
                    .iter()
                    .position(|n| n == tok)
                    .or_else(|| tok.parse::<usize>().ok().filter(|&v| v >= 1).map(|v| v - 1))
                    .ok_or_else(|| Error::Parse {
                        location: label.to_string(),
                        message: format!("unknown vertex {tok}"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(order)
    }
}
