use serde::{Deserialize, Serialize};

use super::{essential_graph, Dag, Pdag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralMetrics {
    pub missing: usize,
    pub extra: usize,
    pub misoriented: usize,
    pub overall: usize,
}

#[derive(PartialEq)]
enum Mark {
    Forward,
    Backward,
    Undirected,
    Conflict,
}

fn mark(p: &Pdag, a: usize, b: usize) -> Mark {
    if p.has_directed(a, b) {
        Mark::Forward
    } else if p.has_directed(b, a) {
        Mark::Backward
    } else if p.is_conflict(a, b) {
        Mark::Conflict
    } else {
        Mark::Undirected
    }
}

/// Missing, extra, and misoriented edges of `estimated` against the essential
/// graph of `truth`. Conflicted edges always count as misoriented.
pub fn structural_metrics(estimated: &Pdag, truth: &Dag) -> Result<StructuralMetrics> {
    if estimated.d() != truth.d() {
        return Err(Error::Dimension { expected: truth.d(), got: estimated.d() });
    }
    let target = essential_graph(truth);
    let est = estimated.skeleton();
    let tru = target.skeleton();
    let missing = tru.difference(&est).count();
    let extra = est.difference(&tru).count();
    let misoriented = est
        .intersection(&tru)
        .filter(|&&(a, b)| {
            let m = mark(estimated, a, b);
            m == Mark::Conflict || m != mark(&target, a, b)
        })
        .count();
    Ok(StructuralMetrics { missing, extra, misoriented, overall: missing + extra + misoriented })
}
