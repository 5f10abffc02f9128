use std::collections::{BTreeSet, VecDeque};

use super::Dag;
use crate::error::{Error, Result};

/// Whether `a` and `b` are d-separated given `z`, by reachability over
/// active trails.
pub fn d_separated(dag: &Dag, a: usize, b: usize, z: &[usize]) -> Result<bool> {
    let d = dag.d();
    if let Some(&v) = [a, b].iter().chain(z).find(|&&v| v >= d) {
        return Err(Error::Graph(format!("vertex {v} out of range for {d} vertices")));
    }
    if a == b || z.contains(&a) || z.contains(&b) {
        return Err(Error::Graph("query vertices must be distinct and outside the conditioning set".into()));
    }
    let in_z: Vec<bool> = (0..d).map(|v| z.contains(&v)).collect();
    // ancestors of z (including z)
    let mut anc = in_z.clone();
    let mut stack: Vec<usize> = z.to_vec();
    while let Some(v) = stack.pop() {
        for p in dag.parents(v) {
            if !anc[p] {
                anc[p] = true;
                stack.push(p);
            }
        }
    }
    // state: (vertex, arrived from a child = going up)
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([(a, true)]);
    while let Some((v, up)) = queue.pop_front() {
        if !seen.insert((v, up)) {
            continue;
        }
        if v == b {
            return Ok(false);
        }
        if up {
            if !in_z[v] {
                for p in dag.parents(v) {
                    queue.push_back((p, true));
                }
                for c in dag.children(v) {
                    queue.push_back((c, false));
                }
            }
        } else {
            if !in_z[v] {
                for c in dag.children(v) {
                    queue.push_back((c, false));
                }
            }
            if anc[v] {
                for p in dag.parents(v) {
                    queue.push_back((p, true));
                }
            }
        }
    }
    Ok(true)
}
