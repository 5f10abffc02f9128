use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{unordered, Dag, Edge, Ordering, Pdag, SepSetTable};

/// Orient every unshielded triple `k − l − m` into `k → l ← m` when `l` is not
/// in the separating set of `(k, m)`. Edges claimed in both directions stay
/// undirected and are marked as conflicts.
pub fn orient_v_structures(skeleton: &Pdag, sepsets: &SepSetTable) -> Pdag {
    let mut out = skeleton.skeleton_graph();
    let d = out.d();
    let mut wants: BTreeMap<Edge, BTreeSet<Edge>> = BTreeMap::new();
    for l in 0..d {
        let nb = out.neighbors(l);
        for (i, &k) in nb.iter().enumerate() {
            for &m in &nb[i + 1..] {
                if out.adjacent(k, m) {
                    continue;
                }
                let sep = sepsets.get(k, m).unwrap_or(&[]);
                if !sep.contains(&l) {
                    wants.entry(unordered(k, l)).or_default().insert((k, l));
                    wants.entry(unordered(m, l)).or_default().insert((m, l));
                }
            }
        }
    }
    for (edge, dirs) in wants {
        if dirs.len() == 1 {
            let (a, b) = *dirs.iter().next().expect("one direction");
            out.orient(a, b);
        } else {
            out.mark_conflict(edge.0, edge.1);
        }
    }
    out
}

fn meek_applies(p: &Pdag, x: usize, y: usize) -> bool {
    let d = p.d();
    // rule 1: c → x − y, c and y nonadjacent
    if (0..d).any(|c| p.has_directed(c, x) && c != y && !p.adjacent(c, y)) {
        return true;
    }
    // rule 2: x → c → y
    if (0..d).any(|c| p.has_directed(x, c) && p.has_directed(c, y)) {
        return true;
    }
    // rule 3: x − c → y and x − e → y with c, e nonadjacent
    let cands: Vec<usize> = (0..d).filter(|&c| p.has_undirected(x, c) && p.has_directed(c, y)).collect();
    for (i, &c) in cands.iter().enumerate() {
        if cands[i + 1..].iter().any(|&e| !p.adjacent(c, e)) {
            return true;
        }
    }
    // rule 4: x − c → e → y with c, y nonadjacent and x, e adjacent
    for c in (0..d).filter(|&c| c != y && p.has_undirected(x, c) && !p.adjacent(c, y)) {
        if (0..d).any(|e| p.has_directed(c, e) && p.has_directed(e, y) && p.adjacent(x, e)) {
            return true;
        }
    }
    false
}

/// Apply Meek's four rules until no rule fires. Conflicted edges are left alone.
pub fn meek_closure(pdag: &Pdag) -> Pdag {
    let mut p = pdag.clone();
    loop {
        let mut changed = false;
        let edges: Vec<Edge> = p.undirected().iter().copied().collect();
        for (a, b) in edges {
            if p.is_conflict(a, b) || !p.has_undirected(a, b) {
                continue;
            }
            if meek_applies(&p, a, b) {
                p.orient(a, b);
                changed = true;
            } else if meek_applies(&p, b, a) {
                p.orient(b, a);
                changed = true;
            }
        }
        if !changed {
            return p;
        }
    }
}

/// Completed partially directed graph of the Markov equivalence class.
pub fn essential_graph(dag: &Dag) -> Pdag {
    let mut p = dag.to_pdag().skeleton_graph();
    for (a, c, b) in dag.v_structures() {
        p.orient(a, c);
        p.orient(b, c);
    }
    meek_closure(&p)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MecEnumeration {
    pub members: Vec<Dag>,
    /// Set when the input is not an essential graph.
    pub diagnostic: Option<String>,
}

fn reaches(directed: &BTreeSet<Edge>, from: usize, to: usize, d: usize) -> bool {
    let mut seen = vec![false; d];
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        stack.extend(directed.range((v, 0)..(v + 1, 0)).map(|e| e.1));
    }
    false
}

/// All DAGs extending the undirected edges of `cpdag` without cycles or new
/// v-structures whose essential graph is `cpdag`. If no extension has that
/// essential graph, the consistent extensions are returned with a diagnostic.
pub fn enumerate_mec(cpdag: &Pdag) -> MecEnumeration {
    let d = cpdag.d();
    if cpdag.has_directed_cycle() {
        return MecEnumeration { members: Vec::new(), diagnostic: Some("directed edges contain a cycle".into()) };
    }
    let und: Vec<Edge> = cpdag.undirected().iter().copied().collect();
    let mut directed = cpdag.directed().clone();
    let mut extensions = Vec::new();

    fn recurse(i: usize, und: &[Edge], cpdag: &Pdag, directed: &mut BTreeSet<Edge>, out: &mut Vec<BTreeSet<Edge>>) {
        let d = cpdag.d();
        if i == und.len() {
            out.push(directed.clone());
            return;
        }
        let (a, b) = und[i];
        for (x, y) in [(a, b), (b, a)] {
            if reaches(directed, y, x, d) {
                continue;
            }
            let collider = (0..d).any(|z| z != x && directed.contains(&(z, y)) && !cpdag.adjacent(z, x));
            if collider {
                continue;
            }
            directed.insert((x, y));
            recurse(i + 1, und, cpdag, directed, out);
            directed.remove(&(x, y));
        }
    }
    recurse(0, &und, cpdag, &mut directed, &mut extensions);

    let dags: Vec<Dag> = extensions.into_iter().filter_map(|e| Dag::new(d, e).ok()).collect();
    let members: Vec<Dag> = dags.iter().filter(|g| essential_graph(g).same_marks(cpdag)).cloned().collect();
    if !members.is_empty() {
        MecEnumeration { members, diagnostic: None }
    } else if !dags.is_empty() {
        MecEnumeration {
            members: dags,
            diagnostic: Some("input is not an essential graph; returning its consistent extensions".into()),
        }
    } else {
        MecEnumeration { members: Vec::new(), diagnostic: Some("no consistent extension exists".into()) }
    }
}

/// Topological order with the smallest available vertex first.
pub fn compatible_ordering(dag: &Dag) -> Ordering {
    Ordering::new(dag.topological_order().expect("acyclic by construction")).expect("permutation")
}

/// One compatible ordering per member of the equivalence class, deduplicated.
pub fn possible_orderings(cpdag: &Pdag) -> Vec<Ordering> {
    let mut seen = BTreeSet::new();
    enumerate_mec(cpdag).members.iter().map(compatible_ordering).filter(|o| seen.insert(o.clone())).collect()
}
