use std::collections::BTreeSet;

use otcd_core::graph::{
    compatible_ordering, d_separated, enumerate_mec, essential_graph, meek_closure, possible_orderings,
    structural_metrics, Dag, Ordering, Pdag,
};
use otcd_core::pcot::{run_pc, DSeparationOracle, TraceEvent};
use proptest::prelude::*;

fn one_based(d: usize, edges: &[(usize, usize)]) -> Dag {
    Dag::new(d, edges.iter().map(|&(a, b)| (a - 1, b - 1))).unwrap()
}

/// Random DAG on `min_d..=max_d` vertices: edges follow a shuffled order.
fn arb_dag(min_d: usize, max_d: usize) -> impl Strategy<Value = Dag> {
    (min_d..=max_d).prop_flat_map(|d| {
        let pairs = d * (d - 1) / 2;
        (
            proptest::collection::vec(proptest::bool::weighted(0.45), pairs),
            Just((0..d).collect::<Vec<usize>>()).prop_shuffle(),
        )
            .prop_map(move |(keep, perm)| {
                let mut edges = Vec::new();
                let mut idx = 0;
                for i in 0..d {
                    for j in i + 1..d {
                        if keep[idx] {
                            edges.push((perm[i], perm[j]));
                        }
                        idx += 1;
                    }
                }
                Dag::new(d, edges).unwrap()
            })
    })
}

fn descendants(dag: &Dag, v: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut stack = vec![v];
    while let Some(u) = stack.pop() {
        if out.insert(u) {
            stack.extend(dag.children(u));
        }
    }
    out
}

/// Enumerate every simple path of the skeleton and look for an active one.
fn brute_d_separated(dag: &Dag, a: usize, b: usize, z: &[usize]) -> bool {
    fn walk(dag: &Dag, path: &mut Vec<usize>, b: usize, z: &[usize]) -> bool {
        let last = *path.last().unwrap();
        if last == b {
            return path.windows(3).all(|w| {
                let (p, v, q) = (w[0], w[1], w[2]);
                if dag.has_edge(p, v) && dag.has_edge(q, v) {
                    descendants(dag, v).iter().any(|u| z.contains(u))
                } else {
                    !z.contains(&v)
                }
            });
        }
        for next in 0..dag.d() {
            if dag.adjacent(last, next) && !path.contains(&next) {
                path.push(next);
                if walk(dag, path, b, z) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }
    !walk(dag, &mut vec![a], b, z)
}

/// Skeleton plus the v-structures of `dag`.
fn pattern(dag: &Dag) -> Pdag {
    let mut directed = BTreeSet::new();
    for (a, c, b) in dag.v_structures() {
        directed.insert((a, c));
        directed.insert((b, c));
    }
    let undirected: Vec<_> = dag.edges().iter().copied().filter(|e| !directed.contains(e)).collect();
    Pdag::new(dag.d(), directed, undirected).unwrap()
}

/// Count DAGs in the class of `dag` by trying every orientation of the undirected CPDAG edges.
fn brute_mec_size(cpdag: &Pdag, dag: &Dag) -> usize {
    let und: Vec<_> = cpdag.undirected().iter().copied().collect();
    let target = dag.v_structures();
    (0u32..1 << und.len())
        .filter(|mask| {
            let edges = cpdag.directed().iter().copied().chain(und.iter().enumerate().map(|(i, &(a, b))| {
                if mask >> i & 1 == 1 {
                    (a, b)
                } else {
                    (b, a)
                }
            }));
            Dag::new(cpdag.d(), edges).is_ok_and(|g| g.v_structures() == target)
        })
        .count()
}

fn subsets_of(items: &[usize]) -> Vec<Vec<usize>> {
    (0u32..1 << items.len())
        .map(|m| items.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, &v)| v).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn d_separation_matches_path_enumeration(dag in arb_dag(1, 6)) {
        let d = dag.d();
        for a in 0..d {
            for b in a + 1..d {
                let others: Vec<usize> = (0..d).filter(|&v| v != a && v != b).collect();
                for z in subsets_of(&others) {
                    prop_assert_eq!(d_separated(&dag, a, b, &z).unwrap(), brute_d_separated(&dag, a, b, &z),
                        "pair ({}, {}) given {:?}", a, b, z);
                }
            }
        }
    }

    #[test]
    fn mec_members_share_skeleton_and_v_structures(dag in arb_dag(1, 6)) {
        let cpdag = essential_graph(&dag);
        let mec = enumerate_mec(&cpdag);
        prop_assert!(mec.diagnostic.is_none());
        prop_assert!(mec.members.len() <= 1usize << cpdag.undirected().len());
        prop_assert!(mec.members.contains(&dag));
        let distinct: BTreeSet<_> = mec.members.iter().map(|m| m.edges().clone()).collect();
        prop_assert_eq!(distinct.len(), mec.members.len());
        for m in &mec.members {
            prop_assert!(m.topological_order().is_some());
            prop_assert_eq!(m.skeleton(), dag.skeleton());
            prop_assert_eq!(m.v_structures(), dag.v_structures());
            prop_assert_eq!(&essential_graph(m), &cpdag);
        }
        if cpdag.undirected().len() <= 12 {
            prop_assert_eq!(mec.members.len(), brute_mec_size(&cpdag, &dag));
        }
        for o in possible_orderings(&cpdag) {
            prop_assert!(mec.members.iter().any(|m| o.is_compatible(m)));
        }
    }

    #[test]
    fn meek_closure_is_idempotent_and_only_adds_orientations(dag in arb_dag(1, 6), keep in proptest::collection::vec(any::<bool>(), 15)) {
        let pat = pattern(&dag);
        let closed = meek_closure(&pat);
        prop_assert_eq!(&closed, &essential_graph(&dag));
        prop_assert_eq!(&meek_closure(&closed), &closed);

        // extra orientations taken from the DAG itself
        let mut directed: BTreeSet<_> = pat.directed().clone();
        for (i, e) in dag.edges().iter().enumerate() {
            if keep[i % keep.len()] {
                directed.insert(*e);
            }
        }
        let undirected: Vec<_> = dag.edges().iter().copied().filter(|e| !directed.contains(e)).collect();
        let partial = Pdag::new(dag.d(), directed, undirected).unwrap();
        let once = meek_closure(&partial);
        prop_assert_eq!(&meek_closure(&once), &once);
        prop_assert!(once.directed().len() >= partial.directed().len());
        prop_assert_eq!(once.skeleton(), partial.skeleton());
    }

    #[test]
    fn metrics_vanish_exactly_on_the_essential_graph(dag in arb_dag(1, 6), other in arb_dag(1, 6)) {
        let e = essential_graph(&dag);
        prop_assert_eq!(structural_metrics(&e, &dag).unwrap().overall, 0);
        if other.d() == dag.d() {
            let f = essential_graph(&other);
            prop_assert_eq!(structural_metrics(&f, &dag).unwrap().overall == 0, f == e);
        }
    }

    #[test]
    fn pc_with_exact_oracle_recovers_the_essential_graph(dag in arb_dag(2, 6)) {
        let res = run_pc(&DSeparationOracle { dag: &dag }, None).unwrap();
        prop_assert_eq!(&res.cpdag, &essential_graph(&dag));
        prop_assert_eq!(&meek_closure(&res.cpdag), &res.cpdag);
        let mut removed = BTreeSet::new();
        let mut last_level = None;
        for ev in &res.trace {
            match ev {
                TraceEvent::EdgeRemoved { a, b, .. } => prop_assert!(removed.insert((*a.min(b), *a.max(b)))),
                TraceEvent::LevelDone { level, .. } => {
                    prop_assert!(last_level.is_none_or(|l| *level > l));
                    last_level = Some(*level);
                }
                _ => {}
            }
        }
        for e in &removed {
            prop_assert!(!res.cpdag.adjacent(e.0, e.1));
        }
    }
}

#[test]
fn equivalence_class_sizes_of_the_benchmark_graphs() {
    let six_node = one_based(6, &[(1, 2), (1, 3), (2, 4), (3, 6), (4, 5), (5, 6), (1, 5)]);
    let mec = enumerate_mec(&essential_graph(&six_node));
    assert_eq!(mec.members.len(), 4);
    assert_eq!(possible_orderings(&essential_graph(&six_node)).len(), 4);
    let true_order = Ordering::parse("1->2->4->5->3->6", &[]).unwrap();
    assert!(true_order.is_compatible(&six_node));

    let five_node = one_based(5, &[(1, 2), (1, 3), (1, 4), (2, 3), (2, 5), (3, 4), (4, 5)]);
    let cpdag = essential_graph(&five_node);
    let mec = enumerate_mec(&cpdag);
    assert_eq!(mec.members.len(), 10);
    let table: BTreeSet<Ordering> = [
        "3->2->1->4->5",
        "2->3->1->4->5",
        "2->1->3->4->5",
        "4->3->1->2->5",
        "3->4->1->2->5",
        "3->1->4->2->5",
        "4->1->3->2->5",
        "1->4->3->2->5",
        "1->3->4->2->5",
        "1->2->3->4->5",
    ]
    .iter()
    .map(|s| Ordering::parse(s, &[]).unwrap())
    .collect();
    // the table lists one linear extension per member
    for o in &table {
        assert_eq!(mec.members.iter().filter(|m| o.is_compatible(m)).count(), 1, "{o:?}");
    }
    for m in &mec.members {
        assert_eq!(table.iter().filter(|o| o.is_compatible(m)).count(), 1);
        assert!(compatible_ordering(m).is_compatible(m));
    }
}
