//! Shortest-path primitives over directed, latency-weighted arcs.
//!
//! Routes are totally ordered by `(cost, arc-id sequence)`, so ties between
//! equal-cost routes always resolve to the lexicographically smaller id list.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use num_traits::Zero;

use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arc {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub cost: Rational,
}

impl Arc {
    pub fn new(id: impl Into<String>, src: impl Into<String>, dst: impl Into<String>, cost: Rational) -> Self {
        Self { id: id.into(), src: src.into(), dst: dst.into(), cost }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Route {
    pub cost: Rational,
    pub arcs: Vec<String>,
}

/// Minimum route from `src` to `dst` that never visits `banned_nodes` and
/// only uses arcs accepted by `allow`.
pub fn shortest(
    arcs: &[Arc],
    src: &str,
    dst: &str,
    banned_nodes: &BTreeSet<String>,
    allow: impl Fn(&Arc) -> bool,
) -> Option<Route> {
    if banned_nodes.contains(src) {
        return None;
    }
    let mut settled: BTreeSet<&str> = BTreeSet::new();
    let mut heap: BinaryHeap<Reverse<(Rational, Vec<String>, &str)>> = BinaryHeap::new();
    heap.push(Reverse((Rational::zero(), Vec::new(), src)));
    while let Some(Reverse((cost, seq, node))) = heap.pop() {
        if !settled.insert(node) {
            continue;
        }
        if node == dst {
            return Some(Route { cost, arcs: seq });
        }
        for arc in arcs.iter().filter(|a| a.src == node) {
            let next = arc.dst.as_str();
            if settled.contains(next) || banned_nodes.contains(next) || !allow(arc) {
                continue;
            }
            let mut s = seq.clone();
            s.push(arc.id.clone());
            heap.push(Reverse((cost + arc.cost, s, next)));
        }
    }
    None
}

/// Up to `k` loop-free routes in increasing `(cost, ids)` order (Yen).
pub fn k_shortest(arcs: &[Arc], src: &str, dst: &str, k: usize) -> Vec<Route> {
    let mut found: Vec<Route> = Vec::new();
    if k == 0 || src == dst {
        return found;
    }
    let Some(first) = shortest(arcs, src, dst, &BTreeSet::new(), |_| true) else {
        return found;
    };
    found.push(first);
    let mut candidates: BTreeSet<Route> = BTreeSet::new();
    let by_id = |id: &str| arcs.iter().find(|a| a.id == id).expect("route arcs exist");

    while found.len() < k {
        let prev = found.last().expect("non-empty").clone();
        let nodes: Vec<&str> = std::iter::once(src)
            .chain(prev.arcs.iter().map(|id| by_id(id).dst.as_str()))
            .collect();
        for i in 0..prev.arcs.len() {
            let spur_node = nodes[i];
            let root = &prev.arcs[..i];
            let banned_arcs: BTreeSet<&str> = found
                .iter()
                .filter(|r| r.arcs.len() > i && r.arcs[..i] == *root)
                .map(|r| r.arcs[i].as_str())
                .collect();
            let banned_nodes: BTreeSet<String> = nodes[..i].iter().map(|n| n.to_string()).collect();
            let Some(spur) = shortest(arcs, spur_node, dst, &banned_nodes, |a| !banned_arcs.contains(a.id.as_str()))
            else {
                continue;
            };
            let root_cost = root.iter().map(|id| by_id(id).cost).fold(Rational::zero(), |a, b| a + b);
            let mut ids = root.to_vec();
            ids.extend(spur.arcs);
            let cand = Route { cost: root_cost + spur.cost, arcs: ids };
            if !found.contains(&cand) {
                candidates.insert(cand);
            }
        }
        match candidates.pop_first() {
            Some(next) => found.push(next),
            None => break,
        }
    }
    found
}
