//! Dominator trees.
//!
//! [`compute_dominators`] runs the iterative dataflow formulation over
//! reverse post-order with the two-finger `intersect` walk (Cooper, Harvey
//! and Kennedy). [`brute_force_dominators`] implements the definition
//! directly and exists as a test oracle.

use std::collections::BTreeSet;
use std::fmt::Write;

use thiserror::Error;

use crate::cfg::{dot_escape, Cfg, CfgNodeKind};

/// A rooted directed graph.
pub trait FlowGraph {
    fn node_count(&self) -> usize;
    fn entry(&self) -> usize;
    fn successors(&self, n: usize) -> &[usize];
    fn predecessors(&self, n: usize) -> &[usize];
}

impl FlowGraph for Cfg {
    fn node_count(&self) -> usize {
        self.len()
    }
    fn entry(&self) -> usize {
        self.entry
    }
    fn successors(&self, n: usize) -> &[usize] {
        Cfg::successors(self, n)
    }
    fn predecessors(&self, n: usize) -> &[usize] {
        Cfg::predecessors(self, n)
    }
}

/// Plain adjacency-list graph, for graphs that do not come from a method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    entry: usize,
    succs: Vec<Vec<usize>>,
    preds: Vec<Vec<usize>>,
}

impl DiGraph {
    pub fn new(node_count: usize, entry: usize, edges: &[(usize, usize)]) -> Self {
        let mut succs = vec![Vec::new(); node_count];
        let mut preds = vec![Vec::new(); node_count];
        let mut sorted: Vec<_> = edges.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for (a, b) in sorted {
            succs[a].push(b);
            preds[b].push(a);
        }
        DiGraph {
            entry,
            succs,
            preds,
        }
    }
}

impl FlowGraph for DiGraph {
    fn node_count(&self) -> usize {
        self.succs.len()
    }
    fn entry(&self) -> usize {
        self.entry
    }
    fn successors(&self, n: usize) -> &[usize] {
        &self.succs[n]
    }
    fn predecessors(&self, n: usize) -> &[usize] {
        &self.preds[n]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomError {
    #[error("node {0} is unreachable from the entry")]
    Unreachable(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("brute-force dominance is limited to {max} nodes, graph has {nodes}")]
pub struct OracleScaleError {
    pub nodes: usize,
    pub max: usize,
}

pub const ORACLE_MAX_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomTree {
    entry: usize,
    idom: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

impl DomTree {
    pub fn entry(&self) -> usize {
        self.entry
    }

    pub fn len(&self) -> usize {
        self.idom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idom.is_empty()
    }

    /// Immediate dominator; `None` only for the entry.
    pub fn idom(&self, n: usize) -> Option<usize> {
        self.idom[n]
    }

    /// Nodes immediately dominated by `n`, ascending.
    pub fn children(&self, n: usize) -> &[usize] {
        &self.children[n]
    }

    /// Tree edges `(idom(v), v)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<_> = self
            .idom
            .iter()
            .enumerate()
            .filter_map(|(v, p)| p.map(|p| (p, v)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Whether `a` dominates `b` (reflexive), read off the tree.
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            cur = self.idom[c];
        }
        false
    }

    /// All dominators of `n`: `n` and its tree ancestors.
    pub fn dominator_set(&self, n: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut cur = Some(n);
        while let Some(c) = cur {
            out.insert(c);
            cur = self.idom[c];
        }
        out
    }

    /// Graphviz rendering; labels are taken from the CFG.
    pub fn to_dot(&self, cfg: &Cfg) -> String {
        let mut out = String::from("digraph domtree {\n");
        for n in &cfg.nodes {
            let label = match n.kind {
                CfgNodeKind::Start => "START".to_string(),
                CfgNodeKind::End => "END".to_string(),
                CfgNodeKind::Stmt => n.label.clone(),
            };
            let _ = writeln!(out, "  n{} [label=\"{}\"];", n.id, dot_escape(&label));
        }
        for (a, b) in self.edges() {
            let _ = writeln!(out, "  n{a} -> n{b};");
        }
        out.push_str("}\n");
        out
    }
}

fn reverse_post_order<G: FlowGraph>(g: &G) -> Vec<usize> {
    let n = g.node_count();
    let mut visited = vec![false; n];
    let mut post = Vec::with_capacity(n);
    let mut stack = vec![(g.entry(), 0usize)];
    visited[g.entry()] = true;
    while let Some((node, next_child)) = stack.last_mut() {
        let succs = g.successors(*node);
        if *next_child < succs.len() {
            let child = succs[*next_child];
            *next_child += 1;
            if !visited[child] {
                visited[child] = true;
                stack.push((child, 0));
            }
        } else {
            post.push(*node);
            stack.pop();
        }
    }
    post.reverse();
    post
}

pub fn compute_dominators<G: FlowGraph>(g: &G) -> Result<DomTree, DomError> {
    let n = g.node_count();
    let rpo = reverse_post_order(g);
    if rpo.len() != n {
        let mut reached = vec![false; n];
        for &v in &rpo {
            reached[v] = true;
        }
        let missing = reached.iter().position(|r| !r).expect("some node unreached");
        return Err(DomError::Unreachable(missing));
    }

    let mut order = vec![0usize; n];
    for (i, &v) in rpo.iter().enumerate() {
        order[v] = i;
    }

    let entry = g.entry();
    let mut idom: Vec<Option<usize>> = vec![None; n];
    idom[entry] = Some(entry);

    let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| {
        while a != b {
            while order[a] > order[b] {
                a = idom[a].expect("processed");
            }
            while order[b] > order[a] {
                b = idom[b].expect("processed");
            }
        }
        a
    };

    let mut changed = true;
    while changed {
        changed = false;
        for &v in rpo.iter().skip(1) {
            let mut new_idom = None;
            for &p in g.predecessors(v) {
                if idom[p].is_none() {
                    continue;
                }
                new_idom = Some(match new_idom {
                    None => p,
                    Some(cur) => intersect(&idom, p, cur),
                });
            }
            if new_idom.is_some() && idom[v] != new_idom {
                idom[v] = new_idom;
                changed = true;
            }
        }
    }

    idom[entry] = None;
    let mut children = vec![Vec::new(); n];
    for (v, p) in idom.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(v);
        }
    }
    Ok(DomTree {
        entry,
        idom,
        children,
    })
}

/// Dominator sets straight from the definition: `u` dominates `v` when
/// removing `u` cuts every path from the entry to `v`.
pub fn brute_force_dominators<G: FlowGraph>(g: &G) -> Result<Vec<BTreeSet<usize>>, OracleScaleError> {
    let n = g.node_count();
    if n > ORACLE_MAX_NODES {
        return Err(OracleScaleError {
            nodes: n,
            max: ORACLE_MAX_NODES,
        });
    }
    let reachable_without = |removed: Option<usize>| {
        let mut seen = vec![false; n];
        if Some(g.entry()) == removed {
            return seen;
        }
        let mut stack = vec![g.entry()];
        seen[g.entry()] = true;
        while let Some(u) = stack.pop() {
            for &v in g.successors(u) {
                if !seen[v] && Some(v) != removed {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };

    let mut doms = vec![BTreeSet::new(); n];
    for u in 0..n {
        let seen = reachable_without(Some(u));
        for (v, dom) in doms.iter_mut().enumerate() {
            if v == u || !seen[v] {
                dom.insert(u);
            }
        }
    }
    Ok(doms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn chain() {
        let g = DiGraph::new(4, 0, &[(0, 1), (1, 2), (2, 3)]);
        let dt = compute_dominators(&g).unwrap();
        assert_eq!(dt.idom(1), Some(0));
        assert_eq!(dt.idom(2), Some(1));
        assert_eq!(dt.idom(3), Some(2));
        assert_eq!(dt.idom(0), None);
        assert_eq!(brute_force_dominators(&g).unwrap()[2], set(&[0, 1, 2]));
    }

    #[test]
    fn diamond() {
        // S=0 → 1, 1→2, 1→3, 2→4, 3→4, 4→E=5
        let g = DiGraph::new(6, 0, &[(0, 1), (1, 2), (1, 3), (2, 4), (3, 4), (4, 5)]);
        let dt = compute_dominators(&g).unwrap();
        assert_eq!(dt.idom(2), Some(1));
        assert_eq!(dt.idom(3), Some(1));
        assert_eq!(dt.idom(4), Some(1));
        assert_eq!(dt.idom(5), Some(4));
        assert_eq!(dt.children(1), &[2, 3, 4]);
        let oracle = brute_force_dominators(&g).unwrap();
        assert_eq!(oracle[4], set(&[0, 1, 4]));
        for v in 0..6 {
            assert_eq!(dt.dominator_set(v), oracle[v]);
        }
    }

    #[test]
    fn single_node() {
        let g = DiGraph::new(1, 0, &[]);
        assert_eq!(brute_force_dominators(&g).unwrap()[0], set(&[0]));
        let dt = compute_dominators(&g).unwrap();
        assert!(dt.edges().is_empty());
    }

    #[test]
    fn loop_with_back_edge() {
        // 0 → 1 ⇄ 2, 1 → 3
        let g = DiGraph::new(4, 0, &[(0, 1), (1, 2), (2, 1), (1, 3)]);
        let dt = compute_dominators(&g).unwrap();
        assert_eq!(dt.edges(), vec![(0, 1), (1, 2), (1, 3)]);
    }

    #[test]
    fn unreachable_node_is_an_error() {
        let g = DiGraph::new(3, 0, &[(0, 1)]);
        assert_eq!(compute_dominators(&g), Err(DomError::Unreachable(2)));
    }

    #[test]
    fn oracle_refuses_large_graphs() {
        let edges: Vec<_> = (0..70).map(|i| (i, i + 1)).collect();
        let g = DiGraph::new(71, 0, &edges);
        assert!(brute_force_dominators(&g).is_err());
    }
}
