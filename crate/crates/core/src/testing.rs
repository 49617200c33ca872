//! Seeded generators for random methods and flow graphs. Used by the
//! property tests, the acceptance suite and the examples.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dominators::DiGraph;

const NAMES: [&str; 8] = ["a", "b", "count", "total", "item", "size", "index", "value"];
const CALLS: [&str; 6] = ["log.debug", "list.add", "reset", "conn.close", "update", "out.print"];

struct Gen {
    rng: ChaCha8Rng,
    budget: usize,
    out: String,
    fresh: usize,
}

impl Gen {
    fn name(&mut self) -> &'static str {
        NAMES.choose(&mut self.rng).unwrap()
    }

    fn atom(&mut self) -> String {
        match self.rng.gen_range(0..4) {
            0 => self.rng.gen_range(0..100).to_string(),
            1 => format!("{}.size()", self.name()),
            _ => self.name().to_string(),
        }
    }

    fn expr(&mut self) -> String {
        let op = ["+", "-", "*"].choose(&mut self.rng).unwrap();
        if self.rng.gen_bool(0.5) {
            format!("{} {op} {}", self.atom(), self.atom())
        } else {
            self.atom()
        }
    }

    fn cond(&mut self) -> String {
        let op = ["<", ">", "==", "!=", "<="].choose(&mut self.rng).unwrap();
        format!("{} {op} {}", self.atom(), self.atom())
    }

    fn simple(&mut self) {
        let line = match self.rng.gen_range(0..3) {
            0 => {
                self.fresh += 1;
                let id = self.fresh;
                format!("int v{id} = {};", self.expr())
            }
            1 => format!("{} = {};", self.name(), self.expr()),
            _ => format!("{}({});", CALLS.choose(&mut self.rng).unwrap(), self.atom()),
        };
        self.out.push_str(&line);
        self.out.push(' ');
    }

    /// A `{ ... }` body. `in_loop` permits a guarded break or continue.
    fn block(&mut self, depth: usize, in_loop: bool) {
        self.out.push_str("{ ");
        let n = self.rng.gen_range(1..=3);
        for _ in 0..n {
            if self.budget == 0 {
                break;
            }
            self.stmt(depth, in_loop);
        }
        self.out.push_str("} ");
    }

    fn stmt(&mut self, depth: usize, in_loop: bool) {
        self.budget = self.budget.saturating_sub(1);
        let compound = depth < 3 && self.budget > 0 && self.rng.gen_bool(0.4);
        if !compound {
            if in_loop && self.rng.gen_bool(0.15) {
                let jump = if self.rng.gen_bool(0.5) { "break" } else { "continue" };
                let c = self.cond();
                self.out.push_str(&format!("if ({c}) {{ {jump}; }} "));
            } else {
                self.simple();
            }
            return;
        }
        match self.rng.gen_range(0..4) {
            0 | 1 => {
                let c = self.cond();
                self.out.push_str(&format!("if ({c}) "));
                self.block(depth + 1, in_loop);
                if self.rng.gen_bool(0.5) {
                    self.out.push_str("else ");
                    self.block(depth + 1, in_loop);
                }
            }
            2 => {
                let c = self.cond();
                self.out.push_str(&format!("while ({c}) "));
                self.block(depth + 1, true);
            }
            _ => {
                self.fresh += 1;
                let i = format!("i{}", self.fresh);
                let bound = self.atom();
                self.out.push_str(&format!("for (int {i} = 0; {i} < {bound}; {i}++) "));
                self.block(depth + 1, true);
            }
        }
    }
}

/// Source of one random method with roughly `max_statements` statements.
/// Every generated method has a reachable body, so it splits without error.
pub fn random_method_source(seed: u64, max_statements: usize) -> String {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        budget: max_statements.max(1),
        out: String::new(),
        fresh: 0,
    };
    g.out.push_str("int generated(int a, int b) { ");
    while g.budget > 0 {
        g.stmt(0, false);
    }
    g.out.push_str("return a; }");
    g.out
}

/// A random flow graph with `1..=max_nodes` nodes in which every node is
/// reachable from node 0. Returns the node count and edge list as well.
pub fn random_flow_graph(seed: u64, max_nodes: usize) -> (usize, Vec<(usize, usize)>, DiGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_nodes.max(1));
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    for _ in 0..rng.gen_range(0..=2 * n) {
        edges.push((rng.gen_range(0..n), rng.gen_range(0..n)));
    }
    let g = DiGraph::new(n, 0, &edges);
    (n, edges, g)
}
