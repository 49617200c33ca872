//! Builds the control-flow graph of each method, prints immediate
//! dominators, and writes both graphs as DOT files in the temp directory.
//!
//! cargo run --example dominators -- crates/core/data/fig1.java
//! dot -Tsvg fig1.java.cfg.dot > cfg.svg

use basts::cfg::build_cfg;
use basts::dominators::compute_dominators;
use basts::frontend::parse_source;

fn main() -> anyhow::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/fig1.java").into());
    let source = std::fs::read_to_string(&path)?;
    let out_dir = std::env::temp_dir();
    for method in parse_source(&source)? {
        let cfg = build_cfg(&method)?;
        let dom = compute_dominators(&cfg)?;
        println!("{} ({} nodes, {} edges)", method.name, cfg.len(), cfg.edges.len());
        for node in &cfg.nodes {
            let idom = dom.idom(node.id).map_or("-".to_string(), |d| d.to_string());
            let label = if node.label.is_empty() { format!("{:?}", node.kind) } else { node.label.clone() };
            println!("  {:>2}  idom {:>2}  {label}", node.id, idom);
        }
        let cfg_path = out_dir.join(format!("{}.cfg.dot", method.name));
        let dom_path = out_dir.join(format!("{}.dom.dot", method.name));
        std::fs::write(&cfg_path, cfg.to_dot())?;
        std::fs::write(&dom_path, dom.to_dot(&cfg))?;
        println!("  wrote {} and {}", cfg_path.display(), dom_path.display());
    }
    Ok(())
}
