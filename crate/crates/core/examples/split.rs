//! Splits every method in a source file and prints the split code and the
//! successor edges between splits.
//!
//! cargo run --example split -- crates/core/data/fig1.java

use basts::frontend::parse_source;
use basts::splitter::split_method;

fn main() -> anyhow::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/fig1.java").into());
    let source = std::fs::read_to_string(&path)?;
    for method in parse_source(&source)? {
        let s = split_method(&method)?;
        println!("{}: {} splits", method.name, s.graph.len());
        for (split, code) in s.graph.splits.iter().zip(&s.codes) {
            let text: Vec<&str> = code.iter().map(|t| t.text.as_str()).collect();
            println!("  [{}] {}", split.split_id, text.join(" "));
        }
        for (a, b) in &s.graph.successor_edges {
            println!("  {a} -> {b}");
        }
    }
    Ok(())
}
