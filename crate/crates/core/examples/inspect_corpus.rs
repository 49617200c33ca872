//! Preprocesses a JSON Lines corpus and reports splits per method and
//! dropped records.
//!
//! cargo run --example inspect_corpus -- crates/core/data/sep_toy.jsonl

use basts::pipeline::{load_corpus, preprocess, RunConfig};

fn main() -> anyhow::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/sep_toy.jsonl").into());
    let records = load_corpus(&path)?;
    let prepared = preprocess(&records, &RunConfig::default());
    for m in &prepared.methods {
        println!(
            "{:<8} {:>2} splits {:>2} edges  {} code tokens  comment: {}",
            m.id,
            m.splits.graph.len(),
            m.splits.graph.successor_edges.len(),
            m.code_tokens.len(),
            m.comment_words.join(" ")
        );
    }
    for (id, reason) in &prepared.dropped {
        println!("dropped {id}: {reason}");
    }
    Ok(())
}
