//! Pre-trains the Tree-LSTM on successor-edge prediction and prints the
//! loss curve and final pair accuracy.
//!
//! cargo run --example pretrain_sep -- [config.toml] [corpus.jsonl]

use basts::pipeline::{load_corpus, run_pretrain, RunConfig};

fn main() -> anyhow::Result<()> {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let mut args = std::env::args().skip(1);
    let config = RunConfig::load(args.next().unwrap_or(format!("{data}/sep_toy.toml")))?;
    let records = load_corpus(args.next().unwrap_or(format!("{data}/sep_toy.jsonl")))?;
    let t = std::time::Instant::now();
    let out = run_pretrain(&records, &config)?;
    for (i, chunk) in out.report.epoch_losses.chunks(20).enumerate() {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        println!("epochs {:>3}-{:>3}  mean loss {mean:.5}", i * 20 + 1, i * 20 + chunk.len());
    }
    println!("{} pairs, accuracy {:.3}, {:.1?}", out.pairs, out.accuracy, t.elapsed());
    Ok(())
}
