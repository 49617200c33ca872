//! Scores generated comments against references with every metric.
//!
//! cargo run --example score_comments -- hyps.txt refs.txt
//!
//! Without arguments a few built-in pairs are scored.

use basts::frontend::tokenize_comment;
use basts::metrics::{meteor_lite, rouge_l, sentence_bleu, EvalReport};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (hyps, refs): (Vec<String>, Vec<String>) = if let [h, r] = &args[..] {
        (
            std::fs::read_to_string(h)?.lines().map(String::from).collect(),
            std::fs::read_to_string(r)?.lines().map(String::from).collect(),
        )
    } else {
        let pairs = [
            ("returns the count", "returns the count"),
            ("closes the stream", "closes the underlying stream"),
            ("sets name", "sets the name of this node"),
            ("adds a listener", "removes all listeners"),
        ];
        pairs.iter().map(|(h, r)| (h.to_string(), r.to_string())).unzip()
    };
    anyhow::ensure!(hyps.len() == refs.len(), "{} hypotheses, {} references", hyps.len(), refs.len());
    let pairs: Vec<(Vec<String>, Vec<String>)> = hyps
        .iter()
        .zip(&refs)
        .map(|(h, r)| (tokenize_comment(h), tokenize_comment(r)))
        .collect();
    for (h, r) in &pairs {
        println!(
            "BLEU {:>6.2}  METEOR {:>6.2}  ROUGE-L {:>6.2}  | {} || {}",
            100.0 * sentence_bleu(h, r, 4, true),
            100.0 * meteor_lite(h, r),
            100.0 * rouge_l(h, r),
            h.join(" "),
            r.join(" ")
        );
    }
    let report = EvalReport::evaluate(&pairs, true);
    print!("{}", report.to_table());
    println!("{}", report.to_json());
    Ok(())
}
