//! Pre-trains the tree encoder, trains the summarizer on a small corpus,
//! then decodes the training set and scores it.
//!
//! cargo run --example train_summarizer -- [config.toml] [corpus.jsonl]

use basts::autodiff::Tape;
use basts::pipeline::{build_summarizer, examples_for, load_corpus, preprocess, run_pretrain, run_train, summarize, RunConfig};
use basts::metrics::EvalReport;
use basts::summarizer::batch_loss;

fn main() -> anyhow::Result<()> {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let mut args = std::env::args().skip(1);
    let config = RunConfig::load(args.next().unwrap_or(format!("{data}/summarize_toy.toml")))?;
    let records = load_corpus(args.next().unwrap_or(format!("{data}/summarize_toy.jsonl")))?;
    let t = std::time::Instant::now();

    let pre = run_pretrain(&records, &config)?;
    println!("pretrained encoder: pair accuracy {:.3}", pre.accuracy);
    let out = run_train(&records, &config, Some(&pre.checkpoint))?;
    println!("{} epochs, last epoch loss {:.5}", out.epoch_losses.len(), out.epoch_losses.last().unwrap());

    let (model, store) = build_summarizer(&out.checkpoint)?;
    let methods = preprocess(&records, &config).methods;
    let examples = examples_for(&model, &methods);
    let refs: Vec<_> = examples.iter().collect();
    let mut tape = Tape::new();
    let ce = batch_loss(&mut tape, &model, &store, &refs)?;
    println!("training cross-entropy {:.5}", tape.value(ce).item());

    let hyps = summarize(&model, &store, &methods)?;
    let mut exact = 0;
    let mut pairs = Vec::new();
    for (m, h) in methods.iter().zip(hyps) {
        let ok = h == m.comment_words;
        exact += ok as usize;
        println!("{} {:<7} {}", if ok { " " } else { "x" }, m.id, h.join(" "));
        pairs.push((h, m.comment_words.clone()));
    }
    println!("{exact}/{} exact", methods.len());
    print!("{}", EvalReport::evaluate(&pairs, config.bleu_smoothing).to_table());
    println!("{:.1?}", t.elapsed());
    Ok(())
}
