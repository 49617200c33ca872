use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use basts::dominators::compute_dominators;
use basts::frontend::{parse_source, tokenize_comment};
use basts::metrics::EvalReport;
use basts::pipeline::{
    build_summarizer, evaluate_checkpoint, init_threads, load_corpus, loss_csv, preprocess, preprocess_source,
    run_pretrain, run_train, split_dump, summarize, Checkpoint, Prepared, RunConfig,
};

#[derive(Parser)]
#[command(name = "basts", version, about = "Block-wise AST splitting code summarizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source file or JSON Lines corpus.
    #[arg(long)]
    input: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the code splits and successor edges of every method as JSON.
    Split(Common),
    /// Print the control-flow graph of every method in DOT format.
    Cfg(Common),
    /// Print the dominator tree of every method in DOT format.
    Dom(Common),
    /// Pre-train the tree encoder with successor-edge prediction.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Where to write the checkpoint.
        #[arg(long)]
        output: PathBuf,
        /// Loss CSV path (default: <output>.loss.csv).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train the summarizer.
    Train {
        #[command(flatten)]
        common: Common,
        /// Pre-trained encoder checkpoint.
        #[arg(long, required_unless_present = "from_scratch")]
        checkpoint: Option<PathBuf>,
        /// Start the tree encoder from random weights.
        #[arg(long, conflicts_with = "checkpoint")]
        from_scratch: bool,
        #[arg(long)]
        output: PathBuf,
        /// Loss CSV path (default: <output>.loss.csv).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a trained checkpoint on a test corpus, or score a hypothesis
    /// file against a reference file (one comment per line).
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Test corpus (JSON Lines).
        #[arg(long, required_unless_present = "hyp")]
        input: Option<PathBuf>,
        #[arg(long, required_unless_present = "hyp")]
        checkpoint: Option<PathBuf>,
        /// Training corpus; with `dedupe = true`, overlapping test records are skipped.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long, requires = "reference", conflicts_with_all = ["input", "checkpoint"])]
        hyp: Option<PathBuf>,
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Ignored; accepted for a uniform command line.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print one generated comment per input method.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn is_jsonl(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "jsonl")
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn log_path(output: &Path, log: Option<PathBuf>) -> PathBuf {
    log.unwrap_or_else(|| {
        let mut s = output.as_os_str().to_owned();
        s.push(".loss.csv");
        s.into()
    })
}

fn report_drops(p: &Prepared) {
    for (id, reason) in &p.dropped {
        eprintln!("dropped {id}: {reason}");
    }
}

fn lines(p: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read(p)?.lines().map(tokenize_comment).collect())
}

/// Writes one line to stdout. A closed pipe (e.g. `| head`) ends the
/// process quietly.
fn emit(line: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{line}") {
        Err(e) if e.kind() == ErrorKind::BrokenPipe => std::process::exit(0),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split(c) => {
            if is_jsonl(&c.input) {
                let config = c.config()?;
                let prepared = preprocess(&load_corpus(&c.input)?, &config);
                report_drops(&prepared);
                for m in &prepared.methods {
                    let mut v = m.splits.to_json(&m.method);
                    v["id"] = m.id.clone().into();
                    emit(&v.to_string())?;
                }
            } else {
                let dump = split_dump(&read(&c.input)?)?;
                emit(&serde_json::to_string_pretty(&dump)?)?;
            }
        }
        Command::Cfg(c) | Command::Dom(c) if is_jsonl(&c.input) => {
            bail!("{} is a corpus; cfg and dom take a source file", c.input.display())
        }
        Command::Cfg(c) => {
            for m in parse_source(&read(&c.input)?)? {
                emit(&basts::cfg::build_cfg(&m)?.to_dot())?;
            }
        }
        Command::Dom(c) => {
            for m in parse_source(&read(&c.input)?)? {
                let cfg = basts::cfg::build_cfg(&m)?;
                emit(&compute_dominators(&cfg)?.to_dot(&cfg))?;
            }
        }
        Command::Pretrain { common, output, log } => {
            let config = common.config()?;
            let out = run_pretrain(&load_corpus(&common.input)?, &config)?;
            out.checkpoint.save(&output)?;
            fs::write(log_path(&output, log), loss_csv(&out.report.epoch_losses))?;
            eprintln!(
                "{} pairs, {} records dropped, final loss {:.6}, pair accuracy {:.4}",
                out.pairs,
                out.dropped,
                out.report.epoch_losses.last().copied().unwrap_or(f64::NAN),
                out.accuracy
            );
        }
        Command::Train {
            common,
            checkpoint,
            output,
            log,
            ..
        } => {
            let config = common.config()?;
            let pre = checkpoint.map(Checkpoint::load).transpose()?;
            let out = run_train(&load_corpus(&common.input)?, &config, pre.as_ref())?;
            out.checkpoint.save(&output)?;
            fs::write(log_path(&output, log), out.loss_csv())?;
            eprintln!(
                "{} epochs, {} records dropped, final loss {:.6}",
                out.epoch_losses.len(),
                out.dropped,
                out.epoch_losses.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Eval {
            config,
            input,
            checkpoint,
            train,
            hyp,
            reference,
            json,
            ..
        } => {
            let report = if let (Some(h), Some(r)) = (hyp, reference) {
                let smooth = match config {
                    Some(p) => RunConfig::load(p)?.bleu_smoothing,
                    None => RunConfig::default().bleu_smoothing,
                };
                let (h, r) = (lines(&h)?, lines(&r)?);
                if h.len() != r.len() {
                    bail!("{} hypotheses but {} references", h.len(), r.len());
                }
                let pairs: Vec<_> = h.into_iter().zip(r).collect();
                EvalReport::evaluate(&pairs, smooth)
            } else {
                let mut ck = Checkpoint::load(checkpoint.expect("required by clap"))?;
                if let Some(p) = config {
                    let c = RunConfig::load(p)?;
                    ck.config.bleu_smoothing = c.bleu_smoothing;
                    ck.config.dedupe = c.dedupe;
                }
                let test = load_corpus(input.expect("required by clap"))?;
                let train = train.map(load_corpus).transpose()?;
                let ev = evaluate_checkpoint(&ck, &test, train.as_deref())?;
                eprintln!("{} scored, {} dropped, {} removed as duplicates", ev.report.count, ev.dropped, ev.deduped);
                ev.report
            };
            if json {
                emit(&serde_json::to_string_pretty(&report.to_json())?)?;
            } else {
                emit(report.to_table().trim_end())?;
            }
        }
        Command::Summarize { common, checkpoint } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let (model, store) = build_summarizer(&ck)?;
            let prepared = if is_jsonl(&common.input) {
                preprocess(&load_corpus(&common.input)?, &ck.config)
            } else {
                preprocess_source(&read(&common.input)?, &ck.config)?
            };
            report_drops(&prepared);
            let comments = summarize(&model, &store, &prepared.methods)?;
            for (m, c) in prepared.methods.iter().zip(comments) {
                emit(&format!("{}\t{}", m.id, c.join(" ")))?;
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
