//! Corpus ingestion, run configuration, preprocessing, checkpoints and the
//! end-to-end commands behind the `basts` binary.

mod checkpoint;
mod commands;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointKind, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use commands::{
    build_summarizer, evaluate_checkpoint, examples_for, run_pretrain, run_train, split_dump, summarize, Evaluation,
    PipelineError, PretrainOutcome, TrainOutcome,
};

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{code_subtokens, parse_source, tokenize_comment, Ast, Method};
use crate::splitter::{split_method, MethodSplits};
use crate::summarizer::{SummarizerConfig, Vocab};
use crate::syntax_encoder::{AstVocab, PretrainConfig};
use crate::ConfigError;

/// One line of a JSON Lines corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub code: String,
    pub comment: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Reads a JSON Lines corpus. Blank lines are skipped; ids must be unique.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>, CorpusError> {
    let path = path.as_ref();
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    parse_corpus(BufReader::new(file)).map_err(|e| match e {
        CorpusError::Io { source, .. } => io(source),
        other => other,
    })
}

pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<CorpusRecord>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: String::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(CorpusError::Format {
                line: i + 1,
                message: format!("duplicate id {:?}", rec.id),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// All hyperparameters of a run. Every field has a default, so a config
/// file only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ff_dim: usize,
    pub max_code_len: usize,
    pub max_comment_len: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Stop training once an epoch's mean loss falls below this value.
    pub stop_loss: Option<f64>,
    pub seed: u64,
    pub neg_ratio: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch_size: usize,
    pub freeze_pretrained: bool,
    pub bleu_smoothing: bool,
    pub dedupe: bool,
    /// AST labels seen fewer times become UNK.
    pub min_ast_count: usize,
    /// Code subtokens and comment words seen fewer times become UNK.
    pub min_token_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 64,
            heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            ff_dim: 256,
            max_code_len: 100,
            max_comment_len: 30,
            batch_size: 16,
            lr: 1e-3,
            epochs: 50,
            stop_loss: None,
            seed: 42,
            neg_ratio: 1,
            pretrain_epochs: 50,
            pretrain_lr: 1e-3,
            pretrain_batch_size: 32,
            freeze_pretrained: false,
            bleu_smoothing: true,
            dedupe: true,
            min_ast_count: 2,
            min_token_count: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.summarizer().validate()?;
        self.pretrain().validate()?;
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("neg_ratio", self.neg_ratio),
        ] {
            if v == 0 {
                return Err(ConfigError::NonPositive { name, value: 0.0 });
            }
        }
        if !(self.lr > 0.0) {
            return Err(ConfigError::NonPositive {
                name: "lr",
                value: self.lr,
            });
        }
        Ok(())
    }

    pub fn summarizer(&self) -> SummarizerConfig {
        SummarizerConfig {
            dim: self.dim,
            heads: self.heads,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            ff_dim: self.ff_dim,
            max_code_len: self.max_code_len,
            max_comment_len: self.max_comment_len,
        }
    }

    pub fn pretrain(&self) -> PretrainConfig {
        PretrainConfig {
            lr: self.pretrain_lr,
            epochs: self.pretrain_epochs,
            batch_size: self.pretrain_batch_size,
            seed: self.seed,
        }
    }
}

/// A corpus record that survived every frontend stage.
#[derive(Debug, Clone)]
pub struct PreparedMethod {
    pub id: String,
    pub method: Method,
    pub splits: MethodSplits,
    /// Code subtokens, truncated to `max_code_len`.
    pub code_tokens: Vec<String>,
    /// Comment words, truncated to `max_comment_len`.
    pub comment_words: Vec<String>,
    /// Literal-abstracted tokens joined by spaces, used for deduplication.
    pub code_key: String,
}

impl PreparedMethod {
    pub fn trees(&self) -> Vec<Ast> {
        self.splits.asts.iter().map(|a| a.ast.clone()).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Prepared {
    pub methods: Vec<PreparedMethod>,
    /// `(record id, reason)` for every dropped record.
    pub dropped: Vec<(String, String)>,
}

fn prepare_one(rec: &CorpusRecord, config: &RunConfig) -> Result<PreparedMethod, String> {
    let mut methods = parse_source(&rec.code).map_err(|e| format!("parse: {e}"))?;
    if methods.len() != 1 {
        return Err(format!("expected one method, found {}", methods.len()));
    }
    let words = tokenize_comment(&rec.comment);
    if words.is_empty() && !rec.comment.trim().is_empty() {
        return Err("comment has no words".into());
    }
    prepare_method(rec.id.clone(), methods.remove(0), words, config)
}

fn prepare_method(id: String, method: Method, mut comment_words: Vec<String>, config: &RunConfig) -> Result<PreparedMethod, String> {
    let splits = split_method(&method).map_err(|e| format!("split: {e}"))?;
    let mut code_tokens = code_subtokens(&method.tokens);
    code_tokens.truncate(config.max_code_len);
    comment_words.truncate(config.max_comment_len);
    let code_key = method.tokens.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
    Ok(PreparedMethod {
        id,
        method,
        splits,
        code_tokens,
        comment_words,
        code_key,
    })
}

/// Prepares every method of a plain source file, without reference
/// comments. Methods are identified by name.
pub fn preprocess_source(source: &str, config: &RunConfig) -> Result<Prepared, crate::frontend::FrontendError> {
    let methods = parse_source(source)?;
    let mut out = Prepared::default();
    for m in methods {
        let id = m.name.clone();
        match prepare_method(id.clone(), m, Vec::new(), config) {
            Ok(p) => out.methods.push(p),
            Err(reason) => {
                warn!("dropping method {id}: {reason}");
                out.dropped.push((id, reason));
            }
        }
    }
    Ok(out)
}

/// `epoch,loss` lines with a header, epochs counted from 1.
pub fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, l));
    }
    s
}

/// Runs every record through lexing, literal abstraction, parsing, CFG,
/// dominators and splitting. Failing records are dropped and logged.
pub fn preprocess(records: &[CorpusRecord], config: &RunConfig) -> Prepared {
    let results: Vec<_> = records.par_iter().map(|r| prepare_one(r, config)).collect();
    let mut out = Prepared::default();
    for (rec, res) in records.iter().zip(results) {
        match res {
            Ok(m) => out.methods.push(m),
            Err(reason) => {
                warn!("dropping record {}: {reason}", rec.id);
                out.dropped.push((rec.id.clone(), reason));
            }
        }
    }
    info!("preprocessed {} records, dropped {}", out.methods.len(), out.dropped.len());
    out
}

/// Removes test methods whose abstracted code also occurs in training.
pub fn dedupe_against(train: &[PreparedMethod], test: Vec<PreparedMethod>) -> (Vec<PreparedMethod>, usize) {
    let keys: HashSet<&str> = train.iter().map(|m| m.code_key.as_str()).collect();
    let before = test.len();
    let kept: Vec<_> = test.into_iter().filter(|m| !keys.contains(m.code_key.as_str())).collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Vocabularies built from the training partition only.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabularies {
    pub ast: AstVocab,
    pub code: Vocab,
    pub words: Vocab,
}

pub fn build_vocabularies(train: &[PreparedMethod], config: &RunConfig) -> Vocabularies {
    let ast = AstVocab::build(
        train.iter().flat_map(|m| m.splits.asts.iter().map(|a| &a.ast)),
        config.min_ast_count,
    );
    let code = Vocab::build(train.iter().map(|m| &m.code_tokens), config.min_token_count, None);
    let words = Vocab::build(train.iter().map(|m| &m.comment_words), config.min_token_count, None);
    Vocabularies { ast, code, words }
}

/// Sets the global rayon pool size from `BASTS_THREADS`, if present.
pub fn init_threads() {
    if let Some(n) = std::env::var("BASTS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}
