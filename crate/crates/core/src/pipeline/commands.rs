use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::{
    build_vocabularies, dedupe_against, preprocess, Checkpoint, CheckpointError, CheckpointKind, CorpusError,
    CorpusRecord, PreparedMethod, RunConfig,
};
use crate::autodiff::{Adam, ParamStore};
use crate::frontend::{parse_source, FrontendError};
use crate::metrics::EvalReport;
use crate::splitter::{split_method, SplitError};
use crate::summarizer::{greedy_decode, train_step, SummarizationExample, Summarizer, SummarizerError};
use crate::syntax_encoder::{pair_accuracy, pretrain, AstVocab, PretrainReport, SepCorpus, SepModel, TreeLstm};
use crate::{ConfigError, TrainError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] SummarizerError),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("method {method}: {source}")]
    Split {
        method: String,
        #[source]
        source: SplitError,
    },
    #[error("no records survived preprocessing ({dropped} dropped)")]
    EmptyCorpus { dropped: usize },
}

/// `{method, splits, edges}` for every method in a source file.
pub fn split_dump(source: &str) -> Result<Vec<serde_json::Value>, PipelineError> {
    parse_source(source)?
        .iter()
        .map(|m| {
            let s = split_method(m).map_err(|source| PipelineError::Split {
                method: m.name.clone(),
                source,
            })?;
            Ok(s.to_json(m))
        })
        .collect()
}

fn prepare(records: &[CorpusRecord], config: &RunConfig) -> Result<(Vec<PreparedMethod>, usize), PipelineError> {
    let p = preprocess(records, config);
    if p.methods.is_empty() {
        return Err(PipelineError::EmptyCorpus {
            dropped: p.dropped.len(),
        });
    }
    Ok((p.methods, p.dropped.len()))
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    pub report: PretrainReport,
    /// Pair accuracy on the training pairs after the last epoch.
    pub accuracy: f64,
    pub pairs: usize,
    pub dropped: usize,
}

/// Pre-trains the Tree-LSTM with successor-edge prediction.
pub fn run_pretrain(records: &[CorpusRecord], config: &RunConfig) -> Result<PretrainOutcome, PipelineError> {
    config.validate()?;
    let (methods, dropped) = prepare(records, config)?;
    let vocab = AstVocab::build(
        methods.iter().flat_map(|m| m.splits.asts.iter().map(|a| &a.ast)),
        config.min_ast_count,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = ParamStore::new();
    let encoder = TreeLstm::new(config.dim, vocab.clone(), &mut store, &mut rng);
    let model = SepModel::new(encoder, &mut store, &mut rng);
    let splits: Vec<_> = methods.into_iter().map(|m| m.splits).collect();
    let corpus = SepCorpus::from_splits(&splits, config.neg_ratio, config.seed);
    info!("pretraining on {} pairs from {} methods", corpus.pairs.len(), splits.len());
    let report = pretrain(&model, &mut store, &corpus, &config.pretrain())?;
    let accuracy = pair_accuracy(&model, &store, &corpus);
    Ok(PretrainOutcome {
        checkpoint: Checkpoint {
            kind: CheckpointKind::Pretrained,
            config: config.clone(),
            ast_vocab: vocab,
            code_vocab: Default::default(),
            word_vocab: Default::default(),
            params: store,
        },
        report,
        accuracy,
        pairs: corpus.pairs.len(),
        dropped,
    })
}

pub fn examples_for(model: &Summarizer, methods: &[PreparedMethod]) -> Vec<SummarizationExample> {
    methods
        .iter()
        .map(|m| SummarizationExample {
            code_ids: model.code_ids(&m.code_tokens),
            trees: m.trees(),
            comment_ids: model.comment_ids(&m.comment_words),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Token-weighted mean cross-entropy of each epoch, measured before
    /// each batch's update.
    pub epoch_losses: Vec<f64>,
    pub dropped: usize,
}

impl TrainOutcome {
    pub fn loss_csv(&self) -> String {
        super::loss_csv(&self.epoch_losses)
    }
}

/// Trains the summarizer. With `pretrained`, the tree encoder starts from
/// that checkpoint and keeps its AST vocabulary.
pub fn run_train(
    records: &[CorpusRecord],
    config: &RunConfig,
    pretrained: Option<&Checkpoint>,
) -> Result<TrainOutcome, PipelineError> {
    config.validate()?;
    let (methods, dropped) = prepare(records, config)?;
    let vocabs = build_vocabularies(&methods, config);
    let ast_vocab = match pretrained {
        Some(ck) => {
            ck.expect_kind(CheckpointKind::Pretrained)?;
            if ck.config.dim != config.dim {
                return Err(ConfigError::Invalid(format!(
                    "pretrained encoder width {} differs from dim {}",
                    ck.config.dim, config.dim
                ))
                .into());
            }
            ck.ast_vocab.clone()
        }
        None => vocabs.ast,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = ParamStore::new();
    let encoder = TreeLstm::new(config.dim, ast_vocab.clone(), &mut store, &mut rng);
    if let Some(ck) = pretrained {
        let n = ck.restore_into(&mut store)?;
        info!("restored {n} pretrained encoder tensors");
        if config.freeze_pretrained {
            store.set_frozen(crate::syntax_encoder::PARAM_PREFIX, true);
        }
    }
    let model = Summarizer::new(
        config.summarizer(),
        encoder,
        vocabs.code.clone(),
        vocabs.words.clone(),
        &mut store,
        &mut rng,
    )?;
    let examples = examples_for(&model, &methods);
    let mut adam = Adam::new(config.lr);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::new();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut tokens = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&SummarizationExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let n: usize = batch.iter().map(|e| e.comment_ids.len() - 1).sum();
            total += train_step(&model, &mut store, &mut adam, &batch, epoch)? * n as f64;
            tokens += n;
        }
        let mean = total / tokens as f64;
        info!("epoch {}: loss {mean:.6}", epoch + 1);
        epoch_losses.push(mean);
        if config.stop_loss.is_some_and(|s| mean < s) {
            break;
        }
    }
    store.set_frozen("", false);
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            kind: CheckpointKind::Summarizer,
            config: config.clone(),
            ast_vocab,
            code_vocab: vocabs.code,
            word_vocab: vocabs.words,
            params: store,
        },
        epoch_losses,
        dropped,
    })
}

/// Rebuilds the summarizer and its parameters from a trained checkpoint.
pub fn build_summarizer(ck: &Checkpoint) -> Result<(Summarizer, ParamStore), PipelineError> {
    ck.expect_kind(CheckpointKind::Summarizer)?;
    let config = ck.config.summarizer();
    config.validate()?;
    let model = Summarizer {
        config,
        encoder: TreeLstm {
            dim: ck.config.dim,
            vocab: ck.ast_vocab.clone(),
        },
        code_vocab: ck.code_vocab.clone(),
        word_vocab: ck.word_vocab.clone(),
    };
    Ok((model, ck.params.clone()))
}

/// Greedy comments for `methods`, in input order.
pub fn summarize(model: &Summarizer, store: &ParamStore, methods: &[PreparedMethod]) -> Result<Vec<Vec<String>>, PipelineError> {
    let max = model.config.max_comment_len;
    methods
        .par_iter()
        .map(|m| {
            let ids = greedy_decode(model, store, &model.code_ids(&m.code_tokens), &m.trees(), max)?;
            Ok(model.word_vocab.decode(&ids))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    /// `(id, hypothesis, reference)` per scored record.
    pub outputs: Vec<(String, Vec<String>, Vec<String>)>,
    pub dropped: usize,
    pub deduped: usize,
}

/// Generates a comment for every test record and scores it against the
/// (truncated) reference. With `train` and `config.dedupe`, test records
/// whose abstracted code appears in training are skipped first.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    test: &[CorpusRecord],
    train: Option<&[CorpusRecord]>,
) -> Result<Evaluation, PipelineError> {
    let (model, store) = build_summarizer(ck)?;
    let config = &ck.config;
    let (mut methods, dropped) = prepare(test, config)?;
    let mut deduped = 0;
    if let (Some(train), true) = (train, config.dedupe) {
        let train = preprocess(train, config).methods;
        (methods, deduped) = dedupe_against(&train, methods);
    }
    let hyps = summarize(&model, &store, &methods)?;
    let outputs: Vec<_> = methods
        .into_iter()
        .zip(hyps)
        .map(|(m, h)| (m.id, h, m.comment_words))
        .collect();
    let pairs: Vec<(Vec<String>, Vec<String>)> = outputs.iter().map(|(_, h, r)| (h.clone(), r.clone())).collect();
    Ok(Evaluation {
        report: EvalReport::evaluate(&pairs, config.bleu_smoothing),
        outputs,
        dropped,
        deduped,
    })
}
