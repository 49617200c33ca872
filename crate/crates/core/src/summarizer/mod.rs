//! Fusion Transformer: pooled syntax embeddings are fused with every code
//! token embedding, positions are added, and a standard post-norm
//! encoder–decoder produces the comment.
//!
//! Sequences are processed one example at a time at their true length.
//! Padded inputs are still accepted (PAD keys are masked), so a padded
//! example yields the same outputs on its real positions.

mod attention;
mod vocab;

pub use attention::{
    attention_mask, multi_head_attention, positional_encoding, positional_matrix, Attention, AttentionVars,
};
pub use vocab::{Vocab, BOS, EOS, PAD, SPECIALS, UNK};

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{Adam, AutodiffError, ParamId, ParamStore, Tape, Tensor, Var};
use crate::frontend::Ast;
use crate::syntax_encoder::{encode_tree, BoundTreeLstm, TreeLstm};
use crate::{ConfigError, TrainError};

pub const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SummarizerError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("attention row {row} has every position masked")]
    Mask { row: usize },
    #[error("cannot pool an empty list of syntax embeddings")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummarizerConfig {
    pub dim: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub ff_dim: usize,
    pub max_code_len: usize,
    pub max_comment_len: usize,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        SummarizerConfig {
            dim: 64,
            heads: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            ff_dim: 256,
            max_code_len: 100,
            max_comment_len: 30,
        }
    }
}

impl SummarizerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("dim", self.dim),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("max_code_len", self.max_code_len),
            ("max_comment_len", self.max_comment_len),
        ] {
            if v == 0 {
                return Err(ConfigError::NonPositive { name, value: 0.0 });
            }
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(ConfigError::HeadSplit {
                dim: self.dim,
                heads: self.heads,
            });
        }
        Ok(())
    }
}

/// One training or inference instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SummarizationExample {
    pub code_ids: Vec<usize>,
    /// Split ASTs of the method, at least one.
    pub trees: Vec<Ast>,
    /// `BOS w₁ … wₙ EOS`; empty when there is no reference.
    pub comment_ids: Vec<usize>,
}

/// Tree-LSTM plus fusion Transformer. Weights live in a [`ParamStore`]
/// (`tree.*` and `sum.*`).
#[derive(Debug, Clone, PartialEq)]
pub struct Summarizer {
    pub config: SummarizerConfig,
    pub encoder: TreeLstm,
    pub code_vocab: Vocab,
    pub word_vocab: Vocab,
}

struct LayerNormVars {
    gamma: Var,
    beta: Var,
}

struct FfnVars {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

struct EncoderLayerVars {
    attn: AttentionVars,
    ln1: LayerNormVars,
    ffn: FfnVars,
    ln2: LayerNormVars,
}

struct DecoderLayerVars {
    self_attn: AttentionVars,
    ln1: LayerNormVars,
    cross_attn: AttentionVars,
    ln2: LayerNormVars,
    ffn: FfnVars,
    ln3: LayerNormVars,
}

/// All summarizer parameters bound to one tape.
pub struct BoundSummarizer<'a> {
    model: &'a Summarizer,
    tree: BoundTreeLstm<'a>,
    code_embedding: Var,
    word_embedding: Var,
    fusion_w: Var,
    fusion_b: Var,
    encoder: Vec<EncoderLayerVars>,
    decoder: Vec<DecoderLayerVars>,
    out_w: Var,
    out_b: Var,
}

/// Intermediate values of one forward pass, exposed for inspection.
pub struct Forward {
    pub memory: Var,
    pub logits: Var,
    pub decoder_self_weights: Vec<Vec<Var>>,
    pub encoder_weights: Vec<Vec<Var>>,
}

fn add_attention(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut impl Rng) {
    for m in ["Wq", "Wk", "Wv", "Wo"] {
        store.add(format!("{prefix}.{m}"), Tensor::xavier(dim, dim, rng));
    }
}

fn add_norm(store: &mut ParamStore, prefix: &str, dim: usize) {
    store.add(format!("{prefix}.gamma"), Tensor::filled(1, dim, 1.0));
    store.add(format!("{prefix}.beta"), Tensor::zeros(1, dim));
}

fn add_ffn(store: &mut ParamStore, prefix: &str, dim: usize, ff: usize, rng: &mut impl Rng) {
    store.add(format!("{prefix}.W1"), Tensor::xavier(dim, ff, rng));
    store.add(format!("{prefix}.b1"), Tensor::zeros(1, ff));
    store.add(format!("{prefix}.W2"), Tensor::xavier(ff, dim, rng));
    store.add(format!("{prefix}.b2"), Tensor::zeros(1, dim));
}

impl Summarizer {
    /// Registers the Transformer parameters. The Tree-LSTM parameters must
    /// already be in `store`.
    pub fn new(
        config: SummarizerConfig,
        encoder: TreeLstm,
        code_vocab: Vocab,
        word_vocab: Vocab,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        if encoder.dim != config.dim {
            return Err(ConfigError::Invalid(format!(
                "tree encoder width {} differs from summarizer width {}",
                encoder.dim, config.dim
            )));
        }
        let l = config.dim;
        let emb_bound = (3.0 / l as f64).sqrt();
        store.add("sum.code_embedding", Tensor::uniform(code_vocab.len(), l, emb_bound, rng));
        store.add("sum.word_embedding", Tensor::uniform(word_vocab.len(), l, emb_bound, rng));
        store.add("sum.fusion.W", Tensor::xavier(2 * l, l, rng));
        store.add("sum.fusion.b", Tensor::zeros(1, l));
        for k in 0..config.encoder_layers {
            let p = format!("sum.enc.{k}");
            add_attention(store, &format!("{p}.attn"), l, rng);
            add_norm(store, &format!("{p}.ln1"), l);
            add_ffn(store, &format!("{p}.ffn"), l, config.ff_dim, rng);
            add_norm(store, &format!("{p}.ln2"), l);
        }
        for k in 0..config.decoder_layers {
            let p = format!("sum.dec.{k}");
            add_attention(store, &format!("{p}.self"), l, rng);
            add_norm(store, &format!("{p}.ln1"), l);
            add_attention(store, &format!("{p}.cross"), l, rng);
            add_norm(store, &format!("{p}.ln2"), l);
            add_ffn(store, &format!("{p}.ffn"), l, config.ff_dim, rng);
            add_norm(store, &format!("{p}.ln3"), l);
        }
        store.add("sum.out.W", Tensor::xavier(l, word_vocab.len(), rng));
        store.add("sum.out.b", Tensor::zeros(1, word_vocab.len()));
        Ok(Summarizer {
            config,
            encoder,
            code_vocab,
            word_vocab,
        })
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape, store: &ParamStore) -> Result<BoundSummarizer<'a>, AutodiffError> {
        let p = |tape: &mut Tape, name: String| tape.param_by_name(store, &name);
        let attn = |tape: &mut Tape, prefix: String| AttentionVars {
            wq: p(tape, format!("{prefix}.Wq")),
            wk: p(tape, format!("{prefix}.Wk")),
            wv: p(tape, format!("{prefix}.Wv")),
            wo: p(tape, format!("{prefix}.Wo")),
        };
        let norm = |tape: &mut Tape, prefix: String| LayerNormVars {
            gamma: p(tape, format!("{prefix}.gamma")),
            beta: p(tape, format!("{prefix}.beta")),
        };
        let ffn = |tape: &mut Tape, prefix: String| FfnVars {
            w1: p(tape, format!("{prefix}.W1")),
            b1: p(tape, format!("{prefix}.b1")),
            w2: p(tape, format!("{prefix}.W2")),
            b2: p(tape, format!("{prefix}.b2")),
        };
        let tree = self.encoder.bind(tape, store)?;
        let encoder = (0..self.config.encoder_layers)
            .map(|k| EncoderLayerVars {
                attn: attn(tape, format!("sum.enc.{k}.attn")),
                ln1: norm(tape, format!("sum.enc.{k}.ln1")),
                ffn: ffn(tape, format!("sum.enc.{k}.ffn")),
                ln2: norm(tape, format!("sum.enc.{k}.ln2")),
            })
            .collect();
        let decoder = (0..self.config.decoder_layers)
            .map(|k| DecoderLayerVars {
                self_attn: attn(tape, format!("sum.dec.{k}.self")),
                ln1: norm(tape, format!("sum.dec.{k}.ln1")),
                cross_attn: attn(tape, format!("sum.dec.{k}.cross")),
                ln2: norm(tape, format!("sum.dec.{k}.ln2")),
                ffn: ffn(tape, format!("sum.dec.{k}.ffn")),
                ln3: norm(tape, format!("sum.dec.{k}.ln3")),
            })
            .collect();
        Ok(BoundSummarizer {
            model: self,
            tree,
            code_embedding: p(tape, "sum.code_embedding".into()),
            word_embedding: p(tape, "sum.word_embedding".into()),
            fusion_w: p(tape, "sum.fusion.W".into()),
            fusion_b: p(tape, "sum.fusion.b".into()),
            encoder,
            decoder,
            out_w: p(tape, "sum.out.W".into()),
            out_b: p(tape, "sum.out.b".into()),
        })
    }

    /// Code ids for a token sequence, truncated to `max_code_len`.
    pub fn code_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let n = tokens.len().min(self.config.max_code_len);
        self.code_vocab.encode(&tokens[..n])
    }

    /// `BOS w… EOS` with at most `max_comment_len` words.
    pub fn comment_ids<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        let n = words.len().min(self.config.max_comment_len);
        let mut ids = vec![BOS];
        ids.extend(self.word_vocab.encode(&words[..n]));
        ids.push(EOS);
        ids
    }
}

/// Coordinate-wise mean of the rows of `embeddings` (`k × L`).
pub fn avg_pool(tape: &mut Tape, embeddings: &[Var]) -> Result<Var, SummarizerError> {
    if embeddings.is_empty() {
        return Err(SummarizerError::EmptyInput);
    }
    let rows = tape.concat_rows(embeddings)?;
    Ok(tape.mean(rows, 0)?)
}

/// `ReLU([pooled ; token] · W^F + b^F)` for every token row.
pub fn fuse(tape: &mut Tape, pooled: Var, tokens: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
    let n = tape.value(tokens).rows();
    let pooled_rows = tape.gather_rows(pooled, &vec![0; n])?;
    let x = tape.concat_cols(&[pooled_rows, tokens])?;
    let z = tape.matmul(x, w)?;
    let z = tape.add_row(z, b)?;
    tape.relu(z)
}

fn layer_norm(tape: &mut Tape, x: Var, p: &LayerNormVars) -> Result<Var, AutodiffError> {
    tape.layer_norm(x, p.gamma, p.beta, LN_EPS)
}

fn feed_forward(tape: &mut Tape, x: Var, p: &FfnVars) -> Result<Var, AutodiffError> {
    let h = tape.matmul(x, p.w1)?;
    let h = tape.add_row(h, p.b1)?;
    let h = tape.relu(h)?;
    let o = tape.matmul(h, p.w2)?;
    tape.add_row(o, p.b2)
}

impl BoundSummarizer<'_> {
    fn heads(&self) -> usize {
        self.model.config.heads
    }

    /// Tree-LSTM root states of every split AST (`k × L` rows as vars).
    pub fn split_embeddings(&self, tape: &mut Tape, trees: &[Ast]) -> Result<Vec<Var>, AutodiffError> {
        trees.iter().map(|t| encode_tree(tape, &self.tree, t)).collect()
    }

    /// Fused inputs plus positional encodings (`D × L`).
    pub fn encoder_input(&self, tape: &mut Tape, code_ids: &[usize], trees: &[Ast]) -> Result<Var, SummarizerError> {
        let embs = self.split_embeddings(tape, trees)?;
        let pooled = avg_pool(tape, &embs)?;
        let tokens = tape.gather_rows(self.code_embedding, code_ids)?;
        let fused = fuse(tape, pooled, tokens, self.fusion_w, self.fusion_b)?;
        let pe = positional_matrix(code_ids.len(), self.model.config.dim);
        Ok(tape.add_const(fused, &pe)?)
    }

    /// Encoder stack output (`D × L`) and per-layer attention weights.
    pub fn encode(&self, tape: &mut Tape, code_ids: &[usize], trees: &[Ast]) -> Result<(Var, Vec<Vec<Var>>), SummarizerError> {
        let mut x = self.encoder_input(tape, code_ids, trees)?;
        let pad: Vec<bool> = code_ids.iter().map(|&i| i == PAD).collect();
        let mask = attention_mask(code_ids.len(), &pad, false);
        let mut weights = Vec::new();
        for layer in &self.encoder {
            let a = multi_head_attention(tape, &layer.attn, x, x, Some(&mask), self.heads())?;
            weights.push(a.weights);
            let r = tape.add(x, a.output)?;
            x = layer_norm(tape, r, &layer.ln1)?;
            let f = feed_forward(tape, x, &layer.ffn)?;
            let r = tape.add(x, f)?;
            x = layer_norm(tape, r, &layer.ln2)?;
        }
        Ok((x, weights))
    }

    /// Decoder logits (`S × |W|`) for input words `inputs`, given encoder
    /// memory and the code ids it came from (for PAD masking).
    pub fn decode(
        &self,
        tape: &mut Tape,
        memory: Var,
        code_ids: &[usize],
        inputs: &[usize],
    ) -> Result<(Var, Vec<Vec<Var>>), SummarizerError> {
        let s = inputs.len();
        let emb = tape.gather_rows(self.word_embedding, inputs)?;
        let pe = positional_matrix(s, self.model.config.dim);
        let mut y = tape.add_const(emb, &pe)?;
        let self_pad: Vec<bool> = inputs.iter().map(|&i| i == PAD).collect();
        let self_mask = attention_mask(s, &self_pad, true);
        let code_pad: Vec<bool> = code_ids.iter().map(|&i| i == PAD).collect();
        let cross_mask = attention_mask(s, &code_pad, false);
        let mut weights = Vec::new();
        for layer in &self.decoder {
            let a = multi_head_attention(tape, &layer.self_attn, y, y, Some(&self_mask), self.heads())?;
            weights.push(a.weights);
            let r = tape.add(y, a.output)?;
            y = layer_norm(tape, r, &layer.ln1)?;
            let c = multi_head_attention(tape, &layer.cross_attn, y, memory, Some(&cross_mask), self.heads())?;
            let r = tape.add(y, c.output)?;
            y = layer_norm(tape, r, &layer.ln2)?;
            let f = feed_forward(tape, y, &layer.ffn)?;
            let r = tape.add(y, f)?;
            y = layer_norm(tape, r, &layer.ln3)?;
        }
        let logits = tape.matmul(y, self.out_w)?;
        let logits = tape.add_row(logits, self.out_b)?;
        Ok((logits, weights))
    }

    /// Teacher-forced forward pass over `comment_ids[..-1]`.
    pub fn forward(&self, tape: &mut Tape, ex: &SummarizationExample) -> Result<Forward, SummarizerError> {
        let (memory, encoder_weights) = self.encode(tape, &ex.code_ids, &ex.trees)?;
        let inputs = &ex.comment_ids[..ex.comment_ids.len().saturating_sub(1)];
        let (logits, decoder_self_weights) = self.decode(tape, memory, &ex.code_ids, inputs)?;
        Ok(Forward {
            memory,
            logits,
            decoder_self_weights,
            encoder_weights,
        })
    }

    /// Summed token cross-entropy and the number of scored tokens.
    pub fn example_loss(&self, tape: &mut Tape, ex: &SummarizationExample) -> Result<(Var, usize), SummarizerError> {
        if ex.comment_ids.len() < 2 {
            return Err(SummarizerError::EmptyInput);
        }
        let f = self.forward(tape, ex)?;
        let targets: Vec<Option<usize>> = ex.comment_ids[1..]
            .iter()
            .map(|&t| (t != PAD).then_some(t))
            .collect();
        let count = targets.iter().flatten().count();
        Ok((tape.cross_entropy(f.logits, &targets)?, count))
    }
}

/// Mean token cross-entropy of `batch` as a differentiable scalar.
pub fn batch_loss(
    tape: &mut Tape,
    model: &Summarizer,
    store: &ParamStore,
    batch: &[&SummarizationExample],
) -> Result<Var, SummarizerError> {
    let bound = model.bind(tape, store)?;
    let mut total = None;
    let mut count = 0;
    for ex in batch {
        let (l, n) = bound.example_loss(tape, ex)?;
        count += n;
        total = Some(match total {
            None => l,
            Some(t) => tape.add(t, l)?,
        });
    }
    let total = total.ok_or(SummarizerError::EmptyInput)?;
    Ok(tape.scale(total, 1.0 / count.max(1) as f64)?)
}

/// One optimizer step on `batch`; returns the mean token cross-entropy
/// before the update. Examples are differentiated in parallel and their
/// gradients summed in batch order, so the result does not depend on the
/// thread count.
pub fn train_step(
    model: &Summarizer,
    store: &mut ParamStore,
    adam: &mut Adam,
    batch: &[&SummarizationExample],
    epoch: usize,
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(SummarizerError::EmptyInput.into());
    }
    let shared: &ParamStore = store;
    let per_example: Vec<Result<(f64, usize, Vec<(ParamId, Tensor)>), SummarizerError>> = batch
        .par_iter()
        .map(|ex| {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, shared)?;
            let (loss, n) = bound.example_loss(&mut tape, ex)?;
            let value = tape.value(loss).item();
            tape.backward(loss)?;
            Ok((value, n, tape.param_grads()))
        })
        .collect();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut results = Vec::with_capacity(per_example.len());
    for r in per_example {
        let (v, n, g) = r?;
        total += v;
        count += n;
        results.push(g);
    }
    let loss = total / count.max(1) as f64;
    if !loss.is_finite() {
        log::error!("non-finite loss {loss} in epoch {epoch}");
        return Err(TrainError::NaN { epoch, value: loss });
    }
    store.zero_grads();
    for grads in results {
        for (id, g) in grads {
            store.get_mut(id).grad.add_assign(&g);
        }
    }
    store.scale_grads(1.0 / count.max(1) as f64);
    adam.step(store);
    Ok(loss)
}

/// Greedy decoding: start at BOS and append the arg-max word until EOS or
/// `max_len` words. PAD and BOS are never chosen; ties go to the lowest id.
pub fn greedy_decode(model: &Summarizer, store: &ParamStore, code_ids: &[usize], trees: &[Ast], max_len: usize) -> Result<Vec<usize>, SummarizerError> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, store)?;
    let (memory, _) = bound.encode(&mut tape, code_ids, trees)?;
    let mut seq = vec![BOS];
    let mut out = Vec::new();
    while out.len() < max_len {
        let (logits, _) = bound.decode(&mut tape, memory, code_ids, &seq)?;
        let lv = tape.value(logits);
        let last = lv.row(lv.rows() - 1);
        let mut best = EOS;
        for (i, &x) in last.iter().enumerate().skip(EOS + 1) {
            if x > last[best] {
                best = i;
            }
        }
        if best == EOS {
            break;
        }
        out.push(best);
        seq.push(best);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
