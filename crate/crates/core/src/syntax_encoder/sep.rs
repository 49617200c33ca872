//! Next-split prediction: given two split ASTs of the same method, predict
//! whether the first directly precedes the second in the split graph.

use std::collections::HashMap;

use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{encode_tree, TreeLstm};
use crate::autodiff::{sigmoid, Adam, AutodiffError, ParamStore, Tape, Tensor, Var};
use crate::frontend::Ast;
use crate::{ConfigError, TrainError};
use crate::splitter::{MethodSplits, SplitGraph};

const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairExample {
    pub t: usize,
    pub t_prime: usize,
    pub label: bool,
}

/// Every successor edge as a positive, plus `neg_ratio` negatives per
/// positive drawn without replacement from the ordered non-edge pairs.
pub fn generate_pairs(graph: &SplitGraph, neg_ratio: usize, seed: u64) -> Vec<PairExample> {
    let n = graph.len();
    let mut pairs: Vec<PairExample> = graph
        .successor_edges
        .iter()
        .map(|&(t, t_prime)| PairExample {
            t,
            t_prime,
            label: true,
        })
        .collect();
    let candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && !graph.has_edge(a, b))
        .collect();
    let want = (neg_ratio * pairs.len()).min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), want).into_vec();
    picked.sort_unstable();
    pairs.extend(picked.into_iter().map(|i| PairExample {
        t: candidates[i].0,
        t_prime: candidates[i].1,
        label: false,
    }));
    pairs
}

/// Split ASTs of many methods with their labelled pairs.
#[derive(Debug, Clone, Default)]
pub struct SepCorpus {
    pub trees: Vec<Vec<Ast>>,
    /// `(method index, pair)`
    pub pairs: Vec<(usize, PairExample)>,
}

impl SepCorpus {
    /// Negatives for method `i` are drawn with seed `seed + i`.
    pub fn from_splits(methods: &[MethodSplits], neg_ratio: usize, seed: u64) -> Self {
        let mut corpus = SepCorpus::default();
        for (i, m) in methods.iter().enumerate() {
            corpus.trees.push(m.asts.iter().map(|a| a.ast.clone()).collect());
            for p in generate_pairs(&m.graph, neg_ratio, seed.wrapping_add(i as u64)) {
                corpus.pairs.push((i, p));
            }
        }
        corpus
    }

    pub fn all_trees(&self) -> impl Iterator<Item = &Ast> {
        self.trees.iter().flatten()
    }
}

/// Tree-LSTM plus an affine scoring head over `[e_t ; e_t']`.
#[derive(Debug, Clone, PartialEq)]
pub struct SepModel {
    pub encoder: TreeLstm,
}

impl SepModel {
    /// Registers the head parameters (`sep.w`: `2L × 1`, `sep.b`: `1 × 1`).
    pub fn new(encoder: TreeLstm, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let l = encoder.dim;
        store.add("sep.w", Tensor::uniform(2 * l, 1, 1.0 / (2.0 * l as f64).sqrt(), rng));
        store.add("sep.b", Tensor::zeros(1, 1));
        SepModel { encoder }
    }

    /// Probabilities (`P × 1`) for rows of `left` (`P × L`) preceding the
    /// matching rows of `right`.
    pub fn score_rows(&self, tape: &mut Tape, store: &ParamStore, left: Var, right: Var) -> Result<Var, AutodiffError> {
        let w = tape.param_by_name(store, "sep.w");
        let b = tape.param_by_name(store, "sep.b");
        let x = tape.concat_cols(&[left, right])?;
        let z = tape.matmul(x, w)?;
        let z = tape.add_row(z, b)?;
        tape.sigmoid(z)
    }

    /// Probabilities (`batch × 1`) and mean BCE loss for a batch of pairs.
    /// Each distinct split tree is encoded once.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        corpus: &SepCorpus,
        batch: &[(usize, PairExample)],
    ) -> Result<(Var, Var), AutodiffError> {
        let bound = self.encoder.bind(tape, store)?;
        let mut cache: HashMap<(usize, usize), Var> = HashMap::new();
        let mut left = Vec::with_capacity(batch.len());
        let mut right = Vec::with_capacity(batch.len());
        for &(m, p) in batch {
            for (side, split) in [(&mut left, p.t), (&mut right, p.t_prime)] {
                let e = match cache.get(&(m, split)) {
                    Some(&e) => e,
                    None => {
                        let e = encode_tree(tape, &bound, &corpus.trees[m][split])?;
                        cache.insert((m, split), e);
                        e
                    }
                };
                side.push(e);
            }
        }
        let left = tape.concat_rows(&left)?;
        let right = tape.concat_rows(&right)?;
        let probs = self.score_rows(tape, store, left, right)?;
        let labels: Vec<bool> = batch.iter().map(|(_, p)| p.label).collect();
        let loss = sep_loss(tape, probs, &labels)?;
        Ok((probs, loss))
    }
}

/// `σ(w · [e_t ; e_t'] + b)` evaluated directly.
pub fn sep_score(store: &ParamStore, e_t: &[f64], e_t_prime: &[f64]) -> f64 {
    let w = &store.by_name("sep.w").expect("sep head registered").value;
    let b = store.by_name("sep.b").expect("sep head registered").value.item();
    let z: f64 = e_t
        .iter()
        .chain(e_t_prime)
        .zip(w.data())
        .map(|(x, w)| x * w)
        .sum();
    sigmoid(z + b)
}

/// Mean binary cross-entropy of `probs` (`P × 1`) against `labels`, with
/// probabilities clamped to `[1e-12, 1 − 1e-12]`.
pub fn sep_loss(tape: &mut Tape, probs: Var, labels: &[bool]) -> Result<Var, AutodiffError> {
    let [r, c] = tape.value(probs).shape();
    if c != 1 || r != labels.len() || r == 0 {
        return Err(AutodiffError::Shape {
            op: "sep_loss",
            left: [r, c],
            right: [labels.len(), 1],
        });
    }
    let y = Tensor::new(&[r, 1], labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect());
    let not_y = y.map(|v| 1.0 - v);
    let p = tape.clamp(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    let log_p = tape.log(p)?;
    let q = tape.scale(p, -1.0)?;
    let q = tape.add_scalar(q, 1.0)?;
    let log_q = tape.log(q)?;
    let yv = tape.constant(y);
    let nyv = tape.constant(not_y);
    let a = tape.mul(yv, log_p)?;
    let b = tape.mul(nyv, log_q)?;
    let ll = tape.add(a, b)?;
    let mean = tape.mean_all(ll)?;
    tape.scale(mean, -1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lr > 0.0) {
            return Err(ConfigError::NonPositive {
                name: "lr",
                value: self.lr,
            });
        }
        for (name, v) in [("epochs", self.epochs), ("batch_size", self.batch_size)] {
            if v == 0 {
                return Err(ConfigError::NonPositive { name, value: 0.0 });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    /// Mean pair loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains encoder and head jointly with Adam. Pairs are reshuffled every
/// epoch from a generator seeded with `config.seed`.
pub fn pretrain(
    model: &SepModel,
    store: &mut ParamStore,
    corpus: &SepCorpus,
    config: &PretrainConfig,
) -> Result<PretrainReport, TrainError> {
    config.validate()?;
    let mut report = PretrainReport {
        epoch_losses: Vec::new(),
    };
    if corpus.pairs.is_empty() {
        return Ok(report);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.lr);
    let mut order: Vec<usize> = (0..corpus.pairs.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(usize, PairExample)> = chunk.iter().map(|&i| corpus.pairs[i]).collect();
            let mut tape = Tape::new();
            let (_, loss) = model.forward(&mut tape, store, corpus, &batch)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(TrainError::NaN { epoch, value });
            }
            tape.backward(loss)?;
            store.zero_grads();
            tape.accumulate_param_grads(store);
            adam.step(store);
            total += value * batch.len() as f64;
        }
        let mean = total / corpus.pairs.len() as f64;
        debug!("sep epoch {epoch}: loss {mean:.6}");
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

/// Fraction of pairs classified correctly at threshold 0.5.
pub fn pair_accuracy(model: &SepModel, store: &ParamStore, corpus: &SepCorpus) -> f64 {
    if corpus.pairs.is_empty() {
        return 1.0;
    }
    let embeddings: Vec<Vec<Vec<f64>>> = corpus
        .trees
        .iter()
        .map(|ts| {
            let refs: Vec<&Ast> = ts.iter().collect();
            model
                .encoder
                .embed_all(store, &refs)
                .into_iter()
                .map(|e| e.vector)
                .collect()
        })
        .collect();
    let correct = corpus
        .pairs
        .iter()
        .filter(|(m, p)| {
            let s = sep_score(store, &embeddings[*m][p.t], &embeddings[*m][p.t_prime]);
            (s > 0.5) == p.label
        })
        .count();
    correct as f64 / corpus.pairs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check_params;
    use crate::frontend::parse_source;
    use crate::splitter::split_method;
    use crate::syntax_encoder::AstVocab;

    fn graph(n: usize, edges: &[(usize, usize)]) -> SplitGraph {
        SplitGraph {
            splits: (0..n)
                .map(|i| crate::splitter::CodeSplit {
                    split_id: i,
                    statements: vec![],
                    includes_declaration: true,
                })
                .collect(),
            successor_edges: edges.to_vec(),
        }
    }

    fn head_only(dim: usize) -> (SepModel, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = TreeLstm::new(dim, AstVocab::from_labels([]), &mut store, &mut rng);
        (SepModel::new(enc, &mut store, &mut rng), store)
    }

    #[test]
    fn single_split_yields_no_pairs() {
        assert!(generate_pairs(&graph(1, &[]), 1, 0).is_empty());
    }

    #[test]
    fn diamond_pairs() {
        let g = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        let pairs = generate_pairs(&g, 1, 9);
        let pos: Vec<_> = pairs.iter().filter(|p| p.label).collect();
        let neg: Vec<_> = pairs.iter().filter(|p| !p.label).collect();
        assert_eq!(pos.len(), 3);
        assert_eq!(neg.len(), 3);
        for p in &neg {
            assert!(p.t != p.t_prime && !g.has_edge(p.t, p.t_prime));
        }
        let mut uniq: Vec<_> = neg.iter().map(|p| (p.t, p.t_prime)).collect();
        uniq.dedup();
        assert_eq!(uniq.len(), 3);
        assert_eq!(pairs, generate_pairs(&g, 1, 9));
        // a large ratio takes all nine non-edges
        assert_eq!(generate_pairs(&g, 10, 1).len(), 3 + 9);
    }

    #[test]
    fn zero_head_scores_one_half() {
        let (_, mut store) = head_only(3);
        store.by_name_mut("sep.w").unwrap().value.fill(0.0);
        assert_eq!(sep_score(&store, &[1.0, 2.0, 3.0], &[-4.0, 0.0, 9.0]), 0.5);
    }

    #[test]
    fn unit_head_reads_first_coordinate() {
        let (_, mut store) = head_only(3);
        let mut w = Tensor::zeros(6, 1);
        w.set(0, 0, 1.0);
        store.by_name_mut("sep.w").unwrap().value = w;
        let s = sep_score(&store, &[2.0, 0.0, 0.0], &[0.5, 0.5, 0.5]);
        assert!((s - 0.8807970779778823).abs() < 1e-12);
        // asymmetric: reversed order reads 0.5 instead
        let r = sep_score(&store, &[0.5, 0.5, 0.5], &[2.0, 0.0, 0.0]);
        assert!((r - sigmoid(0.5)).abs() < 1e-12);
    }

    fn loss_of(probs: &[f64], labels: &[bool]) -> f64 {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::new(&[probs.len(), 1], probs.to_vec()));
        let l = sep_loss(&mut tape, p, labels).unwrap();
        tape.value(l).item()
    }

    #[test]
    fn loss_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((loss_of(&[0.5], &[true]) - ln2).abs() < 1e-12);
        assert!((loss_of(&[0.5], &[false]) - ln2).abs() < 1e-12);
        assert!(loss_of(&[1.0, 0.0], &[true, false]) < 1e-11);
        let expect = (-(0.9f64).ln() - (0.8f64).ln()) / 2.0;
        assert!((loss_of(&[0.9, 0.2], &[true, false]) - expect).abs() < 1e-12);
        assert!(loss_of(&[0.0], &[true]).is_finite());
    }

    fn toy_methods() -> Vec<MethodSplits> {
        let src = "void a(int x) { if (x > 0) { x = 1; } else { x = 2; } }
                   int b(int[] xs) { int s = 0; for (int i = 0; i < n; i++) { s += xs[i]; } return s; }";
        parse_source(src)
            .unwrap()
            .iter()
            .map(|m| split_method(m).unwrap())
            .collect()
    }

    #[test]
    fn sep_loss_gradient_matches_finite_differences() {
        let methods = toy_methods();
        let corpus = SepCorpus::from_splits(&methods, 1, 3);
        assert!(corpus.pairs.len() >= 4);
        let vocab = AstVocab::build(corpus.all_trees(), 2);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = TreeLstm::new(3, vocab, &mut store, &mut rng);
        let model = SepModel::new(enc, &mut store, &mut rng);
        let batch = corpus.pairs.clone();
        let r = grad_check_params(
            &mut store,
            None,
            |tape, store| Ok(model.forward(tape, store, &corpus, &batch)?.1),
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn pretraining_is_deterministic_and_reduces_loss() {
        let methods = toy_methods();
        let corpus = SepCorpus::from_splits(&methods, 1, 3);
        let cfg = PretrainConfig {
            lr: 0.01,
            epochs: 30,
            batch_size: 4,
            seed: 5,
        };
        let run = || {
            let mut store = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let vocab = AstVocab::build(corpus.all_trees(), 2);
            let enc = TreeLstm::new(8, vocab, &mut store, &mut rng);
            let model = SepModel::new(enc, &mut store, &mut rng);
            pretrain(&model, &mut store, &corpus, &cfg).unwrap().epoch_losses
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.last().unwrap() < &a[0]);
    }

    #[test]
    fn bad_config_and_empty_corpus() {
        let (model, mut store) = head_only(2);
        let cfg = PretrainConfig {
            lr: 0.0,
            epochs: 1,
            batch_size: 1,
            seed: 0,
        };
        assert!(pretrain(&model, &mut store, &SepCorpus::default(), &cfg).is_err());
        let before: Vec<_> = store.iter().map(|(_, p)| p.value.clone()).collect();
        let ok = PretrainConfig { lr: 0.1, ..cfg };
        let r = pretrain(&model, &mut store, &SepCorpus::default(), &ok).unwrap();
        assert!(r.epoch_losses.is_empty());
        let after: Vec<_> = store.iter().map(|(_, p)| p.value.clone()).collect();
        assert_eq!(before, after);
    }
}
