//! Child-Sum Tree-LSTM over split ASTs, plus next-split pretraining.
//!
//! Hidden states are `1 × L` rows and weights multiply from the right
//! (`x · W`). All parameters live in a shared [`ParamStore`] under the
//! `tree.` prefix so the encoder can be fine-tuned together with the
//! summarizer and saved in one checkpoint.

mod sep;

pub use sep::{
    generate_pairs, pair_accuracy, pretrain, sep_loss, sep_score, PairExample, PretrainConfig,
    PretrainReport, SepCorpus, SepModel,
};

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::autodiff::{AutodiffError, ParamStore, Tape, Tensor, Var};
use crate::frontend::Ast;

pub const UNK: &str = "<UNK>";
pub const PARAM_PREFIX: &str = "tree.";

/// Maps AST node labels (`type_value`) to embedding rows. Row 0 is UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl AstVocab {
    /// Keeps every label seen at least `min_count` times, in sorted order.
    pub fn build<'a>(trees: impl IntoIterator<Item = &'a Ast>, min_count: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in trees {
            for n in &t.nodes {
                *counts.entry(n.type_value()).or_default() += 1;
            }
        }
        let labels = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .map(|(l, _)| l);
        Self::from_labels(labels)
    }

    /// Builds from an explicit label list; UNK is prepended.
    pub fn from_labels(labels: impl IntoIterator<Item = String>) -> Self {
        let mut all = vec![UNK.to_string()];
        all.extend(labels.into_iter().filter(|l| l != UNK));
        let index = all.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        AstVocab { labels: all, index }
    }

    pub fn id(&self, label: &str) -> usize {
        self.index.get(label).copied().unwrap_or(0)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The root hidden state of one split AST.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxEmbedding {
    pub split_id: usize,
    pub vector: Vec<f64>,
}

/// Tree-LSTM configuration; the weights themselves sit in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct TreeLstm {
    pub dim: usize,
    pub vocab: AstVocab,
}

const GATES: [&str; 4] = ["i", "o", "u", "f"];

impl TreeLstm {
    /// Registers freshly initialized parameters in `store`.
    pub fn new(dim: usize, vocab: AstVocab, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        store.add("tree.embedding", Tensor::uniform(vocab.len(), dim, 0.5, rng));
        for g in GATES {
            store.add(format!("tree.W_{g}"), Tensor::xavier(dim, dim, rng));
        }
        for g in GATES {
            store.add(format!("tree.U_{g}"), Tensor::xavier(dim, dim, rng));
        }
        for g in GATES {
            store.add(format!("tree.b_{g}"), Tensor::zeros(1, dim));
        }
        store.add("tree.h_virtual", Tensor::uniform(1, dim, 0.1, rng));
        store.add("tree.m_virtual", Tensor::uniform(1, dim, 0.1, rng));
        TreeLstm { dim, vocab }
    }

    /// Binds the parameters to a tape, concatenating the per-gate matrices.
    pub fn bind<'a>(&'a self, tape: &mut Tape, store: &ParamStore) -> Result<BoundTreeLstm<'a>, AutodiffError> {
        let p = |tape: &mut Tape, name: String| tape.param_by_name(store, &name);
        let w: Vec<Var> = GATES.iter().map(|g| p(tape, format!("tree.W_{g}"))).collect();
        let b: Vec<Var> = GATES.iter().map(|g| p(tape, format!("tree.b_{g}"))).collect();
        let u: Vec<Var> = GATES.iter().map(|g| p(tape, format!("tree.U_{g}"))).collect();
        Ok(BoundTreeLstm {
            model: self,
            embedding: p(tape, "tree.embedding".into()),
            w: tape.concat_cols(&w)?,
            b: tape.concat_cols(&b)?,
            u_iou: tape.concat_cols(&u[..3])?,
            u_f: u[3],
            h_virtual: p(tape, "tree.h_virtual".into()),
            m_virtual: p(tape, "tree.m_virtual".into()),
        })
    }

    /// Embeds every tree without keeping gradients.
    pub fn embed_all(&self, store: &ParamStore, trees: &[&Ast]) -> Vec<SyntaxEmbedding> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, store).expect("parameter shapes are consistent");
        trees
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let h = encode_tree(&mut tape, &bound, t).expect("parameter shapes are consistent");
                SyntaxEmbedding {
                    split_id: i,
                    vector: tape.value(h).data().to_vec(),
                }
            })
            .collect()
    }
}

/// Tree-LSTM parameters as tape variables. The input weights are laid out
/// as `[W_i | W_o | W_u | W_f]`.
pub struct BoundTreeLstm<'a> {
    pub model: &'a TreeLstm,
    pub embedding: Var,
    pub w: Var,
    pub b: Var,
    pub u_iou: Var,
    pub u_f: Var,
    pub h_virtual: Var,
    pub m_virtual: Var,
}

impl BoundTreeLstm<'_> {
    /// `x · [W_i|W_o|W_u|W_f] + b` for a batch of inputs, one row each.
    pub fn input_projection(&self, tape: &mut Tape, x: Var) -> Result<Var, AutodiffError> {
        let xw = tape.matmul(x, self.w)?;
        tape.add_row(xw, self.b)
    }

    /// One cell update from a precomputed input projection (`1 × 4L`).
    pub fn cell_projected(&self, tape: &mut Tape, xw: Var, children: &[(Var, Var)]) -> Result<(Var, Var), AutodiffError> {
        let l = self.model.dim;
        if children.is_empty() {
            return Err(AutodiffError::Graph("tree_lstm_cell needs at least one child".into()));
        }
        let hs: Vec<Var> = children.iter().map(|c| c.0).collect();
        let ms: Vec<Var> = children.iter().map(|c| c.1).collect();
        let hc = tape.concat_rows(&hs)?;
        let mc = tape.concat_rows(&ms)?;
        let h_sum = tape.sum(hc, 0)?;

        let xw_iou = tape.slice_cols(xw, 0, 3 * l)?;
        let hu = tape.matmul(h_sum, self.u_iou)?;
        let iou = tape.add(xw_iou, hu)?;
        let i = tape.slice_cols(iou, 0, l)?;
        let i = tape.sigmoid(i)?;
        let o = tape.slice_cols(iou, l, l)?;
        let o = tape.sigmoid(o)?;
        let u = tape.slice_cols(iou, 2 * l, l)?;
        let u = tape.tanh(u)?;

        let xw_f = tape.slice_cols(xw, 3 * l, l)?;
        let hf = tape.matmul(hc, self.u_f)?;
        let f = tape.add_row(hf, xw_f)?;
        let f = tape.sigmoid(f)?;
        let fm = tape.mul(f, mc)?;
        let fm = tape.sum(fm, 0)?;

        let iu = tape.mul(i, u)?;
        let m = tape.add(iu, fm)?;
        let tm = tape.tanh(m)?;
        let h = tape.mul(o, tm)?;
        Ok((h, m))
    }
}

/// One Child-Sum Tree-LSTM step for input `x` (`1 × L`). Leaves pass the
/// virtual child `(bound.h_virtual, bound.m_virtual)`.
pub fn tree_lstm_cell(
    tape: &mut Tape,
    bound: &BoundTreeLstm,
    x: Var,
    children: &[(Var, Var)],
) -> Result<(Var, Var), AutodiffError> {
    let [r, c] = tape.value(x).shape();
    if r != 1 || c != bound.model.dim {
        return Err(AutodiffError::Shape {
            op: "tree_lstm_cell",
            left: [r, c],
            right: [1, bound.model.dim],
        });
    }
    let xw = bound.input_projection(tape, x)?;
    bound.cell_projected(tape, xw, children)
}

/// Bottom-up encoding; returns the root hidden state (`1 × L`).
pub fn encode_tree(tape: &mut Tape, bound: &BoundTreeLstm, ast: &Ast) -> Result<Var, AutodiffError> {
    let vocab = &bound.model.vocab;
    let ids: Vec<usize> = ast.nodes.iter().map(|n| vocab.id(&n.type_value())).collect();
    let x = tape.gather_rows(bound.embedding, &ids)?;
    let xw = bound.input_projection(tape, x)?;
    let mut state: Vec<Option<(Var, Var)>> = vec![None; ast.len()];
    for v in ast.post_order() {
        let children: Vec<(Var, Var)> = if ast.nodes[v].children.is_empty() {
            vec![(bound.h_virtual, bound.m_virtual)]
        } else {
            ast.nodes[v]
                .children
                .iter()
                .map(|&c| state[c].expect("children precede parents"))
                .collect()
        };
        let row = tape.gather_rows(xw, &[v])?;
        state[v] = Some(bound.cell_projected(tape, row, &children)?);
    }
    Ok(state[Ast::ROOT].expect("root encoded").0)
}
