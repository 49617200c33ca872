use super::*;
use crate::autodiff::grad_check_params;
use crate::frontend::{code_subtokens, parse_source};
use crate::splitter::split_method;
use crate::syntax_encoder::AstVocab;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn examples_and_model(config: SummarizerConfig, seed: u64) -> (Summarizer, ParamStore, Vec<SummarizationExample>) {
    let src = "int size() { return count; }
               void clear() { if (items != null) { items.clear(); } count = 0; }
               boolean isEmpty() { return size() == 0; }";
    let comments = [
        vec!["returns", "the", "size"],
        vec!["clears", "all", "items"],
        vec!["checks", "if", "empty"],
    ];
    let methods = parse_source(src).unwrap();
    let splits: Vec<_> = methods.iter().map(|m| split_method(m).unwrap()).collect();
    let codes: Vec<Vec<String>> = methods.iter().map(|m| code_subtokens(&m.tokens)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let tree_vocab = AstVocab::build(splits.iter().flat_map(|s| s.asts.iter().map(|a| &a.ast)), 2);
    let tree = TreeLstm::new(config.dim, tree_vocab, &mut store, &mut rng);
    let code_vocab = Vocab::build(&codes, 1, None);
    let word_vocab = Vocab::from_tokens(comments.iter().flatten().copied());
    let model = Summarizer::new(config, tree, code_vocab, word_vocab, &mut store, &mut rng).unwrap();
    let examples = (0..methods.len())
        .map(|i| SummarizationExample {
            code_ids: model.code_ids(&codes[i]),
            trees: splits[i].asts.iter().map(|a| a.ast.clone()).collect(),
            comment_ids: model.comment_ids(&comments[i]),
        })
        .collect();
    (model, store, examples)
}

fn tiny_config(dim: usize, heads: usize, layers: usize) -> SummarizerConfig {
    SummarizerConfig {
        dim,
        heads,
        encoder_layers: layers,
        decoder_layers: layers,
        ff_dim: 2 * dim,
        max_code_len: 100,
        max_comment_len: 30,
    }
}

#[test]
fn pooling() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::row_vector(vec![1.0, 3.0]));
    let b = tape.constant(Tensor::row_vector(vec![3.0, 1.0]));
    let p = avg_pool(&mut tape, &[a, b]).unwrap();
    assert_eq!(tape.value(p).data(), &[2.0, 2.0]);
    let p = avg_pool(&mut tape, &[a]).unwrap();
    assert_eq!(tape.value(p).data(), &[1.0, 3.0]);
    let p = avg_pool(&mut tape, &[b, b, b]).unwrap();
    assert_eq!(tape.value(p).data(), &[3.0, 1.0]);
    assert_eq!(avg_pool(&mut tape, &[]), Err(SummarizerError::EmptyInput));
}

#[test]
fn fusion_cases() {
    let mut tape = Tape::new();
    let pooled = tape.constant(Tensor::row_vector(vec![0.5, -2.0]));
    let tokens = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.25]]));
    let b0 = tape.constant(Tensor::zeros(1, 2));
    let w0 = tape.constant(Tensor::zeros(4, 2));
    let z = fuse(&mut tape, pooled, tokens, w0, b0).unwrap();
    assert_eq!(tape.value(z).data(), &[0.0; 4]);

    let sel = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0]]));
    let z = fuse(&mut tape, pooled, tokens, sel, b0).unwrap();
    assert_eq!(tape.value(z).data(), &[0.5, 0.0, 0.5, 0.0]);

    let w = Tensor::from_rows(&[vec![0.1, -0.2], vec![0.3, 0.4], vec![-0.5, 0.6], vec![0.7, 0.8]]);
    let wv = tape.constant(w);
    let bv = tape.constant(Tensor::row_vector(vec![0.05, -0.1]));
    let z = fuse(&mut tape, pooled, tokens, wv, bv).unwrap();
    // row 0: x = [0.5, -2, 1, 2]
    let r00: f64 = 0.5 * 0.1 - 2.0 * 0.3 + 1.0 * -0.5 + 2.0 * 0.7 + 0.05;
    let r01: f64 = 0.5 * -0.2 - 2.0 * 0.4 + 1.0 * 0.6 + 2.0 * 0.8 - 0.1;
    // row 1: x = [0.5, -2, -3, 0.25]
    let r10: f64 = 0.5 * 0.1 - 2.0 * 0.3 - 3.0 * -0.5 + 0.25 * 0.7 + 0.05;
    let r11: f64 = 0.5 * -0.2 - 2.0 * 0.4 - 3.0 * 0.6 + 0.25 * 0.8 - 0.1;
    let expect = [r00.max(0.0), r01.max(0.0), r10.max(0.0), r11.max(0.0)];
    for (a, b) in tape.value(z).data().iter().zip(expect) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn zero_layer_encoder_is_fused_input_plus_positions() {
    let (model, store, exs) = examples_and_model(tiny_config(4, 2, 0), 1);
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, &store).unwrap();
    let (out, _) = b.encode(&mut tape, &exs[1].code_ids, &exs[1].trees).unwrap();
    let embs = b.split_embeddings(&mut tape, &exs[1].trees).unwrap();
    let pooled = avg_pool(&mut tape, &embs).unwrap();
    let toks = tape.gather_rows(b.code_embedding, &exs[1].code_ids).unwrap();
    let fused = fuse(&mut tape, pooled, toks, b.fusion_w, b.fusion_b).unwrap();
    let expect = tape.value(fused).zip_map(&positional_matrix(exs[1].code_ids.len(), 4), |a, b| a + b);
    assert_eq!(tape.value(out), &expect);
    assert_eq!(tape.value(out).shape(), [exs[1].code_ids.len(), 4]);
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn norm_rows(x: &Tensor, g: &Tensor, b: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = x.row(r);
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        for (c, o) in out.row_mut(r).iter_mut().enumerate() {
            *o = (row[c] - mean) / (var + LN_EPS).sqrt() * g.data()[c] + b.data()[c];
        }
    }
    out
}

#[test]
fn one_encoder_layer_matches_manual_composition() {
    let (model, store, exs) = examples_and_model(tiny_config(2, 1, 1), 2);
    let ex = &exs[0];
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, &store).unwrap();
    let x0 = b.encoder_input(&mut tape, &ex.code_ids, &ex.trees).unwrap();
    let x0 = tape.value(x0).clone();
    let (out, _) = b.encode(&mut tape, &ex.code_ids, &ex.trees).unwrap();

    let p = |n: &str| store.by_name(&format!("sum.enc.0.{n}")).unwrap().value.clone();
    let (q, k, v) = (x0.matmul(&p("attn.Wq")), x0.matmul(&p("attn.Wk")), x0.matmul(&p("attn.Wv")));
    let scores = q.matmul_t(&k).map(|s| s / 2f64.sqrt());
    let mut att = Tensor::zeros(scores.rows(), scores.cols());
    for r in 0..scores.rows() {
        att.row_mut(r).copy_from_slice(&softmax(scores.row(r)));
    }
    let a = att.matmul(&v).matmul(&p("attn.Wo"));
    let h = norm_rows(&x0.zip_map(&a, |x, y| x + y), &p("ln1.gamma"), &p("ln1.beta"));
    let mut f = h.matmul(&p("ffn.W1"));
    let b1 = p("ffn.b1");
    for r in 0..f.rows() {
        for (o, bb) in f.row_mut(r).iter_mut().zip(b1.data()) {
            *o = (*o + bb).max(0.0);
        }
    }
    let mut f = f.matmul(&p("ffn.W2"));
    let b2 = p("ffn.b2");
    for r in 0..f.rows() {
        for (o, bb) in f.row_mut(r).iter_mut().zip(b2.data()) {
            *o += bb;
        }
    }
    let expect = norm_rows(&h.zip_map(&f, |x, y| x + y), &p("ln2.gamma"), &p("ln2.beta"));
    assert!(tape.value(out).max_abs_diff(&expect) < 1e-12);
}

#[test]
fn uniform_output_costs_log_vocab_per_token() {
    let (model, mut store, exs) = examples_and_model(tiny_config(4, 2, 1), 3);
    store.by_name_mut("sum.out.W").unwrap().value.fill(0.0);
    let mut tape = Tape::new();
    let loss = batch_loss(&mut tape, &model, &store, &[&exs[0]]).unwrap();
    let expect = (model.word_vocab.len() as f64).ln();
    assert!((tape.value(loss).item() - expect).abs() < 1e-12);
}

#[test]
fn duplicated_batch_has_the_same_loss() {
    let (model, store, exs) = examples_and_model(tiny_config(4, 2, 1), 4);
    let mut t1 = Tape::new();
    let one = batch_loss(&mut t1, &model, &store, &[&exs[1]]).unwrap();
    let mut t2 = Tape::new();
    let two = batch_loss(&mut t2, &model, &store, &[&exs[1], &exs[1]]).unwrap();
    assert!((t1.value(one).item() - t2.value(two).item()).abs() < 1e-12);
}

#[test]
fn padding_does_not_change_real_positions() {
    let (model, store, exs) = examples_and_model(tiny_config(8, 2, 2), 5);
    let ex = &exs[1];
    let mut padded = ex.code_ids.clone();
    padded.extend([PAD; 5]);
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, &store).unwrap();
    let (plain, _) = b.encode(&mut tape, &ex.code_ids, &ex.trees).unwrap();
    let (pad, _) = b.encode(&mut tape, &padded, &ex.trees).unwrap();
    let n = ex.code_ids.len();
    let (pv, qv) = (tape.value(plain), tape.value(pad));
    for r in 0..n {
        for c in 0..8 {
            assert!((pv.get(r, c) - qv.get(r, c)).abs() < 1e-10);
        }
    }
    let (l1, _) = b.decode(&mut tape, plain, &ex.code_ids, &ex.comment_ids).unwrap();
    let (l2, _) = b.decode(&mut tape, pad, &padded, &ex.comment_ids).unwrap();
    assert!(tape.value(l1).max_abs_diff(tape.value(l2)) < 1e-10);
}

#[test]
fn decoder_is_causal() {
    let (model, store, exs) = examples_and_model(tiny_config(8, 2, 2), 6);
    let ex = &exs[2];
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, &store).unwrap();
    let (mem, _) = b.encode(&mut tape, &ex.code_ids, &ex.trees).unwrap();
    let inputs = ex.comment_ids.clone();
    let (base, _) = b.decode(&mut tape, mem, &ex.code_ids, &inputs).unwrap();
    for s in 1..inputs.len() {
        let mut changed = inputs.clone();
        changed[s] = if changed[s] == 7 { 8 } else { 7 };
        let (pert, _) = b.decode(&mut tape, mem, &ex.code_ids, &changed).unwrap();
        for r in 0..s {
            assert_eq!(tape.value(base).row(r), tape.value(pert).row(r));
        }
        assert_ne!(tape.value(base).row(s), tape.value(pert).row(s));
    }
}

#[test]
fn zero_parameters_decode_to_nothing() {
    let (model, mut store, exs) = examples_and_model(tiny_config(4, 2, 1), 7);
    let names: Vec<String> = store.iter().map(|(_, p)| p.name.clone()).collect();
    for n in names {
        store.by_name_mut(&n).unwrap().value.fill(0.0);
    }
    let out = greedy_decode(&model, &store, &exs[0].code_ids, &exs[0].trees, 30).unwrap();
    assert!(out.is_empty());
}

#[test]
fn decode_respects_max_len_and_is_deterministic() {
    let (model, mut store, exs) = examples_and_model(tiny_config(4, 2, 1), 8);
    // make EOS the least likely word
    store.by_name_mut("sum.out.b").unwrap().value.set(0, EOS, -100.0);
    let a = greedy_decode(&model, &store, &exs[0].code_ids, &exs[0].trees, 1).unwrap();
    assert_eq!(a.len(), 1);
    let b = greedy_decode(&model, &store, &exs[0].code_ids, &exs[0].trees, 5).unwrap();
    assert_eq!(b.len(), 5);
    assert!(b.iter().all(|&w| w > BOS));
    assert_eq!(b, greedy_decode(&model, &store, &exs[0].code_ids, &exs[0].trees, 5).unwrap());
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let (model, mut store, exs) = examples_and_model(tiny_config(8, 2, 1), 9);
    let ex = exs[0].clone();
    let r = grad_check_params(
        &mut store,
        None,
        |tape, store| batch_loss(tape, &model, store, &[&ex]).map_err(|e| match e {
            SummarizerError::Autodiff(a) => a,
            other => AutodiffError::Graph(other.to_string()),
        }),
        1e-5,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn training_reduces_loss_and_frozen_encoder_stays_put() {
    let (model, mut store, exs) = examples_and_model(tiny_config(8, 2, 1), 10);
    store.set_frozen("tree.", true);
    let tree_before = store.by_name("tree.W_i").unwrap().value.clone();
    let batch: Vec<&SummarizationExample> = exs.iter().collect();
    let mut adam = Adam::new(0.01);
    let first = train_step(&model, &mut store, &mut adam, &batch, 0).unwrap();
    let mut last = first;
    for e in 1..60 {
        last = train_step(&model, &mut store, &mut adam, &batch, e).unwrap();
    }
    assert!(last < first * 0.5, "{first} -> {last}");
    assert_eq!(store.by_name("tree.W_i").unwrap().value, tree_before);
}

#[test]
fn config_validation() {
    let mut c = SummarizerConfig::default();
    assert!(c.validate().is_ok());
    c.heads = 3;
    assert_eq!(c.validate(), Err(ConfigError::HeadSplit { dim: 64, heads: 3 }));
}
