//! Text-generation metrics: sentence and corpus BLEU, ROUGE-1/2/L and an
//! exact-match METEOR. Inputs are word lists; everything is lowercased
//! before scoring.

use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

fn fold(words: &[impl AsRef<str>]) -> Vec<String> {
    words.iter().map(|w| w.as_ref().to_lowercase()).collect()
}

fn ngram_counts(words: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if words.len() >= n {
        for g in words.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram matches and the hypothesis n-gram total.
fn clipped(hyp: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, hyp.len().saturating_sub(n - 1))
}

fn brevity(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        return 0.0;
    }
    (1.0 - ref_len as f64 / hyp_len as f64).exp().min(1.0)
}

/// Sentence BLEU up to order `n`. With `smooth`, a sentence that has zero
/// matches at some order gets add-one counts for every order ≥ 2. Orders
/// longer than the hypothesis are left out of the mean.
pub fn sentence_bleu(hyp: &[impl AsRef<str>], reference: &[impl AsRef<str>], n: usize, smooth: bool) -> f64 {
    let (h, r) = (fold(hyp), fold(reference));
    if h.is_empty() || r.is_empty() {
        return 0.0;
    }
    let counts: Vec<(usize, usize)> = (1..=n).map(|k| clipped(&h, &r, k)).collect();
    let any_zero = counts.iter().any(|&(m, _)| m == 0);
    let smoothed = counts.iter().enumerate().map(|(k, &(m, c))| {
        if smooth && any_zero && k >= 1 && c > 0 {
            (m + 1, c + 1)
        } else {
            (m, c)
        }
    });
    geometric_mean(smoothed).map_or(0.0, |g| brevity(h.len(), r.len()) * g)
}

/// Geometric mean of the precisions `m / c`, over the orders that have at
/// least one candidate n-gram. `None` when some precision is zero or no
/// order qualifies.
fn geometric_mean(counts: impl Iterator<Item = (usize, usize)>) -> Option<f64> {
    let mut log_sum = 0.0;
    let mut orders = 0;
    for (m, c) in counts {
        if c == 0 {
            continue;
        }
        if m == 0 {
            return None;
        }
        log_sum += (m as f64 / c as f64).ln();
        orders += 1;
    }
    (orders > 0).then(|| (log_sum / orders as f64).exp())
}

/// Corpus BLEU: match and candidate counts and lengths are summed over all
/// pairs before the precisions are formed. Unsmoothed; orders with no
/// candidate n-grams anywhere in the corpus are left out of the mean.
pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(pairs: &[(Vec<H>, Vec<R>)], n: usize) -> f64 {
    let mut matches = vec![0usize; n];
    let mut totals = vec![0usize; n];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (hyp, reference) in pairs {
        let (h, r) = (fold(hyp), fold(reference));
        hyp_len += h.len();
        ref_len += r.len();
        for k in 1..=n {
            let (m, c) = clipped(&h, &r, k);
            matches[k - 1] += m;
            totals[k - 1] += c;
        }
    }
    geometric_mean(matches.into_iter().zip(totals)).map_or(0.0, |g| brevity(hyp_len, ref_len) * g)
}

fn f_score(overlap: f64, hyp_count: f64, ref_count: f64) -> f64 {
    if overlap == 0.0 || hyp_count == 0.0 || ref_count == 0.0 {
        return 0.0;
    }
    let (p, r) = (overlap / hyp_count, overlap / ref_count);
    2.0 * p * r / (p + r)
}

/// ROUGE-N F-score with clipped overlap. When neither side has an n-gram
/// of this order, identical sequences score 1 and others 0.
pub fn rouge_n(hyp: &[impl AsRef<str>], reference: &[impl AsRef<str>], n: usize) -> f64 {
    let (h, r) = (fold(hyp), fold(reference));
    let (overlap, hyp_count) = clipped(&h, &r, n);
    let ref_count = r.len().saturating_sub(n - 1);
    if hyp_count == 0 && ref_count == 0 {
        return if !h.is_empty() && h == r { 1.0 } else { 0.0 };
    }
    f_score(overlap as f64, hyp_count as f64, ref_count as f64)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-score: LCS length over hypothesis and reference lengths.
pub fn rouge_l(hyp: &[impl AsRef<str>], reference: &[impl AsRef<str>]) -> f64 {
    let (h, r) = (fold(hyp), fold(reference));
    f_score(lcs_len(&h, &r) as f64, h.len() as f64, r.len() as f64)
}

const ALIGN_BUDGET: usize = 200_000;

struct Aligner<'a> {
    hyp: &'a [String],
    reference: &'a [String],
    /// Occurrences of each hypothesis word from position i onwards.
    remaining: Vec<HashMap<&'a str, usize>>,
    used: Vec<bool>,
    need: HashMap<&'a str, usize>,
    best: usize,
    nodes: usize,
}

impl Aligner<'_> {
    fn search(&mut self, i: usize, last: Option<(usize, usize)>, chunks: usize) {
        self.nodes += 1;
        if chunks >= self.best || self.nodes > ALIGN_BUDGET {
            return;
        }
        if i == self.hyp.len() {
            self.best = chunks;
            return;
        }
        let w = self.hyp[i].as_str();
        let need = self.need.get(w).copied().unwrap_or(0);
        if need > 0 {
            // prefer the position that extends the current chunk
            let mut cands: Vec<usize> = (0..self.reference.len())
                .filter(|&j| !self.used[j] && self.reference[j] == w)
                .collect();
            if let Some((_, lj)) = last {
                cands.sort_by_key(|&j| j != lj + 1);
            }
            for j in cands {
                let extends = matches!(last, Some((li, lj)) if li + 1 == i && lj + 1 == j);
                self.used[j] = true;
                *self.need.get_mut(w).unwrap() -= 1;
                self.search(i + 1, Some((i, j)), chunks + usize::from(!extends));
                *self.need.get_mut(w).unwrap() += 1;
                self.used[j] = false;
            }
        }
        // skipping is allowed only if later occurrences can still fill the quota
        let later = self.remaining.get(i + 1).and_then(|m| m.get(w)).copied().unwrap_or(0);
        if later >= need {
            self.search(i + 1, last, chunks);
        }
    }
}

/// Fewest chunks over all maximum-size exact unigram alignments, with the
/// match count. Long inputs with many repeated words fall back to the best
/// alignment found within a fixed search budget.
pub fn align(hyp: &[String], reference: &[String]) -> (usize, usize) {
    let mut hc: HashMap<&str, usize> = HashMap::new();
    for w in hyp {
        *hc.entry(w).or_default() += 1;
    }
    let mut rc: HashMap<&str, usize> = HashMap::new();
    for w in reference {
        *rc.entry(w).or_default() += 1;
    }
    let need: HashMap<&str, usize> = hc
        .iter()
        .map(|(w, &c)| (*w, c.min(rc.get(w).copied().unwrap_or(0))))
        .collect();
    let matches: usize = need.values().sum();
    if matches == 0 {
        return (0, 0);
    }
    let mut remaining = vec![HashMap::new(); hyp.len() + 1];
    for i in (0..hyp.len()).rev() {
        let mut m = remaining[i + 1].clone();
        *m.entry(hyp[i].as_str()).or_default() += 1;
        remaining[i] = m;
    }
    let mut a = Aligner {
        hyp,
        reference,
        remaining,
        used: vec![false; reference.len()],
        need,
        best: usize::MAX,
        nodes: 0,
    };
    a.search(0, None, 0);
    (matches, a.best)
}

/// METEOR restricted to exact matches: `F_mean = 10PR / (R + 9P)` times
/// `1 − 0.5 (chunks / matches)³`. As in the reference scorer, a single
/// chunk covering every word of both sides has no fragmentation penalty.
pub fn meteor_lite(hyp: &[impl AsRef<str>], reference: &[impl AsRef<str>]) -> f64 {
    let (h, r) = (fold(hyp), fold(reference));
    let (m, chunks) = align(&h, &r);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / h.len() as f64;
    let rc = m as f64 / r.len() as f64;
    let f_mean = 10.0 * p * rc / (rc + 9.0 * p);
    let penalty = if chunks == 1 && m == h.len() && m == r.len() {
        0.0
    } else {
        0.5 * (chunks as f64 / m as f64).powi(3)
    };
    f_mean * (1.0 - penalty)
}

/// Averages of the sentence-level scores plus corpus BLEU, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub s_bleu: f64,
    pub c_bleu: f64,
    pub meteor: f64,
    pub rouge1_f: f64,
    pub rouge2_f: f64,
    #[serde(rename = "rougeL_f")]
    pub rouge_l_f: f64,
    pub count: usize,
}

impl EvalReport {
    pub fn evaluate<H: AsRef<str>, R: AsRef<str>>(pairs: &[(Vec<H>, Vec<R>)], smooth: bool) -> Self {
        let n = pairs.len().max(1) as f64;
        let mean = |f: &dyn Fn(&[H], &[R]) -> f64| pairs.iter().map(|(h, r)| f(h, r)).sum::<f64>() / n;
        EvalReport {
            s_bleu: mean(&|h, r| sentence_bleu(h, r, 4, smooth)),
            c_bleu: if pairs.is_empty() { 0.0 } else { corpus_bleu(pairs, 4) },
            meteor: mean(&|h, r| meteor_lite(h, r)),
            rouge1_f: mean(&|h, r| rouge_n(h, r, 1)),
            rouge2_f: mean(&|h, r| rouge_n(h, r, 2)),
            rouge_l_f: mean(&|h, r| rouge_l(h, r)),
            count: pairs.len(),
        }
    }

    fn rows(&self) -> [(&'static str, f64); 6] {
        [
            ("S-BLEU", self.s_bleu),
            ("C-BLEU", self.c_bleu),
            ("METEOR", self.meteor),
            ("ROUGE-1", self.rouge1_f),
            ("ROUGE-2", self.rouge2_f),
            ("ROUGE-L", self.rouge_l_f),
        ]
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>7}", "metric", "score");
        for (name, v) in self.rows() {
            let _ = writeln!(out, "{:<8} {:>7.2}", name, v * 100.0);
        }
        let _ = writeln!(out, "({} pairs)", self.count);
        out
    }

    /// Scores ×100 rounded to two decimals.
    pub fn to_json(&self) -> serde_json::Value {
        let r = |v: f64| (v * 10000.0).round() / 100.0;
        serde_json::json!({
            "s_bleu": r(self.s_bleu),
            "c_bleu": r(self.c_bleu),
            "meteor": r(self.meteor),
            "rouge1_f": r(self.rouge1_f),
            "rouge2_f": r(self.rouge2_f),
            "rougeL_f": r(self.rouge_l_f),
            "count": self.count,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn bleu_examples() {
        assert_eq!(sentence_bleu(&w("a b c d"), &w("a b c d"), 4, false), 1.0);
        assert_eq!(sentence_bleu(&w("a b c d"), &w("a b c e"), 4, false), 0.0);
        assert_eq!(clipped(&w("a a a"), &w("a b"), 1), (1, 3));
        assert_eq!(sentence_bleu(&w(""), &w("a b"), 4, true), 0.0);
        assert_eq!(sentence_bleu(&w("a b"), &w("a b"), 4, false), 1.0);
        let short = sentence_bleu(&w("a b c"), &w("a b c d"), 4, false);
        assert!((short - (1.0 - 4.0 / 3.0f64).exp()).abs() < 1e-12);
        // smoothed: P1 = 3/4, then add-one: P2 = 3/4, P3 = 2/3, P4 = 1/2
        let s = sentence_bleu(&w("a b c d"), &w("a b c e"), 4, true);
        let expect = (0.75f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25);
        assert!((s - expect).abs() < 1e-12);
    }

    #[test]
    fn case_is_folded() {
        assert_eq!(sentence_bleu(&w("Get The Name now"), &w("get the name NOW"), 4, false), 1.0);
    }

    #[test]
    fn corpus_bleu_pools_counts() {
        let pairs = vec![(w("a b"), w("a b")), (w("a c"), w("a b c"))];
        // unigrams: 2 + 2 matched of 4; bigrams: 1 + 0 of 2; lengths 4 vs 5
        let expect = (1.0 - 5.0 / 4.0f64).exp() * (1.0f64 * 0.5).sqrt();
        assert!((corpus_bleu(&pairs, 2) - expect).abs() < 1e-12);
        let one = vec![(w("a b c x"), w("a b c d e"))];
        assert!((corpus_bleu(&one, 2) - sentence_bleu(&one[0].0, &one[0].1, 2, false)).abs() < 1e-15);
    }

    #[test]
    fn rouge_examples() {
        assert!((rouge_n(&w("a b c"), &w("a b d"), 1) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_n(&w("x y"), &w("a b"), 1), 0.0);
        assert_eq!(rouge_n(&w("a b c"), &w("a b c"), 2), 1.0);
        assert!((rouge_l(&w("a b c"), &w("a c b")) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(rouge_l(&w(""), &w("a")), 0.0);
        assert_eq!(rouge_n(&w("a"), &w("a"), 2), 1.0);
    }

    #[test]
    fn meteor_examples() {
        let m = meteor_lite(&w("the cat"), &w("the cat sat"));
        let f: f64 = 10.0 * (2.0 / 3.0) / ((2.0 / 3.0) + 9.0);
        assert!((f - 0.6897).abs() < 1e-4);
        assert!((m - f * (1.0 - 0.5 * 0.125)).abs() < 1e-12);
        assert_eq!(meteor_lite(&w("x"), &w("y")), 0.0);
        let long = w("one two three four five six seven eight nine ten");
        assert_eq!(meteor_lite(&long, &long), 1.0);
        // same words, two chunks: P = R = 1, penalty 0.5 (2/3)^3
        let swapped = meteor_lite(&w("b c a"), &w("a b c"));
        assert!((swapped - (1.0 - 0.5 * 8.0 / 27.0)).abs() < 1e-12);
    }

    #[test]
    fn alignment_prefers_fewer_chunks() {
        // greedy leftmost matching of "a" would split into three chunks
        let (m, c) = align(&w("a b"), &w("a x a b"));
        assert_eq!((m, c), (2, 1));
        let (m, c) = align(&w("c a b"), &w("a b c"));
        assert_eq!((m, c), (3, 2));
    }

    #[test]
    fn report_formats() {
        let pairs = vec![(w("get the name"), w("get the name"))];
        let r = EvalReport::evaluate(&pairs, true);
        let j = r.to_json();
        for k in ["s_bleu", "c_bleu", "rouge1_f", "rouge2_f", "rougeL_f"] {
            assert_eq!(j[k], 100.0);
        }
        assert!(r.to_table().contains("ROUGE-L"));
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..12)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn scores_are_bounded(h in words(), r in words()) {
            for s in [
                sentence_bleu(&h, &r, 4, true),
                sentence_bleu(&h, &r, 4, false),
                rouge_n(&h, &r, 1),
                rouge_n(&h, &r, 2),
                rouge_l(&h, &r),
                meteor_lite(&h, &r),
            ] {
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }

        #[test]
        fn relabeling_does_not_change_scores(h in words(), r in words()) {
            let relabel = |v: &Vec<String>| -> Vec<String> { v.iter().map(|x| format!("w{x}")).collect() };
            let (h2, r2) = (relabel(&h), relabel(&r));
            prop_assert_eq!(sentence_bleu(&h, &r, 4, true), sentence_bleu(&h2, &r2, 4, true));
            prop_assert_eq!(rouge_l(&h, &r), rouge_l(&h2, &r2));
            prop_assert_eq!(meteor_lite(&h, &r), meteor_lite(&h2, &r2));
        }

        #[test]
        fn rouge_l_is_one_only_for_identity(h in words(), r in words()) {
            prop_assume!(!r.is_empty());
            prop_assert_eq!(rouge_l(&h, &r) == 1.0, h == r);
        }

        #[test]
        fn bleu_is_one_only_for_identity(h in words(), r in words()) {
            prop_assume!(h.len() >= 4 && !r.is_empty());
            prop_assert_eq!(sentence_bleu(&h, &r, 4, true) == 1.0, h == r);
        }

        #[test]
        fn repeated_pairs_do_not_change_corpus_bleu(h in words(), r in words(), k in 1usize..5) {
            let one = vec![(h.clone(), r.clone())];
            let many = vec![(h, r); k];
            prop_assert!((corpus_bleu(&one, 4) - corpus_bleu(&many, 4)).abs() < 1e-12);
        }
    }
}
