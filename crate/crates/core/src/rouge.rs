//! ROUGE-1/2/L precision, recall and F1.
//!
//! Text is lowercased, split on runs of non-alphanumeric characters and
//! (optionally) Porter-stemmed. Tokens of three characters or fewer are left
//! unstemmed. ROUGE-L is the summary-level longest common subsequence over the
//! whole token sequence.

use std::collections::HashMap;
use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RougeError {
    #[error("at least one reference is required")]
    NoReferences,
    #[error("unsupported n-gram order {0}")]
    UnsupportedOrder(usize),
}

/// Tokenization switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RougeOptions {
    pub stem: bool,
    pub keep_case: bool,
}

impl Default for RougeOptions {
    fn default() -> Self {
        Self {
            stem: true,
            keep_case: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Self {
        let precision = if candidate == 0 {
            0.0
        } else {
            overlap as f64 / candidate as f64
        };
        let recall = if reference == 0 {
            0.0
        } else {
            overlap as f64 / reference as f64
        };
        Self::new(precision, recall)
    }

    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub r1: Prf,
    pub r2: Prf,
    pub rl: Prf,
}

impl RougeScore {
    /// Component-wise mean of a set of scores.
    pub fn mean(scores: &[RougeScore]) -> RougeScore {
        if scores.is_empty() {
            return RougeScore::default();
        }
        let n = scores.len() as f64;
        let avg = |get: fn(&RougeScore) -> Prf| {
            let (p, r, f) = scores.iter().map(get).fold((0.0, 0.0, 0.0), |acc, x| {
                (acc.0 + x.precision, acc.1 + x.recall, acc.2 + x.f1)
            });
            Prf {
                precision: p / n,
                recall: r / n,
                f1: f / n,
            }
        };
        RougeScore {
            r1: avg(|s| s.r1),
            r2: avg(|s| s.r2),
            rl: avg(|s| s.rl),
        }
    }
}

fn stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

/// Normalizes text into comparison tokens.
pub fn normalize(text: &str, opts: RougeOptions) -> Vec<String> {
    let lowered;
    let text = if opts.keep_case {
        text
    } else {
        lowered = text.to_lowercase();
        &lowered
    };
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            if opts.stem && t.chars().count() > 3 {
                stemmer().stem(t).into_owned()
            } else {
                t.to_string()
            }
        })
        .collect()
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<&str> = w.iter().map(|t| t.as_ref()).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap between two token sequences, with the candidate and
/// reference n-gram totals.
pub fn ngram_overlap<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    (
        overlap,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
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

pub fn rouge_n_tokens<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> Prf {
    let (overlap, c, r) = ngram_overlap(candidate, reference, n);
    Prf::from_counts(overlap, c, r)
}

pub fn rouge_l_tokens<T: PartialEq>(candidate: &[T], reference: &[T]) -> Prf {
    Prf::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize, opts: RougeOptions) -> Result<Prf, RougeError> {
    if !(1..=2).contains(&n) {
        return Err(RougeError::UnsupportedOrder(n));
    }
    Ok(rouge_n_tokens(
        &normalize(candidate, opts),
        &normalize(reference, opts),
        n,
    ))
}

pub fn rouge_l(candidate: &str, reference: &str, opts: RougeOptions) -> Prf {
    rouge_l_tokens(&normalize(candidate, opts), &normalize(reference, opts))
}

/// ROUGE-1/2/L of one candidate against one reference, tokenizing once.
pub fn rouge_single(candidate: &str, reference: &str, opts: RougeOptions) -> RougeScore {
    let c = normalize(candidate, opts);
    let r = normalize(reference, opts);
    score_tokens(&c, &r)
}

pub fn score_tokens<T: AsRef<str> + PartialEq>(c: &[T], r: &[T]) -> RougeScore {
    RougeScore {
        r1: rouge_n_tokens(c, r, 1),
        r2: rouge_n_tokens(c, r, 2),
        rl: rouge_l_tokens(c, r),
    }
}

/// Multi-reference scoring: each metric independently keeps the reference
/// with the highest F1.
pub fn rouge_multi<S: AsRef<str>>(
    candidate: &str,
    references: &[S],
    opts: RougeOptions,
) -> Result<RougeScore, RougeError> {
    if references.is_empty() {
        return Err(RougeError::NoReferences);
    }
    let cand = normalize(candidate, opts);
    let mut best: Option<RougeScore> = None;
    for r in references {
        let s = score_tokens(&cand, &normalize(r.as_ref(), opts));
        best = Some(match best {
            None => s,
            Some(b) => RougeScore {
                r1: if s.r1.f1 > b.r1.f1 { s.r1 } else { b.r1 },
                r2: if s.r2.f1 > b.r2.f1 { s.r2 } else { b.r2 },
                rl: if s.rl.f1 > b.rl.f1 { s.rl } else { b.rl },
            },
        });
    }
    Ok(best.expect("non-empty references"))
}

/// Scores line-aligned candidate/reference lists; returns per-line scores and
/// their mean.
pub fn score_pairs<S: AsRef<str> + Sync>(
    candidates: &[S],
    references: &[S],
    opts: RougeOptions,
) -> (Vec<RougeScore>, RougeScore) {
    use rayon::prelude::*;
    let scores: Vec<RougeScore> = candidates
        .par_iter()
        .zip(references.par_iter())
        .map(|(c, r)| rouge_single(c.as_ref(), r.as_ref(), opts))
        .collect();
    let mean = RougeScore::mean(&scores);
    (scores, mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const OPTS: RougeOptions = RougeOptions {
        stem: true,
        keep_case: false,
    };

    #[test]
    fn normalization_examples() {
        assert_eq!(
            normalize("Emilia is STILL angry.", OPTS),
            ["emilia", "is", "still", "angri"]
        );
        assert!(normalize("", OPTS).is_empty());
        assert_eq!(normalize("it's 6 pm", OPTS), ["it", "s", "6", "pm"]);
        let raw = RougeOptions {
            stem: false,
            keep_case: true,
        };
        assert_eq!(normalize("Still angry", raw), ["Still", "angry"]);
    }

    #[test]
    fn identical_and_disjoint() {
        for n in [1, 2] {
            assert_eq!(rouge_n("the cat sat", "the cat sat", n, OPTS).unwrap().f1, 1.0);
            assert_eq!(rouge_n("the cat sat", "dogs bark loud", n, OPTS).unwrap().f1, 0.0);
        }
        assert_eq!(rouge_l("the cat sat", "the cat sat", OPTS).f1, 1.0);
        assert_eq!(rouge_l("", "the cat sat", OPTS).f1, 0.0);
        assert_eq!(rouge_n("a", "a", 3, OPTS), Err(RougeError::UnsupportedOrder(3)));
    }

    #[test]
    fn hand_enumerated_abc_abd() {
        // unigrams {a,b,c} vs {a,b,d}: 2 shared; bigrams {ab,bc} vs {ab,bd}: 1 shared
        let r1 = rouge_n("a b c", "a b d", 1, OPTS).unwrap();
        assert!((r1.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r1.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((r1.f1 - 2.0 / 3.0).abs() < 1e-12);
        let r2 = rouge_n("a b c", "a b d", 2, OPTS).unwrap();
        assert_eq!((r2.precision, r2.recall, r2.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn lcs_example() {
        let l = rouge_l("a c b", "a b c", OPTS);
        assert!((l.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(lcs_len(&["a", "c", "b"], &["a", "b", "c"]), 2);
    }

    #[test]
    fn multi_reference_examples() {
        let single = rouge_multi("a b c", &["a b d"], OPTS).unwrap();
        assert_eq!(single, rouge_single("a b c", "a b d", OPTS));
        let dominated = rouge_multi("the cat sat", &["the cat sat", "zzz"], OPTS).unwrap();
        assert_eq!((dominated.r1.f1, dominated.r2.f1, dominated.rl.f1), (1.0, 1.0, 1.0));
        let half = rouge_multi("a b", &["a x", "b y"], OPTS).unwrap();
        assert_eq!(half.r1.f1, 0.5);
        assert_eq!(rouge_multi::<&str>("a", &[], OPTS), Err(RougeError::NoReferences));
    }

    #[test]
    fn clipping_limits_repeated_tokens() {
        let p = rouge_n("the the the", "the cat", 1, OPTS).unwrap();
        assert!((p.precision - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(p.recall, 0.5);
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..10)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn swap_exchanges_precision_and_recall(a in words(), b in words()) {
            let n = a.len().min(b.len());
            let (a, b) = (&a[..n], &b[..n]);
            let x = score_tokens(a, b);
            let y = score_tokens(b, a);
            for (p, q) in [(x.r1, y.r1), (x.r2, y.r2), (x.rl, y.rl)] {
                prop_assert_eq!(p.precision, q.recall);
                prop_assert_eq!(p.recall, q.precision);
                prop_assert!((p.f1 - q.f1).abs() < 1e-12);
            }
        }

        #[test]
        fn extra_reference_never_lowers_scores(c in words(), refs in prop::collection::vec(words(), 1..4), extra in words()) {
            let cand = c.join(" ");
            let refs: Vec<String> = refs.iter().map(|r| r.join(" ")).collect();
            let base = rouge_multi(&cand, &refs, OPTS).unwrap();
            let mut more = refs.clone();
            more.push(extra.join(" "));
            let grown = rouge_multi(&cand, &more, OPTS).unwrap();
            prop_assert!(grown.r1.f1 >= base.r1.f1);
            prop_assert!(grown.r2.f1 >= base.r2.f1);
            prop_assert!(grown.rl.f1 >= base.rl.f1);
        }

        #[test]
        fn scores_are_bounded(a in words(), b in words()) {
            let s = score_tokens(&a, &b);
            for p in [s.r1, s.r2, s.rl] {
                for v in [p.precision, p.recall, p.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
