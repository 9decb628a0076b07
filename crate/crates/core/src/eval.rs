//! Scoring, extractive baselines, compression-ratio buckets, significance
//! tests and human-evaluation agreement.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::corpus::{serialize_dialogue, word_count, Dialogue, Sample};
use crate::rouge::{rouge_multi, RougeOptions, RougeScore};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{what}: {left} vs {right} entries")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("need at least {0} paired values")]
    TooFew(usize),
    #[error("bucket edges must be strictly increasing")]
    BadEdges,
    #[error("sample {sample} has {got} ratings, expected {expected}")]
    UnequalRaters {
        sample: String,
        got: usize,
        expected: usize,
    },
    #[error("invalid human score {0}; expected -2, 0 or 2")]
    BadScore(i32),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// The first three turns.
pub fn lead3(d: &Dialogue) -> String {
    let n = d.len().min(3);
    serialize_dialogue(&d.select(&(0..n).collect::<Vec<_>>()))
}

/// The three turns with the most words, kept in dialogue order. Ties go to
/// the earlier turn.
pub fn longest3(d: &Dialogue) -> String {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(word_count(&d.turns[i].text)));
    let mut keep: Vec<usize> = order.into_iter().take(3).collect();
    keep.sort_unstable();
    serialize_dialogue(&d.select(&keep))
}

/// Per-sample compression ratio: mean reference words over dialogue words.
pub fn sample_cr(s: &Sample) -> f64 {
    let iw = word_count(&serialize_dialogue(&s.dialogue)).max(1) as f64;
    let ow = s.references.iter().map(|r| word_count(r) as f64).sum::<f64>() / s.references.len().max(1) as f64;
    ow / iw
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub score: RougeScore,
    pub cr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// Inclusive lower edge; `None` for the open-ended first bucket.
    pub lo: Option<f64>,
    /// Exclusive upper edge; `None` for the open-ended last bucket.
    pub hi: Option<f64>,
    pub count: usize,
    pub mean_rouge2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub baseline: String,
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean: RougeScore,
    pub samples: Vec<SampleScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buckets: Vec<Bucket>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub significance: Option<Significance>,
}

impl EvalReport {
    pub fn rouge2(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.score.r2.f1).collect()
    }
}

/// Scores line-aligned candidates against every reference of each sample.
pub fn evaluate<S: AsRef<str> + Sync>(candidates: &[S], samples: &[Sample], opts: RougeOptions) -> Result<EvalReport> {
    if candidates.len() != samples.len() {
        return Err(EvalError::LengthMismatch {
            what: "candidates vs samples",
            left: candidates.len(),
            right: samples.len(),
        });
    }
    let scored: Vec<SampleScore> = candidates
        .par_iter()
        .zip(samples.par_iter())
        .map(|(c, s)| SampleScore {
            id: s.id().to_string(),
            score: rouge_multi(c.as_ref(), &s.references, opts).expect("samples have references"),
            cr: sample_cr(s),
        })
        .collect();
    let per: Vec<RougeScore> = scored.iter().map(|s| s.score).collect();
    Ok(EvalReport {
        mean: RougeScore::mean(&per),
        samples: scored,
        buckets: Vec::new(),
        significance: None,
    })
}

/// Mean ROUGE-2 F1 per compression-ratio bucket. With edges `e0 < e1 < ...`
/// the buckets are `(-inf, e0)`, `[e0, e1)`, ..., `[ek, inf)`; empty buckets
/// are left out.
pub fn cr_buckets(report: &EvalReport, edges: &[f64]) -> Result<Vec<Bucket>> {
    if edges.windows(2).any(|w| w[0] >= w[1]) || edges.iter().any(|e| !e.is_finite()) {
        return Err(EvalError::BadEdges);
    }
    let mut sums = vec![(0usize, 0.0f64); edges.len() + 1];
    for s in &report.samples {
        let b = edges.partition_point(|&e| e <= s.cr);
        sums[b].0 += 1;
        sums[b].1 += s.score.r2.f1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .filter(|(_, (n, _))| *n > 0)
        .map(|(b, (n, total))| Bucket {
            lo: b.checked_sub(1).map(|i| edges[i]),
            hi: edges.get(b).copied(),
            count: n,
            mean_rouge2: total / n as f64,
        })
        .collect())
}

/// Decile cut points of `values` (deduplicated, strictly increasing).
pub fn decile_edges(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..10)
        .map(|k| {
            let pos = k as f64 / 10.0 * (n - 1) as f64;
            let (lo, frac) = (pos.floor() as usize, pos.fract());
            sorted[lo] + frac * (sorted[(lo + 1).min(n - 1)] - sorted[lo])
        })
        .collect();
    edges.dedup();
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Two-sided paired t-test on `a - b`.
///
/// Zero-variance differences give `p = 1` when all are zero and `p = 0`
/// otherwise (with an infinite `t`).
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            what: "paired scores",
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(EvalError::TooFew(2));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = a.len() - 1;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest {
                t: 0.0,
                df,
                p_value: 1.0,
            }
        } else {
            TTest {
                t: mean.signum() * f64::INFINITY,
                df,
                p_value: 0.0,
            }
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTest {
        t,
        df,
        p_value: p.clamp(0.0, 1.0),
    })
}

/// Fleiss' kappa over items each rated by the same number of raters.
/// Perfect agreement with chance agreement 1 is reported as 1.
pub fn fleiss_kappa<C: Eq + Hash + Clone>(items: &[Vec<C>]) -> Result<f64> {
    let n = match items.first() {
        Some(first) => first.len(),
        None => return Err(EvalError::TooFew(1)),
    };
    if n < 2 {
        return Err(EvalError::TooFew(2));
    }
    for (i, it) in items.iter().enumerate() {
        if it.len() != n {
            return Err(EvalError::UnequalRaters {
                sample: i.to_string(),
                got: it.len(),
                expected: n,
            });
        }
    }
    let big_n = items.len() as f64;
    let nf = n as f64;
    let mut totals: HashMap<C, f64> = HashMap::new();
    let mut p_bar = 0.0;
    for it in items {
        let mut counts: HashMap<&C, f64> = HashMap::new();
        for c in it {
            *counts.entry(c).or_default() += 1.0;
            *totals.entry(c.clone()).or_default() += 1.0;
        }
        p_bar += counts.values().map(|k| k * (k - 1.0)).sum::<f64>() / (nf * (nf - 1.0));
    }
    p_bar /= big_n;
    let p_e: f64 = totals.values().map(|t| (t / (big_n * nf)).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// One annotator's judgement of one summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanRecord {
    pub sample_id: String,
    pub annotator: String,
    pub score: i32,
    pub mis: bool,
    pub red: bool,
    pub cor: bool,
    pub rea: bool,
}

impl HumanRecord {
    pub fn check(&self) -> Result<()> {
        match self.score {
            -2 | 0 | 2 => Ok(()),
            s => Err(EvalError::BadScore(s)),
        }
    }
}

/// `(Mis or Red, Cor or Rea)`.
pub fn merge_error_flags(r: &HumanRecord) -> (bool, bool) {
    (r.mis || r.red, r.cor || r.rea)
}

/// True when at least half (rounded up) of the flags are set.
pub fn majority(flags: &[bool]) -> bool {
    !flags.is_empty() && flags.iter().filter(|f| **f).count() >= flags.len().div_ceil(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanReport {
    pub n_samples: usize,
    pub raters_per_sample: usize,
    pub mean_score: f64,
    /// Share of samples whose error was confirmed by majority vote.
    pub error_rates: BTreeMap<String, f64>,
    pub kappa_score: f64,
    pub kappa_misred: f64,
    pub kappa_correa: f64,
}

/// Groups records by sample and computes mean score, majority-vote error
/// rates and Fleiss' kappa for the score and the merged error flags.
pub fn aggregate_human(records: &[HumanRecord]) -> Result<HumanReport> {
    let mut by_sample: BTreeMap<&str, Vec<&HumanRecord>> = BTreeMap::new();
    for r in records {
        r.check()?;
        by_sample.entry(&r.sample_id).or_default().push(r);
    }
    let n = by_sample.values().next().map_or(0, Vec::len);
    for (id, rs) in &by_sample {
        if rs.len() != n {
            return Err(EvalError::UnequalRaters {
                sample: id.to_string(),
                got: rs.len(),
                expected: n,
            });
        }
    }
    let groups: Vec<&Vec<&HumanRecord>> = by_sample.values().collect();
    let kappa = |f: &dyn Fn(&HumanRecord) -> i32| {
        let items: Vec<Vec<i32>> = groups.iter().map(|g| g.iter().map(|r| f(r)).collect()).collect();
        fleiss_kappa(&items)
    };
    type Flag = (&'static str, fn(&HumanRecord) -> bool);
    let flags: [Flag; 6] = [
        ("mis", |r| r.mis),
        ("red", |r| r.red),
        ("cor", |r| r.cor),
        ("rea", |r| r.rea),
        ("misred", |r| merge_error_flags(r).0),
        ("correa", |r| merge_error_flags(r).1),
    ];
    let error_rates = flags
        .iter()
        .map(|(name, f)| {
            let hits = groups
                .iter()
                .filter(|g| majority(&g.iter().map(|r| f(r)).collect::<Vec<_>>()))
                .count();
            (name.to_string(), hits as f64 / groups.len().max(1) as f64)
        })
        .collect();
    Ok(HumanReport {
        n_samples: groups.len(),
        raters_per_sample: n,
        mean_score: records.iter().map(|r| r.score as f64).sum::<f64>() / records.len().max(1) as f64,
        error_rates,
        kappa_score: kappa(&|r| r.score)?,
        kappa_misred: kappa(&|r| merge_error_flags(r).0 as i32)?,
        kappa_correa: kappa(&|r| merge_error_flags(r).1 as i32)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dialogue(lens: &[usize]) -> Dialogue {
        Dialogue::new(
            "d",
            lens.iter()
                .enumerate()
                .map(|(i, &n)| Utterance::new(format!("S{i}"), vec!["w"; n].join(" ")))
                .collect(),
        )
    }

    fn sample(dialogue_text: &str, refs: &[&str]) -> Sample {
        Sample {
            dialogue: Dialogue::new("x", vec![Utterance::new("A", dialogue_text)]),
            references: refs.iter().map(|r| r.to_string()).collect(),
        }
    }

    #[test]
    fn baselines() {
        let two = dialogue(&[1, 2]);
        assert_eq!(lead3(&two), serialize_dialogue(&two));
        assert_eq!(longest3(&two), serialize_dialogue(&two));
        let four = dialogue(&[5, 9, 2, 7]);
        assert_eq!(longest3(&four), serialize_dialogue(&four.select(&[0, 1, 3])));
        assert_eq!(lead3(&four), serialize_dialogue(&four.select(&[0, 1, 2])));
        let ties = dialogue(&[2, 2, 2, 2]);
        assert_eq!(longest3(&ties), serialize_dialogue(&ties.select(&[0, 1, 2])));
    }

    #[test]
    fn perfect_candidates_and_max_over_references() {
        let samples = vec![
            sample("hello there friend", &["we meet at noon"]),
            sample("x y z", &["first one", "second reference here"]),
        ];
        let perfect: Vec<String> = samples.iter().map(|s| s.summary().to_string()).collect();
        let r = evaluate(&perfect, &samples, RougeOptions::default()).unwrap();
        assert_eq!((r.mean.r1.f1, r.mean.r2.f1, r.mean.rl.f1), (1.0, 1.0, 1.0));
        let second = evaluate(&["second reference here"], &samples[1..], RougeOptions::default()).unwrap();
        assert_eq!(second.mean.r2.f1, 1.0);
        assert!(evaluate(&["a"], &samples, RougeOptions::default()).is_err());
    }

    #[test]
    fn single_sample_passthrough() {
        let s = sample("whatever", &["the cat sat on the mat"]);
        let r = evaluate(&["the cat sat"], std::slice::from_ref(&s), RougeOptions::default()).unwrap();
        let direct = rouge_multi("the cat sat", &s.references, RougeOptions::default()).unwrap();
        assert_eq!(r.mean, direct);
        assert_eq!(r.samples[0].score, direct);
    }

    fn report_with(crs: &[(f64, f64)]) -> EvalReport {
        let samples = crs
            .iter()
            .map(|&(cr, r2)| {
                let mut score = RougeScore::default();
                score.r2.f1 = r2;
                SampleScore {
                    id: String::new(),
                    score,
                    cr,
                }
            })
            .collect::<Vec<_>>();
        let per: Vec<RougeScore> = samples.iter().map(|s| s.score).collect();
        EvalReport {
            mean: RougeScore::mean(&per),
            samples,
            buckets: Vec::new(),
            significance: None,
        }
    }

    #[test]
    fn buckets() {
        let r = report_with(&[(0.1, 0.2), (0.5, 0.6)]);
        let all = cr_buckets(&r, &[]).unwrap();
        assert_eq!(all.len(), 1);
        assert!((all[0].mean_rouge2 - r.mean.r2.f1).abs() < 1e-15);
        let split = cr_buckets(&r, &[0.3]).unwrap();
        assert_eq!(split.len(), 2);
        assert_eq!((split[0].count, split[0].hi, split[1].lo), (1, Some(0.3), Some(0.3)));
        assert_eq!(cr_buckets(&r, &[0.05, 0.3, 0.4, 0.9]).unwrap().len(), 2);
        assert_eq!(cr_buckets(&r, &[0.3, 0.3]), Err(EvalError::BadEdges));
        let edges = decile_edges(&(0..=100).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(edges, (1..10).map(|k| k as f64 * 10.0).collect::<Vec<_>>());
    }

    #[test]
    fn ttest_against_reference_values() {
        // d = [-1, 0, -1, 0, -1]: mean -0.6, sd sqrt(0.3), t = -0.6 / sqrt(0.06).
        let r = paired_ttest(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 2.0, 4.0, 4.0, 6.0]).unwrap();
        assert!((r.t - (-0.6 / 0.06f64.sqrt())).abs() < 1e-12);
        assert_eq!(r.df, 4);
        // Two-sided tail of Student's t with 4 df at |t| = sqrt(6):
        // p = 1 - I_{x}(1/2, 2) with x = t^2 / (t^2 + 4) = 0.6, closed form
        // 1 - sqrt(x) * (3 - x) / 2.
        let x: f64 = 0.6;
        let p = 1.0 - x.sqrt() * (3.0 - x) / 2.0;
        assert!((r.p_value - p).abs() < 1e-6, "{} vs {p}", r.p_value);
        assert!((r.p_value - 0.070_484_823_6).abs() < 1e-6);
    }

    #[test]
    fn ttest_degenerate_cases() {
        assert_eq!(paired_ttest(&[1.0, 2.0], &[1.0, 2.0]).unwrap().p_value, 1.0);
        assert_eq!(paired_ttest(&[2.0; 4], &[1.0; 4]).unwrap().p_value, 0.0);
        assert!(paired_ttest(&[1.0], &[1.0]).is_err());
        assert!(paired_ttest(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn kappa_cases() {
        assert_eq!(fleiss_kappa(&[vec!["A", "A"], vec!["B", "B"]]).unwrap(), 1.0);
        assert_eq!(fleiss_kappa(&[vec!["A", "A"], vec!["A", "A"]]).unwrap(), 1.0);
        let k = fleiss_kappa(&[vec!["A", "A"], vec!["A", "B"]]).unwrap();
        assert!((k - (-1.0 / 3.0)).abs() < 1e-12);
        assert!(fleiss_kappa(&[vec!["A", "A"], vec!["A"]]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let random: Vec<Vec<u8>> = (0..10_000)
            .map(|_| (0..3).map(|_| rng.gen_range(0..3)).collect())
            .collect();
        assert!(fleiss_kappa(&random).unwrap().abs() < 0.05);
    }

    #[test]
    fn error_flags_and_majority() {
        let rec = |mis, red, cor, rea| HumanRecord {
            sample_id: "s".into(),
            annotator: "a".into(),
            score: 0,
            mis,
            red,
            cor,
            rea,
        };
        assert_eq!(merge_error_flags(&rec(false, false, false, false)), (false, false));
        assert_eq!(merge_error_flags(&rec(true, false, false, true)), (true, true));
        assert_eq!(merge_error_flags(&rec(false, true, true, false)), (true, true));
        assert!(majority(&[true, true, false]));
        assert!(!majority(&[true, false, false]));
        assert!(majority(&[true, false]));
        assert!(!majority(&[]));
    }

    #[test]
    fn human_aggregation() {
        let mk = |s: &str, a: &str, score, mis| HumanRecord {
            sample_id: s.into(),
            annotator: a.into(),
            score,
            mis,
            red: false,
            cor: false,
            rea: false,
        };
        let records = vec![
            mk("1", "a", 2, true),
            mk("1", "b", 2, true),
            mk("1", "c", 0, false),
            mk("2", "a", -2, false),
            mk("2", "b", -2, false),
            mk("2", "c", -2, true),
        ];
        let r = aggregate_human(&records).unwrap();
        assert_eq!((r.n_samples, r.raters_per_sample), (2, 3));
        assert_eq!(r.error_rates["mis"], 0.5);
        assert_eq!(r.error_rates["misred"], 0.5);
        assert!((r.mean_score - (-2.0 / 6.0)).abs() < 1e-12);
        let bad = vec![mk("1", "a", 1, false)];
        assert_eq!(aggregate_human(&bad), Err(EvalError::BadScore(1)));
    }

    proptest! {
        #[test]
        fn kappa_ignores_labels(items in prop::collection::vec(prop::collection::vec(0u8..3, 3), 1..30)) {
            let relabeled: Vec<Vec<u8>> = items.iter().map(|it| it.iter().map(|c| (c + 1) % 3 + 10).collect()).collect();
            let a = fleiss_kappa(&items).unwrap();
            let b = fleiss_kappa(&relabeled).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn ttest_is_shift_invariant(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..20), c in -10.0f64..10.0) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let sa: Vec<f64> = a.iter().map(|x| x + c).collect();
            let sb: Vec<f64> = b.iter().map(|x| x + c).collect();
            let x = paired_ttest(&a, &b).unwrap();
            let y = paired_ttest(&sa, &sb).unwrap();
            prop_assert!((x.p_value - y.p_value).abs() < 1e-6);
        }

        #[test]
        fn corpus_mean_is_permutation_invariant(scores in prop::collection::vec(0.0f64..1.0, 1..20), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let r = report_with(&scores.iter().map(|&s| (0.1, s)).collect::<Vec<_>>());
            let mut shuffled = scores.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let s = report_with(&shuffled.iter().map(|&s| (0.1, s)).collect::<Vec<_>>());
            prop_assert!((r.mean.r2.f1 - s.mean.r2.f1).abs() < 1e-12);
            prop_assert!((r.mean.r2.f1 - scores.iter().sum::<f64>() / scores.len() as f64).abs() < 1e-12);
        }

        #[test]
        fn baselines_are_turn_subsets(lens in prop::collection::vec(1usize..8, 1..10)) {
            let d = dialogue(&lens);
            let full = serialize_dialogue(&d);
            for out in [lead3(&d), longest3(&d)] {
                for line in out.lines() {
                    prop_assert!(full.lines().any(|l| l == line));
                }
                prop_assert_eq!(out.lines().count(), lens.len().min(3));
            }
        }
    }
}
