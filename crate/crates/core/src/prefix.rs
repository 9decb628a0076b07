//! Decoder-prefix lengths for pseudo-paraphrase targets.
//!
//! The prefix is the number `a` of leading target tokens that are given to
//! the decoder and excluded from the loss. It is fixed when a dataset is
//! materialized and stored on each pair as `prefix_tokens`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotateError, Annotator, Pos, SentenceAnnotation};
use crate::pseudo_data::PseudoPair;
use crate::tokenizer::Tokenizer;

#[derive(Debug, Error)]
pub enum PrefixError {
    #[error("target too short to prefix ({tokens} tokens)")]
    TooShort { tokens: usize },
    #[error("invalid prefix policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
}

pub type Result<T> = std::result::Result<T, PrefixError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LingFeature {
    /// Common or proper noun.
    Noun,
    Verb,
    /// Syntactic root of the sentence.
    Root,
}

impl LingFeature {
    fn matches(self, pos: Pos, is_root: bool) -> bool {
        match self {
            LingFeature::Noun => matches!(pos, Pos::Noun | Pos::Propn),
            LingFeature::Verb => pos == Pos::Verb,
            LingFeature::Root => is_root,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrefixPolicy {
    /// No prefix.
    Wo,
    Const(usize),
    /// Uniform integer in `[lo, hi]`.
    Random {
        lo: usize,
        hi: usize,
    },
    Ling(LingFeature),
}

impl PrefixPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PrefixPolicy::Const(0) => Err(PrefixError::InvalidPolicy("const length must be at least 1".into())),
            PrefixPolicy::Random { lo, hi } if lo == 0 || lo > hi => Err(PrefixError::InvalidPolicy(format!(
                "random range [{lo}, {hi}] must satisfy 1 <= lo <= hi"
            ))),
            _ => Ok(()),
        }
    }

    /// Parses a `--prefix-policy` value, taking lengths from `profile`.
    pub fn from_flag(flag: &str, profile: &DatasetProfile) -> Result<Self> {
        let policy = match flag {
            "wo" => PrefixPolicy::Wo,
            "const" => PrefixPolicy::Const(profile.const_len),
            "random" => PrefixPolicy::Random {
                lo: profile.random_lo,
                hi: profile.random_hi,
            },
            "ling" => PrefixPolicy::Ling(profile.ling),
            "ling-noun" => PrefixPolicy::Ling(LingFeature::Noun),
            "ling-verb" => PrefixPolicy::Ling(LingFeature::Verb),
            "ling-root" => PrefixPolicy::Ling(LingFeature::Root),
            other => return Err(PrefixError::InvalidPolicy(format!("unknown policy `{other}`"))),
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// Per-dataset prefix lengths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub const_len: usize,
    pub random_lo: usize,
    pub random_hi: usize,
    pub ling: LingFeature,
}

impl DatasetProfile {
    pub const SAMSUM: DatasetProfile = DatasetProfile {
        const_len: 2,
        random_lo: 1,
        random_hi: 3,
        ling: LingFeature::Noun,
    };
    pub const DIALSUMM: DatasetProfile = DatasetProfile {
        const_len: 3,
        random_lo: 2,
        random_hi: 4,
        ling: LingFeature::Root,
    };

    pub fn named(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "samsum" => Some(Self::SAMSUM),
            "dialsumm" => Some(Self::DIALSUMM),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixAssignment {
    /// Prefix length in model tokens.
    pub a: usize,
    /// Whitespace words of the target covered by the prefix.
    pub source_words: usize,
    pub fallback_used: bool,
}

/// Number of leading whitespace words needed to cover `a` tokens.
fn words_covering(target: &str, tokenizer: &dyn Tokenizer, a: usize) -> usize {
    if a == 0 {
        return 0;
    }
    for (i, word) in target.split_whitespace().enumerate() {
        let end = word.as_ptr() as usize - target.as_ptr() as usize + word.len();
        if tokenizer.count(&target[..end]) >= a {
            return i + 1;
        }
    }
    target.split_whitespace().count()
}

/// Prefix length for one target.
///
/// `annotation` is the annotation of the target's first sentence, required
/// for [`PrefixPolicy::Ling`]. `fallback_len` is the constant used when no
/// word carries the requested feature.
pub fn assign_prefix(
    target: &str,
    annotation: Option<&SentenceAnnotation>,
    tokenizer: &dyn Tokenizer,
    policy: PrefixPolicy,
    fallback_len: usize,
    seed: u64,
) -> Result<PrefixAssignment> {
    policy.validate()?;
    let l = tokenizer.count(target);
    if policy == PrefixPolicy::Wo {
        return Ok(PrefixAssignment {
            a: 0,
            source_words: 0,
            fallback_used: false,
        });
    }
    if l < 2 {
        return Err(PrefixError::TooShort { tokens: l });
    }
    let clamp = |a: usize| a.min(l - 1);
    let from_len = |a: usize, fallback_used| {
        let a = clamp(a);
        PrefixAssignment {
            a,
            source_words: words_covering(target, tokenizer, a),
            fallback_used,
        }
    };
    Ok(match policy {
        PrefixPolicy::Wo => unreachable!(),
        PrefixPolicy::Const(k) => from_len(k, false),
        PrefixPolicy::Random { lo, hi } => from_len(ChaCha8Rng::seed_from_u64(seed).gen_range(lo..=hi), false),
        PrefixPolicy::Ling(feature) => {
            let sentence =
                annotation.ok_or_else(|| PrefixError::InvalidPolicy("linguistic policy needs an annotation".into()))?;
            match sentence.words.iter().position(|w| feature.matches(w.pos, w.is_root)) {
                Some(w) => {
                    let span = &sentence.text[..sentence.words[w].end];
                    let a = clamp(tokenizer.count(span));
                    PrefixAssignment {
                        a,
                        source_words: span.split_whitespace().count(),
                        fallback_used: false,
                    }
                }
                None => from_len(fallback_len, true),
            }
        }
    })
}

/// Seed for the pair at `index` under a run-level seed.
pub fn pair_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

/// Assigns and stores `prefix_tokens` on every pair. Returns how many pairs
/// fell back to the constant length.
///
/// Multi-sentence targets are prefixed according to their first sentence.
pub fn assign_pairs(
    pairs: &mut [PseudoPair],
    annotator: &dyn Annotator,
    tokenizer: &dyn Tokenizer,
    policy: PrefixPolicy,
    profile: &DatasetProfile,
    seed: u64,
) -> Result<usize> {
    let needs_annotation = matches!(policy, PrefixPolicy::Ling(_));
    let assigned: Vec<PrefixAssignment> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let first = if needs_annotation {
                annotator.annotate(&p.target)?.sentences.into_iter().next()
            } else {
                None
            };
            let empty;
            let annotation = match (&first, needs_annotation) {
                (Some(s), _) => Some(s),
                (None, true) => {
                    empty = SentenceAnnotation {
                        text: String::new(),
                        offset: 0,
                        words: Vec::new(),
                    };
                    Some(&empty)
                }
                (None, false) => None,
            };
            assign_prefix(
                &p.target,
                annotation,
                tokenizer,
                policy,
                profile.const_len,
                pair_seed(seed, i),
            )
        })
        .collect::<Result<_>>()?;
    let mut fallbacks = 0;
    for (p, a) in pairs.iter_mut().zip(assigned) {
        fallbacks += a.fallback_used as usize;
        p.prefix_tokens = Some(a.a);
    }
    Ok(fallbacks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefixStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Population mean and standard deviation of prefix lengths.
pub fn length_stats(lengths: &[usize]) -> Option<PrefixStats> {
    if lengths.is_empty() {
        return None;
    }
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<usize>() as f64 / n;
    let var = lengths.iter().map(|&a| (a as f64 - mean).powi(2)).sum::<f64>() / n;
    Some(PrefixStats {
        mean,
        std: var.sqrt(),
        count: lengths.len(),
    })
}

/// Statistics over the stored prefixes of `pairs` (missing ones count as 0).
pub fn prefix_stats(pairs: &[PseudoPair]) -> Option<PrefixStats> {
    let lengths: Vec<usize> = pairs.iter().map(|p| p.prefix_tokens.unwrap_or(0)).collect();
    length_stats(&lengths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::FallbackAnnotator;
    use crate::tokenizer::WordTokenizer;
    use proptest::prelude::*;

    const KATARINA: &str = "Katarina wants to rent a flat from Liz.";

    fn sentence(text: &str) -> SentenceAnnotation {
        FallbackAnnotator.annotate(text).unwrap().sentences.remove(0)
    }

    fn assign(text: &str, policy: PrefixPolicy, seed: u64) -> Result<PrefixAssignment> {
        assign_prefix(text, Some(&sentence(text)), &WordTokenizer::default(), policy, 2, seed)
    }

    #[test]
    fn linguistic_prefixes() {
        let noun = assign(KATARINA, PrefixPolicy::Ling(LingFeature::Noun), 0).unwrap();
        assert_eq!((noun.a, noun.source_words, noun.fallback_used), (1, 1, false));
        let root = assign(KATARINA, PrefixPolicy::Ling(LingFeature::Root), 0).unwrap();
        assert_eq!((root.a, root.source_words), (2, 2));
        let verb = assign(KATARINA, PrefixPolicy::Ling(LingFeature::Verb), 0).unwrap();
        assert_eq!(verb.a, 2);
    }

    #[test]
    fn missing_feature_falls_back() {
        let s = SentenceAnnotation {
            text: "x y z".into(),
            offset: 0,
            words: Vec::new(),
        };
        let a = assign_prefix(
            "x y z",
            Some(&s),
            &WordTokenizer::default(),
            PrefixPolicy::Ling(LingFeature::Noun),
            2,
            0,
        )
        .unwrap();
        assert_eq!((a.a, a.fallback_used), (2, true));
    }

    #[test]
    fn const_and_wo() {
        assert_eq!(assign(KATARINA, PrefixPolicy::Wo, 0).unwrap().a, 0);
        assert_eq!(assign(KATARINA, PrefixPolicy::Const(3), 0).unwrap().a, 3);
        assert_eq!(assign("Hi there", PrefixPolicy::Const(5), 0).unwrap().a, 1);
        assert!(matches!(
            assign("Hi", PrefixPolicy::Const(1), 0),
            Err(PrefixError::TooShort { tokens: 1 })
        ));
        assert_eq!(assign("Hi", PrefixPolicy::Wo, 0).unwrap().a, 0);
        assert!(PrefixPolicy::Const(0).validate().is_err());
        assert!(PrefixPolicy::Random { lo: 3, hi: 2 }.validate().is_err());
    }

    #[test]
    fn flags_use_profile_constants() {
        let p = DatasetProfile::DIALSUMM;
        assert_eq!(PrefixPolicy::from_flag("const", &p).unwrap(), PrefixPolicy::Const(3));
        assert_eq!(
            PrefixPolicy::from_flag("random", &p).unwrap(),
            PrefixPolicy::Random { lo: 2, hi: 4 }
        );
        assert_eq!(
            PrefixPolicy::from_flag("ling", &p).unwrap(),
            PrefixPolicy::Ling(LingFeature::Root)
        );
        assert_eq!(
            PrefixPolicy::from_flag("ling", &DatasetProfile::SAMSUM).unwrap(),
            PrefixPolicy::Ling(LingFeature::Noun)
        );
        assert!(PrefixPolicy::from_flag("soft", &p).is_err());
    }

    #[test]
    fn stats_are_population_moments() {
        let s = length_stats(&[1, 3]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        let c = length_stats(&[2, 2, 2]).unwrap();
        assert_eq!((c.mean, c.std), (2.0, 0.0));
        assert!(length_stats(&[]).is_none());
    }

    #[test]
    fn assign_pairs_stores_prefixes() {
        let mut pairs =
            crate::pseudo_data::build_dialsent(&[crate::synthetic::worked_example()], &FallbackAnnotator).unwrap();
        let fallbacks = assign_pairs(
            &mut pairs,
            &FallbackAnnotator,
            &WordTokenizer::default(),
            PrefixPolicy::Ling(LingFeature::Noun),
            &DatasetProfile::SAMSUM,
            0,
        )
        .unwrap();
        assert_eq!(fallbacks, 0);
        assert_eq!(
            pairs.iter().map(|p| p.prefix_tokens).collect::<Vec<_>>(),
            [Some(1), Some(1)]
        );
    }

    #[test]
    fn random_is_uniform_across_seeds() {
        let (lo, hi) = (1usize, 3usize);
        let draws = 10_000;
        let mut counts = [0usize; 3];
        for seed in 0..draws {
            let a = assign(KATARINA, PrefixPolicy::Random { lo, hi }, pair_seed(7, seed as usize))
                .unwrap()
                .a;
            counts[a - lo] += 1;
        }
        let p = 1.0 / 3.0;
        let expected = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    fn target_strategy() -> impl Strategy<Value = String> {
        let word = prop::sample::select(vec![
            "Anna", "will", "bring", "the", "cake", "to", "Bob", "tomorrow", ".",
        ]);
        prop::collection::vec(word, 1..12).prop_map(|w| w.join(" "))
    }

    fn any_policy() -> impl Strategy<Value = PrefixPolicy> {
        prop_oneof![
            Just(PrefixPolicy::Wo),
            (1usize..6).prop_map(PrefixPolicy::Const),
            (1usize..4, 0usize..3).prop_map(|(lo, d)| PrefixPolicy::Random { lo, hi: lo + d }),
            prop::sample::select(vec![LingFeature::Noun, LingFeature::Verb, LingFeature::Root])
                .prop_map(PrefixPolicy::Ling),
        ]
    }

    proptest! {
        #[test]
        fn prefix_leaves_a_supervised_token(target in target_strategy(), policy in any_policy(), seed in any::<u64>()) {
            let l = WordTokenizer::default().count(&target);
            match assign(&target, policy, seed) {
                Ok(a) => prop_assert!(a.a < l.max(1)),
                Err(PrefixError::TooShort { tokens }) => prop_assert!(tokens < 2),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn random_is_reproducible(seed in any::<u64>()) {
            let p = PrefixPolicy::Random { lo: 1, hi: 3 };
            prop_assert_eq!(assign(KATARINA, p, seed).unwrap(), assign(KATARINA, p, seed).unwrap());
        }

        #[test]
        fn ling_ignores_trailing_whitespace(target in target_strategy(), pad in "[ \t\n]{0,4}") {
            for f in [LingFeature::Noun, LingFeature::Verb, LingFeature::Root] {
                let padded = format!("{target}{pad}");
                let a = assign(&target, PrefixPolicy::Ling(f), 0).ok();
                let b = assign(&padded, PrefixPolicy::Ling(f), 0).ok();
                prop_assert_eq!(a, b);
            }
        }
    }
}
