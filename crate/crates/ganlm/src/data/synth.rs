//! Synthetic review corpus with tunable class separability.
//!
//! Each class samples tokens from a shared unigram profile, but with
//! probability `marker_rate` a position instead emits one of the class's
//! exclusive marker tokens. The marker rate therefore controls how
//! separable the classes are: 0 with identical profiles means
//! indistinguishable, 1 means every token gives the class away.

use crate::error::{Error, Result};
use crate::tensor::Rng;

use super::{Corpus, Review};

/// Unigram profile of one class over the shared vocabulary, plus its
/// exclusive marker tokens.
#[derive(Debug, Clone)]
pub struct ClassProfile {
    pub name: String,
    pub token_weights: Vec<f64>,
    pub markers: Vec<String>,
    pub marker_rate: f64,
}

/// Standard benchmark setup: `shared_vocab_size` shared tokens under a
/// Zipf profile identical across classes, `n_markers` exclusive markers per
/// class. Class names default to the fake/authentic pair.
pub fn benchmark_profiles(
    class_names: &[String],
    shared_vocab_size: usize,
    n_markers: usize,
    marker_rate: f64,
) -> (Vec<String>, Vec<ClassProfile>) {
    let shared_vocab: Vec<String> = (0..shared_vocab_size).map(|i| format!("w{i}")).collect();
    let weights: Vec<f64> = (0..shared_vocab_size)
        .map(|i| 1.0 / (i + 1) as f64)
        .collect();
    let profiles = class_names
        .iter()
        .map(|name| ClassProfile {
            name: name.clone(),
            token_weights: weights.clone(),
            markers: (0..n_markers).map(|j| format!("{name}mark{j}")).collect(),
            marker_rate,
        })
        .collect();
    (shared_vocab, profiles)
}

/// Sample `n_per_class` texts of `text_len` tokens for every profile.
pub fn generate_synthetic_corpus(
    rng: &mut Rng,
    n_per_class: usize,
    text_len: usize,
    shared_vocab: &[String],
    profiles: &[ClassProfile],
) -> Result<Corpus> {
    if profiles.len() < 2 {
        return Err(Error::Config {
            msg: format!("need at least 2 class profiles, got {}", profiles.len()),
        });
    }
    let mut cumulatives = Vec::with_capacity(profiles.len());
    for profile in profiles {
        if profile.token_weights.len() != shared_vocab.len() {
            return Err(Error::Config {
                msg: format!(
                    "profile {:?} has {} weights for a shared vocabulary of {}",
                    profile.name,
                    profile.token_weights.len(),
                    shared_vocab.len()
                ),
            });
        }
        if !(0.0..=1.0).contains(&profile.marker_rate) {
            return Err(Error::Config {
                msg: format!(
                    "profile {:?} marker_rate {} outside [0, 1]",
                    profile.name, profile.marker_rate
                ),
            });
        }
        if profile.marker_rate > 0.0 && profile.markers.is_empty() {
            return Err(Error::Config {
                msg: format!("profile {:?} has marker_rate > 0 but no markers", profile.name),
            });
        }
        let mut cumulative = Vec::with_capacity(profile.token_weights.len());
        let mut total = 0.0;
        for &w in &profile.token_weights {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::Config {
                    msg: format!("profile {:?} has an invalid weight {w}", profile.name),
                });
            }
            total += w;
            cumulative.push(total);
        }
        if total <= 0.0 {
            return Err(Error::Config {
                msg: format!("profile {:?} has all-zero token probabilities", profile.name),
            });
        }
        cumulatives.push(cumulative);
    }

    let mut reviews = Vec::with_capacity(profiles.len() * n_per_class);
    for (p, profile) in profiles.iter().enumerate() {
        let cumulative = &cumulatives[p];
        let total = *cumulative.last().unwrap();
        for i in 0..n_per_class {
            let mut tokens = Vec::with_capacity(text_len);
            for _ in 0..text_len {
                if profile.marker_rate > 0.0 && rng.next_f64() < profile.marker_rate {
                    tokens.push(profile.markers[rng.next_below(profile.markers.len())].as_str());
                } else {
                    let u = rng.next_f64() * total;
                    let idx = cumulative.partition_point(|&c| c <= u);
                    tokens.push(shared_vocab[idx.min(shared_vocab.len() - 1)].as_str());
                }
            }
            reviews.push(Review {
                id: format!("{}-{i:05}", profile.name),
                text: tokens.join(" "),
                label: Some(profile.name.clone()),
            });
        }
    }
    Ok(Corpus { reviews })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn classes() -> Vec<String> {
        vec!["fake".into(), "authentic".into()]
    }

    #[test]
    fn count_contract_and_balance() {
        let (vocab, profiles) = benchmark_profiles(&classes(), 50, 4, 0.3);
        let mut rng = Rng::new(1);
        let corpus = generate_synthetic_corpus(&mut rng, 100, 16, &vocab, &profiles).unwrap();
        assert_eq!(corpus.len(), 200);
        let fakes = corpus
            .reviews
            .iter()
            .filter(|r| r.label.as_deref() == Some("fake"))
            .count();
        assert_eq!(fakes, 100);
    }

    #[test]
    fn marker_rate_one_is_perfectly_separable_by_counting() {
        let (vocab, profiles) = benchmark_profiles(&classes(), 50, 4, 1.0);
        let mut rng = Rng::new(2);
        let corpus = generate_synthetic_corpus(&mut rng, 50, 16, &vocab, &profiles).unwrap();

        // counting oracle: learn per-class token counts, classify by argmax
        let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
        for r in &corpus.reviews {
            let label = r.label.as_deref().unwrap();
            for token in r.text.split(' ') {
                *counts.entry((label, token)).or_insert(0) += 1;
            }
        }
        let mut correct = 0;
        for r in &corpus.reviews {
            let mut best = ("", usize::MIN);
            for class in ["fake", "authentic"] {
                let score: usize = r
                    .text
                    .split(' ')
                    .map(|t| counts.get(&(class, t)).copied().unwrap_or(0))
                    .sum();
                if score > best.1 {
                    best = (class, score);
                }
            }
            if Some(best.0) == r.label.as_deref() {
                correct += 1;
            }
        }
        assert_eq!(correct, corpus.len());
    }

    #[test]
    fn marker_rate_zero_identical_profiles_share_vocabulary() {
        let (vocab, profiles) = benchmark_profiles(&classes(), 30, 4, 0.0);
        let mut rng = Rng::new(3);
        let corpus = generate_synthetic_corpus(&mut rng, 20, 16, &vocab, &profiles).unwrap();
        // with rate 0, no marker token ever appears
        for r in &corpus.reviews {
            assert!(r.text.split(' ').all(|t| t.starts_with('w')), "{}", r.text);
        }
    }

    #[test]
    fn degenerate_profile_is_config_error() {
        let (vocab, mut profiles) = benchmark_profiles(&classes(), 10, 2, 0.5);
        profiles[1].token_weights = vec![0.0; 10];
        profiles[1].marker_rate = 0.0;
        let mut rng = Rng::new(4);
        let err = generate_synthetic_corpus(&mut rng, 5, 8, &vocab, &profiles).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn single_profile_is_rejected() {
        let (vocab, profiles) = benchmark_profiles(&classes()[..1].to_vec(), 10, 2, 0.5);
        let mut rng = Rng::new(5);
        assert!(generate_synthetic_corpus(&mut rng, 5, 8, &vocab, &profiles).is_err());
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let (vocab, profiles) = benchmark_profiles(&classes(), 20, 3, 0.4);
        let gen = |seed| {
            let mut rng = Rng::new(seed);
            generate_synthetic_corpus(&mut rng, 10, 12, &vocab, &profiles).unwrap()
        };
        let (a, b) = (gen(7), gen(7));
        assert_eq!(a.reviews, b.reviews);
    }
}
