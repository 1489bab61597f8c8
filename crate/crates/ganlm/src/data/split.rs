//! Seeded, stratified labeled/unlabeled/test partitioning.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Rng;

use super::{Corpus, Review};

/// Requested sizes and sampling controls for a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(n_labeled: usize, n_unlabeled: usize, n_test: usize, seed: u64) -> Self {
        SplitSpec {
            n_labeled,
            n_unlabeled,
            n_test,
            seed,
            stratified: true,
        }
    }
}

/// Disjoint labeled / unlabeled / test parts. Unlabeled reviews have their
/// labels erased at construction so downstream code cannot peek.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub labeled: Vec<Review>,
    pub unlabeled: Vec<Review>,
    pub test: Vec<Review>,
}

/// Draw a split: shuffle by seed, draw labeled and test stratified by label
/// proportion (when enabled), then fill the unlabeled part from the
/// remainder with labels erased.
pub fn make_split(corpus: &Corpus, spec: &SplitSpec, classes: &[String]) -> Result<DataSplit> {
    let total_requested = spec.n_labeled + spec.n_unlabeled + spec.n_test;
    if total_requested > corpus.len() {
        return Err(Error::Capacity {
            msg: format!(
                "requested {} + {} + {} = {} samples, corpus has {}",
                spec.n_labeled,
                spec.n_unlabeled,
                spec.n_test,
                total_requested,
                corpus.len()
            ),
        });
    }

    let mut rng = Rng::new(spec.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    rng.shuffle(&mut order);

    let labeled_pool: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| corpus.reviews[i].label.is_some())
        .collect();
    if labeled_pool.len() < spec.n_labeled + spec.n_test {
        return Err(Error::Capacity {
            msg: format!(
                "labeled+test need {} labeled records, corpus has {} (short by {})",
                spec.n_labeled + spec.n_test,
                labeled_pool.len(),
                spec.n_labeled + spec.n_test - labeled_pool.len()
            ),
        });
    }

    let mut taken = vec![false; corpus.len()];
    let labeled_idx;
    let test_idx;
    if spec.stratified {
        let proportions = class_counts(corpus, classes, &labeled_pool);
        labeled_idx = draw_stratified(
            corpus,
            classes,
            &labeled_pool,
            &mut taken,
            spec.n_labeled,
            &proportions,
            "labeled",
        )?;
        test_idx = draw_stratified(
            corpus,
            classes,
            &labeled_pool,
            &mut taken,
            spec.n_test,
            &proportions,
            "test",
        )?;
    } else {
        labeled_idx = draw_sequential(&labeled_pool, &mut taken, spec.n_labeled);
        test_idx = draw_sequential(&labeled_pool, &mut taken, spec.n_test);
    }

    let unlabeled_idx: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| !taken[i])
        .take(spec.n_unlabeled)
        .collect();
    if unlabeled_idx.len() < spec.n_unlabeled {
        return Err(Error::Capacity {
            msg: format!(
                "unlabeled part needs {} records, only {} remain after labeled/test draws",
                spec.n_unlabeled,
                unlabeled_idx.len()
            ),
        });
    }

    Ok(DataSplit {
        labeled: labeled_idx
            .iter()
            .map(|&i| corpus.reviews[i].clone())
            .collect(),
        unlabeled: unlabeled_idx
            .iter()
            .map(|&i| Review {
                label: None,
                ..corpus.reviews[i].clone()
            })
            .collect(),
        test: test_idx
            .iter()
            .map(|&i| corpus.reviews[i].clone())
            .collect(),
    })
}

fn class_counts(corpus: &Corpus, classes: &[String], pool: &[usize]) -> Vec<usize> {
    let mut counts = vec![0usize; classes.len()];
    let index: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    for &i in pool {
        if let Some(label) = &corpus.reviews[i].label {
            if let Some(&c) = index.get(label.as_str()) {
                counts[c] += 1;
            }
        }
    }
    counts
}

/// Largest-remainder allocation of `n` over class proportions, ties broken
/// by class declaration order.
fn allocate(n: usize, proportions: &[usize]) -> Vec<usize> {
    let total: usize = proportions.iter().sum();
    if total == 0 {
        return vec![0; proportions.len()];
    }
    let exact: Vec<f64> = proportions
        .iter()
        .map(|&p| n as f64 * p as f64 / total as f64)
        .collect();
    let mut alloc: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
    let mut remaining = n - alloc.iter().sum::<usize>();
    let mut by_frac: Vec<usize> = (0..proportions.len()).collect();
    by_frac.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in by_frac.iter().cycle() {
        if remaining == 0 {
            break;
        }
        alloc[c] += 1;
        remaining -= 1;
    }
    alloc
}

fn draw_stratified(
    corpus: &Corpus,
    classes: &[String],
    pool: &[usize],
    taken: &mut [bool],
    n: usize,
    proportions: &[usize],
    part: &str,
) -> Result<Vec<usize>> {
    let quota = allocate(n, proportions);
    let mut picked = Vec::with_capacity(n);
    for (c, class) in classes.iter().enumerate() {
        let mut need = quota[c];
        for &i in pool {
            if need == 0 {
                break;
            }
            if !taken[i] && corpus.reviews[i].label.as_deref() == Some(class.as_str()) {
                taken[i] = true;
                picked.push(i);
                need -= 1;
            }
        }
        if need > 0 {
            return Err(Error::Capacity {
                msg: format!(
                    "{part} part: class {class:?} short by {need} of {} requested",
                    quota[c]
                ),
            });
        }
    }
    Ok(picked)
}

fn draw_sequential(pool: &[usize], taken: &mut [bool], n: usize) -> Vec<usize> {
    let mut picked = Vec::with_capacity(n);
    for &i in pool {
        if picked.len() == n {
            break;
        }
        if !taken[i] {
            taken[i] = true;
            picked.push(i);
        }
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn corpus(n_fake: usize, n_auth: usize, n_unlabeled: usize) -> Corpus {
        let mut reviews = Vec::new();
        for i in 0..n_fake {
            reviews.push(Review {
                id: format!("f{i}"),
                text: "x".into(),
                label: Some("fake".into()),
            });
        }
        for i in 0..n_auth {
            reviews.push(Review {
                id: format!("a{i}"),
                text: "x".into(),
                label: Some("authentic".into()),
            });
        }
        for i in 0..n_unlabeled {
            reviews.push(Review {
                id: format!("u{i}"),
                text: "x".into(),
                label: None,
            });
        }
        Corpus { reviews }
    }

    fn classes() -> Vec<String> {
        vec!["fake".into(), "authentic".into()]
    }

    fn ids(part: &[Review]) -> HashSet<String> {
        part.iter().map(|r| r.id.clone()).collect()
    }

    #[test]
    fn exact_sizes_and_disjoint_ids() {
        let c = corpus(400, 800, 0);
        for (nl, nu, nt) in [(32, 512, 512), (1024, 512, 128)] {
            let c = corpus(nl + nt, nl + nt + nu, 0);
            let split = make_split(&c, &SplitSpec::new(nl, nu, nt, 7), &classes()).unwrap();
            assert_eq!(split.labeled.len(), nl);
            assert_eq!(split.unlabeled.len(), nu);
            assert_eq!(split.test.len(), nt);
            let (l, u, t) = (ids(&split.labeled), ids(&split.unlabeled), ids(&split.test));
            assert!(l.is_disjoint(&u) && l.is_disjoint(&t) && u.is_disjoint(&t));
        }
        let _ = c;
    }

    #[test]
    fn same_seed_same_membership() {
        let c = corpus(300, 600, 200);
        let spec = SplitSpec::new(64, 256, 128, 42);
        let a = make_split(&c, &spec, &classes()).unwrap();
        let b = make_split(&c, &spec, &classes()).unwrap();
        assert_eq!(ids(&a.labeled), ids(&b.labeled));
        assert_eq!(ids(&a.unlabeled), ids(&b.unlabeled));
        assert_eq!(ids(&a.test), ids(&b.test));
    }

    #[test]
    fn different_seeds_differ() {
        let c = corpus(300, 600, 200);
        let a = make_split(&c, &SplitSpec::new(64, 256, 128, 1), &classes()).unwrap();
        let b = make_split(&c, &SplitSpec::new(64, 256, 128, 2), &classes()).unwrap();
        assert_ne!(ids(&a.labeled), ids(&b.labeled));
    }

    #[test]
    fn stratification_preserves_proportions_within_one() {
        // 1:4 imbalance, as in a fake-review corpus
        let c = corpus(200, 800, 0);
        let split = make_split(&c, &SplitSpec::new(100, 0, 100, 3), &classes()).unwrap();
        let fake_count = split
            .labeled
            .iter()
            .filter(|r| r.label.as_deref() == Some("fake"))
            .count();
        assert!((fake_count as i64 - 20).abs() <= 1, "fake count {fake_count}");
    }

    #[test]
    fn unlabeled_labels_are_erased() {
        let c = corpus(100, 100, 0);
        let split = make_split(&c, &SplitSpec::new(10, 50, 10, 5), &classes()).unwrap();
        assert!(split.unlabeled.iter().all(|r| r.label.is_none()));
    }

    #[test]
    fn capacity_error_reports_shortfall() {
        let c = corpus(10, 10, 0);
        let err = make_split(&c, &SplitSpec::new(10, 50, 10, 5), &classes()).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }), "{err}");
    }

    #[test]
    fn small_labeled_draw_contains_both_classes() {
        // with 871:5015-style imbalance, a stratified n=32 draw still
        // carries minority examples
        let c = corpus(174, 1003, 0);
        let split = make_split(&c, &SplitSpec::new(32, 0, 64, 9), &classes()).unwrap();
        let fake = split
            .labeled
            .iter()
            .filter(|r| r.label.as_deref() == Some("fake"))
            .count();
        assert!(fake >= 4, "expected roughly 15% fakes, got {fake}");
        assert!(fake < 32);
    }
}
