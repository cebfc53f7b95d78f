use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClassId, Dataset};
use crate::error::{Error, Result};
use crate::seed::{derive_seed_u64, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub withheld_class: Option<ClassId>,
    pub seed: u64,
    pub fraction_labeled: f64,
}

impl SplitSpec {
    pub fn new(withheld_class: Option<ClassId>, seed: u64) -> Self {
        Self {
            withheld_class,
            seed,
            fraction_labeled: 0.5,
        }
    }
}

/// Output of [`split_discovery`].
#[derive(Debug, Clone)]
pub struct DiscoverySplit {
    /// Known classes with labels retained.
    pub labeled: Dataset,
    /// Labels stripped.
    pub unlabeled: Dataset,
    /// Hidden labels of `unlabeled`, row aligned; evaluation only.
    pub truth: Vec<Option<ClassId>>,
}

/// Per-class stratified split into labeled and unlabeled pools.
///
/// Each known class is shuffled with a seed derived from `(spec.seed, class)`
/// and its first `ceil(n * fraction)` samples stay labeled. Every sample of the
/// withheld class goes to the unlabeled pool. Snippets that already carry no
/// label are placed in the unlabeled pool with unknown truth. Both outputs keep
/// the input order.
pub fn split_discovery(d: &Dataset, spec: &SplitSpec) -> Result<DiscoverySplit> {
    if !(spec.fraction_labeled > 0.0 && spec.fraction_labeled < 1.0) {
        return Err(Error::Config(format!(
            "fraction_labeled must lie strictly between 0 and 1, got {}",
            spec.fraction_labeled
        )));
    }
    let counts = d.class_counts();
    if let Some(w) = spec.withheld_class {
        match counts.get(&w) {
            None => {
                return Err(Error::Validation(format!(
                    "withheld class {w} is not in the dataset's class set"
                )))
            }
            Some(0) => {
                return Err(Error::Validation(format!("withheld class {w} has zero samples")))
            }
            _ => {}
        }
    }

    let mut to_labeled = vec![false; d.len()];
    for (&class, _) in counts.iter().filter(|(_, &n)| n > 0) {
        if Some(class) == spec.withheld_class {
            continue;
        }
        let mut members: Vec<usize> = d
            .snippets
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == Some(class))
            .map(|(i, _)| i)
            .collect();
        let mut rng = rng_from(derive_seed_u64(spec.seed, class as u64));
        members.shuffle(&mut rng);
        let n_labeled = labeled_count(members.len(), spec.fraction_labeled);
        for &i in &members[..n_labeled] {
            to_labeled[i] = true;
        }
    }

    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    let mut truth = Vec::new();
    for (s, &lab) in d.snippets.iter().zip(&to_labeled) {
        if lab {
            labeled.push(s.clone());
        } else {
            truth.push(s.label);
            let mut u = s.clone();
            u.label = None;
            unlabeled.push(u);
        }
    }

    let mut labeled = d.with_snippets(labeled);
    if let Some(w) = spec.withheld_class {
        labeled.classes.remove(&w);
    }
    Ok(DiscoverySplit {
        labeled,
        unlabeled: d.with_snippets(unlabeled),
        truth,
    })
}

/// Rounds up so that the labeled side receives the extra sample of an odd class.
fn labeled_count(n: usize, fraction: f64) -> usize {
    let exact = n as f64 * fraction;
    // guard against 2.5000000000000004-style round-up
    let rounded = (exact - 1e-9).ceil().max(0.0) as usize;
    rounded.min(n)
}
