use rayon::prelude::*;

use super::{run_trial, TrialConfig, TrialKind, TrialResult};
use crate::data::{ClassId, Dataset};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug)]
pub struct SuiteEntry {
    pub class: ClassId,
    pub kind: TrialKind,
    /// Trial seed, derived from the base seed and the class.
    pub seed: u64,
    /// Failed trials keep their error message; the suite goes on.
    pub result: std::result::Result<TrialResult, String>,
}

#[derive(Debug)]
pub struct SuiteResult {
    /// Discovery trials in class order, then control trials in class order.
    pub entries: Vec<SuiteEntry>,
}

impl SuiteResult {
    pub fn of_kind(&self, kind: TrialKind) -> impl Iterator<Item = &SuiteEntry> {
        self.entries.iter().filter(move |e| e.kind == kind)
    }
}

/// One discovery and one negative-control trial per populated class. A
/// class's two trials share the same seed and differ only in the unlabeled
/// pool. Trials run on up to `jobs` threads; results are identical for any
/// thread count.
pub fn run_suite(d: &Dataset, base: &TrialConfig, jobs: usize) -> Result<SuiteResult> {
    base.validate()?;
    let classes = d.populated_classes();
    if classes.len() < 3 {
        return Err(Error::Validation(format!(
            "the suite needs at least 3 classes, found {}",
            classes.len()
        )));
    }
    let plan: Vec<(ClassId, TrialKind, TrialConfig)> = [TrialKind::Discovery, TrialKind::Control]
        .into_iter()
        .flat_map(|kind| {
            classes.iter().map(move |&class| {
                let cfg = TrialConfig {
                    withheld_class: Some(class),
                    seed: derive_seed(base.seed, &format!("trial:{class}")),
                    ..base.clone()
                };
                (class, kind, cfg)
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    let entries = pool.install(|| {
        plan.into_par_iter()
            .map(|(class, kind, cfg)| {
                let result = run_trial(d, &cfg, kind).map_err(|e| {
                    log::error!("{} trial for class {class} failed: {e}", kind.as_str());
                    e.to_string()
                });
                SuiteEntry {
                    class,
                    kind,
                    seed: cfg.seed,
                    result,
                }
            })
            .collect()
    });
    Ok(SuiteResult { entries })
}
