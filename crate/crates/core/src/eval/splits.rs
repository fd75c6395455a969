//! Seeded train/val/test assignment with held-out apps.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPlan {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    /// Apps kept out of training entirely.
    pub excluded_apps: Vec<String>,
    /// Share of excluded-app images sent to val; the rest go to test.
    pub excluded_val: f64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.20,
            test: 0.10,
            excluded_apps: vec!["Engage".into(), "Spatial".into(), "Half+Half".into()],
            excluded_val: 0.67,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("split fractions must be non-negative and sum to 1 (got {0})")]
    Fractions(f64),
    #[error("excluded_val must lie in [0, 1] (got {0})")]
    ExcludedVal(f64),
    #[error("image id {0:?} appears twice")]
    Duplicate(String),
}

impl SplitPlan {
    pub fn validate(&self) -> Result<(), SplitError> {
        let sum = self.train + self.val + self.test;
        if [self.train, self.val, self.test].iter().any(|f| *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(SplitError::Fractions(sum));
        }
        if !(0.0..=1.0).contains(&self.excluded_val) {
            return Err(SplitError::ExcludedVal(self.excluded_val));
        }
        Ok(())
    }
}

fn share(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n)
}

/// Assigns every `(image_id, app)` to a split. The result depends only on
/// the set of images, the plan and the seed, not on input order.
pub fn plan_splits(
    images: &[(String, String)],
    plan: &SplitPlan,
    seed: u64,
) -> Result<BTreeMap<String, Split>, SplitError> {
    plan.validate()?;
    let excluded: HashSet<&str> = plan.excluded_apps.iter().map(String::as_str).collect();
    let mut seen = HashSet::new();
    let (mut held, mut pool): (Vec<&str>, Vec<&str>) = (Vec::new(), Vec::new());
    for (id, app) in images {
        if !seen.insert(id.as_str()) {
            return Err(SplitError::Duplicate(id.clone()));
        }
        if excluded.contains(app.as_str()) {
            held.push(id);
        } else {
            pool.push(id);
        }
    }
    held.sort_unstable();
    pool.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    held.shuffle(&mut rng);

    let mut out = BTreeMap::new();
    let n_train = share(pool.len(), plan.train);
    let n_val = share(pool.len(), plan.val).min(pool.len() - n_train);
    for (i, id) in pool.iter().enumerate() {
        let s = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        out.insert(id.to_string(), s);
    }
    let n_held_val = share(held.len(), plan.excluded_val);
    for (i, id) in held.iter().enumerate() {
        out.insert(
            id.to_string(),
            if i < n_held_val { Split::Val } else { Split::Test },
        );
    }
    Ok(out)
}
