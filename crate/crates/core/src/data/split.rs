use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::manifest::Manifest;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(r.is_finite() && *r > 0.0)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split ratios must be positive and sum to 1, got {all:?}"
            )));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for a class of `n` samples: floor, floor,
    /// remainder.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let train = floor(self.train);
        let val = floor(self.val);
        (train, val, n - train - val)
    }
}

/// Role of every manifest sample for one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    /// Number of folds, when known (not recoverable from a split file).
    pub k: Option<usize>,
    pub fold: usize,
    roles: Vec<Role>,
}

impl SplitAssignment {
    pub fn from_roles(roles: Vec<Role>, fold: usize) -> Self {
        Self { k: None, fold, roles }
    }

    pub fn role(&self, sample: usize) -> Role {
        self.roles[sample]
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn indices(&self, role: Role) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == role)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Stratified train/val/test assignment for fold 0 of `k`.
pub fn stratified_split(manifest: &Manifest, ratios: SplitRatios, k: usize, seed: u64) -> Result<SplitAssignment> {
    stratified_split_fold(manifest, ratios, k, 0, seed)
}

/// Per class, samples are shuffled once per seed; the trailing block is the
/// fixed test set and the validation window of fold `f` starts at
/// `floor(f * pool / k)` of the remaining pool, wrapping around.
pub fn stratified_split_fold(
    manifest: &Manifest,
    ratios: SplitRatios,
    k: usize,
    fold: usize,
    seed: u64,
) -> Result<SplitAssignment> {
    ratios.validate()?;
    if k == 0 || fold >= k {
        return Err(Error::InvalidArgument(format!("fold {fold} out of range for k={k}")));
    }
    let mut roles = vec![Role::Train; manifest.len()];
    for class in manifest.taxonomy().classes() {
        let mut idx = manifest.indices_of(class.id);
        let n = idx.len();
        if n < k {
            return Err(Error::InsufficientData {
                class: class.short.clone(),
                have: n,
                need: k,
            });
        }
        idx.shuffle(&mut seed::derived_rng(seed, &[class.id as u64]));
        let (n_train, n_val, _) = ratios.counts(n);
        let pool = n_train + n_val;
        for &i in &idx[pool..] {
            roles[i] = Role::Test;
        }
        let start = fold * pool / k;
        for j in 0..n_val {
            roles[idx[(start + j) % pool]] = Role::Val;
        }
    }
    Ok(SplitAssignment {
        k: Some(k),
        fold,
        roles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_corpus, CorpusSpec, TABLE1_COUNTS};

    fn corpus(per_class: usize) -> Manifest {
        generate_synthetic_corpus(&CorpusSpec::uniform(per_class, 32, 32), 4).unwrap()
    }

    #[test]
    fn floor_rule() {
        let r = SplitRatios::default();
        assert_eq!(r.counts(100), (60, 20, 20));
        assert_eq!(r.counts(559), (335, 111, 113));
        assert_eq!(r.counts(5), (3, 1, 1));
        for n in TABLE1_COUNTS {
            let (a, b, c) = r.counts(n);
            assert_eq!(a + b + c, n);
        }
    }

    #[test]
    fn hundred_per_class() {
        let m = corpus(100);
        let s = stratified_split(&m, SplitRatios::default(), 5, 7).unwrap();
        for c in 0..16 {
            let count = |role| m.indices_of(c).iter().filter(|&&i| s.role(i) == role).count();
            assert_eq!((count(Role::Train), count(Role::Val), count(Role::Test)), (60, 20, 20));
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let m = corpus(20);
        let a = stratified_split(&m, SplitRatios::default(), 5, 1).unwrap();
        let b = stratified_split(&m, SplitRatios::default(), 5, 1).unwrap();
        let c = stratified_split(&m, SplitRatios::default(), 5, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.indices(Role::Test).len(), c.indices(Role::Test).len());
    }

    #[test]
    fn folds_share_test_set_and_rotate_val() {
        let m = corpus(50);
        let folds: Vec<_> = (0..5)
            .map(|f| stratified_split_fold(&m, SplitRatios::default(), 5, f, 3).unwrap())
            .collect();
        for f in &folds[1..] {
            assert_eq!(f.indices(Role::Test), folds[0].indices(Role::Test));
            assert_eq!(f.indices(Role::Val).len(), folds[0].indices(Role::Val).len());
        }
        assert_ne!(folds[0].indices(Role::Val), folds[1].indices(Role::Val));
    }

    #[test]
    fn too_few_samples_names_class() {
        let m = corpus(4);
        match stratified_split(&m, SplitRatios::default(), 5, 0) {
            Err(Error::InsufficientData { class, have, need }) => {
                assert_eq!((class.as_str(), have, need), ("AS.", 4, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_ratios_rejected() {
        let m = corpus(10);
        let r = SplitRatios {
            train: 0.7,
            val: 0.2,
            test: 0.2,
        };
        assert!(stratified_split(&m, r, 5, 0).is_err());
    }
}
