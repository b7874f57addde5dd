//! Train/validation/test partitions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::smiles::ScaffoldKey;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("fractions must be nonnegative and sum to 1, got {0:?}")]
    InvalidFractions([f64; 3]),
    #[error("{groups} scaffold group(s) cannot be divided into {splits} splits")]
    TooFewScaffolds { groups: usize, splits: usize },
}

/// Index sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.valid.len(), self.test.len()]
    }

    pub fn parts(&self) -> [&[usize]; 3] {
        [&self.train, &self.valid, &self.test]
    }

    /// Split name per index, for `n` molecules.
    pub fn assignment(&self, n: usize) -> Vec<Option<&'static str>> {
        let mut out = vec![None; n];
        for (name, part) in ["train", "valid", "test"].into_iter().zip(self.parts()) {
            for &i in part {
                out[i] = Some(name);
            }
        }
        out
    }

    fn from_parts(mut parts: [Vec<usize>; 3]) -> Self {
        for p in &mut parts {
            p.sort_unstable();
        }
        let [train, valid, test] = parts;
        Self { train, valid, test }
    }
}

fn check_fractions(f: [f64; 3]) -> Result<(), SplitError> {
    let ok = f.iter().all(|&x| (0.0..=1.0).contains(&x)) && (f.iter().sum::<f64>() - 1.0).abs() < 1e-9;
    if ok {
        Ok(())
    } else {
        Err(SplitError::InvalidFractions(f))
    }
}

/// Groups molecules by scaffold and assigns whole groups.
///
/// Groups are visited largest first (ties by key) and each goes to the
/// split furthest below its target size; ties go to the earlier split.
/// The result depends only on the multiset of (key, index) pairs, not on
/// their order.
pub fn scaffold_split(keys: &[ScaffoldKey], fractions: [f64; 3]) -> Result<Split, SplitError> {
    check_fractions(fractions)?;
    let mut groups: BTreeMap<&ScaffoldKey, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(k).or_default().push(i);
    }
    // A lone group cannot be split; two already separate train from
    // held-out data, and the greedy rule leaves the last split empty.
    let splits = fractions.iter().filter(|&&f| f > 0.0).count();
    if groups.len() < splits.min(2) {
        return Err(SplitError::TooFewScaffolds {
            groups: groups.len(),
            splits,
        });
    }
    let mut ordered: Vec<(&ScaffoldKey, Vec<usize>)> = groups.into_iter().collect();
    ordered.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(b.0)));

    let n = keys.len() as f64;
    let targets = fractions.map(|f| f * n);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (_, members) in ordered {
        let mut best = 0;
        let mut best_deficit = f64::NEG_INFINITY;
        for s in 0..3 {
            if fractions[s] == 0.0 {
                continue;
            }
            let deficit = targets[s] - parts[s].len() as f64;
            if deficit > best_deficit {
                best = s;
                best_deficit = deficit;
            }
        }
        parts[best].extend(members);
    }
    Ok(Split::from_parts(parts))
}

/// Seeded shuffle, then `floor(f·n)` molecules for validation and test;
/// the remainder goes to training.
pub fn random_split(n: usize, fractions: [f64; 3], seed: u64) -> Result<Split, SplitError> {
    check_fractions(fractions)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = (fractions[1] * n as f64).floor() as usize;
    let n_test = ((fractions[2] * n as f64).floor() as usize).min(n - n_valid);
    let n_train = n - n_valid - n_test;
    let test = idx.split_off(n_train + n_valid);
    let valid = idx.split_off(n_train);
    Ok(Split::from_parts([idx, valid, test]))
}
