use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::sim::{catalog_names, ObjectClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitStrategy {
    /// Shuffled 80/20 split at sequence granularity.
    Random80_20 { seed: u64 },
    /// Every sequence of the named object goes to test.
    LeaveOneObjectOut { object: String },
    /// Train on one class, test on another. When both classes are the same,
    /// that class is split 80/20 at random.
    ClassTransfer {
        train: ObjectClass,
        test: ObjectClass,
        seed: u64,
    },
}

/// Sequence indices into the dataset; sorted, disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn random_80_20(mut idx: Vec<usize>, seed: u64) -> Split {
    idx.shuffle(&mut rng::stream(seed, "split"));
    let n_train = (idx.len() as f64 * 0.8).round() as usize;
    let mut test = idx.split_off(n_train);
    idx.sort_unstable();
    test.sort_unstable();
    Split { train: idx, test }
}

pub fn split(ds: &Dataset, strategy: &SplitStrategy) -> Result<Split> {
    let all: Vec<usize> = (0..ds.len()).collect();
    let out = match strategy {
        SplitStrategy::Random80_20 { seed } => random_80_20(all, *seed),
        SplitStrategy::LeaveOneObjectOut { object } => {
            let held = ds
                .objects()
                .into_iter()
                .find(|o| o.eq_ignore_ascii_case(object))
                .ok_or_else(|| Error::UnknownObject {
                    name: object.clone(),
                    valid: if ds.is_empty() {
                        catalog_names().join(", ")
                    } else {
                        ds.objects().join(", ")
                    },
                })?;
            let (test, train) = all.into_iter().partition(|&i| ds.sequences[i].meta.object == held);
            Split { train, test }
        }
        SplitStrategy::ClassTransfer { train, test, seed } => {
            let of = |c: ObjectClass| -> Vec<usize> {
                all.iter()
                    .copied()
                    .filter(|&i| ds.sequences[i].meta.class == c)
                    .collect()
            };
            let (tr, te) = (of(*train), of(*test));
            if tr.is_empty() || te.is_empty() {
                return Err(Error::invalid(format!(
                    "class transfer {} -> {} needs sequences of both classes",
                    train.as_str(),
                    test.as_str()
                )));
            }
            if train == test {
                random_80_20(tr, *seed)
            } else {
                Split { train: tr, test: te }
            }
        }
    };
    debug_assert!(out.train.iter().all(|i| !out.test.contains(i)));
    Ok(out)
}
