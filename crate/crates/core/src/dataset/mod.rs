//! Simulated tactile datasets: collection plans, recording, on-disk format
//! and train/test splits.

mod collect;
mod io;
mod plan;
mod split;

pub use collect::{collect, collect_with, CollectConfig, EstimatorFactory};
pub use io::{load, save, write_episode_trace, DATASET_VERSION, MANIFEST_FILE};
pub use plan::{generate_plan, CollectionPlan};
pub use split::{split, Split, SplitStrategy};

use serde::{Deserialize, Serialize};

use crate::nn::Sample;
use crate::sim::{FrictionVariant, ObjectClass, ObjectProfile, Protocol, Scenario, TICK_HZ};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub object: String,
    pub class: ObjectClass,
    pub protocol: Protocol,
    pub approach_deg: f64,
    pub perturb_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_deg: Option<f64>,
    pub friction: FrictionVariant,
    pub seed: u64,
    pub repeat: u32,
    pub sample_rate: f64,
}

impl SequenceMeta {
    pub fn from_scenario(s: &Scenario, object: &ObjectProfile) -> Self {
        SequenceMeta {
            object: object.name.clone(),
            class: object.class,
            protocol: s.protocol,
            approach_deg: s.approach_deg,
            perturb_deg: s.perturb_deg,
            stop_deg: s.stop_deg,
            friction: s.friction,
            seed: s.seed,
            repeat: s.repeat,
            sample_rate: TICK_HZ,
        }
    }
}

/// One recorded episode. All per-tick vectors have the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySequence {
    pub id: String,
    pub meta: SequenceMeta,
    pub t: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
    pub grip_cmd: Vec<u8>,
    pub alpha_gt: Vec<f64>,
    pub omega_gt: Vec<f64>,
}

impl TrajectorySequence {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn sample(&self) -> Sample<'_> {
        Sample {
            frames: &self.frames,
            alpha: &self.alpha_gt,
            omega: &self.omega_gt,
        }
    }
}

/// A scenario dropped during collection and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredScenario {
    pub index: usize,
    pub object: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<TrajectorySequence>,
    pub filtered: Vec<FilteredScenario>,
    /// Plans the sequences were collected from, if known.
    pub plans: Vec<CollectionPlan>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Distinct object names in first-seen order.
    pub fn objects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.sequences {
            if !out.contains(&s.meta.object) {
                out.push(s.meta.object.clone());
            }
        }
        out
    }

    pub fn samples(&self, indices: &[usize]) -> Vec<Sample<'_>> {
        indices.iter().map(|&i| self.sequences[i].sample()).collect()
    }

    /// Appends another dataset, renumbering its sequence ids after ours.
    pub fn extend(&mut self, other: Dataset) {
        let offset = self.sequences.len() + self.filtered.len();
        for mut s in other.sequences {
            let n: usize = s.id.trim_start_matches("seq-").parse().unwrap_or(0);
            s.id = format!("seq-{:05}", n + offset);
            self.sequences.push(s);
        }
        for mut f in other.filtered {
            f.index += offset;
            self.filtered.push(f);
        }
        self.plans.extend(other.plans);
    }

    /// Sequence counts per (protocol, object), sorted.
    pub fn summary(&self) -> Vec<(String, String, usize)> {
        let mut counts: std::collections::BTreeMap<(String, String), usize> = Default::default();
        for s in &self.sequences {
            *counts
                .entry((s.meta.protocol.as_str().to_string(), s.meta.object.clone()))
                .or_default() += 1;
        }
        counts.into_iter().map(|((p, o), n)| (p, o, n)).collect()
    }
}
