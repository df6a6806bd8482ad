use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::closed_loop::{closed_loop_suite, SuiteConfig};
use super::report::{segment_cells, segment_columns, MetricsReport, SegmentReport, Table};
use super::segment::{accumulate_errors, segment, SegmentErrors, SegmentMae, SEGMENT_HOLD, SEGMENT_THRESHOLD};
use crate::dataset::{collect_with, split, CollectConfig, Dataset, Split, SplitStrategy, TrajectorySequence};
use crate::error::{Error, Result};
use crate::nn::{
    continue_training, train, Architecture, History, Hyper, ModelParams, Sample, StreamingEstimator, TrainConfig,
};
use crate::rng;
use crate::sim::{ObjectClass, Scenario};

/// Architecture, hyperparameters and schedule for one study; each split is
/// trained `repeats` times with different seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub hyper: Hyper,
    pub train: TrainConfig,
    pub repeats: usize,
}

impl ModelSpec {
    pub fn paper(arch: Architecture) -> Self {
        ModelSpec {
            arch,
            hyper: Hyper::paper(arch),
            train: TrainConfig::default(),
            repeats: 3,
        }
    }

    pub fn toy(arch: Architecture) -> Self {
        ModelSpec {
            arch,
            hyper: Hyper::toy(arch),
            train: TrainConfig::default(),
            repeats: 3,
        }
    }

    fn repeat_config(&self, r: usize) -> TrainConfig {
        TrainConfig {
            seed: rng::derive(self.train.seed, "repeat", r as u64),
            ..self.train.clone()
        }
    }
}

/// Pooled per-segment errors of a model over whole sequences, plus each
/// sequence's own MAE (in input order).
pub fn evaluate_segments(params: &ModelParams, seqs: &[&TrajectorySequence]) -> Result<(SegmentMae, Vec<SegmentMae>)> {
    let per: Vec<SegmentErrors> = seqs
        .par_iter()
        .map(|s| {
            let p = params.predict(&s.frames)?;
            let bounds = segment(&s.omega_gt, SEGMENT_THRESHOLD, SEGMENT_HOLD);
            accumulate_errors(&p.alpha, &p.omega, p.offset, &s.alpha_gt, &s.omega_gt, &bounds)
        })
        .collect::<Result<_>>()?;
    let mut pooled = SegmentErrors::default();
    for e in &per {
        pooled.merge(e);
    }
    Ok((pooled.mae(), per.iter().map(SegmentErrors::mae).collect()))
}

/// Fails if a train and a test sequence share an id or, when `held_out` is
/// given, if any training sequence belongs to a held-out object.
pub fn check_leakage(ds: &Dataset, split: &Split, held_out: &[String]) -> Result<()> {
    let train_ids: BTreeSet<&str> = split.train.iter().map(|&i| ds.sequences[i].id.as_str()).collect();
    if let Some(&i) = split
        .test
        .iter()
        .find(|&&i| train_ids.contains(ds.sequences[i].id.as_str()))
    {
        return Err(Error::Integrity(format!(
            "sequence {} is in both train and test",
            ds.sequences[i].id
        )));
    }
    if let Some(&i) = split
        .train
        .iter()
        .find(|&&i| held_out.contains(&ds.sequences[i].meta.object))
    {
        return Err(Error::Integrity(format!(
            "held-out object {} appears in training sequence {}",
            ds.sequences[i].meta.object, ds.sequences[i].id
        )));
    }
    Ok(())
}

/// One row of a study table.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub label: String,
    pub train_objects: Vec<String>,
    pub test_objects: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    /// Pooled test MAE of each repeat.
    pub runs: Vec<SegmentMae>,
    pub report: SegmentReport,
    /// Per-test-sequence MAE for every repeat, in repeat-major order.
    pub sequence_errors: Vec<(usize, String, SegmentMae)>,
}

fn objects_of(ds: &Dataset, idx: &[usize]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for &i in idx {
        let o = &ds.sequences[i].meta.object;
        if !out.contains(o) {
            out.push(o.clone());
        }
    }
    out
}

struct Job {
    label: String,
    split: Split,
    held_out: Vec<String>,
    spec: ModelSpec,
}

fn run_job(ds: &Dataset, job: &Job) -> Result<StudyRow> {
    check_leakage(ds, &job.split, &job.held_out)?;
    if job.split.train.is_empty() || job.split.test.is_empty() {
        return Err(Error::invalid(format!(
            "study '{}' has an empty train or test split",
            job.label
        )));
    }
    let train_samples = ds.samples(&job.split.train);
    let test: Vec<&TrajectorySequence> = job.split.test.iter().map(|&i| &ds.sequences[i]).collect();
    let results = (0..job.spec.repeats.max(1))
        .into_par_iter()
        .map(|r| {
            let (params, _) = train(
                job.spec.arch,
                job.spec.hyper.clone(),
                &train_samples,
                &[],
                &job.spec.repeat_config(r),
            )?;
            evaluate_segments(&params, &test)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::new();
    let mut sequence_errors = Vec::new();
    for (r, (pooled, per)) in results.into_iter().enumerate() {
        runs.push(pooled);
        for (s, m) in test.iter().zip(per) {
            sequence_errors.push((r, s.id.clone(), m));
        }
    }
    Ok(StudyRow {
        label: job.label.clone(),
        train_objects: objects_of(ds, &job.split.train),
        test_objects: objects_of(ds, &job.split.test),
        n_train: job.split.train.len(),
        n_test: job.split.test.len(),
        report: SegmentReport::from_runs(&runs),
        runs,
        sequence_errors,
    })
}

fn run_jobs(ds: &Dataset, jobs: &[Job]) -> Result<Vec<StudyRow>> {
    jobs.par_iter().map(|j| run_job(ds, j)).collect()
}

/// Leave-one-object-out: one row per object in the dataset.
pub fn unseen_object_study(ds: &Dataset, spec: &ModelSpec) -> Result<Vec<StudyRow>> {
    let objects = ds.objects();
    if objects.len() < 2 {
        return Err(Error::invalid("unseen-object study needs at least two objects"));
    }
    let jobs = objects
        .iter()
        .map(|o| {
            Ok(Job {
                label: o.clone(),
                split: split(ds, &SplitStrategy::LeaveOneObjectOut { object: o.clone() })?,
                held_out: vec![o.clone()],
                spec: spec.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    run_jobs(ds, &jobs)
}

/// Box→Box, Box→Cylinder, Cylinder→Cylinder, Cylinder→Box.
pub fn class_transfer_study(ds: &Dataset, spec: &ModelSpec, seed: u64) -> Result<Vec<StudyRow>> {
    use ObjectClass::{Box, Cylinder};
    let mut jobs = Vec::new();
    for (train_class, test_class) in [(Box, Box), (Box, Cylinder), (Cylinder, Cylinder), (Cylinder, Box)] {
        let s = split(
            ds,
            &SplitStrategy::ClassTransfer {
                train: train_class,
                test: test_class,
                seed,
            },
        )?;
        let held_out = if train_class == test_class {
            Vec::new()
        } else {
            objects_of(ds, &s.test)
        };
        jobs.push(Job {
            label: format!("{}->{}", train_class.as_str(), test_class.as_str()),
            split: s,
            held_out,
            spec: spec.clone(),
        });
    }
    run_jobs(ds, &jobs)
}

pub const ABLATION_WINDOWS: [usize; 5] = [5, 15, 30, 60, 90];

#[derive(Debug, Clone, PartialEq)]
pub struct Ablation {
    pub rows: Vec<StudyRow>,
    /// Sequences dropped because they are shorter than a window.
    pub warnings: Vec<String>,
}

/// One MLP per window size on the same random 80/20 split.
pub fn window_ablation(ds: &Dataset, windows: &[usize], spec: &ModelSpec, seed: u64) -> Result<Ablation> {
    if spec.arch != Architecture::Mlp {
        return Err(Error::invalid("window ablation trains MLP models"));
    }
    let base = split(ds, &SplitStrategy::Random80_20 { seed })?;
    let mut warnings = Vec::new();
    let mut jobs = Vec::new();
    for &w in windows {
        let hyper = Hyper {
            window_size: w,
            ..spec.hyper.clone()
        };
        hyper.validate(Architecture::Mlp)?;
        let keep = |idx: &[usize], warnings: &mut Vec<String>| -> Vec<usize> {
            idx.iter()
                .copied()
                .filter(|&i| {
                    let s = &ds.sequences[i];
                    let ok = s.len() >= w;
                    if !ok {
                        warnings.push(format!("window {w}: excluded {} ({} ticks)", s.id, s.len()));
                    }
                    ok
                })
                .collect()
        };
        let split = Split {
            train: keep(&base.train, &mut warnings),
            test: keep(&base.test, &mut warnings),
        };
        jobs.push(Job {
            label: w.to_string(),
            split,
            held_out: Vec::new(),
            spec: ModelSpec { hyper, ..spec.clone() },
        });
    }
    Ok(Ablation {
        rows: run_jobs(ds, &jobs)?,
        warnings,
    })
}

/// Study rows as a table: label, split sizes, then IS/DR/SS × angle/velocity.
pub fn study_table(rows: &[StudyRow]) -> Result<Table> {
    let mut header: Vec<String> = ["label", "train_objects", "test_objects", "n_train", "n_test", "repeats"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(segment_columns());
    let mut t = Table::new(header);
    for r in rows {
        let mut row = vec![
            r.label.clone(),
            r.train_objects.join(";"),
            r.test_objects.join(";"),
            r.n_train.to_string(),
            r.n_test.to_string(),
            r.runs.len().to_string(),
        ];
        row.extend(segment_cells(&r.report));
        t.push(row)?;
    }
    Ok(t)
}

/// Long-format per-sequence errors (the distribution behind per-object plots).
pub fn sequence_error_table(rows: &[StudyRow]) -> Result<Table> {
    let mut t = Table::new(
        ["label", "repeat", "sequence", "segment", "angle_mae", "velocity_mae"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    );
    for r in rows {
        for (rep, id, m) in &r.sequence_errors {
            for s in super::Segment::ALL {
                if let (Some(a), Some(w)) = (m.angle(s), m.velocity(s)) {
                    t.push(vec![
                        r.label.clone(),
                        rep.to_string(),
                        id.clone(),
                        s.as_str().to_string(),
                        a.to_string(),
                        w.to_string(),
                    ])?;
                }
            }
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub train: TrainConfig,
    /// Collection settings for the in-loop data.
    pub collect: CollectConfig,
    pub suite: SuiteConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 20,
            train: TrainConfig::default(),
            collect: CollectConfig {
                keep_stuck: true,
                goal_tolerance: f64::INFINITY,
                ..CollectConfig::default()
            },
            suite: SuiteConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneResult {
    pub before: MetricsReport,
    pub after: MetricsReport,
    pub in_loop: Dataset,
    pub history: History,
    pub tuned: ModelParams,
}

/// Collects angle-goal data with `base` driving the controller, continues
/// training on it (plus any `replay` samples from the base training set), and
/// runs the same closed-loop suite before and after.
pub fn finetune_experiment(
    base: &ModelParams,
    replay: &[Sample],
    collection: &[Scenario],
    evaluation: &[Scenario],
    cfg: &FinetuneConfig,
) -> Result<FinetuneResult> {
    let in_loop = collect_with(collection, &cfg.collect, &|| {
        Box::new(StreamingEstimator::new(base.clone()))
    });
    if in_loop.is_empty() {
        return Err(Error::invalid(format!(
            "no usable in-loop sequences ({} filtered)",
            in_loop.filtered.len()
        )));
    }
    let mut tuned = base.clone();
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        ..cfg.train.clone()
    };
    let all: Vec<usize> = (0..in_loop.len()).collect();
    let mut samples = in_loop.samples(&all);
    samples.extend_from_slice(replay);
    let history = continue_training(&mut tuned, &samples, &[], &train_cfg)?;
    let before = closed_loop_suite(
        evaluation,
        &|| Box::new(StreamingEstimator::new(base.clone())),
        &cfg.suite,
    )?;
    let after = closed_loop_suite(
        evaluation,
        &|| Box::new(StreamingEstimator::new(tuned.clone())),
        &cfg.suite,
    )?;
    Ok(FinetuneResult {
        before: before.report,
        after: after.report,
        in_loop,
        history,
        tuned,
    })
}
