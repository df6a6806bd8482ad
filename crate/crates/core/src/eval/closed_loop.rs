use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{MeanStd, MetricsReport, SegmentReport};
use super::segment::{accumulate_errors, segment, SegmentBounds, SegmentMae, SEGMENT_HOLD, SEGMENT_THRESHOLD};
use crate::controller::{run_episode, ClosedLoopConfig, FailureKind, TraceRow};
use crate::dataset::{generate_plan, CollectionPlan, EstimatorFactory};
use crate::error::{Error, Result};
use crate::rng;
use crate::sim::{catalog_names, FrictionVariant, Scenario, SimConfig};
use crate::tactile::SensorConfig;

/// Objects × approach angles × goals × trials, no perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteGrid {
    pub objects: Vec<String>,
    pub approach_angles: Vec<f64>,
    pub goals: Vec<f64>,
    pub trials: u32,
    pub friction: FrictionVariant,
}

impl Default for SuiteGrid {
    fn default() -> Self {
        let plan = CollectionPlan::experiment_grid();
        SuiteGrid {
            objects: catalog_names().iter().map(|s| s.to_string()).collect(),
            approach_angles: plan.approach_angles,
            goals: plan.stop_angles,
            trials: 1,
            friction: FrictionVariant::Nominal,
        }
    }
}

impl SuiteGrid {
    pub fn scenarios(&self, seed: u64) -> Result<Vec<Scenario>> {
        let plan = CollectionPlan {
            approach_angles: self.approach_angles.clone(),
            stop_angles: self.goals.clone(),
            repeats: self.trials,
            friction_variants: vec![self.friction],
            ..CollectionPlan::experiment_grid()
        };
        generate_plan(&plan, &self.objects, rng::derive(seed, "suite", 0))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub sim: SimConfig,
    pub closed_loop: ClosedLoopConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub scenario: Scenario,
    pub target_error: f64,
    pub failure: FailureKind,
    /// Estimator error against simulator truth, segmented on the true ω.
    pub tracking: SegmentMae,
    pub bounds: SegmentBounds,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub episodes: Vec<EpisodeSummary>,
    pub report: MetricsReport,
}

/// Runs one closed-loop episode per scenario in parallel and aggregates TE,
/// failure rate and tracking error. Failures are results, not errors.
pub fn closed_loop_suite(
    scenarios: &[Scenario],
    estimator: &EstimatorFactory,
    cfg: &SuiteConfig,
) -> Result<SuiteResult> {
    if scenarios.is_empty() {
        return Err(Error::invalid("closed-loop suite needs at least one scenario"));
    }
    for s in scenarios {
        if s.stop_deg.is_none() {
            return Err(Error::invalid(format!("suite scenario for {} has no goal", s.object)));
        }
    }
    let episodes = scenarios
        .par_iter()
        .map(|s| run_one(s, estimator, cfg))
        .collect::<Result<Vec<_>>>()?;
    let report = aggregate(&episodes);
    Ok(SuiteResult { episodes, report })
}

fn run_one(s: &Scenario, estimator: &EstimatorFactory, cfg: &SuiteConfig) -> Result<EpisodeSummary> {
    let plant = s.plant(&cfg.sim)?;
    let initial = s.initial_state(&plant, &cfg.sim)?;
    let loop_cfg = ClosedLoopConfig {
        sensor: SensorConfig {
            seed: rng::derive(s.seed, "sensor", 0),
            ..cfg.closed_loop.sensor.clone()
        },
        timing: cfg.sim.timing.clone(),
        ..cfg.closed_loop.clone()
    };
    let mut est = estimator();
    let goal = s.stop_deg.unwrap_or_default();
    let r = run_episode(&plant, initial, est.as_mut(), goal, &loop_cfg)?;
    let gt_alpha: Vec<f64> = r.trace.iter().map(|row| row.alpha_gt).collect();
    let gt_omega: Vec<f64> = r.trace.iter().map(|row| row.omega_gt).collect();
    let est_alpha: Vec<f64> = r.trace.iter().map(|row| row.alpha_est).collect();
    let est_omega: Vec<f64> = r.trace.iter().map(|row| row.omega_est).collect();
    let bounds = segment(&gt_omega, SEGMENT_THRESHOLD, SEGMENT_HOLD);
    let tracking = accumulate_errors(&est_alpha, &est_omega, 0, &gt_alpha, &gt_omega, &bounds)?.mae();
    Ok(EpisodeSummary {
        scenario: s.clone(),
        target_error: r.target_error,
        failure: r.failure,
        tracking,
        bounds,
        trace: r.trace,
    })
}

pub fn aggregate(episodes: &[EpisodeSummary]) -> MetricsReport {
    let te: Vec<f64> = episodes
        .iter()
        .filter(|e| !e.failure.is_failure())
        .map(|e| e.target_error)
        .collect();
    let failed = episodes.iter().filter(|e| e.failure.is_failure()).count();
    let tracking: Vec<SegmentMae> = episodes.iter().map(|e| e.tracking).collect();
    MetricsReport {
        tracking: SegmentReport::from_runs(&tracking),
        target_error: MeanStd::of(&te),
        failure_rate: if episodes.is_empty() {
            0.0
        } else {
            100.0 * failed as f64 / episodes.len() as f64
        },
        episodes: episodes.len(),
    }
}

/// Per-episode outcomes, one row per scenario.
pub fn episode_table(episodes: &[EpisodeSummary]) -> Result<super::Table> {
    let header = [
        "object",
        "approach_deg",
        "goal_deg",
        "trial",
        "seed",
        "target_error",
        "failure",
        "close_ticks",
    ];
    let mut t = super::Table::new(header.iter().map(|s| s.to_string()).collect());
    for e in episodes {
        let s = &e.scenario;
        t.push(vec![
            s.object.clone(),
            s.approach_deg.to_string(),
            s.stop_deg.unwrap_or_default().to_string(),
            s.repeat.to_string(),
            s.seed.to_string(),
            e.target_error.to_string(),
            e.failure.as_str().to_string(),
            e.trace.len().to_string(),
        ])?;
    }
    Ok(t)
}

/// Per-tick plot data for one episode, with the segment of each tick.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow], bounds: &SegmentBounds) -> Result<()> {
    let header = [
        "t",
        "alpha_gt",
        "omega_gt",
        "alpha_est",
        "omega_est",
        "cmd",
        "phase",
        "segment",
    ];
    let mut t = super::Table::new(header.iter().map(|s| s.to_string()).collect());
    for (k, r) in trace.iter().enumerate() {
        t.push(vec![
            r.t.to_string(),
            r.alpha_gt.to_string(),
            r.omega_gt.to_string(),
            r.alpha_est.to_string(),
            r.omega_est.to_string(),
            r.cmd.to_string(),
            r.phase.as_str().to_string(),
            bounds.of(k).as_str().to_string(),
        ])?;
    }
    t.write(path)
}
