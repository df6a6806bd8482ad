use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, FilteredScenario, SequenceMeta, TrajectorySequence};
use crate::controller::{run_episode, AngleEstimator, ClosedLoopConfig, FailureKind, OracleEstimator};
use crate::error::{Error, Result};
use crate::filters::{annotate_ground_truth, KalmanParams};
use crate::rng;
use crate::sim::{simulate_episode, CommandSchedule, Protocol, Scenario, SimConfig, SimState};
use crate::tactile::{render_sequence, SensorConfig, TactileFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    pub sim: SimConfig,
    pub closed_loop: ClosedLoopConfig,
    pub kalman: KalmanParams,
    /// Angle-goal episodes ending further than this from the goal are dropped, degrees.
    pub goal_tolerance: f64,
    /// Keep angle-goal episodes that failed as Stuck (their labels are still
    /// ground truth); used when collecting with a learned estimator in the loop.
    pub keep_stuck: bool,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            sim: SimConfig::default(),
            closed_loop: ClosedLoopConfig::default(),
            kalman: KalmanParams::default(),
            goal_tolerance: 10.0,
            keep_stuck: false,
        }
    }
}

/// Builds a fresh estimator for each angle-goal episode.
pub type EstimatorFactory<'a> = dyn Fn() -> Box<dyn AngleEstimator> + Sync + 'a;

enum Outcome {
    Kept(TrajectorySequence),
    Filtered(String),
}

/// Simulates every scenario (in parallel), renders tactile frames and
/// annotates labels. Failed or invalid episodes are recorded, not fatal.
pub fn collect(scenarios: &[Scenario], cfg: &CollectConfig) -> Dataset {
    collect_with(scenarios, cfg, &|| Box::new(OracleEstimator))
}

pub fn collect_with(scenarios: &[Scenario], cfg: &CollectConfig, estimator: &EstimatorFactory) -> Dataset {
    let outcomes: Vec<Outcome> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, s)| match collect_one(i, s, cfg, estimator) {
            Ok(o) => o,
            Err(e) => Outcome::Filtered(format!("error: {e}")),
        })
        .collect();
    let mut ds = Dataset::default();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Outcome::Kept(seq) => ds.sequences.push(seq),
            Outcome::Filtered(reason) => ds.filtered.push(FilteredScenario {
                index: i,
                object: scenarios[i].object.clone(),
                reason,
            }),
        }
    }
    ds
}

fn collect_one(index: usize, s: &Scenario, cfg: &CollectConfig, estimator: &EstimatorFactory) -> Result<Outcome> {
    let plant = s.plant(&cfg.sim)?;
    let initial = s.initial_state(&plant, &cfg.sim)?;
    let sensor = SensorConfig {
        seed: rng::derive(s.seed, "sensor", 0),
        ..cfg.closed_loop.sensor.clone()
    };
    let (states, frames, commands): (Vec<SimState>, Vec<TactileFrame>, Vec<u8>) = match s.protocol {
        Protocol::RotateToStop => {
            let threshold = plant
                .holding_command(s.phi_start())
                .ok_or_else(|| Error::invalid("object cannot be held at the start pose"))?;
            let open = threshold.saturating_sub(cfg.sim.rotate_open_past);
            let mut policy = CommandSchedule::new(&plant, initial.grip_cmd, vec![(cfg.sim.timing.initial_hold, open)])?;
            let traj = simulate_episode(&plant, initial, &mut policy, &cfg.sim.timing)?;
            if traj.timed_out {
                return Ok(Outcome::Filtered("timeout".into()));
            }
            if traj.states.iter().any(|st| st.normal_force <= 0.0) {
                return Ok(Outcome::Filtered("grip released the object".into()));
            }
            let frames = render_sequence(&traj, &plant.object, &sensor)?;
            (traj.states, frames, traj.commands)
        }
        Protocol::AngleGoal => {
            let goal = s
                .stop_deg
                .ok_or_else(|| Error::invalid("angle-goal scenario without stop angle"))?;
            let loop_cfg = ClosedLoopConfig {
                sensor,
                timing: cfg.sim.timing.clone(),
                ..cfg.closed_loop.clone()
            };
            let mut est = estimator();
            let r = run_episode(&plant, initial, est.as_mut(), goal, &loop_cfg)?;
            match r.failure {
                FailureKind::None => {
                    if r.target_error > cfg.goal_tolerance {
                        return Ok(Outcome::Filtered(format!("target error {:.2} deg", r.target_error)));
                    }
                }
                FailureKind::Stuck if cfg.keep_stuck => {}
                f => return Ok(Outcome::Filtered(f.as_str().to_string())),
            }
            let commands = r.trace.iter().map(|row| row.cmd).collect();
            (r.states, r.frames, commands)
        }
    };
    if states.windows(2).any(|w| w[1].alpha < w[0].alpha - 1e-9) {
        return Ok(Outcome::Filtered("non-monotone angle".into()));
    }

    let noise =
        Normal::new(0.0, cfg.sim.angle_noise_deg.max(0.0)).map_err(|e| Error::invalid(format!("angle noise: {e}")))?;
    let mut meas_rng = rng::stream(s.seed, "angle-noise");
    let raw: Vec<f64> = states.iter().map(|st| st.alpha + noise.sample(&mut meas_rng)).collect();
    let (alpha_gt, omega_gt) = annotate_ground_truth(&raw, &cfg.kalman)?;

    let meta = SequenceMeta::from_scenario(s, &plant.object);
    let t = frames.iter().map(|f| f.t).collect();
    Ok(Outcome::Kept(TrajectorySequence {
        id: format!("seq-{index:05}"),
        meta,
        t,
        grip_cmd: commands,
        frames: frames.into_iter().map(|f| f.channels).collect(),
        alpha_gt,
        omega_gt,
    }))
}
