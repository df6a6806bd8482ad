//! Grip controller: loosen in small steps while the object is stalled,
//! forward-predict the angle over the closing delay, and close fully once
//! the prediction lands on the goal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::sim::{grip_settled, ticks, EpisodeTiming, Plant, SimState, MAX_COMMAND, TICK};
use crate::tactile::{render_frame, SensorConfig, TactileFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Acceptable |predicted angle - goal|, degrees.
    pub eps_alpha: f64,
    /// Below this estimated speed the object counts as stalled, deg/s.
    pub omega_min: f64,
    /// Minimum time between opening actions, s.
    pub t_wait: f64,
    /// Forward-prediction horizon (gripper closing delay), s.
    pub d: f64,
    /// Gripper increments released per opening action.
    pub open_step: u8,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            eps_alpha: 1.0,
            omega_min: 20.0,
            t_wait: 0.75,
            d: 0.83,
            open_step: 2,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_alpha > 0.0 && self.omega_min > 0.0 && self.t_wait > 0.0 && self.d > 0.0 && self.open_step > 0) {
            return Err(Error::invalid("controller parameters must all be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Running,
    Closing,
    Done,
    Failed,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Running => "running",
            Phase::Closing => "closing",
            Phase::Done => "done",
            Phase::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Relative goal angle, degrees.
    pub goal: f64,
    /// Time of the last opening action, s.
    pub t_prev: f64,
    pub current_cmd: u8,
    pub phase: Phase,
}

impl ControllerState {
    pub fn new(goal: f64, start_cmd: u8, t_start: f64) -> Result<Self> {
        check_goal(goal)?;
        Ok(ControllerState {
            goal,
            t_prev: t_start,
            current_cmd: start_cmd,
            phase: Phase::Running,
        })
    }
}

fn check_goal(goal: f64) -> Result<()> {
    if goal > 0.0 && goal <= 180.0 {
        Ok(())
    } else {
        Err(Error::Range {
            what: "goal angle",
            value: goal,
            expected: "(0, 180]",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GripCommand {
    Hold,
    Open(u8),
    Close,
}

pub fn forward_predict(alpha: f64, omega: f64, d: f64) -> f64 {
    alpha + d * omega
}

/// One controller tick given the current `(alpha, omega)` estimate.
pub fn control_step(
    cs: &ControllerState,
    estimate: (f64, f64),
    t_now: f64,
    cfg: &ControllerConfig,
) -> (ControllerState, GripCommand) {
    let mut next = *cs;
    if cs.phase != Phase::Running {
        return (next, GripCommand::Hold);
    }
    let (alpha, omega) = estimate;
    let error = (forward_predict(alpha, omega, cfg.d) - cs.goal).abs();
    if error <= cfg.eps_alpha {
        next.phase = Phase::Closing;
        next.current_cmd = MAX_COMMAND;
        return (next, GripCommand::Close);
    }
    if omega < cfg.omega_min && t_now - cs.t_prev > cfg.t_wait {
        next.current_cmd = cs.current_cmd.saturating_sub(cfg.open_step);
        next.t_prev = t_now;
        return (next, GripCommand::Open(next.current_cmd));
    }
    (next, GripCommand::Hold)
}

/// Produces `(alpha, omega)` estimates once per tick.
pub trait AngleEstimator {
    fn reset(&mut self);

    /// `truth` is the simulator state; only oracle estimators may read it.
    fn estimate(&mut self, frame: &TactileFrame, truth: &SimState) -> Result<(f64, f64)>;
}

/// Reads ground truth straight from the simulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleEstimator;

impl AngleEstimator for OracleEstimator {
    fn reset(&mut self) {}

    fn estimate(&mut self, _frame: &TactileFrame, truth: &SimState) -> Result<(f64, f64)> {
        Ok((truth.alpha, truth.omega))
    }
}

/// Estimator backed by a closure; handy for constructed test cases.
pub struct FnEstimator<F>(pub F);

impl<F> AngleEstimator for FnEstimator<F>
where
    F: FnMut(&TactileFrame, &SimState) -> (f64, f64),
{
    fn reset(&mut self) {}

    fn estimate(&mut self, frame: &TactileFrame, truth: &SimState) -> Result<(f64, f64)> {
        Ok((self.0)(frame, truth))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    None,
    Dropped,
    Stuck,
    Timeout,
}

impl FailureKind {
    pub fn is_failure(self) -> bool {
        self != FailureKind::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::None => "none",
            FailureKind::Dropped => "dropped",
            FailureKind::Stuck => "stuck",
            FailureKind::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub alpha_gt: f64,
    pub omega_gt: f64,
    pub alpha_est: f64,
    pub omega_est: f64,
    pub cmd: u8,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClosedLoopConfig {
    pub controller: ControllerConfig,
    pub timing: EpisodeTiming,
    pub sensor: SensorConfig,
    /// Continuous time the estimate may report motion while the object rests, s.
    pub stuck_window: f64,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        ClosedLoopConfig {
            controller: ControllerConfig::default(),
            timing: EpisodeTiming::default(),
            sensor: SensorConfig::default(),
            stuck_window: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub goal: f64,
    pub final_alpha_gt: f64,
    pub target_error: f64,
    pub failure: FailureKind,
    /// Tick at which the close command was issued.
    pub close_tick: Option<usize>,
    pub trace: Vec<TraceRow>,
    pub frames: Vec<TactileFrame>,
    pub states: Vec<SimState>,
}

/// Runs plant → sensor → estimator → controller at 60 Hz until the object
/// rests after closing, or a failure is detected.
pub fn run_episode(
    plant: &Plant,
    initial: SimState,
    estimator: &mut dyn AngleEstimator,
    goal: f64,
    cfg: &ClosedLoopConfig,
) -> Result<EpisodeResult> {
    check_goal(goal)?;
    cfg.controller.validate()?;
    cfg.sensor.validate()?;
    estimator.reset();

    let hold_ticks = ticks(cfg.timing.initial_hold);
    let terminal_ticks = ticks(cfg.timing.terminal_hold);
    let max_ticks = ticks(cfg.timing.max_duration);
    let stuck_ticks = ticks(cfg.stuck_window);
    let ctl = &cfg.controller;

    let mut rng = stream(cfg.sensor.seed, "closed-loop-sensor");
    let mut cs = ControllerState::new(goal, initial.grip_cmd, initial.t)?;
    let mut state = initial;
    let mut trace = Vec::new();
    let mut frames = Vec::new();
    let mut states = Vec::new();
    let mut failure = FailureKind::None;
    let mut close_tick = None;
    let mut done_tick: Option<u64> = None;
    let mut stuck_run = 0u64;

    loop {
        let k = state.tick;
        let frame = render_frame(&state, &plant.object, &cfg.sensor, &mut rng);
        let (alpha_est, omega_est) = estimator.estimate(&frame, &state)?;

        if k >= hold_ticks {
            match cs.phase {
                Phase::Running => {
                    let (next, command) = control_step(&cs, (alpha_est, omega_est), state.t, ctl);
                    cs = next;
                    if command == GripCommand::Close {
                        close_tick = Some(k as usize);
                    }
                }
                Phase::Closing => {
                    if state.at_rest && grip_settled(plant, &state) {
                        cs.phase = Phase::Done;
                        done_tick = Some(k);
                    }
                }
                Phase::Done | Phase::Failed => {}
            }

            if cs.phase == Phase::Running {
                stuck_run = if omega_est > ctl.omega_min && state.at_rest {
                    stuck_run + 1
                } else {
                    0
                };
                let far = (forward_predict(alpha_est, omega_est, ctl.d) - goal).abs() > ctl.eps_alpha;
                if stuck_run >= stuck_ticks {
                    failure = FailureKind::Stuck;
                } else if far && (state.normal_force <= 0.0 || (plant.dynamics.clamp && state.phi <= 0.0)) {
                    failure = FailureKind::Dropped;
                }
            }
        }
        if k + 1 >= max_ticks && failure == FailureKind::None && done_tick.is_none() {
            failure = FailureKind::Timeout;
        }
        if failure.is_failure() {
            cs.phase = Phase::Failed;
        }

        trace.push(TraceRow {
            t: state.t,
            alpha_gt: state.alpha,
            omega_gt: state.omega,
            alpha_est,
            omega_est,
            cmd: cs.current_cmd,
            phase: cs.phase,
        });
        frames.push(frame);
        states.push(state.clone());

        let finished = done_tick.is_some_and(|d| k >= d + terminal_ticks);
        if finished || failure.is_failure() {
            break;
        }
        state = plant.step(&state, cs.current_cmd, TICK)?;
    }

    let final_alpha_gt = state.alpha;
    Ok(EpisodeResult {
        goal,
        final_alpha_gt,
        target_error: (final_alpha_gt - goal).abs(),
        failure,
        close_tick,
        trace,
        frames,
        states,
    })
}
