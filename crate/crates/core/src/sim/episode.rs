use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::gripper::width_for;
use crate::sim::{Plant, SimState, TICK};

/// Source of gripper commands during the active phase of an episode.
pub trait GripPolicy {
    fn command(&mut self, state: &SimState) -> u8;

    /// True once the policy has finished and the plant has settled.
    fn done(&self, state: &SimState) -> bool;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTiming {
    /// Stationary hold before the policy takes over, s.
    pub initial_hold: f64,
    /// Stationary hold after the policy reports done, s.
    pub terminal_hold: f64,
    /// Hard cap on episode duration, s.
    pub max_duration: f64,
}

impl Default for EpisodeTiming {
    fn default() -> Self {
        EpisodeTiming {
            initial_hold: 0.5,
            terminal_hold: 1.0,
            max_duration: 30.0,
        }
    }
}

/// Tick-aligned plant states and the command issued at each tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<SimState>,
    pub commands: Vec<u8>,
    pub timed_out: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.alpha).collect()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.omega).collect()
    }

    pub fn final_state(&self) -> &SimState {
        self.states.last().expect("trajectory is never empty")
    }
}

pub fn ticks(seconds: f64) -> u64 {
    (seconds / TICK).round() as u64
}

/// Runs hold → policy → terminal hold at 60 Hz.
pub fn simulate_episode(
    plant: &Plant,
    initial: SimState,
    policy: &mut dyn GripPolicy,
    timing: &EpisodeTiming,
) -> Result<Trajectory> {
    let hold_ticks = ticks(timing.initial_hold);
    let max_ticks = ticks(timing.max_duration).max(hold_ticks + 1);
    let terminal_ticks = ticks(timing.terminal_hold);
    let hold_cmd = initial.grip_cmd;

    let mut states = Vec::with_capacity(max_ticks as usize);
    let mut commands = Vec::with_capacity(max_ticks as usize);
    let mut state = initial;
    let mut done_at: Option<u64> = None;
    let mut last_cmd = hold_cmd;
    let mut timed_out = false;

    loop {
        let k = state.tick;
        let cmd = if k < hold_ticks {
            hold_cmd
        } else if done_at.is_some() {
            last_cmd
        } else {
            policy.command(&state)
        };
        last_cmd = cmd;
        if done_at.is_none() && k >= hold_ticks && policy.done(&state) {
            done_at = Some(k);
        }
        states.push(state.clone());
        commands.push(cmd);

        if let Some(d) = done_at {
            if k >= d + terminal_ticks {
                break;
            }
        }
        if k + 1 >= max_ticks {
            timed_out = done_at.is_none();
            break;
        }
        state = plant.step(&state, cmd, TICK)?;
    }

    Ok(Trajectory {
        states,
        commands,
        timed_out,
    })
}

/// True when the fingers have reached their commanded opening.
pub fn grip_settled(plant: &Plant, state: &SimState) -> bool {
    state.pending.is_empty() && state.grip_width == width_for(state.applied_cmd, &plant.gripper)
}

/// Piecewise-constant command schedule, `(time, command)` sorted by time.
///
/// Done once the last step has been issued, the fingers have settled and the
/// object is at rest.
#[derive(Debug, Clone)]
pub struct CommandSchedule {
    steps: Vec<(f64, u8)>,
    initial: u8,
    gripper_settled: bool,
    plant: Plant,
}

impl CommandSchedule {
    pub fn new(plant: &Plant, initial: u8, mut steps: Vec<(f64, u8)>) -> Result<Self> {
        if steps.iter().any(|(t, _)| !t.is_finite()) {
            return Err(Error::invalid("schedule times must be finite"));
        }
        steps.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(CommandSchedule {
            steps,
            initial,
            gripper_settled: false,
            plant: plant.clone(),
        })
    }

    /// Never changes the command.
    pub fn hold(plant: &Plant, cmd: u8) -> Self {
        CommandSchedule {
            steps: Vec::new(),
            initial: cmd,
            gripper_settled: false,
            plant: plant.clone(),
        }
    }

    fn current(&self, t: f64) -> u8 {
        self.steps
            .iter()
            .rev()
            .find(|(at, _)| *at <= t + 1e-9)
            .map(|s| s.1)
            .unwrap_or(self.initial)
    }
}

impl GripPolicy for CommandSchedule {
    fn command(&mut self, state: &SimState) -> u8 {
        let cmd = self.current(state.t);
        let last_at = self.steps.last().map(|s| s.0).unwrap_or(0.0);
        self.gripper_settled = state.t + 1e-9 >= last_at && state.grip_cmd == cmd && grip_settled(&self.plant, state);
        cmd
    }

    fn done(&self, state: &SimState) -> bool {
        self.gripper_settled && state.at_rest
    }
}
