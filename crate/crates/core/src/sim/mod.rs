//! Planar pivot dynamics of an object held in a parallel gripper.
//!
//! The object is a pendulum about the grip axis. Gravity drives it toward
//! the hanging pose; fingertip friction (Coulomb with stiction, plus a
//! viscous slip term) resists. The gripper follows 8-bit position commands
//! with direction-dependent latency and slew.

mod dynamics;
mod episode;
mod gripper;
mod object;
mod scenario;

pub use dynamics::{
    friction_torque_cap, gravity_torque, DynamicsParams, PendingCommand, Plant, SimState, TICK, TICK_HZ,
};
pub use episode::{grip_settled, simulate_episode, ticks, CommandSchedule, EpisodeTiming, GripPolicy, Trajectory};
pub use gripper::{grip_normal_force, width_from_command, GripperModel, MAX_COMMAND};
pub use object::{
    catalog, catalog_names, lookup, ObjectClass, ObjectProfile, COM_FRACTION, DEFAULT_MU_RATIO, DEFAULT_MU_STATIC,
    GRAVITY,
};
pub use scenario::{FrictionVariant, Protocol, Scenario, SimConfig, TAPED_FRICTION_SCALE};
