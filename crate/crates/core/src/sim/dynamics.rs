use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::gripper::{grip_normal_force, width_for};
use crate::sim::{GripperModel, ObjectProfile, GRAVITY};

/// Simulation tick rate of the sensor, estimator and controller.
pub const TICK_HZ: f64 = 60.0;
pub const TICK: f64 = 1.0 / TICK_HZ;

/// Torque from gravity about the grip axis, N·m. Positive drives `phi` toward 0.
pub fn gravity_torque(object: &ObjectProfile, phi_deg: f64) -> f64 {
    object.mass * GRAVITY * object.com_offset * phi_deg.to_radians().sin()
}

/// Coulomb friction torque cap of both fingertips, N·m.
pub fn friction_torque_cap(object: &ObjectProfile, normal_force: f64, at_rest: bool) -> f64 {
    let mu = if at_rest { object.mu_static } else { object.mu_kinetic };
    2.0 * mu * normal_force * object.pad_contact_radius
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Internal integration substeps per call to [`Plant::step`].
    pub substeps: u32,
    /// Stiction re-latch speed, deg/s.
    pub omega_eps: f64,
    /// Viscous slip coefficient, s/rad: damping torque = coeff · 2·N·r · ω.
    pub viscous_slip: f64,
    /// Hard stop at the hanging pose (`phi` >= 0). Disabled only for diagnostics.
    pub clamp: bool,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        DynamicsParams {
            substeps: 10,
            omega_eps: 1.0,
            viscous_slip: 0.2,
            clamp: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingCommand {
    pub apply_at: f64,
    pub cmd: u8,
}

/// Instantaneous plant state. Angles in degrees, widths in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Rotation since the episode started, `phi_start - phi`.
    pub alpha: f64,
    /// Long axis angle from the hanging-down vertical.
    pub phi: f64,
    /// d(alpha)/dt, deg/s.
    pub omega: f64,
    pub phi_start: f64,
    pub grip_width: f64,
    /// Most recent command sent to the gripper.
    pub grip_cmd: u8,
    /// Command the fingers are currently moving toward.
    pub applied_cmd: u8,
    pub pending: Vec<PendingCommand>,
    pub normal_force: f64,
    /// Torque transmitted through the contact (holding or dissipative), N·m.
    pub contact_torque: f64,
    pub t: f64,
    pub at_rest: bool,
    pub tick: u64,
}

impl SimState {
    pub fn mechanical_energy(&self, plant: &Plant) -> f64 {
        let w = self.omega.to_radians();
        0.5 * plant.inertia() * w * w - plant.gravity_gain() * self.phi.to_radians().cos()
    }
}

/// Object, gripper and integrator settings for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub object: ObjectProfile,
    pub gripper: GripperModel,
    pub dynamics: DynamicsParams,
    /// Projection of the centre-of-mass lever onto the rotation plane
    /// (cosine of the approach yaw).
    pub lever_scale: f64,
}

impl Plant {
    pub fn new(object: ObjectProfile, gripper: GripperModel) -> Self {
        Plant {
            object,
            gripper,
            dynamics: DynamicsParams::default(),
            lever_scale: 1.0,
        }
    }

    pub fn with_dynamics(mut self, dynamics: DynamicsParams) -> Self {
        self.dynamics = dynamics;
        self
    }

    pub fn with_approach(mut self, approach_deg: f64) -> Self {
        self.lever_scale = approach_deg.to_radians().cos();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.object.validate()?;
        self.gripper.validate()?;
        if self.dynamics.substeps == 0 {
            return Err(Error::invalid("substeps must be at least 1"));
        }
        if !(self.lever_scale > 0.0 && self.lever_scale <= 1.0) {
            return Err(Error::invalid("approach angle must lie in (-90, 90) degrees"));
        }
        Ok(())
    }

    pub fn inertia(&self) -> f64 {
        self.object.inertia_grip()
    }

    /// m·g·r of the pendulum, N·m.
    pub fn gravity_gain(&self) -> f64 {
        self.object.mass * GRAVITY * self.object.com_offset * self.lever_scale
    }

    pub fn gravity_torque(&self, phi_deg: f64) -> f64 {
        self.lever_scale * gravity_torque(&self.object, phi_deg)
    }

    pub fn normal_force(&self, grip_width: f64) -> f64 {
        grip_normal_force(&self.object, grip_width, &self.gripper)
    }

    /// Static friction cap at a given command; used to find slip thresholds.
    pub fn static_cap_at(&self, cmd: u8) -> f64 {
        friction_torque_cap(&self.object, self.normal_force(width_for(cmd, &self.gripper)), true)
    }

    /// Smallest command (widest opening) that still holds the object at rest at `phi_deg`.
    pub fn holding_command(&self, phi_deg: f64) -> Option<u8> {
        let need = self.gravity_torque(phi_deg).abs();
        (0..=255u8).find(|&c| self.static_cap_at(c) >= need)
    }

    /// Object held at rest with the fingers settled at `cmd`.
    pub fn initial_state(&self, phi_start: f64, cmd: u8) -> SimState {
        let grip_width = width_for(cmd, &self.gripper);
        let normal_force = self.normal_force(grip_width);
        SimState {
            alpha: 0.0,
            phi: phi_start,
            omega: 0.0,
            phi_start,
            grip_width,
            grip_cmd: cmd,
            applied_cmd: cmd,
            pending: Vec::new(),
            normal_force,
            contact_torque: self.gravity_torque(phi_start),
            t: 0.0,
            at_rest: true,
            tick: 0,
        }
    }

    /// Advances the plant by `dt` seconds with `cmd` as the current gripper command.
    pub fn step(&self, state: &SimState, cmd: u8, dt: f64) -> Result<SimState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Range {
                what: "time step",
                value: dt,
                expected: "> 0",
            });
        }
        let mut s = state.clone();
        if cmd != s.grip_cmd {
            let latency = self.gripper.latency_for(s.grip_cmd, cmd);
            s.pending.push(PendingCommand {
                apply_at: s.t + latency,
                cmd,
            });
            s.grip_cmd = cmd;
        }

        let n = self.dynamics.substeps;
        let h = dt / n as f64;
        let inertia = self.inertia();
        let gain = self.gravity_gain();
        let omega_eps = self.dynamics.omega_eps.to_radians();
        let mut phi = s.phi.to_radians();
        let mut rate = s.omega.to_radians();

        for i in 0..n {
            let t_sub = state.t + h * (i + 1) as f64;
            // Fingers are sampled at the substep midpoint while they slew.
            self.actuate(&mut s, t_sub - 0.5 * h, 0.5 * h);
            let normal = self.normal_force(s.grip_width);
            self.actuate(&mut s, t_sub, 0.5 * h);
            s.normal_force = normal;
            let cap_static = friction_torque_cap(&self.object, normal, true);
            let cap_kinetic = friction_torque_cap(&self.object, normal, false);
            let damping = self.dynamics.viscous_slip * 2.0 * normal * self.object.pad_contact_radius;
            let tau_g = gain * phi.sin();

            if s.at_rest {
                if tau_g.abs() <= cap_static {
                    s.contact_torque = tau_g;
                    continue;
                }
                s.at_rest = false;
            }

            // Symmetric split: half the dissipation, the conservative step, then the other half.
            // Exact solution of I·dv/dt = -(cap + damping·v) over h/2, stopped at v = 0.
            let dissipate = |r: f64| -> f64 {
                let speed = if damping > 0.0 {
                    let floor = cap_kinetic / damping;
                    (r.abs() + floor) * (-0.5 * h * damping / inertia).exp() - floor
                } else {
                    r.abs() - 0.5 * h * cap_kinetic / inertia
                };
                r.signum() * speed.max(0.0)
            };
            let before = dissipate(rate);
            let (next_phi, free_rate) = conservative_step(phi, before, h, inertia, gain)?;
            phi = next_phi;
            let after = dissipate(free_rate);
            s.contact_torque = inertia * ((rate - before) + (free_rate - after)) / h;
            rate = after;

            if self.dynamics.clamp && phi <= 0.0 {
                phi = 0.0;
                rate = 0.0;
                s.at_rest = true;
                s.contact_torque = 0.0;
                continue;
            }
            let tau_after = gain * phi.sin();
            if rate.abs() < omega_eps && tau_after.abs() <= cap_static {
                rate = 0.0;
                s.at_rest = true;
                s.contact_torque = tau_after;
            }
        }

        s.phi = phi.to_degrees();
        s.omega = rate.to_degrees();
        s.alpha = s.phi_start - s.phi;
        s.t = state.t + dt;
        s.tick = state.tick + 1;
        if ![s.phi, s.omega, s.grip_width, s.contact_torque]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFinite(format!("sim state at t = {:.4}", s.t)));
        }
        Ok(s)
    }

    fn actuate(&self, s: &mut SimState, t_sub: f64, h: f64) {
        while let Some(pos) = s.pending.iter().position(|p| p.apply_at <= t_sub) {
            s.applied_cmd = s.pending.remove(pos).cmd;
        }
        let target = width_for(s.applied_cmd, &self.gripper);
        let diff = target - s.grip_width;
        if diff == 0.0 {
            return;
        }
        let rate = if diff > 0.0 {
            self.gripper.open_slew_rate
        } else {
            self.gripper.close_slew_rate
        };
        let max_move = rate * h;
        s.grip_width = if diff.abs() <= max_move {
            target
        } else {
            s.grip_width + max_move * diff.signum()
        };
    }
}

/// Energy-preserving (discrete gradient) step of the frictionless pendulum.
///
/// `rate` is d(alpha)/dt = -d(phi)/dt in rad/s. Returns the new `phi` and rate.
fn conservative_step(phi: f64, rate: f64, h: f64, inertia: f64, gain: f64) -> Result<(f64, f64)> {
    let u0 = -rate;
    let stiff = 2.0 * inertia / (h * h);
    let mut delta = h * u0 - 0.5 * h * h * gain / inertia * phi.sin();
    for _ in 0..50 {
        let half = 0.5 * delta;
        let s = (phi + half).sin();
        let c = (phi + half).cos();
        let (sinc, dsinc) = sinc_and_derivative(half);
        let f = stiff * (delta - h * u0) + gain * s * sinc;
        let df = stiff + gain * 0.5 * (c * sinc + s * dsinc);
        let step = f / df;
        delta -= step;
        if step.abs() <= 1e-16 * delta.abs().max(1e-3) {
            break;
        }
    }
    if !delta.is_finite() {
        return Err(Error::NonFinite("pendulum step".into()));
    }
    let u1 = 2.0 * delta / h - u0;
    Ok((phi + delta, -u1))
}

fn sinc_and_derivative(x: f64) -> (f64, f64) {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        (1.0 - x2 / 6.0 + x2 * x2 / 120.0, -x / 3.0 + x * x2 / 30.0)
    } else {
        let s = x.sin() / x;
        (s, (x.cos() - s) / x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::lookup;

    fn plant(name: &str) -> Plant {
        Plant::new(lookup(name).unwrap(), GripperModel::default())
    }

    #[test]
    fn gravity_torque_values() {
        let o = lookup("Toothpaste").unwrap();
        let probe = ObjectProfile {
            com_offset: 0.05,
            ..o.clone()
        };
        assert_eq!(gravity_torque(&probe, 0.0), 0.0);
        assert!((gravity_torque(&probe, 90.0) - 0.025506).abs() < 1e-9);
        assert!(gravity_torque(&probe, 180.0).abs() < 1e-15);
    }

    #[test]
    fn friction_cap_values() {
        let mut o = lookup("Toothpaste").unwrap();
        o.mu_kinetic = 0.3;
        o.mu_static = 0.5;
        o.pad_contact_radius = 0.01;
        assert_eq!(friction_torque_cap(&o, 0.0, false), 0.0);
        assert!((friction_torque_cap(&o, 10.0, false) - 0.06).abs() < 1e-12);
        assert!((friction_torque_cap(&o, 10.0, true) - 0.10).abs() < 1e-12);
    }

    #[test]
    fn stiction_holds_under_high_grip() {
        let p = plant("Spray2");
        let mut s = p.initial_state(90.0, 250);
        for _ in 0..300 {
            s = p.step(&s, 250, TICK).unwrap();
            assert_eq!(s.omega, 0.0);
            assert!(s.at_rest);
        }
        assert_eq!(s.alpha, 0.0);
        assert!((s.t - 5.0).abs() < 1e-9);
    }

    #[test]
    fn frictionless_energy_is_conserved() {
        let p = Plant::new(lookup("Toothpaste").unwrap().frictionless(), GripperModel::default()).with_dynamics(
            DynamicsParams {
                clamp: false,
                ..Default::default()
            },
        );
        let mut s = p.initial_state(90.0, 200);
        let e0 = s.mechanical_energy(&p);
        let scale = p.gravity_gain();
        for _ in 0..1000 {
            s = p.step(&s, 200, TICK).unwrap();
        }
        let drift = (s.mechanical_energy(&p) - e0).abs() / scale;
        assert!(drift < 1e-6, "drift {drift}");
        assert!(s.phi < 0.0 || s.omega != 0.0);
    }

    #[test]
    fn friction_dissipates_every_step() {
        let p = plant("Breadboard");
        let hold = p.holding_command(90.0).unwrap();
        let mut s = p.initial_state(90.0, hold - 3);
        let mut e = s.mechanical_energy(&p);
        let mut moved = false;
        for _ in 0..600 {
            s = p.step(&s, hold - 3, TICK).unwrap();
            let e1 = s.mechanical_energy(&p);
            assert!(e1 <= e + 1e-12 * p.gravity_gain(), "energy rose {e} -> {e1}");
            moved |= s.omega > 0.0;
            e = e1;
        }
        assert!(moved);
    }

    #[test]
    fn rest_state_has_zero_velocity() {
        let p = plant("Shampoo");
        let hold = p.holding_command(90.0).unwrap();
        let mut s = p.initial_state(90.0, hold + 4);
        let mut prev_alpha = 0.0;
        for k in 0..900 {
            let cmd = if k < 30 { hold + 4 } else { hold.saturating_sub(6) };
            s = p.step(&s, cmd, TICK).unwrap();
            if s.at_rest {
                assert_eq!(s.omega, 0.0);
            }
            assert!(s.alpha >= prev_alpha);
            prev_alpha = s.alpha;
        }
        assert!(s.alpha > 1.0 && s.alpha <= 90.0);
    }

    #[test]
    fn non_positive_dt_rejected() {
        let p = plant("Pill");
        let s = p.initial_state(90.0, 200);
        assert!(p.step(&s, 200, 0.0).is_err());
        assert!(p.step(&s, 200, f64::NAN).is_err());
    }

    #[test]
    fn holding_command_is_threshold() {
        let p = plant("Magnet");
        let c = p.holding_command(90.0).unwrap();
        assert!(p.static_cap_at(c) >= p.gravity_torque(90.0));
        assert!(p.static_cap_at(c - 1) < p.gravity_torque(90.0));
    }
}
