//! Synthetic two-sensor, 3×3-pillar tactile frames.
//!
//! Channel order: for each sensor, nine pillars of
//! `fx fy fz dx dy dz contact`, then the sensor's global `Fx Fy Fz Tx Ty Tz`.
//! Four reserved channels follow both sensors: `s0.bias s0.counter s1.bias
//! s1.counter`. Forces are in N, displacements in mm, torques in N·mm.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::sim::{ObjectProfile, SimState, Trajectory, GRAVITY};

pub const NUM_SENSORS: usize = 2;
pub const PILLARS_PER_SENSOR: usize = 9;
pub const CHANNELS_PER_PILLAR: usize = 7;
pub const GLOBAL_CHANNELS: usize = 6;
pub const SENSOR_CHANNELS: usize = PILLARS_PER_SENSOR * CHANNELS_PER_PILLAR + GLOBAL_CHANNELS;
pub const RESERVED_CHANNELS: usize = 4;
pub const NUM_CHANNELS: usize = NUM_SENSORS * SENSOR_CHANNELS + RESERVED_CHANNELS;
pub const RESERVED_START: usize = NUM_SENSORS * SENSOR_CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    ForceX,
    ForceY,
    ForceZ,
    DispX,
    DispY,
    DispZ,
    Contact,
    GlobalForceX,
    GlobalForceY,
    GlobalForceZ,
    TorqueX,
    TorqueY,
    TorqueZ,
    Bias,
    Counter,
}

impl Quantity {
    const PILLAR: [Quantity; CHANNELS_PER_PILLAR] = [
        Quantity::ForceX,
        Quantity::ForceY,
        Quantity::ForceZ,
        Quantity::DispX,
        Quantity::DispY,
        Quantity::DispZ,
        Quantity::Contact,
    ];
    const GLOBAL: [Quantity; GLOBAL_CHANNELS] = [
        Quantity::GlobalForceX,
        Quantity::GlobalForceY,
        Quantity::GlobalForceZ,
        Quantity::TorqueX,
        Quantity::TorqueY,
        Quantity::TorqueZ,
    ];

    pub fn short(self) -> &'static str {
        match self {
            Quantity::ForceX => "fx",
            Quantity::ForceY => "fy",
            Quantity::ForceZ => "fz",
            Quantity::DispX => "dx",
            Quantity::DispY => "dy",
            Quantity::DispZ => "dz",
            Quantity::Contact => "contact",
            Quantity::GlobalForceX => "Fx",
            Quantity::GlobalForceY => "Fy",
            Quantity::GlobalForceZ => "Fz",
            Quantity::TorqueX => "Tx",
            Quantity::TorqueY => "Ty",
            Quantity::TorqueZ => "Tz",
            Quantity::Bias => "bias",
            Quantity::Counter => "counter",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Quantity::ForceX
            | Quantity::ForceY
            | Quantity::ForceZ
            | Quantity::GlobalForceX
            | Quantity::GlobalForceY
            | Quantity::GlobalForceZ => "N",
            Quantity::DispX | Quantity::DispY | Quantity::DispZ => "mm",
            Quantity::TorqueX | Quantity::TorqueY | Quantity::TorqueZ => "N*mm",
            Quantity::Contact | Quantity::Bias | Quantity::Counter => "1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub index: usize,
    /// Dataset column name, `c000`..`c141`.
    pub column: String,
    /// Descriptive name such as `s0.p4.fz`.
    pub name: String,
    pub sensor: usize,
    pub pillar: Option<usize>,
    pub quantity: Quantity,
    pub unit: String,
}

/// The full 142-entry channel table in frame order.
pub fn channel_layout() -> Vec<ChannelInfo> {
    let mut out = Vec::with_capacity(NUM_CHANNELS);
    let mut push = |sensor: usize, pillar: Option<usize>, quantity: Quantity| {
        let index = out.len();
        let name = match pillar {
            Some(p) => format!("s{sensor}.p{p}.{}", quantity.short()),
            None => format!("s{sensor}.{}", quantity.short()),
        };
        out.push(ChannelInfo {
            index,
            column: format!("c{index:03}"),
            name,
            sensor,
            pillar,
            quantity,
            unit: quantity.unit().to_string(),
        });
    };
    for sensor in 0..NUM_SENSORS {
        for pillar in 0..PILLARS_PER_SENSOR {
            for q in Quantity::PILLAR {
                push(sensor, Some(pillar), q);
            }
        }
        for q in Quantity::GLOBAL {
            push(sensor, None, q);
        }
    }
    for sensor in 0..NUM_SENSORS {
        push(sensor, None, Quantity::Bias);
        push(sensor, None, Quantity::Counter);
    }
    out
}

/// Layout as CSV text: `index,column,name,sensor,pillar,quantity,unit`.
pub fn layout_csv() -> String {
    let mut s = String::from("index,column,name,sensor,pillar,quantity,unit\n");
    for c in channel_layout() {
        let pillar = c.pillar.map(|p| p.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.index,
            c.column,
            c.name,
            c.sensor,
            pillar,
            c.quantity.short(),
            c.unit
        ));
    }
    s
}

pub fn pillar_channel(sensor: usize, pillar: usize, q: usize) -> usize {
    sensor * SENSOR_CHANNELS + pillar * CHANNELS_PER_PILLAR + q
}

pub fn global_channel(sensor: usize, q: usize) -> usize {
    sensor * SENSOR_CHANNELS + PILLARS_PER_SENSOR * CHANNELS_PER_PILLAR + q
}

/// True for the four reserved channels that carry no contact information.
pub fn is_reserved(index: usize) -> bool {
    index >= RESERVED_START
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileFrame {
    pub t: f64,
    pub channels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    /// N
    pub noise_sigma_force: f64,
    /// mm
    pub noise_sigma_disp: f64,
    /// mm
    pub pillar_pitch: f64,
    /// N/mm
    pub pillar_stiffness: f64,
    /// Tangential pillar force per rad/s of slip, N.
    pub slip_shear_gain: f64,
    pub seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            noise_sigma_force: 0.01,
            noise_sigma_disp: 0.005,
            pillar_pitch: 4.0,
            pillar_stiffness: 2.0,
            slip_shear_gain: 0.2,
            seed: 0,
        }
    }
}

impl SensorConfig {
    pub fn noiseless(&self) -> Self {
        SensorConfig {
            noise_sigma_force: 0.0,
            noise_sigma_disp: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma_force >= 0.0 && self.noise_sigma_disp >= 0.0) {
            return Err(Error::invalid("sensor noise sigmas must be non-negative"));
        }
        if !(self.pillar_pitch > 0.0 && self.pillar_stiffness > 0.0) {
            return Err(Error::invalid("pillar pitch and stiffness must be positive"));
        }
        Ok(())
    }
}

const CENTER_WEIGHTS: [f64; 3] = [1.0, 2.0, 1.0];

fn pillar_geometry(pitch: f64) -> [(f64, f64, f64); PILLARS_PER_SENSOR] {
    let mut out = [(0.0, 0.0, 0.0); PILLARS_PER_SENSOR];
    for row in 0..3 {
        for col in 0..3 {
            let x = (col as f64 - 1.0) * pitch;
            let y = (1.0 - row as f64) * pitch;
            let w = CENTER_WEIGHTS[row] * CENTER_WEIGHTS[col] / 16.0;
            out[row * 3 + col] = (x, y, w);
        }
    }
    out
}

/// Noise-free frame; a pure function of the state.
pub fn render_clean(state: &SimState, object: &ObjectProfile, cfg: &SensorConfig) -> Vec<f64> {
    let mut ch = vec![0.0; NUM_CHANNELS];
    let geometry = pillar_geometry(cfg.pillar_pitch);
    let normal = state.normal_force;
    let in_contact = normal > 0.0;
    let moment_norm: f64 = geometry.iter().map(|(x, y, w)| w * (x * x + y * y)).sum();
    let omega = state.omega.to_radians();
    // Each pad carries half of the contact torque and half of the weight.
    let pad_torque = 0.5 * state.contact_torque * 1000.0;
    let pad_weight = 0.5 * object.mass * GRAVITY;

    for sensor in 0..NUM_SENSORS {
        let mirror = if sensor == 0 { 1.0 } else { -1.0 };
        let mut global = [0.0; GLOBAL_CHANNELS];
        for (p, &(x, y, w)) in geometry.iter().enumerate() {
            let (fx, fy, fz) = if in_contact {
                let torsion = pad_torque * w / moment_norm;
                let slip = cfg.slip_shear_gain * omega / cfg.pillar_pitch;
                let tx = -y * mirror;
                let ty = x * mirror;
                (
                    (torsion + slip) * tx,
                    (torsion + slip) * ty - pad_weight * w,
                    normal * w,
                )
            } else {
                (0.0, 0.0, 0.0)
            };
            let k = cfg.pillar_stiffness;
            let values = [fx, fy, fz, fx / k, fy / k, fz / k, if in_contact { 1.0 } else { 0.0 }];
            for (q, v) in values.iter().enumerate() {
                ch[pillar_channel(sensor, p, q)] = *v;
            }
            global[0] += fx;
            global[1] += fy;
            global[2] += fz;
            global[3] += y * fz;
            global[4] -= x * fz;
            global[5] += x * fy - y * fx;
        }
        for (q, v) in global.iter().enumerate() {
            ch[global_channel(sensor, q)] = *v;
        }
    }
    ch[RESERVED_START] = 0.0;
    ch[RESERVED_START + 1] = state.tick as f64;
    ch[RESERVED_START + 2] = 0.0;
    ch[RESERVED_START + 3] = state.tick as f64;
    ch
}

/// Renders one frame with additive Gaussian noise drawn from `rng`.
pub fn render_frame<R: Rng + ?Sized>(
    state: &SimState,
    object: &ObjectProfile,
    cfg: &SensorConfig,
    rng: &mut R,
) -> TactileFrame {
    let mut channels = render_clean(state, object, cfg);
    let force = Normal::new(0.0, cfg.noise_sigma_force.max(0.0)).expect("finite sigma");
    let disp = Normal::new(0.0, cfg.noise_sigma_disp.max(0.0)).expect("finite sigma");
    let torque = Normal::new(0.0, (cfg.noise_sigma_force * cfg.pillar_pitch).max(0.0)).expect("finite sigma");
    for sensor in 0..NUM_SENSORS {
        for p in 0..PILLARS_PER_SENSOR {
            for q in 0..3 {
                channels[pillar_channel(sensor, p, q)] += force.sample(rng);
            }
            for q in 3..6 {
                channels[pillar_channel(sensor, p, q)] += disp.sample(rng);
            }
        }
        for q in 0..3 {
            channels[global_channel(sensor, q)] += force.sample(rng);
        }
        for q in 3..6 {
            channels[global_channel(sensor, q)] += torque.sample(rng);
        }
    }
    TactileFrame { t: state.t, channels }
}

/// One frame per trajectory tick, noise seeded from `cfg.seed`.
pub fn render_sequence(
    trajectory: &Trajectory,
    object: &ObjectProfile,
    cfg: &SensorConfig,
) -> Result<Vec<TactileFrame>> {
    if trajectory.is_empty() {
        return Err(Error::invalid("cannot render an empty trajectory"));
    }
    let mut rng: ChaCha8Rng = stream(cfg.seed, "tactile");
    Ok(trajectory
        .states
        .iter()
        .map(|s| render_frame(s, object, cfg, &mut rng))
        .collect())
}
