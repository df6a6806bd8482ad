use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::ObjectProfile;

pub const MAX_COMMAND: u8 = 255;

/// Parallel gripper: 85 mm stroke in 256 position increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperModel {
    /// mm
    pub max_width: f64,
    pub increments: u16,
    /// mm per increment (nominal, informational)
    pub resolution: f64,
    /// s, delay before a closing command starts to move the fingers
    pub close_latency: f64,
    /// s, delay before an opening command starts to move the fingers
    pub open_latency: f64,
    /// mm/s
    pub close_slew_rate: f64,
    /// mm/s
    pub open_slew_rate: f64,
    /// N/mm
    pub pad_stiffness: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        GripperModel {
            max_width: 85.0,
            increments: 256,
            resolution: 0.33,
            close_latency: 0.83,
            open_latency: 0.1,
            close_slew_rate: 150.0,
            open_slew_rate: 0.5,
            pad_stiffness: super::object::CATALOG_PAD_STIFFNESS,
        }
    }
}

impl GripperModel {
    pub fn max_command(&self) -> u16 {
        self.increments - 1
    }

    pub fn latency_for(&self, from: u8, to: u8) -> f64 {
        if to > from {
            self.close_latency
        } else {
            self.open_latency
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.max_width,
            self.resolution,
            self.close_slew_rate,
            self.open_slew_rate,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("gripper widths and slew rates must be positive"));
        }
        if !(self.close_latency >= 0.0 && self.open_latency >= 0.0 && self.pad_stiffness >= 0.0) {
            return Err(Error::invalid("gripper latencies and stiffness must be non-negative"));
        }
        if self.increments != 256 {
            return Err(Error::invalid("gripper commands are 8-bit (256 increments)"));
        }
        Ok(())
    }
}

/// Finger opening in mm for a position command; 0 is fully open.
pub fn width_from_command(c: i64, g: &GripperModel) -> Result<f64> {
    let max = g.max_command() as i64;
    if !(0..=max).contains(&c) {
        return Err(Error::Range {
            what: "gripper command",
            value: c as f64,
            expected: "0..=255",
        });
    }
    Ok(g.max_width * (max - c) as f64 / max as f64)
}

pub(crate) fn width_for(c: u8, g: &GripperModel) -> f64 {
    let max = g.max_command() as f64;
    g.max_width * (max - c as f64) / max
}

/// Normal force from a linear pad spring, zero when the fingers do not touch.
pub fn grip_normal_force(object: &ObjectProfile, grip_width: f64, g: &GripperModel) -> f64 {
    g.pad_stiffness * (object.grip_thickness_mm() - grip_width).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::lookup;

    #[test]
    fn command_endpoints() {
        let g = GripperModel::default();
        assert_eq!(width_from_command(0, &g).unwrap(), 85.0);
        assert_eq!(width_from_command(255, &g).unwrap(), 0.0);
        let mid = width_from_command(128, &g).unwrap();
        assert!((mid - 85.0 * 127.0 / 255.0).abs() < 1e-12);
        assert!((mid - 42.333).abs() < 1e-3);
    }

    #[test]
    fn out_of_range_command_rejected() {
        let g = GripperModel::default();
        assert!(matches!(width_from_command(256, &g), Err(Error::Range { .. })));
        assert!(matches!(width_from_command(-1, &g), Err(Error::Range { .. })));
    }

    #[test]
    fn width_is_monotone_in_command() {
        let g = GripperModel::default();
        let widths: Vec<f64> = (0..=255).map(|c| width_from_command(c, &g).unwrap()).collect();
        assert!(widths.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn normal_force_spring() {
        let g = GripperModel {
            pad_stiffness: 10.0,
            ..Default::default()
        };
        let o = lookup("Toothpaste").unwrap();
        let th = o.grip_thickness_mm();
        assert_eq!(grip_normal_force(&o, th, &g), 0.0);
        assert!((grip_normal_force(&o, th - 1.0, &g) - 10.0).abs() < 1e-9);
        assert_eq!(grip_normal_force(&o, th + 5.0, &g), 0.0);
    }
}
