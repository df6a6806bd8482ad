use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default motion threshold on ground-truth ω, deg/s.
pub const SEGMENT_THRESHOLD: f64 = 5.0;
/// Default number of consecutive ticks above threshold that count as motion.
pub const SEGMENT_HOLD: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    /// Initial state: held still before rotation.
    Is,
    /// Dynamic range: rotating.
    Dr,
    /// Steady state: finished rotating.
    Ss,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Is, Segment::Dr, Segment::Ss];

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Is => "IS",
            Segment::Dr => "DR",
            Segment::Ss => "SS",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// `IS = [0, is_end)`, `DR = [is_end, dr_end)`, `SS = [dr_end, len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentBounds {
    pub is_end: usize,
    pub dr_end: usize,
    pub len: usize,
}

impl SegmentBounds {
    pub fn range(&self, s: Segment) -> std::ops::Range<usize> {
        match s {
            Segment::Is => 0..self.is_end,
            Segment::Dr => self.is_end..self.dr_end,
            Segment::Ss => self.dr_end..self.len,
        }
    }

    pub fn of(&self, tick: usize) -> Segment {
        if tick < self.is_end {
            Segment::Is
        } else if tick < self.dr_end {
            Segment::Dr
        } else {
            Segment::Ss
        }
    }
}

/// Splits a series into still / rotating / still phases.
///
/// Motion is a run of at least `hold` consecutive ticks with `|ω| > threshold`.
/// DR starts at the first such run and ends `hold` ticks after the last one,
/// so separate bursts share a single DR window. A series without motion is all IS.
pub fn segment(omega: &[f64], threshold: f64, hold: usize) -> SegmentBounds {
    let len = omega.len();
    let hold = hold.max(1);
    let mut first: Option<usize> = None;
    let mut last_end = 0;
    let mut run_start = 0;
    let mut run = 0;
    for (k, w) in omega.iter().enumerate() {
        if w.abs() > threshold {
            if run == 0 {
                run_start = k;
            }
            run += 1;
        } else {
            run = 0;
        }
        if run >= hold {
            first.get_or_insert(run_start);
            last_end = k + 1;
        }
    }
    match first {
        Some(is_end) => SegmentBounds {
            is_end,
            dr_end: (last_end + hold).min(len),
            len,
        },
        None => SegmentBounds {
            is_end: len,
            dr_end: len,
            len,
        },
    }
}

/// Per-segment angle and velocity MAE; `None` where the segment is empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentMae {
    pub angle: [Option<f64>; 3],
    pub velocity: [Option<f64>; 3],
}

impl SegmentMae {
    pub fn angle(&self, s: Segment) -> Option<f64> {
        self.angle[s.index()]
    }

    pub fn velocity(&self, s: Segment) -> Option<f64> {
        self.velocity[s.index()]
    }
}

/// Running sums of absolute errors per segment, for pooling ticks over many
/// sequences.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SegmentErrors {
    pub angle_sum: [f64; 3],
    pub velocity_sum: [f64; 3],
    pub count: [usize; 3],
}

impl SegmentErrors {
    pub fn add(&mut self, s: Segment, angle_err: f64, velocity_err: f64) {
        let i = s.index();
        self.angle_sum[i] += angle_err.abs();
        self.velocity_sum[i] += velocity_err.abs();
        self.count[i] += 1;
    }

    pub fn merge(&mut self, other: &SegmentErrors) {
        for i in 0..3 {
            self.angle_sum[i] += other.angle_sum[i];
            self.velocity_sum[i] += other.velocity_sum[i];
            self.count[i] += other.count[i];
        }
    }

    pub fn mae(&self) -> SegmentMae {
        let mut out = SegmentMae::default();
        for i in 0..3 {
            if self.count[i] > 0 {
                out.angle[i] = Some(self.angle_sum[i] / self.count[i] as f64);
                out.velocity[i] = Some(self.velocity_sum[i] / self.count[i] as f64);
            }
        }
        out
    }
}

/// Accumulates errors of predictions that start at tick `offset` of the
/// ground truth (windowed models skip the first `window - 1` ticks).
pub fn accumulate_errors(
    pred_alpha: &[f64],
    pred_omega: &[f64],
    offset: usize,
    gt_alpha: &[f64],
    gt_omega: &[f64],
    bounds: &SegmentBounds,
) -> Result<SegmentErrors> {
    let n = gt_alpha.len();
    if gt_omega.len() != n || bounds.len != n {
        return Err(Error::Length {
            context: "ground-truth angle vs velocity",
            left: n,
            right: gt_omega.len(),
        });
    }
    if pred_alpha.len() != pred_omega.len() || offset + pred_alpha.len() != n {
        return Err(Error::Length {
            context: "prediction vs ground truth",
            left: offset + pred_alpha.len().max(pred_omega.len()),
            right: n,
        });
    }
    let mut acc = SegmentErrors::default();
    for (j, (pa, pw)) in pred_alpha.iter().zip(pred_omega).enumerate() {
        let k = offset + j;
        acc.add(bounds.of(k), pa - gt_alpha[k], pw - gt_omega[k]);
    }
    Ok(acc)
}

pub fn mae_by_segment(
    pred_alpha: &[f64],
    pred_omega: &[f64],
    gt_alpha: &[f64],
    gt_omega: &[f64],
    bounds: &SegmentBounds,
) -> Result<SegmentMae> {
    Ok(accumulate_errors(pred_alpha, pred_omega, 0, gt_alpha, gt_omega, bounds)?.mae())
}
