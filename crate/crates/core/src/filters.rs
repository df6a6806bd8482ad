//! Ground-truth annotation: a constant-velocity Kalman filter over the
//! measured angle, finite-difference velocity, and a zero-phase triangular
//! smoother.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::sim::TICK_HZ;

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanParams {
    pub a: Mat2,
    pub c: [f64; 2],
    pub q: Mat2,
    pub r: f64,
    pub sigma0: Mat2,
}

impl Default for KalmanParams {
    fn default() -> Self {
        KalmanParams {
            a: [[1.0, 1.0 / 60.0], [0.0, 1.0]],
            c: [1.0, 0.0],
            q: [[3.25e-6, 6.5e-5], [6.5e-5, 1.3e-3]],
            r: 1e-5,
            sigma0: [[1e-5, 0.0], [0.0, 1e-5]],
        }
    }
}

impl KalmanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) {
            return Err(Error::invalid("Kalman R must be positive"));
        }
        for (name, m) in [("Q", &self.q), ("Sigma0", &self.sigma0)] {
            if m[0][1] != m[1][0] || m[0][0] < 0.0 || m[1][1] < 0.0 || m[0][0] * m[1][1] - m[0][1] * m[1][0] < -1e-18 {
                return Err(Error::invalid(format!("Kalman {name} must be symmetric PSD")));
            }
        }
        Ok(())
    }
}

/// Filter estimate: `x = [alpha, omega]` and its covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanState {
    pub x: [f64; 2],
    pub sigma: Mat2,
}

pub fn kalman_init(z0: f64, p: &KalmanParams) -> KalmanState {
    KalmanState {
        x: [z0, 0.0],
        sigma: p.sigma0,
    }
}

fn matmul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// One predict + update cycle.
pub fn kalman_step(s: &KalmanState, z: f64, p: &KalmanParams) -> Result<KalmanState> {
    ensure_finite("Kalman measurement", &[z])?;
    let a = &p.a;
    let x_pred = [a[0][0] * s.x[0] + a[0][1] * s.x[1], a[1][0] * s.x[0] + a[1][1] * s.x[1]];
    let mut s_pred = matmul(&matmul(a, &s.sigma), &transpose(a));
    for (row, qrow) in s_pred.iter_mut().zip(&p.q) {
        for (v, q) in row.iter_mut().zip(qrow) {
            *v += q;
        }
    }

    let c = p.c;
    // Sigma⁻ Cᵀ
    let sc = [
        s_pred[0][0] * c[0] + s_pred[0][1] * c[1],
        s_pred[1][0] * c[0] + s_pred[1][1] * c[1],
    ];
    let innovation_var = c[0] * sc[0] + c[1] * sc[1] + p.r;
    let gain = [sc[0] / innovation_var, sc[1] / innovation_var];
    let innovation = z - (c[0] * x_pred[0] + c[1] * x_pred[1]);
    let x = [x_pred[0] + gain[0] * innovation, x_pred[1] + gain[1] * innovation];

    let i_kc = [
        [1.0 - gain[0] * c[0], -gain[0] * c[1]],
        [-gain[1] * c[0], 1.0 - gain[1] * c[1]],
    ];
    let mut sigma = matmul(&i_kc, &s_pred);
    let off = 0.5 * (sigma[0][1] + sigma[1][0]);
    sigma[0][1] = off;
    sigma[1][0] = off;

    ensure_finite("Kalman state", &[x[0], x[1], sigma[0][0], sigma[0][1], sigma[1][1]])?;
    Ok(KalmanState { x, sigma })
}

/// Runs the filter over a whole measurement series and returns the angle track.
pub fn kalman_filter(z: &[f64], p: &KalmanParams) -> Result<Vec<KalmanState>> {
    let Some(&first) = z.first() else {
        return Err(Error::invalid("Kalman filter needs at least one measurement"));
    };
    let mut out = Vec::with_capacity(z.len());
    let mut s = kalman_init(first, p);
    out.push(s);
    for &m in &z[1..] {
        s = kalman_step(&s, m, p)?;
        out.push(s);
    }
    Ok(out)
}

/// Central-difference angular velocity of a 60 Hz angle series, deg/s.
pub fn derivative_velocity(alpha: &[f64]) -> Result<Vec<f64>> {
    let n = alpha.len();
    if n < 2 {
        return Err(Error::invalid("derivative needs at least two samples"));
    }
    let mut out = Vec::with_capacity(n);
    out.push((alpha[1] - alpha[0]) * TICK_HZ);
    for i in 1..n - 1 {
        out.push((alpha[i + 1] - alpha[i - 1]) * 0.5 * TICK_HZ);
    }
    out.push((alpha[n - 1] - alpha[n - 2]) * TICK_HZ);
    Ok(out)
}

/// Triangular weights `1, 2, .., m, .., 2, 1` for an odd window, unnormalized.
pub fn triangular_weights(window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "triangular window must be odd and >= 1, got {window}"
        )));
    }
    let peak = window.div_ceil(2);
    Ok((0..window)
        .map(|i| (peak - (i as isize - (peak as isize - 1)).unsigned_abs()) as f64)
        .collect())
}

/// Non-causal triangular smoothing; edges renormalize the truncated window.
///
/// Computed as the centre sample plus the weighted mean deviation, so a
/// constant series comes back bit-for-bit.
pub fn triangular_smooth(series: &[f64], window: usize) -> Result<Vec<f64>> {
    let weights = triangular_weights(window)?;
    let half = (window / 2) as isize;
    let n = series.len() as isize;
    let out = (0..n)
        .map(|i| {
            let centre = series[i as usize];
            let mut acc = 0.0;
            let mut norm = 0.0;
            for (j, w) in weights.iter().enumerate() {
                let k = i + j as isize - half;
                if (0..n).contains(&k) {
                    acc += w * (series[k as usize] - centre);
                    norm += w;
                }
            }
            centre + acc / norm
        })
        .collect();
    Ok(out)
}

pub const SMOOTH_WINDOW: usize = 9;

/// Kalman-filtered angle and smoothed derivative velocity.
pub fn annotate_ground_truth(raw_alpha: &[f64], p: &KalmanParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let alpha: Vec<f64> = kalman_filter(raw_alpha, p)?.iter().map(|s| s.x[0]).collect();
    let omega = if alpha.len() < 2 {
        vec![0.0; alpha.len()]
    } else {
        triangular_smooth(&derivative_velocity(&alpha)?, SMOOTH_WINDOW)?
    };
    Ok((alpha, omega))
}
