//! Sequence regressors mapping tactile frames to (α, ω): LSTM, GRU and
//! vanilla RNN with a feed-forward head, and a sliding-window MLP. All
//! gradients are analytic (backpropagation through time for the recurrent
//! models).

mod checkpoint;
mod grad;
mod model;
mod ops;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, BLOB_FILE, CHECKPOINT_VERSION, MANIFEST_FILE};
pub use grad::{loss, zero_grads, Grads};
pub use model::{
    differentiate_alpha, integrate_omega, tensor_layout, Activation, Architecture, Hyper, InputNorm, ModelParams,
    OutputMode, Prediction, StreamState, TargetNorm, Tensor,
};
pub use train::{
    adam_step, continue_training, evaluate, make_batches, train, AdamConfig, Batch, EpochRecord, History,
    OptimizerState, Sample, TrainConfig,
};

use crate::controller::AngleEstimator;
use crate::error::Result;
use crate::sim::SimState;
use crate::tactile::TactileFrame;

/// Runs a trained model frame by frame inside the control loop.
///
/// Single-output models recover the missing quantity causally: a backward
/// difference for ω, a trapezoidal running sum for α.
#[derive(Debug, Clone)]
pub struct StreamingEstimator {
    params: ModelParams,
    state: StreamState,
    last: (f64, f64),
    started: bool,
}

impl StreamingEstimator {
    pub fn new(params: ModelParams) -> Self {
        let state = params.new_stream();
        StreamingEstimator {
            params,
            state,
            last: (0.0, 0.0),
            started: false,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

impl AngleEstimator for StreamingEstimator {
    fn reset(&mut self) {
        self.state = self.params.new_stream();
        self.last = (0.0, 0.0);
        self.started = false;
    }

    fn estimate(&mut self, frame: &TactileFrame, _truth: &SimState) -> Result<(f64, f64)> {
        let Some(y) = self.params.stream_step(&mut self.state, &frame.channels)? else {
            return Ok((0.0, 0.0));
        };
        let norm = self.params.target_norm;
        let dt = 1.0 / crate::sim::TICK_HZ;
        let (prev_a, prev_w) = self.last;
        let est = match self.params.hyper.mode {
            OutputMode::Both => norm.denormalize(y[0], y[1]),
            OutputMode::AlphaOnly => {
                let a = y[0] * norm.alpha_scale;
                (a, if self.started { (a - prev_a) / dt } else { 0.0 })
            }
            OutputMode::OmegaOnly => {
                let w = y[0] * norm.omega_scale;
                (
                    if self.started {
                        prev_a + 0.5 * (prev_w + w) * dt
                    } else {
                        0.0
                    },
                    w,
                )
            }
        };
        self.last = est;
        self.started = true;
        Ok(est)
    }
}
