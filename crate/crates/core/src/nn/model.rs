use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{gemv, sigmoid};
use crate::error::{Error, Result};
use crate::rng;
use crate::tactile::{is_reserved, NUM_CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Lstm,
    Gru,
    Rnn,
    Mlp,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Lstm,
        Architecture::Gru,
        Architecture::Rnn,
        Architecture::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Lstm => "lstm",
            Architecture::Gru => "gru",
            Architecture::Rnn => "rnn",
            Architecture::Mlp => "mlp",
        }
    }

    pub fn is_recurrent(self) -> bool {
        self != Architecture::Mlp
    }

    /// Number of gate blocks stacked in the recurrent weight matrices.
    pub(crate) fn gates(self) -> usize {
        match self {
            Architecture::Lstm => 4,
            Architecture::Gru => 3,
            Architecture::Rnn | Architecture::Mlp => 1,
        }
    }

    pub(crate) fn tensors_per_layer(self) -> usize {
        match self {
            Architecture::Lstm | Architecture::Rnn => 3,
            Architecture::Gru => 4,
            Architecture::Mlp => 0,
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(Architecture::Lstm),
            "gru" => Ok(Architecture::Gru),
            "rnn" => Ok(Architecture::Rnn),
            "mlp" => Ok(Architecture::Mlp),
            _ => Err(Error::invalid(format!(
                "unknown architecture {s:?} (expected lstm, gru, rnn or mlp)"
            ))),
        }
    }
}

/// Which targets the output head produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMode {
    Both,
    AlphaOnly,
    OmegaOnly,
}

impl OutputMode {
    pub fn outputs(self) -> usize {
        match self {
            OutputMode::Both => 2,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutputMode::Both => "both",
            OutputMode::AlphaOnly => "alpha-only",
            OutputMode::OmegaOnly => "omega-only",
        }
    }

    pub(crate) fn predicts_alpha(self) -> bool {
        self != OutputMode::OmegaOnly
    }

    pub(crate) fn predicts_omega(self) -> bool {
        self != OutputMode::AlphaOnly
    }
}

impl std::str::FromStr for OutputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "both" => Ok(OutputMode::Both),
            "alpha-only" | "alpha" => Ok(OutputMode::AlphaOnly),
            "omega-only" | "omega" => Ok(OutputMode::OmegaOnly),
            _ => Err(Error::invalid(format!("unknown output mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    pub(crate) fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Network shape. For the MLP, `hidden_size` is the width of every hidden
/// layer, `num_layers` counts linear layers including the output layer, and
/// the head fields are unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub input_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub dropout: f64,
    /// Linear layers in the output head, including the output layer.
    pub head_layers: usize,
    pub head_hidden: usize,
    pub activation: Activation,
    pub window_size: usize,
    pub mode: OutputMode,
}

impl Hyper {
    pub fn paper(arch: Architecture) -> Self {
        match arch {
            Architecture::Mlp => Hyper {
                input_size: NUM_CHANNELS,
                hidden_size: 500,
                num_layers: 4,
                dropout: 0.15,
                head_layers: 0,
                head_hidden: 0,
                activation: Activation::Tanh,
                window_size: 15,
                mode: OutputMode::Both,
            },
            _ => Hyper {
                input_size: NUM_CHANNELS,
                hidden_size: 500,
                num_layers: 3,
                dropout: if arch == Architecture::Rnn { 0.0 } else { 0.15 },
                head_layers: 2,
                head_hidden: 500,
                activation: Activation::Tanh,
                window_size: 1,
                mode: OutputMode::Both,
            },
        }
    }

    /// Desk-scale configuration: hidden 32, 2 layers.
    pub fn toy(arch: Architecture) -> Self {
        let paper = Hyper::paper(arch);
        match arch {
            Architecture::Mlp => Hyper {
                hidden_size: 32,
                num_layers: 3,
                ..paper
            },
            _ => Hyper {
                hidden_size: 32,
                num_layers: 2,
                head_hidden: 32,
                ..paper
            },
        }
    }

    /// Width of the vector fed to the first layer.
    pub fn flat_input(&self, arch: Architecture) -> usize {
        match arch {
            Architecture::Mlp => self.input_size * self.window_size,
            _ => self.input_size,
        }
    }

    pub fn validate(&self, arch: Architecture) -> Result<()> {
        if self.input_size == 0 || self.hidden_size == 0 || self.num_layers == 0 {
            return Err(Error::invalid(
                "input_size, hidden_size and num_layers must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Range {
                what: "dropout",
                value: self.dropout,
                expected: "[0, 1)",
            });
        }
        match arch {
            Architecture::Mlp => {
                if self.window_size == 0 {
                    return Err(Error::invalid("MLP window_size must be positive"));
                }
            }
            _ => {
                if self.head_layers == 0 || (self.head_layers > 1 && self.head_hidden == 0) {
                    return Err(Error::invalid(
                        "recurrent head needs at least one layer and a positive width",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetNorm {
    pub alpha_scale: f64,
    pub omega_scale: f64,
}

impl Default for TargetNorm {
    fn default() -> Self {
        TargetNorm {
            alpha_scale: 180.0,
            omega_scale: 750.0,
        }
    }
}

impl TargetNorm {
    pub fn normalize(&self, alpha: f64, omega: f64) -> (f64, f64) {
        (alpha / self.alpha_scale, omega / self.omega_scale)
    }

    pub fn denormalize(&self, alpha_n: f64, omega_n: f64) -> (f64, f64) {
        (alpha_n * self.alpha_scale, omega_n * self.omega_scale)
    }
}

/// Per-channel affine input normalization `(x - mean) * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputNorm {
    pub fn identity(width: usize) -> Self {
        InputNorm {
            mean: vec![0.0; width],
            scale: vec![1.0; width],
        }
    }

    /// Fits mean and inverse standard deviation over all frames. Reserved
    /// channels get scale 0 so they cannot leak bookkeeping values such as
    /// the frame counter.
    pub fn fit<'a>(width: usize, frames: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut sum = vec![0.0; width];
        let mut sq = vec![0.0; width];
        let mut n = 0usize;
        for f in frames {
            check_width(f, width)?;
            for ((s, q), x) in sum.iter_mut().zip(sq.iter_mut()).zip(f) {
                *s += x;
                *q += x * x;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::invalid("cannot fit input normalization on zero frames"));
        }
        let nf = n as f64;
        let mut norm = InputNorm::identity(width);
        for c in 0..width {
            let mean = sum[c] / nf;
            let var = (sq[c] / nf - mean * mean).max(0.0);
            let masked = width == NUM_CHANNELS && is_reserved(c);
            norm.mean[c] = if masked { 0.0 } else { mean };
            norm.scale[c] = if masked || var < 1e-12 { 0.0 } else { 1.0 / var.sqrt() };
        }
        Ok(norm)
    }

    pub fn apply(&self, frame: &[f64]) -> Vec<f64> {
        frame
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) * s)
            .collect()
    }
}

pub(crate) fn check_width(frame: &[f64], width: usize) -> Result<()> {
    if frame.len() != width {
        return Err(Error::Shape {
            context: "tactile frame".into(),
            expected: width.to_string(),
            got: frame.len().to_string(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            name: name.into(),
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Tensor names and shapes for an architecture, in storage order.
pub fn tensor_layout(arch: Architecture, hyper: &Hyper) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let h = hyper.hidden_size;
    if arch.is_recurrent() {
        let g = arch.gates() * h;
        for l in 0..hyper.num_layers {
            let input = if l == 0 { hyper.input_size } else { h };
            out.push((format!("rnn{l}.w_ih"), vec![g, input]));
            out.push((format!("rnn{l}.w_hh"), vec![g, h]));
            if arch == Architecture::Gru {
                out.push((format!("rnn{l}.b_ih"), vec![g]));
                out.push((format!("rnn{l}.b_hh"), vec![g]));
            } else {
                out.push((format!("rnn{l}.b"), vec![g]));
            }
        }
    }
    let prefix = if arch.is_recurrent() { "head" } else { "mlp" };
    let dims = dense_dims(arch, hyper);
    for (k, w) in dims.windows(2).enumerate() {
        out.push((format!("{prefix}{k}.w"), vec![w[1], w[0]]));
        out.push((format!("{prefix}{k}.b"), vec![w[1]]));
    }
    out
}

/// Widths through the feed-forward part (head or MLP), input first.
pub(crate) fn dense_dims(arch: Architecture, hyper: &Hyper) -> Vec<usize> {
    let (input, layers, width) = if arch.is_recurrent() {
        (hyper.hidden_size, hyper.head_layers, hyper.head_hidden)
    } else {
        (hyper.flat_input(arch), hyper.num_layers, hyper.hidden_size)
    };
    let mut dims = vec![input];
    dims.extend(std::iter::repeat_n(width, layers.saturating_sub(1)));
    dims.push(hyper.mode.outputs());
    dims
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    pub hyper: Hyper,
    pub target_norm: TargetNorm,
    pub input_norm: InputNorm,
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(arch: Architecture, hyper: Hyper, seed: u64) -> Result<Self> {
        hyper.validate(arch)?;
        let mut rng = rng::stream(seed, "init");
        let tensors = tensor_layout(arch, &hyper)
            .into_iter()
            .map(|(name, shape)| {
                let fan_in = if arch.is_recurrent() && name.starts_with("rnn") {
                    hyper.hidden_size
                } else if shape.len() == 2 {
                    shape[1]
                } else {
                    shape[0]
                };
                let k = 1.0 / (fan_in as f64).sqrt();
                let mut t = Tensor::zeros(name, shape);
                for v in &mut t.data {
                    *v = rng.random_range(-k..k);
                }
                t
            })
            .collect();
        Ok(ModelParams {
            arch,
            input_norm: InputNorm::identity(hyper.input_size),
            hyper,
            target_norm: TargetNorm::default(),
            tensors,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate(self.arch)?;
        let layout = tensor_layout(self.arch, &self.hyper);
        if layout.len() != self.tensors.len() {
            return Err(Error::Length {
                context: "model tensors",
                left: layout.len(),
                right: self.tensors.len(),
            });
        }
        for ((name, shape), t) in layout.iter().zip(&self.tensors) {
            let len: usize = shape.iter().product();
            if &t.name != name || &t.shape != shape || t.data.len() != len {
                return Err(Error::Shape {
                    context: format!("tensor {name}"),
                    expected: format!("{shape:?}"),
                    got: format!("{} {:?} ({} values)", t.name, t.shape, t.data.len()),
                });
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("tensor {name}")));
            }
        }
        let w = self.hyper.input_size;
        if self.input_norm.mean.len() != w || self.input_norm.scale.len() != w {
            return Err(Error::Length {
                context: "input normalization",
                left: w,
                right: self.input_norm.mean.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn dense_offset(&self) -> usize {
        self.hyper.num_layers * self.arch.tensors_per_layer()
    }

    /// First tick that receives a prediction.
    pub fn offset(&self) -> usize {
        match self.arch {
            Architecture::Mlp => self.hyper.window_size - 1,
            _ => 0,
        }
    }

    pub fn new_stream(&self) -> StreamState {
        let layers = if self.arch.is_recurrent() {
            self.hyper.num_layers
        } else {
            0
        };
        StreamState {
            h: vec![vec![0.0; self.hyper.hidden_size]; layers],
            c: vec![vec![0.0; self.hyper.hidden_size]; layers],
            window: VecDeque::new(),
        }
    }

    /// Feeds one raw frame and returns the normalized head output once a
    /// prediction is available.
    pub fn stream_step(&self, state: &mut StreamState, frame: &[f64]) -> Result<Option<Vec<f64>>> {
        check_width(frame, self.hyper.input_size)?;
        let x = self.input_norm.apply(frame);
        let top = if self.arch.is_recurrent() {
            let mut input = x;
            for l in 0..self.hyper.num_layers {
                let (h, c) = self.cell_forward(l, &input, &state.h[l], &state.c[l]);
                state.h[l] = h;
                state.c[l] = c;
                input = state.h[l].clone();
            }
            input
        } else {
            state.window.push_back(x);
            if state.window.len() > self.hyper.window_size {
                state.window.pop_front();
            }
            if state.window.len() < self.hyper.window_size {
                return Ok(None);
            }
            state.window.iter().flatten().copied().collect()
        };
        Ok(Some(self.dense_forward(top)))
    }

    /// Recurrent cell without caching; returns `(h, c)` (c is unused except for LSTM).
    fn cell_forward(&self, l: usize, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let base = l * self.arch.tensors_per_layer();
        let t = &self.tensors;
        let hs = self.hyper.hidden_size;
        match self.arch {
            Architecture::Lstm => {
                let mut z = t[base + 2].data.clone();
                gemv(&mut z, &t[base].data, x);
                gemv(&mut z, &t[base + 1].data, h);
                let gates = lstm_gates(&z, hs);
                let c_new: Vec<f64> = (0..hs).map(|j| gates.f[j] * c[j] + gates.i[j] * gates.g[j]).collect();
                let h_new = (0..hs).map(|j| gates.o[j] * c_new[j].tanh()).collect();
                (h_new, c_new)
            }
            Architecture::Gru => {
                let mut a = t[base + 2].data.clone();
                gemv(&mut a, &t[base].data, x);
                let mut b = t[base + 3].data.clone();
                gemv(&mut b, &t[base + 1].data, h);
                let g = gru_gates(&a, &b, hs);
                let h_new = (0..hs).map(|j| (1.0 - g.z[j]) * g.n[j] + g.z[j] * h[j]).collect();
                (h_new, Vec::new())
            }
            Architecture::Rnn => {
                let mut z = t[base + 2].data.clone();
                gemv(&mut z, &t[base].data, x);
                gemv(&mut z, &t[base + 1].data, h);
                (z.iter().map(|v| v.tanh()).collect(), Vec::new())
            }
            Architecture::Mlp => unreachable!("MLP has no recurrent cells"),
        }
    }

    fn dense_forward(&self, mut a: Vec<f64>) -> Vec<f64> {
        let off = self.dense_offset();
        let n = (self.tensors.len() - off) / 2;
        for k in 0..n {
            let w = &self.tensors[off + 2 * k];
            let b = &self.tensors[off + 2 * k + 1];
            let mut z = b.data.clone();
            gemv(&mut z, &w.data, &a);
            if k + 1 < n {
                for v in &mut z {
                    *v = self.hyper.activation.apply(*v);
                }
            }
            a = z;
        }
        a
    }

    /// Whole-sequence inference, built on [`ModelParams::stream_step`] so
    /// streaming and batch outputs agree exactly.
    pub fn predict(&self, frames: &[Vec<f64>]) -> Result<Prediction> {
        let off = self.offset();
        if frames.len() <= off {
            return Err(Error::invalid(format!(
                "sequence of {} frames is shorter than the model window {}",
                frames.len(),
                off + 1
            )));
        }
        let mut state = self.new_stream();
        let mut raw = Vec::with_capacity(frames.len() - off);
        for f in frames {
            if let Some(y) = self.stream_step(&mut state, f)? {
                raw.push(y);
            }
        }
        Ok(Prediction::from_raw(&raw, self.hyper.mode, &self.target_norm, off))
    }
}

pub(crate) struct LstmGates {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
}

pub(crate) fn lstm_gates(z: &[f64], h: usize) -> LstmGates {
    LstmGates {
        i: z[..h].iter().map(|v| sigmoid(*v)).collect(),
        f: z[h..2 * h].iter().map(|v| sigmoid(*v)).collect(),
        g: z[2 * h..3 * h].iter().map(|v| v.tanh()).collect(),
        o: z[3 * h..].iter().map(|v| sigmoid(*v)).collect(),
    }
}

pub(crate) struct GruGates {
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    /// `W_hn h + b_hn`, kept for the reset-gate gradient.
    pub hn: Vec<f64>,
}

/// `a` holds the input projections, `b` the hidden projections, each `[r z n]`.
pub(crate) fn gru_gates(a: &[f64], b: &[f64], h: usize) -> GruGates {
    let r: Vec<f64> = (0..h).map(|j| sigmoid(a[j] + b[j])).collect();
    let z = (0..h).map(|j| sigmoid(a[h + j] + b[h + j])).collect();
    let hn: Vec<f64> = b[2 * h..].to_vec();
    let n = (0..h).map(|j| (a[2 * h + j] + r[j] * hn[j]).tanh()).collect();
    GruGates { r, z, n, hn }
}

/// Carried inference state for frame-by-frame use.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    window: VecDeque<Vec<f64>>,
}

/// Per-step estimates in degrees and degrees/s. `offset` is the tick index
/// of the first prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub alpha: Vec<f64>,
    pub omega: Vec<f64>,
    pub mode: OutputMode,
    pub offset: usize,
}

impl Prediction {
    pub(crate) fn from_raw(raw: &[Vec<f64>], mode: OutputMode, norm: &TargetNorm, offset: usize) -> Self {
        let (alpha, omega) = match mode {
            OutputMode::Both => raw.iter().map(|y| norm.denormalize(y[0], y[1])).unzip(),
            OutputMode::AlphaOnly => {
                let a: Vec<f64> = raw.iter().map(|y| y[0] * norm.alpha_scale).collect();
                let w = differentiate_alpha(&a);
                (a, w)
            }
            OutputMode::OmegaOnly => {
                let w: Vec<f64> = raw.iter().map(|y| y[0] * norm.omega_scale).collect();
                (integrate_omega(&w), w)
            }
        };
        Prediction {
            alpha,
            omega,
            mode,
            offset,
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Cumulative trapezoidal integral of a 60 Hz velocity series, starting at 0.
pub fn integrate_omega(omega: &[f64]) -> Vec<f64> {
    let dt = 1.0 / crate::sim::TICK_HZ;
    let mut out = Vec::with_capacity(omega.len());
    let mut acc = 0.0;
    for (i, w) in omega.iter().enumerate() {
        if i > 0 {
            acc += 0.5 * (omega[i - 1] + w) * dt;
        }
        out.push(acc);
    }
    out
}

/// Central-difference velocity of a 60 Hz angle series (one-sided at the ends).
pub fn differentiate_alpha(alpha: &[f64]) -> Vec<f64> {
    match alpha.len() {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => crate::filters::derivative_velocity(alpha).expect("length checked"),
    }
}

/// Mean absolute difference; both slices must be the same length.
pub(crate) fn mae(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    s / a.len() as f64
}
