use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grad::{zero_grads, Grads};
use super::model::{mae, Architecture, Hyper, InputNorm, ModelParams};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            weight_decay: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub cfg: AdamConfig,
    pub m: Grads,
    pub v: Grads,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, cfg: AdamConfig) -> Self {
        OptimizerState {
            cfg,
            m: zero_grads(params),
            v: zero_grads(params),
            step: 0,
        }
    }
}

/// Bias-corrected Adam with weight decay added to the gradient as an L2 term.
pub fn adam_step(params: &mut ModelParams, grads: &Grads, opt: &mut OptimizerState) -> Result<()> {
    let shapes_match = grads.len() == params.tensors.len()
        && opt.m.len() == grads.len()
        && params
            .tensors
            .iter()
            .zip(grads)
            .zip(&opt.m)
            .all(|((t, g), m)| t.len() == g.len() && t.len() == m.len());
    if !shapes_match {
        return Err(Error::Shape {
            context: "adam step".into(),
            expected: format!("{} tensors matching the model", params.tensors.len()),
            got: format!("{} gradient tensors", grads.len()),
        });
    }
    let c = opt.cfg;
    opt.step += 1;
    let bc1 = 1.0 - c.beta1.powi(opt.step as i32);
    let bc2 = 1.0 - c.beta2.powi(opt.step as i32);
    for (k, t) in params.tensors.iter_mut().enumerate() {
        let (m, v) = (&mut opt.m[k], &mut opt.v[k]);
        for (j, theta) in t.data.iter_mut().enumerate() {
            let g = grads[k][j] + c.weight_decay * *theta;
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *theta -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
        }
    }
    Ok(())
}

/// Sequences sharing one optimizer step, cropped to `len` ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub len: usize,
}

/// Shuffles sequence indices and groups them; each batch is cropped to its
/// shortest member, keeping the start of every sequence.
pub fn make_batches<R: Rng + ?Sized>(lengths: &[usize], batch_size: usize, rng: &mut R) -> Result<Vec<Batch>> {
    if lengths.is_empty() {
        return Err(Error::invalid("cannot batch an empty dataset"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    Ok(order
        .chunks(batch_size)
        .map(|chunk| Batch {
            len: chunk.iter().map(|&i| lengths[i]).min().unwrap_or(0),
            indices: chunk.to_vec(),
        })
        .collect())
}

/// A borrowed training sequence: raw frames and annotated targets.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub frames: &'a [Vec<f64>],
    pub alpha: &'a [f64],
    pub omega: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_angle_mae: Option<f64>,
    pub val_velocity_mae: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,train_loss,val_angle_mae,val_velocity_mae\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch,
                r.train_loss,
                opt(r.val_angle_mae),
                opt(r.val_velocity_mae)
            ));
        }
        out
    }
}

/// Angle and velocity MAE pooled over every predicted tick.
pub fn evaluate(params: &ModelParams, samples: &[Sample]) -> Result<(f64, f64)> {
    let per: Vec<Result<(f64, f64, usize)>> = samples
        .par_iter()
        .map(|s| {
            let p = params.predict(s.frames)?;
            let n = p.len();
            Ok((
                mae(&p.alpha, &s.alpha[p.offset..]) * n as f64,
                mae(&p.omega, &s.omega[p.offset..]) * n as f64,
                n,
            ))
        })
        .collect();
    let (mut a, mut w, mut n) = (0.0, 0.0, 0usize);
    for r in per {
        let (da, dw, dn) = r?;
        a += da;
        w += dw;
        n += dn;
    }
    if n == 0 {
        return Err(Error::invalid("no predicted ticks to evaluate"));
    }
    Ok((a / n as f64, w / n as f64))
}

fn check_samples(params: &ModelParams, samples: &[Sample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.alpha.len() != s.frames.len() || s.omega.len() != s.frames.len() {
            return Err(Error::Length {
                context: "sample frames vs targets",
                left: s.frames.len(),
                right: s.alpha.len().min(s.omega.len()),
            });
        }
        if s.frames.len() <= params.offset() {
            return Err(Error::invalid(format!(
                "sample {i} has {} frames, fewer than the model window {}",
                s.frames.len(),
                params.offset() + 1
            )));
        }
    }
    Ok(())
}

/// Fresh model: seeded init, input normalization fitted on the training frames.
pub fn train(
    arch: Architecture,
    hyper: Hyper,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<(ModelParams, History)> {
    let mut params = ModelParams::init(arch, hyper, rng::derive(cfg.seed, "init", 0))?;
    check_samples(&params, train_set)?;
    params.input_norm = InputNorm::fit(
        params.hyper.input_size,
        train_set.iter().flat_map(|s| s.frames.iter().map(Vec::as_slice)),
    )?;
    let history = continue_training(&mut params, train_set, val_set, cfg)?;
    Ok((params, history))
}

/// Runs `cfg.epochs` epochs from the current parameters with a fresh optimizer.
pub fn continue_training(
    params: &mut ModelParams,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<History> {
    check_samples(params, train_set)?;
    let mut opt = OptimizerState::new(params, cfg.adam);
    let mut shuffle = rng::stream(cfg.seed, "batches");
    let lengths: Vec<usize> = train_set.iter().map(|s| s.frames.len()).collect();
    let min_len = params.offset() + 1;
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        let batches = make_batches(&lengths, cfg.batch_size, &mut shuffle)?;
        let mut loss_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let len = batch.len.max(min_len);
            let epoch_seed = rng::derive(cfg.seed, "dropout", epoch as u64);
            let results: Vec<Result<(f64, Grads)>> = batch
                .indices
                .par_iter()
                .enumerate()
                .map(|(k, &i)| {
                    let s = &train_set[i];
                    let seed = rng::derive(epoch_seed, "item", (b * cfg.batch_size + k) as u64);
                    params.loss_and_grad(&s.frames[..len], &s.alpha[..len], &s.omega[..len], Some(seed))
                })
                .collect();
            let mut total = zero_grads(params);
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = match r {
                    Ok(v) => v,
                    Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, loss: f64::NAN }),
                    Err(e) => return Err(e),
                };
                batch_loss += l;
                for (acc, gi) in total.iter_mut().zip(&g) {
                    super::ops::add_into(acc, gi);
                }
            }
            let scale = 1.0 / batch.indices.len() as f64;
            for g in total.iter_mut().flatten() {
                *g *= scale;
            }
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: batch_loss,
                });
            }
            loss_sum += batch_loss;
            adam_step(params, &total, &mut opt)?;
        }
        let (val_angle_mae, val_velocity_mae) = if val_set.is_empty() {
            (None, None)
        } else {
            let (a, w) = evaluate(params, val_set)?;
            (Some(a), Some(w))
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            val_angle_mae,
            val_velocity_mae,
        });
    }
    if params.tensors.iter().any(|t| t.data.iter().any(|v| !v.is_finite())) {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            loss: f64::NAN,
        });
    }
    Ok(history)
}
