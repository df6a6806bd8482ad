use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{check_width, gru_gates, lstm_gates, Architecture, ModelParams, OutputMode, Prediction, TargetNorm};
use super::ops::{add_into, gemv, gemv_t, outer};
use crate::error::{Error, Result};

/// Gradients, one vector per model tensor in storage order.
pub type Grads = Vec<Vec<f64>>;

pub fn zero_grads(params: &ModelParams) -> Grads {
    params.tensors.iter().map(|t| vec![0.0; t.len()]).collect()
}

fn l1_l2(err: f64) -> f64 {
    err.abs() + err * err
}

fn l1_l2_grad(err: f64) -> f64 {
    let sign = if err > 0.0 {
        1.0
    } else if err < 0.0 {
        -1.0
    } else {
        0.0
    };
    sign + 2.0 * err
}

fn check_targets(frames: usize, alpha: &[f64], omega: &[f64]) -> Result<()> {
    if alpha.len() != frames || omega.len() != frames {
        return Err(Error::Length {
            context: "frames vs targets",
            left: frames,
            right: alpha.len().min(omega.len()),
        });
    }
    Ok(())
}

/// Sum of L1 and L2 terms on normalized targets, averaged over predicted
/// ticks. Only the components the head predicts contribute.
pub fn loss(pred: &Prediction, alpha_gt: &[f64], omega_gt: &[f64], norm: &TargetNorm) -> Result<f64> {
    check_targets(pred.offset + pred.len(), alpha_gt, omega_gt)?;
    if pred.omega.len() != pred.alpha.len() {
        return Err(Error::Length {
            context: "prediction alpha vs omega",
            left: pred.alpha.len(),
            right: pred.omega.len(),
        });
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    if pred.mode.predicts_alpha() {
        let s: f64 = pred
            .alpha
            .iter()
            .zip(&alpha_gt[pred.offset..])
            .map(|(p, t)| l1_l2(p / norm.alpha_scale - t / norm.alpha_scale))
            .sum();
        total += s / n;
    }
    if pred.mode.predicts_omega() {
        let s: f64 = pred
            .omega
            .iter()
            .zip(&omega_gt[pred.offset..])
            .map(|(p, t)| l1_l2(p / norm.omega_scale - t / norm.omega_scale))
            .sum();
        total += s / n;
    }
    Ok(total)
}

/// Inverted dropout masks drawn from a seeded stream.
pub(crate) struct Dropout {
    p: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub(crate) fn new(p: f64, seed: u64) -> Self {
        Dropout {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn mask(&mut self, n: usize) -> Option<Vec<f64>> {
        if self.p <= 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.p);
        Some(
            (0..n)
                .map(|_| if self.rng.random::<f64>() < self.p { 0.0 } else { keep })
                .collect(),
        )
    }
}

fn apply_mask(v: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (x, k) in v.iter_mut().zip(m) {
            *x *= k;
        }
    }
}

struct DenseTape {
    /// Input to each linear layer, after dropout.
    inputs: Vec<Vec<f64>>,
    /// Activated outputs of hidden layers, before dropout.
    outs: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

enum StepCache {
    Lstm {
        x: Vec<f64>,
        h_prev: Vec<f64>,
        c_prev: Vec<f64>,
        i: Vec<f64>,
        f: Vec<f64>,
        g: Vec<f64>,
        o: Vec<f64>,
        tanh_c: Vec<f64>,
    },
    Gru {
        x: Vec<f64>,
        h_prev: Vec<f64>,
        r: Vec<f64>,
        z: Vec<f64>,
        n: Vec<f64>,
        hn: Vec<f64>,
    },
    Rnn {
        x: Vec<f64>,
        h_prev: Vec<f64>,
        h: Vec<f64>,
    },
}

struct Tape {
    cells: Vec<Vec<StepCache>>,
    layer_masks: Vec<Vec<Option<Vec<f64>>>>,
    dense: Vec<DenseTape>,
    outputs: Vec<Vec<f64>>,
}

impl ModelParams {
    fn dense_train(&self, a0: Vec<f64>, drop: &mut Option<Dropout>) -> (Vec<f64>, DenseTape) {
        let off = self.dense_offset();
        let n = (self.tensors.len() - off) / 2;
        let mut tape = DenseTape {
            inputs: Vec::with_capacity(n),
            outs: Vec::with_capacity(n.saturating_sub(1)),
            masks: Vec::with_capacity(n.saturating_sub(1)),
        };
        let mut a = a0;
        for k in 0..n {
            let mut z = self.tensors[off + 2 * k + 1].data.clone();
            gemv(&mut z, &self.tensors[off + 2 * k].data, &a);
            tape.inputs.push(a);
            if k + 1 < n {
                for v in &mut z {
                    *v = self.hyper.activation.apply(*v);
                }
                let mask = drop.as_mut().and_then(|d| d.mask(z.len()));
                let mut next = z.clone();
                apply_mask(&mut next, &mask);
                tape.outs.push(z);
                tape.masks.push(mask);
                a = next;
            } else {
                a = z;
            }
        }
        (a, tape)
    }

    /// Returns the gradient with respect to the stack input when `want_input` is set.
    fn dense_backward(&self, tape: &DenseTape, dy: Vec<f64>, grads: &mut Grads, want_input: bool) -> Vec<f64> {
        let off = self.dense_offset();
        let n = tape.inputs.len();
        let mut da = dy;
        for k in (0..n).rev() {
            let mut dz = da;
            if k + 1 < n {
                apply_mask(&mut dz, &tape.masks[k]);
                for (d, y) in dz.iter_mut().zip(&tape.outs[k]) {
                    *d *= self.hyper.activation.grad_from_output(*y);
                }
            }
            outer(&mut grads[off + 2 * k], &dz, &tape.inputs[k]);
            add_into(&mut grads[off + 2 * k + 1], &dz);
            if k == 0 && !want_input {
                return Vec::new();
            }
            let mut prev = vec![0.0; tape.inputs[k].len()];
            gemv_t(&mut prev, &self.tensors[off + 2 * k].data, &dz);
            da = prev;
        }
        da
    }

    fn cell_train(&self, l: usize, x: Vec<f64>, h_prev: Vec<f64>, c_prev: Vec<f64>) -> (StepCache, Vec<f64>, Vec<f64>) {
        let base = l * self.arch.tensors_per_layer();
        let t = &self.tensors;
        let hs = self.hyper.hidden_size;
        match self.arch {
            Architecture::Lstm => {
                let mut z = t[base + 2].data.clone();
                gemv(&mut z, &t[base].data, &x);
                gemv(&mut z, &t[base + 1].data, &h_prev);
                let g = lstm_gates(&z, hs);
                let c: Vec<f64> = (0..hs).map(|j| g.f[j] * c_prev[j] + g.i[j] * g.g[j]).collect();
                let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
                let h = (0..hs).map(|j| g.o[j] * tanh_c[j]).collect();
                let cache = StepCache::Lstm {
                    x,
                    h_prev,
                    c_prev,
                    i: g.i,
                    f: g.f,
                    g: g.g,
                    o: g.o,
                    tanh_c,
                };
                (cache, h, c)
            }
            Architecture::Gru => {
                let mut a = t[base + 2].data.clone();
                gemv(&mut a, &t[base].data, &x);
                let mut b = t[base + 3].data.clone();
                gemv(&mut b, &t[base + 1].data, &h_prev);
                let g = gru_gates(&a, &b, hs);
                let h = (0..hs).map(|j| (1.0 - g.z[j]) * g.n[j] + g.z[j] * h_prev[j]).collect();
                let cache = StepCache::Gru {
                    x,
                    h_prev,
                    r: g.r,
                    z: g.z,
                    n: g.n,
                    hn: g.hn,
                };
                (cache, h, Vec::new())
            }
            Architecture::Rnn => {
                let mut z = t[base + 2].data.clone();
                gemv(&mut z, &t[base].data, &x);
                gemv(&mut z, &t[base + 1].data, &h_prev);
                let h: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
                let cache = StepCache::Rnn {
                    x,
                    h_prev,
                    h: h.clone(),
                };
                (cache, h, Vec::new())
            }
            Architecture::Mlp => unreachable!("MLP has no recurrent cells"),
        }
    }

    /// Backward through one cell step. Returns `(dx, dh_prev, dc_prev)`;
    /// `dx` is empty unless requested.
    fn cell_backward(
        &self,
        l: usize,
        cache: &StepCache,
        dh: &[f64],
        dc_next: &[f64],
        grads: &mut Grads,
        want_input: bool,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let base = l * self.arch.tensors_per_layer();
        let hs = self.hyper.hidden_size;
        let t = &self.tensors;
        let mut dx = Vec::new();
        let mut dh_prev = vec![0.0; hs];
        match cache {
            StepCache::Lstm {
                x,
                h_prev,
                c_prev,
                i,
                f,
                g,
                o,
                tanh_c,
            } => {
                let mut dz = vec![0.0; 4 * hs];
                let mut dc_prev = vec![0.0; hs];
                for j in 0..hs {
                    let d_o = dh[j] * tanh_c[j];
                    let dc = dc_next[j] + dh[j] * o[j] * (1.0 - tanh_c[j] * tanh_c[j]);
                    dz[j] = dc * g[j] * i[j] * (1.0 - i[j]);
                    dz[hs + j] = dc * c_prev[j] * f[j] * (1.0 - f[j]);
                    dz[2 * hs + j] = dc * i[j] * (1.0 - g[j] * g[j]);
                    dz[3 * hs + j] = d_o * o[j] * (1.0 - o[j]);
                    dc_prev[j] = dc * f[j];
                }
                outer(&mut grads[base], &dz, x);
                outer(&mut grads[base + 1], &dz, h_prev);
                add_into(&mut grads[base + 2], &dz);
                gemv_t(&mut dh_prev, &t[base + 1].data, &dz);
                if want_input {
                    dx = vec![0.0; x.len()];
                    gemv_t(&mut dx, &t[base].data, &dz);
                }
                (dx, dh_prev, dc_prev)
            }
            StepCache::Gru { x, h_prev, r, z, n, hn } => {
                let mut gi = vec![0.0; 3 * hs];
                let mut gh = vec![0.0; 3 * hs];
                for j in 0..hs {
                    let dn = dh[j] * (1.0 - z[j]);
                    let dzj = dh[j] * (h_prev[j] - n[j]);
                    dh_prev[j] = dh[j] * z[j];
                    let dan = dn * (1.0 - n[j] * n[j]);
                    let dar = dan * hn[j] * r[j] * (1.0 - r[j]);
                    let daz = dzj * z[j] * (1.0 - z[j]);
                    gi[j] = dar;
                    gi[hs + j] = daz;
                    gi[2 * hs + j] = dan;
                    gh[j] = dar;
                    gh[hs + j] = daz;
                    gh[2 * hs + j] = dan * r[j];
                }
                outer(&mut grads[base], &gi, x);
                outer(&mut grads[base + 1], &gh, h_prev);
                add_into(&mut grads[base + 2], &gi);
                add_into(&mut grads[base + 3], &gh);
                gemv_t(&mut dh_prev, &t[base + 1].data, &gh);
                if want_input {
                    dx = vec![0.0; x.len()];
                    gemv_t(&mut dx, &t[base].data, &gi);
                }
                (dx, dh_prev, Vec::new())
            }
            StepCache::Rnn { x, h_prev, h } => {
                let dz: Vec<f64> = (0..hs).map(|j| dh[j] * (1.0 - h[j] * h[j])).collect();
                outer(&mut grads[base], &dz, x);
                outer(&mut grads[base + 1], &dz, h_prev);
                add_into(&mut grads[base + 2], &dz);
                gemv_t(&mut dh_prev, &t[base + 1].data, &dz);
                if want_input {
                    dx = vec![0.0; x.len()];
                    gemv_t(&mut dx, &t[base].data, &dz);
                }
                (dx, dh_prev, Vec::new())
            }
        }
    }

    fn forward_train(&self, frames: &[Vec<f64>], dropout_seed: Option<u64>) -> Result<Tape> {
        let off = self.offset();
        if frames.len() <= off {
            return Err(Error::invalid(format!(
                "sequence of {} frames is shorter than the model window {}",
                frames.len(),
                off + 1
            )));
        }
        let mut xs = Vec::with_capacity(frames.len());
        for f in frames {
            check_width(f, self.hyper.input_size)?;
            xs.push(self.input_norm.apply(f));
        }
        let mut drop = dropout_seed.map(|s| Dropout::new(self.hyper.dropout, s));
        let mut tape = Tape {
            cells: Vec::new(),
            layer_masks: Vec::new(),
            dense: Vec::new(),
            outputs: Vec::new(),
        };
        let tops: Vec<Vec<f64>> = if self.arch.is_recurrent() {
            let hs = self.hyper.hidden_size;
            let mut layer_in = xs;
            for l in 0..self.hyper.num_layers {
                let mut masks = Vec::new();
                if l > 0 {
                    for x in &mut layer_in {
                        let m = drop.as_mut().and_then(|d| d.mask(hs));
                        apply_mask(x, &m);
                        masks.push(m);
                    }
                }
                let mut h = vec![0.0; hs];
                let mut c = vec![0.0; hs];
                let mut caches = Vec::with_capacity(layer_in.len());
                let mut outs = Vec::with_capacity(layer_in.len());
                for x in layer_in {
                    let (cache, h_new, c_new) = self.cell_train(l, x, h, c);
                    caches.push(cache);
                    outs.push(h_new.clone());
                    h = h_new;
                    c = c_new;
                }
                tape.cells.push(caches);
                tape.layer_masks.push(masks);
                layer_in = outs;
            }
            layer_in
        } else {
            let w = self.hyper.window_size;
            (off..xs.len()).map(|t| xs[t + 1 - w..=t].concat()).collect()
        };
        for a0 in tops {
            let (y, dt) = self.dense_train(a0, &mut drop);
            tape.outputs.push(y);
            tape.dense.push(dt);
        }
        Ok(tape)
    }

    fn backward(&self, tape: &Tape, dys: Vec<Vec<f64>>) -> Grads {
        let mut grads = zero_grads(self);
        let recurrent = self.arch.is_recurrent();
        let mut d_out: Vec<Vec<f64>> = tape
            .dense
            .iter()
            .zip(dys)
            .map(|(dt, dy)| self.dense_backward(dt, dy, &mut grads, recurrent))
            .collect();
        if !recurrent {
            return grads;
        }
        let hs = self.hyper.hidden_size;
        for l in (0..self.hyper.num_layers).rev() {
            let caches = &tape.cells[l];
            let mut dh_next = vec![0.0; hs];
            let mut dc_next = vec![0.0; hs];
            let mut d_in = vec![Vec::new(); caches.len()];
            for t in (0..caches.len()).rev() {
                let mut dh = std::mem::take(&mut d_out[t]);
                add_into(&mut dh, &dh_next);
                let (mut dx, dh_prev, dc_prev) = self.cell_backward(l, &caches[t], &dh, &dc_next, &mut grads, l > 0);
                if l > 0 {
                    apply_mask(&mut dx, &tape.layer_masks[l][t]);
                    d_in[t] = dx;
                }
                dh_next = dh_prev;
                if !dc_prev.is_empty() {
                    dc_next = dc_prev;
                }
            }
            d_out = d_in;
        }
        grads
    }

    /// Forward pass. With `dropout_seed` set the network runs in training
    /// mode with masks drawn from that seed; otherwise it is plain inference.
    pub fn forward(&self, frames: &[Vec<f64>], dropout_seed: Option<u64>) -> Result<Prediction> {
        match dropout_seed {
            None => self.predict(frames),
            Some(_) => {
                let tape = self.forward_train(frames, dropout_seed)?;
                Ok(Prediction::from_raw(
                    &tape.outputs,
                    self.hyper.mode,
                    &self.target_norm,
                    self.offset(),
                ))
            }
        }
    }

    /// Training loss and its gradient for one sequence. Dropout masks are
    /// fixed by `dropout_seed`; `None` disables dropout.
    pub fn loss_and_grad(
        &self,
        frames: &[Vec<f64>],
        alpha_gt: &[f64],
        omega_gt: &[f64],
        dropout_seed: Option<u64>,
    ) -> Result<(f64, Grads)> {
        check_targets(frames.len(), alpha_gt, omega_gt)?;
        let tape = self.forward_train(frames, dropout_seed)?;
        let off = self.offset();
        let n = tape.outputs.len() as f64;
        let norm = &self.target_norm;
        let mode = self.hyper.mode;
        let mut total = 0.0;
        let mut dys = Vec::with_capacity(tape.outputs.len());
        for (k, y) in tape.outputs.iter().enumerate() {
            let t = off + k;
            let (an, wn) = norm.normalize(alpha_gt[t], omega_gt[t]);
            let targets: &[f64] = match mode {
                OutputMode::Both => &[an, wn],
                OutputMode::AlphaOnly => &[an],
                OutputMode::OmegaOnly => &[wn],
            };
            let dy = y
                .iter()
                .zip(targets)
                .map(|(p, q)| {
                    total += l1_l2(p - q);
                    l1_l2_grad(p - q) / n
                })
                .collect();
            dys.push(dy);
        }
        let loss = total / n;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        let grads = self.backward(&tape, dys);
        for (t, g) in self.tensors.iter().zip(&grads) {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}", t.name)));
            }
        }
        Ok((loss, grads))
    }
}
