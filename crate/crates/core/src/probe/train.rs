use ndarray::{ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{probe_loss_and_grad, ProbeModel};
use crate::error::{Error, Result};
use crate::store::sampling::rng;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeHyperparams {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// Learning rate at step `t` of `total`: decays from `eta` at `t = 0` to 0 at
/// `t = total` along half a cosine.
pub fn cosine_lr(eta: f64, t: usize, total: usize) -> f64 {
    eta * 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos())
}

/// Decoupled-weight-decay Adam state for one parameter tensor.
struct AdamW<D: ndarray::Dimension> {
    m: ndarray::Array<f64, D>,
    v: ndarray::Array<f64, D>,
}

impl<D: ndarray::Dimension> AdamW<D> {
    fn new(shape: D) -> Self {
        Self {
            m: ndarray::Array::zeros(shape.clone()),
            v: ndarray::Array::zeros(shape),
        }
    }

    /// `step` counts from 1. `decay` is `lr * weight_decay`, or 0 for
    /// parameters exempt from decay.
    fn update(&mut self, param: &mut ndarray::Array<f64, D>, grad: &ndarray::Array<f64, D>, lr: f64, decay: f64, step: i32) {
        let c1 = 1.0 - ADAM_BETA1.powi(step);
        let c2 = 1.0 - ADAM_BETA2.powi(step);
        Zip::from(param)
            .and(grad)
            .and(&mut self.m)
            .and(&mut self.v)
            .for_each(|w, &g, m, v| {
                *w -= decay * *w;
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
    }
}

/// Trains from zero weights. Rows are reshuffled every epoch from a stream
/// seeded by `hp.seed`; the bias is not decayed.
pub fn train_probe(x: ArrayView2<f64>, y: &[usize], classes: usize, hp: &ProbeHyperparams) -> Result<ProbeModel> {
    let n = x.nrows();
    if n != y.len() {
        return Err(Error::DimensionMismatch(format!("{n} rows but {} labels", y.len())));
    }
    if n < classes {
        return Err(Error::TooFewSamples { needed: classes, got: n });
    }
    if hp.epochs == 0 || hp.batch_size == 0 {
        return Err(Error::config("probe", "epochs and batch_size must be positive"));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidInput(format!("label {bad} outside [0, {classes})")));
    }
    let mut model = ProbeModel::zeros(classes, x.ncols());
    let mut opt_w = AdamW::new(model.weights.raw_dim());
    let mut opt_b = AdamW::new(model.bias.raw_dim());
    let steps_per_epoch = n.div_ceil(hp.batch_size);
    let total = hp.epochs * steps_per_epoch;
    let mut rng = rng(hp.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0;
    let mut yb = Vec::with_capacity(hp.batch_size);
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            let xb = x.select(Axis(0), batch);
            yb.clear();
            yb.extend(batch.iter().map(|&i| y[i]));
            let (loss, grad) = probe_loss_and_grad(&model, xb.view(), &yb);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    learning_rate: hp.learning_rate,
                    weight_decay: hp.weight_decay,
                });
            }
            let lr = cosine_lr(hp.learning_rate, t, total);
            t += 1;
            opt_w.update(&mut model.weights, &grad.weights, lr, lr * hp.weight_decay, t as i32);
            opt_b.update(&mut model.bias, &grad.bias, lr, 0.0, t as i32);
        }
    }
    if !model.is_finite() {
        return Err(Error::NonFiniteLoss {
            learning_rate: hp.learning_rate,
            weight_decay: hp.weight_decay,
        });
    }
    Ok(model)
}

/// Squared Frobenius norm of the weights (bias excluded).
pub fn weight_norm_sq(model: &ProbeModel) -> f64 {
    model.weights.iter().map(|w| w * w).sum()
}
