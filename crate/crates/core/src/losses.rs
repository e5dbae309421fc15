//! Training objectives.
//!
//! All losses take tape handles and return both the scalar objective and the
//! per-pixel contributions it averages, so diagnostics can inspect where the
//! loss mass sits.

use crate::error::{invalid_arg, Result};
use crate::models::{LOG_VARIANCE_MAX, LOG_VARIANCE_MIN};
use crate::ndgrad::{Tape, Tensor, Var};
use crate::rng::RngState;

/// Scalar objective plus the per-pixel map it is the mean of.
#[derive(Debug, Clone, Copy)]
pub struct LossValue {
    pub scalar: Var,
    pub per_pixel: Option<Var>,
}

impl LossValue {
    fn from_per_pixel(tape: &mut Tape, per_pixel: Var) -> Self {
        let scalar = tape.mean(per_pixel);
        Self {
            scalar,
            per_pixel: Some(per_pixel),
        }
    }
}

fn same_shape(tape: &Tape, a: Var, b: Var, what: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(invalid_arg!(
            "{what}: shapes {:?} and {:?} differ",
            tape.shape(a),
            tape.shape(b)
        ));
    }
    Ok(())
}

fn check_log_variance(tape: &Tape, log_var: Var) -> Result<()> {
    let ok = tape
        .value(log_var)
        .data()
        .iter()
        .all(|v| (LOG_VARIANCE_MIN..=LOG_VARIANCE_MAX).contains(v));
    if !ok {
        return Err(invalid_arg!(
            "log-variance outside [{LOG_VARIANCE_MIN}, {LOG_VARIANCE_MAX}]"
        ));
    }
    Ok(())
}

/// `(pred - target)²` averaged over all elements.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<LossValue> {
    same_shape(tape, pred, target, "mse_loss")?;
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    Ok(LossValue::from_per_pixel(tape, sq))
}

/// Noise-aware regression loss with `s = log σ²`:
/// `½·exp(-s)·(y - f)² + ½·s` per pixel, averaged.
pub fn heteroscedastic_regression_loss(
    tape: &mut Tape,
    pred: Var,
    log_var: Var,
    target: Var,
) -> Result<LossValue> {
    same_shape(tape, pred, target, "heteroscedastic_regression_loss")?;
    same_shape(tape, pred, log_var, "heteroscedastic_regression_loss")?;
    check_log_variance(tape, log_var)?;
    let d = tape.sub(target, pred)?;
    let sq = tape.mul(d, d)?;
    let neg_s = tape.neg(log_var);
    let precision = tape.exp(neg_s);
    let weighted = tape.mul(precision, sq)?;
    let total = tape.add(weighted, log_var)?;
    let per_pixel = tape.scale(total, 0.5);
    Ok(LossValue::from_per_pixel(tape, per_pixel))
}

/// `[N, 2, H, W]` one-hot encoding of a binary `[N, 1, H, W]` mask.
fn one_hot(mask: &Tensor, logits_shape: &[usize]) -> Result<Tensor> {
    let [n, c, h, w] = match logits_shape {
        &[n, c, h, w] => [n, c, h, w],
        s => return Err(invalid_arg!("logits must be [N, 2, H, W], got {s:?}")),
    };
    if c != 2 {
        return Err(invalid_arg!("logits must have 2 channels, got {c}"));
    }
    if mask.shape() != [n, 1, h, w] {
        return Err(invalid_arg!("mask shape {:?}, expected [{n}, 1, {h}, {w}]", mask.shape()));
    }
    if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(invalid_arg!("target mask must be binary (0 or 1)"));
    }
    let plane = h * w;
    let mut out = vec![0.0; n * 2 * plane];
    for b in 0..n {
        for p in 0..plane {
            let fg = mask.data()[b * plane + p];
            out[(2 * b) * plane + p] = 1.0 - fg;
            out[(2 * b + 1) * plane + p] = fg;
        }
    }
    Tensor::new(&[n, 2, h, w], out)
}

/// Per-pixel log-softmax probability of the true class, `[N, 1, H, W]`.
fn true_class_log_prob(tape: &mut Tape, logits: Var, onehot: Var) -> Result<Var> {
    let lse = tape.log_sum_exp(logits, 1)?;
    let picked = tape.mul(logits, onehot)?;
    let true_logit = tape.sum_axis(picked, 1)?;
    tape.sub(true_logit, lse)
}

/// Pixel-wise softmax cross-entropy against a binary mask.
pub fn cross_entropy_loss(tape: &mut Tape, logits: Var, target_mask: &Tensor) -> Result<LossValue> {
    let onehot = one_hot(target_mask, tape.shape(logits))?;
    let onehot = tape.constant(onehot);
    let log_p = true_class_log_prob(tape, logits, onehot)?;
    let per_pixel = tape.neg(log_p);
    Ok(LossValue::from_per_pixel(tape, per_pixel))
}

/// Noise-aware classification loss.
///
/// Each pixel's logits are corrupted `samples` times as
/// `x̂_t = logits + exp(½·s)·ε_t`, `ε_t ~ N(0, I₂)`, with one σ shared by both
/// classes. The per-pixel loss is the negative log of the mean sampled
/// true-class probability, computed as a log-mean-exp of log-softmax values.
/// Noise is drawn from `rng` in `(t, element)` order and enters the graph as a
/// constant, so gradients flow through the reparameterised samples.
pub fn heteroscedastic_classification_loss(
    tape: &mut Tape,
    logits: Var,
    log_var: Var,
    target_mask: &Tensor,
    samples: usize,
    rng: &mut RngState,
) -> Result<LossValue> {
    if samples < 1 {
        return Err(invalid_arg!("need at least one Monte-Carlo sample"));
    }
    let onehot = one_hot(target_mask, tape.shape(logits))?;
    if tape.shape(log_var) != target_mask.shape() {
        return Err(invalid_arg!(
            "log-variance shape {:?} does not match mask {:?}",
            tape.shape(log_var),
            target_mask.shape()
        ));
    }
    check_log_variance(tape, log_var)?;
    let shape = tape.shape(logits).to_vec();
    let onehot = tape.constant(onehot);
    let half_s = tape.scale(log_var, 0.5);
    let sigma = tape.exp(half_s);
    let sigma = tape.concat(&[sigma, sigma], 1)?;

    let mut log_probs = Vec::with_capacity(samples);
    for _ in 0..samples {
        let eps = Tensor::from_fn(&shape, |_| rng.normal());
        let eps = tape.constant(eps);
        let noise = tape.mul(sigma, eps)?;
        let corrupted = tape.add(logits, noise)?;
        log_probs.push(true_class_log_prob(tape, corrupted, onehot)?);
    }
    let stacked = tape.concat(&log_probs, 1)?;
    let lse = tape.log_sum_exp(stacked, 1)?;
    let log_mean = tape.offset(lse, -(samples as f64).ln());
    let per_pixel = tape.neg(log_mean);
    Ok(LossValue::from_per_pixel(tape, per_pixel))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(shape: &[usize], seed: u64, scale: f64) -> Tensor {
        let mut r = RngState::new(seed);
        Tensor::from_fn(shape, |_| scale * r.normal())
    }

    fn binary(shape: &[usize], seed: u64) -> Tensor {
        let mut r = RngState::new(seed);
        Tensor::from_fn(shape, |_| if r.uniform() < 0.5 { 0.0 } else { 1.0 })
    }

    #[test]
    fn mse_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(field(&[1, 1, 4, 4], 1, 1.0));
        let l = mse_loss(&mut tape, a, a).unwrap();
        assert_eq!(tape.value(l.scalar).item(), 0.0);
        let b = tape.offset(a, 2.0);
        let l = mse_loss(&mut tape, b, a).unwrap();
        assert!((tape.value(l.scalar).item() - 4.0).abs() < 1e-12);
        let c = tape.constant(Tensor::zeros(&[1, 1, 4, 3]));
        assert!(mse_loss(&mut tape, a, c).is_err());
    }

    #[test]
    fn regression_at_unit_variance_is_half_mse() {
        let mut tape = Tape::new();
        let f = tape.constant(field(&[2, 1, 5, 5], 2, 1.0));
        let y = tape.constant(field(&[2, 1, 5, 5], 3, 1.0));
        let s = tape.constant(Tensor::zeros(&[2, 1, 5, 5]));
        let het = heteroscedastic_regression_loss(&mut tape, f, s, y).unwrap();
        let mse = mse_loss(&mut tape, f, y).unwrap();
        let (h, m) = (tape.value(het.scalar).item(), tape.value(mse.scalar).item());
        assert!((h - 0.5 * m).abs() < 1e-15);
    }

    #[test]
    fn regression_optimum_at_log_squared_residual() {
        let r: f64 = 0.3;
        let s_star = (r * r).ln();
        let eval = |s: f64| {
            let mut tape = Tape::new();
            let f = tape.constant(Tensor::zeros(&[1, 1, 1, 1]));
            let y = tape.constant(Tensor::full(&[1, 1, 1, 1], r));
            let sv = tape.param(Tensor::full(&[1, 1, 1, 1], s));
            let l = heteroscedastic_regression_loss(&mut tape, f, sv, y).unwrap();
            tape.backward(l.scalar).unwrap();
            (tape.value(l.scalar).item(), tape.grad(sv).unwrap()[0])
        };
        let (at_opt, g) = eval(s_star);
        assert!(g.abs() < 1e-12);
        assert!((at_opt - (0.5 + 0.5 * (r * r).ln())).abs() < 1e-12);
        assert!(eval(s_star - 0.1).0 > at_opt && eval(s_star + 0.1).0 > at_opt);
    }

    #[test]
    fn regression_zero_residual_grad_is_half() {
        let mut tape = Tape::new();
        let f = tape.constant(field(&[1, 1, 3, 3], 5, 1.0));
        let s = tape.param(field(&[1, 1, 3, 3], 6, 1.0));
        let l = heteroscedastic_regression_loss(&mut tape, f, s, f).unwrap();
        let total = tape.sum(l.per_pixel.unwrap());
        tape.backward(total).unwrap();
        assert!(tape.grad(s).unwrap().iter().all(|&g| (g - 0.5).abs() < 1e-15));
    }

    #[test]
    fn regression_rejects_unclamped_log_variance() {
        let mut tape = Tape::new();
        let f = tape.constant(Tensor::zeros(&[1, 1, 2, 2]));
        let s = tape.constant(Tensor::full(&[1, 1, 2, 2], 11.0));
        assert!(heteroscedastic_regression_loss(&mut tape, f, s, f).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let mask = binary(&[1, 1, 4, 4], 1);
        let mut tape = Tape::new();
        let eq = tape.constant(Tensor::zeros(&[1, 2, 4, 4]));
        let l = cross_entropy_loss(&mut tape, eq, &mask).unwrap();
        assert!((tape.value(l.scalar).item() - 2f64.ln()).abs() < 1e-15);

        let confident = Tensor::from_fn(&[1, 2, 4, 4], |i| {
            let (c, p) = (i / 16, i % 16);
            if (mask.data()[p] == 1.0) == (c == 1) { 20.0 } else { 0.0 }
        });
        let c = tape.constant(confident);
        let l = cross_entropy_loss(&mut tape, c, &mask).unwrap();
        assert!(tape.value(l.scalar).item() < 1e-6);
    }

    #[test]
    fn classification_rejects_bad_inputs() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::zeros(&[1, 2, 2, 2]));
        let s = tape.constant(Tensor::zeros(&[1, 1, 2, 2]));
        let mask = Tensor::zeros(&[1, 1, 2, 2]);
        let mut rng = RngState::new(0);
        assert!(heteroscedastic_classification_loss(&mut tape, logits, s, &mask, 0, &mut rng).is_err());
        let half = Tensor::full(&[1, 1, 2, 2], 0.5);
        assert!(heteroscedastic_classification_loss(&mut tape, logits, s, &half, 3, &mut rng).is_err());
        let wrong = Tensor::zeros(&[1, 1, 2, 3]);
        assert!(cross_entropy_loss(&mut tape, logits, &wrong).is_err());
    }

    #[test]
    fn classification_zero_noise_limit_is_cross_entropy() {
        let shape = [2, 2, 6, 6];
        let mask = binary(&[2, 1, 6, 6], 7);
        for t in [1, 5, 20] {
            let mut tape = Tape::new();
            let logits = tape.constant(field(&shape, 8, 3.0));
            let s = tape.constant(Tensor::full(&[2, 1, 6, 6], LOG_VARIANCE_MIN));
            let mut rng = RngState::new(t as u64);
            let het = heteroscedastic_classification_loss(&mut tape, logits, s, &mask, t, &mut rng).unwrap();
            let ce = cross_entropy_loss(&mut tape, logits, &mask).unwrap();
            let d = tape.value(het.scalar).item() - tape.value(ce.scalar).item();
            assert!(d.abs() < 1e-3, "T={t}: diff {d}");
        }
    }

    #[test]
    fn classification_confident_correct_is_near_zero() {
        let mask = binary(&[1, 1, 4, 4], 2);
        let logits = Tensor::from_fn(&[1, 2, 4, 4], |i| {
            let (c, p) = (i / 16, i % 16);
            if (mask.data()[p] == 1.0) == (c == 1) { 20.0 } else { -20.0 }
        });
        let mut tape = Tape::new();
        let l = tape.constant(logits);
        let s = tape.constant(Tensor::full(&[1, 1, 4, 4], -10.0));
        let loss = heteroscedastic_classification_loss(&mut tape, l, s, &mask, 5, &mut RngState::new(1)).unwrap();
        let pp = tape.value(loss.per_pixel.unwrap());
        assert!(pp.data().iter().all(|&v| v < 1e-6));
    }

    #[test]
    fn per_pixel_mean_equals_scalar() {
        let mask = binary(&[1, 1, 5, 5], 3);
        let mut tape = Tape::new();
        let l = tape.constant(field(&[1, 2, 5, 5], 4, 2.0));
        let s = tape.constant(field(&[1, 1, 5, 5], 5, 1.0));
        let loss = heteroscedastic_classification_loss(&mut tape, l, s, &mask, 5, &mut RngState::new(2)).unwrap();
        let mean = tape.value(loss.per_pixel.unwrap()).mean();
        assert!((mean - tape.value(loss.scalar).item()).abs() < 1e-9);
    }
}
