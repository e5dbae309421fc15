use std::time::Instant;

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::losses::{
    cross_entropy_loss, heteroscedastic_classification_loss, heteroscedastic_regression_loss, mse_loss,
};
use crate::models::{Model, Task};
use crate::ndgrad::{Adam, AdamConfig, Tape, Tensor};
use crate::rng::RngState;
use crate::synthdata::Sample;

use super::config::{ExperimentConfig, LossKind};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean training loss of every epoch.
    pub loss_curve: Vec<f64>,
    pub warnings: Vec<String>,
    pub seconds: f64,
}

pub(crate) fn input_batch(samples: &[&Sample]) -> Result<Tensor> {
    Image::stack(&samples.iter().map(|s| &s.degraded).collect::<Vec<_>>())
}

fn stats(data: &[f64]) -> String {
    let finite: Vec<f64> = data.iter().copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mean = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
    format!(
        "min {lo:.4e} max {hi:.4e} mean {mean:.4e} non-finite {}",
        data.len() - finite.len()
    )
}

/// Least-squares slope of `ys` against their index.
pub fn trend(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Trains a fresh model on `train`. Single-threaded and fully determined by
/// the config's seeds.
pub fn train_model(config: &ExperimentConfig, train: &[Sample]) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let tc = &config.training;
    let mut model = Model::build(config.model.clone())?;
    if let Some(s) = train.first() {
        if s.degraded.dims() != config.model.input_size {
            return Err(crate::error::invalid_arg!(
                "dataset images are {:?} but model.input_size is {:?}",
                s.degraded.dims(),
                config.model.input_size
            ));
        }
    }
    let mut adam = Adam::new(AdamConfig::with_learning_rate(tc.learning_rate), model.params())?;
    let root = RngState::new(tc.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut loss_curve = Vec::with_capacity(tc.epochs);
    let mut step = 0u64;
    for epoch in 0..tc.epochs {
        root.substream_named(&format!("shuffle/{epoch}")).shuffle(&mut order);
        let (mut total, mut seen) = (0.0, 0usize);
        for (b, chunk) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let x = input_batch(&batch)?;
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, true);
            let input = tape.constant(x.clone());
            let mut dropout_rng = root.substream_named(&format!("dropout/{step}"));
            let out = model.forward_on_tape(&mut tape, &bound, input, true, &mut dropout_rng)?;
            let log_var = || out.log_variance.ok_or_else(|| Error::InvalidState("model has no log-variance head".into()));
            let loss = match tc.loss {
                LossKind::Mse | LossKind::HetReg => {
                    let target = Image::stack(&batch.iter().map(|s| &s.clean).collect::<Vec<_>>())?;
                    let target = tape.constant(target);
                    if tc.loss == LossKind::Mse {
                        mse_loss(&mut tape, out.prediction, target)?
                    } else {
                        heteroscedastic_regression_loss(&mut tape, out.prediction, log_var()?, target)?
                    }
                }
                LossKind::Ce | LossKind::HetCls => {
                    let mask = Mask::stack(&batch.iter().map(|s| &s.mask).collect::<Vec<_>>())?;
                    if tc.loss == LossKind::Ce {
                        cross_entropy_loss(&mut tape, out.prediction, &mask)?
                    } else {
                        let mut noise = root.substream_named(&format!("logit-noise/{step}"));
                        heteroscedastic_classification_loss(
                            &mut tape,
                            out.prediction,
                            log_var()?,
                            &mask,
                            tc.mc_samples,
                            &mut noise,
                        )?
                    }
                }
            };
            let value = tape.value(loss.scalar).item();
            if !value.is_finite() {
                let mut diag = format!(
                    "loss {value}; samples {chunk:?}; input {}; prediction {}",
                    stats(x.data()),
                    stats(tape.value(out.prediction).data())
                );
                if let Some(s) = out.log_variance {
                    diag.push_str(&format!("; log-variance {}", stats(tape.value(s).data())));
                }
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    diagnostics: diag,
                });
            }
            tape.backward(loss.scalar)?;
            model.zero_grad();
            model.absorb_grads(&tape, &bound);
            adam.step(model.params_mut())?;
            total += value * batch.len() as f64;
            seen += batch.len();
            step += 1;
        }
        let epoch_loss = total / seen.max(1) as f64;
        log::info!("epoch {}/{}: loss {epoch_loss:.6}", epoch + 1, tc.epochs);
        loss_curve.push(epoch_loss);
    }
    let mut warnings = Vec::new();
    let tail = loss_curve.len().div_ceil(4).max(2);
    if loss_curve.len() >= 2 {
        let slope = trend(&loss_curve[loss_curve.len() - tail.min(loss_curve.len())..]);
        if slope > 0.0 {
            let msg = format!("training loss rises over the final {tail} epochs (slope {slope:.3e} per epoch)");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(TrainOutcome {
        model,
        loss_curve,
        warnings,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// How predictions (and their uncertainty) are produced at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictMode {
    /// One deterministic pass; variance from the log-variance head if present.
    Single,
    /// `samples` dropout passes; variance across passes.
    McDropout { samples: usize, seed: u64 },
}

/// Per-image output: foreground probability (segmentation) or value
/// (reconstruction), and an optional variance map.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub output: Image,
    pub variance: Option<Image>,
}

pub const EVAL_BATCH: usize = 8;

pub fn predict(model: &Model, samples: &[&Sample], mode: PredictMode) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(samples.len());
    for (b, chunk) in samples.chunks(EVAL_BATCH).enumerate() {
        let x = input_batch(chunk)?;
        let (value, variance) = match mode {
            PredictMode::Single => {
                let o = model.forward(&x, false, &mut RngState::new(0))?;
                let value = match model.config().task {
                    Task::Segmentation => crate::models::foreground_probability(&o.prediction)?,
                    Task::Reconstruction => o.prediction.clone(),
                };
                (value, o.variance())
            }
            PredictMode::McDropout { samples, seed } => {
                let rng = RngState::new(seed).substream(b as u64);
                let r = model.forward_mc_dropout(&x, samples, &rng)?;
                let channel = match model.config().task {
                    Task::Segmentation => 1,
                    Task::Reconstruction => 0,
                };
                let images = Image::unstack(&r.mean_prediction, channel)?;
                (Image::stack(&images.iter().collect::<Vec<_>>())?, Some(r.model_uncertainty))
            }
        };
        let values = Image::unstack(&value, 0)?;
        let vars = match variance {
            Some(v) => Image::unstack(&v, 0)?.into_iter().map(Some).collect(),
            None => vec![None; values.len()],
        };
        out.extend(values.into_iter().zip(vars).map(|(output, variance)| Prediction { output, variance }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trend_of_lines() {
        assert!((trend(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-12);
        assert!((trend(&[5.0, 3.0, 1.0, -1.0]) + 2.0).abs() < 1e-12);
        assert_eq!(trend(&[1.0]), 0.0);
    }
}
