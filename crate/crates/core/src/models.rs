//! U-shaped encoder-decoder backbones with optional log-variance head.
//!
//! Layout for `depth = D`, `base_channels = B` (channels at level `l` are `B·2^l`):
//!
//! ```text
//! encoder l = 0..D   conv3x3 → relu → conv3x3 → relu → dropout → (skip) → maxpool2
//! bottleneck         conv3x3 → relu → conv3x3 → relu → dropout
//! decoder l = D-1..0 upsample×2 → conv1x1 → relu → concat(skip) →
//!                    conv3x3 → relu → conv3x3 → relu → dropout
//! prediction head    conv3x3 → relu → conv1x1 (2 logits | 1 value)
//! log-variance head  conv3x3 → relu → conv1x1 (1) → clamp[-10, 10]   (dual only)
//! ```
//!
//! Each parameter is initialised from an RNG substream keyed by its name, so
//! single- and dual-head models built from one seed share every backbone weight.
//! Weights are He-normal and biases zero.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::ndgrad::{sigmoid, Tape, Tensor, Var};
use crate::rng::RngState;

/// Bounds applied to the predicted log-variance before it is exponentiated.
pub const LOG_VARIANCE_MIN: f64 = -10.0;
pub const LOG_VARIANCE_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Segmentation,
    Reconstruction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    Single,
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub task: Task,
    pub head_mode: HeadMode,
    #[serde(default = "defaults::base_channels")]
    pub base_channels: usize,
    #[serde(default = "defaults::depth")]
    pub depth: usize,
    #[serde(default = "defaults::dropout_rate")]
    pub dropout_rate: f64,
    #[serde(default = "defaults::input_size")]
    pub input_size: (usize, usize),
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn base_channels() -> usize {
        8
    }
    pub fn depth() -> usize {
        3
    }
    pub fn dropout_rate() -> f64 {
        0.2
    }
    pub fn input_size() -> (usize, usize) {
        (64, 64)
    }
}

impl ModelConfig {
    pub fn new(task: Task, head_mode: HeadMode) -> Self {
        Self {
            task,
            head_mode,
            base_channels: defaults::base_channels(),
            depth: defaults::depth(),
            dropout_rate: defaults::dropout_rate(),
            input_size: defaults::input_size(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.depth == 0 {
            return Err(invalid_arg!("base_channels and depth must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(invalid_arg!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        let (h, w) = self.input_size;
        let step = 1usize << self.depth;
        if h == 0 || w == 0 || h % step != 0 || w % step != 0 {
            return Err(invalid_arg!(
                "input size {h}x{w} must be positive multiples of 2^depth = {step}"
            ));
        }
        Ok(())
    }

    /// Channels emitted by the prediction head.
    pub fn output_channels(&self) -> usize {
        match self.task {
            Task::Segmentation => 2,
            Task::Reconstruction => 1,
        }
    }

    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// One forward pass: prediction plus (dual head only) the clamped log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DualHeadOutput {
    /// `[N, C, H, W]`: class logits (segmentation) or values (reconstruction).
    pub prediction: Tensor,
    /// `[N, 1, H, W]` natural log of σ², already clamped.
    pub log_variance: Option<Tensor>,
}

impl DualHeadOutput {
    /// `exp(log_variance)`, i.e. σ² per pixel.
    pub fn variance(&self) -> Option<Tensor> {
        self.log_variance.as_ref().map(|s| {
            Tensor::from_fn(s.shape(), |i| {
                s.data()[i].clamp(LOG_VARIANCE_MIN, LOG_VARIANCE_MAX).exp()
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McDropoutResult {
    /// Mean softmax probabilities (segmentation) or mean values (reconstruction).
    pub mean_prediction: Tensor,
    /// `[N, 1, H, W]` unbiased sample variance of the foreground probability or value.
    pub model_uncertainty: Tensor,
    pub samples_used: usize,
}

/// Tape handles for a graph built by [`Model::forward_on_tape`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub prediction: Var,
    pub log_variance: Option<Var>,
}

#[derive(Debug, Clone, PartialEq)]
struct ConvSpec {
    name: String,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    encoder: Vec<[usize; 2]>,
    bottleneck: [usize; 2],
    /// `(up-projection, block)` ordered from deepest level to level 0.
    decoder: Vec<(usize, [usize; 2])>,
    prediction_head: [usize; 2],
    variance_head: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    convs: Vec<ConvSpec>,
    layout: Layout,
    /// Kernel then bias for each conv, in `convs` order.
    params: Vec<Tensor>,
}

impl Model {
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut convs = Vec::new();
        let mut add = |name: String, i: usize, o: usize, k: usize| {
            convs.push(ConvSpec {
                name,
                in_channels: i,
                out_channels: o,
                kernel: k,
            });
            convs.len() - 1
        };
        let mut encoder = Vec::new();
        let mut prev = 1;
        for l in 0..config.depth {
            let c = config.channels(l);
            encoder.push([
                add(format!("enc{l}.conv1"), prev, c, 3),
                add(format!("enc{l}.conv2"), c, c, 3),
            ]);
            prev = c;
        }
        let cb = config.channels(config.depth);
        let bottleneck = [
            add("bottleneck.conv1".into(), prev, cb, 3),
            add("bottleneck.conv2".into(), cb, cb, 3),
        ];
        let mut decoder = Vec::new();
        for l in (0..config.depth).rev() {
            let c = config.channels(l);
            let up = add(format!("dec{l}.up"), config.channels(l + 1), c, 1);
            decoder.push((
                up,
                [
                    add(format!("dec{l}.conv1"), 2 * c, c, 3),
                    add(format!("dec{l}.conv2"), c, c, 3),
                ],
            ));
        }
        let b = config.base_channels;
        let prediction_head = [
            add("head.pred.conv".into(), b, b, 3),
            add("head.pred.out".into(), b, config.output_channels(), 1),
        ];
        let variance_head = (config.head_mode == HeadMode::Dual).then(|| {
            [
                add("head.logvar.conv".into(), b, b, 3),
                add("head.logvar.out".into(), b, 1, 1),
            ]
        });

        let root = RngState::new(config.seed);
        let mut params = Vec::with_capacity(2 * convs.len());
        for spec in &convs {
            let mut rng = root.substream_named(&spec.name);
            let fan_in = spec.in_channels * spec.kernel * spec.kernel;
            let std = (2.0 / fan_in as f64).sqrt();
            let shape = [spec.out_channels, spec.in_channels, spec.kernel, spec.kernel];
            params.push(Tensor::from_fn(&shape, |_| std * rng.normal()));
            params.push(Tensor::zeros(&[spec.out_channels]));
        }
        Ok(Self {
            config,
            convs,
            layout: Layout {
                encoder,
                bottleneck,
                decoder,
                prediction_head,
                variance_head,
            },
            params,
        })
    }

    /// Rebuilds a model and installs previously saved parameters.
    pub fn from_parts(config: ModelConfig, params: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = Self::build(config)?;
        if params.len() != model.params.len() {
            return Err(invalid_arg!(
                "expected {} parameter tensors, got {}",
                model.params.len(),
                params.len()
            ));
        }
        let names = model.param_names();
        for (i, (name, tensor)) in params.into_iter().enumerate() {
            if name != names[i] || tensor.shape() != model.params[i].shape() {
                return Err(invalid_arg!(
                    "parameter {i}: got {name} {:?}, expected {} {:?}",
                    tensor.shape(),
                    names[i],
                    model.params[i].shape()
                ));
            }
            model.params[i] = tensor;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Names parallel to [`Model::params`], e.g. `enc0.conv1.weight`.
    pub fn param_names(&self) -> Vec<String> {
        self.convs
            .iter()
            .flat_map(|c| [format!("{}.weight", c.name), format!("{}.bias", c.name)])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Parameters belonging to the log-variance branch (zero for single-head models).
    pub fn variance_head_parameter_count(&self) -> usize {
        self.layout.variance_head.map_or(0, |ids| {
            ids.iter()
                .map(|&id| self.params[2 * id].numel() + self.params[2 * id + 1].numel())
                .sum()
        })
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Places the parameters on `tape`; `trainable` decides whether they collect gradients.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                let mut t = p.clone().with_requires_grad(trainable);
                t.zero_grad();
                tape.leaf(t)
            })
            .collect()
    }

    /// Copies gradients of bound parameters from the tape into the model.
    pub fn absorb_grads(&mut self, tape: &Tape, bound: &[Var]) {
        for (p, &v) in self.params.iter_mut().zip(bound) {
            if let Some(g) = tape.grad(v) {
                p.accumulate_grad(g);
            }
        }
    }

    fn conv(&self, tape: &mut Tape, bound: &[Var], id: usize, x: Var) -> Result<Var> {
        let pad = self.convs[id].kernel / 2;
        tape.conv2d(x, bound[2 * id], bound[2 * id + 1], pad, 1)
    }

    fn block(&self, tape: &mut Tape, bound: &[Var], ids: [usize; 2], x: Var) -> Result<Var> {
        let x = self.conv(tape, bound, ids[0], x)?;
        let x = tape.relu(x);
        let x = self.conv(tape, bound, ids[1], x)?;
        Ok(tape.relu(x))
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let (h, w) = self.config.input_size;
        match shape {
            &[n, 1, hh, ww] if n >= 1 && hh == h && ww == w => Ok(()),
            s => Err(invalid_arg!("expected input [N, 1, {h}, {w}], got {s:?}")),
        }
    }

    /// Builds the forward graph on `tape` using parameters from [`Model::bind`].
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        input: Var,
        train_mode: bool,
        rng: &mut RngState,
    ) -> Result<ForwardVars> {
        self.check_input(tape.shape(input))?;
        if bound.len() != self.params.len() {
            return Err(Error::InvalidState("parameters were bound from a different model".into()));
        }
        let rate = self.config.dropout_rate;
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut x = input;
        for &ids in &self.layout.encoder {
            x = self.block(tape, bound, ids, x)?;
            x = tape.dropout(x, rate, train_mode, rng)?;
            skips.push(x);
            x = tape.max_pool2(x)?;
        }
        x = self.block(tape, bound, self.layout.bottleneck, x)?;
        x = tape.dropout(x, rate, train_mode, rng)?;
        for &(up, ids) in &self.layout.decoder {
            x = tape.upsample_nearest(x, 2)?;
            x = self.conv(tape, bound, up, x)?;
            x = tape.relu(x);
            let skip = skips.pop().expect("one skip per decoder level");
            x = tape.concat(&[x, skip], 1)?;
            x = self.block(tape, bound, ids, x)?;
            x = tape.dropout(x, rate, train_mode, rng)?;
        }
        let features = x;
        let head = |tape: &mut Tape, ids: [usize; 2]| -> Result<Var> {
            let h = self.conv(tape, bound, ids[0], features)?;
            let h = tape.relu(h);
            self.conv(tape, bound, ids[1], h)
        };
        let prediction = head(tape, self.layout.prediction_head)?;
        let log_variance = match self.layout.variance_head {
            Some(ids) => {
                let s = head(tape, ids)?;
                Some(tape.clamp(s, LOG_VARIANCE_MIN, LOG_VARIANCE_MAX))
            }
            None => None,
        };
        Ok(ForwardVars {
            prediction,
            log_variance,
        })
    }

    /// Single pass on `[N, 1, H, W]` input in `[0, 1]`. Dropout is active iff `train_mode`.
    pub fn forward(&self, batch: &Tensor, train_mode: bool, rng: &mut RngState) -> Result<DualHeadOutput> {
        self.check_input(batch.shape())?;
        if batch.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid_arg!("input values must lie in [0, 1]"));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let input = tape.constant(batch.clone());
        let vars = self.forward_on_tape(&mut tape, &bound, input, train_mode, rng)?;
        Ok(DualHeadOutput {
            prediction: tape.value(vars.prediction).clone(),
            log_variance: vars.log_variance.map(|v| tape.value(v).clone()),
        })
    }

    /// `samples` stochastic passes with dropout active; pass `t` draws from `rng.substream(t)`.
    pub fn forward_mc_dropout(&self, batch: &Tensor, samples: usize, rng: &RngState) -> Result<McDropoutResult> {
        if self.config.dropout_rate == 0.0 {
            return Err(Error::InvalidState(
                "Monte-Carlo dropout needs a model built with dropout_rate > 0".into(),
            ));
        }
        if samples < 2 {
            return Err(invalid_arg!("Monte-Carlo dropout needs at least 2 samples, got {samples}"));
        }
        let [n, _, h, w] = batch.dims4()?;
        let plane = n * h * w;
        let channels = self.config.output_channels();
        let mut sum_pred = vec![0.0; n * channels * h * w];
        let mut draws: Vec<Vec<f64>> = Vec::with_capacity(samples);
        for t in 0..samples {
            let mut pass_rng = rng.substream(t as u64);
            let out = self.forward(batch, true, &mut pass_rng)?;
            let pred = match self.config.task {
                Task::Segmentation => softmax_channels(&out.prediction)?,
                Task::Reconstruction => out.prediction,
            };
            sum_pred.iter_mut().zip(pred.data()).for_each(|(s, v)| *s += v);
            let tracked = match self.config.task {
                // channel 1 = foreground probability
                Task::Segmentation => select_channel(&pred, 1)?,
                Task::Reconstruction => pred.into_data(),
            };
            draws.push(tracked);
        }
        let inv = 1.0 / samples as f64;
        let mean_prediction = Tensor::new(
            &[n, channels, h, w],
            sum_pred.into_iter().map(|s| s * inv).collect(),
        )?;
        let mut variance = vec![0.0; plane];
        for (i, v) in variance.iter_mut().enumerate() {
            let mean = draws.iter().map(|d| d[i]).sum::<f64>() * inv;
            let ss: f64 = draws.iter().map(|d| (d[i] - mean).powi(2)).sum();
            *v = ss / (samples - 1) as f64;
        }
        Ok(McDropoutResult {
            mean_prediction,
            model_uncertainty: Tensor::new(&[n, 1, h, w], variance)?,
            samples_used: samples,
        })
    }
}

/// Softmax across the channel axis of an `[N, C, H, W]` tensor.
pub fn softmax_channels(logits: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = logits.dims4()?;
    let x = logits.data();
    let plane = h * w;
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for p in 0..plane {
            let at = |k: usize| (b * c + k) * plane + p;
            let m = (0..c).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..c).map(|k| (x[at(k)] - m).exp()).sum();
            for k in 0..c {
                out[at(k)] = (x[at(k)] - m).exp() / z;
            }
        }
    }
    Tensor::new(logits.shape(), out)
}

/// Foreground probability `[N, 1, H, W]` from 2-channel logits.
pub fn foreground_probability(logits: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = logits.dims4()?;
    if c != 2 {
        return Err(invalid_arg!("expected 2-channel logits, got {c}"));
    }
    let plane = h * w;
    let x = logits.data();
    let mut out = Vec::with_capacity(n * plane);
    for b in 0..n {
        for p in 0..plane {
            out.push(sigmoid(x[(2 * b + 1) * plane + p] - x[2 * b * plane + p]));
        }
    }
    Tensor::new(&[n, 1, h, w], out)
}

fn select_channel(t: &Tensor, channel: usize) -> Result<Vec<f64>> {
    let [n, c, h, w] = t.dims4()?;
    let plane = h * w;
    Ok((0..n)
        .flat_map(|b| t.data()[(b * c + channel) * plane..][..plane].iter().copied())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(task: Task, head: HeadMode) -> ModelConfig {
        ModelConfig {
            base_channels: 4,
            depth: 2,
            input_size: (16, 16),
            seed: 9,
            ..ModelConfig::new(task, head)
        }
    }

    fn batch(n: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut r = RngState::new(seed);
        Tensor::from_fn(&[n, 1, h, w], |_| r.uniform())
    }

    #[test]
    fn default_shape_contract() {
        let cfg = ModelConfig {
            seed: 1,
            ..ModelConfig::new(Task::Segmentation, HeadMode::Dual)
        };
        let m = Model::build(cfg).unwrap();
        let out = m.forward(&batch(1, 64, 64, 2), false, &mut RngState::new(0)).unwrap();
        assert_eq!(out.prediction.shape(), &[1, 2, 64, 64]);
        assert_eq!(out.log_variance.unwrap().shape(), &[1, 1, 64, 64]);
    }

    #[test]
    fn rebinding_starts_from_clean_gradients() {
        let mut m = Model::build(small(Task::Reconstruction, HeadMode::Single)).unwrap();
        let x = batch(2, 16, 16, 3);
        let grads = |m: &Model| {
            let mut tape = Tape::new();
            let bound = m.bind(&mut tape, true);
            let input = tape.constant(x.clone());
            let out = m.forward_on_tape(&mut tape, &bound, input, false, &mut RngState::new(0)).unwrap();
            let loss = tape.sum(out.prediction);
            tape.backward(loss).unwrap();
            tape.grad(bound[0]).unwrap().to_vec()
        };
        let first = grads(&m);
        m.params_mut()[0].accumulate_grad(&vec![1.0; first.len()]);
        assert_eq!(grads(&m), first);
    }

    #[test]
    fn rejects_indivisible_input() {
        let cfg = ModelConfig {
            input_size: (60, 64),
            ..ModelConfig::new(Task::Segmentation, HeadMode::Single)
        };
        assert!(matches!(Model::build(cfg), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn same_seed_identical_params() {
        let a = Model::build(small(Task::Reconstruction, HeadMode::Dual)).unwrap();
        let b = Model::build(small(Task::Reconstruction, HeadMode::Dual)).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn dual_differs_only_by_variance_head() {
        for task in [Task::Segmentation, Task::Reconstruction] {
            let single = Model::build(small(task, HeadMode::Single)).unwrap();
            let dual = Model::build(small(task, HeadMode::Dual)).unwrap();
            // head.logvar.conv: 4*4*9 + 4, head.logvar.out: 4*1*1 + 1
            let expected = (4 * 4 * 9 + 4) + (4 + 1);
            assert_eq!(dual.variance_head_parameter_count(), expected);
            assert_eq!(dual.parameter_count() - single.parameter_count(), expected);
            assert_eq!(single.variance_head_parameter_count(), 0);
            let n = single.params().len();
            assert_eq!(&dual.params()[..n], single.params());
            assert_eq!(&dual.param_names()[..n], single.param_names().as_slice());
        }
    }

    #[test]
    fn zero_input_is_finite_and_clamped() {
        let m = Model::build(small(Task::Segmentation, HeadMode::Dual)).unwrap();
        let out = m.forward(&Tensor::zeros(&[2, 1, 16, 16]), false, &mut RngState::new(0)).unwrap();
        assert!(out.prediction.all_finite());
        let s = out.log_variance.unwrap();
        assert!(s.data().iter().all(|v| (LOG_VARIANCE_MIN..=LOG_VARIANCE_MAX).contains(v)));
    }

    #[test]
    fn single_head_has_no_log_variance() {
        let m = Model::build(small(Task::Reconstruction, HeadMode::Single)).unwrap();
        let out = m.forward(&batch(1, 16, 16, 1), false, &mut RngState::new(0)).unwrap();
        assert_eq!(out.prediction.shape(), &[1, 1, 16, 16]);
        assert!(out.log_variance.is_none());
        assert!(out.variance().is_none());
    }

    #[test]
    fn inference_is_deterministic_training_is_not() {
        let m = Model::build(small(Task::Segmentation, HeadMode::Single)).unwrap();
        let x = batch(1, 16, 16, 3);
        let mut rng = RngState::new(4);
        let a = m.forward(&x, false, &mut rng).unwrap();
        let b = m.forward(&x, false, &mut rng).unwrap();
        assert_eq!(a, b);
        let c = m.forward(&x, true, &mut rng).unwrap();
        let d = m.forward(&x, true, &mut rng).unwrap();
        assert_ne!(c.prediction, d.prediction);
    }

    #[test]
    fn wrong_input_size_rejected() {
        let m = Model::build(small(Task::Segmentation, HeadMode::Single)).unwrap();
        let err = m.forward(&batch(1, 8, 16, 0), false, &mut RngState::new(0));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let err = m.forward(&Tensor::full(&[1, 1, 16, 16], 1.5), false, &mut RngState::new(0));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mc_dropout_contract() {
        let m = Model::build(small(Task::Segmentation, HeadMode::Single)).unwrap();
        let x = batch(2, 16, 16, 5);
        let rng = RngState::new(8);
        let r = m.forward_mc_dropout(&x, 5, &rng).unwrap();
        assert_eq!(r.samples_used, 5);
        assert_eq!(r.mean_prediction.shape(), &[2, 2, 16, 16]);
        assert_eq!(r.model_uncertainty.shape(), &[2, 1, 16, 16]);
        assert!(r.model_uncertainty.data().iter().all(|&v| v >= 0.0));
        assert!(r.model_uncertainty.data().iter().any(|&v| v > 0.0));
        assert_eq!(r, m.forward_mc_dropout(&x, 5, &rng).unwrap());
        assert!(m.forward_mc_dropout(&x, 1, &rng).is_err());

        let no_drop = Model::build(ModelConfig {
            dropout_rate: 0.0,
            ..small(Task::Segmentation, HeadMode::Single)
        })
        .unwrap();
        assert!(matches!(no_drop.forward_mc_dropout(&x, 5, &rng), Err(Error::InvalidState(_))));
    }

    #[test]
    fn foreground_probability_matches_softmax() {
        let mut r = RngState::new(1);
        let logits = Tensor::from_fn(&[2, 2, 3, 3], |_| 4.0 * r.normal());
        let p = foreground_probability(&logits).unwrap();
        let s = softmax_channels(&logits).unwrap();
        let fg = select_channel(&s, 1).unwrap();
        for (a, b) in p.data().iter().zip(&fg) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
