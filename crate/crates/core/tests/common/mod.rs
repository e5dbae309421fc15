//! Helpers shared by the integration and acceptance tests: a central
//! finite-difference gradient checker and scalar-loop metric oracles.

#![allow(dead_code)]

use noiseaware::image::{Image, Mask};
use noiseaware::losses::{
    cross_entropy_loss, heteroscedastic_classification_loss, heteroscedastic_regression_loss, mse_loss,
};
use noiseaware::models::{HeadMode, Model, ModelConfig, Task};
use noiseaware::ndgrad::{Tape, Tensor, Var};
use noiseaware::{Result, RngState};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const FD_INSTANCES: usize = 20;
/// Elements probed per input tensor; smaller tensors are probed exhaustively.
const MAX_PROBES: usize = 60;

pub type Builder<'a> = dyn Fn(&mut Tape, &[Var]) -> Result<Var> + 'a;

/// Evaluates `Σ w ⊙ f(inputs)` for fixed pseudo-random weights `w`.
fn projected(inputs: &[Tensor], f: &Builder, grads: bool) -> (f64, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().with_requires_grad(true))).collect();
    let out = f(&mut tape, &vars).expect("graph builds");
    let mut wr = RngState::new(0xfeed);
    let w = Tensor::from_fn(tape.shape(out), |_| wr.uniform_range(-1.0, 1.0));
    let w = tape.constant(w);
    let prod = tape.mul(out, w).unwrap();
    let loss = tape.sum(prod);
    let value = tape.value(loss).item();
    if !grads {
        return (value, Vec::new());
    }
    tape.backward(loss).unwrap();
    let g = vars
        .iter()
        .map(|&v| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; tape.value(v).numel()]))
        .collect();
    (value, g)
}

/// Relative error `‖g_analytic − g_numeric‖ / max(‖g_analytic‖, ‖g_numeric‖)`
/// over probed elements of every input.
pub fn fd_check(inputs: &[Tensor], f: &Builder, probe_rng: &mut RngState) -> f64 {
    let (_, analytic) = projected(inputs, f, true);
    let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
    for (k, t) in inputs.iter().enumerate() {
        let n = t.numel();
        let mut idx: Vec<usize> = (0..n).collect();
        if n > MAX_PROBES {
            probe_rng.shuffle(&mut idx);
            idx.truncate(MAX_PROBES);
        }
        for i in idx {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_STEP;
            let num = (projected(&plus, f, false).0 - projected(&minus, f, false).0) / (2.0 * FD_STEP);
            let ana = analytic[k][i];
            diff2 += (ana - num).powi(2);
            a2 += ana * ana;
            n2 += num * num;
        }
    }
    let scale = a2.sqrt().max(n2.sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff2.sqrt() / scale
    }
}

pub fn rand_tensor(rng: &mut RngState, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform_range(lo, hi))
}

/// Values at least `margin` away from zero.
pub fn away_from_zero(rng: &mut RngState, shape: &[usize], margin: f64) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.uniform_range(margin, 1.5);
        if rng.uniform() < 0.5 {
            -m
        } else {
            m
        }
    })
}

/// `[N, C, H, W]` tensor whose 2×2 windows have a clear unique maximum.
pub fn poolable(rng: &mut RngState, shape: &[usize]) -> Tensor {
    let [n, c, h, w] = [shape[0], shape[1], shape[2], shape[3]];
    let mut t = Tensor::zeros(shape);
    for b in 0..n * c {
        for by in 0..h / 2 {
            for bx in 0..w / 2 {
                let mut vals: Vec<f64> = (0..4).map(|k| k as f64 * 0.1 + rng.uniform_range(-0.03, 0.03)).collect();
                rng.shuffle(&mut vals);
                for (k, v) in vals.into_iter().enumerate() {
                    let (y, x) = (2 * by + k / 2, 2 * bx + k % 2);
                    t.data_mut()[b * h * w + y * w + x] = v + rng.uniform_range(-1.0, 1.0).round();
                }
            }
        }
    }
    t
}

pub fn binary_mask(rng: &mut RngState, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| if rng.uniform() < 0.5 { 1.0 } else { 0.0 })
}

type Case = fn(&mut RngState) -> f64;

fn with_inputs(inputs: Vec<Tensor>, rng: &mut RngState, f: &Builder) -> f64 {
    fd_check(&inputs, f, rng)
}

fn case_add(r: &mut RngState) -> f64 {
    let i = vec![rand_tensor(r, &[2, 3, 4], -1.0, 1.0), rand_tensor(r, &[2, 3, 4], -1.0, 1.0)];
    with_inputs(i, r, &|t, v| t.add(v[0], v[1]))
}
fn case_sub(r: &mut RngState) -> f64 {
    let i = vec![rand_tensor(r, &[3, 5], -1.0, 1.0), rand_tensor(r, &[1], -1.0, 1.0)];
    with_inputs(i, r, &|t, v| t.sub(v[0], v[1]))
}
fn case_mul(r: &mut RngState) -> f64 {
    let i = vec![rand_tensor(r, &[2, 2, 3, 3], -2.0, 2.0), rand_tensor(r, &[2, 2, 3, 3], -2.0, 2.0)];
    with_inputs(i, r, &|t, v| t.mul(v[0], v[1]))
}
fn case_mul_scalar(r: &mut RngState) -> f64 {
    let i = vec![rand_tensor(r, &[4, 4], -2.0, 2.0), rand_tensor(r, &[1], -2.0, 2.0)];
    with_inputs(i, r, &|t, v| t.mul(v[0], v[1]))
}
fn case_relu(r: &mut RngState) -> f64 {
    let i = vec![away_from_zero(r, &[3, 7], 1e-2)];
    with_inputs(i, r, &|t, v| Ok(t.relu(v[0])))
}
fn case_sigmoid(r: &mut RngState) -> f64 {
    let i = vec![rand_tensor(r, &[3, 7], -6.0, 6.0)];
    with_inputs(i, r, &|t, v| Ok(t.sigmoid(v[0])))
}
fn case_exp(r: &mut RngState) -> f64 {
    let i = vec![rand_tensor(r, &[3, 7], -3.0, 3.0)];
    with_inputs(i, r, &|t, v| Ok(t.exp(v[0])))
}
fn case_log(r: &mut RngState) -> f64 {
    let i = vec![rand_tensor(r, &[3, 7], 0.1, 5.0)];
    with_inputs(i, r, &|t, v| Ok(t.log(v[0])))
}
fn case_neg_scale_offset(r: &mut RngState) -> f64 {
    let factor = r.uniform_range(-3.0, 3.0);
    let i = vec![rand_tensor(r, &[5, 4], -2.0, 2.0)];
    with_inputs(i, r, &move |t, v| {
        let a = t.neg(v[0]);
        let b = t.scale(a, factor);
        Ok(t.offset(b, 0.7))
    })
}
fn case_clamp(r: &mut RngState) -> f64 {
    // keep every value clear of the bounds so the probe never crosses a kink
    let i = vec![Tensor::from_fn(&[4, 6], |_| {
        let v = r.uniform_range(-2.0, 2.0);
        if (v.abs() - 1.0).abs() < 1e-2 {
            v * 1.1
        } else {
            v
        }
    })];
    with_inputs(i, r, &|t, v| Ok(t.clamp(v[0], -1.0, 1.0)))
}
fn case_conv(r: &mut RngState) -> f64 {
    let padding = r.int_range(0, 1) as usize;
    let stride = r.int_range(1, 2) as usize;
    let k = if r.uniform() < 0.5 { 1 } else { 3 };
    let i = vec![
        rand_tensor(r, &[2, 3, 7, 5], -1.0, 1.0),
        rand_tensor(r, &[4, 3, k, k], -1.0, 1.0),
        rand_tensor(r, &[4], -1.0, 1.0),
    ];
    with_inputs(i, r, &move |t, v| t.conv2d(v[0], v[1], v[2], padding, stride))
}
fn case_max_pool(r: &mut RngState) -> f64 {
    let i = vec![poolable(r, &[2, 2, 4, 6])];
    with_inputs(i, r, &|t, v| t.max_pool2(v[0]))
}
fn case_upsample(r: &mut RngState) -> f64 {
    let factor = r.int_range(2, 3) as usize;
    let i = vec![rand_tensor(r, &[2, 2, 3, 2], -1.0, 1.0)];
    with_inputs(i, r, &move |t, v| t.upsample_nearest(v[0], factor))
}
fn case_concat(r: &mut RngState) -> f64 {
    let axis = r.int_range(0, 1) as usize;
    let (sa, sb) = if axis == 1 { ([2, 3, 4, 4], [2, 1, 4, 4]) } else { ([2, 3, 4, 4], [1, 3, 4, 4]) };
    let i = vec![rand_tensor(r, &sa, -1.0, 1.0), rand_tensor(r, &sb, -1.0, 1.0)];
    with_inputs(i, r, &move |t, v| t.concat(&[v[0], v[1]], axis))
}
fn case_dropout(r: &mut RngState) -> f64 {
    let seed = r.next_u64();
    let i = vec![rand_tensor(r, &[3, 4, 5], -1.0, 1.0)];
    // same mask on every evaluation
    with_inputs(i, r, &move |t, v| t.dropout(v[0], 0.3, true, &mut RngState::new(seed)))
}
fn case_log_sum_exp(r: &mut RngState) -> f64 {
    let axis = r.int_range(0, 3) as usize;
    let i = vec![rand_tensor(r, &[2, 3, 4, 2], -4.0, 4.0)];
    with_inputs(i, r, &move |t, v| t.log_sum_exp(v[0], axis))
}
fn case_sum_axis(r: &mut RngState) -> f64 {
    let axis = r.int_range(0, 2) as usize;
    let i = vec![rand_tensor(r, &[3, 4, 2], -1.0, 1.0)];
    with_inputs(i, r, &move |t, v| t.sum_axis(v[0], axis))
}
fn case_sum_mean(r: &mut RngState) -> f64 {
    let i = vec![rand_tensor(r, &[3, 4, 2], -1.0, 1.0)];
    with_inputs(i, r, &|t, v| {
        let s = t.sum(v[0]);
        let m = t.mean(v[0]);
        t.mul(s, m)
    })
}
fn case_mse(r: &mut RngState) -> f64 {
    let i = vec![rand_tensor(r, &[2, 1, 4, 4], 0.0, 1.0), rand_tensor(r, &[2, 1, 4, 4], 0.0, 1.0)];
    with_inputs(i, r, &|t, v| Ok(mse_loss(t, v[0], v[1])?.scalar))
}
fn case_cross_entropy(r: &mut RngState) -> f64 {
    let mask = binary_mask(r, &[2, 1, 4, 4]);
    let i = vec![rand_tensor(r, &[2, 2, 4, 4], -3.0, 3.0)];
    with_inputs(i, r, &move |t, v| Ok(cross_entropy_loss(t, v[0], &mask)?.scalar))
}
pub fn case_het_regression(r: &mut RngState) -> f64 {
    let i = vec![
        rand_tensor(r, &[2, 1, 5, 4], -1.0, 1.0),
        rand_tensor(r, &[2, 1, 5, 4], -3.0, 3.0),
        rand_tensor(r, &[2, 1, 5, 4], -1.0, 1.0),
    ];
    with_inputs(i, r, &|t, v| Ok(heteroscedastic_regression_loss(t, v[0], v[1], v[2])?.per_pixel.unwrap()))
}
pub fn case_het_classification(r: &mut RngState) -> f64 {
    let mask = binary_mask(r, &[2, 1, 4, 3]);
    let noise_seed = r.next_u64();
    let samples = r.int_range(1, 6) as usize;
    let i = vec![rand_tensor(r, &[2, 2, 4, 3], -3.0, 3.0), rand_tensor(r, &[2, 1, 4, 3], -4.0, 2.0)];
    // common random numbers: every evaluation replays the same noise draws
    with_inputs(i, r, &move |t, v| {
        let mut noise = RngState::new(noise_seed);
        Ok(heteroscedastic_classification_loss(t, v[0], v[1], &mask, samples, &mut noise)?.per_pixel.unwrap())
    })
}

/// Whole dual-head model: gradient of the classification loss with respect to
/// the input image. Dropout masks and logit noise are replayed exactly.
fn case_model(r: &mut RngState) -> f64 {
    let mut c = ModelConfig::new(Task::Segmentation, HeadMode::Dual);
    c.base_channels = 2;
    c.depth = 2;
    c.input_size = (8, 8);
    c.seed = r.next_u64();
    let model = Model::build(c).unwrap();
    let mask = binary_mask(r, &[1, 1, 8, 8]);
    let seed = r.next_u64();
    let i = vec![rand_tensor(r, &[1, 1, 8, 8], 0.0, 1.0)];
    with_inputs(i, r, &move |t, v| {
        let bound = model.bind(t, false);
        let mut drop = RngState::new(seed);
        let out = model.forward_on_tape(t, &bound, v[0], true, &mut drop)?;
        let mut noise = RngState::new(seed ^ 1);
        Ok(heteroscedastic_classification_loss(t, out.prediction, out.log_variance.unwrap(), &mask, 3, &mut noise)?
            .scalar)
    })
}

pub const CASES: &[(&str, Case)] = &[
    ("add", case_add),
    ("sub", case_sub),
    ("mul", case_mul),
    ("mul_scalar", case_mul_scalar),
    ("relu", case_relu),
    ("sigmoid", case_sigmoid),
    ("exp", case_exp),
    ("log", case_log),
    ("neg_scale_offset", case_neg_scale_offset),
    ("clamp", case_clamp),
    ("conv2d", case_conv),
    ("max_pool2", case_max_pool),
    ("upsample_nearest", case_upsample),
    ("concat", case_concat),
    ("dropout", case_dropout),
    ("log_sum_exp", case_log_sum_exp),
    ("sum_axis", case_sum_axis),
    ("sum_mean", case_sum_mean),
    ("mse_loss", case_mse),
    ("cross_entropy_loss", case_cross_entropy),
    ("heteroscedastic_regression_loss", case_het_regression),
    ("heteroscedastic_classification_loss", case_het_classification),
    ("dual_head_model", case_model),
];

/// Worst relative error of each case over `FD_INSTANCES` seeded instances.
pub fn run_gradient_cases() -> Vec<(&'static str, f64)> {
    CASES
        .iter()
        .map(|&(name, case)| {
            let worst = (0..FD_INSTANCES)
                .map(|i| case(&mut RngState::new(1000 + i as u64)))
                .fold(0.0, f64::max);
            (name, worst)
        })
        .collect()
}

pub fn random_mask(rng: &mut RngState, h: usize, w: usize, p: f64) -> Mask {
    Mask::from_fn(h, w, |_, _| rng.uniform() < p)
}

pub fn random_image(rng: &mut RngState, h: usize, w: usize) -> Image {
    Image::from_fn(h, w, |_, _| rng.uniform())
}

pub mod oracle {
    //! Scalar double-loop reference implementations.

    use noiseaware::image::{Image, Mask};

    fn at(m: &Mask, y: usize, x: usize) -> bool {
        m.data()[y * m.width() + x]
    }

    pub fn dice(p: &Mask, g: &Mask) -> f64 {
        let (mut inter, mut sp, mut sg) = (0u64, 0u64, 0u64);
        for y in 0..p.height() {
            for x in 0..p.width() {
                let (a, b) = (at(p, y, x), at(g, y, x));
                if a {
                    sp += 1;
                }
                if b {
                    sg += 1;
                }
                if a && b {
                    inter += 1;
                }
            }
        }
        if sp + sg == 0 {
            1.0
        } else {
            2.0 * inter as f64 / (sp + sg) as f64
        }
    }

    pub fn jaccard(p: &Mask, g: &Mask) -> f64 {
        let (mut inter, mut union) = (0u64, 0u64);
        for y in 0..p.height() {
            for x in 0..p.width() {
                let (a, b) = (at(p, y, x), at(g, y, x));
                if a && b {
                    inter += 1;
                }
                if a || b {
                    union += 1;
                }
            }
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn patch_err(p: &Mask, g: &Mask, patch: usize) -> f64 {
        let (mut wrong, mut total) = (0u64, 0u64);
        let mut py = 0;
        while py < p.height() {
            let mut px = 0;
            while px < p.width() {
                let (mut cp, mut cg) = (0usize, 0usize);
                for y in py..py + patch {
                    for x in px..px + patch {
                        cp += at(p, y, x) as usize;
                        cg += at(g, y, x) as usize;
                    }
                }
                let half = patch * patch / 2;
                let (lp, lg) = (cp > half, cg > half);
                if lp != lg {
                    wrong += 1;
                }
                total += 1;
                px += patch;
            }
            py += patch;
        }
        wrong as f64 / total as f64
    }

    pub fn hit_mistake(p: &Mask, g: &Mask) -> (f64, f64) {
        let (mut hit, mut miss, mut area) = (0u64, 0u64, 0u64);
        for y in 0..p.height() {
            for x in 0..p.width() {
                let (a, b) = (at(p, y, x), at(g, y, x));
                if b {
                    area += 1;
                    if a {
                        hit += 1;
                    }
                } else if a {
                    miss += 1;
                }
            }
        }
        (hit as f64 / area as f64, miss as f64 / area as f64)
    }

    pub fn psnr(a: &Image, b: &Image) -> f64 {
        let mut se = 0.0;
        for y in 0..a.height() {
            for x in 0..a.width() {
                let d = a.get(y, x) - b.get(y, x);
                se += d * d;
            }
        }
        let mse = se / (a.height() * a.width()) as f64;
        if mse == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (1.0 / mse).log10()
        }
    }

    /// `[fg, bg, correct, incorrect]`, `None` for empty partitions.
    pub fn uncertainty(v: &Image, g: &Mask, p: &Mask) -> [Option<f64>; 4] {
        let mut sum = [0.0; 4];
        let mut n = [0u64; 4];
        for y in 0..v.height() {
            for x in 0..v.width() {
                let val = v.get(y, x);
                let (gt, pr) = (at(g, y, x), at(p, y, x));
                let k1 = if gt { 0 } else { 1 };
                let k2 = if gt == pr { 2 } else { 3 };
                sum[k1] += val;
                n[k1] += 1;
                sum[k2] += val;
                n[k2] += 1;
            }
        }
        let mut out = [None; 4];
        for k in 0..4 {
            if n[k] > 0 {
                out[k] = Some(sum[k] / n[k] as f64);
            }
        }
        out
    }
}

/// Compares every metric against the scalar-loop oracles on `instances`
/// random 64×64 pairs. Returns the number of comparisons and any mismatches.
pub fn metric_oracle_mismatches(instances: usize, seed: u64) -> (usize, Vec<String>) {
    use noiseaware::metrics::{dice, hit_mistake, jaccard, patch_err, psnr, uncertainty_stats, DEFAULT_PATCH};

    let root = RngState::new(seed);
    let mut failures = Vec::new();
    let mut checks = 0;
    let mut check = |name: &str, i: usize, got: f64, want: f64, tol: f64| {
        checks += 1;
        let same = got == want || (got - want).abs() <= tol;
        if !same {
            failures.push(format!("instance {i} {name}: got {got}, oracle {want}"));
        }
    };
    for i in 0..instances {
        let mut r = root.substream(i as u64);
        let pg = r.uniform_range(0.05, 0.95);
        let mut gt = random_mask(&mut r, 64, 64, pg);
        if gt.count() == 0 {
            gt = Mask::from_fn(64, 64, |y, x| y == 0 && x == 0);
        }
        let pred = match i % 10 {
            0 => gt.clone(),
            1 => gt.complement(),
            _ => {
                // mostly-agreeing prediction with random flips
                let flip = r.uniform_range(0.0, 0.6);
                Mask::from_fn(64, 64, |y, x| gt.get(y, x) ^ (r.uniform() < flip))
            }
        };
        let d = dice(&pred, &gt).unwrap();
        let j = jaccard(&pred, &gt).unwrap();
        check("dice", i, d, oracle::dice(&pred, &gt), 1e-12);
        check("jaccard", i, j, oracle::jaccard(&pred, &gt), 1e-12);
        check("jaccard-dice identity", i, j, d / (2.0 - d), 1e-9);
        check("dice symmetry", i, dice(&gt, &pred).unwrap(), d, 0.0);
        check(
            "err",
            i,
            patch_err(&pred, &gt, DEFAULT_PATCH).unwrap(),
            oracle::patch_err(&pred, &gt, DEFAULT_PATCH),
            0.0,
        );
        let (hc, mc) = hit_mistake(&pred, &gt).unwrap();
        let (ohc, omc) = oracle::hit_mistake(&pred, &gt);
        check("hc", i, hc, ohc, 1e-12);
        check("mc", i, mc, omc, 1e-12);

        let a = random_image(&mut r, 64, 64);
        let b = if i % 10 == 0 { a.clone() } else { random_image(&mut r, 64, 64) };
        check("psnr", i, psnr(&a, &b, 1.0).unwrap().as_f64(), oracle::psnr(&a, &b), 1e-9);

        let scale = r.uniform_range(1e-3, 2.0);
        let var = Image::from_fn(64, 64, |_, _| scale * r.uniform());
        let u = uncertainty_stats(&var, &gt, &pred).unwrap();
        let o = oracle::uncertainty(&var, &gt, &pred);
        let got = [u.mean_var_foreground, u.mean_var_background, u.mean_var_correct, u.mean_var_incorrect];
        for (k, (g, w)) in got.iter().zip(o).enumerate() {
            match (g, w) {
                (Some(g), Some(w)) => check("uncertainty", i, *g, w, 1e-12),
                (None, None) => check("uncertainty", i, 0.0, 0.0, 0.0),
                _ => check("uncertainty partition presence", i, k as f64, f64::NAN, 0.0),
            }
        }
    }
    (checks, failures)
}

