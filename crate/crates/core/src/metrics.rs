//! Segmentation, reconstruction and uncertainty metrics, plus timing.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid_arg, Error, Result};
use crate::image::{Image, Mask};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_PATCH: usize = 16;

fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(invalid_arg!("shape mismatch: {a:?} vs {b:?}"));
    }
    Ok(())
}

/// Foreground iff `prob >= threshold`.
pub fn binarize(prob: &Image, threshold: f64) -> Mask {
    Mask::from_fn(prob.height(), prob.width(), |y, x| prob.get(y, x) >= threshold)
}

struct Counts {
    inter: usize,
    pred: usize,
    gt: usize,
}

fn counts(pred: &Mask, gt: &Mask) -> Result<Counts> {
    same_dims(pred.dims(), gt.dims())?;
    let mut c = Counts { inter: 0, pred: 0, gt: 0 };
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        c.pred += p as usize;
        c.gt += g as usize;
        c.inter += (p && g) as usize;
    }
    Ok(c)
}

/// `2|P∩G| / (|P| + |G|)`; 1.0 when both masks are empty.
pub fn dice(pred: &Mask, gt: &Mask) -> Result<f64> {
    let c = counts(pred, gt)?;
    if c.pred + c.gt == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * c.inter as f64 / (c.pred + c.gt) as f64)
}

/// `|P∩G| / |P∪G|`; 1.0 when both masks are empty.
pub fn jaccard(pred: &Mask, gt: &Mask) -> Result<f64> {
    let c = counts(pred, gt)?;
    let union = c.pred + c.gt - c.inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(c.inter as f64 / union as f64)
}

/// Majority label of every `patch × patch` block: foreground iff strictly
/// more than half its pixels are foreground.
pub fn patch_labels(mask: &Mask, patch: usize) -> Result<Vec<bool>> {
    let (h, w) = mask.dims();
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(invalid_arg!("image {h}x{w} is not divisible into {patch}x{patch} patches"));
    }
    let (ph, pw) = (h / patch, w / patch);
    let mut fg = vec![0usize; ph * pw];
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) {
                fg[(y / patch) * pw + x / patch] += 1;
            }
        }
    }
    Ok(fg.into_iter().map(|n| 2 * n > patch * patch).collect())
}

/// Fraction of patches whose majority labels differ.
pub fn patch_err(pred: &Mask, gt: &Mask, patch: usize) -> Result<f64> {
    same_dims(pred.dims(), gt.dims())?;
    let (a, b) = (patch_labels(pred, patch)?, patch_labels(gt, patch)?);
    let wrong = a.iter().zip(&b).filter(|(p, g)| p != g).count();
    Ok(wrong as f64 / a.len() as f64)
}

/// Hit and mistake coefficients `(|P∩G|/|G|, |P∖G|/|G|)`.
pub fn hit_mistake(pred: &Mask, gt: &Mask) -> Result<(f64, f64)> {
    let c = counts(pred, gt)?;
    if c.gt == 0 {
        return Err(invalid_arg!("hit/mistake coefficients are undefined for an empty ground truth"));
    }
    let g = c.gt as f64;
    Ok((c.inter as f64 / g, (c.pred - c.inter) as f64 / g))
}

/// PSNR in dB, or `Infinite` for identical images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsnrValue {
    Finite(f64),
    Infinite,
}

impl PsnrValue {
    pub fn as_f64(self) -> f64 {
        match self {
            PsnrValue::Finite(v) => v,
            PsnrValue::Infinite => f64::INFINITY,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            PsnrValue::Infinite
        } else {
            PsnrValue::Finite(v)
        }
    }
}

impl fmt::Display for PsnrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PsnrValue::Finite(v) => write!(f, "{v:.3} dB"),
            PsnrValue::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for PsnrValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PsnrValue::Finite(v) => s.serialize_f64(*v),
            PsnrValue::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PsnrValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(PsnrValue::Finite(v)),
            Repr::Text(t) if t == "inf" => Ok(PsnrValue::Infinite),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad PSNR value {t:?}"))),
        }
    }
}

pub fn psnr(a: &Image, b: &Image, max_val: f64) -> Result<PsnrValue> {
    same_dims(a.dims(), b.dims())?;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PsnrValue::Infinite);
    }
    Ok(PsnrValue::Finite(10.0 * (max_val * max_val / mse).log10()))
}

/// Mean variance over four pixel partitions; a mean is `None` when its
/// partition is empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyStats {
    pub mean_var_foreground: Option<f64>,
    pub mean_var_background: Option<f64>,
    pub mean_var_correct: Option<f64>,
    pub mean_var_incorrect: Option<f64>,
    pub count_foreground: usize,
    pub count_background: usize,
    pub count_correct: usize,
    pub count_incorrect: usize,
}

fn mean_of(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// Foreground/background follow the ground truth; correct/incorrect compare
/// the prediction with it.
pub fn uncertainty_stats(variance: &Image, gt: &Mask, pred: &Mask) -> Result<UncertaintyStats> {
    same_dims(variance.dims(), gt.dims())?;
    same_dims(pred.dims(), gt.dims())?;
    let mut sums = [0.0f64; 4];
    let mut n = [0usize; 4];
    for ((&v, &g), &p) in variance.data().iter().zip(gt.data()).zip(pred.data()) {
        if !(v >= 0.0) {
            return Err(invalid_arg!("variance map contains {v}"));
        }
        let side = if g { 0 } else { 1 };
        let outcome = if g == p { 2 } else { 3 };
        for k in [side, outcome] {
            sums[k] += v;
            n[k] += 1;
        }
    }
    Ok(UncertaintyStats {
        mean_var_foreground: mean_of(sums[0], n[0]),
        mean_var_background: mean_of(sums[1], n[1]),
        mean_var_correct: mean_of(sums[2], n[2]),
        mean_var_incorrect: mean_of(sums[3], n[3]),
        count_foreground: n[0],
        count_background: n[1],
        count_correct: n[2],
        count_incorrect: n[3],
    })
}

impl UncertaintyStats {
    /// Pools several images: each partition mean is weighted by its pixel count.
    pub fn pooled(items: &[UncertaintyStats]) -> Self {
        let pool = |mean: fn(&Self) -> Option<f64>, count: fn(&Self) -> usize| {
            let n: usize = items.iter().map(count).sum();
            let s: f64 = items.iter().map(|u| mean(u).unwrap_or(0.0) * count(u) as f64).sum();
            (mean_of(s, n), n)
        };
        let (fg, nfg) = pool(|u| u.mean_var_foreground, |u| u.count_foreground);
        let (bg, nbg) = pool(|u| u.mean_var_background, |u| u.count_background);
        let (ok, nok) = pool(|u| u.mean_var_correct, |u| u.count_correct);
        let (bad, nbad) = pool(|u| u.mean_var_incorrect, |u| u.count_incorrect);
        Self {
            mean_var_foreground: fg,
            mean_var_background: bg,
            mean_var_correct: ok,
            mean_var_incorrect: bad,
            count_foreground: nfg,
            count_background: nbg,
            count_correct: nok,
            count_incorrect: nbad,
        }
    }
}

/// Wall-clock seconds per call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub median_s: f64,
    pub iqr_s: f64,
    pub measurements_s: Vec<f64>,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl TimingSummary {
    pub fn from_measurements(measurements_s: Vec<f64>) -> Result<Self> {
        if measurements_s.is_empty() {
            return Err(invalid_arg!("no timing measurements"));
        }
        let mut sorted = measurements_s.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            median_s: quantile(&sorted, 0.5),
            iqr_s: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
            measurements_s,
        })
    }
}

/// Times `repeats` calls of `run` after two untimed warm-up calls.
pub fn time_inference(repeats: usize, mut run: impl FnMut() -> Result<()>) -> Result<TimingSummary> {
    if repeats < 5 {
        return Err(invalid_arg!("need at least 5 timed repeats, got {repeats}"));
    }
    run()?;
    run()?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        run()?;
        times.push(t0.elapsed().as_secs_f64());
    }
    TimingSummary::from_measurements(times)
}

/// Metrics of one test image. Segmentation fields are `None` for
/// reconstruction reports and vice versa.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: usize,
    pub dice: Option<f64>,
    pub jaccard: Option<f64>,
    pub err: Option<f64>,
    pub hc: Option<f64>,
    pub mc: Option<f64>,
    pub psnr: Option<PsnrValue>,
}

impl ImageMetrics {
    pub fn segmentation(id: usize, pred: &Mask, gt: &Mask, patch: usize) -> Result<Self> {
        let (hc, mc) = hit_mistake(pred, gt)?;
        Ok(Self {
            id,
            dice: Some(dice(pred, gt)?),
            jaccard: Some(jaccard(pred, gt)?),
            err: Some(patch_err(pred, gt, patch)?),
            hc: Some(hc),
            mc: Some(mc),
            psnr: None,
        })
    }

    pub fn reconstruction(id: usize, pred: &Image, clean: &Image) -> Result<Self> {
        Ok(Self {
            id,
            psnr: Some(psnr(&pred.map_clamped(), clean, 1.0)?),
            ..Default::default()
        })
    }
}

impl Image {
    fn map_clamped(&self) -> Image {
        Image::from_fn(self.height(), self.width(), |y, x| self.get(y, x).clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub dice: Option<f64>,
    pub jaccard: Option<f64>,
    pub err: Option<f64>,
    pub hc: Option<f64>,
    pub mc: Option<f64>,
    /// Infinite if any image is reconstructed exactly.
    pub psnr: Option<PsnrValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_id: String,
    pub dataset_id: String,
    pub seed: u64,
    pub threshold: f64,
    pub per_image: Vec<ImageMetrics>,
    pub mean: MeanMetrics,
}

fn mean_field(items: &[ImageMetrics], f: fn(&ImageMetrics) -> Option<f64>) -> Option<f64> {
    let vals: Option<Vec<f64>> = items.iter().map(f).collect();
    vals.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

impl MeanMetrics {
    pub fn of(items: &[ImageMetrics]) -> Self {
        Self {
            dice: mean_field(items, |m| m.dice),
            jaccard: mean_field(items, |m| m.jaccard),
            err: mean_field(items, |m| m.err),
            hc: mean_field(items, |m| m.hc),
            mc: mean_field(items, |m| m.mc),
            psnr: mean_field(items, |m| m.psnr.map(PsnrValue::as_f64)).map(PsnrValue::from_f64),
        }
    }
}

const CSV_HEADER: [&str; 7] = ["id", "dice", "jaccard", "err", "hc", "mc", "psnr"];

/// Six significant digits; `inf` for infinity, empty for absent.
pub fn format_sig6(v: f64) -> String {
    if v == f64::INFINITY {
        return "inf".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        return format!("{v:.5e}");
    }
    let s = format!("{:.*}", (5 - exp).max(0) as usize, v);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn parse_cell(cell: &str, path: &Path, row: usize) -> Result<Option<f64>> {
    match cell {
        "" => Ok(None),
        "inf" => Ok(Some(f64::INFINITY)),
        c => c
            .parse()
            .map(Some)
            .map_err(|_| Error::format(path.display().to_string(), format!("row {row}: bad number {c:?}"))),
    }
}

impl MetricsReport {
    pub fn new(model_id: String, dataset_id: String, seed: u64, threshold: f64, per_image: Vec<ImageMetrics>) -> Self {
        let mean = MeanMetrics::of(&per_image);
        Self {
            model_id,
            dataset_id,
            seed,
            threshold,
            per_image,
            mean,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format("metrics report", e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))
    }

    /// One row per image followed by a `mean` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fmt = |v: Option<f64>| v.map(format_sig6).unwrap_or_default();
        let csv_err = |e: csv::Error| Error::format("metrics csv", e);
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        let rows = self
            .per_image
            .iter()
            .map(|m| (m.id.to_string(), m.dice, m.jaccard, m.err, m.hc, m.mc, m.psnr))
            .chain(std::iter::once({
                let m = &self.mean;
                ("mean".to_string(), m.dice, m.jaccard, m.err, m.hc, m.mc, m.psnr)
            }));
        for (id, d, j, e, hc, mc, p) in rows {
            w.write_record([id, fmt(d), fmt(j), fmt(e), fmt(hc), fmt(mc), fmt(p.map(PsnrValue::as_f64))])
                .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format("metrics csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// Reads the per-image rows and the mean row back from CSV.
    pub fn read_csv(path: &Path) -> Result<(Vec<ImageMetrics>, MeanMetrics)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let bad = |m: String| Error::format(path.display().to_string(), m);
        let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut images = Vec::new();
        let mut mean = None;
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let v = |k: usize| parse_cell(&rec[k], path, i + 1);
            let psnr = v(6)?.map(PsnrValue::from_f64);
            if &rec[0] == "mean" {
                mean = Some(MeanMetrics {
                    dice: v(1)?,
                    jaccard: v(2)?,
                    err: v(3)?,
                    hc: v(4)?,
                    mc: v(5)?,
                    psnr,
                });
            } else {
                images.push(ImageMetrics {
                    id: rec[0].parse().map_err(|_| bad(format!("row {}: bad id {:?}", i + 1, &rec[0])))?,
                    dice: v(1)?,
                    jaccard: v(2)?,
                    err: v(3)?,
                    hc: v(4)?,
                    mc: v(5)?,
                    psnr,
                });
            }
        }
        let mean = mean.ok_or_else(|| bad("missing mean row".into()))?;
        Ok((images, mean))
    }
}

/// Two-sided exact sign test on paired differences; ties are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub positive: usize,
    pub negative: usize,
    pub ties: usize,
    pub p_value: f64,
}

pub fn sign_test(diffs: &[f64]) -> SignTest {
    let positive = diffs.iter().filter(|&&d| d > 0.0).count();
    let negative = diffs.iter().filter(|&&d| d < 0.0).count();
    let n = positive + negative;
    let k = positive.min(negative);
    // P(X <= k) for X ~ Binomial(n, 1/2), summed in log space
    let ln_choose = |n: usize, r: usize| -> f64 {
        (1..=r).map(|i| ((n - r + i) as f64).ln() - (i as f64).ln()).sum()
    };
    let tail: f64 = (0..=k).map(|i| (ln_choose(n, i) - n as f64 * std::f64::consts::LN_2).exp()).sum();
    SignTest {
        positive,
        negative,
        ties: diffs.len() - n,
        p_value: if n == 0 { 1.0 } else { (2.0 * tail).min(1.0) },
    }
}
