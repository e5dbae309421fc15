use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid_arg, Error, Result};
use crate::rng::RngState;

use super::degrade::{degrade, DegradationParams, OcclusionBlobs};
use super::ridge::{generate_clean, EllipseMask, Harmonic, OrientationField, RidgeParams};
use super::{load_sample, save_sample, Sample, SampleFiles};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

/// Closed `[lo, hi]` interval that sample parameters are drawn from uniformly.
pub type Range = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamRanges {
    pub ridge_frequency: Range,
    pub orientation_harmonics: usize,
    pub orientation_amplitude: Range,
    /// Cycles per image.
    pub orientation_harmonic_frequency: Range,
    /// Semi-axes as fractions of image height / width.
    pub mask_semi_axis_y: Range,
    pub mask_semi_axis_x: Range,
    /// Centre offset from the image middle, as a fraction of the image size.
    pub mask_center_jitter: Range,
    pub mask_rotation: Range,
    pub gaussian_noise_std: Range,
    pub blur_sigma: Range,
    pub dryness_gap_rate: Range,
    pub background_texture_gain: Range,
    /// Inclusive integer range.
    pub occlusion_count: [usize; 2],
    pub occlusion_radius: Range,
}

impl Default for ParamRanges {
    /// Moderate degradation.
    fn default() -> Self {
        Self {
            ridge_frequency: [0.08, 0.14],
            orientation_harmonics: 2,
            orientation_amplitude: [0.0, 0.6],
            orientation_harmonic_frequency: [0.3, 1.2],
            mask_semi_axis_y: [0.42, 0.50],
            mask_semi_axis_x: [0.36, 0.46],
            mask_center_jitter: [-0.08, 0.08],
            mask_rotation: [-0.5, 0.5],
            gaussian_noise_std: [0.02, 0.12],
            blur_sigma: [0.0, 1.0],
            dryness_gap_rate: [0.0, 0.25],
            background_texture_gain: [0.5, 0.9],
            occlusion_count: [0, 3],
            occlusion_radius: [2.0, 6.0],
        }
    }
}

impl ParamRanges {
    fn validate(&self) -> Result<()> {
        let ranges = [
            ("ridge_frequency", self.ridge_frequency),
            ("orientation_amplitude", self.orientation_amplitude),
            ("orientation_harmonic_frequency", self.orientation_harmonic_frequency),
            ("mask_semi_axis_y", self.mask_semi_axis_y),
            ("mask_semi_axis_x", self.mask_semi_axis_x),
            ("mask_center_jitter", self.mask_center_jitter),
            ("mask_rotation", self.mask_rotation),
            ("gaussian_noise_std", self.gaussian_noise_std),
            ("blur_sigma", self.blur_sigma),
            ("dryness_gap_rate", self.dryness_gap_rate),
            ("background_texture_gain", self.background_texture_gain),
            ("occlusion_radius", self.occlusion_radius),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(invalid_arg!("range {name} = [{lo}, {hi}] is not a valid interval"));
            }
        }
        if self.occlusion_count[0] > self.occlusion_count[1] {
            return Err(invalid_arg!("occlusion_count range is inverted"));
        }
        let area_lo = PI * self.mask_semi_axis_y[0] * self.mask_semi_axis_x[0];
        let area_hi = PI * self.mask_semi_axis_y[1] * self.mask_semi_axis_x[1];
        if area_lo < 0.2 || area_hi > 0.8 {
            return Err(invalid_arg!(
                "mask semi-axis ranges allow area fractions [{area_lo:.3}, {area_hi:.3}] outside [0.2, 0.8]"
            ));
        }
        Ok(())
    }

    fn draw(&self, image_size: (usize, usize), rng: &mut RngState) -> (RidgeParams, DegradationParams) {
        let u = |rng: &mut RngState, r: Range| rng.uniform_range(r[0], r[1]);
        let (h, w) = (image_size.0 as f64, image_size.1 as f64);
        let harmonics = (0..self.orientation_harmonics)
            .map(|_| Harmonic {
                amplitude: u(rng, self.orientation_amplitude),
                freq_y: u(rng, self.orientation_harmonic_frequency),
                freq_x: u(rng, self.orientation_harmonic_frequency),
                phase: rng.uniform_range(0.0, 2.0 * PI),
            })
            .collect();
        let ridge = RidgeParams {
            image_size,
            ridge_frequency: u(rng, self.ridge_frequency),
            orientation_field: OrientationField {
                base_angle: rng.uniform_range(0.0, PI),
                harmonics,
            },
            mask_shape: EllipseMask {
                center: (
                    h * (0.5 + u(rng, self.mask_center_jitter)),
                    w * (0.5 + u(rng, self.mask_center_jitter)),
                ),
                semi_axes: (h * u(rng, self.mask_semi_axis_y), w * u(rng, self.mask_semi_axis_x)),
                rotation: u(rng, self.mask_rotation),
            },
            seed: rng.next_u64(),
        };
        let degradation = DegradationParams {
            gaussian_noise_std: u(rng, self.gaussian_noise_std),
            occlusion_blobs: OcclusionBlobs {
                count: rng.int_range(self.occlusion_count[0] as u64, self.occlusion_count[1] as u64) as usize,
                radius_min: self.occlusion_radius[0],
                radius_max: self.occlusion_radius[1],
            },
            blur_sigma: u(rng, self.blur_sigma),
            dryness_gap_rate: u(rng, self.dryness_gap_rate),
            background_texture_gain: u(rng, self.background_texture_gain),
            seed: rng.next_u64(),
        };
        (ridge, degradation)
    }
}

/// Which task a dataset is meant for. `Both` serves segmentation and reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetTask {
    #[default]
    Both,
    Segmentation,
    Reconstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub n: usize,
    #[serde(default = "default_image_size")]
    pub image_size: (usize, usize),
    #[serde(default)]
    pub ranges: ParamRanges,
    #[serde(default = "default_split_ratio")]
    pub split_ratio: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub task: DatasetTask,
}

fn default_image_size() -> (usize, usize) {
    (64, 64)
}

fn default_split_ratio() -> f64 {
    0.8
}

impl DatasetSpec {
    /// 200 train / 50 test samples of 64×64 pixels.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            n: 250,
            image_size: default_image_size(),
            ranges: ParamRanges::default(),
            split_ratio: default_split_ratio(),
            seed,
            task: DatasetTask::Both,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid_arg!("dataset needs at least 2 samples, got {}", self.n));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(invalid_arg!("split_ratio {} outside (0, 1)", self.split_ratio));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(invalid_arg!("image size must be positive"));
        }
        self.ranges.validate()
    }

    /// Number of training samples; at least one sample lands in each split.
    pub fn train_count(&self) -> usize {
        ((self.n as f64 * self.split_ratio).round() as usize).clamp(1, self.n - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the dataset directory.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub split: Split,
    pub stem: PathBuf,
    pub files: Vec<FileRecord>,
    pub ridge_params: RidgeParams,
    pub degradation_params: DegradationParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub spec: DatasetSpec,
    pub samples: Vec<ManifestEntry>,
    /// SHA-256 over the serialized `DatasetSpec` and every file hash, in sample order.
    pub dataset_hash: String,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Builds sample `index` from its own substream of the dataset seed.
pub fn generate_sample(spec: &DatasetSpec, index: usize) -> Result<Sample> {
    let mut rng = RngState::new(spec.seed).substream(index as u64);
    let (ridge_params, degradation_params) = spec.ranges.draw(spec.image_size, &mut rng);
    let (clean, mask) = generate_clean(&ridge_params)?;
    let mut noise_rng = RngState::new(degradation_params.seed);
    let degraded = degrade(&clean, &mask, &degradation_params, &mut noise_rng)?;
    Ok(Sample {
        degraded,
        clean,
        mask,
        ridge_params,
        degradation_params,
    })
}

fn split_assignment(spec: &DatasetSpec) -> Vec<Split> {
    let mut order: Vec<usize> = (0..spec.n).collect();
    // u64::MAX - 1 keeps the split stream apart from every per-sample stream
    RngState::new(spec.seed).substream(u64::MAX - 1).shuffle(&mut order);
    let mut splits = vec![Split::Test; spec.n];
    for &i in &order[..spec.train_count()] {
        splits[i] = Split::Train;
    }
    splits
}

fn write_one(spec: &DatasetSpec, dir: &Path, index: usize, split: Split) -> Result<ManifestEntry> {
    let sample = generate_sample(spec, index)?;
    let stem = PathBuf::from("samples").join(format!("{index:05}"));
    let files = save_sample(&sample, &dir.join(&stem))?;
    let records = files
        .all()
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            Ok(FileRecord {
                path: p.strip_prefix(dir).expect("written under dir").to_path_buf(),
                sha256: sha256_hex(&bytes),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ManifestEntry {
        id: index,
        split,
        stem,
        files: records,
        ridge_params: sample.ridge_params,
        degradation_params: sample.degradation_params,
    })
}

/// Generates, writes and indexes a dataset under `dir`.
///
/// `threads > 1` generates samples on a thread pool; every sample depends only
/// on `(seed, index)`, so the bytes written are the same for any thread count.
pub fn generate_dataset(spec: &DatasetSpec, dir: &Path, threads: usize) -> Result<DatasetManifest> {
    spec.validate()?;
    fs::create_dir_all(dir.join("samples")).map_err(|e| Error::io(dir, e))?;
    let splits = split_assignment(spec);
    let samples: Vec<ManifestEntry> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidState(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..spec.n)
                .into_par_iter()
                .map(|i| write_one(spec, dir, i, splits[i]))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        (0..spec.n)
            .map(|i| write_one(spec, dir, i, splits[i]))
            .collect::<Result<Vec<_>>>()?
    };
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(spec).map_err(|e| Error::format("dataset spec", e))?);
    for entry in &samples {
        for f in &entry.files {
            hasher.update(f.sha256.as_bytes());
        }
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        spec: spec.clone(),
        samples,
        dataset_hash: hex::encode(hasher.finalize()),
    };
    manifest.save(dir)?;
    Ok(manifest)
}

impl DatasetManifest {
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format("manifest", e))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Self =
            serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::format(
                path.display().to_string(),
                format!("unsupported manifest version {}", manifest.format_version),
            ));
        }
        Ok(manifest)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.samples.iter().filter(move |e| e.split == split)
    }

    /// Loads one split after checking every file against its recorded hash.
    pub fn load_split(&self, dir: &Path, split: Split) -> Result<Vec<Sample>> {
        self.entries(split)
            .map(|entry| {
                for f in &entry.files {
                    let path = dir.join(&f.path);
                    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                    let actual = sha256_hex(&bytes);
                    if actual != f.sha256 {
                        return Err(Error::Checksum {
                            path,
                            expected: f.sha256.clone(),
                            actual,
                        });
                    }
                }
                load_sample(&dir.join(&entry.stem))
            })
            .collect()
    }
}

impl SampleFiles {
    fn all(&self) -> Vec<PathBuf> {
        vec![
            self.degraded.clone(),
            self.clean.clone(),
            self.mask.clone(),
            self.meta.clone(),
        ]
    }
}
