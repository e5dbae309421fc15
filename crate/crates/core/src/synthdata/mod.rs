//! Synthetic fingerprint-like data: clean ridge patterns, controllable
//! degradations, and the on-disk sample and dataset formats.

mod dataset;
mod degrade;
pub mod pgm;
mod ridge;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Mask};

pub use dataset::{
    generate_dataset, generate_sample, DatasetManifest, DatasetSpec, DatasetTask, FileRecord, ManifestEntry,
    ParamRanges, Range, Split, MANIFEST_FILE,
};
pub(crate) use dataset::sha256_hex;
pub use degrade::{degrade, gaussian_blur, paint_disk, DegradationParams, OcclusionBlobs};
pub use ridge::{generate_clean, EllipseMask, Harmonic, OrientationField, RidgeParams, BACKGROUND};

/// A degraded input with its clean target and foreground mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub degraded: Image,
    pub clean: Image,
    pub mask: Mask,
    pub ridge_params: RidgeParams,
    pub degradation_params: DegradationParams,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleMeta {
    ridge_params: RidgeParams,
    degradation_params: DegradationParams,
}

/// Paths written by [`save_sample`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleFiles {
    pub degraded: PathBuf,
    pub clean: PathBuf,
    pub mask: PathBuf,
    pub meta: PathBuf,
}

impl SampleFiles {
    pub fn for_stem(stem: &Path) -> Self {
        let with = |suffix: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        Self {
            degraded: with("_degraded.pgm"),
            clean: with("_clean.pgm"),
            mask: with("_mask.pgm"),
            meta: with("_meta.json"),
        }
    }
}

/// Writes `<stem>_degraded.pgm`, `_clean.pgm`, `_mask.pgm` and `_meta.json`.
pub fn save_sample(sample: &Sample, stem: &Path) -> Result<SampleFiles> {
    let files = SampleFiles::for_stem(stem);
    if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let write = |path: &Path, bytes: Vec<u8>| fs::write(path, bytes).map_err(|e| Error::io(path, e));
    write(&files.degraded, pgm::encode_image16(&sample.degraded))?;
    write(&files.clean, pgm::encode_image16(&sample.clean))?;
    write(&files.mask, pgm::encode_mask8(&sample.mask))?;
    let meta = SampleMeta {
        ridge_params: sample.ridge_params.clone(),
        degradation_params: sample.degradation_params.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::format("sample metadata", e))?;
    write(&files.meta, (json + "\n").into_bytes())?;
    Ok(files)
}

pub fn load_sample(stem: &Path) -> Result<Sample> {
    let files = SampleFiles::for_stem(stem);
    let degraded = pgm::read_image(&files.degraded)?;
    let clean = pgm::read_image(&files.clean)?;
    let mask = pgm::read_mask(&files.mask)?;
    if degraded.dims() != clean.dims() || clean.dims() != mask.dims() {
        return Err(Error::format(
            stem.display().to_string(),
            "degraded, clean and mask files differ in size",
        ));
    }
    let text = fs::read_to_string(&files.meta).map_err(|e| Error::io(&files.meta, e))?;
    let meta: SampleMeta =
        serde_json::from_str(&text).map_err(|e| Error::format(files.meta.display().to_string(), e))?;
    Ok(Sample {
        degraded,
        clean,
        mask,
        ridge_params: meta.ridge_params,
        degradation_params: meta.degradation_params,
    })
}
