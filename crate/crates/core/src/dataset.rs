//! On-disk simulated sequences: `scans/NNNNNN.ply`, `gt.txt`, `meta.json` and `regions.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::Region;
use crate::normals::RawScan;
use crate::ply::{scan_from_table, scan_table, PlyError, PlyTable};
use crate::simulator::{LidarModel, NoiseModel, Preset};
use crate::trajectory::{Trajectory, TrajectoryError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Ply { path: PathBuf, source: PlyError },
    #[error("{path}: {source}")]
    Trajectory {
        path: PathBuf,
        source: TrajectoryError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("malformed dataset: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub preset: String,
    pub seed: u64,
    pub frames: usize,
    pub lidar: LidarModel,
    pub noise: NoiseModel,
    pub frame_rate_hz: f64,
    pub regions: Vec<Region>,
}

impl Meta {
    pub fn for_preset(preset: &Preset, frames: usize) -> Self {
        Self {
            preset: preset.name.clone(),
            seed: preset.noise.seed,
            frames,
            lidar: preset.lidar.clone(),
            noise: preset.noise,
            frame_rate_hz: preset.trajectory.frame_rate_hz,
            regions: preset.regions.clone(),
        }
    }
}

pub struct Dataset {
    pub meta: Meta,
    pub scans: Vec<RawScan>,
    pub gt: Option<Trajectory>,
}

pub fn scan_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("scans").join(format!("{index:06}.ply"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_dataset(
    dir: &Path,
    meta: &Meta,
    scans: &[RawScan],
    gt: &Trajectory,
) -> Result<(), DatasetError> {
    let scans_dir = dir.join("scans");
    fs::create_dir_all(&scans_dir).map_err(io_err(&scans_dir))?;
    for (i, scan) in scans.iter().enumerate() {
        let path = scan_path(dir, i);
        scan_table(scan)
            .write(&path)
            .map_err(|source| DatasetError::Ply { path, source })?;
    }
    let gt_path = dir.join("gt.txt");
    gt.write_tum(&gt_path)
        .map_err(|source| DatasetError::Trajectory {
            path: gt_path,
            source,
        })?;
    let meta_path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(meta).map_err(|source| DatasetError::Json {
        path: meta_path.clone(),
        source,
    })?;
    fs::write(&meta_path, text + "\n").map_err(io_err(&meta_path))?;
    write_regions(&dir.join("regions.json"), &meta.regions)
}

pub fn write_regions(path: &Path, regions: &[Region]) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(regions).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_regions(path: &Path) -> Result<Vec<Region>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a dataset; `gt.txt` is optional, everything else is required.
pub fn read_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: Meta = serde_json::from_str(&text).map_err(|source| DatasetError::Json {
        path: meta_path.clone(),
        source,
    })?;
    let mut scans = Vec::with_capacity(meta.frames);
    for i in 0..meta.frames {
        let path = scan_path(dir, i);
        let table = PlyTable::read(&path).map_err(|source| DatasetError::Ply {
            path: path.clone(),
            source,
        })?;
        scans.push(scan_from_table(&table).map_err(|source| DatasetError::Ply { path, source })?);
    }
    if scans.is_empty() {
        return Err(DatasetError::Malformed("dataset has no scans".into()));
    }
    if scan_path(dir, meta.frames).exists() {
        return Err(DatasetError::Malformed(format!(
            "more scan files than the {} listed in meta.json",
            meta.frames
        )));
    }
    let gt_path = dir.join("gt.txt");
    let gt = if gt_path.exists() {
        let gt = Trajectory::read_tum(&gt_path).map_err(|source| DatasetError::Trajectory {
            path: gt_path.clone(),
            source,
        })?;
        if gt.len() != scans.len() {
            return Err(DatasetError::Malformed(format!(
                "{} scans but {} ground-truth poses",
                scans.len(),
                gt.len()
            )));
        }
        Some(gt)
    } else {
        None
    };
    Ok(Dataset { meta, scans, gt })
}
