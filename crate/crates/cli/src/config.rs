//! TOML run configuration with strict key checking.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use nvmap::ablation::AblationFlags;
use nvmap::normals::NormalConfig;
use nvmap::odometry::OdometryOptions;
use nvmap::registration::RegConfig;
use nvmap::simulator::{preset, LidarModel, Preset};
use nvmap::voxelmap::MapConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every random draw in a simulated dataset derives from it.
    pub seed: u64,
    pub preset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub ablation: AblationFlags,
    pub normal: NormalConfig,
    pub map: MapConfig,
    pub registration: RegConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lidar: Option<LidarModel>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            preset: "wall_5cm".into(),
            range_sigma: None,
            output_dir: None,
            ablation: AblationFlags::default(),
            normal: NormalConfig::default(),
            map: MapConfig::default(),
            registration: RegConfig::default(),
            lidar: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.odometry_options().validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn odometry_options(&self) -> OdometryOptions {
        let base = OdometryOptions {
            normal: self.normal,
            map: self.map,
            registration: self.registration,
            ..Default::default()
        };
        self.ablation.apply(&base)
    }

    /// The named preset with this config's seed and sensor overrides.
    pub fn preset(&self) -> Result<Preset> {
        let mut p = preset(&self.preset)?.with_seed(self.seed);
        if let Some(lidar) = &self.lidar {
            p.lidar = lidar.clone();
        }
        if let Some(sigma) = self.range_sigma {
            p.noise.range_sigma = sigma;
        }
        p.lidar.validate()?;
        p.noise.validate()?;
        Ok(p)
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> Result<PathBuf> {
        match flag
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
        {
            Some(dir) => Ok(dir),
            None => bail!("no output directory: pass --out or set output_dir in the config"),
        }
    }
}
