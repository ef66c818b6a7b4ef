//! Method variants for the self-ablation study and a runner that scores them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::evaluation::{ate_rmse, thickness_report, Region, ThicknessRecord, TimingReport};
use crate::geometry::Pose;
use crate::normals::RawScan;
use crate::odometry::{run_odometry_from, OdometryOptions, OdometryOutput};
use crate::registry::{Registry, UnknownName};
use crate::trajectory::Trajectory;
use crate::voxelmap::Retention;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

impl fmt::Display for Switch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.is_on() { "on" } else { "off" })
    }
}

impl FromStr for Switch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on" => Ok(Switch::On),
            "off" => Ok(Switch::Off),
            other => Err(format!("expected `on` or `off`, got `{other}`")),
        }
    }
}

/// Feature switches; all on is the full method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub dual_side: Switch,
    pub normal_gate: Switch,
    pub lru: Switch,
    pub adaptive_radius: Switch,
    /// Neighbor radius used when `adaptive_radius` is off.
    pub fixed_radius: f64,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            dual_side: Switch::On,
            normal_gate: Switch::On,
            lru: Switch::On,
            adaptive_radius: Switch::On,
            fixed_radius: 1.0,
        }
    }
}

impl AblationFlags {
    /// Strategy names and retention for these switches on top of `base`.
    pub fn apply(&self, base: &OdometryOptions) -> OdometryOptions {
        let mut o = base.clone();
        o.side_policy = if self.dual_side.is_on() {
            "dual"
        } else {
            "single"
        }
        .into();
        o.gate = if self.normal_gate.is_on() {
            "normal"
        } else {
            "none"
        }
        .into();
        o.retention = if self.lru.is_on() {
            Retention::Lru
        } else {
            Retention::Unbounded
        };
        o.radius_policy = if self.adaptive_radius.is_on() {
            "adaptive"
        } else {
            "fixed"
        }
        .into();
        o.fixed_radius = self.fixed_radius;
        o
    }
}

pub type VariantFactory = fn() -> AblationFlags;

/// The comparison matrix: the full method and one variant per removed component.
pub fn variants() -> Registry<VariantFactory> {
    let mut reg: Registry<VariantFactory> = Registry::new("ablation variant");
    reg.register("full", AblationFlags::default);
    reg.register("no_dual_side", || AblationFlags {
        dual_side: Switch::Off,
        normal_gate: Switch::Off,
        ..Default::default()
    });
    reg.register("fixed_radius", || AblationFlags {
        adaptive_radius: Switch::Off,
        fixed_radius: 1.0,
        ..Default::default()
    });
    reg.register("no_lru", || AblationFlags {
        lru: Switch::Off,
        ..Default::default()
    });
    reg
}

pub fn variant(name: &str) -> Result<AblationFlags, UnknownName> {
    variants().get(name).map(|f| f())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub name: String,
    pub flags: AblationFlags,
    /// Set when the variant could not run; every other field is then empty.
    pub error: Option<String>,
    pub ate_rmse_m: Option<f64>,
    pub failed_frames: Vec<usize>,
    pub unconverged_frames: Vec<usize>,
    pub thickness: Vec<ThicknessRecord>,
    pub peak_blocks: usize,
    pub evictions: usize,
    pub timing: TimingReport,
    pub mean_timing: TimingReport,
}

/// Runs one variant and scores it against whatever ground truth is available.
pub fn run_variant(
    name: &str,
    flags: &AblationFlags,
    base: &OdometryOptions,
    scans: &[RawScan],
    gt: Option<&Trajectory>,
    regions: &[Region],
) -> (VariantOutcome, Option<OdometryOutput>) {
    let mut outcome = VariantOutcome {
        name: name.to_string(),
        flags: *flags,
        error: None,
        ate_rmse_m: None,
        failed_frames: Vec::new(),
        unconverged_frames: Vec::new(),
        thickness: Vec::new(),
        peak_blocks: 0,
        evictions: 0,
        timing: TimingReport::default(),
        mean_timing: TimingReport::default(),
    };
    let initial = gt
        .and_then(|g| g.poses().first().copied())
        .unwrap_or_else(Pose::identity);
    let out = match run_odometry_from(scans, &flags.apply(base), &initial) {
        Ok(out) => out,
        Err(e) => {
            outcome.error = Some(e.to_string());
            return (outcome, None);
        }
    };
    if let Some(gt) = gt {
        match ate_rmse(&out.trajectory, gt) {
            Ok(a) => outcome.ate_rmse_m = Some(a),
            Err(e) => outcome.error = Some(e.to_string()),
        }
    }
    outcome.failed_frames = out.failed_frames();
    outcome.unconverged_frames = out.unconverged_frames();
    outcome.thickness = thickness_report(&out.map.points(), regions);
    outcome.peak_blocks = out.map.peak_len();
    outcome.evictions = out.map.total_evictions();
    outcome.timing = out.timing();
    outcome.mean_timing = out.mean_timing();
    (outcome, Some(out))
}

/// Runs `f` on a dedicated one-thread pool, so stage timings exclude scheduling effects.
pub fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(1).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
