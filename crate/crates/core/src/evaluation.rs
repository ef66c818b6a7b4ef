//! Trajectory error, wall-thickness recovery and stage-timing reports.

use std::collections::{BTreeMap, HashSet};

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{OrientedBox, Pose, Vec3};
use crate::registration::{fit_plane, RegError};
use crate::trajectory::Trajectory;
use crate::voxelmap::{neighbors_27, MapPoint, Side, VoxelKey};

pub const DEFAULT_MAX_DT: f64 = 0.05;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no poses could be associated within {max_dt} s")]
    NoMatches { max_dt: f64 },
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("alignment is degenerate: {0}")]
    Degenerate(String),
    #[error("region `{region}` is not double-sided ({front} front / {back} back points)")]
    NotDoubleSided {
        region: String,
        front: usize,
        back: usize,
    },
    #[error("plane fit failed: {0}")]
    PlaneFit(#[from] RegError),
}

/// Named oriented-box selector around a double-sided structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub id: String,
    pub selector: OrientedBox,
    #[serde(default)]
    pub truth_thickness: Option<f64>,
}

/// Greedy nearest-timestamp matching in estimate order; each ground-truth pose is used once.
pub fn associate_poses(
    est: &Trajectory,
    gt: &Trajectory,
    max_dt: f64,
) -> Result<Vec<(usize, usize)>, EvalError> {
    if est.is_empty() || gt.is_empty() {
        return Err(EvalError::EmptyTrajectory);
    }
    let times = gt.timestamps();
    let mut used = vec![false; times.len()];
    let mut pairs = Vec::new();
    for (i, p) in est.poses().iter().enumerate() {
        let t = p.timestamp;
        let k = times.partition_point(|&g| g < t);
        let best = [k.checked_sub(1), (k < times.len()).then_some(k)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| {
                (times[a] - t)
                    .abs()
                    .total_cmp(&(times[b] - t).abs())
                    .then(a.cmp(&b))
            });
        if let Some(j) = best {
            if (times[j] - t).abs() <= max_dt && !used[j] {
                used[j] = true;
                pairs.push((i, j));
            }
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::NoMatches { max_dt });
    }
    Ok(pairs)
}

/// Rigid transform `T` minimizing `sum |T * est_i - gt_i|^2` (no scale).
pub fn umeyama_align(est: &[Vec3], gt: &[Vec3]) -> Result<Pose, EvalError> {
    if est.len() != gt.len() {
        return Err(EvalError::Degenerate(format!(
            "{} vs {} points",
            est.len(),
            gt.len()
        )));
    }
    if est.len() < 3 {
        return Err(EvalError::Degenerate(format!(
            "{} pairs, need 3",
            est.len()
        )));
    }
    let n = est.len() as f64;
    let mu_e = est.iter().sum::<Vec3>() / n;
    let mu_g = gt.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (e, g) in est.iter().zip(gt) {
        cov += (g - mu_g) * (e - mu_e).transpose();
        spread += (e - mu_e) * (e - mu_e).transpose();
    }
    let sv = spread.symmetric_eigenvalues();
    let (lo, hi) = (
        sv.iter().cloned().fold(f64::INFINITY, f64::min),
        sv.iter().cloned().fold(0.0, f64::max),
    );
    let second = sv.sum() - lo - hi;
    if !(hi > 0.0) || second <= 1e-12 * hi {
        return Err(EvalError::Degenerate(
            "points are collinear or coincident".into(),
        ));
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut s = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    Ok(Pose::new(rotation, mu_g - r * mu_e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteResult {
    pub rmse: f64,
    pub matched: usize,
    pub alignment: Pose,
}

pub fn ate(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<AteResult, EvalError> {
    let pairs = associate_poses(est, gt, max_dt)?;
    let e: Vec<Vec3> = pairs
        .iter()
        .map(|&(i, _)| est.poses()[i].translation)
        .collect();
    let g: Vec<Vec3> = pairs
        .iter()
        .map(|&(_, j)| gt.poses()[j].translation)
        .collect();
    let alignment = umeyama_align(&e, &g)?;
    let sum: f64 = e
        .iter()
        .zip(&g)
        .map(|(a, b)| (alignment.transform_point(a) - b).norm_squared())
        .sum();
    Ok(AteResult {
        rmse: (sum / e.len() as f64).sqrt(),
        matched: e.len(),
        alignment,
    })
}

pub fn ate_rmse(est: &Trajectory, gt: &Trajectory) -> Result<f64, EvalError> {
    ate(est, gt, DEFAULT_MAX_DT).map(|r| r.rmse)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSplit {
    pub front: Vec<Vec3>,
    pub back: Vec<Vec3>,
    /// Point counts of the voxel-connected clusters inside the selector, largest first.
    pub clusters: Vec<usize>,
    pub warning: Option<String>,
}

/// Voxel-connected components (26-neighborhood) of the given keys, as point counts.
pub fn cluster_sizes(keys: &[VoxelKey]) -> Vec<usize> {
    let mut counts: BTreeMap<VoxelKey, usize> = BTreeMap::new();
    for k in keys {
        *counts.entry(*k).or_default() += 1;
    }
    let mut seen = HashSet::new();
    let mut sizes = Vec::new();
    for &start in counts.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut stack = vec![start];
        let mut size = 0;
        while let Some(k) = stack.pop() {
            size += counts[&k];
            for n in neighbors_27(&k) {
                if counts.contains_key(&n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Map points inside `region`, split by side label.
pub fn extract_double_sided_region(
    points: &[MapPoint],
    region: &Region,
) -> Result<RegionSplit, EvalError> {
    let inside: Vec<&MapPoint> = points
        .iter()
        .filter(|m| region.selector.contains(&m.position))
        .collect();
    let pick = |side| {
        inside
            .iter()
            .filter(|m| m.side == side)
            .map(|m| m.position)
            .collect::<Vec<_>>()
    };
    let (front, back) = (pick(Side::Front), pick(Side::Back));
    if front.is_empty() || back.is_empty() {
        return Err(EvalError::NotDoubleSided {
            region: region.id.clone(),
            front: front.len(),
            back: back.len(),
        });
    }
    let clusters = cluster_sizes(&inside.iter().map(|m| m.key).collect::<Vec<_>>());
    let warning = (clusters.len() > 1).then(|| {
        format!(
            "region `{}` spans {} disconnected clusters (points per cluster: {:?})",
            region.id,
            clusters.len(),
            clusters
        )
    });
    Ok(RegionSplit {
        front,
        back,
        clusters,
        warning,
    })
}

/// Mean unsigned distance of `back` to the plane fitted on `front`.
pub fn wall_thickness(front: &[Vec3], back: &[Vec3]) -> Result<f64, EvalError> {
    if back.is_empty() {
        return Err(EvalError::Degenerate("no back points".into()));
    }
    let plane = fit_plane(front)?;
    let n = plane.normal.into_inner();
    Ok(back
        .iter()
        .map(|b| n.dot(&(b - plane.centroid)).abs())
        .sum::<f64>()
        / back.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessRecord {
    pub region_id: String,
    pub truth_m: Option<f64>,
    pub measured_m: Option<f64>,
    pub percent_change: Option<f64>,
    pub front_points: usize,
    pub back_points: usize,
    pub clusters: Vec<usize>,
    /// Set when the region could not be measured.
    pub error: Option<String>,
    pub warning: Option<String>,
}

pub fn percent_change(measured: f64, truth: f64) -> f64 {
    (measured - truth) / truth * 100.0
}

/// Measures every region; unmeasurable regions are recorded, not fatal.
pub fn thickness_report(points: &[MapPoint], regions: &[Region]) -> Vec<ThicknessRecord> {
    regions
        .iter()
        .map(|r| {
            let mut rec = ThicknessRecord {
                region_id: r.id.clone(),
                truth_m: r.truth_thickness,
                measured_m: None,
                percent_change: None,
                front_points: 0,
                back_points: 0,
                clusters: Vec::new(),
                error: None,
                warning: None,
            };
            match extract_double_sided_region(points, r) {
                Ok(split) => {
                    rec.front_points = split.front.len();
                    rec.back_points = split.back.len();
                    rec.clusters = split.clusters;
                    rec.warning = split.warning;
                    match wall_thickness(&split.front, &split.back) {
                        Ok(t) => {
                            rec.measured_m = Some(t);
                            rec.percent_change =
                                r.truth_thickness.map(|truth| percent_change(t, truth));
                        }
                        Err(e) => rec.error = Some(e.to_string()),
                    }
                }
                Err(e) => {
                    if let EvalError::NotDoubleSided { front, back, .. } = e {
                        rec.front_points = front;
                        rec.back_points = back;
                    }
                    rec.error = Some(e.to_string());
                }
            }
            rec
        })
        .collect()
}

/// Per-stage wall-clock totals in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub map_update: f64,
    pub optimize: f64,
    pub pose_estimate: f64,
    pub process_measurement: f64,
    pub total: f64,
}

impl TimingReport {
    pub fn stages(&self) -> [(&'static str, f64); 5] {
        [
            ("map_update", self.map_update),
            ("optimize", self.optimize),
            ("pose_estimate", self.pose_estimate),
            ("process_measurement", self.process_measurement),
            ("total", self.total),
        ]
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            map_update: f(self.map_update, other.map_update),
            optimize: f(self.optimize, other.optimize),
            pose_estimate: f(self.pose_estimate, other.pose_estimate),
            process_measurement: f(self.process_measurement, other.process_measurement),
            total: f(self.total, other.total),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.zip(self, |a, _| a * k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingComparison {
    pub with_label: String,
    pub without_label: String,
    pub with: TimingReport,
    pub without: TimingReport,
    /// `(without - with) / without * 100` per stage; positive means `with` is faster.
    pub percent_change: TimingReport,
}

pub fn timing_report(
    with: &TimingReport,
    without: &TimingReport,
    with_label: &str,
    without_label: &str,
) -> TimingComparison {
    TimingComparison {
        with_label: with_label.to_string(),
        without_label: without_label.to_string(),
        with: *with,
        without: *without,
        percent_change: with.zip(
            without,
            |w, wo| if wo > 0.0 { (wo - w) / wo * 100.0 } else { 0.0 },
        ),
    }
}

/// Metrics file contents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ate_rmse_m: Option<f64>,
    pub per_region_thickness: Vec<ThicknessRecord>,
    pub timing: Option<TimingReport>,
}
