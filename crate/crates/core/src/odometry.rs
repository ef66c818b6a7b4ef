//! Frame-by-frame scan-to-map odometry: normals, registration, map update.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::TimingReport;
use crate::geometry::Pose;
use crate::normals::{
    compute_normals_with, radius_policy, NormalConfig, NormalError, RadiusPolicy, RawScan,
};
use crate::registration::{
    correspondence_gate, register_scan, CorrespondenceGate, RegConfig, RegError,
};
use crate::registry::UnknownName;
use crate::trajectory::{Trajectory, TrajectoryError};
use crate::voxelmap::{side_policy, MapConfig, MapError, NvmVoxelMap, Retention};

#[derive(Debug, Error)]
pub enum OdometryError {
    #[error("no scans")]
    NoScans,
    #[error(transparent)]
    Unknown(#[from] UnknownName),
    #[error(transparent)]
    Normal(#[from] NormalError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Registration(#[from] RegError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Parameters plus the strategy names selecting each pipeline variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdometryOptions {
    pub normal: NormalConfig,
    pub map: MapConfig,
    pub registration: RegConfig,
    pub radius_policy: String,
    pub fixed_radius: f64,
    pub side_policy: String,
    pub gate: String,
    pub retention: Retention,
}

impl Default for OdometryOptions {
    fn default() -> Self {
        Self {
            normal: NormalConfig::default(),
            map: MapConfig::default(),
            registration: RegConfig::default(),
            radius_policy: "adaptive".into(),
            fixed_radius: 1.0,
            side_policy: "dual".into(),
            gate: "normal".into(),
            retention: Retention::Lru,
        }
    }
}

struct Strategies {
    radius: Box<dyn RadiusPolicy>,
    gate: Box<dyn CorrespondenceGate>,
}

impl OdometryOptions {
    pub fn validate(&self) -> Result<(), OdometryError> {
        self.normal.validate()?;
        self.map.validate()?;
        self.registration.validate()?;
        self.strategies()?;
        side_policy(&self.side_policy)?;
        Ok(())
    }

    fn strategies(&self) -> Result<Strategies, OdometryError> {
        Ok(Strategies {
            radius: radius_policy(&self.radius_policy, &self.normal, self.fixed_radius)?,
            gate: correspondence_gate(&self.gate)?,
        })
    }

    pub fn new_map(&self) -> Result<NvmVoxelMap, OdometryError> {
        Ok(NvmVoxelMap::with_strategies(
            self.map,
            self.retention,
            side_policy(&self.side_policy)?,
        )?)
    }
}

/// Seconds spent per stage on one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    pub process_measurement: f64,
    pub pose_estimate: f64,
    pub optimize: f64,
    pub map_update: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub index: usize,
    pub timestamp: f64,
    pub converged: bool,
    /// Registration broke down and the predicted pose was kept.
    pub failed: bool,
    pub iterations: usize,
    pub correspondences: usize,
    pub valid_normals: usize,
    pub stored_front: usize,
    pub stored_back: usize,
    pub evictions: usize,
    pub map_blocks: usize,
    pub timing: FrameTiming,
}

pub struct OdometryOutput {
    pub trajectory: Trajectory,
    pub map: NvmVoxelMap,
    pub frames: Vec<FrameReport>,
}

impl OdometryOutput {
    /// Frames whose registration broke down.
    pub fn failed_frames(&self) -> Vec<usize> {
        self.frames
            .iter()
            .filter(|f| f.failed)
            .map(|f| f.index)
            .collect()
    }

    /// Frames after the first that stopped at the iteration cap or failed.
    pub fn unconverged_frames(&self) -> Vec<usize> {
        self.frames
            .iter()
            .skip(1)
            .filter(|f| !f.converged)
            .map(|f| f.index)
            .collect()
    }

    pub fn timing(&self) -> TimingReport {
        let mut t = TimingReport::default();
        for f in &self.frames {
            t.process_measurement += f.timing.process_measurement;
            t.pose_estimate += f.timing.pose_estimate;
            t.optimize += f.timing.optimize;
            t.map_update += f.timing.map_update;
        }
        t.total = t.process_measurement + t.pose_estimate + t.map_update;
        t
    }

    pub fn mean_timing(&self) -> TimingReport {
        self.timing().scaled(1.0 / self.frames.len().max(1) as f64)
    }
}

/// Extrapolates the last motion increment; identity before two poses exist.
pub fn predict_pose(history: &[Pose]) -> Pose {
    match history {
        [] => Pose::identity(),
        [last] => *last,
        [.., prev, last] => last.compose(&prev.inverse().compose(last)),
    }
}

pub fn run_odometry(
    scans: &[RawScan],
    opts: &OdometryOptions,
) -> Result<OdometryOutput, OdometryError> {
    run_odometry_from(scans, opts, &Pose::identity())
}

/// Like [`run_odometry`], with the first scan placed at `initial` instead of the identity.
pub fn run_odometry_from(
    scans: &[RawScan],
    opts: &OdometryOptions,
    initial: &Pose,
) -> Result<OdometryOutput, OdometryError> {
    if scans.is_empty() {
        return Err(OdometryError::NoScans);
    }
    opts.validate()?;
    let Strategies { radius, gate } = opts.strategies()?;
    let mut map = opts.new_map()?;
    let mut trajectory = Trajectory::default();
    let mut poses: Vec<Pose> = Vec::with_capacity(scans.len());
    let mut frames = Vec::with_capacity(scans.len());

    for (index, scan) in scans.iter().enumerate() {
        let mut timing = FrameTiming::default();
        let started = Instant::now();
        let cloud = compute_normals_with(scan, &opts.normal, radius.as_ref());
        timing.process_measurement = started.elapsed().as_secs_f64();

        let (pose, converged, failed, iterations, correspondences) = if index == 0 {
            (*initial, true, false, 0, 0)
        } else {
            let predicted = predict_pose(&poses);
            let started = Instant::now();
            let res = register_scan(&map, &cloud, &predicted, &opts.registration, gate.as_ref());
            timing.pose_estimate = started.elapsed().as_secs_f64();
            timing.optimize = res.timings.solve;
            if res.failed {
                log::warn!("frame {index}: registration failed, keeping the predicted pose");
            } else if !res.converged {
                log::debug!(
                    "frame {index}: registration did not converge after {} iterations",
                    res.iterations
                );
            }
            (
                res.pose,
                res.converged,
                res.failed,
                res.iterations,
                res.correspondence_count,
            )
        };
        let pose = pose.with_timestamp(scan.timestamp);

        let started = Instant::now();
        let stats = map.insert_scan(&cloud, &pose);
        timing.map_update = started.elapsed().as_secs_f64();

        trajectory.push(pose)?;
        poses.push(pose);
        frames.push(FrameReport {
            index,
            timestamp: scan.timestamp,
            converged,
            failed,
            iterations,
            correspondences,
            valid_normals: cloud.valid_count(),
            stored_front: stats.front,
            stored_back: stats.back,
            evictions: stats.evictions,
            map_blocks: map.len(),
            timing,
        });
    }
    Ok(OdometryOutput {
        trajectory,
        map,
        frames,
    })
}
