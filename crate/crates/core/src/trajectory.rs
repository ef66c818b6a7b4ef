//! Timestamped pose sequences and the TUM text format
//! (`timestamp tx ty tz qx qy qz qw`, one pose per line).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};
use thiserror::Error;

use crate::geometry::{Pose, Vec3};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("timestamps must be strictly increasing (index {index}: {prev} then {next})")]
    NotIncreasing { index: usize, prev: f64, next: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self, TrajectoryError> {
        for (i, w) in poses.windows(2).enumerate() {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(TrajectoryError::NotIncreasing {
                    index: i + 1,
                    prev: w[0].timestamp,
                    next: w[1].timestamp,
                });
            }
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.poses.iter().map(|p| p.timestamp).collect()
    }

    /// Appends a pose; its timestamp must exceed the last one.
    pub fn push(&mut self, pose: Pose) -> Result<(), TrajectoryError> {
        if let Some(last) = self.poses.last() {
            if !(pose.timestamp > last.timestamp) {
                return Err(TrajectoryError::NotIncreasing {
                    index: self.poses.len(),
                    prev: last.timestamp,
                    next: pose.timestamp,
                });
            }
        }
        self.poses.push(pose);
        Ok(())
    }

    /// Sum of distances between consecutive positions.
    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].translation - w[0].translation).norm())
            .sum()
    }

    /// Applies `t` on the left of every pose.
    pub fn transformed(&self, t: &Pose) -> Trajectory {
        Trajectory {
            poses: self.poses.iter().map(|p| t.compose(p)).collect(),
        }
    }

    pub fn to_tum(&self) -> String {
        let mut out = String::new();
        for p in &self.poses {
            let q = p.rotation.quaternion();
            let t = p.translation;
            writeln!(
                out,
                "{:.6} {:.9} {:.9} {:.9} {:.12} {:.12} {:.12} {:.12}",
                p.timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn from_tum(text: &str) -> Result<Self, TrajectoryError> {
        let mut poses = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| TrajectoryError::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            if vals.len() != 8 {
                return Err(TrajectoryError::Parse {
                    line: i + 1,
                    msg: format!("expected 8 fields, found {}", vals.len()),
                });
            }
            let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
            if !(q.norm() > 0.0) {
                return Err(TrajectoryError::Parse {
                    line: i + 1,
                    msg: "zero quaternion".into(),
                });
            }
            poses.push(Pose {
                rotation: UnitQuaternion::new_normalize(q),
                translation: Vec3::new(vals[1], vals[2], vals[3]),
                timestamp: vals[0],
            });
        }
        Trajectory::new(poses)
    }

    pub fn write_tum(&self, path: &Path) -> Result<(), TrajectoryError> {
        std::fs::write(path, self.to_tum())?;
        Ok(())
    }

    pub fn read_tum(path: &Path) -> Result<Self, TrajectoryError> {
        Self::from_tum(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_increasing_timestamps() {
        let a = Pose::identity().with_timestamp(1.0);
        let b = Pose::identity().with_timestamp(1.0);
        assert!(Trajectory::new(vec![a, b]).is_err());
        let mut t = Trajectory::default();
        t.push(a).unwrap();
        assert!(t.push(b).is_err());
    }

    #[test]
    fn tum_round_trip_is_stable() {
        let poses: Vec<Pose> = (0..5)
            .map(|i| {
                Pose::from_yaw(0.1 * i as f64, Vec3::new(i as f64, -0.5, 0.25))
                    .with_timestamp(0.1 * i as f64)
            })
            .collect();
        let traj = Trajectory::new(poses).unwrap();
        let text = traj.to_tum();
        let back = Trajectory::from_tum(&text).unwrap();
        assert_eq!(back.to_tum(), text);
        for (a, b) in traj.poses().iter().zip(back.poses()) {
            assert!(a.translation_distance_to(b) < 1e-8);
            assert!(a.rotation_angle_to(b) < 1e-10);
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Trajectory::from_tum("# header\n0 1 2 3\n").unwrap_err();
        assert!(matches!(err, TrajectoryError::Parse { line: 2, .. }));
        let err = Trajectory::from_tum("0 a 0 0 0 0 0 1\n").unwrap_err();
        assert!(matches!(err, TrajectoryError::Parse { line: 1, .. }));
    }
}
