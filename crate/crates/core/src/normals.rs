//! Per-point surface normals for a single scan.
//!
//! Points outside the trusted range band are dropped, the rest are indexed in a
//! KD-tree and each point gets a normal from the covariance of its neighbors
//! within a range-dependent radius. Neighborhoods that are too sparse, too
//! elongated (planarity above the threshold) or rank-deficient are marked
//! invalid and never reach the map or the registration.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{symmetric_eigen_descending, UnitVec3, Vec3};
use crate::kdtree::{KdTree, Neighbor};
use crate::registry::{Registry, UnknownName};

/// λ2 below this fraction of λ1 means the neighborhood spans less than a plane.
const RANK_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalError {
    #[error("need at least 3 points for a covariance estimate, got {0}")]
    TooFewPoints(usize),
    #[error("eigenvalue sum is zero; planarity undefined")]
    ZeroSpread,
    #[error("invalid normal config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalConfig {
    pub d_min: f64,
    pub d_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub ng_thres: usize,
    pub delta_thres: f64,
    pub k_max: usize,
}

impl Default for NormalConfig {
    fn default() -> Self {
        Self {
            d_min: 0.5,
            d_max: 30.0,
            r_min: 0.2,
            r_max: 1.0,
            ng_thres: 5,
            delta_thres: 0.7,
            k_max: 20,
        }
    }
}

impl NormalConfig {
    pub fn validate(&self) -> Result<(), NormalError> {
        let bad = |m: &str| Err(NormalError::InvalidConfig(m.to_string()));
        if !(self.d_min > 0.0 && self.d_min < self.d_max) {
            return bad("require 0 < d_min < d_max");
        }
        if !(self.r_min > 0.0 && self.r_min <= self.r_max) {
            return bad("require 0 < r_min <= r_max");
        }
        if self.ng_thres < 3 {
            return bad("ng_thres must be at least 3");
        }
        if !(self.delta_thres >= 1.0 / 3.0 && self.delta_thres < 1.0) {
            return bad("delta_thres must lie in [1/3, 1)");
        }
        if self.k_max < self.ng_thres {
            return bad("k_max must be at least ng_thres");
        }
        Ok(())
    }
}

/// One sensor sweep in the sensor frame. The sensor sits at the origin.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawScan {
    pub points: Vec<Vec3>,
    pub timestamp: f64,
}

impl RawScan {
    pub fn new(points: Vec<Vec3>, timestamp: f64) -> Self {
        Self { points, timestamp }
    }

    pub fn sensor_origin(&self) -> Vec3 {
        Vec3::zeros()
    }
}

/// Why a point did or did not receive a normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointStatus {
    Valid,
    TooFewNeighbors,
    NonPlanar,
    IllConditioned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPoint {
    pub position: Vec3,
    /// Sensor-facing unit normal, present only for valid points.
    pub normal: Option<UnitVec3>,
    pub range: f64,
    pub status: PointStatus,
}

impl NormalPoint {
    pub fn is_valid(&self) -> bool {
        self.normal.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormalCloud {
    pub points: Vec<NormalPoint>,
    pub timestamp: f64,
}

impl NormalCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn valid(&self) -> impl Iterator<Item = (&Vec3, &UnitVec3)> {
        self.points
            .iter()
            .filter_map(|p| p.normal.as_ref().map(|n| (&p.position, n)))
    }

    pub fn valid_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_valid()).count()
    }

    pub fn count_status(&self, status: PointStatus) -> usize {
        self.points.iter().filter(|p| p.status == status).count()
    }
}

/// Eigen-decomposition of a neighborhood covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenResult {
    /// λ1 ≥ λ2 ≥ λ3 ≥ 0.
    pub values: [f64; 3],
    pub vectors: [UnitVec3; 3],
    pub centroid: Vec3,
    /// The neighborhood spans fewer than two dimensions.
    pub ill_conditioned: bool,
}

impl EigenResult {
    /// Eigenvector of the smallest eigenvalue (sign arbitrary).
    pub fn normal(&self) -> UnitVec3 {
        self.vectors[2]
    }
}

/// Chooses the neighbor search radius for a point at a given range.
pub trait RadiusPolicy: Send + Sync {
    fn name(&self) -> &str;
    fn radius(&self, range: f64) -> f64;
}

/// Radius interpolated between `r_min` and `r_max` across `[d_min, d_max]`.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveRadius(pub NormalConfig);

impl RadiusPolicy for AdaptiveRadius {
    fn name(&self) -> &str {
        "adaptive"
    }

    fn radius(&self, range: f64) -> f64 {
        adaptive_radius(range, &self.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedRadius(pub f64);

impl RadiusPolicy for FixedRadius {
    fn name(&self) -> &str {
        "fixed"
    }

    fn radius(&self, _range: f64) -> f64 {
        self.0
    }
}

pub type RadiusFactory = fn(&NormalConfig, f64) -> Box<dyn RadiusPolicy>;

/// Registered radius policies. The second factory argument is the fixed radius.
pub fn radius_policies() -> Registry<RadiusFactory> {
    let mut reg: Registry<RadiusFactory> = Registry::new("radius policy");
    reg.register("adaptive", |cfg, _| Box::new(AdaptiveRadius(*cfg)));
    reg.register("fixed", |_, r| Box::new(FixedRadius(r)));
    reg
}

pub fn radius_policy(
    name: &str,
    cfg: &NormalConfig,
    fixed_radius: f64,
) -> Result<Box<dyn RadiusPolicy>, UnknownName> {
    radius_policies().get(name).map(|f| f(cfg, fixed_radius))
}

/// Keeps points with `d_min ≤ |p| ≤ d_max` (inclusive at both ends).
pub fn range_filter(scan: &RawScan, cfg: &NormalConfig) -> RawScan {
    let points = scan
        .points
        .iter()
        .copied()
        .filter(|p| {
            let d = p.norm();
            d >= cfg.d_min && d <= cfg.d_max
        })
        .collect();
    RawScan {
        points,
        timestamp: scan.timestamp,
    }
}

pub fn adaptive_radius(d_scan: f64, cfg: &NormalConfig) -> f64 {
    let s = ((d_scan - cfg.d_min) / (cfg.d_max - cfg.d_min)).clamp(0.0, 1.0);
    cfg.r_min + s * (cfg.r_max - cfg.r_min)
}

pub fn build_spatial_index(points: &[Vec3]) -> KdTree {
    KdTree::build(points)
}

/// Population covariance (1/N) of `points` about their centroid, decomposed.
pub fn estimate_normal(points: &[Vec3]) -> Result<EigenResult, NormalError> {
    if points.len() < 3 {
        return Err(NormalError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let (mut values, vectors) = symmetric_eigen_descending(&cov);
    for v in &mut values {
        // Round-off can push a zero eigenvalue slightly negative.
        *v = v.max(0.0);
    }
    let ill_conditioned = values[0] <= 0.0 || values[1] <= RANK_EPS * values[0];
    Ok(EigenResult {
        values,
        vectors,
        centroid,
        ill_conditioned,
    })
}

/// λ1 / (λ1 + λ2 + λ3).
pub fn planarity(eig: &EigenResult) -> Result<f64, NormalError> {
    planarity_of(&eig.values)
}

pub fn planarity_of(values: &[f64; 3]) -> Result<f64, NormalError> {
    let sum: f64 = values.iter().sum();
    if !(sum > 0.0) {
        return Err(NormalError::ZeroSpread);
    }
    Ok(values[0] / sum)
}

/// Flips `n` so that it faces `sensor_origin` from `p`. A normal exactly
/// perpendicular to the view ray is kept as is.
pub fn orient_normal(n: &UnitVec3, p: &Vec3, sensor_origin: &Vec3) -> UnitVec3 {
    if n.dot(&(sensor_origin - p)) >= 0.0 {
        *n
    } else {
        -*n
    }
}

pub fn compute_normals(scan: &RawScan, cfg: &NormalConfig) -> NormalCloud {
    compute_normals_with(scan, cfg, &AdaptiveRadius(*cfg))
}

pub fn compute_normals_with(
    scan: &RawScan,
    cfg: &NormalConfig,
    policy: &dyn RadiusPolicy,
) -> NormalCloud {
    let filtered = range_filter(scan, cfg);
    let tree = build_spatial_index(&filtered.points);
    let origin = scan.sensor_origin();
    let points = filtered
        .points
        .par_iter()
        .map_init(Vec::new, |buf, p| {
            estimate_point(&tree, p, &origin, cfg, policy, buf)
        })
        .collect();
    NormalCloud {
        points,
        timestamp: scan.timestamp,
    }
}

fn estimate_point(
    tree: &KdTree,
    p: &Vec3,
    origin: &Vec3,
    cfg: &NormalConfig,
    policy: &dyn RadiusPolicy,
    buf: &mut Vec<Neighbor>,
) -> NormalPoint {
    let range = (p - origin).norm();
    let mut record = NormalPoint {
        position: *p,
        normal: None,
        range,
        status: PointStatus::TooFewNeighbors,
    };
    tree.nearest_within_into(p, policy.radius(range), cfg.k_max, buf);
    if buf.len() < cfg.ng_thres.max(3) {
        return record;
    }
    let neighbors: Vec<Vec3> = buf.iter().map(|n| *tree.point(n.index)).collect();
    let eig = match estimate_normal(&neighbors) {
        Ok(e) => e,
        Err(_) => return record,
    };
    if eig.ill_conditioned {
        record.status = PointStatus::IllConditioned;
        return record;
    }
    match planarity(&eig) {
        Ok(delta) if delta <= cfg.delta_thres => {
            record.normal = Some(orient_normal(&eig.normal(), p, origin));
            record.status = PointStatus::Valid;
        }
        Ok(_) => record.status = PointStatus::NonPlanar,
        Err(_) => record.status = PointStatus::IllConditioned,
    }
    record
}
