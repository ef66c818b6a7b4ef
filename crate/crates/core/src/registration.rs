//! Scan-to-map registration against the dual-sided voxel map.
//!
//! Each query point searches its voxel and the 26 neighbors, keeping only map
//! points on the surface side it faces. The surviving points are fitted with a
//! plane and contribute a weighted point-to-plane residual to a 6-DoF
//! Gauss-Newton solve.

use std::time::Instant;

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_deg, Pose, Twist, UnitVec3, Vec3};
use crate::normals::{estimate_normal, planarity, NormalCloud};
use crate::registry::{Registry, UnknownName};
use crate::voxelmap::{neighbors_27, voxel_key, NvmVoxelMap, VoxelKey};

/// Smallest admissible ratio between the extreme eigenvalues of the normal matrix.
const MIN_CONDITION_RATIO: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegError {
    #[error("cannot fit a plane: {0}")]
    NoPlane(String),
    #[error("need at least 6 constraints, got {0}")]
    TooFewConstraints(usize),
    #[error("normal system is rank-deficient (eigenvalues {min_eigenvalue:.3e} .. {max_eigenvalue:.3e})")]
    Degenerate {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },
    #[error("invalid registration config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegConfig {
    pub max_iterations: usize,
    /// Stop when the update twist norm drops below this.
    pub convergence_eps: f64,
    pub max_corr_dist: f64,
    pub normal_angle_max_deg: f64,
    pub min_plane_points: usize,
    pub plane_fit_planarity_max: f64,
    /// Grid size used to thin the source cloud before association; 0 keeps every point.
    pub source_voxel_size: f64,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            convergence_eps: 1e-4,
            max_corr_dist: 0.5,
            normal_angle_max_deg: 30.0,
            min_plane_points: 5,
            plane_fit_planarity_max: 0.7,
            source_voxel_size: 0.2,
        }
    }
}

impl RegConfig {
    pub fn validate(&self) -> Result<(), RegError> {
        let bad = |m: &str| Err(RegError::InvalidConfig(m.to_string()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.convergence_eps > 0.0
            && self.max_corr_dist > 0.0
            && self.normal_angle_max_deg > 0.0)
        {
            return bad("thresholds must be positive");
        }
        if self.min_plane_points < 3 {
            return bad("min_plane_points must be at least 3");
        }
        if !(self.plane_fit_planarity_max > 0.0 && self.plane_fit_planarity_max <= 1.0) {
            return bad("plane_fit_planarity_max must lie in (0, 1]");
        }
        if self.source_voxel_size < 0.0 {
            return bad("source_voxel_size must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub normal: UnitVec3,
    pub centroid: Vec3,
    pub planarity: f64,
    pub eigenvalues: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Query point in the world frame under the pose used for association.
    pub source: Vec3,
    pub plane_normal: UnitVec3,
    pub plane_point: Vec3,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RegTimings {
    /// Correspondence search, summed over iterations.
    pub association: f64,
    /// Normal-equation assembly and solve, summed over iterations.
    pub solve: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegResult {
    pub pose: Pose,
    pub iterations: usize,
    pub final_cost: f64,
    pub correspondence_count: usize,
    pub converged: bool,
    /// The solve broke down (too few correspondences or degenerate); `pose` is the initial guess.
    pub failed: bool,
    pub timings: RegTimings,
}

/// Filters which map points may serve as plane support for a query.
pub trait CorrespondenceGate: Send + Sync {
    fn name(&self) -> &str;
    /// Whether a surface side with this principal direction is searched at all.
    fn side_eligible(&self, principal: Option<&UnitVec3>, query: &UnitVec3, max_deg: f64) -> bool;
    fn point_eligible(&self, stored: &UnitVec3, query: &UnitVec3, max_deg: f64) -> bool;
    /// Residual weight for the fitted plane, or `None` to reject it.
    fn weight(&self, plane_normal: &UnitVec3, query: &UnitVec3, max_deg: f64) -> Option<f64>;
}

/// Normal-consistency gating at side, point and plane level.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalGate;

impl CorrespondenceGate for NormalGate {
    fn name(&self) -> &str {
        "normal"
    }

    fn side_eligible(&self, principal: Option<&UnitVec3>, query: &UnitVec3, max_deg: f64) -> bool {
        principal.is_some_and(|p| angle_deg(query, p) < max_deg)
    }

    fn point_eligible(&self, stored: &UnitVec3, query: &UnitVec3, max_deg: f64) -> bool {
        angle_deg(query, stored) < max_deg
    }

    fn weight(&self, plane_normal: &UnitVec3, query: &UnitVec3, max_deg: f64) -> Option<f64> {
        let angle = angle_deg(query, plane_normal);
        (angle < max_deg).then(|| plane_normal.dot(query).clamp(0.0, 1.0))
    }
}

/// Geometry-only association, as in maps that ignore normals.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoGate;

impl CorrespondenceGate for NoGate {
    fn name(&self) -> &str {
        "none"
    }

    fn side_eligible(
        &self,
        _principal: Option<&UnitVec3>,
        _query: &UnitVec3,
        _max_deg: f64,
    ) -> bool {
        true
    }

    fn point_eligible(&self, _stored: &UnitVec3, _query: &UnitVec3, _max_deg: f64) -> bool {
        true
    }

    fn weight(&self, _plane_normal: &UnitVec3, _query: &UnitVec3, _max_deg: f64) -> Option<f64> {
        Some(1.0)
    }
}

pub type GateFactory = fn() -> Box<dyn CorrespondenceGate>;

pub fn correspondence_gates() -> Registry<GateFactory> {
    let mut reg: Registry<GateFactory> = Registry::new("correspondence gate");
    reg.register("normal", || Box::new(NormalGate));
    reg.register("none", || Box::new(NoGate));
    reg
}

pub fn correspondence_gate(name: &str) -> Result<Box<dyn CorrespondenceGate>, UnknownName> {
    correspondence_gates().get(name).map(|f| f())
}

/// Least-squares plane through `points`.
pub fn fit_plane(points: &[Vec3]) -> Result<PlaneFit, RegError> {
    let eig = estimate_normal(points).map_err(|e| RegError::NoPlane(e.to_string()))?;
    if eig.ill_conditioned {
        return Err(RegError::NoPlane(
            "points are collinear or coincident".into(),
        ));
    }
    let planarity = planarity(&eig).map_err(|e| RegError::NoPlane(e.to_string()))?;
    Ok(PlaneFit {
        normal: eig.normal(),
        centroid: eig.centroid,
        planarity,
        eigenvalues: eig.values,
    })
}

/// Searches the 27-voxel neighborhood of `p_world` for a normal-consistent plane.
pub fn find_correspondence(
    map: &NvmVoxelMap,
    p_world: &Vec3,
    n_world: &UnitVec3,
    cfg: &RegConfig,
    gate: &dyn CorrespondenceGate,
) -> Option<Correspondence> {
    let mut buf = Vec::new();
    find_correspondence_with(map, p_world, n_world, cfg, gate, &mut buf)
}

fn find_correspondence_with(
    map: &NvmVoxelMap,
    p_world: &Vec3,
    n_world: &UnitVec3,
    cfg: &RegConfig,
    gate: &dyn CorrespondenceGate,
    candidates: &mut Vec<Vec3>,
) -> Option<Correspondence> {
    candidates.clear();
    let max_deg = cfg.normal_angle_max_deg;
    let r2 = cfg.max_corr_dist * cfg.max_corr_dist;
    let center: VoxelKey = voxel_key(p_world, map.resolution());
    for key in neighbors_27(&center) {
        let Some(block) = map.get(&key) else { continue };
        for (_, side) in block.sides() {
            if !gate.side_eligible(side.principal().as_ref(), n_world, max_deg) {
                continue;
            }
            for (q, m) in side.points().iter().zip(side.normals()) {
                if (q - p_world).norm_squared() <= r2 && gate.point_eligible(m, n_world, max_deg) {
                    candidates.push(*q);
                }
            }
        }
    }
    if candidates.len() < cfg.min_plane_points {
        return None;
    }
    let fit = fit_plane(candidates).ok()?;
    if fit.planarity > cfg.plane_fit_planarity_max {
        return None;
    }
    let normal = if fit.normal.dot(n_world) < 0.0 {
        -fit.normal
    } else {
        fit.normal
    };
    let weight = gate.weight(&normal, n_world, max_deg)?;
    Some(Correspondence {
        source: *p_world,
        plane_normal: normal,
        plane_point: fit.centroid,
        weight,
    })
}

/// Signed distance of the transformed sensor point to the correspondence plane.
pub fn point_to_plane_residual(pose: &Pose, sensor_point: &Vec3, c: &Correspondence) -> f64 {
    c.plane_normal
        .dot(&(pose.transform_point(sensor_point) - c.plane_point))
}

/// Derivative of the residual with respect to the right-multiplied twist
/// `[rotation; translation]`: `[p × Rᵀn, n]`.
pub fn residual_jacobian(
    pose: &Pose,
    sensor_point: &Vec3,
    plane_normal: &UnitVec3,
) -> Vector6<f64> {
    let local_n = pose.rotation.inverse() * plane_normal.into_inner();
    let rot = sensor_point.cross(&local_n);
    Vector6::new(
        rot.x,
        rot.y,
        rot.z,
        plane_normal.x,
        plane_normal.y,
        plane_normal.z,
    )
}

fn weighted_cost(pose: &Pose, items: &[(Vec3, Correspondence)]) -> f64 {
    items
        .iter()
        .map(|(p, c)| c.weight * point_to_plane_residual(pose, p, c).powi(2))
        .sum()
}

fn solve_step(
    pose: &Pose,
    items: &[(Vec3, Correspondence)],
) -> Result<(Pose, f64, Twist), RegError> {
    let active = items.iter().filter(|(_, c)| c.weight > 0.0).count();
    if active < 6 {
        return Err(RegError::TooFewConstraints(active));
    }
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    for (p, c) in items {
        if c.weight <= 0.0 {
            continue;
        }
        let j = residual_jacobian(pose, p, &c.plane_normal);
        let r = point_to_plane_residual(pose, p, c);
        h += c.weight * j * j.transpose();
        g += c.weight * r * j;
    }
    let eig = SymmetricEigen::new(h);
    let max_eigenvalue = eig.eigenvalues.max();
    let min_eigenvalue = eig.eigenvalues.min();
    if !(max_eigenvalue > 0.0) || min_eigenvalue <= MIN_CONDITION_RATIO * max_eigenvalue {
        return Err(RegError::Degenerate {
            min_eigenvalue,
            max_eigenvalue,
        });
    }
    let delta = h
        .cholesky()
        .map(|ch| -ch.solve(&g))
        .ok_or(RegError::Degenerate {
            min_eigenvalue,
            max_eigenvalue,
        })?;
    let twist = Twist::from_array([delta[0], delta[1], delta[2], delta[3], delta[4], delta[5]]);
    let next = pose.retract(&twist);
    Ok((next, weighted_cost(&next, items), twist))
}

/// One weighted Gauss-Newton update; returns the new pose and the cost at it.
pub fn gauss_newton_step(
    pose: &Pose,
    items: &[(Vec3, Correspondence)],
) -> Result<(Pose, f64), RegError> {
    solve_step(pose, items).map(|(p, c, _)| (p, c))
}

/// First valid point of every `size`-cube, in scan order. `size <= 0` keeps all.
pub fn thin_sources(cloud: &NormalCloud, size: f64) -> Vec<(Vec3, UnitVec3)> {
    let valid = cloud.valid().map(|(p, n)| (*p, *n));
    if size <= 0.0 {
        return valid.collect();
    }
    let mut seen = std::collections::HashSet::new();
    valid
        .filter(|(p, _)| seen.insert(voxel_key(p, size)))
        .collect()
}

/// Iterated association + Gauss-Newton from `init`.
pub fn register_scan(
    map: &NvmVoxelMap,
    cloud: &NormalCloud,
    init: &Pose,
    cfg: &RegConfig,
    gate: &dyn CorrespondenceGate,
) -> RegResult {
    let sources = thin_sources(cloud, cfg.source_voxel_size);
    register_sources(map, &sources, init, cfg, gate)
}

pub fn register_sources(
    map: &NvmVoxelMap,
    sources: &[(Vec3, UnitVec3)],
    init: &Pose,
    cfg: &RegConfig,
    gate: &dyn CorrespondenceGate,
) -> RegResult {
    let mut timings = RegTimings::default();
    let mut pose = *init;
    let mut result = RegResult {
        pose: *init,
        iterations: 0,
        final_cost: f64::INFINITY,
        correspondence_count: 0,
        converged: false,
        failed: false,
        timings,
    };
    for iteration in 1..=cfg.max_iterations {
        let started = Instant::now();
        let items: Vec<(Vec3, Correspondence)> = sources
            .par_iter()
            .map_init(Vec::new, |buf, (p, n)| {
                let pw = pose.transform_point(p);
                let nw = pose.rotate_normal(n);
                find_correspondence_with(map, &pw, &nw, cfg, gate, buf).map(|c| (*p, c))
            })
            .flatten()
            .collect();
        timings.association += started.elapsed().as_secs_f64();

        result.iterations = iteration;
        result.correspondence_count = items.len();
        let started = Instant::now();
        let step = solve_step(&pose, &items);
        timings.solve += started.elapsed().as_secs_f64();
        match step {
            Ok((next, cost, twist)) => {
                pose = next;
                result.final_cost = cost;
                if twist.norm() < cfg.convergence_eps {
                    result.converged = true;
                    break;
                }
            }
            Err(_) => {
                result.pose = *init;
                result.failed = true;
                result.timings = timings;
                return result;
            }
        }
    }
    result.pose = pose;
    result.timings = timings;
    result
}
