//! Ray-cast LiDAR simulation over scenes built from oriented boxes.

use nalgebra::{Quaternion, Unit, UnitQuaternion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::Region;
use crate::geometry::{OrientedBox, Pose, UnitVec3, Vec3};
use crate::normals::RawScan;
use crate::registry::{Registry, UnknownName};
use crate::trajectory::Trajectory;

pub type Slab = OrientedBox;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Unknown(#[from] UnknownName),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid lidar model: {0}")]
    InvalidLidar(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub slabs: Vec<Slab>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        match self.slabs.iter().position(|s| !s.is_valid()) {
            Some(i) => Err(SimError::InvalidScene(format!(
                "slab {i} has non-positive or non-finite extents"
            ))),
            None => Ok(()),
        }
    }

    /// Distance from `p` to the nearest slab surface.
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        self.slabs
            .iter()
            .map(|s| s.surface_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn translated(&self, offset: &Vec3) -> SceneSpec {
        SceneSpec {
            slabs: self.slabs.iter().map(|s| s.translated(offset)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub v: [Vec3; 3],
}

impl Triangle {
    pub fn normal(&self) -> Vec3 {
        (self.v[1] - self.v[0]).cross(&(self.v[2] - self.v[0]))
    }
}

/// Triangulated scene. Triangles `12 * i .. 12 * i + 12` belong to slab `i`.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub triangles: Vec<Triangle>,
    bounds: Vec<(Vec3, f64)>,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

// Corner indices (bit 0 = +x, bit 1 = +y, bit 2 = +z), outward winding.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 6, 7, 3],
    [0, 2, 3, 1],
    [4, 5, 7, 6],
];

pub fn build_scene(spec: &SceneSpec) -> Scene {
    let mut scene = Scene::default();
    for slab in &spec.slabs {
        let c = slab.corners();
        for f in FACES {
            scene.triangles.push(Triangle {
                v: [c[f[0]], c[f[1]], c[f[2]]],
            });
            scene.triangles.push(Triangle {
                v: [c[f[0]], c[f[2]], c[f[3]]],
            });
        }
        scene.bounds.push((slab.center(), slab.half().norm()));
    }
    scene
}

fn intersect(tri: &Triangle, origin: &Vec3, dir: &Vec3) -> Option<f64> {
    let e1 = tri.v[1] - tri.v[0];
    let e2 = tri.v[2] - tri.v[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-12 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri.v[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-9).then_some(t)
}

/// Nearest positive hit no farther than `max_range`; the earlier triangle wins ties.
pub fn ray_cast(scene: &Scene, origin: &Vec3, dir: &UnitVec3, max_range: f64) -> Option<f64> {
    let d = dir.as_ref();
    let mut best = f64::INFINITY;
    for (i, (center, radius)) in scene.bounds.iter().enumerate() {
        let v = center - origin;
        let tca = v.dot(d);
        if v.norm_squared() - tca * tca > radius * radius
            || tca + radius < 0.0
            || tca - radius > best.min(max_range)
        {
            continue;
        }
        for tri in &scene.triangles[12 * i..12 * i + 12] {
            if let Some(t) = intersect(tri, origin, d) {
                if t < best {
                    best = t;
                }
            }
        }
    }
    (best <= max_range).then_some(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarModel {
    /// Scan pattern name.
    pub kind: String,
    pub beams: usize,
    pub vertical_fov_deg: f64,
    pub horizontal_step_deg: f64,
    pub points_per_frame: usize,
    pub max_range: f64,
    /// Prism rotation rates of the rosette pattern.
    pub rosette_rates_hz: [f64; 2],
    pub frame_period: f64,
}

impl LidarModel {
    pub fn spinning() -> Self {
        Self {
            kind: "spinning".into(),
            beams: 16,
            vertical_fov_deg: 30.0,
            horizontal_step_deg: 0.4,
            points_per_frame: 16 * 900,
            max_range: 100.0,
            rosette_rates_hz: [121.6, -77.7],
            frame_period: 0.1,
        }
    }

    pub fn solid_state() -> Self {
        Self {
            kind: "solid_state".into(),
            beams: 1,
            vertical_fov_deg: 70.0,
            horizontal_step_deg: 0.0,
            points_per_frame: 24_000,
            max_range: 200.0,
            rosette_rates_hz: [121.6, -77.7],
            frame_period: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidLidar(m.to_string()));
        scan_patterns().get(&self.kind)?;
        if self.beams == 0 || self.points_per_frame == 0 {
            return bad("counts must be positive");
        }
        if !(self.vertical_fov_deg > 0.0 && self.vertical_fov_deg < 180.0) {
            return bad("vertical FOV must lie in (0, 180) degrees");
        }
        if self.kind == "spinning"
            && !(self.horizontal_step_deg > 0.0 && self.horizontal_step_deg <= 360.0)
        {
            return bad("horizontal step must lie in (0, 360] degrees");
        }
        if !(self.max_range > 0.0) || !(self.frame_period > 0.0) {
            return bad("max range and frame period must be positive");
        }
        Ok(())
    }
}

/// Ray directions of one frame in the sensor frame.
pub trait ScanPattern: Send + Sync {
    fn name(&self) -> &'static str;
    fn directions(&self, model: &LidarModel, frame_index: u64) -> Vec<UnitVec3>;
}

/// Rotating multi-beam sensor; the same pattern every frame.
pub struct Spinning;

impl ScanPattern for Spinning {
    fn name(&self) -> &'static str {
        "spinning"
    }

    fn directions(&self, m: &LidarModel, _frame_index: u64) -> Vec<UnitVec3> {
        let half = m.vertical_fov_deg.to_radians() / 2.0;
        let elevations: Vec<f64> = if m.beams == 1 {
            vec![0.0]
        } else {
            (0..m.beams)
                .map(|b| -half + 2.0 * half * b as f64 / (m.beams - 1) as f64)
                .collect()
        };
        let steps = (360.0 / m.horizontal_step_deg).round().max(1.0) as usize;
        let mut out = Vec::with_capacity(steps * elevations.len());
        for a in 0..steps {
            let az = (a as f64 * m.horizontal_step_deg).to_radians();
            for &el in &elevations {
                out.push(Unit::new_unchecked(Vec3::new(
                    el.cos() * az.cos(),
                    el.cos() * az.sin(),
                    el.sin(),
                )));
            }
        }
        out
    }
}

/// Forward-looking double-prism rosette; successive frames continue the curve.
pub struct SolidState;

impl ScanPattern for SolidState {
    fn name(&self) -> &'static str {
        "solid_state"
    }

    fn directions(&self, m: &LidarModel, frame_index: u64) -> Vec<UnitVec3> {
        let a = m.vertical_fov_deg.to_radians() / 4.0;
        let [f1, f2] = m.rosette_rates_hz;
        let n = m.points_per_frame;
        let dt = m.frame_period / n as f64;
        (0..n)
            .map(|i| {
                let t = (frame_index as f64 * n as f64 + i as f64) * dt;
                let (w1, w2) = (
                    std::f64::consts::TAU * f1 * t,
                    std::f64::consts::TAU * f2 * t,
                );
                let u = a * (w1.cos() + w2.cos());
                let v = a * (w1.sin() + w2.sin());
                Unit::new_normalize(Vec3::new(v.cos() * u.cos(), v.cos() * u.sin(), v.sin()))
            })
            .collect()
    }
}

pub type PatternFactory = fn() -> Box<dyn ScanPattern>;

pub fn scan_patterns() -> Registry<PatternFactory> {
    let mut reg: Registry<PatternFactory> = Registry::new("scan pattern");
    reg.register("spinning", || Box::new(Spinning));
    reg.register("solid_state", || Box::new(SolidState));
    reg
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub range_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            range_sigma: 0.008,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.range_sigma >= 0.0 && self.range_sigma.is_finite() {
            Ok(())
        } else {
            Err(SimError::InvalidNoise(
                "range sigma must be finite and non-negative".into(),
            ))
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn frame_seed(master: u64, frame_index: u64) -> u64 {
    splitmix64(master ^ splitmix64(frame_index))
}

/// One ray per pattern direction; hit ranges get Gaussian noise truncated at 3 sigma.
pub fn generate_scan(
    scene: &Scene,
    lidar: &LidarModel,
    pose: &Pose,
    noise: &NoiseModel,
    frame_index: u64,
) -> Result<RawScan, SimError> {
    let pattern = (scan_patterns().get(&lidar.kind)?)();
    let dirs = pattern.directions(lidar, frame_index);
    let hits: Vec<Option<f64>> = dirs
        .par_iter()
        .map(|d| {
            ray_cast(
                scene,
                &pose.translation,
                &(pose.rotation * *d),
                lidar.max_range,
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(noise.seed, frame_index));
    let mut points = Vec::with_capacity(hits.len());
    for (d, hit) in dirs.iter().zip(hits) {
        let Some(t) = hit else { continue };
        let r = if noise.range_sigma > 0.0 {
            let z = loop {
                let z: f64 = StandardNormal.sample(&mut rng);
                if z.abs() <= 3.0 {
                    break z;
                }
            };
            t + noise.range_sigma * z
        } else {
            t
        };
        if r > 0.0 {
            points.push(d.as_ref() * r);
        }
    }
    Ok(RawScan::new(points, pose.timestamp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub time: f64,
    pub translation: [f64; 3],
    /// Quaternion `(x, y, z, w)`.
    pub rotation: [f64; 4],
}

impl Waypoint {
    pub fn new(time: f64, pose: &Pose) -> Self {
        let q = pose.rotation.quaternion();
        Self {
            time,
            translation: pose.translation.into(),
            rotation: [q.i, q.j, q.k, q.w],
        }
    }

    pub fn pose(&self) -> Pose {
        let [x, y, z, w] = self.rotation;
        Pose::new(
            UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)),
            Vec3::from(self.translation),
        )
        .with_timestamp(self.time)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub waypoints: Vec<Waypoint>,
    pub frame_rate_hz: f64,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidTrajectory(m.to_string()));
        if self.waypoints.is_empty() {
            return bad("no waypoints");
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return bad("frame rate must be positive");
        }
        if self.waypoints.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return bad("waypoint times must be strictly increasing");
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        match (self.waypoints.first(), self.waypoints.last()) {
            (Some(a), Some(b)) => b.time - a.time,
            _ => 0.0,
        }
    }

    /// `t0 + k / rate` for every `k` with the time before the last waypoint.
    pub fn frame_times(&self) -> Vec<f64> {
        let t0 = self.waypoints.first().map_or(0.0, |w| w.time);
        let n = ((self.duration() * self.frame_rate_hz) + 1e-9)
            .floor()
            .max(1.0) as usize;
        (0..n).map(|k| t0 + k as f64 / self.frame_rate_hz).collect()
    }

    /// Linear position and spherical-linear rotation between waypoints, clamped at the ends.
    pub fn interpolate(&self, t: f64) -> Pose {
        let w = &self.waypoints;
        let i = w.partition_point(|p| p.time <= t);
        if i == 0 {
            return w[0].pose().with_timestamp(t);
        }
        if i == w.len() {
            return w[w.len() - 1].pose().with_timestamp(t);
        }
        let (a, b) = (w[i - 1].pose(), w[i].pose());
        let s = (t - w[i - 1].time) / (w[i].time - w[i - 1].time);
        let mut qb = b.rotation;
        if a.rotation.coords.dot(&qb.coords) < 0.0 {
            qb = UnitQuaternion::new_unchecked(-qb.into_inner());
        }
        let rotation = a.rotation.try_slerp(&qb, s, 1e-12).unwrap_or(a.rotation);
        Pose::new(rotation, a.translation.lerp(&b.translation, s)).with_timestamp(t)
    }

    pub fn translated(&self, offset: &Vec3) -> TrajectorySpec {
        let mut out = self.clone();
        for w in &mut out.waypoints {
            w.translation = (Vec3::from(w.translation) + offset).into();
        }
        out
    }
}

/// One scan per frame time plus the matching ground truth.
pub fn generate_sequence(
    scene: &Scene,
    lidar: &LidarModel,
    traj: &TrajectorySpec,
    noise: &NoiseModel,
) -> Result<(Vec<RawScan>, Trajectory), SimError> {
    lidar.validate()?;
    traj.validate()?;
    noise.validate()?;
    let poses: Vec<Pose> = traj
        .frame_times()
        .into_iter()
        .map(|t| traj.interpolate(t))
        .collect();
    let scans = poses
        .par_iter()
        .enumerate()
        .map(|(k, pose)| generate_scan(scene, lidar, pose, noise, k as u64))
        .collect::<Result<Vec<_>, _>>()?;
    let gt = Trajectory::new(poses).map_err(|e| SimError::InvalidTrajectory(e.to_string()))?;
    Ok((scans, gt))
}

/// A complete scenario: scene, motion, sensor, noise and the thin-wall regions to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub scene: SceneSpec,
    pub trajectory: TrajectorySpec,
    pub lidar: LidarModel,
    pub noise: NoiseModel,
    pub regions: Vec<Region>,
}

impl Preset {
    pub fn generate(&self) -> Result<(Vec<RawScan>, Trajectory), SimError> {
        self.scene.validate()?;
        generate_sequence(
            &build_scene(&self.scene),
            &self.lidar,
            &self.trajectory,
            &self.noise,
        )
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.noise.seed = seed;
        self
    }

    /// Moves everything so the first waypoint sits at the origin.
    fn anchored(mut self) -> Self {
        let offset = -Vec3::from(self.trajectory.waypoints[0].translation);
        self.scene = self.scene.translated(&offset);
        self.trajectory = self.trajectory.translated(&offset);
        for r in &mut self.regions {
            r.selector = r.selector.translated(&offset);
        }
        self
    }
}

pub type PresetFactory = fn() -> Preset;

pub fn presets() -> Registry<PresetFactory> {
    let mut reg: Registry<PresetFactory> = Registry::new("preset");
    reg.register("wall_15cm", || wall_preset("wall_15cm", 0.15));
    reg.register("wall_13cm", || wall_preset("wall_13cm", 0.13));
    reg.register("wall_11cm", || wall_preset("wall_11cm", 0.11));
    reg.register("wall_10cm", || wall_preset("wall_10cm", 0.10));
    reg.register("wall_9cm", || wall_preset("wall_9cm", 0.09));
    reg.register("wall_7cm", || wall_preset("wall_7cm", 0.07));
    reg.register("wall_5cm", || wall_preset("wall_5cm", 0.05));
    reg.register("wall_3cm", || wall_preset("wall_3cm", 0.03));
    reg.register("room", room_preset);
    reg.register("corridor_loop", corridor_preset);
    reg
}

pub fn preset(name: &str) -> Result<Preset, UnknownName> {
    presets().get(name).map(|f| f())
}

const HEIGHT: f64 = 2.8;
const SENSOR_Z: f64 = 1.2;
/// Forward tilt of the sensor mount so floor and ceiling enter the vertical field of view.
pub const MOUNT_PITCH_DEG: f64 = 30.0;

fn slab(c: [f64; 3], h: [f64; 3]) -> Slab {
    OrientedBox::new(Vec3::from(c), Vec3::from(h), 0.0)
}

/// Floor, ceiling and four 0.2 m walls enclosing `[x0, x1] x [y0, y1] x [0, HEIGHT]`.
fn shell(x0: f64, x1: f64, y0: f64, y1: f64) -> Vec<Slab> {
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let (hx, hy, hz) = ((x1 - x0) / 2.0 + 0.2, (y1 - y0) / 2.0 + 0.2, HEIGHT / 2.0);
    vec![
        slab([cx, cy, -0.1], [hx, hy, 0.1]),
        slab([cx, cy, HEIGHT + 0.1], [hx, hy, 0.1]),
        slab([x0 - 0.1, cy, hz], [0.1, hy, hz]),
        slab([x1 + 0.1, cy, hz], [0.1, hy, hz]),
        slab([cx, y0 - 0.1, hz], [hx - 0.2, 0.1, hz]),
        slab([cx, y1 + 0.1, hz], [hx - 0.2, 0.1, hz]),
    ]
}

/// Waypoints at constant speed through `(x, y, yaw_deg)` stops.
fn path(stops: &[(f64, f64, f64)], speed: f64, frame_rate_hz: f64) -> TrajectorySpec {
    let mut t = 0.0;
    let mut waypoints = Vec::with_capacity(stops.len());
    for (i, &(x, y, yaw)) in stops.iter().enumerate() {
        if i > 0 {
            let (px, py, _) = stops[i - 1];
            t += ((x - px).powi(2) + (y - py).powi(2)).sqrt() / speed;
        }
        let rotation =
            UnitQuaternion::from_euler_angles(0.0, MOUNT_PITCH_DEG.to_radians(), yaw.to_radians());
        waypoints.push(Waypoint::new(
            t,
            &Pose::new(rotation, Vec3::new(x, y, SENSOR_Z)),
        ));
    }
    TrajectorySpec {
        waypoints,
        frame_rate_hz,
    }
}

/// Selector around `wall` spanning `along` of its length and the height band `z`.
fn wall_region(id: &str, wall: &Slab, along: f64, z: (f64, f64)) -> Region {
    let h = wall.half();
    let thin = if h.x <= h.y { 0 } else { 1 };
    let mut half = Vec3::new(along / 2.0, along / 2.0, (z.1 - z.0) / 2.0);
    half[thin] = h[thin] + 0.1;
    let mut center = wall.center();
    center.z = (z.0 + z.1) / 2.0;
    Region {
        id: id.to_string(),
        selector: OrientedBox::new(center, half, wall.yaw),
        truth_thickness: Some(wall.thickness()),
    }
}

/// A free-standing wall in a closed room, circled once so both faces are scanned.
fn wall_preset(name: &str, thickness: f64) -> Preset {
    let wall = slab(
        [0.15, 0.0, HEIGHT / 2.0],
        [thickness / 2.0, 3.0, HEIGHT / 2.0],
    );
    let mut slabs = shell(-4.6, 4.9, -7.6, 7.6);
    slabs.push(wall);
    slabs.extend([
        slab([-3.3, 5.0, 1.4], [0.3, 0.3, 1.4]),
        slab([3.6, -5.4, 1.4], [0.4, 0.25, 1.4]),
        slab([-3.2, -6.2, 0.5], [0.5, 0.4, 0.5]),
        slab([3.5, 5.8, 0.6], [0.6, 0.3, 0.6]),
    ]);
    let trajectory = path(
        &[
            (-1.5, -4.5, 0.0),
            (-1.5, 4.5, 10.0),
            (1.9, 4.5, -8.0),
            (1.9, -4.5, 5.0),
            (-1.5, -4.5, 0.0),
        ],
        1.0,
        10.0,
    );
    Preset {
        name: name.to_string(),
        scene: SceneSpec { slabs },
        trajectory,
        lidar: LidarModel::spinning(),
        noise: NoiseModel::default(),
        regions: vec![wall_region("thin_wall", &wall, 4.4, (0.6, 2.0))],
    }
    .anchored()
}

/// Two rooms joined by an opening at the end of a 10 cm partition.
fn room_preset() -> Preset {
    let partition = slab([0.25, -1.25, HEIGHT / 2.0], [0.05, 2.75, HEIGHT / 2.0]);
    let mut slabs = shell(-5.0, 5.0, -4.0, 4.0);
    slabs.push(partition);
    slabs.extend([
        slab([-4.2, 3.2, 0.45], [0.6, 0.5, 0.45]),
        slab([4.0, -3.0, 0.75], [0.5, 0.7, 0.75]),
        slab([-3.8, -3.4, 1.4], [0.25, 0.25, 1.4]),
        slab([3.2, 3.3, 1.0], [0.8, 0.3, 1.0]),
    ]);
    let trajectory = path(
        &[
            (-2.0, -2.5, 0.0),
            (-2.0, 2.8, 20.0),
            (2.2, 2.8, -15.0),
            (2.2, -2.5, 10.0),
            (3.2, -2.5, 0.0),
        ],
        1.0,
        10.0,
    );
    Preset {
        name: "room".into(),
        scene: SceneSpec { slabs },
        trajectory,
        lidar: LidarModel::spinning(),
        noise: NoiseModel::default(),
        regions: vec![wall_region("partition", &partition, 4.0, (0.6, 2.0))],
    }
    .anchored()
}

/// A slow loop around a long 10 cm divider; the divider hides half the map at any time.
fn corridor_preset() -> Preset {
    let divider = slab([0.0, 0.15, HEIGHT / 2.0], [5.0, 0.05, HEIGHT / 2.0]);
    let mut slabs = shell(-7.0, 7.0, -3.0, 3.0);
    slabs.push(divider);
    slabs.extend([
        slab([-3.0, -2.7, 1.4], [0.3, 0.3, 1.4]),
        slab([1.0, -2.75, 1.4], [0.4, 0.25, 1.4]),
        slab([4.0, 2.7, 1.4], [0.3, 0.3, 1.4]),
        slab([-1.0, 2.75, 1.4], [0.25, 0.25, 1.4]),
        slab([-5.5, -2.5, 0.5], [0.5, 0.5, 0.5]),
        slab([6.0, 2.4, 0.7], [0.4, 0.6, 0.7]),
    ]);
    let stops = [
        (-6.0, -1.5, 0.0),
        (6.0, -1.5, 5.0),
        (6.0, 1.5, 90.0),
        (-6.0, 1.5, 175.0),
        (-6.0, -1.5, 270.0),
    ];
    let trajectory = path(&stops, 30.0 / 52.0, 10.0);
    let mut lidar = LidarModel::spinning();
    lidar.max_range = 10.0;
    Preset {
        name: "corridor_loop".into(),
        scene: SceneSpec { slabs },
        trajectory,
        lidar,
        noise: NoiseModel::default(),
        regions: vec![wall_region("divider", &divider, 8.0, (0.6, 2.0))],
    }
    .anchored()
}
