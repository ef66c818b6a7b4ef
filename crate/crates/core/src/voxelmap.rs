//! Dual-sided, normal-aware voxel map with LRU block retention.
//!
//! Each voxel block stores up to two surface populations. The first points to
//! arrive form the front side; a later point whose normal disagrees with the
//! front's principal normal direction by at least `theta_th` goes to the back
//! side. Blocks live in a slab indexed by a spatial hash and are threaded on an
//! intrusive recency list; when the block count would exceed `capacity` the
//! least recently touched block is dropped.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hash, Hasher};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_deg, is_finite_vec, symmetric_eigen_descending, Pose, UnitVec3, Vec3};
use crate::normals::NormalCloud;
use crate::registry::{Registry, UnknownName};

const NIL: usize = usize::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("point or normal is not finite")]
    NonFinite,
    #[error("cannot evict from an empty map")]
    Empty,
    #[error("voxel {0:?} is not in the map")]
    UnknownKey(VoxelKey),
    #[error("surface side holds no normals")]
    EmptySide,
    #[error("recency tracking is disabled for this map")]
    LruDisabled,
    #[error("invalid map config: {0}")]
    InvalidConfig(String),
}

/// Integer grid coordinate of a voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelKey {
    pub ix: i64,
    pub iy: i64,
    pub iz: i64,
}

impl VoxelKey {
    pub const fn new(ix: i64, iy: i64, iz: i64) -> Self {
        Self { ix, iy, iz }
    }

    /// Classic three-prime XOR spatial hash.
    pub fn spatial_hash(&self) -> u64 {
        (self.ix.wrapping_mul(73_856_093)
            ^ self.iy.wrapping_mul(19_349_663)
            ^ self.iz.wrapping_mul(83_492_791)) as u64
    }
}

impl Hash for VoxelKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.spatial_hash());
    }
}

/// Finalizes the spatial hash so that the table's high bits are well mixed.
#[derive(Default)]
pub struct SpatialHasher(u64);

impl Hasher for SpatialHasher {
    fn finish(&self) -> u64 {
        let h = self.0 ^ (self.0 >> 29);
        h.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 = self.0.rotate_left(8) ^ u64::from(*b);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 ^= v;
    }
}

type SpatialBuildHasher = BuildHasherDefault<SpatialHasher>;

/// `floor(p / resolution)` per component.
pub fn voxel_key(p: &Vec3, resolution: f64) -> VoxelKey {
    VoxelKey::new(
        (p.x / resolution).floor() as i64,
        (p.y / resolution).floor() as i64,
        (p.z / resolution).floor() as i64,
    )
}

/// The key and its 26 neighbors, ordered lexicographically by `(dz, dy, dx)`.
pub fn neighbors_27(key: &VoxelKey) -> [VoxelKey; 27] {
    let mut out = [*key; 27];
    let mut i = 0;
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                out[i] = VoxelKey::new(key.ix + dx, key.iy + dy, key.iz + dz);
                i += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Front,
    Back,
}

impl Side {
    /// Label used in exported maps: 0 = front, 1 = back.
    pub fn label(self) -> u8 {
        match self {
            Side::Front => 0,
            Side::Back => 1,
        }
    }

    pub fn from_label(label: u8) -> Option<Side> {
        match label {
            0 => Some(Side::Front),
            1 => Some(Side::Back),
            _ => None,
        }
    }
}

/// One normal-consistent surface population inside a voxel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfaceSide {
    points: Vec<Vec3>,
    normals: Vec<UnitVec3>,
    principal: Option<UnitVec3>,
    dirty: bool,
}

impl SurfaceSide {
    pub fn from_parts(points: Vec<Vec3>, normals: Vec<UnitVec3>) -> Self {
        assert_eq!(points.len(), normals.len());
        Self {
            points,
            normals,
            principal: None,
            dirty: true,
        }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> &[UnitVec3] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    fn push(&mut self, p: Vec3, n: UnitVec3) {
        self.points.push(p);
        self.normals.push(n);
        self.dirty = true;
    }

    /// Cached principal direction, refreshing the cache if stale.
    pub fn principal_direction(&mut self) -> Result<UnitVec3, MapError> {
        if !self.dirty {
            if let Some(p) = self.principal {
                return Ok(p);
            }
        }
        let p = self.compute_principal()?;
        self.principal = Some(p);
        self.dirty = false;
        Ok(p)
    }

    /// Principal direction without touching the cache.
    pub fn principal(&self) -> Option<UnitVec3> {
        match (self.dirty, self.principal) {
            (false, Some(p)) => Some(p),
            _ => self.compute_principal().ok(),
        }
    }

    /// Dominant axis of the normals' second-moment matrix, signed toward their mean.
    pub fn compute_principal(&self) -> Result<UnitVec3, MapError> {
        if self.normals.is_empty() {
            return Err(MapError::EmptySide);
        }
        let mut moment = Matrix3::zeros();
        let mut mean = Vec3::zeros();
        for n in &self.normals {
            moment += n.into_inner() * n.transpose();
            mean += n.into_inner();
        }
        let (_, vectors) = symmetric_eigen_descending(&moment);
        let axis = vectors[0];
        Ok(if axis.dot(&mean) < 0.0 { -axis } else { axis })
    }
}

pub fn principal_direction(side: &mut SurfaceSide) -> Result<UnitVec3, MapError> {
    side.principal_direction()
}

/// `angle(n, principal) < theta_th`.
pub fn view_consistent(n: &UnitVec3, principal: &UnitVec3, theta_th_deg: f64) -> bool {
    angle_deg(n, principal) < theta_th_deg
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VoxelBlock {
    pub front: SurfaceSide,
    pub back: Option<SurfaceSide>,
}

impl VoxelBlock {
    pub fn side(&self, side: Side) -> Option<&SurfaceSide> {
        match side {
            Side::Front => Some(&self.front),
            Side::Back => self.back.as_ref(),
        }
    }

    pub fn sides(&self) -> impl Iterator<Item = (Side, &SurfaceSide)> {
        std::iter::once((Side::Front, &self.front)).chain(self.back.iter().map(|b| (Side::Back, b)))
    }

    fn refresh(&mut self) {
        if self.front.dirty {
            let _ = self.front.principal_direction();
        }
        if let Some(back) = self.back.as_mut() {
            if back.dirty {
                let _ = back.principal_direction();
            }
        }
    }
}

/// Decides which side of an existing block receives an incoming point.
pub trait SidePolicy: Send + Sync {
    fn name(&self) -> &str;
    fn choose(&self, block: &mut VoxelBlock, normal: &UnitVec3, theta_th_deg: f64) -> Side;
}

/// View-consistency test against the front's principal direction.
#[derive(Debug, Clone, Copy, Default)]
pub struct DualSide;

impl SidePolicy for DualSide {
    fn name(&self) -> &str {
        "dual"
    }

    fn choose(&self, block: &mut VoxelBlock, normal: &UnitVec3, theta_th_deg: f64) -> Side {
        match block.front.principal_direction() {
            Ok(principal) if view_consistent(normal, &principal, theta_th_deg) => Side::Front,
            Ok(_) => Side::Back,
            Err(_) => Side::Front,
        }
    }
}

/// Conventional single-surface voxels: everything goes to the front.
#[derive(Debug, Clone, Copy, Default)]
pub struct SingleSide;

impl SidePolicy for SingleSide {
    fn name(&self) -> &str {
        "single"
    }

    fn choose(&self, _block: &mut VoxelBlock, _normal: &UnitVec3, _theta_th_deg: f64) -> Side {
        Side::Front
    }
}

pub type SidePolicyFactory = fn() -> Box<dyn SidePolicy>;

pub fn side_policies() -> Registry<SidePolicyFactory> {
    let mut reg: Registry<SidePolicyFactory> = Registry::new("side policy");
    reg.register("dual", || Box::new(DualSide));
    reg.register("single", || Box::new(SingleSide));
    reg
}

pub fn side_policy(name: &str) -> Result<Box<dyn SidePolicy>, UnknownName> {
    side_policies().get(name).map(|f| f())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub resolution: f64,
    pub theta_th_deg: f64,
    pub max_points_per_side: usize,
    /// Maximum block count when recency tracking is enabled.
    pub capacity: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            resolution: 0.3,
            theta_th_deg: 90.0,
            max_points_per_side: 30,
            capacity: 200_000,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<(), MapError> {
        let bad = |m: &str| Err(MapError::InvalidConfig(m.to_string()));
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return bad("resolution must be positive");
        }
        if !(80.0..=100.0).contains(&self.theta_th_deg) {
            return bad("theta_th_deg must lie in [80, 100]");
        }
        if self.max_points_per_side == 0 {
            return bad("max_points_per_side must be positive");
        }
        if self.capacity == 0 {
            return bad("capacity must be positive");
        }
        Ok(())
    }
}

/// Block retention strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    /// Recency list with eviction beyond `capacity`.
    Lru,
    /// No recency bookkeeping and no bound on block count.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InsertOutcome {
    pub side: Side,
    /// False when the target side was saturated and the point was dropped.
    pub stored: bool,
    pub evicted: Option<VoxelKey>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertStats {
    pub front: usize,
    pub back: usize,
    pub dropped: usize,
    pub evictions: usize,
}

/// One stored point, as exported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPoint {
    pub position: Vec3,
    pub normal: UnitVec3,
    pub side: Side,
    pub key: VoxelKey,
}

#[derive(Debug, Clone)]
struct Slot {
    key: VoxelKey,
    block: VoxelBlock,
    prev: usize,
    next: usize,
}

pub struct NvmVoxelMap {
    cfg: MapConfig,
    retention: Retention,
    side_policy: Box<dyn SidePolicy>,
    index: HashMap<VoxelKey, usize, SpatialBuildHasher>,
    slots: Vec<Slot>,
    free: Vec<usize>,
    /// Most recently touched.
    head: usize,
    /// Least recently touched.
    tail: usize,
    peak_len: usize,
    evictions: usize,
}

impl std::fmt::Debug for NvmVoxelMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NvmVoxelMap")
            .field("cfg", &self.cfg)
            .field("retention", &self.retention)
            .field("side_policy", &self.side_policy.name())
            .field("len", &self.len())
            .finish()
    }
}

impl NvmVoxelMap {
    /// Dual-sided map with LRU retention.
    pub fn new(cfg: MapConfig) -> Result<Self, MapError> {
        Self::with_strategies(cfg, Retention::Lru, Box::new(DualSide))
    }

    pub fn with_strategies(
        cfg: MapConfig,
        retention: Retention,
        side_policy: Box<dyn SidePolicy>,
    ) -> Result<Self, MapError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            retention,
            side_policy,
            index: HashMap::default(),
            slots: Vec::new(),
            free: Vec::new(),
            head: NIL,
            tail: NIL,
            peak_len: 0,
            evictions: 0,
        })
    }

    pub fn config(&self) -> &MapConfig {
        &self.cfg
    }

    pub fn retention(&self) -> Retention {
        self.retention
    }

    pub fn side_policy_name(&self) -> &str {
        self.side_policy.name()
    }

    pub fn resolution(&self) -> f64 {
        self.cfg.resolution
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Largest block count observed after any operation.
    pub fn peak_len(&self) -> usize {
        self.peak_len
    }

    pub fn total_evictions(&self) -> usize {
        self.evictions
    }

    pub fn key_of(&self, p: &Vec3) -> VoxelKey {
        voxel_key(p, self.cfg.resolution)
    }

    pub fn get(&self, key: &VoxelKey) -> Option<&VoxelBlock> {
        self.index.get(key).map(|&i| &self.slots[i].block)
    }

    pub fn get_mut(&mut self, key: &VoxelKey) -> Option<&mut VoxelBlock> {
        self.index.get(key).map(|&i| &mut self.slots[i].block)
    }

    pub fn contains(&self, key: &VoxelKey) -> bool {
        self.index.contains_key(key)
    }

    /// Keys ordered from most to least recently touched. Empty when recency
    /// tracking is disabled.
    pub fn lru_order(&self) -> Vec<VoxelKey> {
        let mut out = Vec::with_capacity(self.len());
        let mut cur = self.head;
        while cur != NIL {
            out.push(self.slots[cur].key);
            cur = self.slots[cur].next;
        }
        out
    }

    /// All keys in ascending order.
    pub fn sorted_keys(&self) -> Vec<VoxelKey> {
        let mut keys: Vec<VoxelKey> = self.index.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    fn unlink(&mut self, i: usize) {
        let (prev, next) = (self.slots[i].prev, self.slots[i].next);
        if prev != NIL {
            self.slots[prev].next = next;
        } else {
            self.head = next;
        }
        if next != NIL {
            self.slots[next].prev = prev;
        } else {
            self.tail = prev;
        }
        self.slots[i].prev = NIL;
        self.slots[i].next = NIL;
    }

    fn push_front(&mut self, i: usize) {
        self.slots[i].prev = NIL;
        self.slots[i].next = self.head;
        if self.head != NIL {
            self.slots[self.head].prev = i;
        }
        self.head = i;
        if self.tail == NIL {
            self.tail = i;
        }
    }

    fn touch_slot(&mut self, i: usize) {
        if self.retention == Retention::Lru && self.head != i {
            self.unlink(i);
            self.push_front(i);
        }
    }

    /// Marks `key` as most recently used.
    pub fn lru_touch(&mut self, key: &VoxelKey) -> Result<(), MapError> {
        let i = *self.index.get(key).ok_or(MapError::UnknownKey(*key))?;
        self.touch_slot(i);
        Ok(())
    }

    /// Removes the least recently touched block.
    pub fn lru_evict(&mut self) -> Result<VoxelKey, MapError> {
        if self.retention != Retention::Lru {
            return Err(MapError::LruDisabled);
        }
        if self.tail == NIL {
            return Err(MapError::Empty);
        }
        let i = self.tail;
        self.unlink(i);
        let key = self.slots[i].key;
        self.index.remove(&key);
        self.slots[i].block = VoxelBlock::default();
        self.free.push(i);
        self.evictions += 1;
        Ok(key)
    }

    fn allocate(&mut self, key: VoxelKey, block: VoxelBlock) -> usize {
        let slot = Slot {
            key,
            block,
            prev: NIL,
            next: NIL,
        };
        let i = match self.free.pop() {
            Some(i) => {
                self.slots[i] = slot;
                i
            }
            None => {
                self.slots.push(slot);
                self.slots.len() - 1
            }
        };
        self.index.insert(key, i);
        if self.retention == Retention::Lru {
            self.push_front(i);
        }
        i
    }

    /// Inserts one world-frame point with its world-frame normal.
    pub fn insert_point(&mut self, p: &Vec3, n: &UnitVec3) -> Result<InsertOutcome, MapError> {
        if !is_finite_vec(p) || !is_finite_vec(n) {
            return Err(MapError::NonFinite);
        }
        let key = self.key_of(p);
        let theta = self.cfg.theta_th_deg;
        let cap = self.cfg.max_points_per_side;
        let outcome = match self.index.get(&key).copied() {
            None => {
                let mut evicted = None;
                if self.retention == Retention::Lru && self.len() >= self.cfg.capacity {
                    evicted = Some(self.lru_evict()?);
                }
                let mut block = VoxelBlock::default();
                block.front.push(*p, *n);
                self.allocate(key, block);
                InsertOutcome {
                    side: Side::Front,
                    stored: true,
                    evicted,
                }
            }
            Some(i) => {
                let block = &mut self.slots[i].block;
                let side = self.side_policy.choose(block, n, theta);
                let target = match side {
                    Side::Front => &mut block.front,
                    Side::Back => block.back.get_or_insert_with(SurfaceSide::default),
                };
                let stored = target.len() < cap;
                if stored {
                    target.push(*p, *n);
                }
                self.touch_slot(i);
                InsertOutcome {
                    side,
                    stored,
                    evicted: None,
                }
            }
        };
        self.peak_len = self.peak_len.max(self.len());
        Ok(outcome)
    }

    /// Transforms every valid point of `cloud` by `pose` and inserts it, then
    /// refreshes the principal-direction caches of the blocks it touched.
    pub fn insert_scan(&mut self, cloud: &NormalCloud, pose: &Pose) -> InsertStats {
        let mut stats = InsertStats::default();
        let mut touched = Vec::new();
        for (p, n) in cloud.valid() {
            let pw = pose.transform_point(p);
            let nw = pose.rotate_normal(n);
            match self.insert_point(&pw, &nw) {
                Ok(out) => {
                    if out.evicted.is_some() {
                        stats.evictions += 1;
                    }
                    match (out.stored, out.side) {
                        (false, _) => stats.dropped += 1,
                        (true, Side::Front) => stats.front += 1,
                        (true, Side::Back) => stats.back += 1,
                    }
                    touched.push(self.key_of(&pw));
                }
                Err(_) => stats.dropped += 1,
            }
        }
        touched.sort_unstable();
        touched.dedup();
        for key in touched {
            if let Some(&i) = self.index.get(&key) {
                self.slots[i].block.refresh();
            }
        }
        stats
    }

    /// Every stored point, ordered by key, front before back.
    pub fn points(&self) -> Vec<MapPoint> {
        let mut out = Vec::new();
        for key in self.sorted_keys() {
            let block = self.get(&key).expect("key from index");
            for (side, s) in block.sides() {
                for (p, n) in s.points.iter().zip(&s.normals) {
                    out.push(MapPoint {
                        position: *p,
                        normal: *n,
                        side,
                        key,
                    });
                }
            }
        }
        out
    }

    pub fn block_count_with_back(&self) -> usize {
        self.index
            .values()
            .filter(|&&i| self.slots[i].block.back.is_some())
            .count()
    }
}
