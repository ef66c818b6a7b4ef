//! ASCII PLY files for scans, normal clouds and labeled maps.
//!
//! Only a single `vertex` element with scalar properties is supported, which
//! covers every file this crate produces.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Unit;
use thiserror::Error;

use crate::geometry::Vec3;
use crate::normals::{NormalCloud, RawScan};
use crate::voxelmap::{MapPoint, NvmVoxelMap, Side, VoxelKey};

#[derive(Debug, Error)]
pub enum PlyError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed PLY header: {0}")]
    Header(String),
    #[error("line {line}: {msg}")]
    Body { line: usize, msg: String },
    #[error("missing property `{0}`")]
    MissingProperty(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyType {
    Double,
    Float,
    UChar,
    Int,
}

impl PlyType {
    fn name(self) -> &'static str {
        match self {
            PlyType::Double => "double",
            PlyType::Float => "float",
            PlyType::UChar => "uchar",
            PlyType::Int => "int",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "double" | "float64" => PlyType::Double,
            "float" | "float32" => PlyType::Float,
            "uchar" | "uint8" => PlyType::UChar,
            "int" | "int32" => PlyType::Int,
            _ => return None,
        })
    }

    fn is_integer(self) -> bool {
        matches!(self, PlyType::UChar | PlyType::Int)
    }
}

/// A vertex table: named scalar columns, one row per vertex.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyTable {
    pub comments: Vec<String>,
    pub properties: Vec<(String, PlyType)>,
    pub rows: Vec<Vec<f64>>,
}

impl PlyTable {
    pub fn new(properties: &[(&str, PlyType)]) -> Self {
        Self {
            comments: Vec::new(),
            properties: properties
                .iter()
                .map(|(n, t)| (n.to_string(), *t))
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Result<usize, PlyError> {
        self.properties
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| PlyError::MissingProperty(name.to_string()))
    }

    /// Value of `comment <key> <value>`, if present.
    pub fn comment_value(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let mut it = c.splitn(2, ' ');
            (it.next() == Some(key)).then(|| it.next().unwrap_or("").trim())
        })
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity(64 + self.rows.len() * 48);
        out.push_str("ply\nformat ascii 1.0\n");
        for c in &self.comments {
            writeln!(out, "comment {c}").unwrap();
        }
        writeln!(out, "element vertex {}", self.rows.len()).unwrap();
        for (name, ty) in &self.properties {
            writeln!(out, "property {} {}", ty.name(), name).unwrap();
        }
        out.push_str("end_header\n");
        for row in &self.rows {
            for (i, (v, (_, ty))) in row.iter().zip(&self.properties).enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                if ty.is_integer() {
                    write!(out, "{}", *v as i64).unwrap();
                } else {
                    // Shortest representation that round-trips exactly.
                    write!(out, "{v}").unwrap();
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, PlyError> {
        let mut lines = text.lines().enumerate();
        let mut table = PlyTable::default();
        match lines.next() {
            Some((_, "ply")) => {}
            _ => return Err(PlyError::Header("missing `ply` magic".into())),
        }
        let mut count = None;
        let mut in_vertex = false;
        loop {
            let (_, line) = lines
                .next()
                .ok_or_else(|| PlyError::Header("missing end_header".into()))?;
            let line = line.trim();
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("format") => {
                    if parts.next() != Some("ascii") {
                        return Err(PlyError::Header("only ascii PLY is supported".into()));
                    }
                }
                Some("comment") => table
                    .comments
                    .push(line["comment".len()..].trim().to_string()),
                Some("element") => {
                    let name = parts.next().unwrap_or("");
                    in_vertex = name == "vertex";
                    if !in_vertex {
                        return Err(PlyError::Header(format!("unsupported element `{name}`")));
                    }
                    let n = parts
                        .next()
                        .and_then(|s| s.parse::<usize>().ok())
                        .ok_or_else(|| PlyError::Header("bad vertex count".into()))?;
                    count = Some(n);
                }
                Some("property") if in_vertex => {
                    let ty = parts.next().unwrap_or("");
                    let ty = PlyType::parse(ty).ok_or_else(|| {
                        PlyError::Header(format!("unsupported property type `{ty}`"))
                    })?;
                    let name = parts
                        .next()
                        .ok_or_else(|| PlyError::Header("property without name".into()))?;
                    table.properties.push((name.to_string(), ty));
                }
                Some("end_header") => break,
                Some("obj_info") | None => {}
                Some(other) => {
                    return Err(PlyError::Header(format!(
                        "unexpected header line `{other}`"
                    )))
                }
            }
        }
        let count = count.ok_or_else(|| PlyError::Header("no vertex element".into()))?;
        table.rows.reserve(count);
        for (idx, line) in lines {
            if table.rows.len() == count {
                break;
            }
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<_, _>>()
                .map_err(|e| PlyError::Body {
                    line: idx + 1,
                    msg: e.to_string(),
                })?;
            if row.len() != table.properties.len() {
                return Err(PlyError::Body {
                    line: idx + 1,
                    msg: format!(
                        "expected {} values, found {}",
                        table.properties.len(),
                        row.len()
                    ),
                });
            }
            table.rows.push(row);
        }
        if table.rows.len() != count {
            return Err(PlyError::Body {
                line: 0,
                msg: format!("expected {count} vertices, found {}", table.rows.len()),
            });
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<(), PlyError> {
        std::fs::write(path, self.to_ascii())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, PlyError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

const XYZ: [(&str, PlyType); 3] = [
    ("x", PlyType::Double),
    ("y", PlyType::Double),
    ("z", PlyType::Double),
];

pub fn scan_table(scan: &RawScan) -> PlyTable {
    let mut t = PlyTable::new(&XYZ);
    t.comments.push(format!("timestamp {:.6}", scan.timestamp));
    t.rows = scan.points.iter().map(|p| vec![p.x, p.y, p.z]).collect();
    t
}

pub fn scan_from_table(t: &PlyTable) -> Result<RawScan, PlyError> {
    let (x, y, z) = (t.column("x")?, t.column("y")?, t.column("z")?);
    let timestamp = t
        .comment_value("timestamp")
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.0);
    Ok(RawScan {
        points: t.rows.iter().map(|r| Vec3::new(r[x], r[y], r[z])).collect(),
        timestamp,
    })
}

/// `x y z nx ny nz range valid`; invalid points carry a zero normal.
pub fn normal_cloud_table(cloud: &NormalCloud) -> PlyTable {
    let mut t = PlyTable::new(&[
        ("x", PlyType::Double),
        ("y", PlyType::Double),
        ("z", PlyType::Double),
        ("nx", PlyType::Double),
        ("ny", PlyType::Double),
        ("nz", PlyType::Double),
        ("range", PlyType::Double),
        ("valid", PlyType::UChar),
    ]);
    t.comments.push(format!("timestamp {:.6}", cloud.timestamp));
    t.rows = cloud
        .points
        .iter()
        .map(|p| {
            let n = p.normal.map(|n| n.into_inner()).unwrap_or_else(Vec3::zeros);
            let p0 = p.position;
            vec![
                p0.x,
                p0.y,
                p0.z,
                n.x,
                n.y,
                n.z,
                p.range,
                if p.is_valid() { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    t
}

/// `x y z nx ny nz side voxel_ix voxel_iy voxel_iz`, side 0 = front, 1 = back.
pub fn map_table(points: &[MapPoint]) -> PlyTable {
    let mut t = PlyTable::new(&[
        ("x", PlyType::Double),
        ("y", PlyType::Double),
        ("z", PlyType::Double),
        ("nx", PlyType::Double),
        ("ny", PlyType::Double),
        ("nz", PlyType::Double),
        ("side", PlyType::UChar),
        ("voxel_ix", PlyType::Int),
        ("voxel_iy", PlyType::Int),
        ("voxel_iz", PlyType::Int),
    ]);
    t.rows = points
        .iter()
        .map(|m| {
            let (p, n) = (m.position, m.normal);
            vec![
                p.x,
                p.y,
                p.z,
                n.x,
                n.y,
                n.z,
                f64::from(m.side.label()),
                m.key.ix as f64,
                m.key.iy as f64,
                m.key.iz as f64,
            ]
        })
        .collect();
    t
}

pub fn write_map(map: &NvmVoxelMap, path: &Path) -> Result<(), PlyError> {
    map_table(&map.points()).write(path)
}

pub fn map_points_from_table(t: &PlyTable) -> Result<Vec<MapPoint>, PlyError> {
    let cols: Vec<usize> = [
        "x", "y", "z", "nx", "ny", "nz", "side", "voxel_ix", "voxel_iy", "voxel_iz",
    ]
    .iter()
    .map(|n| t.column(n))
    .collect::<Result<_, _>>()?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let v = |k: usize| r[cols[k]];
            let side = Side::from_label(v(6) as u8).ok_or_else(|| PlyError::Body {
                line: i + 1,
                msg: format!("side label {} is neither 0 nor 1", v(6)),
            })?;
            let normal = Vec3::new(v(3), v(4), v(5));
            if !(normal.norm() > 0.0) {
                return Err(PlyError::Body {
                    line: i + 1,
                    msg: "zero normal".into(),
                });
            }
            Ok(MapPoint {
                position: Vec3::new(v(0), v(1), v(2)),
                normal: Unit::new_normalize(normal),
                side,
                key: VoxelKey::new(v(7) as i64, v(8) as i64, v(9) as i64),
            })
        })
        .collect()
}

pub fn read_map(path: &Path) -> Result<Vec<MapPoint>, PlyError> {
    map_points_from_table(&PlyTable::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normals::{NormalPoint, PointStatus};
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let scan = RawScan::new(vec![Vec3::new(1.0, 2.0, 3.5)], 0.25);
        let text = scan_table(&scan).to_ascii();
        assert!(text
            .starts_with("ply\nformat ascii 1.0\ncomment timestamp 0.250000\nelement vertex 1\n"));
        assert!(text.ends_with("end_header\n1 2 3.5\n"));
    }

    #[test]
    fn normal_cloud_columns() {
        let cloud = NormalCloud {
            points: vec![
                NormalPoint {
                    position: Vec3::new(0.0, 0.0, -2.0),
                    normal: Some(Vec3::z_axis()),
                    range: 2.0,
                    status: PointStatus::Valid,
                },
                NormalPoint {
                    position: Vec3::new(0.0, 1.0, -2.0),
                    normal: None,
                    range: 5f64.sqrt(),
                    status: PointStatus::NonPlanar,
                },
            ],
            timestamp: 0.0,
        };
        let t = normal_cloud_table(&cloud);
        let names: Vec<&str> = t.properties.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["x", "y", "z", "nx", "ny", "nz", "range", "valid"]);
        assert_eq!(t.rows[0][7], 1.0);
        assert_eq!(t.rows[1][7], 0.0);
        assert_eq!(&t.rows[1][3..6], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(PlyTable::parse("not a ply").is_err());
        assert!(PlyTable::parse("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        let short = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nend_header\n1\n";
        assert!(PlyTable::parse(short).is_err());
        let t = PlyTable::parse(
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nend_header\n1\n",
        )
        .unwrap();
        assert!(matches!(
            map_points_from_table(&t),
            Err(PlyError::MissingProperty(_))
        ));
    }

    proptest! {
        #[test]
        fn map_points_round_trip(raw in proptest::collection::vec(
            (-50.0f64..50.0, -50.0f64..50.0, -5.0f64..5.0, -1.0f64..1.0, -1.0f64..1.0, any::<bool>()), 0..50)
        ) {
            let pts: Vec<MapPoint> = raw.iter().map(|&(x, y, z, a, b, back)| {
                let p = Vec3::new(x, y, z);
                MapPoint {
                    position: p,
                    normal: Unit::new_normalize(Vec3::new(a, b, 1.0)),
                    side: if back { Side::Back } else { Side::Front },
                    key: crate::voxelmap::voxel_key(&p, 0.3),
                }
            }).collect();
            let text = map_table(&pts).to_ascii();
            let back = map_points_from_table(&PlyTable::parse(&text).unwrap()).unwrap();
            prop_assert_eq!(back.len(), pts.len());
            for (a, b) in pts.iter().zip(&back) {
                prop_assert_eq!(a.position, b.position);
                prop_assert_eq!(a.side, b.side);
                prop_assert_eq!(a.key, b.key);
                prop_assert!((a.normal.into_inner() - b.normal.into_inner()).norm() < 1e-12);
            }
        }
    }
}
