//! Point cloud, IMU and pose files.
//!
//! * `kitti-bin`: consecutive little-endian `f32` quadruples `x y z intensity`;
//!   intensity is dropped on read and written as zero.
//! * `ply`: ASCII PLY with a `vertex` element carrying `x`, `y` and `z`.
//! * IMU CSV: header `t,ax,ay,az,wx,wy,wz`, SI units, one sample per line.
//! * Poses: one line per frame, `r11 r12 r13 r21 .. r33 t1 t2 t3`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cloud::{Point3, PointCloud};
use crate::motion::{ImuSample, RigidTransform};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("byte {offset}: {reason}")]
pub struct ParseError {
    pub offset: usize,
    pub reason: String,
}

impl ParseError {
    fn new(offset: usize, reason: impl Into<String>) -> Self {
        Self {
            offset,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, source: ParseError) -> Self {
        IoError::Parse {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CloudFormat {
    #[value(name = "kitti-bin")]
    KittiBin,
    #[value(name = "ply")]
    Ply,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "bin" => Some(CloudFormat::KittiBin),
            "ply" => Some(CloudFormat::Ply),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            CloudFormat::KittiBin => "bin",
            CloudFormat::Ply => "ply",
        }
    }

    pub fn parse(self, bytes: &[u8]) -> Result<PointCloud, ParseError> {
        match self {
            CloudFormat::KittiBin => read_kitti(bytes),
            CloudFormat::Ply => read_ply(bytes),
        }
    }

    pub fn render(self, cloud: &PointCloud) -> Vec<u8> {
        match self {
            CloudFormat::KittiBin => write_kitti(cloud),
            CloudFormat::Ply => write_ply(cloud).into_bytes(),
        }
    }
}

pub fn read_kitti(bytes: &[u8]) -> Result<PointCloud, ParseError> {
    if bytes.len() % 16 != 0 {
        return Err(ParseError::new(
            bytes.len() - bytes.len() % 16,
            format!("trailing {} bytes do not form a point", bytes.len() % 16),
        ));
    }
    let f = |b: &[u8]| f32::from_le_bytes(b.try_into().unwrap()) as f64;
    Ok(bytes
        .chunks_exact(16)
        .map(|c| Point3::new(f(&c[0..4]), f(&c[4..8]), f(&c[8..12])))
        .collect())
}

pub fn write_kitti(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for p in cloud {
        for v in [p.x as f32, p.y as f32, p.z as f32, 0.0] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Lines with the byte offset at which each starts.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').map(move |l| {
        let start = offset;
        offset += l.len();
        (start, l.trim_end_matches(['\n', '\r']))
    })
}

fn utf8(bytes: &[u8]) -> Result<&str, ParseError> {
    std::str::from_utf8(bytes).map_err(|e| ParseError::new(e.valid_up_to(), "invalid UTF-8"))
}

pub fn read_ply(bytes: &[u8]) -> Result<PointCloud, ParseError> {
    let text = utf8(bytes)?;
    let mut it = lines(text);
    match it.next() {
        Some((_, "ply")) => {}
        _ => return Err(ParseError::new(0, "missing 'ply' magic")),
    }
    let mut vertices: Option<usize> = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut ended = false;
    for (off, line) in it.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(ParseError::new(off, format!("unsupported format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    if vertices.is_some() {
                        return Err(ParseError::new(off, "vertex element declared twice"));
                    }
                    vertices = Some(count.parse().map_err(|_| ParseError::new(off, "bad vertex count"))?);
                } else if vertices.is_none() {
                    return Err(ParseError::new(off, "elements before vertex are not supported"));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(ParseError::new(off, "list properties on vertices are not supported"))
            }
            ["property", "list", ..] => {}
            ["property", _, name] => {
                if in_vertex {
                    props.push(name.to_string());
                }
            }
            ["end_header"] => {
                ended = true;
                break;
            }
            _ => return Err(ParseError::new(off, format!("unrecognized header line '{line}'"))),
        }
    }
    if !ended {
        return Err(ParseError::new(text.len(), "missing end_header"));
    }
    let n = vertices.ok_or_else(|| ParseError::new(text.len(), "no vertex element"))?;
    let col = |axis: &str| {
        props
            .iter()
            .position(|p| p == axis)
            .ok_or_else(|| ParseError::new(0, format!("vertex has no '{axis}' property")))
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
    let mut points = Vec::with_capacity(n.min(text.len() / 6));
    for _ in 0..n {
        let Some((off, line)) = it.next() else {
            return Err(ParseError::new(
                text.len(),
                format!("expected {n} vertices, found {}", points.len()),
            ));
        };
        let values = line
            .split_whitespace()
            .map(|w| w.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ParseError::new(off, format!("bad number: {e}")))?;
        if values.len() != props.len() {
            return Err(ParseError::new(
                off,
                format!("expected {} values, found {}", props.len(), values.len()),
            ));
        }
        points.push(Point3::new(values[ix], values[iy], values[iz]));
    }
    Ok(PointCloud::new(points))
}

/// ASCII PLY with shortest round-trip formatting, so reading it back is exact.
pub fn write_ply(cloud: &PointCloud) -> String {
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        cloud.len()
    );
    for p in cloud {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

pub const IMU_HEADER: &str = "t,ax,ay,az,wx,wy,wz";

pub fn read_imu_csv(bytes: &[u8]) -> Result<Vec<ImuSample>, ParseError> {
    let text = utf8(bytes)?;
    let mut it = lines(text);
    match it.next() {
        Some((_, h)) if h.replace(' ', "") == IMU_HEADER => {}
        _ => return Err(ParseError::new(0, format!("expected header '{IMU_HEADER}'"))),
    }
    let mut out = Vec::new();
    for (off, line) in it {
        if line.trim().is_empty() {
            continue;
        }
        let v = line
            .split(',')
            .map(|w| w.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ParseError::new(off, format!("bad number: {e}")))?;
        if v.len() != 7 {
            return Err(ParseError::new(off, format!("expected 7 fields, found {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ParseError::new(off, "non-finite value"));
        }
        out.push(ImuSample {
            t: v[0],
            accel: [v[1], v[2], v[3]],
            gyro: [v[4], v[5], v[6]],
        });
    }
    Ok(out)
}

pub fn write_imu_csv(samples: &[ImuSample]) -> String {
    let mut out = format!("{IMU_HEADER}\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t, s.accel[0], s.accel[1], s.accel[2], s.gyro[0], s.gyro[1], s.gyro[2]
        );
    }
    out
}

pub fn read_poses(bytes: &[u8]) -> Result<Vec<RigidTransform>, ParseError> {
    let text = utf8(bytes)?;
    let mut out = Vec::new();
    for (off, line) in lines(text) {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let v = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ParseError::new(off, format!("bad number: {e}")))?;
        let arr: [f64; 12] = v
            .try_into()
            .map_err(|v: Vec<f64>| ParseError::new(off, format!("expected 12 values, found {}", v.len())))?;
        if arr.iter().any(|x| !x.is_finite()) {
            return Err(ParseError::new(off, "non-finite value"));
        }
        out.push(RigidTransform::from_array(&arr));
    }
    Ok(out)
}

pub fn write_poses(poses: &[RigidTransform]) -> String {
    let mut out = String::new();
    for p in poses {
        let words: Vec<String> = p.to_array().iter().map(f64::to_string).collect();
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    out
}

/// Reads a file in the given format, or by extension when `format` is `None`.
pub fn ingest(path: &Path, format: Option<CloudFormat>) -> Result<PointCloud, IoError> {
    let format = format.or_else(|| CloudFormat::from_path(path)).ok_or_else(|| {
        IoError::parse(
            path,
            ParseError::new(0, "unknown point cloud format; expected .bin or .ply"),
        )
    })?;
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    format.parse(&bytes).map_err(|e| IoError::parse(path, e))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud, format: CloudFormat) -> Result<(), IoError> {
    fs::write(path, format.render(cloud)).map_err(|e| IoError::io(path, e))
}

pub fn load_imu(path: &Path) -> Result<Vec<ImuSample>, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    read_imu_csv(&bytes).map_err(|e| IoError::parse(path, e))
}

pub fn load_poses(path: &Path) -> Result<Vec<RigidTransform>, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    read_poses(&bytes).map_err(|e| IoError::parse(path, e))
}

/// Point cloud files (`.bin`, `.ply`) in `dir`, sorted by file name.
pub fn sequence_files(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| IoError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && CloudFormat::from_path(p).is_some())
        .collect();
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kitti_single_point() {
        let mut bytes = Vec::new();
        for v in [1.5f32, -2.0, 0.25, 0.9] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let cloud = read_kitti(&bytes).unwrap();
        assert_eq!(cloud.points, vec![Point3::new(1.5, -2.0, 0.25)]);
        assert!(read_kitti(&[]).unwrap().is_empty());
        assert_eq!(read_kitti(&bytes[..20.min(bytes.len())]).unwrap().len(), 1);
        let err = read_kitti(&[0u8; 21]).unwrap_err();
        assert_eq!(err.offset, 16);
    }

    #[test]
    fn ply_round_trip_and_errors() {
        let cloud: PointCloud = (0..10).map(|i| Point3::new(i as f64 * 0.1, 1.0 / 3.0, -7e-9)).collect();
        assert_eq!(read_ply(write_ply(&cloud).as_bytes()).unwrap(), cloud);
        let bad = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n4 x 6\n";
        let err = read_ply(bad.as_bytes()).unwrap_err();
        assert_eq!(err.offset, bad.find("4 x").unwrap());
        assert!(read_ply(b"plx\n").is_err());
    }

    #[test]
    fn ply_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 1\nproperty float intensity\nproperty float z\nproperty float y\nproperty float x\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n9 3 2 1\n";
        assert_eq!(
            read_ply(text.as_bytes()).unwrap().points,
            vec![Point3::new(1.0, 2.0, 3.0)]
        );
    }

    #[test]
    fn imu_and_poses() {
        let samples = vec![ImuSample {
            t: 0.5,
            accel: [1.0, 2.0, 3.0],
            gyro: [0.1, 0.2, 0.3],
        }];
        assert_eq!(read_imu_csv(write_imu_csv(&samples).as_bytes()).unwrap(), samples);
        let err = read_imu_csv(b"t,ax,ay,az,wx,wy,wz\n1,2,3\n").unwrap_err();
        assert_eq!(err.offset, 20);
        let poses = vec![
            RigidTransform::from_translation([1.0, -2.0, 0.5]),
            RigidTransform::IDENTITY,
        ];
        assert_eq!(read_poses(write_poses(&poses).as_bytes()).unwrap(), poses);
        assert!(read_poses(b"1 2 3\n").is_err());
    }
}
