//! Plain-text point clouds and pose lists.
//!
//! Point clouds are ASCII XYZ: one `x y z` triple per line, extra columns
//! ignored, `#` starts a comment. Pose files follow the TUM layout
//! `stamp tx ty tz qx qy qz qw`, where `stamp` is matched against scan file
//! stems.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};

fn fields(line: &str) -> Option<&str> {
    let body = line.split('#').next().unwrap_or("").trim();
    (!body.is_empty()).then_some(body)
}

fn numbers(body: &str, line: usize, want: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = body
        .split_whitespace()
        .take(want)
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line, msg: e.to_string() })?;
    if vals.len() < want {
        return Err(Error::Parse {
            line,
            msg: format!("expected {want} numbers, found {}", vals.len()),
        });
    }
    Ok(vals)
}

pub fn read_xyz<R: BufRead>(reader: R) -> Result<Vec<Vec3>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let Some(body) = fields(&line) else { continue };
        let v = numbers(body, i + 1, 3)?;
        out.push(Vec3::new(v[0], v[1], v[2]));
    }
    Ok(out)
}

pub fn write_xyz<W: Write>(mut writer: W, points: &[Vec3]) -> Result<()> {
    for p in points {
        writeln!(writer, "{} {} {}", p.x, p.y, p.z)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_xyz(path: &Path) -> Result<Vec<Vec3>> {
    read_xyz(BufReader::new(File::open(path)?))
}

pub fn save_xyz(path: &Path, points: &[Vec3]) -> Result<()> {
    write_xyz(BufWriter::new(File::create(path)?), points)
}

/// Stamped sensor poses, in file order.
pub fn read_poses<R: BufRead>(reader: R) -> Result<Vec<(String, RigidTransform)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let Some(body) = fields(&line) else { continue };
        let (stamp, rest) = body.split_once(char::is_whitespace).ok_or(Error::Parse {
            line: i + 1,
            msg: "missing pose values".into(),
        })?;
        let v = numbers(rest, i + 1, 7)?;
        let q = Quaternion::new(v[6], v[3], v[4], v[5]);
        if !(q.norm() > 1e-9) {
            return Err(Error::Parse {
                line: i + 1,
                msg: "zero quaternion".into(),
            });
        }
        let pose = RigidTransform::from_quaternion(UnitQuaternion::from_quaternion(q), Vec3::new(v[0], v[1], v[2]));
        out.push((stamp.to_string(), pose));
    }
    Ok(out)
}

pub fn write_poses<W: Write>(mut writer: W, poses: &[(String, RigidTransform)]) -> Result<()> {
    for (stamp, pose) in poses {
        let q = UnitQuaternion::from_matrix(pose.rotation());
        let t = pose.translation();
        writeln!(writer, "{stamp} {} {} {} {} {} {} {}", t.x, t.y, t.z, q.i, q.j, q.k, q.w)?;
    }
    writer.flush()?;
    Ok(())
}

/// A directory of `*.xyz` scans plus `poses.txt`.
#[derive(Clone, Debug)]
pub struct ScanSequence {
    pub frames: Vec<(PathBuf, RigidTransform)>,
}

impl ScanSequence {
    pub const POSES_FILE: &'static str = "poses.txt";

    /// Scans are ordered by file name; each needs a pose whose stamp equals
    /// its file stem.
    pub fn open(dir: &Path) -> Result<Self> {
        let poses: HashMap<String, RigidTransform> =
            read_poses(BufReader::new(File::open(dir.join(Self::POSES_FILE))?))?.into_iter().collect();
        let mut scans: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "xyz"))
            .collect();
        scans.sort();
        if scans.is_empty() {
            return Err(Error::EmptySequence);
        }
        let frames = scans
            .into_iter()
            .map(|path| {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                match poses.get(&stem) {
                    Some(pose) => Ok((path, *pose)),
                    None => Err(Error::MissingPose(stem)),
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyz_round_trip_is_exact() {
        let pts = vec![Vec3::new(0.1, -2.5e-7, 1e3), Vec3::new(1.0 / 3.0, 0.0, -0.0)];
        let mut buf = Vec::new();
        write_xyz(&mut buf, &pts).unwrap();
        assert_eq!(read_xyz(buf.as_slice()).unwrap(), pts);
    }

    #[test]
    fn xyz_skips_comments_and_extra_columns() {
        let text = "# header\n1 2 3 0.5\n\n4 5 6 # tail\n";
        let pts = read_xyz(text.as_bytes()).unwrap();
        assert_eq!(pts, vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)]);
    }

    #[test]
    fn xyz_reports_bad_line() {
        match read_xyz("1 2 3\n1 2\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn poses_round_trip() {
        let pose = RigidTransform::from_euler(0.3, -0.2, 0.1, Vec3::new(1.0, 2.0, 3.0));
        let mut buf = Vec::new();
        write_poses(&mut buf, &[("000001".to_string(), pose)]).unwrap();
        let back = read_poses(buf.as_slice()).unwrap();
        assert_eq!(back[0].0, "000001");
        let p = Vec3::new(0.4, -1.0, 2.0);
        assert!((back[0].1.transform_point(&p) - pose.transform_point(&p)).norm() < 1e-12);
    }
}
