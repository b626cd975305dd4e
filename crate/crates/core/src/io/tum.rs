use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion};

use super::{format_float, io_err, IoError};
use crate::pipeline::FrameId;

/// World-from-camera pose stamped with its frame id.
pub type TimedPose = (FrameId, Isometry3<f64>);

/// `timestamp tx ty tz qx qy qz qw` per line, Hamilton quaternion,
/// timestamp = frame id.
pub fn write_tum<W: Write>(out: &mut W, poses: &[TimedPose]) -> std::io::Result<()> {
    for (id, pose) in poses {
        let t = pose.translation.vector;
        let q = pose.rotation.quaternion();
        let fields: Vec<String> = [t.x, t.y, t.z, q.i, q.j, q.k, q.w]
            .iter()
            .map(|v| format_float(*v))
            .collect();
        writeln!(out, "{id} {}", fields.join(" "))?;
    }
    Ok(())
}

pub fn read_tum<R: Read>(input: R, context: &str) -> Result<Vec<TimedPose>, IoError> {
    let mut poses = Vec::new();
    for (n, line) in BufReader::new(input).lines().enumerate() {
        let bad = |m: String| IoError::Parse {
            context: context.to_string(),
            line: n + 1,
            message: m,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(bad(format!("expected 8 fields, got {}", fields.len())));
        }
        let id: FrameId = fields[0]
            .parse()
            .map_err(|_| bad(format!("timestamp {:?} is not a frame id", fields[0])))?;
        let v: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.parse().map_err(|_| bad(format!("bad number {f:?}"))))
            .collect::<Result<_, _>>()?;
        let q = Quaternion::new(v[6], v[3], v[4], v[5]);
        if !(q.norm() > 1e-12) {
            return Err(bad("zero quaternion".into()));
        }
        poses.push((
            id,
            Isometry3::from_parts(
                Translation3::new(v[0], v[1], v[2]),
                UnitQuaternion::from_quaternion(q),
            ),
        ));
    }
    Ok(poses)
}

pub fn write_tum_file(path: &Path, poses: &[TimedPose]) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_tum(&mut buf, poses).expect("writing to memory");
    std::fs::write(path, buf).map_err(io_err(path))
}

pub fn read_tum_file(path: &Path) -> Result<Vec<TimedPose>, IoError> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    read_tum(f, &path.display().to_string())
}
