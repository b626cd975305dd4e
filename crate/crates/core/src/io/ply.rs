use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::{io_err, IoError};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Vec<[u8; 3]>,
}

/// Distinct color per submap: hues stepped by the golden angle.
pub fn submap_color(submap: usize) -> [u8; 3] {
    let h = (submap as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let (s, v) = (0.75, 0.95);
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match i as u8 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(|c| (c * 255.0).round() as u8)
}

/// Binary little-endian PLY with float32 xyz and uchar rgb per vertex.
pub fn write_ply<W: Write>(out: &mut W, cloud: &PointCloud) -> std::io::Result<()> {
    assert_eq!(
        cloud.points.len(),
        cloud.colors.len(),
        "one color per point"
    );
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.points.len()
    )?;
    let mut buf = Vec::with_capacity(cloud.points.len() * 15);
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        for x in p.iter() {
            buf.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        buf.extend_from_slice(c);
    }
    out.write_all(&buf)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scalar {
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "uchar" | "uint8" => Scalar::U8,
            "char" | "int8" => Scalar::I8,
            "ushort" | "uint16" => Scalar::U16,
            "short" | "int16" => Scalar::I16,
            "uint" | "uint32" => Scalar::U32,
            "int" | "int32" => Scalar::I32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::U8 | Scalar::I8 => 1,
            Scalar::U16 | Scalar::I16 => 2,
            Scalar::U32 | Scalar::I32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::U8 => b[0] as f64,
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Reads the vertex element of a binary little-endian PLY. Colors default
/// to white when absent; other elements must follow the vertices.
pub fn read_ply<R: Read>(input: R, context: &str) -> Result<PointCloud, IoError> {
    let bad = |line: usize, m: &str| IoError::Parse {
        context: context.to_string(),
        line,
        message: m.to_string(),
    };
    let mut r = BufReader::new(input);
    let mut n_vertices = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    let mut line_no = 0;
    loop {
        let mut line = String::new();
        line_no += 1;
        if r.read_line(&mut line)
            .map_err(|e| bad(line_no, &e.to_string()))?
            == 0
        {
            return Err(bad(line_no, "unexpected end of header"));
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["ply"] if line_no == 1 => {}
            _ if line_no == 1 => return Err(bad(1, "missing ply magic")),
            ["format", "binary_little_endian", _] => {}
            ["format", other, _] => {
                return Err(bad(line_no, &format!("unsupported format {other}")))
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                n_vertices = Some(
                    n.parse::<usize>()
                        .map_err(|_| bad(line_no, "bad vertex count"))?,
                );
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] if in_vertex => {
                return Err(bad(line_no, "list properties on vertices are unsupported"))
            }
            ["property", ty, name] if in_vertex => {
                let ty = Scalar::parse(ty).ok_or_else(|| bad(line_no, "unknown property type"))?;
                props.push((name.to_string(), ty));
            }
            ["property", ..] => {}
            ["end_header"] => break,
            _ => {
                return Err(bad(
                    line_no,
                    &format!("unexpected header line {:?}", line.trim()),
                ))
            }
        }
    }
    let n = n_vertices.ok_or_else(|| bad(line_no, "no vertex element"))?;
    let stride: usize = props.iter().map(|p| p.1.size()).sum();
    let offset = |name: &str| -> Option<(usize, Scalar)> {
        let mut off = 0;
        for (p, ty) in &props {
            if p == name {
                return Some((off, *ty));
            }
            off += ty.size();
        }
        None
    };
    let xyz: Vec<(usize, Scalar)> = ["x", "y", "z"]
        .iter()
        .map(|k| offset(k).ok_or_else(|| bad(line_no, &format!("vertex lacks {k}"))))
        .collect::<Result<_, _>>()?;
    let rgb: Option<Vec<(usize, Scalar)>> =
        ["red", "green", "blue"].iter().map(|k| offset(k)).collect();

    let mut data = vec![0u8; n * stride];
    r.read_exact(&mut data)
        .map_err(|_| IoError::Format(format!("{context}: truncated vertex data")))?;
    let mut cloud = PointCloud {
        points: Vec::with_capacity(n),
        colors: Vec::with_capacity(n),
    };
    for rec in data.chunks_exact(stride.max(1)).take(n) {
        cloud
            .points
            .push(Vector3::from_fn(|i, _| xyz[i].1.read(&rec[xyz[i].0..])));
        cloud.colors.push(match &rgb {
            Some(c) => [0, 1, 2].map(|i| c[i].1.read(&rec[c[i].0..]) as u8),
            None => [255; 3],
        });
    }
    Ok(cloud)
}

pub fn write_ply_file(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_ply(&mut buf, cloud).expect("writing to memory");
    std::fs::write(path, buf).map_err(io_err(path))
}

pub fn read_ply_file(path: &Path) -> Result<PointCloud, IoError> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    read_ply(f, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_at_float_precision() {
        let cloud = PointCloud {
            points: vec![Vector3::new(1.0, -2.5, 3.25), Vector3::new(0.1, 0.2, 0.3)],
            colors: vec![[1, 2, 3], [250, 128, 0]],
        };
        let mut buf = Vec::new();
        write_ply(&mut buf, &cloud).unwrap();
        let back = read_ply(buf.as_slice(), "mem").unwrap();
        assert_eq!(back.colors, cloud.colors);
        for (a, b) in back.points.iter().zip(&cloud.points) {
            assert!((a - b).amax() < 1e-6);
        }
    }

    #[test]
    fn reads_double_vertices_without_color() {
        let mut buf = b"ply\nformat binary_little_endian 1.0\ncomment x\nelement vertex 1\n\
                        property double x\nproperty double y\nproperty double z\nend_header\n"
            .to_vec();
        for v in [1.0f64, 2.0, 3.0] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let c = read_ply(buf.as_slice(), "mem").unwrap();
        assert_eq!(c.points, vec![Vector3::new(1.0, 2.0, 3.0)]);
        assert_eq!(c.colors, vec![[255; 3]]);
    }

    #[test]
    fn rejects_ascii_and_truncation() {
        let ascii = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
        assert!(read_ply(&ascii[..], "mem").is_err());
        let short = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\n\
                      property float y\nproperty float z\nend_header\n\0\0\0\0";
        assert!(read_ply(&short[..], "mem").is_err());
    }

    #[test]
    fn submap_colors_differ() {
        assert_ne!(submap_color(0), submap_color(1));
        assert_ne!(submap_color(1), submap_color(2));
    }
}
