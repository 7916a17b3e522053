//! On-disk formats: pose text files, raw point-cloud binaries, and the small
//! versioned binary container shared by the model serializers.

use std::io::{Read, Write};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// One line of a pose file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub timestamp: f64,
    pub pose: Pose,
}

/// Parses `timestamp tx ty tz qw qx qy qz` lines (comma or whitespace separated).
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_poses(text: &str) -> Result<Vec<StampedPose>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {s:?}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if fields.len() != 8 {
            return Err(Error::Parse(format!(
                "line {}: expected 8 fields, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let t = Vector3::new(fields[1], fields[2], fields[3]);
        let pose = Pose::from_quaternion([fields[4], fields[5], fields[6], fields[7]], t)?;
        out.push(StampedPose {
            timestamp: fields[0],
            pose,
        });
    }
    Ok(out)
}

pub fn render_poses(poses: &[StampedPose]) -> String {
    let mut s = String::new();
    for sp in poses {
        let t = sp.pose.translation();
        let q = sp.pose.quaternion();
        s.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            sp.timestamp, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        ));
    }
    s
}

/// Little-endian f32 xyz triples; the point count is implied by the length.
pub fn encode_cloud(points: &[Vector3<f64>]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(points.len() * 12);
    for p in points {
        for v in p.iter() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    buf
}

pub fn decode_cloud(bytes: &[u8]) -> Result<Vec<Vector3<f64>>> {
    if !bytes.len().is_multiple_of(12) {
        return Err(Error::Parse(format!(
            "point cloud length {} is not a multiple of 12",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(12)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes([c[i], c[i + 1], c[i + 2], c[i + 3]]) as f64;
            Vector3::new(f(0), f(4), f(8))
        })
        .collect())
}

/// Writer for the `MAGIC | version u16 | payload` container.
pub struct BinWriter<W: Write> {
    inner: W,
}

impl<W: Write> BinWriter<W> {
    pub fn new(mut inner: W, magic: [u8; 4], version: u16) -> Result<Self> {
        inner.write_all(&magic)?;
        inner.write_all(&version.to_le_bytes())?;
        Ok(Self { inner })
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.inner.write_all(&[v])?;
        Ok(())
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn len(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Parse(format!("length {v} overflows u32")))?;
        self.u32(v)
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) -> Result<()> {
        for v in vs {
            self.f64(v)?;
        }
        Ok(())
    }

    pub fn finish(self) -> W {
        self.inner
    }
}

pub struct BinReader<R: Read> {
    inner: R,
}

#[allow(clippy::len_without_is_empty)]
impl<R: Read> BinReader<R> {
    pub fn new(mut inner: R, magic: [u8; 4], version: u16) -> Result<Self> {
        let mut found = [0u8; 4];
        inner.read_exact(&mut found)?;
        if found != magic {
            return Err(Error::BadMagic {
                expected: magic,
                found,
            });
        }
        let mut v = [0u8; 2];
        inner.read_exact(&mut v)?;
        let found_version = u16::from_le_bytes(v);
        if found_version != version {
            return Err(Error::VersionMismatch {
                expected: version,
                found: found_version,
            });
        }
        Ok(Self { inner })
    }

    pub fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.inner.read_exact(&mut b)?;
        Ok(b[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    /// A length prefix, bounded to reject corrupt files before allocating.
    pub fn len(&mut self) -> Result<usize> {
        let v = self.u32()? as usize;
        if v > (1 << 28) {
            return Err(Error::Parse(format!("implausible length {v}")));
        }
        Ok(v)
    }

    pub fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}
