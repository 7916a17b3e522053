//! Artifact directory: file helpers, `metric,value` summaries and the stored scene.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lightloc_core::formats::{decode_cloud, encode_cloud, parse_poses, render_poses, StampedPose};
use lightloc_core::scene::Frame;
use lightloc_core::PointCloud;
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::{CliError, CliResult};

/// Subdirectories written by the pipeline; `--force` removes only these.
pub const STAGE_DIRS: [&str; 8] = [
    "scene",
    "cluster",
    "classifier",
    "scr",
    "localize",
    "localize_oracle",
    "fuse",
    "report",
];
pub const CONFIG_FILE: &str = "config.txt";
pub const TIMINGS_FILE: &str = "timings.csv";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
        }
        fs::write(&path, bytes).map_err(CliError::io(format!("writing {}", path.display())))
    }

    pub fn read(&self, rel: &str) -> CliResult<Vec<u8>> {
        let path = self.path(rel);
        if !path.exists() {
            return Err(CliError::MissingArtifact(path));
        }
        fs::read(&path).map_err(CliError::io(format!("reading {}", path.display())))
    }

    pub fn read_text(&self, rel: &str) -> CliResult<String> {
        String::from_utf8(self.read(rel)?).map_err(|e| self.malformed(rel, e.to_string()))
    }

    pub fn malformed(&self, rel: &str, reason: impl Into<String>) -> CliError {
        CliError::Malformed {
            path: self.path(rel),
            reason: reason.into(),
        }
    }

    /// True when the directory holds anything besides the config and timings.
    pub fn has_outputs(&self) -> CliResult<bool> {
        if !self.root.exists() {
            return Ok(false);
        }
        let entries = fs::read_dir(&self.root).map_err(CliError::io(format!("listing {}", self.root.display())))?;
        for entry in entries {
            let entry = entry.map_err(CliError::io("listing output directory"))?;
            let name = entry.file_name();
            if name != CONFIG_FILE && name != TIMINGS_FILE {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn clear_stages(&self) -> CliResult<()> {
        for dir in STAGE_DIRS {
            let path = self.path(dir);
            if path.exists() {
                fs::remove_dir_all(&path).map_err(CliError::io(format!("removing {}", path.display())))?;
            }
        }
        Ok(())
    }

    pub fn append_timing(&self, command: &str, seconds: f64) -> CliResult<()> {
        let path = self.path(TIMINGS_FILE);
        let mut text = if path.exists() {
            self.read_text(TIMINGS_FILE)?
        } else {
            "command,seconds\n".to_string()
        };
        writeln!(text, "{command},{seconds:.3}").expect("writing to a String");
        self.write(TIMINGS_FILE, text.as_bytes())
    }

    pub fn write_summary(&self, rel: &str, summary: &Summary) -> CliResult<()> {
        self.write(rel, summary.render().as_bytes())
    }

    pub fn read_summary(&self, rel: &str) -> CliResult<Summary> {
        let text = self.read_text(rel)?;
        Summary::parse(&text).map_err(|reason| self.malformed(rel, reason))
    }

    /// Reads a stage summary and checks that it came from the current config.
    pub fn checked_summary(&self, rel: &str, config_hash: &str) -> CliResult<Summary> {
        let summary = self.read_summary(rel)?;
        let found = summary.get("config_hash").unwrap_or("");
        if found != config_hash {
            return Err(CliError::StaleArtifact {
                path: self.path(rel),
                expected: config_hash.to_string(),
                found: found.to_string(),
            });
        }
        Ok(summary)
    }
}

/// Ordered `metric,value` rows. The first row is always `config_hash`.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    rows: Vec<(String, String)>,
}

impl Summary {
    pub fn new(config_hash: &str) -> Self {
        Self {
            rows: vec![("config_hash".into(), config_hash.into())],
        }
    }

    pub fn push(&mut self, metric: &str, value: impl ToString) -> &mut Self {
        self.rows.push((metric.into(), value.to_string()));
        self
    }

    pub fn get(&self, metric: &str) -> Option<&str> {
        self.rows.iter().find(|(m, _)| m == metric).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, metric: &str) -> Option<f64> {
        self.get(metric)?.parse().ok()
    }

    pub fn rows(&self) -> &[(String, String)] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (m, v) in &self.rows {
            writeln!(s, "{m},{v}").expect("writing to a String");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some("metric,value") {
            return Err("missing `metric,value` header".into());
        }
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split_once(',')
                    .map(|(m, v)| (m.to_string(), v.to_string()))
                    .ok_or_else(|| format!("bad row {l:?}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rows })
    }
}

/// Frame sets stored by `generate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Drive,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Drive];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Drive => "drive",
        }
    }

    fn poses_file(self) -> String {
        format!("scene/{}_poses.txt", self.name())
    }

    fn cloud_file(self, i: usize) -> String {
        format!("scene/{}/{i:05}.bin", self.name())
    }
}

const MANIFEST: &str = "scene/manifest.txt";

/// Writes pose files and clouds for each split plus a manifest of checksums.
pub fn save_scene(art: &Artifacts, config_hash: &str, splits: &[(Split, &[Frame])]) -> CliResult<()> {
    let mut manifest = format!("config_hash {config_hash}\n");
    let mut record = |rel: String, bytes: &[u8]| -> CliResult<()> {
        art.write(&rel, bytes)?;
        writeln!(manifest, "file {} {rel}", sha256_hex(bytes)).expect("writing to a String");
        Ok(())
    };
    for &(split, frames) in splits {
        let poses: Vec<StampedPose> = frames
            .iter()
            .map(|f| StampedPose {
                timestamp: f.arc,
                pose: f.pose,
            })
            .collect();
        record(split.poses_file(), render_poses(&poses).as_bytes())?;
        for (i, f) in frames.iter().enumerate() {
            record(split.cloud_file(i), &encode_cloud(f.sensor.points()))?;
        }
    }
    art.write(MANIFEST, manifest.as_bytes())
}

/// Checked manifest: the config hash and the expected checksum of every file.
fn read_manifest(art: &Artifacts, config_hash: &str) -> CliResult<Vec<(String, String)>> {
    let text = art.read_text(MANIFEST)?;
    let mut lines = text.lines();
    let found = lines
        .next()
        .and_then(|l| l.strip_prefix("config_hash "))
        .ok_or_else(|| art.malformed(MANIFEST, "missing config_hash line"))?;
    if found != config_hash {
        return Err(CliError::StaleArtifact {
            path: art.path(MANIFEST),
            expected: config_hash.to_string(),
            found: found.to_string(),
        });
    }
    lines
        .map(|l| {
            let mut parts = l.split(' ');
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some("file"), Some(sum), Some(rel), None) => Ok((rel.to_string(), sum.to_string())),
                _ => Err(art.malformed(MANIFEST, format!("bad line {l:?}"))),
            }
        })
        .collect()
}

fn read_verified(art: &Artifacts, rel: &str, manifest: &[(String, String)]) -> CliResult<Vec<u8>> {
    let expected = manifest
        .iter()
        .find(|(r, _)| r == rel)
        .map(|(_, s)| s)
        .ok_or_else(|| art.malformed(MANIFEST, format!("no entry for {rel}")))?;
    let bytes = art.read(rel)?;
    if &sha256_hex(&bytes) != expected {
        return Err(CliError::Checksum(art.path(rel)));
    }
    Ok(bytes)
}

/// Loads one split, verifying every file against the manifest.
pub fn load_split(art: &Artifacts, config_hash: &str, split: Split) -> CliResult<Vec<Frame>> {
    let manifest = read_manifest(art, config_hash)?;
    let pose_bytes = read_verified(art, &split.poses_file(), &manifest)?;
    let text = String::from_utf8(pose_bytes).map_err(|e| art.malformed(&split.poses_file(), e.to_string()))?;
    let poses = parse_poses(&text)?;
    poses
        .iter()
        .enumerate()
        .map(|(i, sp)| {
            let points = decode_cloud(&read_verified(art, &split.cloud_file(i), &manifest)?)?;
            Ok(Frame::from_recording(i, sp.timestamp, sp.pose, PointCloud::sensor(points)?)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_roundtrip() {
        let mut s = Summary::new("abc");
        s.push("median", 0.25).push("count", 3);
        let back = Summary::parse(&s.render()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.get_f64("median"), Some(0.25));
        assert!(Summary::parse("x,y\n").is_err());
    }
}
