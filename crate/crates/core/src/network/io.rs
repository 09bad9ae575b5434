//! Point clouds, part labels and exporter reference outputs on disk.
//!
//! A point cloud file has one `x y z` triple per line. Blank lines and lines
//! starting with `#` are ignored. A label file has one integer per line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::transforms::{Point3, PointCloud};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut points = Vec::new();
    for (line, content) in content_lines(&text) {
        let values: Vec<f64> = content
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("{}:{line}: {e}", path.display())))?;
        let [x, y, z] = values[..] else {
            return Err(Error::Parse(format!(
                "{}:{line}: expected 3 coordinates, found {}",
                path.display(),
                values.len()
            )));
        };
        points.push(Point3::new(x, y, z));
    }
    PointCloud::new(points)
}

pub fn write_points(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for p in cloud.points() {
        // `{:?}` prints the shortest representation that parses back exactly.
        writeln!(text, "{:?} {:?} {:?}", p.x, p.y, p.z).expect("write to string");
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(line, content)| {
            content
                .parse()
                .map_err(|e| Error::Parse(format!("{}:{line}: {e}", path.display())))
        })
        .collect()
}

pub fn write_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reference forward outputs written by a model exporter.
///
/// ```json
/// {"version": 1, "cases": [{"points": "cloud0.xyz", "logits": [0.1, -2.0, 0.7]}]}
/// ```
///
/// `points` is relative to the reference file. Segmentation logits are
/// nested, one row per point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub version: u32,
    pub cases: Vec<ReferenceCase>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceCase {
    pub points: PathBuf,
    pub logits: ReferenceLogits,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceLogits {
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl ReferenceLogits {
    fn flatten(&self) -> Vec<f64> {
        match self {
            ReferenceLogits::Vector(v) => v.clone(),
            ReferenceLogits::Matrix(m) => m.concat(),
        }
    }
}

/// Loads a reference set, resolving cloud paths against its directory.
pub fn read_reference(path: impl AsRef<Path>) -> Result<ReferenceSet> {
    let path = path.as_ref();
    let mut set: ReferenceSet = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for case in &mut set.cases {
        case.points = base.join(&case.points);
    }
    Ok(set)
}

/// Largest absolute difference between the model's logits and the reference
/// logits over all cases.
pub fn check_reference(model: &Model, reference: &ReferenceSet) -> Result<f64> {
    let mut worst = 0.0f64;
    for case in &reference.cases {
        let cloud = read_points(&case.points)?;
        let logits = model.forward(&cloud)?.data;
        let expected = case.logits.flatten();
        if expected.len() != logits.len() {
            return Err(Error::InvalidArgument(format!(
                "{}: reference has {} logits, model produced {}",
                case.points.display(),
                expected.len(),
                logits.len()
            )));
        }
        for (a, b) in logits.iter().zip(&expected) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.xyz");
        let cloud = PointCloud::new(vec![
            Point3::new(0.1, -1.0 / 3.0, 2e-17),
            Point3::new(1.0, 2.0, 3.0),
        ])
        .unwrap();
        write_points(&cloud, &path).unwrap();
        assert_eq!(read_points(&path).unwrap(), cloud);
    }

    #[test]
    fn comments_and_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.xyz");
        std::fs::write(&path, "# header\n1 2 3\n\n4 5 6\n").unwrap();
        assert_eq!(read_points(&path).unwrap().len(), 2);
        std::fs::write(&path, "1 2\n").unwrap();
        assert!(matches!(read_points(&path), Err(Error::Parse(_))));
        let missing = dir.path().join("nope.xyz");
        let err = read_points(&missing).unwrap_err();
        assert!(err.to_string().contains("nope.xyz"));
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.labels");
        write_labels(&[0, 3, 1], &path).unwrap();
        assert_eq!(read_labels(&path).unwrap(), vec![0, 3, 1]);
    }
}
