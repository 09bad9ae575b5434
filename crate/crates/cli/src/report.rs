//! Versioned JSON documents written by the commands.

use std::path::PathBuf;

use pointcert::oracle::{AttackResult, SoundnessReport};
use pointcert::verifier::{CellResult, LayerGap, Outcome, PointVerdict};
use serde::{Deserialize, Serialize};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub model: PathBuf,
    pub points: PathBuf,
    pub labels: Option<PathBuf>,
    pub transform: Option<String>,
    /// `[lo, hi]` per parameter, radians for angles.
    pub ranges: Vec<[f64; 2]>,
    pub split: Vec<f64>,
    pub epsilon: Option<f64>,
    pub maxpool: String,
    pub maxpool_group_size: usize,
    pub threads: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct ClassMargin {
    pub class: usize,
    /// Lower bound of `logit_target − logit_class`.
    pub margin: f64,
    /// Same, from independent interval bounds on the two logits.
    pub naive_margin: f64,
}

#[derive(Debug, Serialize)]
pub struct CellReport {
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub margin: f64,
    pub certified: bool,
    pub margins: Vec<ClassMargin>,
}

impl From<&CellResult> for CellReport {
    fn from(c: &CellResult) -> Self {
        CellReport {
            lo: c.params.as_ref().map(|p| p.lo().to_vec()),
            hi: c.params.as_ref().map(|p| p.hi().to_vec()),
            margin: c.margin,
            certified: c.certified,
            margins: c
                .margins
                .iter()
                .zip(&c.naive_margins)
                .map(|((class, m), (_, n))| ClassMargin {
                    class: *class,
                    margin: *m,
                    naive_margin: *n,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ClassificationResult {
    pub target: usize,
    pub predicted: usize,
    pub margin: Option<f64>,
    pub cells: Vec<CellReport>,
}

#[derive(Debug, Serialize)]
pub struct SegmentationResult {
    pub correct: usize,
    pub certified: usize,
    pub certified_ratio: f64,
    pub cells: usize,
    pub points: Vec<PointVerdict>,
    /// Certified points whose prediction a sampled input changed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack_flips: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub load_seconds: f64,
    pub certify_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct CertifyReport {
    pub version: u32,
    pub command: &'static str,
    pub config: ConfigEcho,
    pub task: &'static str,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<SegmentationResult>,
    pub layer_gaps: Vec<LayerGap>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackResult>,
    pub timings: Timings,
}

/// One row of a bound dump: `w_lower·θ + b_lower <= coordinate <= w_upper·θ + b_upper`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxRow {
    pub point: usize,
    /// 0, 1, 2 for x, y, z.
    pub coord: usize,
    pub w_lower: Vec<f64>,
    pub b_lower: f64,
    pub w_upper: Vec<f64>,
    pub b_upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxDump {
    pub version: u32,
    pub transform: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<[f64; 3]>,
    pub rows: Vec<RelaxRow>,
}

#[derive(Debug, Serialize)]
pub struct BenchRow {
    pub points: usize,
    pub seconds: f64,
    pub points_per_second: f64,
    /// Hash of the bit patterns of every bound; equal across runs with the
    /// same seed.
    pub checksum: String,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub version: u32,
    pub command: &'static str,
    pub transform: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub seed: u64,
    pub repeats: usize,
    pub rows: Vec<BenchRow>,
    /// Time of the largest size over time of the smallest.
    pub ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub report: SoundnessReport,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct SelftestReport {
    pub version: u32,
    pub command: &'static str,
    pub seed: u64,
    pub samples: usize,
    pub fault: Option<String>,
    pub suites: Vec<SuiteResult>,
    pub violations: usize,
    pub passed: bool,
}
