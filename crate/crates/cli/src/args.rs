//! Command-line arguments.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pointcert", version, about = "Certify point-cloud networks against 3D transformations")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "POINTCERT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify a classification or segmentation model on one cloud.
    Certify(CertifyArgs),
    /// Dump the linear bounds of a transformed cloud.
    Relax(RelaxArgs),
    /// Time bound computation on synthetic clouds of several sizes.
    Bench(BenchArgs),
    /// Run the sampling oracles end to end.
    Selftest(SelftestArgs),
    /// Print a model summary.
    Inspect(InspectArgs),
}

/// `min..max`, each side a number with an optional `deg` suffix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

/// A number with an optional `deg` suffix, in radians or plain units.
pub fn parse_value(text: &str) -> Result<f64, String> {
    let text = text.trim();
    let (number, scale) = match text.strip_suffix("deg") {
        Some(n) => (n.trim_end(), std::f64::consts::PI / 180.0),
        None => (text, 1.0),
    };
    let v: f64 = number.parse().map_err(|_| format!("`{text}` is not a number"))?;
    let v = v * scale;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{text}` is not finite"))
    }
}

impl FromStr for ParamRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once("..").ok_or_else(|| format!("expected `min..max`, got `{s}`"))?;
        let (lo, hi) = (parse_value(a)?, parse_value(b)?);
        if lo > hi {
            return Err(format!("empty range `{s}`"));
        }
        Ok(ParamRange { lo, hi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Text,
    Json,
}

/// A transformation with its parameter box.
#[derive(Debug, Args, Clone)]
pub struct TransformArgs {
    /// Transformation, e.g. `rotz` or `twist*rotz` (right factor first).
    #[arg(long)]
    pub transform: Option<String>,

    /// Parameter range, once per parameter, e.g. `-1deg..1deg`.
    #[arg(long = "range", requires = "transform", allow_hyphen_values = true, value_name = "MIN..MAX")]
    pub ranges: Vec<ParamRange>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["transform", "epsilon"])))]
pub struct CertifyArgs {
    /// Model file (`.pcmodel.json`).
    #[arg(long)]
    pub model: PathBuf,

    /// Point cloud (`x y z` per line).
    #[arg(long)]
    pub points: PathBuf,

    /// Per-point part labels (segmentation); defaults to the predictions.
    #[arg(long)]
    pub labels: Option<PathBuf>,

    /// Expected class (classification); defaults to the prediction.
    #[arg(long)]
    pub label: Option<usize>,

    #[command(flatten)]
    pub transform: TransformArgs,

    /// Split granularity, once per parameter or once for all.
    #[arg(long = "split", requires = "transform", allow_hyphen_values = true, value_parser = parse_value)]
    pub split: Vec<f64>,

    /// ℓ∞ radius per coordinate instead of a transformation.
    #[arg(long, value_parser = parse_value)]
    pub epsilon: Option<f64>,

    /// Max-pool relaxation: interval, baseline or improved.
    #[arg(long, default_value = "improved")]
    pub maxpool: String,

    /// Inputs per max-pool group.
    #[arg(long, default_value_t = pointcert::maxpool::DEFAULT_GROUP_SIZE)]
    pub maxpool_group_size: usize,

    /// Also search for a counterexample with this many samples.
    #[arg(long, value_name = "SAMPLES")]
    pub attack: Option<usize>,

    /// Seed for the counterexample search.
    #[arg(long, default_value_t = pointcert::oracle::DEFAULT_SEED)]
    pub seed: u64,

    /// Write the JSON report here.
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Format of the summary printed to stdout.
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct RelaxArgs {
    /// Point cloud to bound.
    #[arg(long)]
    pub points: PathBuf,

    #[command(flatten)]
    pub transform: TransformArgs,

    /// Write the dump here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Cloud sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [100_000usize, 200_000, 300_000])]
    pub sizes: Vec<usize>,

    /// Transformation to time.
    #[arg(long, default_value = "rotz")]
    pub transform: String,

    /// Parameter range per parameter (default `-3deg..3deg` for each).
    #[arg(long = "range", allow_hyphen_values = true, value_name = "MIN..MAX")]
    pub ranges: Vec<ParamRange>,

    /// Timed runs per size; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,

    #[arg(long, default_value_t = pointcert::oracle::DEFAULT_SEED)]
    pub seed: u64,

    #[arg(long)]
    pub output: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Lower every transform upper bound by 0.1.
    TransformBounds,
    /// Shift the network input enclosure by 0.1.
    NetworkBounds,
    /// Accept a certificate for a model with a known counterexample.
    FlipCertificate,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = pointcert::oracle::DEFAULT_SEED)]
    pub seed: u64,

    /// Samples per oracle check.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,

    /// Corrupt one stage on purpose; the run must then fail.
    #[arg(long, value_enum)]
    pub inject_fault: Option<Fault>,

    /// Only re-validate a bound dump written by `relax`.
    #[arg(long, value_name = "FILE")]
    pub check_bounds: Option<PathBuf>,

    /// Model for the network suites (a synthetic one by default).
    #[arg(long, requires = "points")]
    pub model: Option<PathBuf>,

    /// Cloud for `--model`.
    #[arg(long, requires = "model")]
    pub points: Option<PathBuf>,

    #[arg(long)]
    pub output: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Reference logits to compare against.
    #[arg(long)]
    pub reference: Option<PathBuf>,

    /// Largest accepted difference to the reference logits.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,

    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        let r: ParamRange = "-1deg..1deg".parse().unwrap();
        assert!((r.hi - std::f64::consts::PI / 180.0).abs() < 1e-15);
        assert_eq!(r.lo, -r.hi);
        assert_eq!("0..0".parse::<ParamRange>().unwrap(), ParamRange { lo: 0.0, hi: 0.0 });
        assert_eq!("-0.5..0.25".parse::<ParamRange>().unwrap(), ParamRange { lo: -0.5, hi: 0.25 });
        assert!("1..0".parse::<ParamRange>().is_err());
        assert!("1".parse::<ParamRange>().is_err());
        assert!("a..b".parse::<ParamRange>().is_err());
        assert!("0..infdeg".parse::<ParamRange>().is_err());
    }

    #[test]
    fn cli_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
