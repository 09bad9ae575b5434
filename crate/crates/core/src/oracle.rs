//! Sampling oracles for the soundness of transform bounds and network bounds,
//! and a random-search attack for counterexamples.
//!
//! Parameter samples are a randomly shifted Halton sequence plus every corner
//! of the box (for up to five parameters). All sampling is seeded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{argmax, Model};
use crate::taylor::LinearBounds;
use crate::transforms::{ParamBox, PointCloud, Transform, TransformExt};
use crate::verifier::Propagation;

/// Absolute tolerance before a sample counts as a violation.
pub const VIOLATION_TOLERANCE: f64 = 1e-9;

/// Default seed for every oracle.
pub const DEFAULT_SEED: u64 = 0x5eed;

const MAX_CORNER_DIM: usize = 5;

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SoundnessReport {
    /// Concrete inputs evaluated.
    pub samples: usize,
    /// Individual bound checks performed.
    pub checks: usize,
    pub violations: usize,
    /// Largest amount by which a bound was exceeded (0 if none).
    pub worst: f64,
    /// Largest observed distance between a value and the nearer bound.
    pub max_slack: f64,
}

impl SoundnessReport {
    fn empty() -> Self {
        SoundnessReport {
            samples: 0,
            checks: 0,
            violations: 0,
            worst: 0.0,
            max_slack: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Records `lo <= value <= hi`.
    fn check(&mut self, lo: f64, value: f64, hi: f64) {
        self.checks += 1;
        let excess = (lo - value).max(value - hi);
        if excess > VIOLATION_TOLERANCE {
            self.violations += 1;
        }
        self.worst = self.worst.max(excess.max(0.0));
        self.max_slack = self.max_slack.max((value - lo).min(hi - value).max(0.0));
    }

    /// Combines two reports.
    pub fn merge(self, other: Self) -> Self {
        SoundnessReport {
            samples: self.samples + other.samples,
            checks: self.checks + other.checks,
            violations: self.violations + other.violations,
            worst: self.worst.max(other.worst),
            max_slack: self.max_slack.max(other.max_slack),
        }
    }
}

/// `index`-th element of the van der Corput sequence in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// `count` low-discrepancy points in the box (randomly shifted per
/// dimension), preceded by all corners when the box has at most five
/// dimensions.
pub fn parameter_samples(params: &ParamBox, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let k = params.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..k).map(|_| rng.gen()).collect();
    let mut out = if k <= MAX_CORNER_DIM { params.corners() } else { Vec::new() };
    out.extend((1..=count as u64).map(|i| {
        (0..k)
            .map(|a| {
                let u = (halton(i, PRIMES[a % PRIMES.len()]) + shift[a]).fract();
                let (l, h) = (params.lo()[a], params.hi()[a]);
                (l + u * (h - l)).clamp(l, h)
            })
            .collect()
    }));
    out
}

/// Checks `bounds` against exact transformed clouds.
pub fn check_transform_bounds(
    transform: &dyn Transform,
    cloud: &PointCloud,
    params: &ParamBox,
    bounds: &LinearBounds,
    samples: usize,
    seed: u64,
) -> Result<SoundnessReport> {
    if bounds.num_points() != cloud.len() || bounds.param_count() != params.dim() {
        return Err(Error::InvalidArgument("bounds do not match the cloud and box".into()));
    }
    let thetas = parameter_samples(params, samples, seed);
    thetas
        .par_iter()
        .map(|theta| {
            let moved = transform.apply_cloud(cloud, theta)?;
            let mut r = SoundnessReport::empty();
            r.samples = 1;
            for (i, p) in moved.points().iter().enumerate() {
                for (c, v) in p.to_array().into_iter().enumerate() {
                    r.check(bounds.lower(i, c).eval(theta), v, bounds.upper(i, c).eval(theta));
                }
            }
            Ok(r)
        })
        .try_reduce(SoundnessReport::empty, |a, b| Ok(a.merge(b)))
}

/// Source of concrete inputs consistent with an input abstraction.
#[derive(Debug, Clone, Copy)]
pub enum InputSampler<'a> {
    Transform {
        transform: &'a dyn Transform,
        cloud: &'a PointCloud,
        params: &'a ParamBox,
    },
    Linf {
        cloud: &'a PointCloud,
        eps: f64,
    },
}

impl InputSampler<'_> {
    pub fn cloud(&self) -> &PointCloud {
        match self {
            InputSampler::Transform { cloud, .. } | InputSampler::Linf { cloud, .. } => cloud,
        }
    }

    /// Flattened coordinates of `count` inputs (plus box corners for
    /// transforms). ℓ∞ samples alternate between random vertices of the
    /// ε-box and uniform interior points.
    pub fn coordinates(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        match *self {
            InputSampler::Transform {
                transform,
                cloud,
                params,
            } => parameter_samples(params, count, seed)
                .iter()
                .map(|theta| Ok(transform.apply_cloud(cloud, theta)?.coordinates()))
                .collect(),
            InputSampler::Linf { cloud, eps } => {
                let base = cloud.coordinates();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok((0..count)
                    .map(|s| {
                        base.iter()
                            .map(|c| {
                                let d = if s % 2 == 0 {
                                    if rng.gen::<bool>() {
                                        eps
                                    } else {
                                        -eps
                                    }
                                } else {
                                    rng.gen_range(-1.0..=1.0) * eps
                                };
                                c + d
                            })
                            .collect()
                    })
                    .collect())
            }
        }
    }
}

/// Checks that every neuron of every layer stays within its propagated
/// concrete bounds on sampled inputs.
pub fn check_network_bounds(
    prop: &Propagation<'_>,
    sampler: &InputSampler<'_>,
    samples: usize,
    seed: u64,
) -> Result<SoundnessReport> {
    let model = prop.model();
    let n = sampler.cloud().len();
    let inputs = sampler.coordinates(samples, seed)?;
    let input_bounds = prop.input_bounds();
    inputs
        .par_iter()
        .map(|coords| {
            let acts = model.forward_coordinates(n, coords)?;
            let mut r = SoundnessReport::empty();
            r.samples = 1;
            for (v, (lo, hi)) in coords.iter().zip(&input_bounds) {
                r.check(*lo, *v, *hi);
            }
            for (pos, act) in acts.iter().enumerate() {
                let (lo, hi) = prop.bounds(pos);
                for ((v, l), h) in act.data.iter().zip(lo).zip(hi) {
                    r.check(*l, *v, *h);
                }
            }
            Ok(r)
        })
        .try_reduce(SoundnessReport::empty, |a, b| Ok(a.merge(b)))
}

/// Outcome of a random search for a misclassifying input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    pub samples: usize,
    /// Whether some sample changed the argmax away from the target.
    pub flipped: bool,
    /// Smallest observed `logit_target − max other logit`.
    pub worst_margin: f64,
    /// Index of the sample achieving `worst_margin`.
    pub worst_sample: usize,
}

fn margin_of(logits: &[f64], target: usize) -> f64 {
    let other = logits
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    logits[target] - other
}

/// Searches sampled inputs for one not classified as `target`.
pub fn empirical_attack(
    model: &Model,
    sampler: &InputSampler<'_>,
    target: usize,
    samples: usize,
    seed: u64,
) -> Result<AttackResult> {
    let n = sampler.cloud().len();
    let inputs = sampler.coordinates(samples, seed)?;
    let results = inputs
        .par_iter()
        .map(|coords| {
            let logits = model.forward_coordinates(n, coords)?.pop().expect("output layer").data;
            Ok((margin_of(&logits, target), argmax(&logits) != target))
        })
        .collect::<Result<Vec<_>>>()?;
    let (worst_sample, worst_margin) = results
        .iter()
        .enumerate()
        .map(|(i, (m, _))| (i, *m))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    Ok(AttackResult {
        samples: results.len(),
        flipped: results.iter().any(|(_, f)| *f),
        worst_margin,
        worst_sample,
    })
}

/// For each `(point, label)`, whether some sampled input changes that
/// point's predicted part.
pub fn segmentation_attack(
    model: &Model,
    sampler: &InputSampler<'_>,
    targets: &[(usize, usize)],
    samples: usize,
    seed: u64,
) -> Result<Vec<bool>> {
    let n = sampler.cloud().len();
    let inputs = sampler.coordinates(samples, seed)?;
    let flips = inputs
        .par_iter()
        .map(|coords| {
            let out = model.forward_coordinates(n, coords)?.pop().expect("output layer");
            Ok(targets
                .iter()
                .map(|&(p, label)| argmax(out.row(p)) != label)
                .collect::<Vec<bool>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..targets.len()).map(|t| flips.iter().any(|f| f[t])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_prefix() {
        let v: Vec<f64> = (1..=4).map(|i| halton(i, 2)).collect();
        assert_eq!(v, vec![0.5, 0.25, 0.75, 0.125]);
        assert!((halton(1, 3) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn samples_cover_corners_and_stay_inside() {
        let b = ParamBox::new(vec![-1.0, 0.0], vec![1.0, 0.5]).unwrap();
        let s = parameter_samples(&b, 100, 3);
        assert_eq!(s.len(), 104);
        assert!(s.iter().all(|t| b.contains(t)));
        assert_eq!(s, parameter_samples(&b, 100, 3));
        assert_ne!(s, parameter_samples(&b, 100, 4));
    }

    #[test]
    fn report_counts_violations() {
        let mut r = SoundnessReport::empty();
        r.check(0.0, 0.5, 1.0);
        r.check(0.0, 1.1, 1.0);
        assert_eq!((r.checks, r.violations), (2, 1));
        assert!((r.worst - 0.1).abs() < 1e-12);
        assert_eq!(r.max_slack, 0.5);
    }
}
