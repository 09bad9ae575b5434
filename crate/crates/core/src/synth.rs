//! Random-weight PointNet models and synthetic point clouds for tests,
//! benchmarks and the self-test.
//!
//! Layer layouts follow the usual PointNet tables: a per-point block of
//! `linear → batch norm → relu` stages, a global pool, and a head. Widths are
//! configurable so the models stay small. All weights are rounded to `f32`
//! so models survive a save/load round trip bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{BatchNorm, Dense, LayerKind, LayerSpec, Model, Task, INPUT_ID};
use crate::transforms::{Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Max,
    Avg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub point_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub num_classes: usize,
    pub pool: Pool,
    pub batchnorm: bool,
    /// Expected number of points, `0` for any.
    pub num_points: usize,
}

impl ClassifierConfig {
    /// Full-size classification layout: 64/64/64/128/1024, then 512/256.
    pub fn full(num_classes: usize) -> Self {
        ClassifierConfig {
            point_widths: vec![64, 64, 64, 128, 1024],
            head_widths: vec![512, 256],
            num_classes,
            pool: Pool::Max,
            batchnorm: true,
            num_points: 0,
        }
    }

    /// The full layout with every width divided by `divisor` (at least 2).
    pub fn scaled(num_classes: usize, divisor: usize) -> Self {
        let mut c = Self::full(num_classes);
        for w in c.point_widths.iter_mut().chain(c.head_widths.iter_mut()) {
            *w = (*w / divisor).max(2);
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterConfig {
    /// Widths of the four per-point stages; the last has no activation.
    pub point_widths: [usize; 4],
    pub head_widths: [usize; 2],
    pub num_parts: usize,
    pub batchnorm: bool,
}

impl SegmenterConfig {
    /// Full-size layout: 64/128/256/128, pool, repeat, concatenate, 256/128.
    pub fn full(num_parts: usize) -> Self {
        SegmenterConfig {
            point_widths: [64, 128, 256, 128],
            head_widths: [256, 128],
            num_parts,
            batchnorm: true,
        }
    }

    pub fn scaled(num_parts: usize, divisor: usize) -> Self {
        let mut c = Self::full(num_parts);
        for w in c.point_widths.iter_mut().chain(c.head_widths.iter_mut()) {
            *w = (*w / divisor).max(2);
        }
        c
    }
}

struct Builder {
    rng: ChaCha8Rng,
    layers: Vec<LayerSpec>,
    next_id: u32,
    batchnorm: bool,
}

fn f32_round(v: f64) -> f64 {
    f64::from(v as f32)
}

impl Builder {
    fn new(seed: u64, batchnorm: bool) -> Self {
        Builder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            layers: Vec::new(),
            next_id: 1,
            batchnorm,
        }
    }

    fn push(&mut self, kind: LayerKind, inputs: Vec<u32>) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        self.layers.push(LayerSpec::new(id, kind, inputs));
        id
    }

    fn dense(&mut self, input: usize, output: usize) -> Dense {
        let scale = (6.0 / input as f64).sqrt();
        let weight = (0..input * output)
            .map(|_| f32_round(self.rng.gen_range(-scale..scale)))
            .collect();
        let bias = (0..output).map(|_| f32_round(self.rng.gen_range(-0.1..0.1))).collect();
        Dense::new(input, output, weight, bias)
    }

    fn batchnorm(&mut self, features: usize) -> BatchNorm {
        let mut draw = |lo: f64, hi: f64| -> Vec<f64> {
            (0..features).map(|_| f32_round(self.rng.gen_range(lo..hi))).collect()
        };
        BatchNorm {
            gamma: draw(0.8, 1.2),
            beta: draw(-0.1, 0.1),
            mean: draw(-0.1, 0.1),
            var: draw(0.5, 1.5),
            eps: 1e-5,
        }
    }

    /// `linear [→ batch norm] [→ relu]`; returns the id of the last layer.
    fn stage(&mut self, input: u32, in_w: usize, out_w: usize, per_point: bool, relu: bool) -> u32 {
        let d = self.dense(in_w, out_w);
        let kind = if per_point {
            LayerKind::PointwiseLinear(d)
        } else {
            LayerKind::Linear(d)
        };
        let mut last = self.push(kind, vec![input]);
        if self.batchnorm {
            let bn = self.batchnorm(out_w);
            last = self.push(LayerKind::BatchNorm(bn), vec![last]);
        }
        if relu {
            last = self.push(LayerKind::ReLU, vec![last]);
        }
        last
    }
}

/// A random-weight classifier.
pub fn classifier(config: &ClassifierConfig, seed: u64) -> Model {
    let mut b = Builder::new(seed, config.batchnorm);
    let mut last = INPUT_ID;
    let mut width = 3;
    for &w in &config.point_widths {
        last = b.stage(last, width, w, true, true);
        width = w;
    }
    let pool = match config.pool {
        Pool::Max => LayerKind::GlobalMaxPool,
        Pool::Avg => LayerKind::GlobalAvgPool,
    };
    last = b.push(pool, vec![last]);
    for &w in &config.head_widths {
        last = b.stage(last, width, w, false, true);
        width = w;
    }
    let d = b.dense(width, config.num_classes);
    last = b.push(LayerKind::Linear(d), vec![last]);
    b.push(LayerKind::Output, vec![last]);
    Model::new(
        b.layers,
        Task::Classification {
            num_classes: config.num_classes,
        },
        config.num_points,
    )
    .expect("generated classifier is well formed")
}

/// A random-weight part-segmentation model: local features of the first
/// three stages are concatenated with the repeated global feature.
pub fn segmenter(config: &SegmenterConfig, seed: u64) -> Model {
    let mut b = Builder::new(seed, config.batchnorm);
    let [w1, w2, w3, w4] = config.point_widths;
    let s1 = b.stage(INPUT_ID, 3, w1, true, true);
    let s2 = b.stage(s1, w1, w2, true, true);
    let s3 = b.stage(s2, w2, w3, true, true);
    let s4 = b.stage(s3, w3, w4, true, false);
    let pool = b.push(LayerKind::GlobalMaxPool, vec![s4]);
    let repeat = b.push(LayerKind::Repeat, vec![pool]);
    let concat = b.push(LayerKind::Concatenate, vec![s1, s2, s3, repeat]);
    let mut width = w1 + w2 + w3 + w4;
    let mut last = concat;
    for &w in &config.head_widths {
        last = b.stage(last, width, w, true, true);
        width = w;
    }
    let d = b.dense(width, config.num_parts);
    last = b.push(LayerKind::PointwiseLinear(d), vec![last]);
    b.push(LayerKind::Output, vec![last]);
    Model::new(
        b.layers,
        Task::Segmentation {
            num_parts: config.num_parts,
        },
        0,
    )
    .expect("generated segmenter is well formed")
}

/// Two-class model on single-point clouds: class 1 iff `y > threshold`.
/// Rotating `(1, 0, 0)` about z past `asin(threshold)` flips its prediction,
/// which makes it a known counterexample for certification.
pub fn flip_model(threshold: f64) -> Model {
    let dense = Dense::new(3, 2, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0], vec![threshold, 0.0]);
    let layers = vec![
        LayerSpec::new(1, LayerKind::PointwiseLinear(dense), vec![INPUT_ID]),
        LayerSpec::new(2, LayerKind::GlobalMaxPool, vec![1]),
        LayerSpec::new(3, LayerKind::Output, vec![2]),
    ];
    Model::new(layers, Task::Classification { num_classes: 2 }, 1).expect("flip model is well formed")
}

/// The single point `(1, 0, 0)` used with [`flip_model`].
pub fn flip_cloud() -> PointCloud {
    PointCloud::new(vec![Point3::new(1.0, 0.0, 0.0)]).expect("finite point")
}

/// Synthetic object shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solid {
    Sphere,
    Cube,
    Pyramid,
}

impl Solid {
    pub const ALL: [Solid; 3] = [Solid::Sphere, Solid::Cube, Solid::Pyramid];
}

/// `n` points on the surface of a shape, centred and scaled into the unit
/// sphere.
pub fn shape_cloud(shape: Solid, n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<[f64; 3]> = (0..n.max(1))
        .map(|_| match shape {
            Solid::Sphere => {
                let z: f64 = rng.gen_range(-1.0..1.0);
                let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).sqrt();
                [r * phi.cos(), r * phi.sin(), z]
            }
            Solid::Cube => {
                let face = rng.gen_range(0..6);
                let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let s = if face % 2 == 0 { 1.0 } else { -1.0 };
                match face / 2 {
                    0 => [s, a, b],
                    1 => [a, s, b],
                    _ => [a, b, s],
                }
            }
            Solid::Pyramid => {
                // Square base at z = −1, apex at z = 1.
                let t: f64 = rng.gen::<f64>().sqrt();
                let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                [a * t, b * t, 1.0 - 2.0 * t]
            }
        })
        .collect();
    normalize(&mut pts);
    PointCloud::new(pts.into_iter().map(Point3::from_array).collect()).expect("finite points")
}

/// Centres the points and scales them into the unit sphere.
pub fn normalize(points: &mut [[f64; 3]]) {
    let n = points.len() as f64;
    let centre: [f64; 3] = std::array::from_fn(|c| points.iter().map(|p| p[c]).sum::<f64>() / n);
    for p in points.iter_mut() {
        for c in 0..3 {
            p[c] -= centre[c];
        }
    }
    let radius = points
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0, f64::max);
    if radius > 0.0 {
        for p in points.iter_mut() {
            for v in p.iter_mut() {
                *v /= radius;
            }
        }
    }
}

/// A random cloud: one of the synthetic shapes chosen by `seed`.
pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    shape_cloud(Solid::ALL[(seed % 3) as usize], n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_classifier_layout() {
        let m = classifier(&ClassifierConfig::scaled(3, 8), 1);
        // 5 stages × 3 + pool + 2 stages × 3 + final linear + output.
        assert_eq!(m.layers().len(), 15 + 1 + 6 + 2);
        let logits = m.forward(&random_cloud(16, 2)).unwrap();
        assert_eq!(logits.data.len(), 3);
    }

    #[test]
    fn segmenter_concatenates_four_inputs() {
        let m = segmenter(&SegmenterConfig::scaled(4, 8), 1);
        let concat = m.layers().iter().find(|l| l.kind == LayerKind::Concatenate).unwrap();
        assert_eq!(concat.inputs.len(), 4);
        let out = m.forward(&random_cloud(10, 3)).unwrap();
        assert_eq!((out.rows, out.cols), (10, 4));
    }

    #[test]
    fn clouds_are_normalized() {
        for s in Solid::ALL {
            let c = shape_cloud(s, 64, 5);
            assert!((c.radius() - 1.0).abs() < 1e-12);
        }
    }
}
