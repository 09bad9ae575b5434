//! Semantic 3D transformations of point clouds.
//!
//! A transformation maps each point independently: `f(p, θ)` with a parameter
//! vector `θ ∈ R^k`. Every transformation exposes its value together with its
//! first and second partial derivatives as a [`Jet`], both at concrete
//! parameters and as interval enclosures over a [`ParamBox`].
//!
//! Transformations are looked up by name in a [`TransformRegistry`]; the
//! textual form `a*b` composes them, with `b` applied first.

mod atomic;
mod jet;
mod registry;
mod scalar;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalError};

pub use atomic::{ClosedForm, RotX, RotY, RotZ, Shear, Taper, Twist};
pub use jet::{chain, Jet};
pub use registry::{parse_transform, TransformRegistry};
pub use scalar::{Enc, Scalar};

/// A point in model space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array([x, y, z]: [f64; 3]) -> Self {
        Point3 { x, y, z }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// An ordered, non-empty list of finite points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCloud("point cloud is empty".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidCloud(format!("point {i} is not finite")));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest distance of any point from the origin.
    pub fn radius(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Flattened `x y z` coordinates, point-major.
    pub fn coordinates(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| p.to_array()).collect()
    }
}

/// Axis-aligned box `[lo, hi]` of transformation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::InvalidBox(format!(
                "lower bound has {} entries, upper bound has {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(Error::InvalidBox(format!("dimension {i} is not finite")));
            }
            if l > h {
                return Err(Error::InvalidBox(format!(
                    "dimension {i}: lower bound {l} exceeds upper bound {h}"
                )));
            }
        }
        Ok(ParamBox { lo, hi })
    }

    /// The zero-dimensional box (no parameters).
    pub fn empty() -> Self {
        ParamBox {
            lo: Vec::new(),
            hi: Vec::new(),
        }
    }

    /// `[-r, r]` in every dimension.
    pub fn symmetric(radius: &[f64]) -> Result<Self> {
        Self::new(radius.iter().map(|r| -r).collect(), radius.to_vec())
    }

    pub fn degenerate(at: Vec<f64>) -> Result<Self> {
        Self::new(at.clone(), at)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * l + 0.5 * h)
            .collect()
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| Interval::new(l, h).expect("box bounds validated"))
            .collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(t, (l, h))| l <= t && t <= h)
    }

    /// All `2^k` corners, in binary counting order (bit `i` selects `hi[i]`).
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let k = self.dim();
        (0..1usize << k)
            .map(|mask| {
                (0..k)
                    .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                    .collect()
            })
            .collect()
    }
}

/// A point transformation `f(p, θ)` that is twice continuously differentiable
/// in both arguments.
pub trait Transform: Send + Sync + fmt::Debug {
    /// Canonical textual form (parses back to an equivalent transform).
    fn name(&self) -> String;

    fn param_count(&self) -> usize;

    /// Full jet at a concrete point and parameter vector. `theta.len()` must
    /// equal [`param_count`](Self::param_count).
    fn jet(&self, p: [f64; 3], theta: &[f64]) -> Jet<f64>;

    /// Interval enclosure of the jet over all points in `p` and parameters
    /// in `theta`.
    fn jet_enclosure(
        &self,
        p: [Interval; 3],
        theta: &[Interval],
    ) -> std::result::Result<Jet<Interval>, IntervalError>;

    /// Transformed point only.
    fn map_point(&self, p: [f64; 3], theta: &[f64]) -> [f64; 3] {
        self.jet(p, theta).value
    }
}

impl<T: ClosedForm> Transform for T {
    fn name(&self) -> String {
        T::NAME.to_string()
    }

    fn param_count(&self) -> usize {
        T::PARAMS
    }

    fn jet(&self, p: [f64; 3], theta: &[f64]) -> Jet<f64> {
        T::jet(p, theta)
    }

    fn jet_enclosure(
        &self,
        p: [Interval; 3],
        theta: &[Interval],
    ) -> std::result::Result<Jet<Interval>, IntervalError> {
        let theta: Vec<Enc> = theta.iter().copied().map(Enc::of).collect();
        T::jet(p.map(Enc::of), &theta).into_interval()
    }
}

/// Composition of transformations, applied innermost (first element) first.
/// The parameter vector is the concatenation of the parts' parameters in the
/// same order.
#[derive(Debug, Clone)]
pub struct Compose {
    parts: Vec<Arc<dyn Transform>>,
    label: Option<String>,
}

impl Compose {
    pub fn new(parts: Vec<Arc<dyn Transform>>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("empty composition".into()));
        }
        Ok(Compose { parts, label: None })
    }

    /// A composition that reports `label` as its name.
    pub fn named(label: &str, parts: Vec<Arc<dyn Transform>>) -> Result<Self> {
        let mut c = Self::new(parts)?;
        c.label = Some(label.to_string());
        Ok(c)
    }

    pub fn parts(&self) -> &[Arc<dyn Transform>] {
        &self.parts
    }

    fn param_ranges(&self) -> impl Iterator<Item = (&Arc<dyn Transform>, std::ops::Range<usize>)> {
        let mut start = 0;
        self.parts.iter().map(move |part| {
            let range = start..start + part.param_count();
            start = range.end;
            (part, range)
        })
    }
}

impl Transform for Compose {
    fn name(&self) -> String {
        if let Some(label) = &self.label {
            return label.clone();
        }
        let names: Vec<String> = self.parts.iter().rev().map(|p| p.name()).collect();
        names.join("*")
    }

    fn param_count(&self) -> usize {
        self.parts.iter().map(|p| p.param_count()).sum()
    }

    fn jet(&self, p: [f64; 3], theta: &[f64]) -> Jet<f64> {
        let mut acc: Option<Jet<f64>> = None;
        for (part, range) in self.param_ranges() {
            acc = Some(match acc {
                None => part.jet(p, &theta[range]),
                Some(inner) => {
                    let outer = part.jet(inner.value, &theta[range]);
                    chain(&inner, &outer)
                }
            });
        }
        acc.expect("composition is non-empty")
    }

    fn jet_enclosure(
        &self,
        p: [Interval; 3],
        theta: &[Interval],
    ) -> std::result::Result<Jet<Interval>, IntervalError> {
        let mut acc: Option<Jet<Enc>> = None;
        for (part, range) in self.param_ranges() {
            let next = match acc {
                None => part.jet_enclosure(p, &theta[range])?.map(|v| Enc::of(*v)),
                Some(inner) => {
                    let at = [inner.value[0].get()?, inner.value[1].get()?, inner.value[2].get()?];
                    let outer = part.jet_enclosure(at, &theta[range])?.map(|v| Enc::of(*v));
                    chain(&inner, &outer)
                }
            };
            acc = Some(next);
        }
        acc.expect("composition is non-empty").into_interval()
    }

    fn map_point(&self, p: [f64; 3], theta: &[f64]) -> [f64; 3] {
        self.param_ranges()
            .fold(p, |q, (part, range)| part.map_point(q, &theta[range]))
    }
}

/// Checked, user-facing operations on any transformation.
pub trait TransformExt: Transform {
    fn check_params(&self, theta: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if theta.len() != expected {
            return Err(Error::ParamCount {
                expected,
                actual: theta.len(),
            });
        }
        Ok(())
    }

    fn apply(&self, p: Point3, theta: &[f64]) -> Result<Point3> {
        self.check_params(theta)?;
        Ok(Point3::from_array(self.map_point(p.to_array(), theta)))
    }

    fn apply_cloud(&self, cloud: &PointCloud, theta: &[f64]) -> Result<PointCloud> {
        self.check_params(theta)?;
        let points = cloud
            .points()
            .iter()
            .map(|p| Point3::from_array(self.map_point(p.to_array(), theta)))
            .collect();
        PointCloud::new(points)
    }

    /// `∂f/∂p` as a 3×3 matrix, `[output][input]`.
    fn jacobian_point(&self, p: Point3, theta: &[f64]) -> Result<[[f64; 3]; 3]> {
        self.check_params(theta)?;
        Ok(self.jet(p.to_array(), theta).d_point)
    }

    /// `∂f/∂θ` as three rows of length `k`.
    fn jacobian_params(&self, p: Point3, theta: &[f64]) -> Result<[Vec<f64>; 3]> {
        self.check_params(theta)?;
        let jet = self.jet(p.to_array(), theta);
        let k = self.param_count();
        Ok(std::array::from_fn(|c| (0..k).map(|a| jet.d_param(c, a)).collect()))
    }

    /// Interval enclosure of `∂²f_c/∂θ_a∂θ_b` over the box, one `k×k` matrix
    /// per output coordinate.
    fn hessian_params_interval(&self, p: Point3, params: &ParamBox) -> Result<[Vec<Vec<Interval>>; 3]> {
        if params.dim() != self.param_count() {
            return Err(Error::ParamCount {
                expected: self.param_count(),
                actual: params.dim(),
            });
        }
        let point = p.to_array().map(|v| Interval::point(v).expect("finite point"));
        let jet = self.jet_enclosure(point, &params.intervals())?;
        let k = self.param_count();
        Ok(std::array::from_fn(|c| {
            (0..k)
                .map(|a| (0..k).map(|b| jet.d_param_param(c, a, b)).collect())
                .collect()
        }))
    }
}

impl<T: Transform + ?Sized> TransformExt for T {}
