//! Affine relaxations of transformed coordinates in the parameters.
//!
//! For a box `[l, u]` with midpoint `t`, every coordinate of `f(p, θ)` is
//! written as its first-order expansion at `t` plus a Lagrange remainder
//!
//! ```text
//! R(θ) = ½ Σ_a Σ_b (θ_a − t_a)(θ_b − t_b) ∂²f/∂θ_a∂θ_b(ξ),   ξ ∈ [l, u]
//! ```
//!
//! which is enclosed with interval arithmetic. The lower and upper bounds
//! share the expansion's slope and differ only in their intercepts.

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::transforms::{ParamBox, Point3, PointCloud, Transform};

/// Per point and coordinate, `θ·w_lo + b_lo <= f(P, θ) <= θ·w_hi + b_hi` for
/// all `θ` in the box.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBounds {
    params: ParamBox,
    points: usize,
    w_lo: Vec<f64>,
    b_lo: Vec<f64>,
    w_hi: Vec<f64>,
    b_hi: Vec<f64>,
}

/// One affine function of the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine<'a> {
    pub weights: &'a [f64],
    pub bias: f64,
}

impl Affine<'_> {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.weights.iter().zip(theta).map(|(w, t)| w * t).sum::<f64>() + self.bias
    }

    /// Range of the function over a box.
    pub fn concretize(&self, params: &ParamBox) -> (f64, f64) {
        let mut lo = self.bias;
        let mut hi = self.bias;
        for ((w, l), h) in self.weights.iter().zip(params.lo()).zip(params.hi()) {
            let (a, b) = (w * l, w * h);
            lo += a.min(b);
            hi += a.max(b);
        }
        (lo, hi)
    }
}

impl LinearBounds {
    /// Bounds from raw parts. Weight vectors are point-major, then
    /// coordinate, then parameter; biases are point-major, then coordinate.
    pub fn from_parts(
        params: ParamBox,
        w_lo: Vec<f64>,
        b_lo: Vec<f64>,
        w_hi: Vec<f64>,
        b_hi: Vec<f64>,
    ) -> Result<Self> {
        let k = params.dim();
        let rows = b_lo.len();
        if !rows.is_multiple_of(3) || b_hi.len() != rows || w_lo.len() != rows * k || w_hi.len() != rows * k {
            return Err(Error::InvalidArgument("inconsistent linear bound sizes".into()));
        }
        Ok(LinearBounds {
            params,
            points: rows / 3,
            w_lo,
            b_lo,
            w_hi,
            b_hi,
        })
    }

    /// Parameter-free bounds: each coordinate lies in `[lo, hi]`.
    pub fn constant(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("constant bounds are inverted".into()));
        }
        Self::from_parts(ParamBox::empty(), Vec::new(), lo, Vec::new(), hi)
    }

    pub fn params(&self) -> &ParamBox {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.dim()
    }

    pub fn num_points(&self) -> usize {
        self.points
    }

    /// Number of bounded coordinates (`3 × points`).
    pub fn len(&self) -> usize {
        self.b_lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b_lo.is_empty()
    }

    fn row(&self, point: usize, coord: usize) -> usize {
        debug_assert!(coord < 3 && point < self.points);
        point * 3 + coord
    }

    pub fn lower(&self, point: usize, coord: usize) -> Affine<'_> {
        self.lower_row(self.row(point, coord))
    }

    pub fn upper(&self, point: usize, coord: usize) -> Affine<'_> {
        self.upper_row(self.row(point, coord))
    }

    /// Lower bound of flattened coordinate `row` (`3 × point + coord`).
    pub fn lower_row(&self, row: usize) -> Affine<'_> {
        let k = self.param_count();
        Affine {
            weights: &self.w_lo[row * k..(row + 1) * k],
            bias: self.b_lo[row],
        }
    }

    pub fn upper_row(&self, row: usize) -> Affine<'_> {
        let k = self.param_count();
        Affine {
            weights: &self.w_hi[row * k..(row + 1) * k],
            bias: self.b_hi[row],
        }
    }

    /// Concrete range `[min lower, max upper]` of each coordinate over the box.
    pub fn concrete_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.len())
            .map(|r| {
                (
                    self.lower_row(r).concretize(&self.params).0,
                    self.upper_row(r).concretize(&self.params).1,
                )
            })
            .collect()
    }

    /// Mutable access to the intercepts, for building deliberately broken
    /// bounds in negative controls.
    pub fn biases_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.b_lo, &mut self.b_hi)
    }
}

fn deviations(params: &ParamBox, t: &[f64]) -> Result<Vec<Interval>> {
    params
        .lo()
        .iter()
        .zip(params.hi())
        .zip(t)
        .map(|((&l, &h), &t)| {
            let t = Interval::point(t)?;
            Ok(Interval::new(l, h)?.sub(t)?)
        })
        .collect()
}

/// Enclosure of the Taylor remainder of each output coordinate of `f(p, ·)`
/// expanded at the box midpoint.
pub fn remainder_enclosure(
    transform: &dyn Transform,
    p: Point3,
    params: &ParamBox,
) -> Result<[Interval; 3]> {
    check_arity(transform, params)?;
    let t = params.midpoint();
    let dev = deviations(params, &t)?;
    remainder_with(transform, p, params, &dev)
}

fn remainder_with(
    transform: &dyn Transform,
    p: Point3,
    params: &ParamBox,
    dev: &[Interval],
) -> Result<[Interval; 3]> {
    let k = params.dim();
    let point = p.to_array().map(|v| Interval::point(v).expect("finite point"));
    let jet = transform.jet_enclosure(point, &params.intervals())?;
    let mut out = [Interval::ZERO; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let mut acc = Interval::ZERO;
        for a in 0..k {
            let diag = dev[a].square()?.mul(jet.d_param_param(c, a, a))?.scale(0.5)?;
            acc = acc.add(diag)?;
            for b in a + 1..k {
                // Both (a, b) and (b, a) terms; the ½ cancels.
                let cross = dev[a].mul(dev[b])?.mul(jet.d_param_param(c, a, b))?;
                acc = acc.add(cross)?;
            }
        }
        *slot = acc;
    }
    Ok(out)
}

fn check_arity(transform: &dyn Transform, params: &ParamBox) -> Result<()> {
    if params.dim() != transform.param_count() {
        return Err(Error::ParamCount {
            expected: transform.param_count(),
            actual: params.dim(),
        });
    }
    Ok(())
}

/// Sound affine bounds on every transformed coordinate over `params`.
///
/// Cost is one point jet and one interval jet per point, independent of the
/// box width.
pub fn taylor_bounds(
    transform: &dyn Transform,
    cloud: &PointCloud,
    params: &ParamBox,
) -> Result<LinearBounds> {
    check_arity(transform, params)?;
    let k = params.dim();
    let n = cloud.len();
    let t = params.midpoint();
    let dev = deviations(params, &t)?;

    let mut w = Vec::with_capacity(n * 3 * k);
    let mut b_lo = Vec::with_capacity(n * 3);
    let mut b_hi = Vec::with_capacity(n * 3);
    for p in cloud.points() {
        let jet = transform.jet(p.to_array(), &t);
        let rem = remainder_with(transform, *p, params, &dev)?;
        for c in 0..3 {
            let mut intercept = jet.value[c];
            for a in 0..k {
                let slope = jet.d_param(c, a);
                w.push(slope);
                intercept -= slope * t[a];
            }
            b_lo.push(intercept + rem[c].lo());
            b_hi.push(intercept + rem[c].hi());
        }
    }
    LinearBounds::from_parts(params.clone(), w.clone(), b_lo, w, b_hi)
}

/// A tiling of a parameter box into equal-width cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitGrid {
    counts: Vec<usize>,
    cells: Vec<ParamBox>,
}

impl SplitGrid {
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn cells(&self) -> &[ParamBox] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Splits each dimension into `ceil(width / granularity)` equal cells.
/// Degenerate dimensions get a single cell.
pub fn split(params: &ParamBox, granularity: &[f64]) -> Result<SplitGrid> {
    if granularity.len() != params.dim() {
        return Err(Error::InvalidGranularity(format!(
            "expected {} values, got {}",
            params.dim(),
            granularity.len()
        )));
    }
    if let Some(g) = granularity.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(Error::InvalidGranularity(format!("{g} is not positive")));
    }
    let counts: Vec<usize> = params
        .lo()
        .iter()
        .zip(params.hi())
        .zip(granularity)
        .map(|((l, h), g)| {
            let width = h - l;
            if width == 0.0 {
                1
            } else {
                // Guard against 120°/2° landing a hair above 60.
                ((width / g) - 1e-9).ceil().max(1.0) as usize
            }
        })
        .collect();

    let edge = |dim: usize, i: usize| -> f64 {
        let (l, h) = (params.lo()[dim], params.hi()[dim]);
        let m = counts[dim];
        if i == 0 {
            l
        } else if i == m {
            h
        } else {
            l + (h - l) * (i as f64 / m as f64)
        }
    };

    let total: usize = counts.iter().product();
    let mut cells = Vec::with_capacity(total);
    let mut index = vec![0usize; counts.len()];
    for _ in 0..total {
        let lo = index.iter().enumerate().map(|(d, &i)| edge(d, i)).collect();
        let hi = index.iter().enumerate().map(|(d, &i)| edge(d, i + 1)).collect();
        cells.push(ParamBox::new(lo, hi)?);
        for d in (0..counts.len()).rev() {
            index[d] += 1;
            if index[d] < counts[d] {
                break;
            }
            index[d] = 0;
        }
    }
    Ok(SplitGrid { counts, cells })
}

/// Regular grid of about `samples` parameter vectors covering the box,
/// including every corner.
pub fn grid_samples(params: &ParamBox, samples: usize) -> Vec<Vec<f64>> {
    let k = params.dim();
    if k == 0 {
        return vec![Vec::new()];
    }
    let per_dim = ((samples as f64).powf(1.0 / k as f64).ceil() as usize).max(2);
    let total = per_dim.pow(k as u32);
    let mut out = Vec::with_capacity(total);
    let mut index = vec![0usize; k];
    for _ in 0..total {
        out.push(
            index
                .iter()
                .enumerate()
                .map(|(d, &i)| {
                    let (l, h) = (params.lo()[d], params.hi()[d]);
                    if i + 1 == per_dim {
                        h
                    } else {
                        l + (h - l) * (i as f64 / (per_dim - 1) as f64)
                    }
                })
                .collect(),
        );
        for d in (0..k).rev() {
            index[d] += 1;
            if index[d] < per_dim {
                break;
            }
            index[d] = 0;
        }
    }
    out
}

/// Tightest intercepts around the Taylor slopes that enclose `f` at a grid of
/// sampled parameters. A tightness yardstick only: sampling is not sound.
pub fn empirical_optimal_bounds(
    transform: &dyn Transform,
    cloud: &PointCloud,
    params: &ParamBox,
    samples: usize,
) -> Result<LinearBounds> {
    if samples < 100 {
        return Err(Error::InvalidArgument(format!(
            "at least 100 samples required, got {samples}"
        )));
    }
    let taylor = taylor_bounds(transform, cloud, params)?;
    let grid = grid_samples(params, samples);
    let k = params.dim();
    let mut b_lo = vec![f64::INFINITY; taylor.len()];
    let mut b_hi = vec![f64::NEG_INFINITY; taylor.len()];
    for theta in &grid {
        for (j, p) in cloud.points().iter().enumerate() {
            let q = transform.map_point(p.to_array(), theta);
            for c in 0..3 {
                let row = j * 3 + c;
                let slope_part: f64 = taylor.lower_row(row).weights.iter().zip(theta).map(|(w, t)| w * t).sum();
                let residual = q[c] - slope_part;
                b_lo[row] = b_lo[row].min(residual);
                b_hi[row] = b_hi[row].max(residual);
            }
        }
    }
    let w = taylor.w_lo.clone();
    debug_assert_eq!(w.len(), taylor.len() * k);
    LinearBounds::from_parts(params.clone(), w.clone(), b_lo, w, b_hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::{RotZ, Shear};

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    #[test]
    fn split_counts() {
        let b = ParamBox::new(vec![deg(-60.0)], vec![deg(60.0)]).unwrap();
        assert_eq!(split(&b, &[deg(2.0)]).unwrap().len(), 60);

        let b = ParamBox::degenerate(vec![0.0]).unwrap();
        let g = split(&b, &[0.1]).unwrap();
        assert_eq!(g.cells(), &[ParamBox::degenerate(vec![0.0]).unwrap()]);

        let b = ParamBox::symmetric(&[deg(5.0), deg(5.0)]).unwrap();
        let g = split(&b, &[deg(2.0), deg(2.0)]).unwrap();
        assert_eq!(g.counts(), &[5, 5]);
        assert_eq!(g.len(), 25);
    }

    #[test]
    fn split_rejects_bad_granularity() {
        let b = ParamBox::symmetric(&[1.0]).unwrap();
        assert!(split(&b, &[0.0]).is_err());
        assert!(split(&b, &[-1.0]).is_err());
        assert!(split(&b, &[0.1, 0.1]).is_err());
    }

    #[test]
    fn split_cells_tile_the_box() {
        let b = ParamBox::new(vec![-0.3, 1.0], vec![0.7, 1.25]).unwrap();
        let g = split(&b, &[0.3, 0.1]).unwrap();
        assert_eq!(g.counts(), &[4, 3]);
        let vol: f64 = g
            .cells()
            .iter()
            .map(|c| (c.hi()[0] - c.lo()[0]) * (c.hi()[1] - c.lo()[1]))
            .sum();
        assert!((vol - 1.0 * 0.25).abs() < 1e-12);
        assert_eq!(g.cells()[0].lo(), b.lo());
        assert_eq!(g.cells().last().unwrap().hi(), b.hi());
    }

    #[test]
    fn shear_bounds_are_exact() {
        let cloud = PointCloud::new(vec![Point3::new(0.1, -0.2, 0.9), Point3::new(0.5, 0.5, -0.4)]).unwrap();
        let b = ParamBox::symmetric(&[0.05, 0.02]).unwrap();
        let lb = taylor_bounds(&Shear, &cloud, &b).unwrap();
        for r in 0..lb.len() {
            assert_eq!(lb.lower_row(r), lb.upper_row(r));
        }
    }

    #[test]
    fn degenerate_box_is_exact_up_to_rounding() {
        let cloud = PointCloud::new(vec![Point3::new(0.3, 0.4, 0.5)]).unwrap();
        let b = ParamBox::degenerate(vec![0.25]).unwrap();
        let lb = taylor_bounds(&RotZ, &cloud, &b).unwrap();
        let q = crate::TransformExt::apply(&RotZ, cloud.points()[0], &[0.25]).unwrap().to_array();
        for c in 0..3 {
            assert!((lb.lower(0, c).eval(&[0.25]) - q[c]).abs() < 1e-9);
            assert!((lb.upper(0, c).eval(&[0.25]) - q[c]).abs() < 1e-9);
        }
    }

    #[test]
    fn arity_is_checked() {
        let cloud = PointCloud::new(vec![Point3::default()]).unwrap();
        let b = ParamBox::symmetric(&[0.1, 0.1]).unwrap();
        assert!(matches!(
            taylor_bounds(&RotZ, &cloud, &b),
            Err(Error::ParamCount { expected: 1, actual: 2 })
        ));
    }

    #[test]
    fn grid_includes_corners() {
        let b = ParamBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let g = grid_samples(&b, 100);
        for corner in b.corners() {
            assert!(g.contains(&corner));
        }
    }
}
