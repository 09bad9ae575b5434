//! Closed-form jets of the single-stage transformations.
//!
//! Each transform writes its value, Jacobians and second derivatives once,
//! generically over [`Scalar`]; the same code serves point evaluation and
//! interval enclosure over a parameter box.

use super::jet::Jet;
use super::scalar::Scalar;

/// A transformation with hand-derived first and second derivatives.
pub trait ClosedForm: Send + Sync + std::fmt::Debug {
    const NAME: &'static str;
    const PARAMS: usize;

    fn jet<S: Scalar>(p: [S; 3], theta: &[S]) -> Jet<S>;
}

/// Rotation about the x axis.
#[derive(Debug, Clone, Copy, Default)]
pub struct RotX;

/// Rotation about the y axis.
#[derive(Debug, Clone, Copy, Default)]
pub struct RotY;

/// Rotation about the z (up) axis.
#[derive(Debug, Clone, Copy, Default)]
pub struct RotZ;

/// `(x + θ₁z, y + θ₂z, z)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Shear;

/// Rotation about z by the height-dependent angle `θz`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Twist;

/// Scales x and y by `½θ₁²z + θ₂z + 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Taper;

impl ClosedForm for RotZ {
    const NAME: &'static str = "rotz";
    const PARAMS: usize = 1;

    fn jet<S: Scalar>(p: [S; 3], theta: &[S]) -> Jet<S> {
        let [x, y, z] = p;
        let (c, s) = (theta[0].cos(), theta[0].sin());
        let one = S::constant(1.0);
        let mut j = Jet::zeros(1);
        j.value = [x * c - y * s, x * s + y * c, z];
        j.d_point[0] = [c, -s, S::zero()];
        j.d_point[1] = [s, c, S::zero()];
        j.d_point[2][2] = one;
        j.set_d_param(0, 0, -(x * s) - y * c);
        j.set_d_param(1, 0, x * c - y * s);
        j.set_d_point_param(0, 0, 0, -s);
        j.set_d_point_param(0, 1, 0, -c);
        j.set_d_point_param(1, 0, 0, c);
        j.set_d_point_param(1, 1, 0, -s);
        j.set_d_param_param(0, 0, 0, -(x * c) + y * s);
        j.set_d_param_param(1, 0, 0, -(x * s) - y * c);
        j
    }
}

impl ClosedForm for RotX {
    const NAME: &'static str = "rotx";
    const PARAMS: usize = 1;

    fn jet<S: Scalar>(p: [S; 3], theta: &[S]) -> Jet<S> {
        let [x, y, z] = p;
        let (c, s) = (theta[0].cos(), theta[0].sin());
        let mut j = Jet::zeros(1);
        j.value = [x, y * c - z * s, y * s + z * c];
        j.d_point[0][0] = S::constant(1.0);
        j.d_point[1] = [S::zero(), c, -s];
        j.d_point[2] = [S::zero(), s, c];
        j.set_d_param(1, 0, -(y * s) - z * c);
        j.set_d_param(2, 0, y * c - z * s);
        j.set_d_point_param(1, 1, 0, -s);
        j.set_d_point_param(1, 2, 0, -c);
        j.set_d_point_param(2, 1, 0, c);
        j.set_d_point_param(2, 2, 0, -s);
        j.set_d_param_param(1, 0, 0, -(y * c) + z * s);
        j.set_d_param_param(2, 0, 0, -(y * s) - z * c);
        j
    }
}

impl ClosedForm for RotY {
    const NAME: &'static str = "roty";
    const PARAMS: usize = 1;

    fn jet<S: Scalar>(p: [S; 3], theta: &[S]) -> Jet<S> {
        let [x, y, z] = p;
        let (c, s) = (theta[0].cos(), theta[0].sin());
        let mut j = Jet::zeros(1);
        j.value = [x * c + z * s, y, -(x * s) + z * c];
        j.d_point[0] = [c, S::zero(), s];
        j.d_point[1][1] = S::constant(1.0);
        j.d_point[2] = [-s, S::zero(), c];
        j.set_d_param(0, 0, -(x * s) + z * c);
        j.set_d_param(2, 0, -(x * c) - z * s);
        j.set_d_point_param(0, 0, 0, -s);
        j.set_d_point_param(0, 2, 0, c);
        j.set_d_point_param(2, 0, 0, -c);
        j.set_d_point_param(2, 2, 0, -s);
        j.set_d_param_param(0, 0, 0, -(x * c) - z * s);
        j.set_d_param_param(2, 0, 0, x * s - z * c);
        j
    }
}

impl ClosedForm for Shear {
    const NAME: &'static str = "shear";
    const PARAMS: usize = 2;

    fn jet<S: Scalar>(p: [S; 3], theta: &[S]) -> Jet<S> {
        let [x, y, z] = p;
        let one = S::constant(1.0);
        let mut j = Jet::zeros(2);
        j.value = [x + theta[0] * z, y + theta[1] * z, z];
        j.d_point[0] = [one, S::zero(), theta[0]];
        j.d_point[1] = [S::zero(), one, theta[1]];
        j.d_point[2][2] = one;
        j.set_d_param(0, 0, z);
        j.set_d_param(1, 1, z);
        j.set_d_point_param(0, 2, 0, one);
        j.set_d_point_param(1, 2, 1, one);
        j
    }
}

impl ClosedForm for Twist {
    const NAME: &'static str = "twist";
    const PARAMS: usize = 1;

    fn jet<S: Scalar>(p: [S; 3], theta: &[S]) -> Jet<S> {
        let [x, y, z] = p;
        let t = theta[0];
        let angle = t * z;
        let (ca, sa) = (angle.cos(), angle.sin());
        // Rotated x and y; d(a)/d(angle) = -b and d(b)/d(angle) = a.
        let a = x * ca - y * sa;
        let b = x * sa + y * ca;
        let mut j = Jet::zeros(1);
        j.value = [a, b, z];
        j.d_point[0] = [ca, -sa, -(b * t)];
        j.d_point[1] = [sa, ca, a * t];
        j.d_point[2][2] = S::constant(1.0);
        j.set_d_param(0, 0, -(b * z));
        j.set_d_param(1, 0, a * z);

        let z2 = z.square();
        let t2 = t.square();
        j.set_d_param_param(0, 0, 0, -(a * z2));
        j.set_d_param_param(1, 0, 0, -(b * z2));

        j.set_d_point_point(0, 0, 2, -(sa * t));
        j.set_d_point_point(0, 1, 2, -(ca * t));
        j.set_d_point_point(0, 2, 2, -(a * t2));
        j.set_d_point_point(1, 0, 2, ca * t);
        j.set_d_point_point(1, 1, 2, -(sa * t));
        j.set_d_point_point(1, 2, 2, -(b * t2));

        j.set_d_point_param(0, 0, 0, -(sa * z));
        j.set_d_point_param(0, 1, 0, -(ca * z));
        j.set_d_point_param(0, 2, 0, -(a * z * t) - b);
        j.set_d_point_param(1, 0, 0, ca * z);
        j.set_d_point_param(1, 1, 0, -(sa * z));
        j.set_d_point_param(1, 2, 0, a - b * z * t);
        j
    }
}

impl ClosedForm for Taper {
    const NAME: &'static str = "taper";
    const PARAMS: usize = 2;

    fn jet<S: Scalar>(p: [S; 3], theta: &[S]) -> Jet<S> {
        let [x, y, z] = p;
        let (t1, t2) = (theta[0], theta[1]);
        let half_sq = t1.square().half();
        // factor = ½θ₁²z + θ₂z + 1, slope = d(factor)/dz
        let slope = half_sq + t2;
        let factor = slope * z + S::constant(1.0);
        let mut j = Jet::zeros(2);
        j.value = [factor * x, factor * y, z];
        j.d_point[0] = [factor, S::zero(), slope * x];
        j.d_point[1] = [S::zero(), factor, slope * y];
        j.d_point[2][2] = S::constant(1.0);

        let zx = z * x;
        let zy = z * y;
        j.set_d_param(0, 0, t1 * zx);
        j.set_d_param(0, 1, zx);
        j.set_d_param(1, 0, t1 * zy);
        j.set_d_param(1, 1, zy);
        j.set_d_param_param(0, 0, 0, zx);
        j.set_d_param_param(1, 0, 0, zy);

        j.set_d_point_point(0, 0, 2, slope);
        j.set_d_point_point(1, 1, 2, slope);

        j.set_d_point_param(0, 0, 0, t1 * z);
        j.set_d_point_param(0, 0, 1, z);
        j.set_d_point_param(0, 2, 0, t1 * x);
        j.set_d_point_param(0, 2, 1, x);
        j.set_d_point_param(1, 1, 0, t1 * z);
        j.set_d_point_param(1, 1, 1, z);
        j.set_d_point_param(1, 2, 0, t1 * y);
        j.set_d_point_param(1, 2, 1, y);
        j
    }
}
