use crate::interval::{Interval, IntervalError};

use super::scalar::{Enc, Scalar};

/// Value and first/second partial derivatives of a point transformation
/// `f(p, θ)` with respect to both the point `p` and the parameters `θ`.
///
/// Output coordinates are indexed by `c`, point coordinates by `i, j`,
/// parameters by `a, b`.
#[derive(Debug, Clone)]
pub struct Jet<S> {
    k: usize,
    pub value: [S; 3],
    /// `∂f_c/∂p_i` at `[c][i]`.
    pub d_point: [[S; 3]; 3],
    /// `∂²f_c/∂p_i∂p_j` at `[c][i][j]`.
    pub d_point_point: [[[S; 3]; 3]; 3],
    d_param: Vec<S>,
    d_point_param: Vec<S>,
    d_param_param: Vec<S>,
}

impl<S: Scalar> Jet<S> {
    pub fn zeros(k: usize) -> Self {
        let z = S::zero();
        Jet {
            k,
            value: [z; 3],
            d_point: [[z; 3]; 3],
            d_point_point: [[[z; 3]; 3]; 3],
            d_param: vec![z; 3 * k],
            d_point_param: vec![z; 9 * k],
            d_param_param: vec![z; 3 * k * k],
        }
    }

    #[inline]
    pub fn set_d_param(&mut self, c: usize, a: usize, v: S) {
        self.d_param[c * self.k + a] = v;
    }

    #[inline]
    pub fn set_d_point_param(&mut self, c: usize, i: usize, a: usize, v: S) {
        self.d_point_param[(c * 3 + i) * self.k + a] = v;
    }

    /// Sets both `(a, b)` and `(b, a)`.
    #[inline]
    pub fn set_d_param_param(&mut self, c: usize, a: usize, b: usize, v: S) {
        self.d_param_param[(c * self.k + a) * self.k + b] = v;
        self.d_param_param[(c * self.k + b) * self.k + a] = v;
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set_d_point_point(&mut self, c: usize, i: usize, j: usize, v: S) {
        self.d_point_point[c][i][j] = v;
        self.d_point_point[c][j][i] = v;
    }
}

impl<S: Copy> Jet<S> {
    /// `∂f_c/∂θ_a`.
    #[inline]
    pub fn d_param(&self, c: usize, a: usize) -> S {
        self.d_param[c * self.k + a]
    }

    /// `∂²f_c/∂p_i∂θ_a`.
    #[inline]
    pub fn d_point_param(&self, c: usize, i: usize, a: usize) -> S {
        self.d_point_param[(c * 3 + i) * self.k + a]
    }

    /// `∂²f_c/∂θ_a∂θ_b`.
    #[inline]
    pub fn d_param_param(&self, c: usize, a: usize, b: usize) -> S {
        self.d_param_param[(c * self.k + a) * self.k + b]
    }

    pub fn param_count(&self) -> usize {
        self.k
    }

    pub fn map<T>(&self, f: impl Fn(&S) -> T) -> Jet<T> {
        Jet {
            k: self.k,
            value: self.value.each_ref().map(&f),
            d_point: self.d_point.each_ref().map(|r| r.each_ref().map(&f)),
            d_point_point: self
                .d_point_point
                .each_ref()
                .map(|m| m.each_ref().map(|r| r.each_ref().map(&f))),
            d_param: self.d_param.iter().map(&f).collect(),
            d_point_param: self.d_point_param.iter().map(&f).collect(),
            d_param_param: self.d_param_param.iter().map(&f).collect(),
        }
    }
}

impl Jet<Enc> {
    pub fn into_interval(self) -> Result<Jet<Interval>, IntervalError> {
        let err = std::cell::Cell::new(None);
        let out = self.map(|e| match e.get() {
            Ok(v) => v,
            Err(e) => {
                err.set(err.get().or(Some(e)));
                Interval::ZERO
            }
        });
        match err.get() {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

/// Jet of `h(p, (φ, ψ)) = g(f(p, φ), ψ)` from the jets of `f` (evaluated at
/// `(p, φ)`) and `g` (evaluated at `(f(p, φ), ψ)`), by the chain rule and
/// Faà di Bruno's formula.
pub fn chain<S: Scalar>(inner: &Jet<S>, outer: &Jet<S>) -> Jet<S> {
    let k1 = inner.k;
    let k2 = outer.k;
    let mut h = Jet::zeros(k1 + k2);
    h.value = outer.value;

    let sum3 = |f: &dyn Fn(usize) -> S| f(0) + f(1) + f(2);

    for c in 0..3 {
        for i in 0..3 {
            h.d_point[c][i] = sum3(&|m| outer.d_point[c][m] * inner.d_point[m][i]);
        }
        for a in 0..k1 {
            h.set_d_param(c, a, sum3(&|m| outer.d_point[c][m] * inner.d_param(m, a)));
        }
        for b in 0..k2 {
            h.set_d_param(c, k1 + b, outer.d_param(c, b));
        }

        // Second order in the point.
        for i in 0..3 {
            for j in i..3 {
                let first = sum3(&|m| outer.d_point[c][m] * inner.d_point_point[m][i][j]);
                let second = sum3(&|m| {
                    sum3(&|n| {
                        outer.d_point_point[c][m][n] * inner.d_point[m][i] * inner.d_point[n][j]
                    })
                });
                h.set_d_point_point(c, i, j, first + second);
            }
        }

        // Mixed point/parameter.
        for i in 0..3 {
            for a in 0..k1 {
                let first = sum3(&|m| outer.d_point[c][m] * inner.d_point_param(m, i, a));
                let second = sum3(&|m| {
                    sum3(&|n| {
                        outer.d_point_point[c][m][n] * inner.d_point[m][i] * inner.d_param(n, a)
                    })
                });
                h.set_d_point_param(c, i, a, first + second);
            }
            for b in 0..k2 {
                let v = sum3(&|m| outer.d_point_param(c, m, b) * inner.d_point[m][i]);
                h.set_d_point_param(c, i, k1 + b, v);
            }
        }

        // Second order in the parameters.
        for a in 0..k1 {
            for a2 in a..k1 {
                let first = sum3(&|m| outer.d_point[c][m] * inner.d_param_param(m, a, a2));
                let second = sum3(&|m| {
                    sum3(&|n| {
                        outer.d_point_point[c][m][n] * inner.d_param(m, a) * inner.d_param(n, a2)
                    })
                });
                h.set_d_param_param(c, a, a2, first + second);
            }
            for b in 0..k2 {
                let v = sum3(&|m| outer.d_point_param(c, m, b) * inner.d_param(m, a));
                h.set_d_param_param(c, a, k1 + b, v);
            }
        }
        for b in 0..k2 {
            for b2 in b..k2 {
                h.set_d_param_param(c, k1 + b, k1 + b2, outer.d_param_param(c, b, b2));
            }
        }
    }
    h
}
