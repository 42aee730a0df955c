//! 2×2 matrix arithmetic for the volatility closed forms.

use core::ops::{Add, Mul, Neg, Sub};

/// Column 2-vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2(pub [f64; 2]);

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Vec2 {
    pub const fn new(a: f64, b: f64) -> Self {
        Vec2([a, b])
    }

    pub fn splat(v: f64) -> Self {
        Vec2([v, v])
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1]
    }

    /// `self · otherᵀ`.
    pub fn outer(self, other: Vec2) -> Mat2 {
        let [a, b] = self.0;
        let [c, d] = other.0;
        Mat2([[a * c, a * d], [b * c, b * d]])
    }
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0; 2]; 2]);
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn diag(v: Vec2) -> Self {
        Mat2([[v.0[0], 0.0], [0.0, v.0[1]]])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn transpose(self) -> Self {
        let [[a, b], [c, d]] = self.0;
        Mat2([[a, c], [b, d]])
    }

    pub fn det(self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        a * d - b * c
    }

    /// Inverse, or `None` when the determinant vanishes.
    pub fn inverse(self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let [[a, b], [c, d]] = self.0;
        Some(Mat2([[d / det, -b / det], [-c / det, a / det]]))
    }

    /// Element-wise (Hadamard) product.
    pub fn hadamard(self, other: Mat2) -> Self {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] *= other.0[i][j];
            }
        }
        out
    }

    /// `M + Mᵀ`.
    pub fn symmetrized_sum(self) -> Self {
        self + self.transpose()
    }

    /// `uᵀ M u`.
    pub fn quadratic_form(self, u: Vec2) -> f64 {
        u.dot(self * u)
    }

    pub fn max_abs_diff(self, other: Mat2) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        m
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(mut self, rhs: Mat2) -> Mat2 {
        for i in 0..2 {
            for j in 0..2 {
                self.0[i][j] += rhs.0[i][j];
            }
        }
        self
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        self + (-rhs)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self * -1.0
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let mut out = Mat2::ZERO;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] = self.0[i][0] * rhs.0[0][j] + self.0[i][1] * rhs.0[1][j];
            }
        }
        out
    }
}

impl Mul<Vec2> for Mat2 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        Vec2([
            self.0[0][0] * v.0[0] + self.0[0][1] * v.0[1],
            self.0[1][0] * v.0[0] + self.0[1][1] * v.0[1],
        ])
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(mut self, s: f64) -> Mat2 {
        for row in &mut self.0 {
            for x in row {
                *x *= s;
            }
        }
        self
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2([self.0[0] * s, self.0[1] * s])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = Mat2::new(1.1, -0.7, -0.7, 1.1);
        let inv = m.inverse().unwrap();
        assert!((m * inv).max_abs_diff(Mat2::IDENTITY) < 1e-15);
        assert!(Mat2::new(1.0, 2.0, 2.0, 4.0).inverse().is_none());
    }

    #[test]
    fn quadratic_form_and_outer() {
        let u = Vec2::new(1.0, -1.0);
        let m = Mat2::new(2.0, 1.0, 0.5, 3.0);
        assert_eq!(m.quadratic_form(u), 2.0 - 1.0 - 0.5 + 3.0);
        assert_eq!(u.outer(Vec2::new(2.0, 3.0)), Mat2::new(2.0, 3.0, -2.0, -3.0));
    }
}
