//! Dual quaternion algebra and polynomials over the dual quaternions.
//!
//! A dual quaternion is written `p + eps*d` with quaternions `p` (primal)
//! and `d` (dual), where `eps^2 = 0` and `eps` commutes with `i`, `j`, `k`.
//! Stored as eight homogeneous coordinates `(x0..x3, y0..y3)`. A dual
//! quaternion represents a rigid displacement exactly when it lies on the
//! Study quadric `x0*y0 + x1*y1 + x2*y2 + x3*y3 = 0` and its primal part is
//! nonzero; this is checked by predicate, never enforced on construction.

mod poly;

pub use poly::{DQPolynomial, RealPolynomial};

use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

/// Relative tolerance below which a primal norm counts as zero for inversion.
pub const TOL_INV: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DualQuatError {
    /// Primal part is numerically zero; no inverse exists.
    #[error("dual quaternion is not invertible (primal norm^2 = {primal_norm_sq:.3e})")]
    NotInvertible { primal_norm_sq: f64 },
    /// A polynomial expected to have a real norm does not.
    #[error("norm polynomial has non-real components (relative residual {residual:.3e} > {tol:.3e})")]
    NotRealNorm { residual: f64, tol: f64 },
}

/// Number of the form `a + eps*b` with `eps^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualNumber {
    pub real: f64,
    pub eps: f64,
}

impl DualNumber {
    pub fn new(real: f64, eps: f64) -> Self {
        Self { real, eps }
    }

    /// Multiplicative inverse: `1/(a + eps b) = 1/a - eps b/a^2`.
    pub fn inverse(self) -> Self {
        Self {
            real: 1.0 / self.real,
            eps: -self.eps / (self.real * self.real),
        }
    }
}

fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn quat_conj(a: &[f64; 4]) -> [f64; 4] {
    [a[0], -a[1], -a[2], -a[3]]
}

/// Element of the dual quaternion algebra, in homogeneous coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualQuaternion {
    /// Primal quaternion `(x0, x1, x2, x3)`.
    pub primal: [f64; 4],
    /// Dual quaternion part `(y0, y1, y2, y3)`.
    pub dual: [f64; 4],
}

impl DualQuaternion {
    pub const ZERO: Self = Self {
        primal: [0.0; 4],
        dual: [0.0; 4],
    };

    pub const ONE: Self = Self {
        primal: [1.0, 0.0, 0.0, 0.0],
        dual: [0.0; 4],
    };

    pub fn new(primal: [f64; 4], dual: [f64; 4]) -> Self {
        Self { primal, dual }
    }

    /// Real scalar embedded as a dual quaternion.
    pub fn from_real(x: f64) -> Self {
        Self::new([x, 0.0, 0.0, 0.0], [0.0; 4])
    }

    /// Conjugation: `i`, `j`, `k` are replaced by their negatives in both
    /// the primal and the dual part.
    pub fn conj(&self) -> Self {
        Self::new(quat_conj(&self.primal), quat_conj(&self.dual))
    }

    /// The product `q * conj(q)`, which is always a dual number: its real
    /// part is the squared primal norm and its eps part twice the inner
    /// product of primal and dual coordinates.
    pub fn norm(&self) -> DualNumber {
        DualNumber::new(self.primal_norm_sq(), 2.0 * dot4(&self.primal, &self.dual))
    }

    pub fn primal_norm_sq(&self) -> f64 {
        dot4(&self.primal, &self.primal)
    }

    pub fn dual_norm_sq(&self) -> f64 {
        dot4(&self.dual, &self.dual)
    }

    /// Residual of the Study condition `x0*y0 + .. + x3*y3 = 0`.
    pub fn study_residual(&self) -> f64 {
        dot4(&self.primal, &self.dual)
    }

    /// Study residual relative to the coordinate scale, suitable for
    /// comparing against a dimensionless tolerance.
    pub fn study_residual_relative(&self) -> f64 {
        let pn = self.primal_norm_sq().sqrt();
        let dn = self.dual_norm_sq().sqrt();
        let scale = pn * dn + pn * pn;
        if scale == 0.0 {
            0.0
        } else {
            self.study_residual().abs() / scale
        }
    }

    /// Largest absolute coordinate; the natural magnitude for relative
    /// comparisons of homogeneous representatives.
    pub fn max_abs(&self) -> f64 {
        self.primal
            .iter()
            .chain(self.dual.iter())
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(
            [
                self.primal[0] * c,
                self.primal[1] * c,
                self.primal[2] * c,
                self.primal[3] * c,
            ],
            [
                self.dual[0] * c,
                self.dual[1] * c,
                self.dual[2] * c,
                self.dual[3] * c,
            ],
        )
    }

    /// Representative with unit primal norm. Poses are projective objects
    /// (`q` and `lambda*q` describe the same displacement), so comparisons
    /// should normalize first. Returns `None` for numerically zero primal.
    pub fn normalized_by_primal(&self) -> Option<Self> {
        let n = self.primal_norm_sq().sqrt();
        if n <= TOL_INV.sqrt() * self.max_abs() {
            return None;
        }
        Some(self.scale(1.0 / n))
    }

    /// Multiplicative inverse `conj(q) / (q conj(q))`.
    ///
    /// Fails when the primal part is numerically zero relative to the
    /// coordinate scale of `q`.
    pub fn inverse(&self) -> Result<Self, DualQuatError> {
        let n = self.norm();
        let scale = self.max_abs();
        if n.real <= TOL_INV * scale * scale {
            return Err(DualQuatError::NotInvertible {
                primal_norm_sq: n.real,
            });
        }
        let c = self.conj();
        let inv = n.inverse();
        // (p + eps d) * (a + eps b) with a real dual number: a*p + eps(b*p + a*d)
        Ok(Self::new(
            scale4(&c.primal, inv.real),
            add4(&scale4(&c.primal, inv.eps), &scale4(&c.dual, inv.real)),
        ))
    }

    /// Projective distance between normalized representatives (modulo the
    /// overall sign, which is also unobservable).
    pub fn projective_distance(&self, other: &Self) -> f64 {
        let (a, b) = match (self.normalized_by_primal(), other.normalized_by_primal()) {
            (Some(a), Some(b)) => (a, b),
            _ => return f64::INFINITY,
        };
        let mut plus = 0.0;
        let mut minus = 0.0;
        for k in 0..4 {
            plus += (a.primal[k] - b.primal[k]).powi(2) + (a.dual[k] - b.dual[k]).powi(2);
            minus += (a.primal[k] + b.primal[k]).powi(2) + (a.dual[k] + b.dual[k]).powi(2);
        }
        plus.min(minus).sqrt()
    }
}

fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

fn add4(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

fn scale4(a: &[f64; 4], c: f64) -> [f64; 4] {
    [a[0] * c, a[1] * c, a[2] * c, a[3] * c]
}

impl Add for DualQuaternion {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(add4(&self.primal, &rhs.primal), add4(&self.dual, &rhs.dual))
    }
}

impl Sub for DualQuaternion {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(
            add4(&self.primal, &scale4(&rhs.primal, -1.0)),
            add4(&self.dual, &scale4(&rhs.dual, -1.0)),
        )
    }
}

impl Neg for DualQuaternion {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul for DualQuaternion {
    type Output = Self;
    /// Noncommutative product; `eps^2 = 0` kills the dual-dual term.
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            quat_mul(&self.primal, &rhs.primal),
            add4(
                &quat_mul(&self.primal, &rhs.dual),
                &quat_mul(&self.dual, &rhs.primal),
            ),
        )
    }
}
