//! Polynomials with real or dual quaternion coefficients.
//!
//! Coefficients are stored highest degree first: `c0*t^n + c1*t^(n-1) + ... + cn`.
//! Division by a linear dual quaternion factor follows the right-division
//! convention throughout: `P = Q * (t - h) + r` with the factor on the right,
//! so the remainder equals the right-substitution value `P(h)`.

use super::{DualQuatError, DualQuaternion};

/// Univariate polynomial with real coefficients, highest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPolynomial {
    coeffs: Vec<f64>,
}

impl RealPolynomial {
    /// Builds a polynomial, trimming leading coefficients that are exactly
    /// zero. The zero polynomial is represented by a single `0.0`.
    pub fn new(coeffs: Vec<f64>) -> Self {
        let first = coeffs.iter().position(|c| *c != 0.0);
        match first {
            Some(i) => Self {
                coeffs: coeffs[i..].to_vec(),
            },
            None => Self { coeffs: vec![0.0] },
        }
    }

    /// Trims leading coefficients that are small relative to the largest
    /// coefficient magnitude.
    pub fn trimmed(&self, rel_tol: f64) -> Self {
        let scale = self.max_abs();
        let first = self
            .coeffs
            .iter()
            .position(|c| c.abs() > rel_tol * scale)
            .unwrap_or(self.coeffs.len() - 1);
        Self {
            coeffs: self.coeffs[first..].to_vec(),
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self) -> Self {
        let n = self.degree();
        if n == 0 {
            return Self::new(vec![0.0]);
        }
        Self::new(
            self.coeffs[..n]
                .iter()
                .enumerate()
                .map(|(i, c)| c * (n - i) as f64)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0.0; n];
        for (i, a) in self.coeffs.iter().enumerate() {
            out[n - self.coeffs.len() + i] += a;
        }
        for (i, b) in other.coeffs.iter().enumerate() {
            out[n - other.coeffs.len() + i] += b;
        }
        Self::new(out)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.coeffs.iter().map(|a| a * c).collect())
    }

    pub fn monic(&self) -> Self {
        self.scale(1.0 / self.leading())
    }

    /// Euclidean division `self = q * divisor + r` with `deg r < deg divisor`.
    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        let dd = divisor.degree();
        if self.degree() < dd {
            return (Self::new(vec![0.0]), self.clone());
        }
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0.0; self.degree() - dd + 1];
        for i in 0..quot.len() {
            let c = rem[i] / divisor.coeffs[0];
            quot[i] = c;
            for (j, m) in divisor.coeffs.iter().enumerate() {
                rem[i + j] -= c * m;
            }
        }
        let rem = rem[quot.len()..].to_vec();
        (
            Self::new(quot),
            Self::new(if rem.is_empty() { vec![0.0] } else { rem }),
        )
    }
}

/// Polynomial with dual quaternion coefficients, highest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct DQPolynomial {
    coeffs: Vec<DualQuaternion>,
}

impl DQPolynomial {
    /// Builds a polynomial from coefficients, highest degree first. The
    /// leading coefficient must be nonzero (zero polynomials never occur as
    /// motion polynomials).
    pub fn new(coeffs: Vec<DualQuaternion>) -> Self {
        assert!(
            !coeffs.is_empty() && coeffs[0].max_abs() > 0.0,
            "leading coefficient must be nonzero"
        );
        Self { coeffs }
    }

    /// The monomial `t - h`.
    pub fn linear_from_root(h: DualQuaternion) -> Self {
        Self::new(vec![DualQuaternion::ONE, -h])
    }

    pub fn constant(c: DualQuaternion) -> Self {
        Self::new(vec![c])
    }

    pub fn coeffs(&self) -> &[DualQuaternion] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> DualQuaternion {
        self.coeffs[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.max_abs()))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.coeffs.iter().map(|a| a.scale(c)).collect())
    }

    /// Coefficient convolution; order of the factors is preserved.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![DualQuaternion::ZERO; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = out[i + j] + *a * *b;
            }
        }
        Self { coeffs: out }
    }

    pub fn conj(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c.conj()).collect(),
        }
    }

    pub fn derivative(&self) -> Self {
        let n = self.degree();
        if n == 0 {
            return Self::constant(DualQuaternion::ZERO);
        }
        Self {
            coeffs: self.coeffs[..n]
                .iter()
                .enumerate()
                .map(|(i, c)| c.scale((n - i) as f64))
                .collect(),
        }
    }

    /// Horner evaluation at a real parameter (real scalars are central, so
    /// there is no ordering ambiguity).
    pub fn eval(&self, t: f64) -> DualQuaternion {
        self.coeffs
            .iter()
            .skip(1)
            .fold(self.coeffs[0], |acc, c| acc.scale(t) + *c)
    }

    /// Right-substitution value `P(h)`: Horner with the accumulated value
    /// multiplied by `h` from the right. Equals the remainder of division
    /// by `t - h` under the right-division convention.
    pub fn eval_right(&self, h: DualQuaternion) -> DualQuaternion {
        self.coeffs
            .iter()
            .skip(1)
            .fold(self.coeffs[0], |acc, c| acc * h + *c)
    }

    /// Norm polynomial `P * conj(P)`, verified real.
    ///
    /// All coefficients of the product must be real scalars up to
    /// `tau_real` relative to the largest real coefficient; otherwise the
    /// polynomial does not parametrize a motion in the Study quadric.
    pub fn norm_poly(&self, tau_real: f64) -> Result<RealPolynomial, DualQuatError> {
        let (poly, residual) = self.norm_poly_unchecked();
        let tol = tau_real * poly.max_abs();
        if residual > tol {
            return Err(DualQuatError::NotRealNorm {
                residual: residual / poly.max_abs(),
                tol: tau_real,
            });
        }
        Ok(poly)
    }

    /// Real part of `P * conj(P)` together with the largest non-real
    /// component magnitude (not relative).
    pub fn norm_poly_unchecked(&self) -> (RealPolynomial, f64) {
        let prod = self.mul(&self.conj());
        let mut junk = 0.0f64;
        let coeffs = prod
            .coeffs
            .iter()
            .map(|c| {
                for v in &c.primal[1..] {
                    junk = junk.max(v.abs());
                }
                for v in &c.dual {
                    junk = junk.max(v.abs());
                }
                c.primal[0]
            })
            .collect();
        (RealPolynomial::new(coeffs), junk)
    }

    /// Division by a real polynomial: `self = q * m + r`, `deg r < deg m`.
    /// Real coefficients commute with dual quaternions, so quotient and
    /// remainder are two-sided.
    pub fn div_real(&self, m: &RealPolynomial) -> (Self, Self) {
        let dm = m.degree();
        assert!(dm >= 1 || m.coeffs()[0] != 0.0, "division by zero polynomial");
        if self.degree() < dm {
            return (Self::constant(DualQuaternion::ZERO), self.clone());
        }
        let mut rem = self.coeffs.clone();
        let nq = self.degree() - dm + 1;
        let mut quot = vec![DualQuaternion::ZERO; nq];
        for i in 0..nq {
            let c = rem[i].scale(1.0 / m.leading());
            quot[i] = c;
            for (j, mc) in m.coeffs().iter().enumerate() {
                rem[i + j] = rem[i + j] - c.scale(*mc);
            }
        }
        let rem: Vec<_> = rem[nq..].to_vec();
        (
            Self { coeffs: quot },
            Self {
                coeffs: if rem.is_empty() {
                    vec![DualQuaternion::ZERO]
                } else {
                    rem
                },
            },
        )
    }

    /// Right division by `t - h`: synthetic Horner scheme giving
    /// `self = q * (t - h) + r` with constant remainder `r = P(h)`
    /// (right substitution).
    pub fn div_linear(&self, h: DualQuaternion) -> (Self, DualQuaternion) {
        let n = self.degree();
        if n == 0 {
            return (Self::constant(DualQuaternion::ZERO), self.coeffs[0]);
        }
        let mut quot = Vec::with_capacity(n);
        let mut acc = self.coeffs[0];
        for c in &self.coeffs[1..n] {
            quot.push(acc);
            acc = acc * h + *c;
        }
        quot.push(acc);
        let rem = acc * h + self.coeffs[n];
        (Self { coeffs: quot }, rem)
    }
}
