//! Factorized rational motion curves `C(t) = (t - h_1) ... (t - h_n)` and
//! their shape-parameter derivatives.
//!
//! Each linear factor describes a rotation about a spatial axis and is
//! parametrized by seven shape parameters: a scalar `h0`, an axis direction
//! `d` and a point `p` on the axis. The factor is
//!
//! ```text
//! (t - h0 + d.ijk - eps (d x p).ijk) / |d|
//! ```
//!
//! The cross-product moment keeps the Pluecker condition `<d, m> = 0` exact
//! by construction, which in turn keeps the whole curve inside the Study
//! quadric for every parameter value: the norm polynomial of each factor is
//! the real quadratic `((t - h0)^2 + |d|^2) / |d|^2`.

use crate::dualquat::{DQPolynomial, DualQuaternion, RealPolynomial};
use crate::kinematics::{embedding_differential, Embedding12, KinematicsError, Pose};
use nalgebra::{DMatrix, SMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Directions with norm below this are degenerate (no axis).
pub const TOL_DIR: f64 = 1e-8;

/// Relative tolerance for the residual Study violation of an expanded
/// curve; the factorized form satisfies it to rounding error.
pub const TOL_CURVE_REAL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("axis factor has numerically zero direction (|d| = {0:.3e})")]
    DegenerateDirection(f64),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// One revolute linear factor: rotation about the axis through `point`
/// with direction `direction` as the curve parameter varies; `h0` locates
/// the factor's half-turn on the parameter line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisFactor {
    pub h0: f64,
    #[serde(rename = "d")]
    pub direction: [f64; 3],
    #[serde(rename = "p")]
    pub point: [f64; 3],
}

impl AxisFactor {
    pub fn new(h0: f64, direction: [f64; 3], point: [f64; 3]) -> Self {
        Self { h0, direction, point }
    }

    pub fn direction_norm(&self) -> f64 {
        let d = &self.direction;
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    /// Moment of the axis, `m = d x p`.
    pub fn moment(&self) -> [f64; 3] {
        cross(&self.direction, &self.point)
    }

    /// The root `h` of the normalized factor `(t - h) / |d|` and the scale
    /// `|d|`. Signs follow the coefficient pattern of the factor: primal
    /// vector `-d`, dual vector `+m`.
    pub fn to_dq(&self) -> Result<(DualQuaternion, f64), CurveError> {
        let s = self.direction_norm();
        if s < TOL_DIR {
            return Err(CurveError::DegenerateDirection(s));
        }
        let d = &self.direction;
        let m = self.moment();
        Ok((
            DualQuaternion::new(
                [self.h0, -d[0], -d[1], -d[2]],
                [0.0, m[0], m[1], m[2]],
            ),
            s,
        ))
    }

    /// The normalized factor as a degree-1 polynomial `(t - h) / |d|`.
    pub fn linear_poly(&self) -> Result<DQPolynomial, CurveError> {
        let (h, s) = self.to_dq()?;
        Ok(DQPolynomial::new(vec![
            DualQuaternion::from_real(1.0 / s),
            h.scale(-1.0 / s),
        ]))
    }

    /// Value of the normalized factor at a real parameter.
    fn value(&self, t: f64) -> DualQuaternion {
        let s = self.direction_norm();
        let dh = [
            self.direction[0] / s,
            self.direction[1] / s,
            self.direction[2] / s,
        ];
        let m = cross(&dh, &self.point);
        DualQuaternion::new(
            [(t - self.h0) / s, dh[0], dh[1], dh[2]],
            [0.0, -m[0], -m[1], -m[2]],
        )
    }

    /// Derivatives of the factor value with respect to the seven shape
    /// parameters `(h0, d0, d1, d2, p0, p1, p2)`, at a fixed parameter `t`.
    fn value_derivatives(&self, t: f64) -> [DualQuaternion; 7] {
        let s = self.direction_norm();
        let d = &self.direction;
        let p = &self.point;
        let dh = [d[0] / s, d[1] / s, d[2] / s];
        let mut out = [DualQuaternion::ZERO; 7];
        out[0] = DualQuaternion::new([-1.0 / s, 0.0, 0.0, 0.0], [0.0; 4]);
        for j in 0..3 {
            // d(d_hat)/d(d_j) = e_j/s - d * d_j / s^3
            let mut ddh = [-d[0] * d[j] / (s * s * s), -d[1] * d[j] / (s * s * s), -d[2] * d[j] / (s * s * s)];
            ddh[j] += 1.0 / s;
            let dm = cross(&ddh, p);
            out[1 + j] = DualQuaternion::new(
                [-(t - self.h0) * d[j] / (s * s * s), ddh[0], ddh[1], ddh[2]],
                [0.0, -dm[0], -dm[1], -dm[2]],
            );
            let mut ej = [0.0; 3];
            ej[j] = 1.0;
            let dm = cross(&dh, &ej);
            out[4 + j] = DualQuaternion::new([0.0; 4], [0.0, -dm[0], -dm[1], -dm[2]]);
        }
        out
    }
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Flat list of shape parameters, seven per factor:
/// `(h0, d0, d1, d2, p0, p1, p2)` concatenated in factor order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeVector {
    pub factors: Vec<AxisFactor>,
}

impl ShapeVector {
    pub fn new(factors: Vec<AxisFactor>) -> Self {
        Self { factors }
    }

    pub fn len(&self) -> usize {
        7 * self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for f in &self.factors {
            v.push(f.h0);
            v.extend_from_slice(&f.direction);
            v.extend_from_slice(&f.point);
        }
        v
    }

    pub fn from_flat(v: &[f64]) -> Self {
        assert!(v.len() % 7 == 0, "shape vector length must be a multiple of 7");
        let factors = v
            .chunks_exact(7)
            .map(|c| AxisFactor::new(c[0], [c[1], c[2], c[3]], [c[4], c[5], c[6]]))
            .collect();
        Self { factors }
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("shape vector serialization")
    }
}

/// Product of normalized axis factors; the representation of the evolving
/// motion. The leftmost factor is the base joint.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedCurve {
    factors: Vec<AxisFactor>,
}

impl FactorizedCurve {
    /// Validates every factor direction and the (constructive) reality of
    /// the norm polynomial.
    pub fn new(factors: Vec<AxisFactor>) -> Result<Self, CurveError> {
        assert!(!factors.is_empty(), "a curve needs at least one factor");
        for f in &factors {
            let s = f.direction_norm();
            if s < TOL_DIR {
                return Err(CurveError::DegenerateDirection(s));
            }
        }
        Ok(Self { factors })
    }

    pub fn from_shape(shape: &ShapeVector) -> Result<Self, CurveError> {
        Self::new(shape.factors.clone())
    }

    pub fn shape(&self) -> ShapeVector {
        ShapeVector::new(self.factors.clone())
    }

    pub fn factors(&self) -> &[AxisFactor] {
        &self.factors
    }

    pub fn degree(&self) -> usize {
        self.factors.len()
    }

    /// Value of the curve at a real parameter: the ordered product of the
    /// normalized factor values.
    pub fn eval(&self, t: f64) -> DualQuaternion {
        let mut q = self.factors[0].value(t);
        for f in &self.factors[1..] {
            q = q * f.value(t);
        }
        q
    }

    /// Expanded coefficient form, `dqpoly` product of the normalized
    /// factors. The leading coefficient is the real scalar `1 / prod |d_i|`.
    pub fn expand(&self) -> DQPolynomial {
        let mut p = self.factors[0]
            .linear_poly()
            .expect("validated on construction");
        for f in &self.factors[1..] {
            p = p.mul(&f.linear_poly().expect("validated on construction"));
        }
        p
    }

    /// Norm polynomial `C * conj(C)`, real by construction.
    pub fn norm_polynomial(&self) -> RealPolynomial {
        self.expand()
            .norm_poly(TOL_CURVE_REAL)
            .expect("factorized curves have real norm polynomials")
    }

    /// Pose at `t`.
    pub fn pose(&self, t: f64) -> Result<Pose, CurveError> {
        Ok(crate::kinematics::dq_to_pose(&self.eval(t))?)
    }

    /// Embedding of the pose at `t`.
    pub fn embedding(&self, t: f64) -> Result<Embedding12, CurveError> {
        Ok(self.pose(t)?.embedding())
    }

    fn prefix_suffix(&self, t: f64) -> (Vec<DualQuaternion>, Vec<DualQuaternion>) {
        let n = self.factors.len();
        let vals: Vec<DualQuaternion> = self.factors.iter().map(|f| f.value(t)).collect();
        let mut pre = vec![DualQuaternion::ONE; n + 1];
        for i in 0..n {
            pre[i + 1] = pre[i] * vals[i];
        }
        let mut suf = vec![DualQuaternion::ONE; n + 1];
        for i in (0..n).rev() {
            suf[i] = vals[i] * suf[i + 1];
        }
        (pre, suf)
    }

    /// Derivative of the curve value with respect to `t`.
    pub fn eval_t_derivative(&self, t: f64) -> DualQuaternion {
        let (pre, suf) = self.prefix_suffix(t);
        let mut dq = DualQuaternion::ZERO;
        for (i, f) in self.factors.iter().enumerate() {
            let scale = 1.0 / f.direction_norm();
            dq = dq + (pre[i] * suf[i + 1]).scale(scale);
        }
        dq
    }

    /// Derivative of the embedding with respect to `t` (quotient rule
    /// through the norm division, via the embedding differential).
    pub fn embedding_t_derivative(&self, t: f64) -> Embedding12 {
        let q = self.eval(t);
        let d = embedding_differential(&q);
        let dq = self.eval_t_derivative(t);
        d * dq_as_vec8(&dq)
    }

    /// Jacobian of the embedding at fixed `t` with respect to all shape
    /// parameters: column `7*i + l` is the derivative in parameter `l` of
    /// factor `i`. Each parameter occurs in exactly one factor, so the
    /// product rule needs one prefix and one suffix product per factor.
    pub fn shape_jacobian(&self, t: f64) -> DMatrix<f64> {
        let n = self.factors.len();
        let (pre, suf) = self.prefix_suffix(t);
        let q = pre[n];
        let d = embedding_differential(&q);
        let mut jac = DMatrix::<f64>::zeros(12, 7 * n);
        for (i, f) in self.factors.iter().enumerate() {
            for (l, df) in f.value_derivatives(t).iter().enumerate() {
                let dq = pre[i] * *df * suf[i + 1];
                let col = d * dq_as_vec8(&dq);
                jac.set_column(7 * i + l, &nalgebra::DVector::from_column_slice(col.as_slice()));
            }
        }
        jac
    }

    /// Numerator polynomials of the 12 embedding components and the common
    /// denominator (the primal norm polynomial). The embedding is the
    /// rational function `N(t) / nu(t)` componentwise.
    pub fn embedding_polynomials(&self) -> EmbeddingPolynomials {
        let p = self.expand();
        let comp = |pick: fn(&DualQuaternion) -> f64| {
            RealPolynomial::new(p.coeffs().iter().map(pick).collect())
        };
        let w = comp(|c| c.primal[0]);
        let x = comp(|c| c.primal[1]);
        let y = comp(|c| c.primal[2]);
        let z = comp(|c| c.primal[3]);
        let e0 = comp(|c| c.dual[0]);
        let e1 = comp(|c| c.dual[1]);
        let e2 = comp(|c| c.dual[2]);
        let e3 = comp(|c| c.dual[3]);

        let ww = w.mul(&w);
        let xx = x.mul(&x);
        let yy = y.mul(&y);
        let zz = z.mul(&z);
        let nu = ww.add(&xx).add(&yy).add(&zz);

        let two = |p: &RealPolynomial| p.scale(2.0);
        let rot = [
            ww.add(&xx).add(&yy.scale(-1.0)).add(&zz.scale(-1.0)),
            two(&x.mul(&y).add(&w.mul(&z).scale(-1.0))),
            two(&x.mul(&z).add(&w.mul(&y))),
            two(&x.mul(&y).add(&w.mul(&z))),
            ww.add(&xx.scale(-1.0)).add(&yy).add(&zz.scale(-1.0)),
            two(&y.mul(&z).add(&w.mul(&x).scale(-1.0))),
            two(&x.mul(&z).add(&w.mul(&y).scale(-1.0))),
            two(&y.mul(&z).add(&w.mul(&x))),
            ww.add(&xx.scale(-1.0)).add(&yy.scale(-1.0)).add(&zz),
        ];
        // translation numerator 2 Vec(dual * conj(primal))
        let t1 = two(&e0.mul(&x).scale(-1.0).add(&e1.mul(&w)).add(&e2.mul(&z).scale(-1.0)).add(&e3.mul(&y)));
        let t2 = two(&e0.mul(&y).scale(-1.0).add(&e2.mul(&w)).add(&e3.mul(&x).scale(-1.0)).add(&e1.mul(&z)));
        let t3 = two(&e0.mul(&z).scale(-1.0).add(&e3.mul(&w)).add(&e1.mul(&y).scale(-1.0)).add(&e2.mul(&x)));

        let mut numerators = Vec::with_capacity(12);
        numerators.extend(rot);
        numerators.push(t1);
        numerators.push(t2);
        numerators.push(t3);
        EmbeddingPolynomials {
            numerators,
            denominator: nu,
        }
    }
}

fn dq_as_vec8(q: &DualQuaternion) -> SMatrix<f64, 8, 1> {
    SMatrix::<f64, 8, 1>::from_column_slice(&[
        q.primal[0], q.primal[1], q.primal[2], q.primal[3], q.dual[0], q.dual[1], q.dual[2],
        q.dual[3],
    ])
}

/// The embedding of a curve as a tuple of 12 numerator polynomials over a
/// common positive denominator.
#[derive(Debug, Clone)]
pub struct EmbeddingPolynomials {
    pub numerators: Vec<RealPolynomial>,
    pub denominator: RealPolynomial,
}

impl EmbeddingPolynomials {
    pub fn eval(&self, t: f64) -> Embedding12 {
        let nu = self.denominator.eval(t);
        Embedding12::from_fn(|i, _| self.numerators[i].eval(t) / nu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_curve(rng: &mut StdRng, n: usize) -> FactorizedCurve {
        let factors = (0..n)
            .map(|_| {
                let mut d = [0.0; 3];
                loop {
                    for v in d.iter_mut() {
                        *v = rng.random_range(-1.0..1.0);
                    }
                    if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() > 0.2 {
                        break;
                    }
                }
                AxisFactor::new(
                    rng.random_range(-8.0..8.0),
                    d,
                    [
                        rng.random_range(-10.0..10.0),
                        rng.random_range(-10.0..10.0),
                        rng.random_range(-10.0..10.0),
                    ],
                )
            })
            .collect();
        FactorizedCurve::new(factors).unwrap()
    }

    #[test]
    fn axis_factor_to_dq_examples() {
        let f = AxisFactor::new(0.0, [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]);
        let (h, s) = f.to_dq().unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(h, DualQuaternion::new([0.0, -1.0, 0.0, 0.0], [0.0; 4]));

        let f = AxisFactor::new(0.0, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]);
        let (h, _) = f.to_dq().unwrap();
        assert_eq!(h, DualQuaternion::new([0.0, 0.0, 0.0, -1.0], [0.0, 0.0, 1.0, 0.0]));
    }

    #[test]
    fn degenerate_direction_is_rejected() {
        let f = AxisFactor::new(0.0, [0.0, 0.0, 1e-12], [1.0, 0.0, 0.0]);
        assert!(matches!(f.to_dq(), Err(CurveError::DegenerateDirection(_))));
    }

    #[test]
    fn moment_is_orthogonal_to_direction() {
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..100 {
            let c = random_curve(&mut rng, 1);
            let f = &c.factors()[0];
            let m = f.moment();
            let d = &f.direction;
            let dot = m[0] * d[0] + m[1] * d[1] + m[2] * d[2];
            assert!(dot.abs() <= 1e-12 * (1.0 + m.iter().map(|x| x.abs()).fold(0.0, f64::max)));
        }
    }

    #[test]
    fn eval_matches_expanded_polynomial() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..30 {
            let c = random_curve(&mut rng, 3);
            let p = c.expand();
            let t: f64 = rng.random_range(-10.0..10.0);
            let a = c.eval(t);
            let b = p.eval(t);
            assert!((a - b).max_abs() <= 1e-11 * b.max_abs().max(1.0));
        }
    }

    #[test]
    fn expand_single_factor_has_degree_one() {
        let mut rng = StdRng::seed_from_u64(43);
        let c = random_curve(&mut rng, 1);
        assert_eq!(c.expand().degree(), 1);
    }

    #[test]
    fn norm_polynomial_is_real_and_positive() {
        let mut rng = StdRng::seed_from_u64(44);
        for _ in 0..100 {
            let c = random_curve(&mut rng, 3);
            let (nu, junk) = c.expand().norm_poly_unchecked();
            assert!(junk <= 1e-12 * nu.max_abs(), "non-real residual {junk}");
            // strictly positive on a wide sample
            for k in 0..100 {
                let t = -50.0 + k as f64;
                assert!(nu.eval(t) > 0.0);
            }
        }
    }

    #[test]
    fn curve_stays_on_study_quadric() {
        let mut rng = StdRng::seed_from_u64(45);
        for _ in 0..50 {
            let c = random_curve(&mut rng, 3);
            let t: f64 = rng.random_range(-10.0..10.0);
            assert!(c.eval(t).study_residual_relative() <= 1e-12);
        }
    }

    #[test]
    fn embedding_matches_polynomial_form() {
        let mut rng = StdRng::seed_from_u64(46);
        for _ in 0..20 {
            let c = random_curve(&mut rng, 3);
            let ep = c.embedding_polynomials();
            let t: f64 = rng.random_range(-5.0..5.0);
            let direct = c.embedding(t).unwrap();
            let rational = ep.eval(t);
            assert_relative_eq!(direct, rational, epsilon = 1e-9 * direct.norm().max(1.0));
        }
    }

    #[test]
    fn embedding_projective_invariance_under_point_slide() {
        // p -> p + alpha d describes the same axis; the curve is unchanged
        let mut rng = StdRng::seed_from_u64(47);
        for _ in 0..20 {
            let c = random_curve(&mut rng, 3);
            let mut factors = c.factors().to_vec();
            let alpha: f64 = rng.random_range(-3.0..3.0);
            for f in factors.iter_mut() {
                for k in 0..3 {
                    f.point[k] += alpha * f.direction[k];
                }
            }
            let c2 = FactorizedCurve::new(factors).unwrap();
            let t: f64 = rng.random_range(-5.0..5.0);
            let e1 = c.embedding(t).unwrap();
            let e2 = c2.embedding(t).unwrap();
            assert_relative_eq!(e1, e2, epsilon = 1e-10 * e1.norm().max(1.0));
        }
    }

    #[test]
    fn direction_rescaling_reparametrizes_single_factor() {
        // d -> c d keeps axis and geometry; parameter runs c times faster
        let mut rng = StdRng::seed_from_u64(48);
        for _ in 0..20 {
            let c0 = random_curve(&mut rng, 1);
            let f = &c0.factors()[0];
            let scale: f64 = rng.random_range(0.2..5.0);
            let f2 = AxisFactor::new(
                f.h0,
                [f.direction[0] * scale, f.direction[1] * scale, f.direction[2] * scale],
                f.point,
            );
            let c2 = FactorizedCurve::new(vec![f2]).unwrap();
            let t0: f64 = rng.random_range(-5.0..5.0);
            let t2 = f.h0 + scale * (t0 - f.h0);
            let e1 = c0.embedding(t0).unwrap();
            let e2 = c2.embedding(t2).unwrap();
            assert_relative_eq!(e1, e2, epsilon = 1e-10 * e1.norm().max(1.0));
        }
    }

    #[test]
    fn t_derivative_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(49);
        for _ in 0..50 {
            let c = random_curve(&mut rng, 3);
            let t: f64 = rng.random_range(-5.0..5.0);
            let dt = 1e-6 * (1.0 + t.abs());
            let fd = (c.embedding(t + dt).unwrap() - c.embedding(t - dt).unwrap()) / (2.0 * dt);
            let an = c.embedding_t_derivative(t);
            assert_relative_eq!(an, fd, epsilon = 1e-5 * fd.norm().max(1.0));
        }
    }

    #[test]
    fn shape_jacobian_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(50);
        for _ in 0..50 {
            let c = random_curve(&mut rng, 3);
            let t: f64 = rng.random_range(-5.0..5.0);
            let jac = c.shape_jacobian(t);
            let flat = c.shape().to_flat();
            let mut max_rel: f64 = 0.0;
            let mut fd_scale: f64 = 1.0;
            let mut fd_cols = DMatrix::<f64>::zeros(12, flat.len());
            for l in 0..flat.len() {
                let h = 1e-6 * flat[l].abs().max(1.0);
                let mut vp = flat.clone();
                vp[l] += h;
                let mut vm = flat.clone();
                vm[l] -= h;
                let cp = FactorizedCurve::from_shape(&ShapeVector::from_flat(&vp)).unwrap();
                let cm = FactorizedCurve::from_shape(&ShapeVector::from_flat(&vm)).unwrap();
                let col = (cp.embedding(t).unwrap() - cm.embedding(t).unwrap()) / (2.0 * h);
                fd_cols.set_column(l, &nalgebra::DVector::from_column_slice(col.as_slice()));
                fd_scale = fd_scale.max(col.amax());
            }
            for l in 0..flat.len() {
                for r in 0..12 {
                    max_rel = max_rel.max((jac[(r, l)] - fd_cols[(r, l)]).abs());
                }
            }
            assert!(
                max_rel <= 1e-5 * fd_scale,
                "jacobian FD mismatch {max_rel} (scale {fd_scale})"
            );
        }
    }

    #[test]
    fn point_columns_have_zero_rotation_block() {
        let mut rng = StdRng::seed_from_u64(51);
        let c = random_curve(&mut rng, 3);
        let jac = c.shape_jacobian(1.5);
        for i in 0..3 {
            for l in 4..7 {
                for r in 0..9 {
                    assert_eq!(jac[(r, 7 * i + l)], 0.0);
                }
            }
        }
    }

    #[test]
    fn shape_vector_json_round_trip() {
        let mut rng = StdRng::seed_from_u64(52);
        let c = random_curve(&mut rng, 3);
        let shape = c.shape();
        let json = shape.to_json();
        let back = ShapeVector::from_json(&json).unwrap();
        assert_eq!(back, shape);
        let flat = shape.to_flat();
        assert_eq!(ShapeVector::from_flat(&flat), shape);
    }
}
