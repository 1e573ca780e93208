//! Factorization of motion polynomials into revolute linear factors, and
//! assembly of open chains into closed overconstrained 6R linkages.
//!
//! A generic motion polynomial `P` of degree `n` splits as
//! `P = (t - h_1) ... (t - h_n)` in `n!` ways, one per ordering of the
//! irreducible quadratic factors `M_i` of the real norm polynomial
//! `P * conj(P)`. The rightmost factor for a chosen `M` comes from the
//! linear remainder `R = r1 t + r2` of `P mod M` as `h = -r1^{-1} r2`;
//! dividing `P` by `(t - h)` and repeating with the remaining quadratics
//! yields the full chain. Combining two chains from different orderings
//! base-to-distal and distal-to-base closes an overconstrained loop.

use crate::dualquat::{DQPolynomial, DualQuatError, DualQuaternion, RealPolynomial};
use crate::numerics::{self, NumericsError};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Roots of the norm polynomial closer to the real axis than this (relative
/// to their magnitude) violate the genericity assumption.
pub const TOL_GENERIC: f64 = 1e-7;

/// Acceptable relative residual when a chain reconstructs its polynomial.
pub const TOL_CHAIN: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum FactorizationError {
    #[error("norm polynomial has a (near-)real root at t = {0:.6}; motion is not generic")]
    NonGeneric(f64),
    #[error("linear remainder has non-invertible leading coefficient; motion is not generic")]
    NotInvertible,
    #[error("extracted factor leaves relative residual {0:.3e}, beyond tolerance")]
    ResidualTooLarge(f64),
    #[error("chains are identical; a linkage needs two distinct factorizations")]
    IdenticalChains,
    #[error("joint has (numerically) no rotation axis")]
    DegenerateJoint,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    DualQuat(#[from] DualQuatError),
}

/// Monic irreducible quadratic `t^2 + b t + c` over the reals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFactor {
    pub b: f64,
    pub c: f64,
}

impl QuadraticFactor {
    pub fn discriminant(&self) -> f64 {
        self.b * self.b - 4.0 * self.c
    }

    pub fn poly(&self) -> RealPolynomial {
        RealPolynomial::new(vec![1.0, self.b, self.c])
    }

    /// Abscissa of the vertex, `-b/2`; the real part of the root pair.
    pub fn vertex(&self) -> f64 {
        -self.b / 2.0
    }
}

/// Serial chain of revolute joints from one factorization order. The first
/// joint is the fixed base, the last the distal joint.
#[derive(Debug, Clone)]
pub struct OpenChain {
    pub joints: Vec<DualQuaternion>,
    /// Indices into the quadratic factor list, in extraction order
    /// (rightmost joint first).
    pub permutation: Vec<usize>,
}

/// Closed 6R loop built from two distinct factorizations of one motion.
#[derive(Debug, Clone)]
pub struct Linkage6R {
    pub chain_a: OpenChain,
    pub chain_b: OpenChain,
}

/// Splits an even-degree real polynomial with no real roots into monic
/// irreducible quadratic factors, one per conjugate root pair, sorted by
/// linear coefficient for determinism.
pub fn quadratic_factors(
    norm: &RealPolynomial,
) -> Result<Vec<QuadraticFactor>, FactorizationError> {
    let roots = numerics::complex_roots(norm)?;
    let mut quads: Vec<QuadraticFactor> = Vec::new();
    for z in &roots {
        let mag = z.norm().max(1.0);
        if z.im.abs() <= TOL_GENERIC * mag {
            return Err(FactorizationError::NonGeneric(z.re));
        }
        if z.im > 0.0 {
            quads.push(QuadraticFactor {
                b: -2.0 * z.re,
                c: z.norm_sqr(),
            });
        }
    }
    if 2 * quads.len() != norm.degree() {
        return Err(FactorizationError::NonGeneric(f64::NAN));
    }
    quads.sort_by(|p, q| p.b.partial_cmp(&q.b).unwrap());
    // reconstruction check against the monic input
    let monic = norm.monic();
    let mut rec = RealPolynomial::new(vec![1.0]);
    for q in &quads {
        rec = rec.mul(&q.poly());
    }
    let mut err: f64 = 0.0;
    for (x, y) in rec.coeffs().iter().zip(monic.coeffs()) {
        err = err.max((x - y).abs());
    }
    if err > 1e-9 * monic.max_abs() {
        return Err(FactorizationError::Numerics(
            NumericsError::ConditioningFailure(format!(
                "quadratic factor reconstruction residual {err:.3e}"
            )),
        ));
    }
    Ok(quads)
}

/// Extracts the rightmost linear factor of `p` associated with the
/// quadratic norm factor `m`: computes the unique right zero
/// `h = -r1^{-1} r2` of the linear remainder of `p mod m`, then divides
/// `p` by `(t - h)`. Returns the joint and the quotient for iteration.
pub fn extract_rightmost(
    p: &DQPolynomial,
    m: &QuadraticFactor,
) -> Result<(DualQuaternion, DQPolynomial), FactorizationError> {
    assert!(p.degree() >= 2, "need degree >= 2 to divide by a quadratic");
    let (_, rem) = p.div_real(&m.poly());
    let r1 = rem.coeffs()[rem.coeffs().len() - 2];
    let r2 = rem.coeffs()[rem.coeffs().len() - 1];
    let scale = p.max_abs();
    if r1.primal_norm_sq().sqrt() <= 1e-10 * scale {
        return Err(FactorizationError::NotInvertible);
    }
    let h = -(r1.inverse().map_err(|_| FactorizationError::NotInvertible)? * r2);
    let (quot, res) = p.div_linear(h);
    let rel = res.max_abs() / scale;
    if rel > TOL_CHAIN {
        return Err(FactorizationError::ResidualTooLarge(rel));
    }
    Ok((h, quot))
}

/// Factorizes `p` using the quadratics of its norm polynomial in the given
/// order (one permutation = one chain). The first permutation entry
/// produces the rightmost (distal) joint; the returned joints are ordered
/// base first.
pub fn factorize(
    p: &DQPolynomial,
    quads: &[QuadraticFactor],
    permutation: &[usize],
) -> Result<OpenChain, FactorizationError> {
    assert_eq!(permutation.len(), quads.len());
    let n = p.degree();
    assert_eq!(n, quads.len(), "one quadratic per linear factor");
    let mut joints_rev: Vec<DualQuaternion> = Vec::with_capacity(n);
    let mut current = p.clone();
    for &qi in &permutation[..n - 1] {
        let (h, quot) = extract_rightmost(&current, &quads[qi])?;
        joints_rev.push(h);
        current = quot;
    }
    // the remaining linear polynomial is the base factor
    debug_assert_eq!(current.degree(), 1);
    let c0 = current.coeffs()[0];
    let c1 = current.coeffs()[1];
    let h = -(c0
        .inverse()
        .map_err(|_| FactorizationError::NotInvertible)?
        * c1);
    joints_rev.push(h);
    joints_rev.reverse();
    Ok(OpenChain {
        joints: joints_rev,
        permutation: permutation.to_vec(),
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    heap_permute(&mut items, n, &mut out);
    out.sort();
    out
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k % 2 == 0 {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

/// All factorizations of a generic motion polynomial: one chain per
/// permutation of the quadratic factors, ordered by permutation index,
/// with chains whose joint sets coincide deduplicated.
pub fn all_factorizations(p: &DQPolynomial) -> Result<Vec<OpenChain>, FactorizationError> {
    let norm = p.norm_poly(1e-8)?;
    let quads = quadratic_factors(&norm)?;
    let mut chains: Vec<OpenChain> = Vec::new();
    for perm in permutations(quads.len()) {
        let chain = factorize(p, &quads, &perm)?;
        let dup = chains.iter().any(|c| chains_coincide(c, &chain));
        if !dup {
            chains.push(chain);
        }
    }
    Ok(chains)
}

fn chains_coincide(a: &OpenChain, b: &OpenChain) -> bool {
    a.joints.len() == b.joints.len()
        && a.joints
            .iter()
            .zip(&b.joints)
            .all(|(x, y)| x.projective_distance(y) <= 1e-8)
}

impl OpenChain {
    /// Product `(t - h_1) ... (t - h_n)`, monic.
    pub fn polynomial(&self) -> DQPolynomial {
        let mut p = DQPolynomial::linear_from_root(self.joints[0]);
        for h in &self.joints[1..] {
            p = p.mul(&DQPolynomial::linear_from_root(*h));
        }
        p
    }

    /// Maximum projective distance between the chain motion and `p` over
    /// sampled parameter values. The samples cover the vertex span of the
    /// norm quadratics, widened by half a span on each side.
    pub fn verify(&self, p: &DQPolynomial, samples: usize) -> f64 {
        let own = self.polynomial();
        let (lo, hi) = sample_range(p);
        let mut worst: f64 = 0.0;
        for k in 0..samples {
            let t = lo + (hi - lo) * k as f64 / (samples.max(2) - 1) as f64;
            worst = worst.max(own.eval(t).projective_distance(&p.eval(t)));
        }
        worst
    }

    /// Pluecker axes `(direction, moment)` of every joint, normalized to
    /// unit direction. The sign convention matches the axis-factor
    /// coefficient pattern: direction is the negated primal vector part,
    /// moment the dual vector part.
    pub fn axes(&self) -> Result<Vec<(Vector3<f64>, Vector3<f64>)>, FactorizationError> {
        self.joints.iter().map(joint_axis).collect()
    }
}

/// Parameter window that brackets the interesting part of a motion: the
/// vertex abscissas of the norm quadratics, padded by half the span
/// (at least 1).
fn sample_range(p: &DQPolynomial) -> (f64, f64) {
    let (norm, _) = p.norm_poly_unchecked();
    let vertices: Vec<f64> = match numerics::complex_roots(&norm) {
        Ok(roots) => roots.iter().filter(|z| z.im > 0.0).map(|z| z.re).collect(),
        Err(_) => Vec::new(),
    };
    if vertices.is_empty() {
        return (-5.0, 5.0);
    }
    let lo = vertices.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vertices.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.5).max(1.0);
    (lo - pad, hi + pad)
}

/// Axis of a single revolute joint value.
pub fn joint_axis(h: &DualQuaternion) -> Result<(Vector3<f64>, Vector3<f64>), FactorizationError> {
    let dir = Vector3::new(-h.primal[1], -h.primal[2], -h.primal[3]);
    let n = dir.norm();
    if n <= 1e-10 * h.max_abs().max(1.0) {
        return Err(FactorizationError::DegenerateJoint);
    }
    let moment = Vector3::new(h.dual[1], h.dual[2], h.dual[3]) / n;
    Ok((dir / n, moment))
}

/// Combines two chains over the same motion into a closed 6R loop.
///
/// Joints run base-to-distal through `a`, then distal-to-base through `b`.
/// Both chains must factor the same polynomial (checked numerically via
/// closure) and must not be joint-for-joint identical.
pub fn make_linkage(a: OpenChain, b: OpenChain) -> Result<Linkage6R, FactorizationError> {
    if chains_coincide(&a, &b) {
        return Err(FactorizationError::IdenticalChains);
    }
    let pa = a.polynomial();
    let closure = b.verify(&pa, 50);
    if closure > TOL_CHAIN {
        return Err(FactorizationError::ResidualTooLarge(closure));
    }
    Ok(Linkage6R {
        chain_a: a,
        chain_b: b,
    })
}

impl Linkage6R {
    /// Joint values around the loop: chain A base-to-distal, then chain B
    /// distal-to-base.
    pub fn loop_joints(&self) -> Vec<DualQuaternion> {
        let mut joints = self.chain_a.joints.clone();
        joints.extend(self.chain_b.joints.iter().rev().cloned());
        joints
    }

    /// Maximum projective mismatch of the two chain motions over sampled
    /// parameters; the closure residual of the loop.
    pub fn closure_residual(&self, samples: usize) -> f64 {
        self.chain_b.verify(&self.chain_a.polynomial(), samples)
    }
}
