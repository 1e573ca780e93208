//! Shared numerical kernels: univariate polynomial roots and min-norm
//! least squares.
//!
//! Root finding goes through the companion matrix of a scaled copy of the
//! polynomial. Both a coefficient max-normalization and a variable scaling
//! `t -> sigma*s` are applied first; the coefficient spread of motion
//! polynomials (1e-2 to 1e3 in the same polynomial is typical) otherwise
//! ruins the companion matrix conditioning.

use crate::dualquat::RealPolynomial;
use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("root finding failed: {0}")]
    ConditioningFailure(String),
}

/// Variable scale sigma chosen so the scaled polynomial has comparable
/// leading and trailing coefficient magnitudes.
fn variable_scale(p: &RealPolynomial) -> f64 {
    let n = p.degree();
    let lead = p.leading().abs();
    let tail = p
        .coeffs()
        .iter()
        .rev()
        .find(|c| c.abs() > 0.0)
        .map(|c| c.abs())
        .unwrap_or(1.0);
    if lead == 0.0 || tail == 0.0 || n == 0 {
        return 1.0;
    }
    let sigma = (tail / lead).powf(1.0 / n as f64);
    if sigma.is_finite() && sigma > 1e-8 && sigma < 1e8 {
        sigma
    } else {
        1.0
    }
}

/// All complex roots of `p`, via eigenvalues of the companion matrix of the
/// scaled polynomial.
pub fn complex_roots(p: &RealPolynomial) -> Result<Vec<Complex<f64>>, NumericsError> {
    let p = p.trimmed(1e-300); // drop exact-zero leading terms only
    let n = p.degree();
    if n == 0 {
        return Ok(Vec::new());
    }
    let sigma = variable_scale(&p);
    // q(s) = p(sigma s) / (lead * sigma^n), monic in s
    let lead = p.leading();
    let coeffs: Vec<f64> = p
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| c / lead / sigma.powi(i as i32))
        .collect();
    // companion matrix of s^n + c1 s^(n-1) + ... + cn, top-row form
    let mut m2 = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m2[(0, i)] = -coeffs[i + 1];
    }
    for i in 1..n {
        m2[(i, i - 1)] = 1.0;
    }
    let eig = m2.complex_eigenvalues();
    let mut roots: Vec<Complex<f64>> = eig.iter().map(|z| z * sigma).collect();
    // a few Newton polish steps in complex arithmetic tighten eigenvalues
    for z in roots.iter_mut() {
        for _ in 0..3 {
            let mut val = Complex::<f64>::new(0.0, 0.0);
            let mut der = Complex::<f64>::new(0.0, 0.0);
            for c in p.coeffs() {
                der = der * *z + val;
                val = val * *z + Complex::new(*c, 0.0);
            }
            if der.norm() > 0.0 {
                let step = val / der;
                if step.norm().is_finite() && step.norm() < 1.0 + z.norm() {
                    *z -= step;
                }
            }
        }
    }
    if roots.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(NumericsError::ConditioningFailure(
            "companion eigenvalues not finite".into(),
        ));
    }
    Ok(roots)
}

/// Real roots of `p` inside `[lo, hi]`, sorted ascending, multiplicities
/// collapsed. Each returned root `r` satisfies
/// `|p(r)| <= tol * max|coeff| * max(1, |r|)^deg`.
pub fn real_roots(
    p: &RealPolynomial,
    range: (f64, f64),
    tol: f64,
) -> Result<Vec<f64>, NumericsError> {
    let (lo, hi) = range;
    let scale = p.max_abs();
    let deg = p.degree();
    let deriv = p.derivative();
    let imag_tol = 1e-7;
    let mut out: Vec<f64> = Vec::new();
    for z in complex_roots(p)? {
        let mag = z.norm().max(1.0);
        if z.im.abs() > imag_tol * mag {
            continue;
        }
        let mut r = z.re;
        // polish on the real line
        for _ in 0..3 {
            let d = deriv.eval(r);
            if d != 0.0 {
                let step = p.eval(r) / d;
                if step.is_finite() && step.abs() < 1.0 + r.abs() {
                    r -= step;
                }
            }
        }
        if r < lo || r > hi {
            continue;
        }
        let bound = tol * scale * r.abs().max(1.0).powi(deg as i32);
        if p.eval(r).abs() > bound {
            continue;
        }
        out.push(r);
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // collapse clusters closer than the spacing tolerance
    let spacing = tol * (hi - lo).abs().max(1.0);
    let mut dedup: Vec<f64> = Vec::new();
    for r in out {
        if dedup.last().map_or(true, |l| (r - l).abs() > spacing) {
            dedup.push(r);
        }
    }
    Ok(dedup)
}

/// Minimum-norm least squares solution of `A x = b`.
///
/// Singular values below `1e-10 * sigma_max` are treated as zero, so rank
/// deficient systems return the shortest minimizer instead of blowing up.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = 1e-10 * smax;
    svd.solve(b, eps)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Numerical rank with the same threshold as [`lstsq_min_norm`].
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    svd.singular_values.iter().filter(|s| **s > 1e-10 * smax).count()
}
