//! Curve evolution: fit a factorized motion curve to a set of target poses
//! by Gauss-Newton steps on the shape parameters, with foot points computed
//! through the roots of a univariate polynomial.
//!
//! Each iteration: (1) find, per target, the curve parameter closest to the
//! target in the feature metric (the foot point), by solving the
//! denominator-cleared orthogonality condition `<TP - C(t), C'(t)> = 0`;
//! (2) stack the 12-row linearizations `J(t_m) dSp = TP_m - FP_m` of all
//! targets in metric-orthonormal coordinates and solve for the shape update
//! in the least-squares sense; (3) scale the update so the curve does not
//! overshoot, halving further while the objective would increase. After a
//! provisional number of iterations, interval constraints force the foot
//! points to visit the targets in order.

use crate::dualquat::RealPolynomial;
use crate::kinematics::{Embedding12, FeatureCloud, KinematicsError};
use crate::motioncurve::{CurveError, EmbeddingPolynomials, FactorizedCurve, ShapeVector};
use crate::numerics;
use crate::DualQuaternion;
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Singular values below this fraction of the largest are truncated in the
/// shape update. Keeps the step inside the well-determined subspace; the
/// weakly determined directions of a factorized curve (near-gauge motions)
/// otherwise blow the step up by orders of magnitude.
const STEP_TRUNCATION: f64 = 1e-6;

/// Relative Study-condition violation beyond which a target pose is
/// rejected instead of being projected onto the quadric.
const TARGET_PROJECTION_LIMIT: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("target {index} is too far off the Study quadric (relative residual {residual:.3e})")]
    TargetOffQuadric { index: usize, residual: f64 },
    #[error("need at least one target pose")]
    NoTargets,
    #[error("curve denominator vanishes near t = {0}; curve is degenerate there")]
    DegenerateCurve(f64),
    #[error("no foot point candidate found")]
    NoCandidate,
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Ordered target poses on the Study quadric with cached embeddings.
///
/// Construction projects each dual quaternion exactly onto the quadric
/// (removing the dual component parallel to the primal part) as long as the
/// violation is small; printed or hand-entered pose data is rarely exact.
#[derive(Debug, Clone)]
pub struct TargetSet {
    targets: Vec<DualQuaternion>,
    embeddings: Vec<Embedding12>,
}

impl TargetSet {
    pub fn new(poses: &[DualQuaternion], cloud: &FeatureCloud) -> Result<Self, EvolutionError> {
        let _ = cloud; // embeddings are metric independent; kept for symmetry
        if poses.is_empty() {
            return Err(EvolutionError::NoTargets);
        }
        let mut targets = Vec::with_capacity(poses.len());
        let mut embeddings = Vec::with_capacity(poses.len());
        for (index, q) in poses.iter().enumerate() {
            let residual = q.study_residual_relative();
            if residual > TARGET_PROJECTION_LIMIT {
                return Err(EvolutionError::TargetOffQuadric { index, residual });
            }
            let p = q.primal;
            let n = q.primal_norm_sq();
            let dot = q.study_residual();
            let mut d = q.dual;
            for k in 0..4 {
                d[k] -= dot / n * p[k];
            }
            let projected = DualQuaternion::new(p, d);
            let pose = crate::kinematics::dq_to_pose(&projected)?;
            targets.push(projected);
            embeddings.push(pose.embedding());
        }
        Ok(Self {
            targets,
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn targets(&self) -> &[DualQuaternion] {
        &self.targets
    }

    pub fn embeddings(&self) -> &[Embedding12] {
        &self.embeddings
    }
}

/// Closest-point data of one target on the curve.
#[derive(Debug, Clone)]
pub struct FootpointResult {
    pub t: f64,
    pub embedding: Embedding12,
    pub distance: f64,
    /// True when an interval boundary was used instead of an interior
    /// stationary point.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaRule {
    /// Literal printed rule `lambda = max(10 / ||dSp||_inf, 1)`; always
    /// amplifying, kept for reproducing the published behavior.
    Paper,
    /// Step-capping rule `lambda = min(10 / ||dSp||_inf, lambda_cap)`:
    /// large updates are scaled down to at most 10 units per parameter.
    Clamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderingMode {
    /// Unconstrained foot points every iteration.
    None,
    /// After the provisional phase, foot parameters must increase with the
    /// target index.
    Successive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub max_iters: usize,
    /// Stop when the sup norm of the raw shape update drops below this.
    pub stop_tol: f64,
    pub lambda_rule: LambdaRule,
    pub lambda_cap: f64,
    pub ordering: OrderingMode,
    pub seed: u64,
    /// Unconstrained iterations before ordering constraints activate.
    pub provisional_iters: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            stop_tol: 1e-6,
            lambda_rule: LambdaRule::Clamped,
            lambda_cap: 1.0,
            ordering: OrderingMode::Successive,
            seed: 0,
            provisional_iters: 25,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iters < 1 {
            return Err("max_iters must be at least 1".into());
        }
        if !(self.stop_tol > 0.0) {
            return Err("stop_tol must be positive".into());
        }
        if !(self.lambda_cap > 0.0) {
            return Err("lambda_cap must be positive".into());
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }
}

/// Per-iteration record of the evolution.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub step_sup_norm: f64,
    pub lambda: f64,
    pub target_distances: Vec<f64>,
    /// Largest non-real component of the norm polynomial, relative.
    pub study_residual: f64,
    pub rank: usize,
    pub ordered: bool,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionTrace {
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
}

/// Per-curve foot point machinery: embedding numerators `N`, denominator
/// `nu`, the metric image `G N`, and the reduced quadratic form
/// `rho = (N^T G N) / nu`, all as polynomials. Shared across targets.
pub struct FootpointSolver<'a> {
    cloud: &'a FeatureCloud,
    ep: EmbeddingPolynomials,
    gn: Vec<RealPolynomial>,
    nu_der: RealPolynomial,
    rho: RealPolynomial,
    rho_der: RealPolynomial,
}

impl<'a> FootpointSolver<'a> {
    pub fn new(curve: &FactorizedCurve, cloud: &'a FeatureCloud) -> Result<Self, EvolutionError> {
        let ep = curve.embedding_polynomials();
        let g = cloud.gram();
        let mut gn: Vec<RealPolynomial> = Vec::with_capacity(12);
        for i in 0..12 {
            let mut acc = RealPolynomial::new(vec![0.0]);
            for j in 0..12 {
                let gij = g[(i, j)];
                if gij != 0.0 {
                    acc = acc.add(&ep.numerators[j].scale(gij));
                }
            }
            gn.push(acc);
        }
        // rho = (N . G N) / nu, exact division up to rounding
        let mut q_form = RealPolynomial::new(vec![0.0]);
        for i in 0..12 {
            q_form = q_form.add(&ep.numerators[i].mul(&gn[i]));
        }
        let (rho, rem) = q_form.div_rem(&ep.denominator);
        if rem.max_abs() > 1e-6 * q_form.max_abs() {
            // only possible when the curve itself is numerically broken
            return Err(EvolutionError::DegenerateCurve(f64::NAN));
        }
        let nu_der = ep.denominator.derivative();
        let rho_der = rho.derivative();
        Ok(Self {
            cloud,
            ep,
            gn,
            nu_der,
            rho,
            rho_der,
        })
    }

    /// Embedding of the curve at `t` through the rational form.
    pub fn embedding(&self, t: f64) -> Embedding12 {
        self.ep.eval(t)
    }

    pub fn distance(&self, target: &Embedding12, t: f64) -> f64 {
        self.cloud
            .distance_sq(target, &self.embedding(t))
            .sqrt()
    }

    /// The denominator-cleared foot-normal polynomial for one target:
    /// every interior stationary point of the squared metric distance to
    /// the target is among its real roots. Writing the embedding as
    /// `N / nu`, clearing denominators of `<TP nu - N, N' nu - N nu'> = 0`
    /// and cancelling the common factor `nu` leaves
    ///
    /// ```text
    /// nu h' - nu' h + (nu' rho - nu rho') / 2,   h = <TP, N>_G
    /// ```
    ///
    /// of degree at most `4n - 2`.
    pub fn foot_polynomial(&self, target: &Embedding12) -> RealPolynomial {
        let mut h = RealPolynomial::new(vec![0.0]);
        for i in 0..12 {
            h = h.add(&self.gn[i].scale(target[i]));
        }
        let h_der = h.derivative();
        let nu = &self.ep.denominator;
        let a = nu.mul(&h_der).add(&self.nu_der.mul(&h).scale(-1.0));
        let b = self
            .nu_der
            .mul(&self.rho)
            .add(&nu.mul(&self.rho_der).scale(-1.0))
            .scale(0.5);
        a.add(&b).trimmed(1e-12)
    }

    /// Global foot point of one target over `search`, or restricted to
    /// `interval` when given. With an interval and no interior stationary
    /// point inside it, the boundary point with the smaller distance is
    /// returned and flagged as clamped.
    pub fn footpoint(
        &self,
        target: &Embedding12,
        search: (f64, f64),
        interval: Option<(f64, f64)>,
    ) -> Result<FootpointResult, EvolutionError> {
        let poly = self.foot_polynomial(target);
        let window = interval.unwrap_or(search);
        let roots = if poly.degree() >= 1 {
            numerics::real_roots(&poly, window, 1e-9).unwrap_or_default()
        } else {
            Vec::new()
        };
        let mut candidates: Vec<(f64, bool)> = roots.into_iter().map(|r| (r, false)).collect();
        if candidates.is_empty() {
            if interval.is_some() {
                candidates.push((window.0, true));
                candidates.push((window.1, true));
            } else {
                // dense sampling fallback with a Newton polish on the
                // squared-distance derivative
                candidates = self.sampled_candidates(target, window);
            }
        }
        if candidates.is_empty() {
            return Err(EvolutionError::NoCandidate);
        }
        let mut best: Option<FootpointResult> = None;
        for (t, clamped) in candidates {
            let nu_t = self.ep.denominator.eval(t);
            if !(nu_t.abs() > 1e-12) {
                return Err(EvolutionError::DegenerateCurve(t));
            }
            let e = self.embedding(t);
            let d2 = self.cloud.distance_sq(target, &e);
            if best.as_ref().map_or(true, |b| d2 < b.distance * b.distance) {
                best = Some(FootpointResult {
                    t,
                    embedding: e,
                    distance: d2.sqrt(),
                    clamped,
                });
            }
        }
        Ok(best.expect("candidates nonempty"))
    }

    fn sampled_candidates(&self, target: &Embedding12, window: (f64, f64)) -> Vec<(f64, bool)> {
        const SAMPLES: usize = 2048;
        let (lo, hi) = window;
        let mut best_t = lo;
        let mut best_d = f64::INFINITY;
        for k in 0..=SAMPLES {
            let t = lo + (hi - lo) * k as f64 / SAMPLES as f64;
            let d = self.cloud.distance_sq(target, &self.embedding(t));
            if d < best_d {
                best_d = d;
                best_t = t;
            }
        }
        // a few ternary refinement steps around the grid minimum
        let step = (hi - lo) / SAMPLES as f64;
        let (mut a, mut b) = ((best_t - step).max(lo), (best_t + step).min(hi));
        for _ in 0..60 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            let d1 = self.cloud.distance_sq(target, &self.embedding(m1));
            let d2 = self.cloud.distance_sq(target, &self.embedding(m2));
            if d1 < d2 {
                b = m2;
            } else {
                a = m1;
            }
        }
        vec![((a + b) / 2.0, false)]
    }

    /// Foot points of all targets, unconstrained.
    pub fn footpoints(
        &self,
        targets: &TargetSet,
        search: (f64, f64),
    ) -> Result<Vec<FootpointResult>, EvolutionError> {
        targets
            .embeddings()
            .iter()
            .map(|e| self.footpoint(e, search, None))
            .collect()
    }

    /// Foot points constrained to increase strictly with the target index.
    ///
    /// The two currently best-approximated targets act as anchors (falling
    /// back to the parameter extremes, then to the single best target, when
    /// the best two are already out of order); every other target is
    /// restricted to the open interval between its processed predecessor
    /// and the next anchor.
    pub fn ordered_footpoints(
        &self,
        targets: &TargetSet,
        search: (f64, f64),
    ) -> Result<Vec<FootpointResult>, EvolutionError> {
        let free = self.footpoints(targets, search)?;
        let m = free.len();
        if m <= 1 {
            return Ok(free);
        }
        let span = search.1 - search.0;
        let gap = 1e-4 * span;

        // anchor selection
        let mut by_distance: Vec<usize> = (0..m).collect();
        by_distance.sort_by(|&a, &b| free[a].distance.partial_cmp(&free[b].distance).unwrap());
        let (lo_idx, hi_idx) = {
            let (a, b) = (by_distance[0].min(by_distance[1]), by_distance[0].max(by_distance[1]));
            if free[a].t < free[b].t {
                (a, b)
            } else {
                let mut min_i = 0;
                let mut max_i = 0;
                for k in 1..m {
                    if free[k].t < free[min_i].t {
                        min_i = k;
                    }
                    if free[k].t > free[max_i].t {
                        max_i = k;
                    }
                }
                if min_i < max_i {
                    (min_i, max_i)
                } else {
                    (by_distance[0], by_distance[0])
                }
            }
        };
        let anchors: Vec<usize> = if lo_idx == hi_idx {
            vec![lo_idx]
        } else {
            vec![lo_idx, hi_idx]
        };

        let mut out: Vec<Option<FootpointResult>> = vec![None; m];
        let mut lower = search.0;
        for k in 0..m {
            if anchors.contains(&k) && free[k].t > lower {
                lower = free[k].t;
                out[k] = Some(free[k].clone());
                continue;
            }
            let upper = anchors
                .iter()
                .filter(|&&a| a > k && free[a].t > lower)
                .map(|&a| free[a].t)
                .fold(search.1, f64::min);
            let (lo, hi) = (lower + gap, upper - gap);
            let fp = if lo < hi {
                self.footpoint(&targets.embeddings()[k], search, Some((lo, hi)))?
            } else {
                // interval collapsed; place the point midway and flag it
                let t = 0.5 * (lower + upper);
                let e = self.embedding(t);
                FootpointResult {
                    t,
                    distance: self
                        .cloud
                        .distance_sq(&targets.embeddings()[k], &e)
                        .sqrt(),
                    embedding: e,
                    clamped: true,
                }
            };
            lower = fp.t;
            out[k] = Some(fp);
        }
        let result: Vec<FootpointResult> = out.into_iter().map(|f| f.unwrap()).collect();
        debug_assert!(result.windows(2).all(|w| w[0].t < w[1].t));
        Ok(result)
    }
}

/// Sum of squared metric distances between targets and their foot points.
pub fn objective(feet: &[FootpointResult]) -> f64 {
    feet.iter().map(|f| f.distance * f.distance).sum()
}

/// Search window: convex hull of the current foot parameters padded by
/// half the span, falling back to the vertex abscissas of the norm
/// quadratics padded by 5 when no feet exist yet.
fn search_window(curve: &FactorizedCurve, feet: Option<&[FootpointResult]>) -> (f64, f64) {
    if let Some(feet) = feet {
        let lo = feet.iter().map(|f| f.t).fold(f64::INFINITY, f64::min);
        let hi = feet.iter().map(|f| f.t).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi.is_finite() {
            let pad = (0.5 * (hi - lo)).max(1.0);
            return (lo - pad, hi + pad);
        }
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for f in curve.factors() {
        lo = lo.min(f.h0);
        hi = hi.max(f.h0);
    }
    (lo - 5.0, hi + 5.0)
}

struct StepResult {
    shape: ShapeVector,
    feet: Vec<FootpointResult>,
    objective: f64,
    record: IterationRecord,
}

enum StepOutcome {
    Accepted(StepResult),
    Converged(IterationRecord),
    LineSearchFailed(IterationRecord),
}

/// One Gauss-Newton iteration from the given state.
#[allow(clippy::too_many_arguments)]
fn evolution_step(
    curve: &FactorizedCurve,
    feet: &[FootpointResult],
    current_objective: f64,
    targets: &TargetSet,
    cloud: &FeatureCloud,
    config: &EvolutionConfig,
    ordered: bool,
    iteration: usize,
) -> Result<StepOutcome, EvolutionError> {
    let m = targets.len();
    let k = 7 * curve.degree();
    let mut a = DMatrix::<f64>::zeros(12 * m, k);
    let mut b = DVector::<f64>::zeros(12 * m);
    for (mi, (target, foot)) in targets
        .embeddings()
        .iter()
        .zip(feet.iter())
        .enumerate()
    {
        let jac = curve.shape_jacobian(foot.t);
        let resid = cloud.orthonormalize(&(target - foot.embedding));
        for r in 0..12 {
            b[12 * mi + r] = resid[r];
        }
        // orthonormalize the jacobian rows the same way
        for c in 0..k {
            let col = jac.column(c);
            let e = Embedding12::from_fn(|i, _| col[i]);
            let oc = cloud.orthonormalize(&e);
            for r in 0..12 {
                a[(12 * mi + r, c)] = oc[r];
            }
        }
    }
    // column scaling before the rank-revealing solve keeps the parameter
    // groups (h0 ~ 1, d ~ 1, p ~ 1e2) comparable
    let mut col_norms = vec![0.0f64; k];
    for c in 0..k {
        col_norms[c] = a.column(c).norm().max(1e-300);
    }
    for c in 0..k {
        for r in 0..12 * m {
            a[(r, c)] /= col_norms[c];
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > STEP_TRUNCATION * smax)
        .count();
    let step_scaled = svd
        .solve(&b, STEP_TRUNCATION * smax)
        .unwrap_or_else(|_| DVector::zeros(k));
    let step: Vec<f64> = (0..k).map(|c| step_scaled[c] / col_norms[c]).collect();
    let sup = step.iter().fold(0.0f64, |mx, s| mx.max(s.abs()));

    let mut record = IterationRecord {
        iteration,
        objective: current_objective,
        step_sup_norm: sup,
        lambda: 0.0,
        target_distances: feet.iter().map(|f| f.distance).collect(),
        study_residual: {
            let (norm, junk) = curve.expand().norm_poly_unchecked();
            junk / norm.max_abs()
        },
        rank,
        ordered,
        accepted: false,
    };

    if sup < config.stop_tol {
        return Ok(StepOutcome::Converged(record));
    }

    let paper_lambda = (10.0 / sup).max(1.0);
    let mut lambda = match config.lambda_rule {
        LambdaRule::Paper => paper_lambda,
        LambdaRule::Clamped => (10.0 / sup).min(config.lambda_cap),
    };

    let flat = curve.shape().to_flat();
    for _ in 0..=8 {
        let trial: Vec<f64> = flat
            .iter()
            .zip(step.iter())
            .map(|(v, s)| v + lambda * s)
            .collect();
        let shape = ShapeVector::from_flat(&trial);
        let trial_curve = match FactorizedCurve::from_shape(&shape) {
            Ok(c) => c,
            Err(_) => {
                lambda *= 0.5;
                continue;
            }
        };
        let solver = match FootpointSolver::new(&trial_curve, cloud) {
            Ok(s) => s,
            Err(_) => {
                lambda *= 0.5;
                continue;
            }
        };
        let window = search_window(&trial_curve, Some(feet));
        let trial_feet = if ordered {
            solver.ordered_footpoints(targets, window)
        } else {
            solver.footpoints(targets, window)
        };
        let trial_feet = match trial_feet {
            Ok(f) => f,
            Err(_) => {
                lambda *= 0.5;
                continue;
            }
        };
        let trial_obj = objective(&trial_feet);
        if trial_obj <= current_objective {
            record.lambda = lambda;
            record.accepted = true;
            return Ok(StepOutcome::Accepted(StepResult {
                shape,
                feet: trial_feet,
                objective: trial_obj,
                record,
            }));
        }
        lambda *= 0.5;
    }
    Ok(StepOutcome::LineSearchFailed(record))
}

/// Output of [`evolve`]: the best-objective iterate and the full trace.
pub struct EvolutionResult {
    pub curve: FactorizedCurve,
    pub trace: EvolutionTrace,
    pub final_objective: f64,
    pub final_feet: Vec<FootpointResult>,
}

/// Runs the evolution from an initial curve. The first
/// `config.provisional_iters` iterations use unconstrained foot points;
/// afterwards, when `config.ordering` asks for it, foot parameters are
/// constrained to increase with the target index. Returns the iterate with
/// the best objective seen.
pub fn evolve(
    initial: &FactorizedCurve,
    targets: &TargetSet,
    cloud: &FeatureCloud,
    config: &EvolutionConfig,
) -> Result<EvolutionResult, EvolutionError> {
    config.validate().expect("invalid evolution config");
    let mut curve = initial.clone();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut stop = StopReason::MaxIterations;

    let solver = FootpointSolver::new(&curve, cloud)?;
    let mut window = search_window(&curve, None);
    let mut feet = solver.footpoints(targets, window)?;
    let mut obj = objective(&feet);
    let mut ordered = false;

    let mut best_shape = curve.shape();
    let mut best_obj = obj;
    let mut best_feet = feet.clone();

    for it in 0..config.max_iters {
        // switch on ordering constraints after the provisional phase;
        // the reference objective must be re-based under the new
        // constraint state, and the parameter direction flipped when the
        // provisional curve visits the targets in decreasing order
        // (t -> -t is a gauge move: it negates every h0)
        if !ordered && config.ordering == OrderingMode::Successive && it >= config.provisional_iters
        {
            let mut inversions = 0usize;
            let mut pairs = 0usize;
            for i in 0..feet.len() {
                for j in i + 1..feet.len() {
                    pairs += 1;
                    if feet[i].t > feet[j].t {
                        inversions += 1;
                    }
                }
            }
            if 2 * inversions > pairs {
                let mut flat = curve.shape().to_flat();
                for fi in 0..curve.degree() {
                    flat[7 * fi] = -flat[7 * fi];
                }
                curve = FactorizedCurve::from_shape(&ShapeVector::from_flat(&flat))?;
            }
            let solver = FootpointSolver::new(&curve, cloud)?;
            window = search_window(&curve, None);
            feet = solver.ordered_footpoints(targets, window)?;
            obj = objective(&feet);
            ordered = true;
        }

        match evolution_step(&curve, &feet, obj, targets, cloud, config, ordered, it)? {
            StepOutcome::Converged(record) => {
                records.push(record);
                stop = StopReason::Converged;
                break;
            }
            StepOutcome::LineSearchFailed(record) => {
                records.push(record);
                stop = StopReason::LineSearchFailed;
                break;
            }
            StepOutcome::Accepted(result) => {
                records.push(result.record);
                curve = FactorizedCurve::from_shape(&result.shape)?;
                feet = result.feet;
                obj = result.objective;
                if obj <= best_obj {
                    best_obj = obj;
                    best_shape = result.shape;
                    best_feet = feet.clone();
                }
            }
        }
    }

    let curve = FactorizedCurve::from_shape(&best_shape)?;
    Ok(EvolutionResult {
        curve,
        trace: EvolutionTrace {
            records,
            stop,
        },
        final_objective: best_obj,
        final_feet: best_feet,
    })
}

/// Ranges for drawing a random initial shape vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitRanges {
    pub factors: usize,
    pub h0: (f64, f64),
    pub direction: (f64, f64),
    pub point: (f64, f64),
}

impl Default for InitRanges {
    fn default() -> Self {
        Self {
            factors: 3,
            h0: (0.0, 10.0),
            direction: (-1.0, 1.0),
            point: (-100.0, 100.0),
        }
    }
}

impl InitRanges {
    /// Ranges informed by the targets: axis points are drawn from the
    /// bounding box of the target TCP positions, padded by a quarter.
    pub fn for_targets(targets: &TargetSet, factors: usize) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for e in targets.embeddings() {
            for k in 9..12 {
                lo = lo.min(e[k]);
                hi = hi.max(e[k]);
            }
        }
        if !lo.is_finite() || !hi.is_finite() || lo == hi {
            return Self {
                factors,
                ..Self::default()
            };
        }
        let pad = 0.25 * (hi - lo);
        Self {
            factors,
            h0: (0.0, 10.0),
            direction: (-1.0, 1.0),
            point: (lo - pad, hi + pad),
        }
    }
}

/// Deterministic random shape vector; directions are redrawn until they
/// are comfortably nonzero.
pub fn random_init(seed: u64, ranges: &InitRanges) -> ShapeVector {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut flat = Vec::with_capacity(7 * ranges.factors);
    for _ in 0..ranges.factors {
        flat.push(rng.random_range(ranges.h0.0..ranges.h0.1));
        loop {
            let d: [f64; 3] = [
                rng.random_range(ranges.direction.0..ranges.direction.1),
                rng.random_range(ranges.direction.0..ranges.direction.1),
                rng.random_range(ranges.direction.0..ranges.direction.1),
            ];
            if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() > 0.1 {
                flat.extend_from_slice(&d);
                break;
            }
        }
        for _ in 0..3 {
            flat.push(rng.random_range(ranges.point.0..ranges.point.1));
        }
    }
    ShapeVector::from_flat(&flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motioncurve::AxisFactor;
    use approx::assert_relative_eq;

    fn simple_curve() -> FactorizedCurve {
        FactorizedCurve::new(vec![
            AxisFactor::new(1.0, [0.2, -0.5, 0.8], [3.0, -2.0, 1.0]),
            AxisFactor::new(4.0, [-0.6, 0.2, 0.5], [-1.0, 2.5, 0.5]),
            AxisFactor::new(7.0, [0.1, 0.9, -0.3], [0.5, 1.0, -2.0]),
        ])
        .unwrap()
    }

    fn targets_on_curve(curve: &FactorizedCurve, ts: &[f64], cloud: &FeatureCloud) -> TargetSet {
        let poses: Vec<DualQuaternion> = ts.iter().map(|&t| curve.eval(t)).collect();
        TargetSet::new(&poses, cloud).unwrap()
    }

    #[test]
    fn target_on_curve_has_zero_distance_foot() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        let solver = FootpointSolver::new(&curve, &cloud).unwrap();
        for &tstar in &[0.5, 2.0, 5.5] {
            let e = curve.embedding(tstar).unwrap();
            let fp = solver.footpoint(&e, (-10.0, 15.0), None).unwrap();
            assert!((fp.t - tstar).abs() <= 1e-7, "foot {} vs {}", fp.t, tstar);
            assert!(fp.distance <= 1e-9 * (1.0 + e.norm()));
        }
    }

    #[test]
    fn foot_polynomial_degree_bound() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        let solver = FootpointSolver::new(&curve, &cloud).unwrap();
        let e = curve.embedding(2.7).unwrap();
        let poly = solver.foot_polynomial(&e);
        assert!(poly.degree() <= 10, "degree {} > 4n-2", poly.degree());
    }

    #[test]
    fn foot_normal_residual_vanishes_at_roots() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        let solver = FootpointSolver::new(&curve, &cloud).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(81);
        for _ in 0..20 {
            let q = crate::kinematics::tests::random_on_quadric(&mut rng);
            let target = crate::kinematics::dq_to_pose(&q).unwrap().embedding();
            let fp = solver.footpoint(&target, (-10.0, 15.0), None).unwrap();
            if fp.clamped {
                continue;
            }
            let diff = target - fp.embedding;
            let tangent = curve.embedding_t_derivative(fp.t);
            let inner = cloud.inner(&diff, &tangent);
            let scale = cloud.inner(&diff, &diff).sqrt() * cloud.inner(&tangent, &tangent).sqrt();
            assert!(
                inner.abs() <= 1e-8 * scale.max(1e-12),
                "foot normal residual {} vs scale {}",
                inner.abs(),
                scale
            );
        }
    }

    #[test]
    fn foot_distance_beats_dense_grid() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        let solver = FootpointSolver::new(&curve, &cloud).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(82);
        for _ in 0..10 {
            let q = crate::kinematics::tests::random_on_quadric(&mut rng);
            let target = crate::kinematics::dq_to_pose(&q).unwrap().embedding();
            let window = (-10.0, 15.0);
            let fp = solver.footpoint(&target, window, None).unwrap();
            let mut grid_best = f64::INFINITY;
            for k in 0..=10_000 {
                let t = window.0 + (window.1 - window.0) * k as f64 / 10_000.0;
                grid_best = grid_best.min(solver.distance(&target, t));
            }
            assert!(
                fp.distance <= grid_best + 1e-6,
                "analytic {} vs grid {}",
                fp.distance,
                grid_best
            );
        }
    }

    #[test]
    fn interval_restriction_clamps() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        let solver = FootpointSolver::new(&curve, &cloud).unwrap();
        let e = curve.embedding(5.0).unwrap();
        // restrict to an interval that excludes the true foot at t = 5
        let fp = solver.footpoint(&e, (-10.0, 15.0), Some((6.0, 7.0))).unwrap();
        assert!(fp.t >= 6.0 - 1e-12 && fp.t <= 7.0 + 1e-12);
        // boundary is optimal since distance decreases toward t = 5
        assert!(fp.clamped);
        assert_relative_eq!(fp.t, 6.0, epsilon = 1e-9);
    }

    #[test]
    fn ordered_footpoints_increase() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        let targets = targets_on_curve(&curve, &[0.5, 2.0, 3.5, 5.0, 6.5], &cloud);
        let solver = FootpointSolver::new(&curve, &cloud).unwrap();
        let feet = solver
            .ordered_footpoints(&targets, (-10.0, 15.0))
            .unwrap();
        for w in feet.windows(2) {
            assert!(w[0].t < w[1].t);
        }
        // targets already in order: constrained = unconstrained
        let free = solver.footpoints(&targets, (-10.0, 15.0)).unwrap();
        for (a, b) in feet.iter().zip(&free) {
            assert_relative_eq!(a.t, b.t, epsilon = 1e-9);
            assert!(!a.clamped);
        }
    }

    #[test]
    fn colliding_targets_get_clamped_apart() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        // two identical targets collide at one foot; a third anchors the tail
        let q = curve.eval(2.0);
        let q3 = curve.eval(6.0);
        let targets = TargetSet::new(&[q, q, q3], &cloud).unwrap();
        let solver = FootpointSolver::new(&curve, &cloud).unwrap();
        let feet = solver
            .ordered_footpoints(&targets, (-10.0, 15.0))
            .unwrap();
        assert!(feet[0].t < feet[1].t && feet[1].t < feet[2].t);
        assert!(feet[1].clamped, "second colliding target must clamp");
    }

    #[test]
    fn objective_of_exact_targets_is_zero() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        let targets = targets_on_curve(&curve, &[1.0, 3.0, 5.0], &cloud);
        let solver = FootpointSolver::new(&curve, &cloud).unwrap();
        let feet = solver.footpoints(&targets, (-10.0, 15.0)).unwrap();
        assert!(objective(&feet) <= 1e-16);
    }

    #[test]
    fn evolution_step_on_exact_targets_converges_immediately() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        let targets = targets_on_curve(&curve, &[0.5, 2.0, 4.0, 6.0], &cloud);
        let config = EvolutionConfig::default();
        let result = evolve(&curve, &targets, &cloud, &config).unwrap();
        assert_eq!(result.trace.stop, StopReason::Converged);
        assert!(result.trace.records.len() <= 3);
        assert!(result.final_objective <= 1e-12);
    }

    #[test]
    fn perturbed_shape_reconverges() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        let ts: Vec<f64> = (0..8).map(|k| 0.5 + k as f64).collect();
        let targets = targets_on_curve(&curve, &ts, &cloud);
        let mut flat = curve.shape().to_flat();
        let mut rng = rand::rngs::StdRng::seed_from_u64(83);
        for v in flat.iter_mut() {
            *v *= 1.0 + 0.01 * rng.random_range(-1.0..1.0);
        }
        let start = FactorizedCurve::from_shape(&ShapeVector::from_flat(&flat)).unwrap();
        let config = EvolutionConfig {
            max_iters: 400,
            ordering: OrderingMode::None,
            ..Default::default()
        };
        let result = evolve(&start, &targets, &cloud, &config).unwrap();
        assert!(
            result.final_objective <= 1e-8,
            "objective {} after {} iterations ({:?})",
            result.final_objective,
            result.trace.records.len(),
            result.trace.stop
        );
    }

    #[test]
    fn accepted_steps_never_increase_objective() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        let ts: Vec<f64> = (0..6).map(|k| 1.0 + k as f64).collect();
        let targets = targets_on_curve(&curve, &ts, &cloud);
        let mut flat = curve.shape().to_flat();
        let mut rng = rand::rngs::StdRng::seed_from_u64(84);
        for v in flat.iter_mut() {
            *v *= 1.0 + 0.05 * rng.random_range(-1.0..1.0);
        }
        let start = FactorizedCurve::from_shape(&ShapeVector::from_flat(&flat)).unwrap();
        let result = evolve(&start, &targets, &cloud, &EvolutionConfig::default()).unwrap();
        let mut last = f64::INFINITY;
        for r in result.trace.records.iter().filter(|r| r.accepted) {
            assert!(r.objective <= last * (1.0 + 1e-12) || last == f64::INFINITY);
            last = r.objective;
        }
    }

    #[test]
    fn trace_length_bounded_by_max_iters() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        let targets = targets_on_curve(&curve, &[1.0, 2.0], &cloud);
        let config = EvolutionConfig {
            max_iters: 7,
            ..Default::default()
        };
        let result = evolve(&curve, &targets, &cloud, &config).unwrap();
        assert!(result.trace.records.len() <= 7);
    }

    #[test]
    fn random_init_is_deterministic_and_valid() {
        let ranges = InitRanges::default();
        let a = random_init(42, &ranges);
        let b = random_init(42, &ranges);
        assert_eq!(a, b);
        let c = random_init(43, &ranges);
        assert_ne!(a, c);
        for seed in 0..100 {
            let s = random_init(seed, &ranges);
            assert!(FactorizedCurve::from_shape(&s).is_ok());
        }
    }

    #[test]
    fn target_set_rejects_bad_poses() {
        let cloud = FeatureCloud::default();
        assert!(matches!(
            TargetSet::new(&[], &cloud),
            Err(EvolutionError::NoTargets)
        ));
        // badly off-quadric target
        let q = DualQuaternion::new([1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            TargetSet::new(&[q], &cloud),
            Err(EvolutionError::TargetOffQuadric { .. })
        ));
        // mildly off-quadric target is projected
        let q = DualQuaternion::new([1.0, 0.0, 0.0, 0.0], [1e-4, 2.0, 0.0, 0.0]);
        let ts = TargetSet::new(&[q], &cloud).unwrap();
        assert!(ts.targets()[0].study_residual_relative() <= 1e-15);
    }

    #[test]
    fn single_reachable_target_drives_objective_to_zero() {
        let cloud = FeatureCloud::default();
        let curve = simple_curve();
        let targets = targets_on_curve(&curve, &[3.0], &cloud);
        let mut flat = curve.shape().to_flat();
        flat[0] += 0.05;
        flat[8] -= 0.02;
        let start = FactorizedCurve::from_shape(&ShapeVector::from_flat(&flat)).unwrap();
        let config = EvolutionConfig {
            ordering: OrderingMode::None,
            max_iters: 300,
            ..Default::default()
        };
        let result = evolve(&start, &targets, &cloud, &config).unwrap();
        assert!(result.final_objective <= 1e-8, "objective {}", result.final_objective);
    }
}
