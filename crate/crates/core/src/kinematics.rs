//! Study's kinematic mapping, the 12-dimensional affine embedding of SE(3),
//! and the feature-point metric.
//!
//! A rigid displacement `p' = A p + a` is embedded as the 12-vector of the
//! nine rotation entries (row major) followed by the three translation
//! entries. Equipping the end effector with feature points `fp_i` turns the
//! embedding space into a Euclidean space: the squared distance between two
//! displacements is the sum of squared distances of the displaced feature
//! points, computable as a quadratic form with a constant 12x12 Gram matrix
//! that depends only on the number of points, their barycenter and their
//! second moment.

use crate::dualquat::{DualQuaternion, TOL_INV};
use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default relative tolerance on the Study condition when interpreting a
/// dual quaternion as a pose.
pub const TOL_STUDY: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("dual quaternion has numerically zero primal part; no pose")]
    DegeneratePose,
    #[error("dual quaternion violates the Study condition (relative residual {0:.3e})")]
    OffQuadric(f64),
    #[error("feature points do not affinely span 3-space")]
    DegenerateCloud,
}

/// Rigid displacement `p' = A p + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Flattened pose: rotation entries row major, then the translation.
pub type Embedding12 = SVector<f64, 12>;

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn embedding(&self) -> Embedding12 {
        let mut e = Embedding12::zeros();
        for r in 0..3 {
            for c in 0..3 {
                e[3 * r + c] = self.rotation[(r, c)];
            }
        }
        for k in 0..3 {
            e[9 + k] = self.translation[k];
        }
        e
    }

    pub fn from_embedding(e: &Embedding12) -> Self {
        let mut rotation = Matrix3::zeros();
        for r in 0..3 {
            for c in 0..3 {
                rotation[(r, c)] = e[3 * r + c];
            }
        }
        Self {
            rotation,
            translation: Vector3::new(e[9], e[10], e[11]),
        }
    }
}

/// Relative orientation / position error between two poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// Rotation angle of `B * A^T` in radians, in `[0, pi]`.
    pub angle: f64,
    /// Euclidean distance between the translations.
    pub distance: f64,
}

/// Angle and distance between two poses. The angle comes from the trace of
/// the relative rotation, clamped before `acos` so rounding can never
/// produce NaN.
pub fn pose_error(a: &Pose, b: &Pose) -> PoseError {
    let rel = b.rotation * a.rotation.transpose();
    let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    PoseError {
        angle: c.acos(),
        distance: (a.translation - b.translation).norm(),
    }
}

/// Unnormalized rotation matrix of a quaternion: `B(p) = |p|^2 * R(p/|p|)`.
/// Entries are quadratic in `p`, which keeps everything polynomial until
/// the final division by the primal norm.
pub(crate) fn rotation_unnormalized(p: &[f64; 4]) -> Matrix3<f64> {
    let (w, x, y, z) = (p[0], p[1], p[2], p[3]);
    Matrix3::new(
        w * w + x * x - y * y - z * z,
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    )
}

fn quat_mul(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Interprets an on-quadric dual quaternion as a pose.
///
/// The rotation is that of the primal quaternion; the translation is read
/// from `2 * Vec(dual * conj(primal)) / |primal|^2`, which agrees with the
/// sandwich action of the dual quaternion on points (see
/// [`act_on_point`]). Projectively invariant: `q` and `lambda*q` give the
/// same pose.
pub fn dq_to_pose(q: &DualQuaternion) -> Result<Pose, KinematicsError> {
    let n = q.primal_norm_sq();
    let scale = q.max_abs();
    if n <= TOL_INV * scale * scale || n == 0.0 {
        return Err(KinematicsError::DegeneratePose);
    }
    let rel = q.study_residual_relative();
    if rel > TOL_STUDY {
        return Err(KinematicsError::OffQuadric(rel));
    }
    Ok(dq_to_pose_unchecked(q))
}

/// Same conversion without the Study-condition gate; used internally on
/// values constructed to lie on the quadric.
pub(crate) fn dq_to_pose_unchecked(q: &DualQuaternion) -> Pose {
    let n = q.primal_norm_sq();
    let rotation = rotation_unnormalized(&q.primal) / n;
    let f = quat_mul(&q.dual, &[q.primal[0], -q.primal[1], -q.primal[2], -q.primal[3]]);
    let translation = Vector3::new(f[1], f[2], f[3]) * (2.0 / n);
    Pose {
        rotation,
        translation,
    }
}

/// Applies the displacement represented by `q` to a point via the dual
/// quaternion sandwich `q * (1 + eps x) * (conj(primal) - eps conj(dual))`,
/// normalized by the primal norm. Serves as the independent oracle for
/// [`dq_to_pose`].
pub fn act_on_point(q: &DualQuaternion, x: &Vector3<f64>) -> Vector3<f64> {
    let n = q.primal_norm_sq();
    let xq = [0.0, x[0], x[1], x[2]];
    let pc = [q.primal[0], -q.primal[1], -q.primal[2], -q.primal[3]];
    let dc = [q.dual[0], -q.dual[1], -q.dual[2], -q.dual[3]];
    let rot = quat_mul(&quat_mul(&q.primal, &xq), &pc);
    let tr_a = quat_mul(&q.dual, &pc);
    let tr_b = quat_mul(&q.primal, &dc);
    Vector3::new(
        (rot[1] + tr_a[1] - tr_b[1]) / n,
        (rot[2] + tr_a[2] - tr_b[2]) / n,
        (rot[3] + tr_a[3] - tr_b[3]) / n,
    )
}

/// Finite set of feature points rigidly attached to the end effector,
/// together with the derived Gram matrix of the induced metric. The
/// barycenter is the tool center point (TCP).
#[derive(Debug, Clone)]
pub struct FeatureCloud {
    points: Vec<Vector3<f64>>,
    barycenter: Vector3<f64>,
    gram: SMatrix<f64, 12, 12>,
    /// Cholesky factor L with `G = L * L^T`, for switching to coordinates
    /// in which the metric is the standard one.
    chol: SMatrix<f64, 12, 12>,
}

/// Serialized form: `{"points": [[x, y, z], ...]}`.
#[derive(Serialize, Deserialize)]
struct FeatureCloudRepr {
    points: Vec<[f64; 3]>,
}

impl FeatureCloud {
    /// Builds a cloud from at least four points that affinely span 3-space.
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self, KinematicsError> {
        if points.len() < 4 {
            return Err(KinematicsError::DegenerateCloud);
        }
        let n = points.len() as f64;
        let barycenter = points.iter().sum::<Vector3<f64>>() / n;
        let gram = Self::gram_matrix(&points);
        // positive definiteness of the full 12x12 form is exactly the
        // affine-span condition
        let chol = nalgebra::Cholesky::new(gram)
            .ok_or(KinematicsError::DegenerateCloud)?
            .l();
        Ok(Self {
            points,
            barycenter,
            gram,
            chol,
        })
    }

    /// Cube-vertex-free default: the six points `(+-u, 0, 0), (0, +-u, 0),
    /// (0, 0, +-u)` with barycenter at the origin.
    pub fn default_octahedral(u: f64) -> Self {
        let mut pts = Vec::with_capacity(6);
        for k in 0..3 {
            for s in [1.0f64, -1.0] {
                let mut v = Vector3::zeros();
                v[k] = s * u;
                pts.push(v);
            }
        }
        Self::new(pts).expect("octahedral cloud is never degenerate")
    }

    fn gram_matrix(points: &[Vector3<f64>]) -> SMatrix<f64, 12, 12> {
        let n = points.len() as f64;
        let mut second = Matrix3::<f64>::zeros();
        let mut first = Vector3::<f64>::zeros();
        for p in points {
            second += p * p.transpose();
            first += p;
        }
        let mut g = SMatrix::<f64, 12, 12>::zeros();
        // per-row blocks: <alpha, beta> = sum_m r_m(A1)^T S r_m(A2)
        //                              + r_m(A1) . first * a2_m + a1_m * first . r_m(A2)
        //                              + n * a1 . a2
        for m in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    g[(3 * m + i, 3 * m + j)] = second[(i, j)];
                }
                g[(3 * m + i, 9 + m)] += first[i];
                g[(9 + m, 3 * m + i)] += first[i];
            }
            g[(9 + m, 9 + m)] = n;
        }
        g
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn tcp(&self) -> Vector3<f64> {
        self.barycenter
    }

    pub fn gram(&self) -> &SMatrix<f64, 12, 12> {
        &self.gram
    }

    /// Maps an embedding into coordinates where the feature metric is the
    /// standard Euclidean one (multiplication by `L^T`).
    pub fn orthonormalize(&self, e: &Embedding12) -> Embedding12 {
        self.chol.transpose() * e
    }

    pub fn inner(&self, a: &Embedding12, b: &Embedding12) -> f64 {
        (a.transpose() * self.gram * b)[(0, 0)]
    }

    pub fn distance_sq(&self, a: &Embedding12, b: &Embedding12) -> f64 {
        let d = a - b;
        self.inner(&d, &d).max(0.0)
    }

    /// Feature-point distance between two poses.
    pub fn motion_distance(&self, a: &Pose, b: &Pose) -> f64 {
        self.distance_sq(&a.embedding(), &b.embedding()).sqrt()
    }

    /// Direct evaluation of the metric by displacing every feature point;
    /// the quadratic-form path must agree with this.
    pub fn motion_distance_brute_force(&self, a: &Pose, b: &Pose) -> f64 {
        self.points
            .iter()
            .map(|fp| (a.apply(fp) - b.apply(fp)).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let repr: FeatureCloudRepr = serde_json::from_str(json)?;
        Self::new(repr.points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect())
            .map_err(|e| serde::de::Error::custom(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let repr = FeatureCloudRepr {
            points: self.points.iter().map(|p| [p[0], p[1], p[2]]).collect(),
        };
        serde_json::to_string_pretty(&repr).expect("feature cloud serialization")
    }
}

impl Default for FeatureCloud {
    fn default() -> Self {
        Self::default_octahedral(1.0)
    }
}

/// Differential of the map `q -> embedding(pose(q))` as a 12x8 matrix
/// acting on `(d primal, d dual)`. Shared by the curve tangent and the
/// shape-parameter Jacobian.
pub(crate) fn embedding_differential(q: &DualQuaternion) -> SMatrix<f64, 12, 8> {
    let n = q.primal_norm_sq();
    let b = rotation_unnormalized(&q.primal);
    let pc = [q.primal[0], -q.primal[1], -q.primal[2], -q.primal[3]];
    let w = quat_mul(&q.dual, &pc);
    let mut out = SMatrix::<f64, 12, 8>::zeros();
    for k in 0..4 {
        // derivative of B wrt primal_k
        let mut e = [0.0; 4];
        e[k] = 1.0;
        let (dw, dx, dy, dz) = (e[0], e[1], e[2], e[3]);
        let (pw, px, py, pz) = (q.primal[0], q.primal[1], q.primal[2], q.primal[3]);
        let db = Matrix3::new(
            2.0 * (pw * dw + px * dx - py * dy - pz * dz),
            2.0 * (dx * py + px * dy - dw * pz - pw * dz),
            2.0 * (dx * pz + px * dz + dw * py + pw * dy),
            2.0 * (dx * py + px * dy + dw * pz + pw * dz),
            2.0 * (pw * dw - px * dx + py * dy - pz * dz),
            2.0 * (dy * pz + py * dz - dw * px - pw * dx),
            2.0 * (dx * pz + px * dz - dw * py - pw * dy),
            2.0 * (dy * pz + py * dz + dw * px + pw * dx),
            2.0 * (pw * dw - px * dx - py * dy + pz * dz),
        );
        let dn = 2.0 * q.primal[k];
        let da = db / n - b * (dn / (n * n));
        let ec = [e[0], -e[1], -e[2], -e[3]];
        let dwk = quat_mul(&q.dual, &ec);
        for r in 0..3 {
            for c in 0..3 {
                out[(3 * r + c, k)] = da[(r, c)];
            }
        }
        for r in 0..3 {
            out[(9 + r, k)] = 2.0 * dwk[1 + r] / n - 2.0 * w[1 + r] * dn / (n * n);
        }
        // derivative wrt dual_k only moves the translation
        let dwd = quat_mul(&e, &pc);
        for r in 0..3 {
            out[(9 + r, 4 + k)] = 2.0 * dwd[1 + r] / n;
        }
    }
    out
}
