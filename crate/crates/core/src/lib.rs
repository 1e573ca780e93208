//! Synthesis of overconstrained 6R linkages from a set of target poses.
//!
//! The pipeline works on rational motion curves contained in the Study
//! quadric, represented in factorized form `C(t) = (t - h_1) ... (t - h_n)`
//! with dual quaternion linear factors. It has three stages:
//!
//! 1. **Fit**: evolve the shape parameters of a factorized curve so that its
//!    closest points (foot points) approach the target poses, measured in a
//!    feature-point metric on a 12-dimensional affine embedding of SE(3)
//!    ([`evolution`], [`kinematics`]).
//! 2. **Factor**: split the fitted motion polynomial into linear factors,
//!    one per revolute joint, using the quadratic factors of its norm
//!    polynomial ([`factorization`]).
//! 3. **Assemble**: combine open chains obtained from different
//!    factorization orders into closed overconstrained 6R linkages.
//!
//! The dual quaternion and polynomial algebra lives in [`dualquat`], shared
//! numerical kernels (polynomial roots, min-norm least squares) in
//! [`numerics`].

pub mod dualquat;
pub mod evolution;
pub mod factorization;
pub mod kinematics;
pub mod motioncurve;
pub mod numerics;

pub use dualquat::{DQPolynomial, DualNumber, DualQuaternion, RealPolynomial};
pub use evolution::{EvolutionConfig, EvolutionTrace, FootpointResult, TargetSet};
pub use factorization::{Linkage6R, OpenChain, QuadraticFactor};
pub use kinematics::{Embedding12, FeatureCloud, Pose, PoseError};
pub use motioncurve::{AxisFactor, FactorizedCurve, ShapeVector};
