//! Explicit `(1+ε)`-embeddings of `ℓ₂ⁿ` into `N`-dimensional spaces whose norm
//! is invariant under coordinate permutations, together with the numerics
//! needed to build and check them.
//!
//! The matrix `T` repeats the radial projection `√n·x/|x|` of every integer
//! point `x` in a ball, `m′(x)` times, where `m′` discretizes a Gaussian of
//! scale `σ`. Because the target norm ignores order, `T` is stored as distinct
//! rows with multiplicities ([`RowGroupMatrix`]) and its images as
//! [`WeightedMultiset`]s, so cost scales with the number of lattice points
//! rather than with `N`.
//!
//! ```
//! use permembed::{build_matrix, plan_parameters, PlanRequest, PermInvariantNorm, RowGroupMatrix};
//!
//! let spec = plan_parameters(&PlanRequest::desk(0.1, 3, 1_000_000, 2.0, 8.0)).unwrap();
//! let t: RowGroupMatrix<f64> = build_matrix(&spec).unwrap();
//! let image = t.apply(&[0.6, 0.0, 0.8]).unwrap();
//! assert_eq!(image.total(), 1_000_000);
//! let l2: PermInvariantNorm = "lp:2".parse().unwrap();
//! assert!(l2.eval(&image).unwrap() > 0.0);
//! ```
//!
//! Numeric code is generic over [`Real`] (`f32`, `f64`); the lattice and file
//! formats work in `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dd;
pub mod embedding;
pub mod error;
pub mod files;
pub mod hp;
pub mod lattice;
pub mod norms;
pub mod quad;
pub mod scalar;
pub mod special;
pub mod spherical;
pub mod verify;

pub use embedding::{
    build_matrix, plan_parameters, reference_profile, scaling_constant, EmbeddingSpec, Mode, PlanRequest,
    ReferenceProfile, RowGroupMatrix,
};
pub use error::{Error, Result};
pub use lattice::{build_multiplicities, enumerate_ball, MultiplicityTable, PointSet};
pub use norms::{Growth, NormKind, PermInvariantNorm, WeightedMultiset};
pub use scalar::Real;
pub use spherical::SphericalMarginal;
pub use verify::{distortion_sweep, l4_reference_embedding, project, quantile_band_report, sphere_sample};

pub type Marginal = SphericalMarginal<f64>;
pub type Marginal32 = SphericalMarginal<f32>;
pub type Matrix = RowGroupMatrix<f64>;
pub type Matrix32 = RowGroupMatrix<f32>;
pub type Multiset = WeightedMultiset<f64>;
pub type Multiset32 = WeightedMultiset<f32>;
pub type Profile = ReferenceProfile<f64>;
