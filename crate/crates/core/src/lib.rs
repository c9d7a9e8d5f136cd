//! Numerical homogenization with localized multiscale finite element spaces.
//!
//! The coarse space is corrected by fine-scale functions from the kernel of a
//! local quasi-interpolation. The corrections are computed by an additive
//! Schwarz subspace iteration whose local problems live on vertex patches,
//! so each iteration step widens the support of a basis function by one
//! layer of coarse elements.

pub mod corrector;
pub mod error;
pub mod fem;
pub mod lanczos;
pub mod mesh;
pub mod multiscale;
pub mod quasi_interp;
pub mod rng;

pub use corrector::{AdditiveSchwarz, ExactCorrector, IterationConfig, Scheme, SpectralEstimate};
pub use error::{Error, Result};
pub use fem::{CoefficientField, FineNorms, SparseOperator};
pub use multiscale::{build_space, galerkin_solve, CorrectorEngine, Discretization, MultiscaleSpace, SpaceMode};
pub use mesh::{build_structured_mesh, refine_uniform, MeshHierarchy, Patch, Triangulation};
pub use quasi_interp::{build_pi, QuasiInterpolation};
pub use rng::SplitMix64;
