//! Knowledge-guided surrogate modeling with overcomplete radial basis
//! functions.
//!
//! Data are interpolated exactly by an RBF expansion with more centers than
//! samples. The leftover freedom lives in the null space of the
//! interpolation matrix; a small generator network maps Gaussian latents to
//! null-space coefficients and is trained so that the resulting ensemble of
//! interpolants respects expert priors (monotonicity, positivity, target
//! distributions of functional statistics, ...).
//!
//! The crate also carries two benchmarks: compliance minimization of an
//! Euler–Bernoulli cantilever ([`beam`]) and leave-two-out cross-validation
//! with PLS input reduction ([`eval`]).

pub mod beam;
pub mod error;
pub mod eval;
pub mod generator;
pub mod kernel;
pub mod priors;
pub mod rbf;
pub mod sampling;
pub mod svg;
pub mod training;

pub use error::{Error, Result};
pub use generator::{init_generator, Activation, GeneratorNet};
pub use kernel::{kernel_eval, KernelKind, KernelSpec};
pub use priors::{PriorKind, PriorTerm, ProbeGrid};
pub use rbf::{evaluate_surrogate, Dataset, RbfSystem};
pub use sampling::{place_centers, Bounds, Placement};
pub use training::{SurrogateEnsemble, TrainConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
