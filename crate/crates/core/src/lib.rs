//! Diffusions in periodic and random environments under a small constant
//! forcing: path simulation, regeneration-cycle estimators and a periodic
//! cell-problem solver used as an exact reference.

pub mod environment;
pub mod estimators;
pub mod functional;
pub mod homogenize;
pub mod regeneration;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod tensor;

pub use environment::{Coeffs, EllipticityBounds, EnvError, EnvKind, EnvSpec, Environment};
pub use functional::{make_functional, FunctionalDesc, FunctionalError, FunctionalKind, FunctionalSpec};
pub use regeneration::{
    harvest, ratio_estimate, RatioQuantity, RegenConfig, RegenError, RegenMode, RegenerationRecord,
};
pub use sde::{integrate, IntegratorConfig, PathRecord, Scheme, SdeError};
pub use tensor::{Point, Sym2, MAX_DIM};
