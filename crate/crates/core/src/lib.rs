//! Simulation and numerical verification toolkit for the boundary-driven weakly
//! asymmetric simple exclusion process and its microscopic Cole-Hopf variables.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix it to `f64`.

pub mod cole_hopf;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod linalg;
pub mod operators;
pub mod params;
pub mod pde;
pub mod process;
pub mod profile;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use params::SystemParams;
pub use process::{Configuration, CurrentLedger, Engine, EventRecord, Observer, ProcessView, Simulator};
pub use rng::ReplicaStream;
pub use scalar::Scalar;

pub type Params = SystemParams<f64>;
pub type Profile = profile::DensityProfile<f64>;
