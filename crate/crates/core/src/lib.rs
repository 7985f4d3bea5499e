//! Exact simulation of linear SDEs on nonuniform time grids and the
//! asymptotically optimal grids that minimise the simulation error.

pub mod asymptotics;
pub mod csv;
pub mod error;
pub mod grid;
pub mod matfun;
pub mod model;
pub mod rng;
pub mod solver;

pub use error::{Error, ModelViolation, Result};
pub use asymptotics::WeightKind;
pub use grid::{GridDensity, Profile, TimeGrid, UniformProfile};
pub use matfun::Matrix;
pub use model::{LinearSdeModel, RegularityReport};
pub use rng::StreamKey;
pub use solver::{ErrorReport, KalmanState, Vector};
