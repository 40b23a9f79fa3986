//! Ground states, entanglement spectra and differential local convertibility
//! of transverse-field Ising and XY spin chains.
//!
//! The numerical core (`model`, `lanczos`, `eigensolve`, `entanglement`) is
//! generic over the scalar type; the aliases below fix it to `f64`.

pub mod asymptotic;
pub mod cache;
pub mod cli;
pub mod convertibility;
pub mod eigensolve;
pub mod entanglement;
pub mod error;
pub mod fermion;
pub mod io;
pub mod lanczos;
pub mod model;
pub mod scalar;
pub mod scaling;
pub mod source;

pub use convertibility::{Sign, SignMap, Verdict};
pub use error::{Error, Result};
pub use model::Boundary;
pub use source::{GroundStateSource, Solver};

pub type ChainParams = model::ChainParams<f64>;
pub type Hamiltonian = model::Hamiltonian<f64>;
pub type GroundState = eigensolve::GroundState<f64>;
pub type EntanglementSpectrum = entanglement::EntanglementSpectrum<f64>;
pub type RenyiCurve = entanglement::RenyiCurve<f64>;
