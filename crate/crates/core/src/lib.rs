//! Decentralized baseband MIMO detection by mini-batch gradient MCMC.
//!
//! The core is generic over the real scalar (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which is what the harness uses.

pub mod channel;
pub mod detectors;
pub mod diagnostics;
pub mod error;
pub mod fabric;
pub mod harness;
pub mod linalg;
pub mod modem;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Complex64 = num_complex::Complex<f64>;
pub type Matrix = linalg::CMatrix<f64>;
pub type Qam = modem::Constellation<f64>;
pub type Instance = channel::MimoInstance<f64>;
pub type Clustered = channel::ClusteredChannel<f64>;
pub type DuFabric = fabric::Fabric<f64>;
pub type MiniNagMcmcDetector = detectors::MiniNagMcmc<f64>;
pub type NagMcmcDetector = detectors::NagMcmc<f64>;
pub type LmmseDetector = detectors::Lmmse<f64>;
pub type MlDetector = detectors::BruteForceMl<f64>;
pub type DetectionResult = detectors::Detection<f64>;
