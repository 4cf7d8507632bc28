//! Numerical laboratory for superdense teleportation with time-bin and
//! polarization hyperentangled photon pairs.
//!
//! Modules:
//!
//! - [`qcore`]: protocol states, Alice's basis, Bob's corrections, fidelity and phase metrics
//! - [`optics`]: Jones model of the tomography analyzer and the 36/1296 setting catalogs
//! - [`tomo`]: maximum-likelihood and Bayesian state reconstruction from counts
//! - [`sdtsim`]: count-level simulation of the full experiment
//! - [`spacelink`]: satellite pass geometry, link budget, Doppler shift and phase stabilization
//! - [`io`]: text formats shared by the library and the command-line tool

pub mod io;
pub mod linalg;
pub mod optics;
pub mod qcore;
pub mod rng;
pub mod sdtsim;
pub mod spacelink;
pub mod tomo;

pub use qcore::{AliceOutcome, DensityOperator, EquimodularPhases, StateVector};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/protocol.md")]
    struct Protocol;
    #[doc = include_str!("../../../book/src/analyzer.md")]
    struct Analyzer;
    #[doc = include_str!("../../../book/src/reconstruction.md")]
    struct Reconstruction;
    #[doc = include_str!("../../../book/src/simulation.md")]
    struct Simulation;
    #[doc = include_str!("../../../book/src/space-link.md")]
    struct SpaceLink;
}
