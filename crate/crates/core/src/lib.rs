//! Simulation of photonic cluster-state generation from a single
//! spin-photon interface hyperfine-coupled to a nuclear spin register.
//!
//! The crate is organised bottom-up:
//!
//! * [`state`]: dense state vectors / density matrices over role-labelled wires
//! * [`hamiltonian`]: rotating-frame electron–nucleus Hamiltonians and
//!   conditional precession axes
//! * [`noise`]: Ornstein–Uhlenbeck electron dephasing
//! * [`synthesis`]: dynamical-decoupling gate compiler
//! * [`protocol`]: the cluster-state circuit, its ideal target and
//!   local-unitary equivalence checks
//! * [`emission`]: spin-photon entanglement fidelity under excited-state
//!   dephasing
//! * [`budget`]: large-cluster fidelity extrapolation and generation rate

pub mod budget;
pub mod emission;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod noise;
pub mod optimize;
pub mod protocol;
pub mod state;
pub mod synthesis;

pub use error::{Error, Result};
