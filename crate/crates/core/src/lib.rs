//! Kinematic-wave (LWR) traffic flow with a discontinuous capacity-drop
//! junction rule.
//!
//! The crate is organised bottom-up:
//!
//! - [`fundamental`]: steady-state laws (triangular fundamental diagram,
//!   demand/supply encoding, congestion-level inverse).
//! - [`flux`]: boundary flux functions at interfaces (min rule, capacity drop,
//!   priority merge with capacity drop).
//! - [`riemann`]: exact Riemann solver at a capacity-drop interface and a
//!   brute-force entropy oracle.
//! - [`sim`]: Godunov / cell-transmission stepper on ring and open corridors.
//! - [`analysis`]: stationary states, ring-road macroscopic fundamental
//!   diagram, open-road statics and capacity-drop estimation from detectors.
//!
//! The steady-state math is generic over [`Scalar`], which is implemented for
//! `f32`, `f64` and [`Rational64`] so closed-form results can be checked in
//! exact arithmetic. The time stepper works in `f64`.

pub mod analysis;
pub mod error;
pub mod flux;
pub mod fundamental;
pub mod riemann;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use flux::{capdrop_flux, merge_capdrop_flux, standard_flux, MergeFlux, NodeModel, Schedule};
pub use fundamental::{Congestion, DemandSupply, FundamentalDiagram, TriangularFd};
pub use num_rational::Rational64;
pub use riemann::{lwr_wave, solve_riemann, RiemannSolution, WaveDescriptor, WaveKind};
pub use scalar::Scalar;

/// Triangular fundamental diagram in double precision.
pub type Fd64 = TriangularFd<f64>;
/// Triangular fundamental diagram in single precision.
pub type Fd32 = TriangularFd<f32>;
/// Triangular fundamental diagram in exact rational arithmetic.
pub type ExactFd = TriangularFd<Rational64>;
/// Demand/supply state in double precision.
pub type State64 = DemandSupply<f64>;
/// Demand/supply state in exact rational arithmetic.
pub type ExactState = DemandSupply<Rational64>;
/// Riemann solution in double precision.
pub type Riemann64 = RiemannSolution<f64>;
