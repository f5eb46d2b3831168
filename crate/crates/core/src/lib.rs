//! Numerical optimal control of a three-level quantum system whose
//! time-optimal-style synthesis chatters: the optimal control switches
//! infinitely many times, with switchings accumulating geometrically at the
//! instant the target state is reached.
//!
//! The crate provides:
//!
//! - the reduced three-dimensional model on the unit sphere, its adjoint
//!   (costate) flow, the Pontryagin Hamiltonian and the switching function
//!   with its closed-form time derivatives ([`model`]);
//! - the exact analytic solution of the classical Fuller problem, which is
//!   the local normal form of the dynamics near the target and supplies the
//!   chattering constants `xi` and `alpha` ([`fuller`]);
//! - an adaptive Runge-Kutta 5(4) integrator with dense output and
//!   switching-function event location, used to concatenate bang arcs of the
//!   extremal flow forward or backward in time ([`ode`], [`extremal`]);
//! - the synthesis machinery: seeding of extremals on the local switching
//!   curve, Newton shooting on the seed parameter to hit a prescribed
//!   initial state, and switching-curve reconstruction by seed sweeps
//!   ([`synthesis`]);
//! - a direct optimizer over piecewise-constant controls at fixed final
//!   time, with an exact discrete-adjoint gradient and a projected-gradient
//!   solver, for comparison against the extremal synthesis ([`direct`]);
//! - CSV/JSON serialization of every computed object ([`export`]) and the
//!   verification suite backing the `verify` CLI command ([`verify`]).

pub mod direct;
pub mod error;
pub mod export;
pub mod extremal;
pub mod fuller;
pub mod model;
pub mod ode;
pub mod synthesis;
pub mod verify;

pub use error::{Error, Result};
pub use model::{AdjointVector, Control, FullQuantumState, ModelParams, StateVector};
