//! Payoff-feedback Nash equilibrium seeking for monotone games.
//!
//! * [`games`]: game definitions and the builtin bilinear and fixed-demand games.
//! * [`controllers`]: the extremum seeking golden-ratio controller, its averaged and
//!   reduced companions, the classic baselines and the projected flow.
//! * [`sim`]: fixed-step integration and trajectory recording.
//! * [`analysis`]: Lyapunov diagnostics, numerical oracles, noise and histograms.
//! * [`config`] and [`experiments`]: the config-driven studies behind the `nesc` binary.

pub mod analysis;
pub mod config;
pub mod controllers;
pub mod error;
pub mod experiments;
pub mod games;
pub mod sim;

pub use controllers::{
    ConstraintSet, ControllerKind, ControllerSystem, CostChannel, CleanChannel, EscParams, EscState,
    GrState, InitialConditions, Oracle,
};
pub use error::{Error, Result};
pub use games::{FixedDemandParams, GameSpec};
pub use sim::{integrate, Method, Observer, SolverConfig, Trajectory};
