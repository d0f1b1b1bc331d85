//! Nonsmooth higher-order maximum-principle toolkit.
//!
//! The crate is organized around the pipeline of the certificate checker:
//!
//! - [`nsfield`] — expression trees for piecewise-smooth functions and vector
//!   fields, with almost-everywhere symbolic Jacobians and kink sign-pattern
//!   enumeration;
//! - [`genjac`] — Clarke generalized Jacobians, set-valued Lie brackets, and
//!   their covector projections, each computed by independent estimators;
//! - [`cones`] — polyhedral cones and multicones: polar cones, transversality,
//!   strong transversality, and linear separation, on exact rational
//!   arithmetic;
//! - [`problem`] — the strict-sense control problem, its space-time extension,
//!   recession Lagrangian, extended dynamics and Hamiltonian;
//! - [`integrate`] — forward trajectory integration, fundamental-matrix
//!   transport, and backward adjoint integration under a selection policy;
//! - [`variations`] — needle and bracket-like control variations, endpoint
//!   maps, variation vectors, and a finite-difference convergence oracle;
//! - [`checker`] — the five-condition certificate checker and the multiplier
//!   feasibility search.
//!
//! Sampling loops are data-parallel (rayon) when the default `parallel`
//! feature is enabled, with per-sample deterministic seeds so results are
//! bit-identical regardless of worker count. Disabling the feature compiles
//! the sequential fallback.

pub mod cones;
pub mod exec;
pub mod genjac;
pub mod hull;
pub mod integrate;
pub mod lp;
pub mod nsfield;
pub mod problem;
pub mod rng;
pub mod variations;

pub mod checker;

pub use genjac::{ConvexHullSet, Interval};
pub use nsfield::{Dims, Expr, NonsmoothField};
pub use problem::{ExtendedProcess, Multipliers, StrictProblem, StrictProcess};
