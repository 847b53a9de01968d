//! Numerical laboratory for quasiperiodically forced monotone interval and
//! circle maps: invariant graphs, Lyapunov exponents, critical parameters,
//! sink-source orbit candidates and recurrence-time combinatorics.

pub mod bifurcation;
pub mod circle;
pub mod cocycle;
pub mod error;
pub mod graphs;
pub mod peaks;
pub mod systems;
pub mod timesets;

pub use error::{QpfError, Result};
