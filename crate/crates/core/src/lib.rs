//! Simulation and averaging toolkit for slow-fast stochastic differential
//! equations driven by Wiener processes and compound-Poisson jumps.
//!
//! The crate is organised bottom-up:
//!
//! - [`levy_rng`]: keyed random streams and finite-activity jump measures;
//! - [`model`]: coefficient maps, the built-in examples and assumption checks;
//! - [`integrate`]: jump-adapted tamed Euler integrators for the coupled,
//!   frozen and averaged dynamics;
//! - [`ergodic`]: invariant-measure estimation, averaged coefficients and the
//!   Poisson-equation corrector;
//! - [`estimate`]: Monte Carlo error estimators and convergence-order fits;
//! - [`cli`]: the `mslevy` command-line driver.

pub mod levy_rng;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod stats;
pub mod integrate;
pub mod ergodic;
pub mod estimate;
pub mod cli;
