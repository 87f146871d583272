//! Quantile-space solver for expected-utility maximization when the payoff is
//! received together with an exogenous claim whose joint law with the market
//! is unknown: only the claim's marginal distribution is given, and the agent
//! optimizes against the worst-case coupling.
//!
//! The worst coupling pairs the claim antimonotonically with terminal wealth,
//! which turns the problem into a deterministic program over the quantile
//! function of terminal wealth:
//!
//! ```text
//!   maximize   integral_0^1 u(Q(t) + Q_claim(t)) dt
//!   over       Q right-continuous, nondecreasing, Q >= 0 on (0,1)
//!   subject to integral_0^1 Q(t) * Q_rho(1-t) dt = x
//! ```
//!
//! where `Q_rho` is the quantile function of the pricing kernel and the
//! reversed pairing in the budget is the cost-minimizing (Hardy-Littlewood)
//! arrangement. The crate provides:
//!
//! * midpoint-grid quantile functions and the reversed budget pairing
//!   ([`grid`]),
//! * a lognormal pricing-kernel model driven by piecewise-constant market
//!   coefficients ([`market`]),
//! * utility models and claim laws ([`utility`], [`claim`]), worst-coupling
//!   objectives and diagnostic checks ([`preference`]),
//! * the Lagrangian pool-adjacent-violators solver, complementarity
//!   verification, and budget calibration ([`solver`]),
//! * a direct construction for exponential utility via a concave envelope of
//!   a reweighted kernel integral ([`envelope`]),
//! * the terminal payoff map, hedging portfolio, and Monte Carlo replication
//!   check ([`portfolio`]), and utility-indifference pricing ([`pricer`]).
//!
//! The crate is `no_std` (with `alloc`); all float kernels go through `libm`
//! so results are bit-identical across platforms and build profiles.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod claim;
pub mod envelope;
pub mod error;
mod float;
pub mod grid;
pub mod hermite;
pub mod market;
pub mod normal;
pub mod portfolio;
pub mod preference;
pub mod pricer;
pub mod solver;
pub mod utility;

pub use error::{Error, Result};
