//! Budgeted auctions for position environments.
//!
//! The crate is organised around a handful of modules:
//!
//! - [`instance`]: position environments, valuation profiles, outcomes and
//!   their JSON formats.
//! - [`envyfree`]: envy-free payments, ironing, and the envy-free optimal
//!   welfare and revenue benchmarks under a common budget.
//! - [`clinching`]: the clinching auction, both as an exact event-driven
//!   price clock and as a direct closed form.
//! - [`profit`]: random-sampling profit extraction mechanisms and the
//!   random-walk statistics behind them.
//! - [`oracle`]: independent ground truth (dense simplex, discretised clock,
//!   exhaustive envy checks) used by the test suites.
//! - [`experiment`]: seeded Monte Carlo experiments that emit CSV reports.

pub mod clinching;
pub mod envyfree;
mod error;
pub mod experiment;
pub mod generate;
pub mod instance;
pub mod oracle;
pub mod profit;

pub use error::{Error, Result};
pub use instance::{
    BudgetedInstance, Outcome, PositionEnvironment, ValuationProfile, TOLERANCE,
};
