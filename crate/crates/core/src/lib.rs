//! Shared numerical substrate: random streams, network differentiation,
//! SDE path simulation, classical Monte Carlo and the query ledger.

pub mod autodiff;
pub mod error;
pub mod ledger;
pub mod mc;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
