//! Relative-arbitrage toolkit for diffusive equity markets.
//!
//! Models of stock capitalisations, Monte Carlo estimators of the smallest
//! initial capital needed to beat the market, an explicit finite-difference
//! solver for the same quantity, and the trading strategies it induces.

pub mod error;
pub mod exitmc;
pub mod linalg;
pub mod models;
pub mod pde;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod strategy;

pub use error::{Error, Result};
pub use models::{ModelConfig, ModelKind, ModelSpec};
pub use sde::{PathBatch, Process, Scheme, SimConfig};
