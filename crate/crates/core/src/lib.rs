//! Arbitrage-free European call pricing with gated neural networks.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`market_data`]: option-chain ingestion, filtering and normalization.
//! - [`synthesis`]: virtual contracts, hint grids and synthetic markets.
//! - [`gated_net`]: the single and mixture pricing networks.
//! - [`training`]: losses, Adam and the rolling train/test harness.
//! - [`rationality`]: no-arbitrage checks and risk-neutral densities.
//! - [`baselines`]: Black-Scholes, Variance Gamma and Kou pricers and calibration.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod gated_net;
pub mod market_data;
pub mod math;
pub mod rationality;
pub mod surface;
pub mod synthesis;
pub mod training;

pub use error::{Error, Result};
pub use surface::PricingSurface;
