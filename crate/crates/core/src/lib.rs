//! Two-pass day-ahead procurement of flexible ramping products and the
//! market simulation used to compare procurement policies.
//!
//! The pipeline runs a stochastic unit commitment on sampled net-load
//! scenarios, turns its dispatch into hourly ramping requirements, clears a
//! day-ahead market that co-optimizes energy and ramping products, re-clears
//! every fifteen minutes against realized load and settles all participants.
pub mod damc;
pub mod fixtures;
pub mod fmm;
pub mod frp;
pub mod instance;
pub mod milp;
pub mod network;
pub mod pipeline;
pub mod scenario;
pub mod settlement;
pub mod suc;
mod unit;

pub use instance::{load_instance, parse_instance, SystemInstance, TimeGrid};
