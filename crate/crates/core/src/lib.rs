//! Paired serial dictatorship for joint course and dorm allocation.
//!
//! Students report a signal from an ordered set; higher signals pick courses
//! earlier and dorms later, with random tie-breaking inside each signal class.
//! The crate provides the allocation engine, equilibrium learning and exact
//! oracles for small games, welfare analytics, the threshold transport solver
//! for the homogeneous-preferences optimum, and scenario orchestration.

pub mod equilibrium;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod market;
pub mod mechanism;
pub mod rng;
pub mod scenario;
pub mod transport;
pub mod welfare;

pub use error::{Error, Result};
pub use exec::Exec;
pub use market::{Allocation, Market, MarketSpec, PreferenceProfile, RunOutTrace, SignalSpace, TieBreakDraw};
pub use mechanism::{MechanismVariant, Outcome, PayoffVector, SignalProfile};
