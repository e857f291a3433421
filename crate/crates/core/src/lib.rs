//! Lane-change reach-probability engine and microscopic highway simulator.
//!
//! The library has three layers:
//!
//! * [`probability`] estimates the chance that a vehicle reaches a goal
//!   position several lanes over, from a Monte Carlo base-case lookup table
//!   and a recursive composition for multiple lane changes. [`headway`] and
//!   [`gap`] supply the traffic-statistics primitives it builds on.
//! * [`sim`] is a deterministic time-stepped simulation of a multi-lane
//!   highway strip with an off-ramp, and [`advisor`] is the advance warning
//!   logic that tells exiting vehicles when to start changing lanes.
//! * [`experiment`] runs scenario matrices, aggregates delay statistics and
//!   renders result tables; [`scenario`] and [`events`] hold the on-disk
//!   configuration and log formats.

pub mod advisor;
pub mod error;
pub mod events;
pub mod experiment;
pub mod gap;
pub mod headway;
pub mod probability;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
