//! Predictive auto-scaling engine with a deterministic cluster simulator and a
//! real-TCP load generator.
//!
//! The crate is organized around the elasticity control loop: per-instance CPU
//! metrics flow into an in-memory [`store::MetricStore`], a pluggable
//! [`forecast`] model predicts the average CPU usage of the cluster some
//! minutes ahead, a threshold [`alarm`] engine with consecutive-period
//! semantics turns metric streams into scaling notifications, and the
//! [`orchestrator`] applies them under min/max bounds, a fixed step size, a
//! cooldown window and a boot delay. The loop can be driven either by the
//! fluid-queue cluster simulator in [`sim`] or by real server processes on
//! loopback via [`loadgen`]. The [`harness`] module ties everything together
//! behind scenario files and report generation.

pub mod alarm;
pub mod forecast;
pub mod harness;
pub mod loadgen;
pub mod orchestrator;
pub mod sim;
pub mod store;

pub use store::{MetricPoint, MetricStore, SeriesKey, TimeSeries};
