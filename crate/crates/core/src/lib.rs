//! Analysis of a single-cell 802.11 DCF network with finite per-node
//! buffers, where each node's attempt rate depends on how many nodes
//! currently have packets queued.
//!
//! The pipeline runs from parameters and slot durations
//! ([`params`]), through the saturation fixed point ([`saturation`]), the
//! reduced tagged-queue Markov chain ([`chain`]), its iterative solution
//! ([`solver`]) and finally to the performance measures in [`perf`].
//! [`oracle`] holds a brute-force joint chain used to check the reduction
//! on small cells.

pub mod analysis;
pub mod chain;
pub mod oracle;
pub mod params;
pub mod perf;
pub mod saturation;
pub mod solver;

pub use analysis::{analyze, Analysis, AnalysisError};
pub use params::{AccessMode, Buffer, MacParams, PhyParams, Scenario, SlotDurations};
pub use perf::PerfReport;
pub use saturation::{AttemptModel, AttemptProfile};
