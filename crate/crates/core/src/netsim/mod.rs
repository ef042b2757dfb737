//! Deterministic discrete-event model of the RSU→cloud uplink and the
//! cloud→TMC downlink.
//!
//! Time is kept in integer nanoseconds. Links are store-and-forward FIFOs
//! with no loss.

mod link;
mod report;
mod scenario;

pub use link::{fragment, transmit_time, LinkModel};
pub use report::{CycleRecord, Direction, LatencySummary, MessageRecord, ReportHeader, ScenarioReport, Totals};
pub use scenario::{run_scenario, Mode, Scenario, Workload};
