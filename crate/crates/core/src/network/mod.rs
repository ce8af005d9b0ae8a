//! The star network: which pair the optical switch connects when, and what
//! each connection produces.
//!
//! A run is a [`SessionPlan`] of switch events. Each session kicks its
//! pair's plant, recalibrates, tracks drift while pulses are exchanged,
//! sifts the counts and evaluates a key rate. Valid sessions are then
//! merged per pair into the accumulated result.

mod config;
mod report;
mod schedule;
mod session;
mod sift;

pub use config::{
    NetworkConfig, NetworkTopology, PlannedSessionConfig, RelayConfig, ScheduleConfig, SimulationMode, SwitchConfig, UserConfig,
    FITTED_MISALIGNMENT,
};
pub use report::{merge_sessions, run_network, summarize, PairSummary, RunMeta, RunReport, SwitchEvent};
pub use schedule::{pair_id, plan_for, schedule, PlannedSession, SessionPlan};
pub use session::{
    accumulate_session, link_for, prepare_session, run_session, session_pulses, CalibrationSummary, PreparedSession, Segment,
    SessionOutcome, TrackingSummary,
};
pub use sift::{read_sifted, sift, write_sifted, SiftedRecord, SIFTED_HEADER};
