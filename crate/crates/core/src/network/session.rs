use serde::{Deserialize, Serialize};

use super::config::{NetworkConfig, SimulationMode};
use super::schedule::PlannedSession;
use super::sift::{sift, SiftedRecord};
use crate::calibration::{full_recalibration, track_session, ControllerState, Plant, SessionTrace, TraceRecord};
use crate::decoy::{secure_key_rate, CountTable, KeyRateResult};
use crate::error::{Error, Result};
use crate::optics::session::simulate_events;
use crate::optics::{expected_statistics, simulate_session, DistinguishabilityState, LinkModel, SessionStatistics};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub commands_issued: usize,
    pub attempts: u32,
    pub elapsed_s: f64,
    pub residual: DistinguishabilityState,
    pub dip_temperature_c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub mean_overlap: f64,
    pub min_overlap: f64,
    pub mean_abs_phase_rad: f64,
    pub max_abs_phase_rad: f64,
}

impl From<&SessionTrace> for TrackingSummary {
    fn from(t: &SessionTrace) -> Self {
        TrackingSummary {
            mean_overlap: t.mean_overlap,
            min_overlap: t.min_overlap,
            mean_abs_phase_rad: t.mean_abs_phase_rad,
            max_abs_phase_rad: t.max_abs_phase_rad,
        }
    }
}

/// A slice of a session simulated at one fixed distinguishability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub duration_s: f64,
    pub distinguishability: DistinguishabilityState,
}

/// Calibration and drift tracking of one session, before any pulses are
/// simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSession {
    pub planned: PlannedSession,
    /// Calibration failure, if any; the session is then invalid.
    pub failure: Option<String>,
    pub calibration: Option<CalibrationSummary>,
    pub tracking: Option<TrackingSummary>,
    pub segments: Vec<Segment>,
    /// Calibration readings followed by tracking readings, on one clock
    /// starting at the switch event.
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub index: usize,
    pub pair_id: String,
    pub start_s: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub valid: bool,
    pub failure: Option<String>,
    pub calibration: Option<CalibrationSummary>,
    pub tracking: Option<TrackingSummary>,
    /// Pulses actually simulated.
    pub pulses: u64,
    /// Physical pulses each simulated pulse stands for.
    pub sample_weight: f64,
    pub statistics: Option<SessionStatistics>,
    pub key_rate: Option<KeyRateResult>,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
    #[serde(skip)]
    pub sifted: Vec<SiftedRecord>,
}

/// Pulses evaluated for a session of `duration_s`: desk-scaled for
/// Monte-Carlo, the full physical count for expectation values.
pub fn session_pulses(config: &NetworkConfig, duration_s: f64) -> u64 {
    let full = duration_s * config.protocol.clock_rate_hz;
    match config.schedule.mode {
        SimulationMode::MonteCarlo => (full * config.schedule.desk_scale).round() as u64,
        SimulationMode::Expected => full.round() as u64,
    }
}

pub fn link_for(config: &NetworkConfig, pair: &(String, String)) -> Result<LinkModel> {
    let find = |id: &str| {
        config
            .topology
            .user(id)
            .ok_or_else(|| Error::config("schedule", format!("unknown user {id}")))
    };
    let (a, b) = (find(&pair.0)?, find(&pair.1)?);
    Ok(LinkModel::new(
        super::schedule::pair_id(&pair.0, &pair.1),
        [a.channel, b.channel],
        config.topology.relay.detectors,
    ))
}

/// Switch kick, full recalibration, then drift tracking over the session.
pub fn prepare_session(config: &NetworkConfig, planned: &PlannedSession) -> PreparedSession {
    let mut prep = PreparedSession {
        planned: planned.clone(),
        failure: None,
        calibration: None,
        tracking: None,
        segments: Vec::new(),
        trace: Vec::new(),
    };
    let fb = &config.feedback;
    let mut plant = Plant::aligned(config.topology.relay.detectors, fb, derive_seed(planned.seed, 1));
    let mut ctrl = ControllerState::new(fb);
    plant.apply_switch_kick(&config.drift);
    let report = match full_recalibration(&mut plant, &mut ctrl, fb) {
        Ok(r) => r,
        Err(e) => {
            prep.failure = Some(e.to_string());
            return prep;
        }
    };
    prep.calibration = Some(CalibrationSummary {
        commands_issued: report.commands_issued,
        attempts: report.attempts,
        elapsed_s: report.elapsed_s,
        residual: report.residual,
        dip_temperature_c: report.dip.map(|d| d.temperature_c),
    });
    prep.trace = report.records;
    let tracked = match track_session(
        &mut plant,
        &mut ctrl,
        &config.drift,
        fb,
        planned.duration_s,
        1.0,
        config.schedule.trace_interval_s,
    ) {
        Ok(t) => t,
        Err(e) => {
            prep.failure = Some(e.to_string());
            return prep;
        }
    };
    prep.tracking = Some(TrackingSummary::from(&tracked));
    prep.trace.extend(tracked.records.iter().map(|r| TraceRecord {
        t_seconds: r.t_seconds + report.elapsed_s,
        ..*r
    }));

    let k = config.schedule.segments_per_session;
    let len = planned.duration_s / k as f64;
    for j in 0..k {
        let start_s = j as f64 * len;
        let d = tracked.residual_at(start_s + 0.5 * len).unwrap_or(report.residual);
        prep.segments.push(Segment {
            start_s,
            duration_s: len,
            distinguishability: d,
        });
    }
    prep
}

/// Simulate the prepared segments, sift and compute the session key rate.
/// `link` supplies channels and detectors; its distinguishability is
/// replaced segment by segment.
pub fn accumulate_session(config: &NetworkConfig, prep: &PreparedSession, link: &LinkModel) -> Result<SessionOutcome> {
    let planned = &prep.planned;
    let mut out = SessionOutcome {
        index: planned.index,
        pair_id: planned.pair_id(),
        start_s: planned.start_s,
        duration_s: planned.duration_s,
        seed: planned.seed,
        valid: false,
        failure: prep.failure.clone(),
        calibration: prep.calibration,
        tracking: prep.tracking,
        pulses: 0,
        sample_weight: 0.0,
        statistics: None,
        key_rate: None,
        trace: prep.trace.clone(),
        sifted: Vec::new(),
    };
    if prep.failure.is_some() {
        return Ok(out);
    }
    let params = &config.protocol;
    let mut stats = SessionStatistics::new(out.pair_id.clone());
    let n = session_pulses(config, planned.duration_s);
    let k = prep.segments.len() as u64;
    let mut pulses = 0;
    for (j, seg) in prep.segments.iter().enumerate() {
        let j = j as u64;
        let seg_pulses = n * (j + 1) / k - n * j / k;
        if seg_pulses == 0 {
            continue;
        }
        pulses += seg_pulses;
        let mut l = link.clone();
        l.pair_id = out.pair_id.clone();
        l.distinguishability = DistinguishabilityState {
            intensity_ratio: 1.0,
            ..seg.distinguishability
        };
        let part = match config.schedule.mode {
            SimulationMode::MonteCarlo => simulate_session(params, &l, seg_pulses, derive_seed(planned.seed, 100 + j))?,
            SimulationMode::Expected => expected_statistics(params, &l)?.expected_counts(seg_pulses as f64),
        };
        stats.merge(&part)?;
    }
    let dbg = config.schedule.debug_sifted_events;
    if dbg > 0 {
        if let Some(seg) = prep.segments.first() {
            let mut l = link.clone();
            l.distinguishability = DistinguishabilityState {
                intensity_ratio: 1.0,
                ..seg.distinguishability
            };
            let events = simulate_events(params, &l, dbg, derive_seed(planned.seed, 99))?;
            out.sifted = sift(&events, &out.pair_id).0;
        }
    }
    out.pulses = pulses;
    out.sample_weight = if pulses > 0 {
        planned.duration_s * params.clock_rate_hz / pulses as f64
    } else {
        0.0
    };
    let table = CountTable::from_statistics(&stats, out.sample_weight);
    out.key_rate = Some(secure_key_rate(&table, params)?);
    out.statistics = Some(stats);
    out.valid = true;
    Ok(out)
}

/// One switch event to key-rate result. Calibration failures give an
/// invalid session rather than an error.
pub fn run_session(config: &NetworkConfig, planned: &PlannedSession) -> Result<SessionOutcome> {
    let link = link_for(config, &planned.pair)?;
    let prep = prepare_session(config, planned);
    accumulate_session(config, &prep, &link)
}
