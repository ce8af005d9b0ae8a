use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{NetworkConfig, SimulationMode};
use super::schedule::{pair_id, plan_for, SessionPlan};
use super::session::{run_session, SessionOutcome};
use crate::decoy::{secure_key_rate, CountTable, KeyRateResult};
use crate::error::{Error, Result};
use crate::optics::SessionStatistics;

/// Cell-wise sum of one pair's sessions.
pub fn merge_sessions<'a>(sessions: impl IntoIterator<Item = &'a SessionStatistics>) -> Result<SessionStatistics> {
    let mut it = sessions.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::DegenerateStatistics("no sessions to merge".into()))?;
    let mut acc = first.clone();
    for s in it {
        acc.merge(s)?;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub index: usize,
    pub t_s: f64,
    pub pair_id: String,
    pub valid: bool,
    pub failure: Option<String>,
}

/// Everything accumulated for one user pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair_id: String,
    pub sessions: usize,
    pub valid_sessions: usize,
    /// Key-distribution time of the valid sessions.
    pub valid_duration_s: f64,
    pub pulses: u64,
    /// Physical pulses per simulated pulse in the merged counts.
    pub sample_weight: f64,
    pub statistics: Option<SessionStatistics>,
    pub key_rate: Option<KeyRateResult>,
}

/// Deterministic record of a run; wall-clock data lives in [`RunMeta`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub mode: SimulationMode,
    pub desk_scale: f64,
    pub plan: SessionPlan,
    pub sessions: Vec<SessionOutcome>,
    pub pairs: Vec<PairSummary>,
    pub switch_log: Vec<SwitchEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: String,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
    pub threads: usize,
}

impl RunReport {
    pub fn pair(&self, id: &str) -> Option<&PairSummary> {
        self.pairs.iter().find(|p| p.pair_id == id)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Accumulate valid sessions per configured pair and evaluate each pair's
/// key rate on the merged counts.
pub fn summarize(config: &NetworkConfig, sessions: &[SessionOutcome]) -> Result<Vec<PairSummary>> {
    let mut ids: Vec<String> = config.pairs().iter().map(|(a, b)| pair_id(a, b)).collect();
    for s in sessions {
        if !ids.contains(&s.pair_id) {
            ids.push(s.pair_id.clone());
        }
    }
    let clock = config.protocol.clock_rate_hz;
    let mut out = Vec::new();
    for id in ids {
        let mine: Vec<&SessionOutcome> = sessions.iter().filter(|s| s.pair_id == id).collect();
        let valid: Vec<&SessionOutcome> = mine.iter().copied().filter(|s| s.valid).collect();
        let valid_duration_s: f64 = valid.iter().map(|s| s.duration_s).sum();
        let pulses: u64 = valid.iter().map(|s| s.pulses).sum();
        let statistics = if valid.is_empty() {
            None
        } else {
            Some(merge_sessions(valid.iter().filter_map(|s| s.statistics.as_ref()))?)
        };
        let sample_weight = if pulses > 0 {
            valid_duration_s * clock / pulses as f64
        } else {
            0.0
        };
        let key_rate = match &statistics {
            Some(st) if pulses > 0 => Some(secure_key_rate(
                &CountTable::from_statistics(st, sample_weight),
                &config.protocol,
            )?),
            _ => None,
        };
        out.push(PairSummary {
            pair_id: id,
            sessions: mine.len(),
            valid_sessions: valid.len(),
            valid_duration_s,
            pulses,
            sample_weight,
            statistics,
            key_rate,
        });
    }
    Ok(out)
}

/// Schedule, run every session, accumulate and report. Sessions run in
/// parallel; results are keyed by session index so the report does not
/// depend on completion order.
pub fn run_network(config: &NetworkConfig, seed: u64) -> Result<RunReport> {
    config.validate()?;
    let plan = plan_for(config, seed)?;
    let sessions: Vec<SessionOutcome> = plan
        .sessions
        .par_iter()
        .map(|p| {
            run_session(config, p).unwrap_or_else(|e| SessionOutcome {
                index: p.index,
                pair_id: p.pair_id(),
                start_s: p.start_s,
                duration_s: p.duration_s,
                seed: p.seed,
                valid: false,
                failure: Some(e.to_string()),
                calibration: None,
                tracking: None,
                pulses: 0,
                sample_weight: 0.0,
                statistics: None,
                key_rate: None,
                trace: Vec::new(),
                sifted: Vec::new(),
            })
        })
        .collect();
    let switch_log = sessions
        .iter()
        .map(|s| SwitchEvent {
            index: s.index,
            t_s: s.start_s,
            pair_id: s.pair_id.clone(),
            valid: s.valid,
            failure: s.failure.clone(),
        })
        .collect();
    let pairs = summarize(config, &sessions)?;
    Ok(RunReport {
        seed,
        mode: config.schedule.mode,
        desk_scale: config.schedule.desk_scale,
        plan,
        sessions,
        pairs,
        switch_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Basis, IntensityLabel};
    use crate::network::config::PlannedSessionConfig;
    use crate::network::schedule::PlannedSession;
    use crate::network::session::{accumulate_session, link_for, prepare_session};
    use crate::optics::CellCounts;
    use proptest::prelude::*;

    fn small(mode: SimulationMode) -> NetworkConfig {
        let mut c = NetworkConfig::default();
        c.schedule.desk_scale = 2e-7;
        c.schedule.mode = mode;
        c
    }

    fn planned(pair: (&str, &str), duration_s: f64, seed: u64) -> PlannedSession {
        PlannedSession {
            index: 0,
            pair: (pair.0.into(), pair.1.into()),
            start_s: 0.0,
            duration_s,
            seed,
        }
    }

    #[test]
    fn merge_identity_and_mismatch() {
        let mut a = SessionStatistics::new("A-B");
        a.cell_mut(IntensityLabel::Signal, IntensityLabel::Signal, Basis::Z).sent = 5;
        assert_eq!(merge_sessions([&a]).unwrap(), a);
        let b = SessionStatistics::new("A-C");
        assert!(matches!(merge_sessions([&a, &b]), Err(Error::PairMismatch { .. })));
        assert!(merge_sessions(std::iter::empty()).is_err());
    }

    proptest! {
        #[test]
        fn merge_is_exact_addition(xs in proptest::collection::vec((0u64..1000, 0u64..1000, 0u64..1000), 18), ys in proptest::collection::vec((0u64..1000, 0u64..1000, 0u64..1000), 18)) {
            let build = |v: &[(u64, u64, u64)]| {
                let mut s = SessionStatistics::new("A-B");
                let mut it = v.iter();
                for a in IntensityLabel::ALL {
                    for b in IntensityLabel::ALL {
                        for basis in Basis::ALL {
                            let &(x, y, z) = it.next().unwrap();
                            *s.cell_mut(a, b, basis) = CellCounts { sent: x + y + z, coincidences: y + z, errors: z };
                        }
                    }
                }
                s
            };
            let (a, b) = (build(&xs), build(&ys));
            let m = merge_sessions([&a, &b]).unwrap();
            for ((_, _, _, c), ((_, _, _, ca), (_, _, _, cb))) in m.iter_cells().zip(a.iter_cells().zip(b.iter_cells())) {
                prop_assert_eq!(c.sent, ca.sent + cb.sent);
                prop_assert_eq!(c.coincidences, ca.coincidences + cb.coincidences);
                prop_assert_eq!(c.errors, ca.errors + cb.errors);
            }
            prop_assert_eq!(merge_sessions([&b, &a]).unwrap(), m);
        }
    }

    /// Ideal plant: no drift and no source misalignment.
    #[test]
    fn session_at_desk_scale_has_positive_rate() {
        let mut c = NetworkConfig::default();
        c.drift = crate::calibration::DriftModel::frozen();
        for u in &mut c.topology.users {
            u.channel.misalignment = 0.0;
        }
        let out = run_session(&c, &planned(("U1", "U2"), 7200.0, 3)).unwrap();
        assert!(out.valid);
        assert!(out.pulses > 100_000_000 && out.pulses < 110_000_000, "{}", out.pulses);
        let r = out.key_rate.unwrap();
        assert!(r.rate_bps > 0.0, "{:?}", r.diagnostics);
    }

    #[test]
    fn forced_calibration_failure_is_invalid_session() {
        let mut c = small(SimulationMode::MonteCarlo);
        c.feedback.scan.dip_threshold = 0.0;
        let out = run_session(&c, &planned(("U1", "U2"), 7200.0, 3)).unwrap();
        assert!(!out.valid);
        assert!(out.statistics.is_none() && out.key_rate.is_none());
        assert!(out.failure.unwrap().contains("dip"));
    }

    #[test]
    fn tiny_session_reports_zero_rate_with_diagnostic() {
        let mut c = small(SimulationMode::MonteCarlo);
        c.schedule.desk_scale = 1e3 / (7200.0 * 75e6);
        let out = run_session(&c, &planned(("U1", "U2"), 7200.0, 8)).unwrap();
        assert_eq!(out.pulses, 1000);
        let r = out.key_rate.unwrap();
        assert_eq!(r.rate_per_pulse, 0.0);
        assert!(!r.diagnostics.is_empty());
    }

    #[test]
    fn accumulated_counts_are_session_sums() {
        let mut c = small(SimulationMode::MonteCarlo);
        c.schedule.total_duration_s = 3.0 * 7200.0;
        let rep = run_network(&c, 11).unwrap();
        assert_eq!(rep.sessions.len(), 3);
        for p in &rep.pairs {
            let mine: Vec<_> = rep.sessions.iter().filter(|s| s.pair_id == p.pair_id && s.valid).collect();
            assert_eq!(p.valid_sessions, mine.len());
            if let Some(acc) = &p.statistics {
                for (a, b, basis, c) in acc.iter_cells() {
                    let sum: u64 = mine.iter().map(|s| s.statistics.as_ref().unwrap().cell(a, b, basis).sent).sum();
                    assert_eq!(c.sent, sum);
                    let sum: u64 = mine.iter().map(|s| s.statistics.as_ref().unwrap().cell(a, b, basis).errors).sum();
                    assert_eq!(c.errors, sum);
                }
            } else {
                assert!(mine.is_empty());
            }
        }
        assert_eq!(rep.switch_log.len(), 3);
    }

    #[test]
    fn invalid_sessions_contribute_nothing() {
        let mut c = small(SimulationMode::MonteCarlo);
        c.feedback.scan.dip_threshold = 0.0;
        c.schedule.total_duration_s = 2.0 * 7200.0;
        let rep = run_network(&c, 2).unwrap();
        assert!(rep.switch_log.iter().all(|e| !e.valid && e.failure.is_some()));
        assert!(rep.pairs.iter().all(|p| p.statistics.is_none() && p.valid_sessions == 0));
    }

    #[test]
    fn report_is_deterministic() {
        let mut c = small(SimulationMode::MonteCarlo);
        c.schedule.total_duration_s = 2.0 * 7200.0;
        let a = run_network(&c, 5).unwrap().to_json_pretty();
        let b = run_network(&c, 5).unwrap().to_json_pretty();
        assert_eq!(a, b);
        let back: RunReport = serde_json::from_str(&a).unwrap();
        assert_eq!(back.to_json_pretty(), a);
    }

    #[test]
    fn zero_duration_gives_empty_report() {
        let mut c = small(SimulationMode::MonteCarlo);
        c.schedule.total_duration_s = 0.0;
        let rep = run_network(&c, 1).unwrap();
        assert!(rep.sessions.is_empty() && rep.switch_log.is_empty());
        assert!(rep.pairs.iter().all(|p| p.sessions == 0 && p.key_rate.is_none()));
    }

    #[test]
    fn single_pair_two_sessions_sum() {
        let mut c = small(SimulationMode::MonteCarlo);
        c.schedule.sessions = Some(vec![
            PlannedSessionConfig {
                pair: ["U1".into(), "U2".into()],
                duration_s: 7200.0,
            };
            2
        ]);
        let rep = run_network(&c, 9).unwrap();
        let p = rep.pair("U1-U2").unwrap();
        assert_eq!(p.valid_sessions, 2);
        let s0 = rep.sessions[0].statistics.as_ref().unwrap();
        let s1 = rep.sessions[1].statistics.as_ref().unwrap();
        let acc = p.statistics.as_ref().unwrap();
        assert_eq!(acc.total_sent(), s0.total_sent() + s1.total_sent());
        assert_eq!(acc.total_coincidences(), s0.total_coincidences() + s1.total_coincidences());
        assert_eq!(rep.pair("U1-U3").unwrap().sessions, 0);
    }

    /// Accumulation only tightens the fluctuation bounds, so the merged
    /// rate is at least (nearly) the count-weighted mean of session rates.
    #[test]
    fn accumulated_rate_not_below_session_average() {
        let mut c = NetworkConfig::default();
        c.schedule.mode = SimulationMode::Expected;
        let link = link_for(&c, &("U1".into(), "U2".into())).unwrap();
        let outs: Vec<SessionOutcome> = (0..4)
            .map(|k| {
                let mut p = planned(("U1", "U2"), 7200.0, 40 + k);
                p.index = k as usize;
                accumulate_session(&c, &prepare_session(&c, &p), &link).unwrap()
            })
            .collect();
        let pairs = summarize(&c, &outs).unwrap();
        let acc = pairs[0].key_rate.as_ref().unwrap().rate_per_pulse;
        let (num, den) = outs.iter().fold((0.0, 0.0), |(n, d), s| {
            let w = s.pulses as f64;
            (n + w * s.key_rate.as_ref().unwrap().rate_per_pulse, d + w)
        });
        assert!(acc >= 0.9 * num / den, "{acc} vs {}", num / den);
    }
}
