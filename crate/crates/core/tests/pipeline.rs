use std::io::BufReader;
use std::path::Path;

use mdiqkd::decoy::{rate_to_bps, secure_key_rate, CountTable};
use mdiqkd::network::{
    accumulate_session, link_for, plan_for, prepare_session, run_network, run_session, NetworkConfig, PlannedSession,
    SimulationMode,
};
use mdiqkd::optics::{expected_statistics, SessionStatistics};

fn u1_u2(c: &NetworkConfig) -> mdiqkd::optics::LinkModel {
    link_for(c, &("U1".into(), "U2".into())).unwrap()
}

/// Frozen from the first verified run of the oracle pipeline on the default
/// U1-U2 link over its accumulated 17.4 h.
#[test]
fn oracle_u1_u2_regression() {
    let c = NetworkConfig::default();
    let e = expected_statistics(&c.protocol, &u1_u2(&c)).unwrap();
    let n = 17.4 * 3600.0 * c.protocol.clock_rate_hz;
    let r = secure_key_rate(&CountTable::from_expected(&e, n), &c.protocol).unwrap();
    assert!((r.rate_bps - 29.2657).abs() < 1e-3, "{}", r.rate_bps);
    assert!((r.estimate.y11_lower - 1.18781e-3).abs() < 1e-8);
    assert!((r.estimate.e11_upper - 0.133714).abs() < 1e-6);
    let lp = r.estimate.y11_lower_lp.unwrap();
    assert!(lp >= r.estimate.y11_lower && lp < 1.1 * r.estimate.y11_lower, "{lp}");
    assert!(r.diagnostics.is_empty());

    // one hour alone does not pay for error correction at this misalignment
    let r1 = secure_key_rate(&CountTable::from_expected(&e, n / 17.4), &c.protocol).unwrap();
    assert_eq!(r1.rate_bps, 0.0);
    assert!(!r1.diagnostics.is_empty());
}

#[test]
fn bps_from_per_pulse_rate() {
    assert!((rate_to_bps(2.28e-7, 7.5e7, 1.0) - 17.1).abs() < 1e-9);
    assert_eq!(rate_to_bps(1e-6, 7.5e7, 1.0), 75.0);
}

/// The record text of expected counts feeds the same key rate as the
/// in-memory table.
#[test]
fn record_file_round_trip_preserves_rate() {
    let c = NetworkConfig::default();
    let e = expected_statistics(&c.protocol, &u1_u2(&c)).unwrap();
    let n = 17.4 * 3600.0 * c.protocol.clock_rate_hz;
    let st = e.expected_counts(n);
    let text = st.to_records_string();
    let back = SessionStatistics::read_records(BufReader::new(text.as_bytes())).unwrap();
    assert_eq!(back, st);
    let a = secure_key_rate(&CountTable::from_statistics(&st, 1.0), &c.protocol).unwrap();
    let b = secure_key_rate(&CountTable::from_statistics(&back, 1.0), &c.protocol).unwrap();
    assert_eq!(a, b);
    assert!(a.rate_bps > 10.0);
}

#[test]
fn field_plan_matches_accumulated_hours() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/field.json");
    let c = NetworkConfig::from_path(&path).unwrap();
    let plan = plan_for(&c, 1).unwrap();
    assert_eq!(plan.sessions.len(), 49);
    for (id, hours) in [("U1-U2", 17.4), ("U1-U3", 14.2), ("U3-U2", 26.9)] {
        let h: f64 = plan.sessions.iter().filter(|s| s.pair_id() == id).map(|s| s.duration_s).sum::<f64>() / 3600.0;
        assert!((h - hours).abs() < 1e-9, "{id} {h}");
    }
    let default = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    assert_eq!(NetworkConfig::from_path(&default).unwrap(), NetworkConfig::default());
}

#[test]
fn six_hour_network_run() {
    let mut c = NetworkConfig::default();
    c.schedule.desk_scale = 2e-6;
    let r = run_network(&c, 9).unwrap();
    assert_eq!(r.sessions.len(), 3);
    assert!(r.sessions.iter().all(|s| s.valid));
    for s in &r.sessions {
        let p = r.pair(&s.pair_id).unwrap();
        assert!(p.sessions >= 1);
        assert!(p.key_rate.is_some());
    }
    for p in &r.pairs {
        let mine: Vec<&SessionStatistics> = r
            .sessions
            .iter()
            .filter(|s| s.pair_id == p.pair_id)
            .filter_map(|s| s.statistics.as_ref())
            .collect();
        if let Some(acc) = &p.statistics {
            for (a, b, basis, cell) in acc.iter_cells() {
                let sum: u64 = mine.iter().map(|s| s.cell(a, b, basis).sent).sum();
                assert_eq!(cell.sent, sum);
            }
        } else {
            assert!(mine.is_empty());
        }
    }
    assert_eq!(r.switch_log.len(), 3);
}

/// Expected mode evaluates the physical pulse count; the in-session and
/// direct oracle paths agree on a frozen plant.
#[test]
fn expected_session_uses_full_pulse_count() {
    let mut c = NetworkConfig::default();
    c.schedule.mode = SimulationMode::Expected;
    c.drift = mdiqkd::calibration::DriftModel::frozen();
    let planned = PlannedSession {
        index: 0,
        pair: ("U1".into(), "U2".into()),
        start_s: 0.0,
        duration_s: 3600.0,
        seed: 4,
    };
    let out = run_session(&c, &planned).unwrap();
    assert_eq!(out.pulses, (3600.0 * c.protocol.clock_rate_hz) as u64);
    assert_eq!(out.sample_weight, 1.0);
    let again = accumulate_session(&c, &prepare_session(&c, &planned), &u1_u2(&c)).unwrap();
    assert_eq!(out.statistics, again.statistics);
}
