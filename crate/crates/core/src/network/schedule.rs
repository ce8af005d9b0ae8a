use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub fn pair_id(a: &str, b: &str) -> String {
    format!("{a}-{b}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedSession {
    pub index: usize,
    pub pair: (String, String),
    pub start_s: f64,
    pub duration_s: f64,
    pub seed: u64,
}

impl PlannedSession {
    pub fn pair_id(&self) -> String {
        pair_id(&self.pair.0, &self.pair.1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub sessions: Vec<PlannedSession>,
}

impl SessionPlan {
    pub fn total_duration_s(&self) -> f64 {
        self.sessions.iter().map(|s| s.duration_s).sum()
    }
}

/// Back-to-back sessions of `session_length_s` covering `total_duration_s`,
/// the last one truncated, each connecting a pair drawn uniformly from
/// `pairs`.
pub fn schedule(pairs: &[(String, String)], total_duration_s: f64, session_length_s: f64, no_repeat: bool, seed: u64) -> Result<SessionPlan> {
    if pairs.is_empty() {
        return Err(Error::config("schedule.pairs", "need at least one pair (two users)"));
    }
    if !(session_length_s > 0.0) {
        return Err(Error::config("schedule.session_length_s", "must be > 0"));
    }
    if !(total_duration_s >= 0.0 && total_duration_s.is_finite()) {
        return Err(Error::config("schedule.total_duration_s", "must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5c4e_d01e));
    let mut sessions = Vec::new();
    let mut start = 0.0;
    let mut last: Option<usize> = None;
    while start < total_duration_s {
        let duration = session_length_s.min(total_duration_s - start);
        let k = match last {
            Some(prev) if no_repeat && pairs.len() > 1 => {
                // uniform over the other pairs
                let j = rng.random_range(0..pairs.len() - 1);
                if j >= prev {
                    j + 1
                } else {
                    j
                }
            }
            _ => rng.random_range(0..pairs.len()),
        };
        let index = sessions.len();
        sessions.push(PlannedSession {
            index,
            pair: pairs[k].clone(),
            start_s: start,
            duration_s: duration,
            seed: derive_seed(seed, index as u64 + 1),
        });
        last = Some(k);
        start += duration;
    }
    Ok(SessionPlan { sessions })
}

/// The plan for a whole configuration: the fixed session list if one is
/// given, otherwise a random draw.
pub fn plan_for(config: &NetworkConfig, seed: u64) -> Result<SessionPlan> {
    let s = &config.schedule;
    match &s.sessions {
        Some(list) => {
            let mut start = 0.0;
            let sessions = list
                .iter()
                .enumerate()
                .map(|(index, p)| {
                    let planned = PlannedSession {
                        index,
                        pair: (p.pair[0].clone(), p.pair[1].clone()),
                        start_s: start,
                        duration_s: p.duration_s,
                        seed: derive_seed(seed, index as u64 + 1),
                    };
                    start += p.duration_s;
                    planned
                })
                .collect();
            Ok(SessionPlan { sessions })
        }
        None => schedule(&config.pairs(), s.total_duration_s, s.session_length_s, s.no_repeat, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn three() -> Vec<(String, String)> {
        [("U1", "U2"), ("U1", "U3"), ("U3", "U2")]
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .to_vec()
    }

    #[test]
    fn six_hours_three_sessions() {
        let p = schedule(&three(), 6.0 * 3600.0, 7200.0, false, 1).unwrap();
        assert_eq!(p.sessions.len(), 3);
        for s in &p.sessions {
            assert!(three().contains(&s.pair));
            assert_eq!(s.duration_s, 7200.0);
        }
        assert_eq!(p.sessions[2].start_s, 14400.0);
    }

    #[test]
    fn two_users_always_same_pair() {
        let pairs = vec![("A".to_string(), "B".to_string())];
        let p = schedule(&pairs, 10.0 * 3600.0, 7200.0, true, 5).unwrap();
        assert!(p.sessions.iter().all(|s| s.pair == pairs[0]));
    }

    #[test]
    fn short_run_is_one_truncated_session() {
        let p = schedule(&three(), 1800.0, 7200.0, false, 1).unwrap();
        assert_eq!(p.sessions.len(), 1);
        assert_eq!(p.sessions[0].duration_s, 1800.0);
        assert!(schedule(&three(), 0.0, 7200.0, false, 1).unwrap().sessions.is_empty());
    }

    #[test]
    fn empty_pair_list_is_config_error() {
        assert!(matches!(schedule(&[], 1.0, 1.0, false, 0), Err(Error::Config { .. })));
    }

    #[test]
    fn pair_frequencies_are_uniform() {
        let pairs = three();
        let plans = 10_000;
        let mut counts = [0usize; 3];
        for seed in 0..plans {
            let p = schedule(&pairs, 7200.0, 7200.0, false, seed).unwrap();
            let k = pairs.iter().position(|x| *x == p.sessions[0].pair).unwrap();
            counts[k] += 1;
        }
        let n = plans as f64;
        let sigma = (n * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - n / 3.0).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn no_repeat_rule() {
        let p = schedule(&three(), 100.0 * 3600.0, 7200.0, true, 3).unwrap();
        assert!(p.sessions.windows(2).all(|w| w[0].pair != w[1].pair));
        // off by default: repeats do happen
        let p = schedule(&three(), 100.0 * 3600.0, 7200.0, false, 3).unwrap();
        assert!(p.sessions.windows(2).any(|w| w[0].pair == w[1].pair));
    }

    proptest! {
        #[test]
        fn sessions_tile_time_without_overlap(total in 0.0f64..1e5, len in 10.0f64..1e4, seed in any::<u64>()) {
            let p = schedule(&three(), total, len, false, seed).unwrap();
            let mut t = 0.0;
            for s in &p.sessions {
                prop_assert_eq!(s.start_s, t);
                prop_assert!(s.duration_s > 0.0 && s.duration_s <= len);
                t += s.duration_s;
            }
            prop_assert!((t - total).abs() < 1e-6 * total.max(1.0));
            prop_assert_eq!(p, schedule(&three(), total, len, false, seed).unwrap());
        }
    }
}
