use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{DriftModel, FeedbackConfig};
use crate::error::{Error, Result};
use crate::model::ProtocolParams;
use crate::optics::{field_detectors, ChannelModel, DetectorModel};

/// Misalignment per arm fitted against the field results; see the
/// `fit_misalignment` example.
pub const FITTED_MISALIGNMENT: f64 = 0.013;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub id: String,
    #[serde(default)]
    pub channel: ChannelModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelayConfig {
    pub detectors: [DetectorModel; 2],
}

impl Default for RelayConfig {
    fn default() -> Self {
        RelayConfig {
            detectors: field_detectors(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchConfig {
    /// Input (user-side) ports.
    pub inputs: usize,
    /// Output (relay-side) ports.
    pub outputs: usize,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig { inputs: 8, outputs: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkTopology {
    pub users: Vec<UserConfig>,
    pub relay: RelayConfig,
    pub switch: SwitchConfig,
}

impl Default for NetworkTopology {
    /// Three users at 5.1, 9.2 and 8.1 dB of fiber from the relay.
    fn default() -> Self {
        let user = |id: &str, loss: f64| UserConfig {
            id: id.into(),
            channel: ChannelModel {
                misalignment: FITTED_MISALIGNMENT,
                ..ChannelModel::with_fiber_loss(loss)
            },
        };
        NetworkTopology {
            users: vec![user("U1", 5.1), user("U2", 9.2), user("U3", 8.1)],
            relay: RelayConfig::default(),
            switch: SwitchConfig::default(),
        }
    }
}

impl NetworkTopology {
    pub fn user(&self, id: &str) -> Option<&UserConfig> {
        self.users.iter().find(|u| u.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users.len() < 2 {
            return Err(Error::config("topology.users", "need at least two users"));
        }
        if self.users.len() > self.switch.inputs {
            return Err(Error::config(
                "topology.users",
                format!("{} users exceed the switch's {} input ports", self.users.len(), self.switch.inputs),
            ));
        }
        if self.switch.outputs < 2 {
            return Err(Error::config("topology.switch.outputs", "need two relay-side ports"));
        }
        let mut seen = HashSet::new();
        for (i, u) in self.users.iter().enumerate() {
            if u.id.is_empty() || u.id.contains(',') || u.id.contains('-') {
                return Err(Error::config(format!("topology.users[{i}].id"), "must be non-empty without ',' or '-'"));
            }
            if !seen.insert(u.id.as_str()) {
                return Err(Error::config(format!("topology.users[{i}].id"), format!("duplicate id {}", u.id)));
            }
            u.channel.validate(&format!("topology.users[{i}].channel"))?;
        }
        self.relay.detectors[0].validate("topology.relay.detectors[0]")?;
        self.relay.detectors[1].validate("topology.relay.detectors[1]")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    /// Per-pulse Monte-Carlo counts.
    MonteCarlo,
    /// Expectation values at the full physical pulse count, rounded to
    /// counts; deterministic and fast. Ignores the desk scale.
    Expected,
}

/// A session fixed in advance instead of drawn by the scheduler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannedSessionConfig {
    pub pair: [String; 2],
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub total_duration_s: f64,
    pub session_length_s: f64,
    /// Ordered user pairs eligible for connection; all pairs in user order
    /// when absent.
    pub pairs: Option<Vec<[String; 2]>>,
    /// Forbid drawing the same pair twice in a row.
    pub no_repeat: bool,
    /// Fixed session list; overrides the random draw and total duration.
    pub sessions: Option<Vec<PlannedSessionConfig>>,
    /// Monte-Carlo pulses per session are `duration × clock × desk_scale`;
    /// counts are re-weighted by `1 / desk_scale` before the key rate.
    pub desk_scale: f64,
    /// Each session is simulated in this many pieces, each at the residual
    /// distinguishability tracked at its midpoint.
    pub segments_per_session: usize,
    pub mode: SimulationMode,
    /// Slots of each session also run through the reference event path and
    /// kept as sifted records, for debugging. Zero disables.
    pub debug_sifted_events: u64,
    /// One trace row per loop per this many seconds during tracking.
    pub trace_interval_s: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            total_duration_s: 6.0 * 3600.0,
            session_length_s: 2.0 * 3600.0,
            pairs: None,
            no_repeat: false,
            sessions: None,
            desk_scale: 2e-4,
            segments_per_session: 8,
            mode: SimulationMode::MonteCarlo,
            debug_sifted_events: 0,
            trace_interval_s: 10.0,
        }
    }
}

/// The whole run in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub topology: NetworkTopology,
    pub protocol: ProtocolParams,
    pub drift: DriftModel,
    pub feedback: FeedbackConfig,
    pub schedule: ScheduleConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            topology: NetworkTopology::default(),
            protocol: ProtocolParams::default(),
            drift: DriftModel::default(),
            feedback: FeedbackConfig::default(),
            schedule: ScheduleConfig {
                pairs: Some(vec![
                    ["U1".into(), "U2".into()],
                    ["U1".into(), "U3".into()],
                    ["U3".into(), "U2".into()],
                ]),
                ..ScheduleConfig::default()
            },
        }
    }
}

impl NetworkConfig {
    /// Parse and validate. Errors name the offending field as a dotted path.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let cfg: NetworkConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".to_string() } else { path }, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Pairs eligible for connection, resolved against the user list.
    pub fn pairs(&self) -> Vec<(String, String)> {
        match &self.schedule.pairs {
            Some(p) => p.iter().map(|[a, b]| (a.clone(), b.clone())).collect(),
            None => {
                let ids: Vec<&str> = self.topology.users.iter().map(|u| u.id.as_str()).collect();
                let mut out = Vec::new();
                for i in 0..ids.len() {
                    for j in i + 1..ids.len() {
                        out.push((ids[i].to_string(), ids[j].to_string()));
                    }
                }
                out
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.protocol.validate()?;
        self.drift.validate()?;
        self.feedback.validate()?;
        let s = &self.schedule;
        if !(s.total_duration_s >= 0.0 && s.total_duration_s.is_finite()) {
            return Err(Error::config("schedule.total_duration_s", "must be finite and >= 0"));
        }
        if !(s.session_length_s > 0.0 && s.session_length_s.is_finite()) {
            return Err(Error::config("schedule.session_length_s", "must be > 0"));
        }
        if !(s.desk_scale > 0.0 && s.desk_scale <= 1.0) {
            return Err(Error::config("schedule.desk_scale", "must lie in (0, 1]"));
        }
        if s.segments_per_session == 0 {
            return Err(Error::config("schedule.segments_per_session", "must be >= 1"));
        }
        if !(s.trace_interval_s > 0.0) {
            return Err(Error::config("schedule.trace_interval_s", "must be > 0"));
        }
        let check_pair = |field: String, a: &str, b: &str| -> Result<()> {
            for id in [a, b] {
                if self.topology.user(id).is_none() {
                    return Err(Error::config(field.clone(), format!("unknown user {id}")));
                }
            }
            if a == b {
                return Err(Error::config(field, "a pair needs two different users"));
            }
            Ok(())
        };
        if let Some(pairs) = &s.pairs {
            if pairs.is_empty() {
                return Err(Error::config("schedule.pairs", "must not be empty"));
            }
            for (i, [a, b]) in pairs.iter().enumerate() {
                check_pair(format!("schedule.pairs[{i}]"), a, b)?;
            }
        }
        if let Some(sessions) = &s.sessions {
            for (i, p) in sessions.iter().enumerate() {
                check_pair(format!("schedule.sessions[{i}].pair"), &p.pair[0], &p.pair[1])?;
                if !(p.duration_s > 0.0 && p.duration_s.is_finite()) {
                    return Err(Error::config(format!("schedule.sessions[{i}].duration_s"), "must be > 0"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let c = NetworkConfig::default();
        c.validate().unwrap();
        let back = NetworkConfig::from_json_str(&c.to_json_pretty()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn empty_document_is_the_default() {
        let c = NetworkConfig::from_json_str("{}").unwrap();
        assert_eq!(c, NetworkConfig::default());
    }

    #[test]
    fn unknown_key_is_rejected_with_path() {
        let e = NetworkConfig::from_json_str(r#"{"schedule": {"desk_scal": 1e-3}}"#).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("schedule"), "{msg}");
        assert!(msg.contains("desk_scal"), "{msg}");
        let e = NetworkConfig::from_json_str(r#"{"topology": {"users": [{"id": "A", "channel": {"fiber_los_db": 1}}]}}"#).unwrap_err();
        assert!(e.to_string().contains("topology.users[0].channel"), "{e}");
    }

    #[test]
    fn wrong_type_names_field() {
        let e = NetworkConfig::from_json_str(r#"{"protocol": {"clock_rate_hz": "fast"}}"#).unwrap_err();
        assert!(e.to_string().contains("protocol.clock_rate_hz"), "{e}");
    }

    #[test]
    fn single_user_rejected() {
        let mut c = NetworkConfig::default();
        c.topology.users.truncate(1);
        c.schedule.pairs = None;
        assert!(c.validate().unwrap_err().to_string().contains("topology.users"));
    }

    #[test]
    fn pairs_default_to_user_order() {
        let mut c = NetworkConfig::default();
        c.schedule.pairs = None;
        let p = c.pairs();
        assert_eq!(p.len(), 3);
        assert_eq!(p[2], ("U2".to_string(), "U3".to_string()));
    }

    #[test]
    fn unknown_user_in_pair_rejected() {
        let mut c = NetworkConfig::default();
        c.schedule.pairs = Some(vec![["U1".into(), "U9".into()]]);
        assert!(c.validate().unwrap_err().to_string().contains("schedule.pairs[0]"));
    }
}
