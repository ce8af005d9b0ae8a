//! Shared vocabulary: intensity settings, bases, protocol parameters, and the
//! closed-form primitives (binary entropy, Poisson photon statistics, dB
//! conversion) the rest of the crate is written in terms of.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance applied when checking that configured probabilities sum to one.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Which of the three decoy-state intensities a pulse was prepared with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityLabel {
    Vacuum,
    Decoy,
    Signal,
}

impl IntensityLabel {
    pub const ALL: [IntensityLabel; 3] = [
        IntensityLabel::Vacuum,
        IntensityLabel::Decoy,
        IntensityLabel::Signal,
    ];

    pub fn index(self) -> usize {
        match self {
            IntensityLabel::Vacuum => 0,
            IntensityLabel::Decoy => 1,
            IntensityLabel::Signal => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IntensityLabel::Vacuum => "vacuum",
            IntensityLabel::Decoy => "decoy",
            IntensityLabel::Signal => "signal",
        }
    }
}

impl fmt::Display for IntensityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IntensityLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "vacuum" | "0" => Ok(IntensityLabel::Vacuum),
            "decoy" | "nu" => Ok(IntensityLabel::Decoy),
            "signal" | "mu" => Ok(IntensityLabel::Signal),
            other => Err(format!("unknown intensity label `{other}`")),
        }
    }
}

/// Time-bin encoding basis. Z is early/late occupancy, X the relative phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];

    pub fn index(self) -> usize {
        match self {
            Basis::Z => 0,
            Basis::X => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Basis::Z => "Z",
            Basis::X => "X",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Basis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "Z" | "z" => Ok(Basis::Z),
            "X" | "x" => Ok(Basis::X),
            other => Err(format!("unknown basis `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensitySetting {
    pub label: IntensityLabel,
    /// Mean photon number per pulse at the source output.
    pub mean_photon_number: f64,
    pub send_probability: f64,
}

/// Probability of encoding in the X basis, per intensity label.
///
/// The vacuum entry only labels which sifting bucket an empty pulse falls
/// into; the physical state is the same in both bases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisTable {
    pub vacuum: f64,
    pub decoy: f64,
    pub signal: f64,
}

impl BasisTable {
    pub fn x_probability(&self, label: IntensityLabel) -> f64 {
        match label {
            IntensityLabel::Vacuum => self.vacuum,
            IntensityLabel::Decoy => self.decoy,
            IntensityLabel::Signal => self.signal,
        }
    }

    pub fn probability(&self, label: IntensityLabel, basis: Basis) -> f64 {
        let px = self.x_probability(label);
        match basis {
            Basis::X => px,
            Basis::Z => 1.0 - px,
        }
    }
}

impl Default for BasisTable {
    fn default() -> Self {
        BasisTable {
            vacuum: 0.5,
            decoy: 0.63,
            signal: 0.0,
        }
    }
}

/// Source and post-processing parameters shared by both users of a link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolParams {
    /// Ordered vacuum, decoy, signal.
    pub intensities: [IntensitySetting; 3],
    pub x_basis_probability: BasisTable,
    pub clock_rate_hz: f64,
    pub coincidence_window_s: f64,
    /// Error-correction inefficiency `f` multiplying the leaked syndrome.
    pub error_correction_efficiency: f64,
    /// Total failure probability shared out across every fluctuation bound.
    pub failure_probability: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            intensities: [
                IntensitySetting {
                    label: IntensityLabel::Vacuum,
                    mean_photon_number: 0.0,
                    send_probability: 0.16,
                },
                IntensitySetting {
                    label: IntensityLabel::Decoy,
                    mean_photon_number: 0.1,
                    send_probability: 0.58,
                },
                IntensitySetting {
                    label: IntensityLabel::Signal,
                    mean_photon_number: 0.33,
                    send_probability: 0.26,
                },
            ],
            x_basis_probability: BasisTable::default(),
            clock_rate_hz: 75e6,
            coincidence_window_s: 1.7e-9,
            error_correction_efficiency: 1.2,
            failure_probability: 1e-10,
        }
    }
}

impl ProtocolParams {
    pub fn setting(&self, label: IntensityLabel) -> &IntensitySetting {
        &self.intensities[label.index()]
    }

    pub fn mean_photon_number(&self, label: IntensityLabel) -> f64 {
        self.setting(label).mean_photon_number
    }

    /// Probability that one user prepares `label` in `basis` on a given slot.
    pub fn preparation_probability(&self, label: IntensityLabel, basis: Basis) -> f64 {
        self.setting(label).send_probability * self.x_basis_probability.probability(label, basis)
    }

    /// Probability that a pulse pair lands in the sifted cell `(a, b, basis)`.
    pub fn cell_probability(&self, a: IntensityLabel, b: IntensityLabel, basis: Basis) -> f64 {
        self.preparation_probability(a, basis) * self.preparation_probability(b, basis)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, setting) in self.intensities.iter().enumerate() {
            let field = format!("protocol.intensities[{i}]");
            if setting.label != IntensityLabel::from_index(i) {
                return Err(Error::config(
                    format!("{field}.label"),
                    format!("expected `{}` at position {i}", IntensityLabel::from_index(i)),
                ));
            }
            if !(setting.mean_photon_number >= 0.0 && setting.mean_photon_number.is_finite()) {
                return Err(Error::config(
                    format!("{field}.mean_photon_number"),
                    "must be finite and >= 0",
                ));
            }
            if !(0.0..=1.0).contains(&setting.send_probability) {
                return Err(Error::config(
                    format!("{field}.send_probability"),
                    "must lie in [0, 1]",
                ));
            }
        }
        let vacuum = self.setting(IntensityLabel::Vacuum).mean_photon_number;
        if vacuum != 0.0 {
            return Err(Error::config(
                "protocol.intensities[0].mean_photon_number",
                "vacuum must have mean photon number 0",
            ));
        }
        let decoy = self.mean_photon_number(IntensityLabel::Decoy);
        let signal = self.mean_photon_number(IntensityLabel::Signal);
        if !(decoy > 0.0 && decoy < signal) {
            return Err(Error::config(
                "protocol.intensities[1].mean_photon_number",
                "need 0 < decoy < signal",
            ));
        }
        let total: f64 = self.intensities.iter().map(|s| s.send_probability).sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::config(
                "protocol.intensities",
                format!("send probabilities sum to {total}, expected 1"),
            ));
        }
        for label in IntensityLabel::ALL {
            let p = self.x_basis_probability.x_probability(label);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(
                    format!("protocol.x_basis_probability.{label}"),
                    "must lie in [0, 1]",
                ));
            }
        }
        if !(self.clock_rate_hz > 0.0 && self.clock_rate_hz.is_finite()) {
            return Err(Error::config("protocol.clock_rate_hz", "must be > 0"));
        }
        if !(self.coincidence_window_s > 0.0 && self.coincidence_window_s.is_finite()) {
            return Err(Error::config("protocol.coincidence_window_s", "must be > 0"));
        }
        if !(self.error_correction_efficiency >= 1.0) {
            return Err(Error::config(
                "protocol.error_correction_efficiency",
                "must be >= 1",
            ));
        }
        if !(self.failure_probability > 0.0 && self.failure_probability < 1.0) {
            return Err(Error::config(
                "protocol.failure_probability",
                "must lie in (0, 1)",
            ));
        }
        Ok(())
    }
}

/// Binary Shannon entropy in bits, extended continuously to 0 at both ends.
pub fn binary_entropy(e: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::domain("e", e, "binary entropy needs 0 <= e <= 1"));
    }
    if e == 0.0 || e == 1.0 {
        return Ok(0.0);
    }
    Ok(-e * e.log2() - (1.0 - e) * (1.0 - e).log2())
}

/// Poisson probability of emitting exactly `n` photons at mean `mean`.
pub fn poisson_photon_prob(mean: f64, n: u32) -> Result<f64> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::domain("mean", mean, "mean photon number must be >= 0"));
    }
    if mean == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    // log-space keeps large n finite
    let log_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    Ok((-mean + n as f64 * mean.ln() - log_fact).exp())
}

/// `P_n(mean)` for callers that already validated `mean`.
pub(crate) fn poisson(mean: f64, n: u32) -> f64 {
    poisson_photon_prob(mean, n).unwrap_or(0.0)
}

/// Power transmittance of a loss given in dB.
pub fn transmittance_from_db(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0 && loss_db.is_finite()) {
        return Err(Error::domain("loss_db", loss_db, "loss must be >= 0 dB"));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}
