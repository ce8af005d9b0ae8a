//! Physical model of one MDI link: weak-coherent time-bin sources, lossy
//! fiber/switch/filter arms, and the relay's beam-splitter Bell-state
//! measurement with two threshold detectors.
//!
//! Two independent evaluation routes share the per-slot click model in
//! [`bsm`]: the Monte-Carlo sampler in [`session`] and the phase-quadrature
//! expectation in [`oracle`].

pub mod bsm;
pub mod encode;
pub mod hom;
pub mod oracle;
pub mod session;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::transmittance_from_db;

pub use bsm::{bsm_detect, bsm_postselect, BellOutcome, ClickRecord, ClickSource, Detector, TimeBin};
pub use encode::{apply_misalignment, encode_pulse, propagate, PulsePair};
pub use hom::{expected_hom_coincidence_value, hom_coincidence_value, hom_counts, sample_hom_counts, HomCounts};
pub use oracle::{expected_statistics, ExpectedCell, ExpectedStatistics};
pub use session::{simulate_session, LinkModel};
pub use stats::{CellCounts, RawEvent, SessionStatistics, TruthTags, UserChoice};

/// FWHM of the source pulses, seconds.
pub const PULSE_WIDTH_S: f64 = 2.5e-9;
/// Source centre wavelength, nm.
pub const CENTER_WAVELENGTH_NM: f64 = 1550.12;
/// Delay between the early and late time bins (AMZI path difference), seconds.
pub const TIME_BIN_SEPARATION_S: f64 = 6.5e-9;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Loss budget and alignment of one user's arm from source to beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelModel {
    pub fiber_loss_db: f64,
    pub switch_loss_db: f64,
    pub dwdm_loss_db: f64,
    /// This arm's share of the beam splitter's insertion loss.
    pub bs_insertion_loss_share_db: f64,
    /// Probability that a pulse is prepared in the wrong mode: the other
    /// time bin in Z, the opposite phase in X.
    pub misalignment: f64,
}

impl ChannelModel {
    pub fn with_fiber_loss(fiber_loss_db: f64) -> Self {
        ChannelModel {
            fiber_loss_db,
            ..ChannelModel::default()
        }
    }

    pub fn lossless() -> Self {
        ChannelModel {
            fiber_loss_db: 0.0,
            switch_loss_db: 0.0,
            dwdm_loss_db: 0.0,
            bs_insertion_loss_share_db: 0.0,
            misalignment: 0.0,
        }
    }

    pub fn total_loss_db(&self) -> f64 {
        self.fiber_loss_db + self.switch_loss_db + self.dwdm_loss_db + self.bs_insertion_loss_share_db
    }

    pub fn transmittance(&self) -> f64 {
        transmittance_from_db(self.total_loss_db()).unwrap_or(0.0)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        for (name, v) in [
            ("fiber_loss_db", self.fiber_loss_db),
            ("switch_loss_db", self.switch_loss_db),
            ("dwdm_loss_db", self.dwdm_loss_db),
            ("bs_insertion_loss_share_db", self.bs_insertion_loss_share_db),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{field}.{name}"), "loss must be >= 0 dB"));
            }
        }
        if !(0.0..=0.5).contains(&self.misalignment) {
            return Err(Error::config(format!("{field}.misalignment"), "must lie in [0, 0.5]"));
        }
        Ok(())
    }
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            fiber_loss_db: 0.0,
            switch_loss_db: 1.0,
            dwdm_loss_db: 0.7,
            bs_insertion_loss_share_db: 0.7,
            misalignment: 0.0,
        }
    }
}

/// Threshold single-photon detector behind one beam-splitter output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark_count_rate_hz: f64,
    pub gate_window_s: f64,
}

impl DetectorModel {
    pub fn new(efficiency: f64) -> Self {
        DetectorModel {
            efficiency,
            ..DetectorModel::default()
        }
    }

    pub fn ideal() -> Self {
        DetectorModel {
            efficiency: 1.0,
            dark_count_rate_hz: 0.0,
            gate_window_s: 1.7e-9,
        }
    }

    /// Dark-click probability in one time bin.
    pub fn dark_probability(&self) -> f64 {
        self.dark_count_rate_hz * self.gate_window_s
    }

    /// Click probability for mean photon number `intensity` at the detector.
    pub fn click_probability(&self, intensity: f64) -> f64 {
        1.0 - (1.0 - self.dark_probability()) * (-self.efficiency * intensity).exp()
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::config(format!("{field}.efficiency"), "must lie in [0, 1]"));
        }
        if !(self.dark_count_rate_hz >= 0.0 && self.dark_count_rate_hz.is_finite()) {
            return Err(Error::config(format!("{field}.dark_count_rate_hz"), "must be >= 0"));
        }
        if !(self.gate_window_s > 0.0) {
            return Err(Error::config(format!("{field}.gate_window_s"), "must be > 0"));
        }
        let p = self.dark_probability();
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(
                format!("{field}.dark_count_rate_hz"),
                "dark probability per window must be < 1",
            ));
        }
        Ok(())
    }
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            efficiency: 0.64,
            dark_count_rate_hz: 100.0,
            gate_window_s: 1.7e-9,
        }
    }
}

/// The relay's two detectors as deployed: 64% and 66% efficient.
pub fn field_detectors() -> [DetectorModel; 2] {
    [DetectorModel::new(0.64), DetectorModel::new(0.66)]
}

/// How far the two users' pulses are from indistinguishable at the beam
/// splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistinguishabilityState {
    pub delta_wavelength_pm: f64,
    pub delta_time_ps: f64,
    pub polarization_overlap: f64,
    /// Ratio of the two users' intensities at the beam splitter (HOM only).
    pub intensity_ratio: f64,
    /// Residual phase between the two users' AMZIs, added to the first
    /// user's late bin.
    pub relative_phase_rad: f64,
}

impl Default for DistinguishabilityState {
    fn default() -> Self {
        Self::indistinguishable()
    }
}

impl DistinguishabilityState {
    pub fn indistinguishable() -> Self {
        DistinguishabilityState {
            delta_wavelength_pm: 0.0,
            delta_time_ps: 0.0,
            polarization_overlap: 1.0,
            intensity_ratio: 1.0,
            relative_phase_rad: 0.0,
        }
    }

    /// A state with the given interfering fraction and nothing else off.
    pub fn with_overlap(zeta: f64) -> Self {
        DistinguishabilityState {
            polarization_overlap: zeta,
            ..Self::indistinguishable()
        }
    }

    /// Mode overlap `ζ` for Gaussian pulse envelopes: spectral, temporal and
    /// polarization factors multiply.
    pub fn mode_overlap(&self) -> f64 {
        let sigma_t = PULSE_WIDTH_S / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
        let lambda0 = CENTER_WAVELENGTH_NM * 1e-9;
        let dl = self.delta_wavelength_pm * 1e-12;
        let spectral = std::f64::consts::PI * SPEED_OF_LIGHT * dl * sigma_t / (lambda0 * lambda0);
        let dt = self.delta_time_ps * 1e-12;
        let zeta = (-spectral * spectral).exp()
            * (-(dt * dt) / (8.0 * sigma_t * sigma_t)).exp()
            * self.polarization_overlap;
        zeta.clamp(0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.polarization_overlap) {
            return Err(Error::config(
                "distinguishability.polarization_overlap",
                "must lie in [0, 1]",
            ));
        }
        if !(self.intensity_ratio > 0.0 && self.intensity_ratio.is_finite()) {
            return Err(Error::config("distinguishability.intensity_ratio", "must be > 0"));
        }
        if !self.delta_wavelength_pm.is_finite()
            || !self.delta_time_ps.is_finite()
            || !self.relative_phase_rad.is_finite()
        {
            return Err(Error::config("distinguishability", "values must be finite"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_arm_loss_composes() {
        let u1 = ChannelModel::with_fiber_loss(5.1);
        assert_close!(u1.total_loss_db(), 7.5, 1e-12);
        assert_close!(u1.transmittance(), 0.17783, 1e-5);
    }

    #[test]
    fn dark_probability_from_rate_and_window() {
        let d = DetectorModel::default();
        assert_close!(d.dark_probability(), 1.7e-7, 1e-18);
        assert_close!(d.click_probability(0.0), 1.7e-7, 1e-15);
    }

    #[test]
    fn mode_overlap_limits() {
        assert_eq!(DistinguishabilityState::indistinguishable().mode_overlap(), 1.0);
        assert_eq!(DistinguishabilityState::with_overlap(0.0).mode_overlap(), 0.0);
        let mut d = DistinguishabilityState::indistinguishable();
        d.delta_wavelength_pm = 1.0;
        let z1 = d.mode_overlap();
        d.delta_wavelength_pm = 2.0;
        let z2 = d.mode_overlap();
        assert!(z1 < 1.0 && z2 < z1);
        // Gaussian in Δλ: ln ζ scales with the square
        assert_close!(z2.ln() / z1.ln(), 4.0, 1e-9);
        d.delta_wavelength_pm = -2.0;
        assert_close!(d.mode_overlap(), z2, 1e-15);
    }

    #[test]
    fn timing_overlap_tolerant_at_ns_pulses() {
        let mut d = DistinguishabilityState::indistinguishable();
        d.delta_time_ps = 10.0;
        assert!(d.mode_overlap() > 0.9999);
        d.delta_time_ps = 2000.0;
        assert!(d.mode_overlap() < 0.7);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = ChannelModel::default();
        c.misalignment = 0.6;
        assert!(c.validate("u").is_err());
        c.misalignment = 0.0;
        c.dwdm_loss_db = -0.1;
        assert!(c.validate("u").unwrap_err().to_string().contains("u.dwdm_loss_db"));
        let mut d = DetectorModel::default();
        d.efficiency = 1.2;
        assert!(d.validate("d").is_err());
    }
}
