//! Feedback loops that keep two users' pulses indistinguishable at the
//! relay: timing (delay chip), polarization (EPC + PBS reflection),
//! wavelength (laser temperature via the HOM dip) and phase (AMZI power
//! monitor).
//!
//! The loops act on a [`Plant`], a simulated hardware state that drifts
//! slowly during a session and jumps when the optical switch reconnects.

mod drift;
mod phase;
mod plant;
mod polarization;
mod sequence;
mod timing;
mod trace;
mod wavelength;

pub use drift::{DriftModel, SwitchKick};
pub use phase::{lock_phase, phase_error_estimate, phase_feedback_step, DitheredReading, PhaseLockOutcome, PhaseMonitorReading};
pub use plant::Plant;
pub use polarization::{polarization_feedback, PolarizationSearch};
pub use sequence::{full_recalibration, track_session, CalibrationReport, SessionTrace, TrackSample};
pub use timing::timing_sync;
pub use trace::{read_trace, write_trace, LoopName, TraceRecord, TRACE_HEADER};
pub use wavelength::{scan_dip, wavelength_calibrate, DipFit, ScanPoint, WavelengthScan};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseLoopConfig {
    pub gain: f64,
    pub dither_rad: f64,
    /// Lock is declared once `|φ|` is below this.
    pub tolerance_rad: f64,
    pub max_steps: usize,
    /// The phase shifter covers `±actuator_range_rad`; commands beyond it
    /// wrap by 2π.
    pub actuator_range_rad: f64,
}

impl Default for PhaseLoopConfig {
    fn default() -> Self {
        PhaseLoopConfig {
            gain: 0.5,
            dither_rad: 0.05,
            tolerance_rad: 0.01,
            max_steps: 500,
            actuator_range_rad: std::f64::consts::TAU,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Coarse grid spans `center ± half_range_c`.
    pub half_range_c: f64,
    pub coarse_step_c: f64,
    pub fine_step_c: f64,
    /// Fine grid spans the coarse minimum `± fine_half_range_c`.
    pub fine_half_range_c: f64,
    /// A scan whose lowest value exceeds this has no dip.
    pub dip_threshold: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            half_range_c: 2.0,
            coarse_step_c: 0.01,
            fine_step_c: 0.005,
            fine_half_range_c: 0.02,
            dip_threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    pub step_ps: f64,
    /// The delay chip reaches `±span_ps`.
    pub span_ps: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            step_ps: 10.0,
            span_ps: 10_000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolarizationConfig {
    pub initial_step_rad: f64,
    pub min_step_rad: f64,
    /// Reflected fraction at or below which an arm counts as aligned.
    pub converged_reflection: f64,
    /// Reflected fraction an arm must reach before the HOM scan may run.
    pub gate_reflection: f64,
    pub max_steps: usize,
}

impl Default for PolarizationConfig {
    fn default() -> Self {
        PolarizationConfig {
            initial_step_rad: 0.15,
            min_step_rad: 0.005,
            converged_reflection: 0.005,
            gate_reflection: 0.01,
            max_steps: 200,
        }
    }
}

/// Seconds between loop iterations during key distribution. `None` leaves
/// the loop idle until the next switch event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Cadence {
    pub phase_s: Option<f64>,
    pub polarization_s: Option<f64>,
    pub timing_s: Option<f64>,
}

impl Default for Cadence {
    fn default() -> Self {
        Cadence {
            phase_s: Some(1.0),
            polarization_s: Some(1.0),
            timing_s: Some(10.0),
        }
    }
}

/// Everything the four loops and their sensors need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackConfig {
    pub phase: PhaseLoopConfig,
    pub scan: ScanConfig,
    pub timing: TimingConfig,
    pub polarization: PolarizationConfig,
    pub cadence: Cadence,
    /// Mean photon number per input of the unmodulated HOM probe pulses.
    pub hom_intensity: f64,
    /// Pulses per HOM point during a scan.
    pub hom_pulses: u64,
    /// Pulses for the "is the dip still there" check before a scan.
    pub hom_check_pulses: u64,
    /// The scan is skipped when the check reads no more than the ideal
    /// floor plus this margin.
    pub hom_skip_margin: f64,
    /// Relative standard deviation of each power-meter reading.
    pub power_meter_noise: f64,
    pub timing_jitter_ps: f64,
    pub wavelength_slope_pm_per_c: f64,
    pub nominal_temperature_c: f64,
    /// Temperature actuators reach `nominal ± temperature_range_c`.
    pub temperature_range_c: f64,
    pub temperature_quantum_c: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig {
            phase: PhaseLoopConfig::default(),
            scan: ScanConfig::default(),
            timing: TimingConfig::default(),
            polarization: PolarizationConfig::default(),
            cadence: Cadence::default(),
            hom_intensity: 0.1,
            hom_pulses: 1_000_000,
            hom_check_pulses: 4_000_000,
            hom_skip_margin: 0.05,
            power_meter_noise: 0.01,
            timing_jitter_ps: 2.0,
            wavelength_slope_pm_per_c: 80.0,
            nominal_temperature_c: 25.0,
            temperature_range_c: 5.0,
            temperature_quantum_c: 0.001,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("feedback.{field}"), format!("must be > 0, got {v}")))
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<()> {
        positive("phase.gain", self.phase.gain)?;
        if self.phase.gain >= 2.0 {
            return Err(Error::config("feedback.phase.gain", "must be < 2 for a stable loop"));
        }
        positive("phase.dither_rad", self.phase.dither_rad)?;
        positive("phase.tolerance_rad", self.phase.tolerance_rad)?;
        if self.phase.actuator_range_rad < std::f64::consts::PI {
            return Err(Error::config("feedback.phase.actuator_range_rad", "must cover at least ±π"));
        }
        positive("scan.half_range_c", self.scan.half_range_c)?;
        positive("scan.coarse_step_c", self.scan.coarse_step_c)?;
        positive("scan.fine_step_c", self.scan.fine_step_c)?;
        positive("scan.fine_half_range_c", self.scan.fine_half_range_c)?;
        if self.scan.fine_half_range_c < self.scan.fine_step_c {
            return Err(Error::config("feedback.scan.fine_half_range_c", "must be at least one fine step"));
        }
        positive("timing.step_ps", self.timing.step_ps)?;
        positive("timing.span_ps", self.timing.span_ps)?;
        positive("polarization.initial_step_rad", self.polarization.initial_step_rad)?;
        positive("polarization.min_step_rad", self.polarization.min_step_rad)?;
        for (name, c) in [
            ("phase_s", self.cadence.phase_s),
            ("polarization_s", self.cadence.polarization_s),
            ("timing_s", self.cadence.timing_s),
        ] {
            if let Some(s) = c {
                positive(&format!("cadence.{name}"), s)?;
            }
        }
        positive("hom_intensity", self.hom_intensity)?;
        if self.hom_pulses == 0 || self.hom_check_pulses == 0 {
            return Err(Error::config("feedback.hom_pulses", "must be > 0"));
        }
        if !(self.power_meter_noise >= 0.0 && self.power_meter_noise < 0.5) {
            return Err(Error::config("feedback.power_meter_noise", "must lie in [0, 0.5)"));
        }
        if !(self.timing_jitter_ps >= 0.0) {
            return Err(Error::config("feedback.timing_jitter_ps", "must be >= 0"));
        }
        positive("wavelength_slope_pm_per_c", self.wavelength_slope_pm_per_c)?;
        positive("temperature_range_c", self.temperature_range_c)?;
        positive("temperature_quantum_c", self.temperature_quantum_c)?;
        if !self.nominal_temperature_c.is_finite() {
            return Err(Error::config("feedback.nominal_temperature_c", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceFlags {
    pub timing_synced: bool,
    pub polarization_converged: [bool; 2],
    pub wavelength_calibrated: bool,
    pub phase_locked: bool,
    /// Set once a phase command had to wrap by 2π.
    pub phase_saturated: bool,
}

/// Commands currently applied to the actuators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub phase_command_rad: f64,
    /// Laser temperatures; only the first user's laser is tuned.
    pub temperature_c: [f64; 2],
    pub delay_command_ps: f64,
    /// Two wave-plate angles of each arm's EPC.
    pub epc_rad: [[f64; 2]; 2],
    pub polarization_search: [PolarizationSearch; 2],
    pub flags: ConvergenceFlags,
}

impl ControllerState {
    pub fn new(config: &FeedbackConfig) -> Self {
        ControllerState {
            phase_command_rad: 0.0,
            temperature_c: [config.nominal_temperature_c; 2],
            delay_command_ps: 0.0,
            epc_rad: [[0.0; 2]; 2],
            polarization_search: [PolarizationSearch::new(&config.polarization); 2],
            flags: ConvergenceFlags::default(),
        }
    }

    /// Command the tuned laser's temperature, rounded to the actuator
    /// quantum and clamped to its range.
    pub fn set_temperature(&mut self, t: f64, config: &FeedbackConfig) {
        let lo = config.nominal_temperature_c - config.temperature_range_c;
        let hi = config.nominal_temperature_c + config.temperature_range_c;
        let q = config.temperature_quantum_c;
        self.temperature_c[0] = ((t.clamp(lo, hi) / q).round() * q).clamp(lo, hi);
    }

    pub fn validate(&self, config: &FeedbackConfig) -> Result<()> {
        let lo = config.nominal_temperature_c - config.temperature_range_c - 1e-9;
        let hi = config.nominal_temperature_c + config.temperature_range_c + 1e-9;
        for t in self.temperature_c {
            if !(lo..=hi).contains(&t) {
                return Err(Error::config("controller.temperature_c", format!("{t} outside actuator range")));
            }
        }
        let all = [self.phase_command_rad, self.delay_command_ps]
            .into_iter()
            .chain(self.epc_rad.iter().flatten().copied());
        for v in all {
            if !v.is_finite() {
                return Err(Error::config("controller", "commands must be finite"));
            }
        }
        Ok(())
    }
}

/// Wrap an angle into `(-π, π]`.
pub(crate) fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = FeedbackConfig::default();
        c.validate().unwrap();
        ControllerState::new(&c).validate(&c).unwrap();
    }

    #[test]
    fn bad_config_names_field() {
        let mut c = FeedbackConfig::default();
        c.scan.coarse_step_c = 0.0;
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("feedback.scan.coarse_step_c"), "{e}");
    }

    #[test]
    fn temperature_is_quantized_and_clamped() {
        let c = FeedbackConfig::default();
        let mut s = ControllerState::new(&c);
        s.set_temperature(25.12345, &c);
        assert_close!(s.temperature_c[0], 25.123, 1e-9);
        s.set_temperature(100.0, &c);
        assert_close!(s.temperature_c[0], 30.0, 1e-9);
        s.validate(&c).unwrap();
    }

    #[test]
    fn wrap_phase_range() {
        use std::f64::consts::PI;
        assert_close!(wrap_phase(3.0 * PI / 2.0), -PI / 2.0, 1e-12);
        assert_close!(wrap_phase(-PI / 4.0), -PI / 4.0, 1e-12);
        assert_close!(wrap_phase(PI), PI, 1e-12);
    }
}
