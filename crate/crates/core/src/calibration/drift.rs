use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Random perturbation applied when the optical switch connects a new pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchKick {
    pub timing_sigma_ps: f64,
    /// Per wave-plate angle of each arm's fiber rotation.
    pub polarization_sigma_rad: f64,
    /// Per laser.
    pub wavelength_sigma_pm: f64,
}

impl Default for SwitchKick {
    fn default() -> Self {
        SwitchKick {
            timing_sigma_ps: 200.0,
            polarization_sigma_rad: 0.3,
            wavelength_sigma_pm: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftModel {
    /// Random-walk scale of the relative AMZI phase, rad/√s.
    pub phase_drift: f64,
    /// Linear drift per laser, pm/hour, with a sign drawn at each switch.
    pub wavelength_drift: f64,
    /// Linear arrival-time drift, ps/hour.
    pub timing_drift: f64,
    /// Expected polarization overlap lost per hour without feedback.
    pub polarization_decay: f64,
    pub switch_kick: SwitchKick,
}

impl Default for DriftModel {
    fn default() -> Self {
        DriftModel {
            phase_drift: 5e-4,
            wavelength_drift: 0.05,
            timing_drift: 5.0,
            polarization_decay: 0.002,
            switch_kick: SwitchKick::default(),
        }
    }
}

impl DriftModel {
    /// Nothing moves, not even on a switch.
    pub fn frozen() -> Self {
        DriftModel {
            phase_drift: 0.0,
            wavelength_drift: 0.0,
            timing_drift: 0.0,
            polarization_decay: 0.0,
            switch_kick: SwitchKick {
                timing_sigma_ps: 0.0,
                polarization_sigma_rad: 0.0,
                wavelength_sigma_pm: 0.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("drift.phase_drift", self.phase_drift),
            ("drift.wavelength_drift", self.wavelength_drift),
            ("drift.timing_drift", self.timing_drift),
            ("drift.polarization_decay", self.polarization_decay),
            ("drift.switch_kick.timing_sigma_ps", self.switch_kick.timing_sigma_ps),
            ("drift.switch_kick.polarization_sigma_rad", self.switch_kick.polarization_sigma_rad),
            ("drift.switch_kick.wavelength_sigma_pm", self.switch_kick.wavelength_sigma_pm),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}
