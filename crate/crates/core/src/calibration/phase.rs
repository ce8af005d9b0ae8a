use serde::{Deserialize, Serialize};

use super::{ControllerState, PhaseLoopConfig, Plant};
use crate::error::{Error, Result};

/// Two power-meter readings behind the AMZI monitor. Port 2 is dark at lock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMonitorReading {
    pub power_port_1: f64,
    pub power_port_2: f64,
}

impl PhaseMonitorReading {
    pub fn new(power_port_1: f64, power_port_2: f64) -> Result<Self> {
        let r = PhaseMonitorReading {
            power_port_1,
            power_port_2,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.power_port_1, self.power_port_2);
        if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::domain("power_port", a.min(b), "powers must be finite and >= 0"));
        }
        if a + b == 0.0 {
            return Err(Error::domain("power_port", 0.0, "both ports dark"));
        }
        Ok(())
    }

    /// `P₂ / (P₁ + P₂)`, which is `sin²(φ/2)` for a clean interferometer.
    pub fn dark_fraction(&self) -> f64 {
        self.power_port_2 / (self.power_port_1 + self.power_port_2)
    }
}

/// Monitor readings at the current command and at `±dither`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DitheredReading {
    pub center: PhaseMonitorReading,
    pub plus: PhaseMonitorReading,
    pub minus: PhaseMonitorReading,
}

/// Residual phase recovered from a dithered reading.
///
/// The centre gives `cos φ`; the dither difference gives `sin φ`, which
/// fixes the sign that the centre alone cannot. Near `φ = π` the sine
/// vanishes but the cosine still points the way out.
pub fn phase_error_estimate(reading: &DitheredReading, dither_rad: f64) -> Result<f64> {
    reading.center.validate()?;
    reading.plus.validate()?;
    reading.minus.validate()?;
    let cos = 1.0 - 2.0 * reading.center.dark_fraction();
    let sin = (reading.minus.dark_fraction() - reading.plus.dark_fraction()) / dither_rad.sin();
    Ok(sin.atan2(cos))
}

/// One proportional step of the phase loop. Returns the correction applied.
pub fn phase_feedback_step(reading: &DitheredReading, state: &mut ControllerState, config: &PhaseLoopConfig) -> Result<f64> {
    let phi = phase_error_estimate(reading, config.dither_rad)?;
    let correction = config.gain * phi;
    let mut cmd = state.phase_command_rad + correction;
    if cmd.abs() > config.actuator_range_rad {
        cmd -= cmd.signum() * std::f64::consts::TAU;
        state.flags.phase_saturated = true;
    }
    state.phase_command_rad = cmd;
    state.flags.phase_locked = reading.center.dark_fraction() < lock_fraction(config);
    Ok(correction)
}

/// Dark fraction at the tolerance edge, `sin²(tol/2)`.
pub(crate) fn lock_fraction(config: &PhaseLoopConfig) -> f64 {
    (0.5 * config.tolerance_rad).sin().powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseLockOutcome {
    pub steps: usize,
    pub locked: bool,
}

/// Run the phase loop against `plant` until the monitor reads locked or
/// `max_steps` corrections have been applied.
///
/// The stopping test asks for half the tolerance so that meter noise on
/// the last reading cannot leave the true phase outside it.
pub fn lock_phase(plant: &mut Plant, state: &mut ControllerState, config: &PhaseLoopConfig) -> Result<PhaseLockOutcome> {
    lock_phase_observed(plant, state, config, |_, _| {})
}

/// [`lock_phase`] with a callback on every reading.
pub(crate) fn lock_phase_observed(
    plant: &mut Plant,
    state: &mut ControllerState,
    config: &PhaseLoopConfig,
    mut observe: impl FnMut(&ControllerState, &DitheredReading),
) -> Result<PhaseLockOutcome> {
    let stop = (0.25 * config.tolerance_rad).sin().powi(2);
    for steps in 0..=config.max_steps {
        let reading = plant.read_dithered(state, config.dither_rad);
        observe(state, &reading);
        if reading.center.dark_fraction() < stop {
            state.flags.phase_locked = true;
            return Ok(PhaseLockOutcome { steps, locked: true });
        }
        if steps == config.max_steps {
            break;
        }
        phase_feedback_step(&reading, state, config)?;
    }
    state.flags.phase_locked = false;
    Ok(PhaseLockOutcome {
        steps: config.max_steps,
        locked: false,
    })
}
