use super::{ControllerState, TimingConfig};
use crate::error::{CalibrationError, Error, Result};

/// Move the delay chip by the whole number of steps nearest to the measured
/// residual offset. Returns the applied correction in ps.
pub fn timing_sync(measured_offset_ps: f64, state: &mut ControllerState, config: &TimingConfig) -> Result<f64> {
    if !measured_offset_ps.is_finite() {
        return Err(Error::domain("measured_offset_ps", measured_offset_ps, "must be finite"));
    }
    let correction = (measured_offset_ps / config.step_ps).round() * config.step_ps;
    let target = state.delay_command_ps + correction;
    if target.abs() > config.span_ps {
        state.flags.timing_synced = false;
        return Err(CalibrationError::TimingRange {
            offset_ps: target,
            span_ps: config.span_ps,
        }
        .into());
    }
    state.delay_command_ps = target;
    state.flags.timing_synced = (measured_offset_ps - correction).abs() < config.step_ps;
    Ok(correction)
}
