use serde::{Deserialize, Serialize};

use super::phase::{lock_fraction, lock_phase_observed};
use super::{
    phase_feedback_step, polarization_feedback, scan_dip, timing_sync, ControllerState, ConvergenceFlags, DipFit, DriftModel,
    FeedbackConfig, LoopName, Plant, PolarizationSearch, TraceRecord,
};
use crate::error::{CalibrationError, Error, Result};
use crate::optics::{expected_hom_coincidence_value, DistinguishabilityState};

// Time charged per sensor reading during a recalibration.
const TIMING_READ_S: f64 = 0.1;
const POLARIZATION_READ_S: f64 = 0.05;
const HOM_POINT_S: f64 = 0.2;
const PHASE_READ_S: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// True distinguishability left after the sequence.
    pub residual: DistinguishabilityState,
    pub records: Vec<TraceRecord>,
    /// Actuator moves; zero means every loop was already in tolerance.
    pub commands_issued: usize,
    pub attempts: u32,
    /// Dead time spent measuring.
    pub elapsed_s: f64,
    pub dip: Option<DipFit>,
    pub flags: ConvergenceFlags,
}

struct Recorder {
    t: f64,
    records: Vec<TraceRecord>,
    commands: usize,
    dip: Option<DipFit>,
}

impl Recorder {
    fn log(&mut self, loop_name: LoopName, command: f64, residual: f64, cost_s: f64) {
        self.t += cost_s;
        self.records.push(TraceRecord {
            t_seconds: self.t,
            loop_name,
            command,
            residual,
        });
    }
}

fn retryable(e: &Error) -> bool {
    matches!(
        e,
        Error::Calibration(CalibrationError::DipNotFound { .. } | CalibrationError::PolarizationNotConverged { .. })
    )
}

/// Bring a freshly switched pair back to indistinguishability: timing,
/// then polarization, then wavelength, then phase. Loops already in
/// tolerance only measure. A missing dip or an unconverged polarization
/// loop restarts the sequence once before the error is returned.
pub fn full_recalibration(plant: &mut Plant, ctrl: &mut ControllerState, config: &FeedbackConfig) -> Result<CalibrationReport> {
    config.validate()?;
    let mut rec = Recorder {
        t: 0.0,
        records: Vec::new(),
        commands: 0,
        dip: None,
    };
    let mut attempts = 0;
    loop {
        attempts += 1;
        match run_sequence(plant, ctrl, config, &mut rec) {
            Ok(()) => break,
            Err(e) if retryable(&e) && attempts < 2 => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(CalibrationReport {
        residual: plant.residual(ctrl),
        records: rec.records,
        commands_issued: rec.commands,
        attempts,
        elapsed_s: rec.t,
        dip: rec.dip,
        flags: ctrl.flags,
    })
}

fn run_sequence(plant: &mut Plant, ctrl: &mut ControllerState, config: &FeedbackConfig, rec: &mut Recorder) -> Result<()> {
    // timing
    let step = config.timing.step_ps;
    let mut m = plant.read_timing_offset(ctrl);
    rec.log(LoopName::Timing, ctrl.delay_command_ps, m, TIMING_READ_S);
    if m.abs() >= step {
        timing_sync(m, ctrl, &config.timing)?;
        rec.commands += 1;
        m = plant.read_timing_offset(ctrl);
        rec.log(LoopName::Timing, ctrl.delay_command_ps, m, TIMING_READ_S);
    }
    ctrl.flags.timing_synced = m.abs() < step;

    // polarization, one arm at a time
    let pc = &config.polarization;
    for arm in 0..2 {
        let name = LoopName::polarization(arm);
        let mut r = plant.read_reflected_power(arm, ctrl);
        rec.log(name, ctrl.epc_rad[arm][0], r, POLARIZATION_READ_S);
        if !plant.polarization_actuator_enabled {
            ctrl.flags.polarization_converged[arm] = false;
            continue;
        }
        if r <= pc.converged_reflection {
            ctrl.flags.polarization_converged[arm] = true;
            continue;
        }
        ctrl.polarization_search[arm] = PolarizationSearch::new(pc);
        for _ in 0..pc.max_steps {
            polarization_feedback(r, ctrl, arm, pc)?;
            rec.commands += 1;
            r = plant.read_reflected_power(arm, ctrl);
            rec.log(name, ctrl.epc_rad[arm][0], r, POLARIZATION_READ_S);
            let s = ctrl.polarization_search[arm];
            if s.converged && !s.trial_pending() {
                break;
            }
        }
        let mut s = ctrl.polarization_search[arm];
        if s.trial_pending() {
            s.settle(&mut ctrl.epc_rad[arm]);
            ctrl.polarization_search[arm] = s;
            rec.commands += 1;
            r = plant.read_reflected_power(arm, ctrl);
            rec.log(name, ctrl.epc_rad[arm][0], r, POLARIZATION_READ_S);
        }
        if r > pc.gate_reflection {
            return Err(CalibrationError::PolarizationNotConverged { overlap: 1.0 - r }.into());
        }
    }

    // wavelength
    let ideal = DistinguishabilityState {
        intensity_ratio: plant.intensity_ratio,
        ..DistinguishabilityState::indistinguishable()
    };
    let floor = expected_hom_coincidence_value(&ideal, config.hom_intensity, &plant.detectors)?;
    let t0 = ctrl.temperature_c[0];
    let v = plant.measure_hom(ctrl, t0, config.hom_intensity, config.hom_check_pulses)?;
    rec.log(LoopName::Wavelength, t0, v, HOM_POINT_S);
    if v > floor + config.hom_skip_margin {
        let scan = {
            let snapshot = ctrl.clone();
            scan_dip(|t| plant.measure_hom(&snapshot, t, config.hom_intensity, config.hom_pulses), t0, &config.scan)?
        };
        for p in &scan.points {
            rec.log(LoopName::Wavelength, p.temperature_c, p.value, HOM_POINT_S);
        }
        match scan.dip {
            None => {
                ctrl.flags.wavelength_calibrated = false;
                return Err(CalibrationError::DipNotFound {
                    min_value: scan.min_value,
                    threshold: config.scan.dip_threshold,
                }
                .into());
            }
            Some(d) => {
                ctrl.set_temperature(d.temperature_c, config);
                rec.commands += 1;
                rec.dip = Some(d);
            }
        }
    }
    ctrl.flags.wavelength_calibrated = true;

    // phase
    let r = plant.read_dithered(ctrl, config.phase.dither_rad);
    rec.log(LoopName::Phase, ctrl.phase_command_rad, r.center.dark_fraction(), PHASE_READ_S);
    if r.center.dark_fraction() >= lock_fraction(&config.phase) {
        let mut first = true;
        lock_phase_observed(plant, ctrl, &config.phase, |s, r| {
            // the first reading repeats the check above
            if !first {
                rec.commands += 1;
            }
            first = false;
            rec.log(LoopName::Phase, s.phase_command_rad, r.center.dark_fraction(), PHASE_READ_S);
        })?;
    } else {
        ctrl.flags.phase_locked = true;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub t_seconds: f64,
    pub residual: DistinguishabilityState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    /// Loop readings, thinned to one per loop per trace interval.
    pub records: Vec<TraceRecord>,
    /// True residual at every tick.
    pub samples: Vec<TrackSample>,
    pub mean_overlap: f64,
    pub min_overlap: f64,
    pub mean_abs_phase_rad: f64,
    pub max_abs_phase_rad: f64,
}

impl SessionTrace {
    /// The residual in force at time `t`.
    pub fn residual_at(&self, t_seconds: f64) -> Option<DistinguishabilityState> {
        let i = self.samples.partition_point(|s| s.t_seconds <= t_seconds);
        self.samples.get(i.saturating_sub(1)).map(|s| s.residual)
    }
}

/// Let the plant drift for `duration_s` while the phase, polarization and
/// timing loops run at their cadences, on a `tick_s` clock.
///
/// The wavelength loop needs the HOM probe, which interrupts key
/// distribution, so it only runs in [`full_recalibration`].
pub fn track_session(
    plant: &mut Plant,
    ctrl: &mut ControllerState,
    drift: &DriftModel,
    config: &FeedbackConfig,
    duration_s: f64,
    tick_s: f64,
    trace_interval_s: f64,
) -> Result<SessionTrace> {
    config.validate()?;
    drift.validate()?;
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(Error::domain("duration_s", duration_s, "must be finite and >= 0"));
    }
    if !(tick_s > 0.0) {
        return Err(Error::domain("tick_s", tick_s, "must be > 0"));
    }
    let cad = config.cadence;
    let mut due = [cad.phase_s, cad.polarization_s, cad.timing_s].map(|c| c.unwrap_or(f64::INFINITY));
    let mut last_logged = [f64::NEG_INFINITY; 5];
    let mut records = Vec::new();
    let mut log = |t: f64, name: LoopName, command: f64, residual: f64, records: &mut Vec<TraceRecord>| {
        let k = name as usize;
        if t - last_logged[k] >= trace_interval_s {
            last_logged[k] = t;
            records.push(TraceRecord {
                t_seconds: t,
                loop_name: name,
                command,
                residual,
            });
        }
    };
    // settled angles start the in-session search from a fresh baseline
    for arm in 0..2 {
        let mut s = ctrl.polarization_search[arm];
        s.settle(&mut ctrl.epc_rad[arm]);
        s.step_rad = config.polarization.min_step_rad;
        ctrl.polarization_search[arm] = s;
    }

    let ticks = (duration_s / tick_s).round() as usize;
    let mut samples = Vec::with_capacity(ticks);
    let (mut sum_z, mut min_z, mut sum_p, mut max_p) = (0.0, f64::INFINITY, 0.0, 0.0f64);
    for k in 1..=ticks {
        let t = k as f64 * tick_s;
        plant.evolve(drift, tick_s);
        if t + 1e-9 >= due[0] {
            due[0] += cad.phase_s.unwrap_or(f64::INFINITY);
            let r = plant.read_dithered(ctrl, config.phase.dither_rad);
            phase_feedback_step(&r, ctrl, &config.phase)?;
            log(t, LoopName::Phase, ctrl.phase_command_rad, r.center.dark_fraction(), &mut records);
        }
        if t + 1e-9 >= due[1] {
            due[1] += cad.polarization_s.unwrap_or(f64::INFINITY);
            if plant.polarization_actuator_enabled {
                for arm in 0..2 {
                    let r = plant.read_reflected_power(arm, ctrl);
                    polarization_feedback(r, ctrl, arm, &config.polarization)?;
                    log(t, LoopName::polarization(arm), ctrl.epc_rad[arm][0], r, &mut records);
                }
            }
        }
        if t + 1e-9 >= due[2] {
            due[2] += cad.timing_s.unwrap_or(f64::INFINITY);
            let m = plant.read_timing_offset(ctrl);
            if m.abs() >= config.timing.step_ps {
                timing_sync(m, ctrl, &config.timing)?;
            }
            log(t, LoopName::Timing, ctrl.delay_command_ps, m, &mut records);
        }
        let residual = plant.residual(ctrl);
        let z = residual.mode_overlap();
        let p = residual.relative_phase_rad.abs();
        sum_z += z;
        min_z = min_z.min(z);
        sum_p += p;
        max_p = max_p.max(p);
        samples.push(TrackSample { t_seconds: t, residual });
    }
    let n = ticks.max(1) as f64;
    let start = plant.residual(ctrl);
    Ok(SessionTrace {
        records,
        mean_overlap: if ticks == 0 { start.mode_overlap() } else { sum_z / n },
        min_overlap: if ticks == 0 { start.mode_overlap() } else { min_z },
        mean_abs_phase_rad: if ticks == 0 { start.relative_phase_rad.abs() } else { sum_p / n },
        max_abs_phase_rad: if ticks == 0 { start.relative_phase_rad.abs() } else { max_p },
        samples,
    })
}
