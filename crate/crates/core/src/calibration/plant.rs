use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::phase::{DitheredReading, PhaseMonitorReading};
use super::{wrap_phase, ControllerState, DriftModel, FeedbackConfig};
use crate::error::Result;
use crate::optics::{sample_hom_counts, DetectorModel, DistinguishabilityState};

/// Simulated hardware seen by the loops of one user pair.
///
/// Public fields are the true physical offsets; the loops only see them
/// through the noisy `read_*` / `measure_*` sensors.
#[derive(Debug, Clone)]
pub struct Plant {
    /// Second laser's wavelength minus the first's, both at nominal
    /// temperature.
    pub wavelength_offset_pm: f64,
    pub timing_offset_ps: f64,
    /// Fiber-induced rotation of each arm, in EPC wave-plate angles.
    pub polarization_disturbance_rad: [[f64; 2]; 2],
    /// Relative AMZI phase before the phase shifter.
    pub amzi_phase_rad: f64,
    pub polarization_actuator_enabled: bool,
    pub detectors: [DetectorModel; 2],
    pub intensity_ratio: f64,
    wavelength_rate_pm_per_h: [f64; 2],
    timing_rate_ps_per_h: f64,
    slope_pm_per_c: f64,
    nominal_temperature_c: f64,
    power_meter_noise: f64,
    timing_jitter_ps: f64,
    rng: ChaCha8Rng,
}

impl Plant {
    /// A plant with every offset zero.
    pub fn aligned(detectors: [DetectorModel; 2], config: &FeedbackConfig, seed: u64) -> Self {
        Plant {
            wavelength_offset_pm: 0.0,
            timing_offset_ps: 0.0,
            polarization_disturbance_rad: [[0.0; 2]; 2],
            amzi_phase_rad: 0.0,
            polarization_actuator_enabled: true,
            detectors,
            intensity_ratio: 1.0,
            wavelength_rate_pm_per_h: [0.0; 2],
            timing_rate_ps_per_h: 0.0,
            slope_pm_per_c: config.wavelength_slope_pm_per_c,
            nominal_temperature_c: config.nominal_temperature_c,
            power_meter_noise: config.power_meter_noise,
            timing_jitter_ps: config.timing_jitter_ps,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Turn off sensor noise, for checks against exact values.
    pub fn noiseless(mut self) -> Self {
        self.power_meter_noise = 0.0;
        self.timing_jitter_ps = 0.0;
        self
    }

    /// Wavelength difference at the beam splitter for a given temperature
    /// of the tuned (first) laser.
    pub fn delta_wavelength_at(&self, temperature_c: f64, ctrl: &ControllerState) -> f64 {
        let shift = |t: f64| self.slope_pm_per_c * (t - self.nominal_temperature_c);
        shift(temperature_c) - shift(ctrl.temperature_c[1]) - self.wavelength_offset_pm
    }

    /// Fraction of one arm's light passing the relay's polarizer.
    pub fn arm_overlap(&self, arm: usize, ctrl: &ControllerState) -> f64 {
        let d = self.polarization_disturbance_rad[arm];
        let c = ctrl.epc_rad[arm];
        (d[0] - c[0]).cos().powi(2) * (d[1] - c[1]).cos().powi(2)
    }

    pub fn residual_phase(&self, ctrl: &ControllerState) -> f64 {
        wrap_phase(self.amzi_phase_rad - ctrl.phase_command_rad)
    }

    /// True residual distinguishability under the current commands.
    pub fn residual(&self, ctrl: &ControllerState) -> DistinguishabilityState {
        DistinguishabilityState {
            delta_wavelength_pm: self.delta_wavelength_at(ctrl.temperature_c[0], ctrl),
            delta_time_ps: self.timing_offset_ps - ctrl.delay_command_ps,
            polarization_overlap: self.arm_overlap(0, ctrl) * self.arm_overlap(1, ctrl),
            intensity_ratio: self.intensity_ratio,
            relative_phase_rad: self.residual_phase(ctrl),
        }
    }

    fn meter(&mut self, p: f64) -> f64 {
        if self.power_meter_noise == 0.0 {
            return p;
        }
        let g: f64 = self.rng.sample(StandardNormal);
        (p * (1.0 + self.power_meter_noise * g)).max(0.0)
    }

    /// Power-monitor ports with an extra `offset_rad` added to the phase
    /// command.
    pub fn read_phase_monitor(&mut self, ctrl: &ControllerState, offset_rad: f64) -> PhaseMonitorReading {
        let phi = self.residual_phase(ctrl) - offset_rad;
        let p1 = self.meter(0.5 * (1.0 + phi.cos()));
        let p2 = self.meter(0.5 * (1.0 - phi.cos()));
        PhaseMonitorReading {
            power_port_1: p1.max(f64::MIN_POSITIVE),
            power_port_2: p2,
        }
    }

    pub fn read_dithered(&mut self, ctrl: &ControllerState, dither_rad: f64) -> DitheredReading {
        DitheredReading {
            center: self.read_phase_monitor(ctrl, 0.0),
            plus: self.read_phase_monitor(ctrl, dither_rad),
            minus: self.read_phase_monitor(ctrl, -dither_rad),
        }
    }

    /// Fraction of `arm`'s light in the PBS reflection port.
    pub fn read_reflected_power(&mut self, arm: usize, ctrl: &ControllerState) -> f64 {
        let r = (1.0 - self.arm_overlap(arm, ctrl)).max(0.0);
        self.meter(r)
    }

    /// Residual arrival-time offset as seen by the sync detector.
    pub fn read_timing_offset(&mut self, ctrl: &ControllerState) -> f64 {
        let jitter = if self.timing_jitter_ps > 0.0 {
            self.timing_jitter_ps * self.rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        self.timing_offset_ps - ctrl.delay_command_ps + jitter
    }

    /// HOM dip value with the tuned laser at `temperature_c`.
    pub fn measure_hom(&mut self, ctrl: &ControllerState, temperature_c: f64, intensity: f64, pulses: u64) -> Result<f64> {
        let mut d = self.residual(ctrl);
        d.delta_wavelength_pm = self.delta_wavelength_at(temperature_c, ctrl);
        let counts = sample_hom_counts(&d, intensity, &self.detectors, pulses, &mut self.rng)?;
        counts.coincidence_value()
    }

    /// Perturbation of a freshly switched connection. Also redraws the
    /// directions of the slow linear drifts.
    pub fn apply_switch_kick(&mut self, drift: &DriftModel) {
        let k = drift.switch_kick;
        let gauss = |s: f64, rng: &mut ChaCha8Rng| if s > 0.0 { Normal::new(0.0, s).unwrap().sample(rng) } else { 0.0 };
        self.timing_offset_ps += gauss(k.timing_sigma_ps, &mut self.rng);
        for arm in 0..2 {
            for j in 0..2 {
                self.polarization_disturbance_rad[arm][j] += gauss(k.polarization_sigma_rad, &mut self.rng);
            }
        }
        self.wavelength_offset_pm += gauss(k.wavelength_sigma_pm, &mut self.rng) - gauss(k.wavelength_sigma_pm, &mut self.rng);
        self.amzi_phase_rad = self.rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let sign = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
        self.wavelength_rate_pm_per_h = [
            sign(&mut self.rng) * drift.wavelength_drift,
            sign(&mut self.rng) * drift.wavelength_drift,
        ];
        self.timing_rate_ps_per_h = sign(&mut self.rng) * drift.timing_drift;
    }

    /// Advance the free-running drifts by `dt_s` seconds.
    pub fn evolve(&mut self, drift: &DriftModel, dt_s: f64) {
        let hours = dt_s / 3600.0;
        if drift.phase_drift > 0.0 {
            let g: f64 = self.rng.sample(StandardNormal);
            self.amzi_phase_rad = wrap_phase(self.amzi_phase_rad + drift.phase_drift * dt_s.sqrt() * g);
        }
        // lasers drift independently; the second minus the first
        self.wavelength_offset_pm += (self.wavelength_rate_pm_per_h[1] - self.wavelength_rate_pm_per_h[0]) * hours;
        self.timing_offset_ps += self.timing_rate_ps_per_h * hours;
        if drift.polarization_decay > 0.0 {
            // four angles share the overlap loss: 1 - overlap ≈ Σ δ²
            let s = (drift.polarization_decay * hours / 4.0).sqrt();
            for arm in 0..2 {
                for j in 0..2 {
                    let g: f64 = self.rng.sample(StandardNormal);
                    self.polarization_disturbance_rad[arm][j] += s * g;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::field_detectors;

    fn setup() -> (Plant, ControllerState, FeedbackConfig) {
        let c = FeedbackConfig::default();
        (Plant::aligned(field_detectors(), &c, 1), ControllerState::new(&c), c)
    }

    #[test]
    fn aligned_plant_is_indistinguishable() {
        let (p, s, _) = setup();
        let d = p.residual(&s);
        assert_eq!(d.mode_overlap(), 1.0);
        assert_eq!(d.relative_phase_rad, 0.0);
    }

    #[test]
    fn temperature_moves_wavelength_at_slope() {
        let (mut p, mut s, c) = setup();
        p.wavelength_offset_pm = 8.0;
        assert_close!(p.delta_wavelength_at(25.0, &s), -8.0, 1e-12);
        s.set_temperature(25.1, &c);
        assert_close!(p.residual(&s).delta_wavelength_pm, 0.0, 1e-9);
    }

    #[test]
    fn monitor_ports_follow_cosine() {
        let (p, s, _) = setup();
        let mut p = p.noiseless();
        p.amzi_phase_rad = 0.4;
        let r = p.read_phase_monitor(&s, 0.0);
        assert_close!(r.power_port_2 / (r.power_port_1 + r.power_port_2), (0.2f64).sin().powi(2), 1e-12);
        // commanding the offset away darkens port 2 again
        let r = p.read_phase_monitor(&s, 0.4);
        assert!(r.power_port_2 < 1e-15);
        let _ = s;
    }

    #[test]
    fn kick_then_evolve_stays_finite() {
        let (mut p, s, _) = setup();
        let d = DriftModel::default();
        p.apply_switch_kick(&d);
        for _ in 0..100 {
            p.evolve(&d, 60.0);
        }
        let r = p.residual(&s);
        r.validate().unwrap();
        assert!(r.polarization_overlap < 1.0);
    }

    #[test]
    fn frozen_drift_changes_nothing_but_phase_draw() {
        let (mut p, s, _) = setup();
        let d = DriftModel::frozen();
        p.apply_switch_kick(&d);
        p.evolve(&d, 3600.0);
        let r = p.residual(&s);
        assert_eq!(r.delta_time_ps, 0.0);
        assert_eq!(r.delta_wavelength_pm, 0.0);
        assert_eq!(r.polarization_overlap, 1.0);
    }
}
