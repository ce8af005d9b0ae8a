use serde::{Deserialize, Serialize};

use super::{ControllerState, PolarizationConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum Trial {
    None,
    Plus,
    Minus,
}

/// Coordinate-descent state for one arm's two EPC angles.
///
/// Each reading scores the angles currently applied; the search then keeps
/// or reverts its last trial move and applies the next one. The step halves
/// after a full round of failed moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationSearch {
    pub step_rad: f64,
    coordinate: usize,
    trial: Trial,
    best: Option<f64>,
    failures: u8,
    pub converged: bool,
}

impl PolarizationSearch {
    pub fn new(config: &PolarizationConfig) -> Self {
        PolarizationSearch {
            step_rad: config.initial_step_rad,
            coordinate: 0,
            trial: Trial::None,
            best: None,
            failures: 0,
            converged: false,
        }
    }

    /// Lowest reflected power seen at the angles the search would keep.
    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Whether the applied angles are an untested trial move.
    pub fn trial_pending(&self) -> bool {
        self.trial != Trial::None
    }

    fn start_trial(&mut self, angles: &mut [f64; 2]) {
        angles[self.coordinate] += self.step_rad;
        self.trial = Trial::Plus;
    }

    fn next_coordinate(&mut self) {
        self.coordinate = (self.coordinate + 1) % 2;
    }

    /// Undo a pending trial so the applied angles are the best known.
    pub fn settle(&mut self, angles: &mut [f64; 2]) {
        match self.trial {
            Trial::Plus => angles[self.coordinate] -= self.step_rad,
            Trial::Minus => angles[self.coordinate] += self.step_rad,
            Trial::None => {}
        }
        self.trial = Trial::None;
    }

    fn feed(&mut self, angles: &mut [f64; 2], reflected: f64, config: &PolarizationConfig) {
        if reflected <= 0.0 {
            self.trial = Trial::None;
            self.best = Some(0.0);
            self.converged = true;
            return;
        }
        let improved = self.best.is_none_or(|b| reflected < b);
        match self.trial {
            Trial::None => {
                self.best = Some(reflected);
                self.start_trial(angles);
            }
            Trial::Plus | Trial::Minus if improved => {
                self.best = Some(reflected);
                self.failures = 0;
                self.next_coordinate();
                self.start_trial(angles);
            }
            Trial::Plus => {
                angles[self.coordinate] -= 2.0 * self.step_rad;
                self.trial = Trial::Minus;
            }
            Trial::Minus => {
                angles[self.coordinate] += self.step_rad;
                self.trial = Trial::None;
                self.failures += 1;
                self.next_coordinate();
                if self.failures >= 2 {
                    self.failures = 0;
                    self.step_rad = (0.5 * self.step_rad).max(config.min_step_rad);
                }
                // the next reading re-measures the kept angles, so a stale
                // or lucky best cannot block the search under drift
                self.best = None;
            }
        }
        self.converged = self.step_rad <= config.min_step_rad && self.best.is_some_and(|b| b <= config.converged_reflection);
    }
}

/// Feed one reflected-power reading of `arm` to its search and apply the
/// next EPC command.
pub fn polarization_feedback(reflected_power: f64, state: &mut ControllerState, arm: usize, config: &PolarizationConfig) -> Result<()> {
    if !(reflected_power >= 0.0 && reflected_power.is_finite()) {
        return Err(Error::domain("reflected_power", reflected_power, "must be finite and >= 0"));
    }
    let mut search = state.polarization_search[arm];
    search.feed(&mut state.epc_rad[arm], reflected_power, config);
    state.polarization_search[arm] = search;
    state.flags.polarization_converged[arm] = search.converged;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{FeedbackConfig, Plant};
    use crate::optics::field_detectors;

    fn setup(disturbance: [f64; 2], seed: u64) -> (Plant, ControllerState, FeedbackConfig) {
        let c = FeedbackConfig::default();
        let mut p = Plant::aligned(field_detectors(), &c, seed);
        p.polarization_disturbance_rad[0] = disturbance;
        (p, ControllerState::new(&c), c)
    }

    #[test]
    fn zero_reflection_no_change() {
        let (_, mut s, c) = setup([0.0; 2], 0);
        polarization_feedback(0.0, &mut s, 0, &c.polarization).unwrap();
        assert_eq!(s.epc_rad[0], [0.0, 0.0]);
        assert!(s.flags.polarization_converged[0]);
        assert!(polarization_feedback(-0.1, &mut s, 0, &c.polarization).is_err());
    }

    #[test]
    fn recovers_from_overlap_point_eight_within_200_steps() {
        // cos⁴(0.3304) = 0.8
        for seed in 0..20 {
            let (mut p, mut s, c) = setup([0.3304, -0.3304], seed);
            assert_close!(p.arm_overlap(0, &s), 0.8, 1e-3);
            for _ in 0..200 {
                let r = p.read_reflected_power(0, &s);
                polarization_feedback(r, &mut s, 0, &c.polarization).unwrap();
            }
            let mut search = s.polarization_search[0];
            search.settle(&mut s.epc_rad[0]);
            assert!(p.arm_overlap(0, &s) >= 0.99, "seed {seed}: {}", p.arm_overlap(0, &s));
            assert!(s.flags.polarization_converged[0], "seed {seed}");
        }
    }

    #[test]
    fn fast_oscillating_drift_is_not_converged() {
        let (mut p, mut s, c) = setup([0.0; 2], 4);
        for k in 0..400 {
            // drift with a 6-reading period, faster than one search round
            let t = k as f64 * std::f64::consts::TAU / 6.0;
            p.polarization_disturbance_rad[0] = [0.4 * t.sin(), 0.4 * t.cos()];
            let r = p.read_reflected_power(0, &s);
            polarization_feedback(r, &mut s, 0, &c.polarization).unwrap();
            if k > 200 {
                assert!(!s.flags.polarization_converged[0], "step {k}");
            }
        }
    }
}
