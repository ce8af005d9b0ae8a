//! Hong-Ou-Mandel interference of two unmodulated, phase-randomised pulse
//! trains, as used to compare two users' lasers at the relay.
//!
//! The dip is reported as `N_c·N_tot / (N_1·N_2)`: coincidences times pulses
//! sent over the product of the two singles counts. Independent Poissonian
//! inputs give 1; indistinguishable equal-intensity coherent pulses give 1/2
//! in the weak-pulse limit.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DetectorModel, DistinguishabilityState};
use crate::error::{Error, Result};
use crate::rng::{chunk_rng, chunks};

/// Points in the relative-phase quadrature of the expected dip value.
const HOM_PHASE_GRID: usize = 512;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomCounts {
    pub pulses: u64,
    pub singles_d1: u64,
    pub singles_d2: u64,
    pub coincidences: u64,
}

impl HomCounts {
    pub fn coincidence_value(&self) -> Result<f64> {
        let denom = self.singles_d1 as f64 * self.singles_d2 as f64;
        if denom == 0.0 {
            return Err(Error::DegenerateStatistics(
                "HOM singles product N1*N2 is zero".into(),
            ));
        }
        Ok(self.coincidences as f64 * self.pulses as f64 / denom)
    }

    fn add(&mut self, o: &HomCounts) {
        self.pulses += o.pulses;
        self.singles_d1 += o.singles_d1;
        self.singles_d2 += o.singles_d2;
        self.coincidences += o.coincidences;
    }
}

fn check_inputs(distinguishability: &DistinguishabilityState, intensity: f64, detectors: &[DetectorModel; 2]) -> Result<()> {
    distinguishability.validate()?;
    detectors[0].validate("detectors[0]")?;
    detectors[1].validate("detectors[1]")?;
    if !(intensity > 0.0 && intensity.is_finite()) {
        return Err(Error::domain("intensity", intensity, "HOM input intensity must be > 0"));
    }
    Ok(())
}

/// The two detector intensities for a given relative laser phase.
fn port_intensities(ia: f64, ib: f64, zeta: f64, phase: f64) -> (f64, f64) {
    let mean = 0.5 * (ia + ib);
    let cross = zeta * (ia * ib).sqrt() * phase.cos();
    ((mean + cross).max(0.0), (mean - cross).max(0.0))
}

/// Count singles and coincidences over `n_pulses` slots.
///
/// `intensity` is the first user's mean photon number per pulse at the beam
/// splitter; the second user's is `intensity · distinguishability.intensity_ratio`.
pub fn hom_counts(
    distinguishability: &DistinguishabilityState,
    intensity: f64,
    detectors: &[DetectorModel; 2],
    n_pulses: u64,
    seed: u64,
) -> Result<HomCounts> {
    check_inputs(distinguishability, intensity, detectors)?;
    let zeta = distinguishability.mode_overlap();
    let ib = intensity * distinguishability.intensity_ratio;
    let parts: Vec<HomCounts> = chunks(n_pulses)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(chunk, start, end)| {
            let mut rng = chunk_rng(seed, chunk);
            let mut c = HomCounts::default();
            for _ in start..end {
                let phase = rng.random::<f64>() * TAU;
                let (i1, i2) = port_intensities(intensity, ib, zeta, phase);
                let c1 = rng.random::<f64>() < detectors[0].click_probability(i1);
                let c2 = rng.random::<f64>() < detectors[1].click_probability(i2);
                c.pulses += 1;
                c.singles_d1 += c1 as u64;
                c.singles_d2 += c2 as u64;
                c.coincidences += (c1 && c2) as u64;
            }
            c
        })
        .collect();
    let mut total = HomCounts::default();
    for p in &parts {
        total.add(p);
    }
    Ok(total)
}

/// Monte-Carlo dip value `N_c·N_tot / (N_1·N_2)`.
pub fn hom_coincidence_value(
    distinguishability: &DistinguishabilityState,
    intensity: f64,
    detectors: &[DetectorModel; 2],
    n_pulses: u64,
    seed: u64,
) -> Result<f64> {
    hom_counts(distinguishability, intensity, detectors, n_pulses, seed)?.coincidence_value()
}

/// Phase-averaged `(P(D1), P(D2), P(D1 and D2))` per pulse.
fn click_moments(distinguishability: &DistinguishabilityState, intensity: f64, detectors: &[DetectorModel; 2]) -> (f64, f64, f64) {
    let zeta = distinguishability.mode_overlap();
    let ib = intensity * distinguishability.intensity_ratio;
    let (mut s1, mut s2, mut s12) = (0.0, 0.0, 0.0);
    for k in 0..HOM_PHASE_GRID {
        let phase = TAU * k as f64 / HOM_PHASE_GRID as f64;
        let (i1, i2) = port_intensities(intensity, ib, zeta, phase);
        let p1 = detectors[0].click_probability(i1);
        let p2 = detectors[1].click_probability(i2);
        s1 += p1;
        s2 += p2;
        s12 += p1 * p2;
    }
    let n = HOM_PHASE_GRID as f64;
    (s1 / n, s2 / n, s12 / n)
}

/// Draw the four counts of an `n_pulses` run in one go.
///
/// Slots are independent and identically distributed once the relative
/// phase is averaged out, so the outcome tallies (D1 only, D2 only, both,
/// neither) are exactly multinomial with the phase-averaged probabilities.
/// Used where many dip points are needed, such as temperature scans.
pub fn sample_hom_counts<R: Rng + ?Sized>(
    distinguishability: &DistinguishabilityState,
    intensity: f64,
    detectors: &[DetectorModel; 2],
    n_pulses: u64,
    rng: &mut R,
) -> Result<HomCounts> {
    check_inputs(distinguishability, intensity, detectors)?;
    let (p1, p2, p12) = click_moments(distinguishability, intensity, detectors);
    let only1 = (p1 - p12).max(0.0);
    let only2 = (p2 - p12).max(0.0);
    let binom = |n: u64, p: f64, rng: &mut R| -> u64 {
        if n == 0 || p <= 0.0 {
            0
        } else if p >= 1.0 {
            n
        } else {
            Binomial::new(n, p).expect("probability in (0, 1)").sample(rng)
        }
    };
    let both = binom(n_pulses, p12, rng);
    let rest = 1.0 - p12;
    let a = binom(n_pulses - both, if rest > 0.0 { only1 / rest } else { 0.0 }, rng);
    let rest2 = rest - only1;
    let b = binom(n_pulses - both - a, if rest2 > 0.0 { only2 / rest2 } else { 0.0 }, rng);
    Ok(HomCounts {
        pulses: n_pulses,
        singles_d1: a + both,
        singles_d2: b + both,
        coincidences: both,
    })
}

/// Expected dip value `E[p_1 p_2] / (E[p_1] E[p_2])` over the uniformly
/// random relative phase.
pub fn expected_hom_coincidence_value(
    distinguishability: &DistinguishabilityState,
    intensity: f64,
    detectors: &[DetectorModel; 2],
) -> Result<f64> {
    check_inputs(distinguishability, intensity, detectors)?;
    let (e1, e2, e12) = click_moments(distinguishability, intensity, detectors);
    if e1 * e2 == 0.0 {
        return Err(Error::DegenerateStatistics(
            "expected HOM singles product is zero".into(),
        ));
    }
    Ok(e12 / (e1 * e2))
}
