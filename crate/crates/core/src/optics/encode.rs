use std::f64::consts::{PI, TAU};

use rand::Rng;

use super::ChannelModel;
use crate::model::{Basis, IntensityLabel, IntensitySetting};

/// One user's time-bin qubit: an early and a late weak coherent pulse.
///
/// Intensities are mean photon numbers per bin. The late bin carries
/// `encoding_phase` relative to the early one; `global_phase` is the
/// per-slot phase randomisation shared by both bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulsePair {
    pub bit: bool,
    pub basis: Basis,
    pub label: IntensityLabel,
    pub early: f64,
    pub late: f64,
    pub encoding_phase: f64,
    pub global_phase: f64,
}

impl PulsePair {
    pub fn total_intensity(&self) -> f64 {
        self.early + self.late
    }
}

/// Prepare a pulse pair. Z puts the whole intensity in the early bin for
/// bit 0 and the late bin for bit 1; X splits it evenly with phase 0 or π.
pub fn encode_pulse<R: Rng + ?Sized>(
    bit: bool,
    basis: Basis,
    setting: &IntensitySetting,
    rng: &mut R,
) -> PulsePair {
    let global_phase = rng.random::<f64>() * TAU;
    encode_with_phase(bit, basis, setting, global_phase)
}

pub(crate) fn encode_with_phase(
    bit: bool,
    basis: Basis,
    setting: &IntensitySetting,
    global_phase: f64,
) -> PulsePair {
    let mean = setting.mean_photon_number;
    let (early, late, encoding_phase) = match (basis, bit) {
        (Basis::Z, false) => (mean, 0.0, 0.0),
        (Basis::Z, true) => (0.0, mean, 0.0),
        (Basis::X, false) => (mean / 2.0, mean / 2.0, 0.0),
        (Basis::X, true) => (mean / 2.0, mean / 2.0, PI),
    };
    PulsePair {
        bit,
        basis,
        label: setting.label,
        early,
        late,
        encoding_phase,
        global_phase,
    }
}

/// Put the pulse into the wrong mode: swap bins in Z, add π in X. The
/// recorded bit is left alone.
pub fn flip_mode(pulse: &PulsePair) -> PulsePair {
    let mut out = *pulse;
    match pulse.basis {
        Basis::Z => std::mem::swap(&mut out.early, &mut out.late),
        Basis::X => out.encoding_phase = (pulse.encoding_phase + PI) % TAU,
    }
    out
}

/// Apply encoder misalignment: with probability `misalignment` the pulse
/// leaves in the wrong mode.
pub fn apply_misalignment<R: Rng + ?Sized>(
    pulse: &PulsePair,
    misalignment: f64,
    rng: &mut R,
) -> PulsePair {
    if misalignment > 0.0 && rng.random::<f64>() < misalignment {
        flip_mode(pulse)
    } else {
        *pulse
    }
}

/// Attenuate both bins by the arm's total transmittance.
pub fn propagate(pulse: &PulsePair, channel: &ChannelModel) -> PulsePair {
    scale(pulse, channel.transmittance())
}

pub(crate) fn scale(pulse: &PulsePair, t: f64) -> PulsePair {
    PulsePair {
        early: pulse.early * t,
        late: pulse.late * t,
        ..*pulse
    }
}
