use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bsm::{bsm_detect, BellOutcome, bsm_postselect, is_psi_minus, output_intensities, sample_click_mask};
use super::encode::{apply_misalignment, encode_pulse, encode_with_phase, flip_mode, scale};
use super::stats::{RawEvent, SessionStatistics, UserChoice};
use super::{ChannelModel, DetectorModel, DistinguishabilityState};
use crate::error::{Error, Result};
use crate::model::{Basis, IntensityLabel, ProtocolParams};
use crate::rng::{chunk_rng, chunks};

/// Everything physical about one user pair's link to the relay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub pair_id: String,
    /// User A's and user B's arms.
    pub channels: [ChannelModel; 2],
    pub detectors: [DetectorModel; 2],
    pub distinguishability: DistinguishabilityState,
}

impl LinkModel {
    pub fn new(pair_id: impl Into<String>, channels: [ChannelModel; 2], detectors: [DetectorModel; 2]) -> Self {
        LinkModel {
            pair_id: pair_id.into(),
            channels,
            detectors,
            distinguishability: DistinguishabilityState::indistinguishable(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channels[0].validate("channel_a")?;
        self.channels[1].validate("channel_b")?;
        self.detectors[0].validate("detectors[0]")?;
        self.detectors[1].validate("detectors[1]")?;
        self.distinguishability.validate()
    }

    /// The same link seen with the two users swapped.
    pub fn swapped(&self) -> LinkModel {
        let mut d = self.distinguishability;
        d.relative_phase_rad = -d.relative_phase_rad;
        d.intensity_ratio = 1.0 / d.intensity_ratio;
        LinkModel {
            pair_id: self.pair_id.clone(),
            channels: [self.channels[1], self.channels[0]],
            detectors: self.detectors,
            distinguishability: d,
        }
    }
}

/// Cumulative tables for drawing one user's preparation from a uniform.
#[derive(Clone, Copy)]
struct Sampler {
    label_cdf: [f64; 2],
    x_prob: [f64; 3],
}

impl Sampler {
    fn new(params: &ProtocolParams) -> Self {
        let p = |l: IntensityLabel| params.setting(l).send_probability;
        let vac = p(IntensityLabel::Vacuum);
        Sampler {
            label_cdf: [vac, vac + p(IntensityLabel::Decoy)],
            x_prob: IntensityLabel::ALL.map(|l| params.x_basis_probability.x_probability(l)),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> UserChoice {
        let u: f64 = rng.random();
        let i = if u < self.label_cdf[0] {
            0
        } else if u < self.label_cdf[1] {
            1
        } else {
            2
        };
        let basis = if rng.random::<f64>() < self.x_prob[i] {
            Basis::X
        } else {
            Basis::Z
        };
        UserChoice {
            label: IntensityLabel::from_index(i),
            basis,
            bit: rng.random(),
        }
    }
}

/// Run `n_pulses` slots of the link and sift them into cell counts.
///
/// Pulse `i` draws from the random stream of chunk `i / CHUNK_PULSES`, so the
/// result is a function of the inputs and `seed` only.
pub fn simulate_session(params: &ProtocolParams, link: &LinkModel, n_pulses: u64, seed: u64) -> Result<SessionStatistics> {
    params.validate()?;
    link.validate()?;
    if n_pulses == 0 {
        return Err(Error::domain("n_pulses", 0.0, "need at least one pulse"));
    }
    let kernel = Kernel::new(params, link);
    let parts: Vec<SessionStatistics> = chunks(n_pulses)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(chunk, start, end)| {
            let mut rng = chunk_rng(seed, chunk);
            let mut stats = SessionStatistics::new(link.pair_id.clone());
            for _ in start..end {
                kernel.slot(&mut rng, &mut stats);
            }
            stats
        })
        .collect();
    let mut total = SessionStatistics::new(link.pair_id.clone());
    for p in &parts {
        total.absorb(p);
    }
    Ok(total)
}

/// Per-slot sampler with everything that does not change between slots
/// precomputed.
struct Kernel {
    sampler: Sampler,
    transmittance: [f64; 2],
    misalignment: [f64; 2],
    zeta: f64,
    relative_phase: f64,
    detectors: [DetectorModel; 2],
    params: ProtocolParams,
}

impl Kernel {
    fn new(params: &ProtocolParams, link: &LinkModel) -> Self {
        Kernel {
            sampler: Sampler::new(params),
            transmittance: link.channels.map(|c| c.transmittance()),
            misalignment: link.channels.map(|c| c.misalignment),
            zeta: link.distinguishability.mode_overlap(),
            relative_phase: link.distinguishability.relative_phase_rad,
            detectors: link.detectors,
            params: params.clone(),
        }
    }

    fn slot<R: Rng + ?Sized>(&self, rng: &mut R, stats: &mut SessionStatistics) {
        let a = self.sampler.draw(rng);
        let b = self.sampler.draw(rng);
        if a.basis != b.basis {
            // sifting discards these whatever the relay reports
            return;
        }
        let mut pulses = [a, b].map(|c| {
            let setting = self.params.setting(c.label);
            encode_with_phase(c.bit, c.basis, setting, rng.random::<f64>() * TAU)
        });
        for k in 0..2 {
            if self.misalignment[k] > 0.0 && rng.random::<f64>() < self.misalignment[k] {
                pulses[k] = flip_mode(&pulses[k]);
            }
            pulses[k] = scale(&pulses[k], self.transmittance[k]);
        }
        let intensities = output_intensities(&pulses[0], &pulses[1], self.zeta, self.relative_phase);
        let mask = sample_click_mask(&intensities, &self.detectors, rng);
        let outcome = is_psi_minus(mask).then_some(BellOutcome::PsiMinus);
        stats.record(&RawEvent { a, b, outcome });
    }
}

/// Slow reference path: every slot goes through the public encode,
/// misalign, propagate, detect and post-select steps and is returned as a
/// raw event, mismatched bases included. Meant for debugging and tests.
pub fn simulate_events(params: &ProtocolParams, link: &LinkModel, n_pulses: u64, seed: u64) -> Result<Vec<RawEvent>> {
    params.validate()?;
    link.validate()?;
    let sampler = Sampler::new(params);
    let mut events = Vec::with_capacity(n_pulses as usize);
    for (chunk, start, end) in chunks(n_pulses) {
        let mut rng = chunk_rng(seed, chunk);
        for _ in start..end {
            let a = sampler.draw(&mut rng);
            let b = sampler.draw(&mut rng);
            let pa = encode_pulse(a.bit, a.basis, params.setting(a.label), &mut rng);
            let pb = encode_pulse(b.bit, b.basis, params.setting(b.label), &mut rng);
            let pa = super::propagate(&apply_misalignment(&pa, link.channels[0].misalignment, &mut rng), &link.channels[0]);
            let pb = super::propagate(&apply_misalignment(&pb, link.channels[1].misalignment, &mut rng), &link.channels[1]);
            let clicks = bsm_detect(&pa, &pb, &link.distinguishability, &link.detectors, &mut rng);
            events.push(RawEvent {
                a,
                b,
                outcome: bsm_postselect(&clicks),
            });
        }
    }
    Ok(events)
}
