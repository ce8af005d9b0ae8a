//! Beam-splitter Bell-state measurement with two threshold detectors.
//!
//! Per time bin the two input pulses are coherent states. A fraction `ζ` of
//! each interferes at the beam splitter, the remainder adds incoherently:
//!
//! ```text
//! I_D1 = (I_a + I_b)/2 + ζ·sqrt(I_a·I_b)·cos(φ_a − φ_b)
//! I_D2 = (I_a + I_b)/2 − ζ·sqrt(I_a·I_b)·cos(φ_a − φ_b)
//! ```
//!
//! Given the phases, photon counts in the four (detector, bin) slots are
//! independent Poisson variables, so each slot clicks independently with
//! probability `1 − (1 − p_dark)·exp(−η·I)`.

use rand::Rng;

use super::{DetectorModel, DistinguishabilityState, PulsePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    D1,
    D2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeBin {
    Early,
    Late,
}

/// What fired a click. A slot that saw both a photon and a dark count is
/// recorded once, as `Photon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClickSource {
    Photon,
    Dark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClickRecord {
    pub detector: Detector,
    pub time_bin: TimeBin,
    pub source: ClickSource,
}

impl ClickRecord {
    fn slot_bit(&self) -> u8 {
        let d = match self.detector {
            Detector::D1 => 0,
            Detector::D2 => 1,
        };
        let b = match self.time_bin {
            TimeBin::Early => 0,
            TimeBin::Late => 1,
        };
        1 << (d * 2 + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellOutcome {
    PsiMinus,
}

/// Slot bitmask layout: bit `2·detector + bin`.
pub(crate) const D1_EARLY: u8 = 1;
pub(crate) const D1_LATE: u8 = 2;
pub(crate) const D2_EARLY: u8 = 4;
pub(crate) const D2_LATE: u8 = 8;

/// Mean photon numbers reaching each slot, indexed `[detector][bin]`.
pub fn output_intensities(a: &PulsePair, b: &PulsePair, zeta: f64, relative_phase: f64) -> [[f64; 2]; 2] {
    let phase_a = [a.global_phase, a.global_phase + a.encoding_phase + relative_phase];
    let phase_b = [b.global_phase, b.global_phase + b.encoding_phase];
    let ia = [a.early, a.late];
    let ib = [b.early, b.late];
    let mut out = [[0.0; 2]; 2];
    for bin in 0..2 {
        let mean = 0.5 * (ia[bin] + ib[bin]);
        let cross = zeta * (ia[bin] * ib[bin]).sqrt() * (phase_a[bin] - phase_b[bin]).cos();
        out[0][bin] = (mean + cross).max(0.0);
        out[1][bin] = (mean - cross).max(0.0);
    }
    out
}

/// Click probability of each slot, flattened in bitmask order.
pub fn slot_click_probabilities(intensities: &[[f64; 2]; 2], detectors: &[DetectorModel; 2]) -> [f64; 4] {
    [
        detectors[0].click_probability(intensities[0][0]),
        detectors[0].click_probability(intensities[0][1]),
        detectors[1].click_probability(intensities[1][0]),
        detectors[1].click_probability(intensities[1][1]),
    ]
}

/// Probability of exactly one of the two accepted ψ⁻ patterns.
pub fn psi_minus_probability(p: &[f64; 4]) -> f64 {
    let [d1e, d1l, d2e, d2l] = *p;
    d1e * d2l * (1.0 - d1l) * (1.0 - d2e) + d2e * d1l * (1.0 - d1e) * (1.0 - d2l)
}

/// ψ⁻ rule on a slot bitmask: both detectors, alternate bins, nothing else.
pub(crate) fn is_psi_minus(mask: u8) -> bool {
    mask == D1_EARLY | D2_LATE || mask == D2_EARLY | D1_LATE
}

/// Simulate the detectors for one pulse-pair slot.
pub fn bsm_detect<R: Rng + ?Sized>(
    a: &PulsePair,
    b: &PulsePair,
    distinguishability: &DistinguishabilityState,
    detectors: &[DetectorModel; 2],
    rng: &mut R,
) -> Vec<ClickRecord> {
    let intensities = output_intensities(
        a,
        b,
        distinguishability.mode_overlap(),
        distinguishability.relative_phase_rad,
    );
    let mut clicks = Vec::new();
    for (d, detector) in [Detector::D1, Detector::D2].into_iter().enumerate() {
        for (k, time_bin) in [TimeBin::Early, TimeBin::Late].into_iter().enumerate() {
            let model = &detectors[d];
            let photon = rng.random::<f64>() < 1.0 - (-model.efficiency * intensities[d][k]).exp();
            let dark = rng.random::<f64>() < model.dark_probability();
            let source = match (photon, dark) {
                (true, _) => ClickSource::Photon,
                (false, true) => ClickSource::Dark,
                (false, false) => continue,
            };
            clicks.push(ClickRecord {
                detector,
                time_bin,
                source,
            });
        }
    }
    clicks
}

/// Accept ψ⁻ when D1 and D2 clicked in alternate time bins and no other
/// slot fired.
pub fn bsm_postselect(clicks: &[ClickRecord]) -> Option<BellOutcome> {
    let mask = clicks.iter().fold(0u8, |m, c| m | c.slot_bit());
    is_psi_minus(mask).then_some(BellOutcome::PsiMinus)
}

/// Draw the slot bitmask for given intensities.
///
/// Most slots see no click at all, so the no-click event is decided with a
/// single exponential; only the remaining fraction evaluates per-slot
/// probabilities and samples the pattern conditioned on at least one click.
pub(crate) fn sample_click_mask<R: Rng + ?Sized>(
    intensities: &[[f64; 2]; 2],
    detectors: &[DetectorModel; 2],
    rng: &mut R,
) -> u8 {
    let exposure = detectors[0].efficiency * (intensities[0][0] + intensities[0][1])
        + detectors[1].efficiency * (intensities[1][0] + intensities[1][1]);
    let q1 = 1.0 - detectors[0].dark_probability();
    let q2 = 1.0 - detectors[1].dark_probability();
    let p_none = q1 * q1 * q2 * q2 * (-exposure).exp();
    if rng.random::<f64>() < p_none {
        return 0;
    }
    let p = slot_click_probabilities(intensities, detectors);
    let mut rest_none = [1.0; 5];
    for k in (0..4).rev() {
        rest_none[k] = rest_none[k + 1] * (1.0 - p[k]);
    }
    let mut mask = 0u8;
    let mut any = false;
    for k in 0..4 {
        let pk = if any {
            p[k]
        } else {
            // P(slot k fires | earlier slots silent, at least one of k.. fires)
            let denom = 1.0 - rest_none[k];
            if denom > 0.0 {
                p[k] / denom
            } else {
                0.0
            }
        };
        if rng.random::<f64>() < pk {
            mask |= 1 << k;
            any = true;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Basis;
    use crate::model::IntensityLabel;
    use crate::optics::DetectorModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pulse(early: f64, late: f64, phase: f64) -> PulsePair {
        PulsePair {
            bit: false,
            basis: Basis::X,
            label: IntensityLabel::Signal,
            early,
            late,
            encoding_phase: 0.0,
            global_phase: phase,
        }
    }

    fn click(detector: Detector, time_bin: TimeBin) -> ClickRecord {
        ClickRecord {
            detector,
            time_bin,
            source: ClickSource::Photon,
        }
    }

    #[test]
    fn vacuum_dark_only_any_click() {
        let d = [DetectorModel::new(0.64), DetectorModel::new(0.66)];
        let vac = pulse(0.0, 0.0, 0.0);
        let p = slot_click_probabilities(&output_intensities(&vac, &vac, 1.0, 0.0), &d);
        let any = 1.0 - p.iter().map(|x| 1.0 - x).product::<f64>();
        let pd: f64 = 1.7e-7;
        assert_close!(any, 1.0 - (1.0 - pd).powi(4), 1e-18);
        assert_close!(any, 6.8e-7, 1e-10);
    }

    #[test]
    fn perfect_interference_sends_all_to_one_port() {
        let a = pulse(0.2, 0.2, 0.7);
        let b = pulse(0.2, 0.2, 0.7);
        let out = output_intensities(&a, &b, 1.0, 0.0);
        assert_close!(out[0][0], 0.4, 1e-15);
        assert_close!(out[1][0], 0.0, 1e-15);
        assert_close!(out[1][1], 0.0, 1e-15);
        let d = [DetectorModel::ideal(); 2];
        let p = slot_click_probabilities(&out, &d);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn no_overlap_splits_evenly() {
        let a = pulse(0.3, 0.1, 0.0);
        let b = pulse(0.1, 0.05, 2.0);
        let out = output_intensities(&a, &b, 0.0, 0.0);
        assert_close!(out[0][0], 0.2, 1e-15);
        assert_close!(out[1][0], 0.2, 1e-15);
        assert_close!(out[0][1], 0.075, 1e-15);
        assert_close!(out[1][1], 0.075, 1e-15);
    }

    #[test]
    fn postselect_rule() {
        use Detector::*;
        use TimeBin::*;
        assert_eq!(
            bsm_postselect(&[click(D1, Early), click(D2, Late)]),
            Some(BellOutcome::PsiMinus)
        );
        assert_eq!(
            bsm_postselect(&[click(D2, Early), click(D1, Late)]),
            Some(BellOutcome::PsiMinus)
        );
        assert_eq!(bsm_postselect(&[click(D1, Early), click(D1, Late)]), None);
        assert_eq!(bsm_postselect(&[click(D1, Early), click(D2, Early)]), None);
        assert_eq!(
            bsm_postselect(&[click(D1, Early), click(D2, Late), click(D1, Late)]),
            None
        );
        assert_eq!(bsm_postselect(&[]), None);
    }

    /// Enumerating all 16 click patterns through `bsm_postselect` reproduces
    /// the closed-form acceptance probability.
    #[test]
    fn psi_minus_probability_matches_pattern_enumeration() {
        let d = [DetectorModel::new(0.64), DetectorModel::new(0.66)];
        let a = pulse(0.13, 0.02, 0.3);
        let b = pulse(0.04, 0.09, 1.9);
        let p = slot_click_probabilities(&output_intensities(&a, &b, 0.8, 0.1), &d);
        let slots = [
            (Detector::D1, TimeBin::Early),
            (Detector::D1, TimeBin::Late),
            (Detector::D2, TimeBin::Early),
            (Detector::D2, TimeBin::Late),
        ];
        let mut accepted = 0.0;
        for mask in 0u8..16 {
            let mut prob = 1.0;
            let mut clicks = Vec::new();
            for (k, (det, bin)) in slots.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    prob *= p[k];
                    clicks.push(click(*det, *bin));
                } else {
                    prob *= 1.0 - p[k];
                }
            }
            if bsm_postselect(&clicks).is_some() {
                accepted += prob;
            }
        }
        assert_close!(accepted, psi_minus_probability(&p), 1e-17);
    }

    #[test]
    fn fast_sampler_matches_slot_probabilities() {
        let d = [DetectorModel::new(0.64), DetectorModel::new(0.66)];
        let a = pulse(0.3, 0.3, 0.0);
        let b = pulse(0.2, 0.2, 1.0);
        let intens = output_intensities(&a, &b, 0.9, 0.0);
        let p = slot_click_probabilities(&intens, &d);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400_000;
        let mut hits = [0u32; 4];
        let mut psi = 0u32;
        for _ in 0..n {
            let m = sample_click_mask(&intens, &d, &mut rng);
            for (k, h) in hits.iter_mut().enumerate() {
                if m & (1 << k) != 0 {
                    *h += 1;
                }
            }
            psi += is_psi_minus(m) as u32;
        }
        for k in 0..4 {
            let f = hits[k] as f64 / n as f64;
            let sigma = (p[k] * (1.0 - p[k]) / n as f64).sqrt();
            assert!((f - p[k]).abs() < 5.0 * sigma, "slot {k}: {f} vs {}", p[k]);
        }
        let pp = psi_minus_probability(&p);
        let f = psi as f64 / n as f64;
        assert!((f - pp).abs() < 5.0 * (pp * (1.0 - pp) / n as f64).sqrt());
    }

    #[test]
    fn bsm_detect_flags_dark_clicks() {
        let d = [DetectorModel {
            efficiency: 0.0,
            dark_count_rate_hz: 1e8,
            gate_window_s: 5e-9,
        }; 2];
        let vac = pulse(0.0, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dist = DistinguishabilityState::indistinguishable();
        let clicks = bsm_detect(&vac, &vac, &dist, &d, &mut rng);
        assert!(clicks.iter().all(|c| c.source == ClickSource::Dark));
        let mut seen = std::collections::HashSet::new();
        for c in &clicks {
            assert!(seen.insert((c.detector, c.time_bin)));
        }
    }
}
