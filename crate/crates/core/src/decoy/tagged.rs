//! Photon-number-tagged toy source for checking the decoy bounds against
//! known truth.
//!
//! Each sifted cell is split by the photon numbers `(n, m)` the two sources
//! emitted; every `(n, m)` group clicks and errs with a fixed, known yield.
//! Because the truth is a model parameter the estimators can be scored
//! exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::keyrate::CountTable;
use crate::model::{poisson, Basis, IntensityLabel, ProtocolParams};
use crate::optics::stats::TRUTH_MAX_PHOTONS;
use crate::optics::{CellCounts, SessionStatistics, TruthTags};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedYieldModel {
    /// Per-photon arrival probability (channel times detector) per user.
    pub transmittance: [f64; 2],
    /// Background yield of any photon-number pair.
    pub dark_yield: f64,
    /// Fraction of two-sided arrivals announced as ψ⁻.
    pub acceptance: f64,
    /// Fraction of one-sided multiphoton arrivals announced as ψ⁻.
    pub single_side_acceptance: f64,
    /// Error rate of true single-photon pairs, both bases.
    pub intrinsic_error: f64,
    /// X-basis error rate of two-sided multiphoton pairs.
    pub multiphoton_x_error: f64,
}

impl Default for TaggedYieldModel {
    /// Roughly the U1-U2 link: 7.5 and 11.6 dB arms, 64/66% detectors.
    fn default() -> Self {
        TaggedYieldModel {
            transmittance: [0.1778 * 0.64, 0.0692 * 0.66],
            dark_yield: 1e-6,
            acceptance: 0.25,
            single_side_acceptance: 0.125,
            intrinsic_error: 0.02,
            multiphoton_x_error: 0.25,
        }
    }
}

impl TaggedYieldModel {
    fn arrive(t: f64, n: u32) -> f64 {
        1.0 - (1.0 - t).powi(n as i32)
    }

    fn arrive_two(t: f64, n: u32) -> f64 {
        if n < 2 {
            return 0.0;
        }
        1.0 - (1.0 - t).powi(n as i32) - n as f64 * t * (1.0 - t).powi(n as i32 - 1)
    }

    /// `(Y_nm, error yield_nm)` in `basis`.
    pub fn yields(&self, basis: Basis, n: u32, m: u32) -> (f64, f64) {
        let [ta, tb] = self.transmittance;
        let y0 = self.dark_yield;
        let both = self.acceptance * Self::arrive(ta, n) * Self::arrive(tb, m);
        let single = self.single_side_acceptance * (Self::arrive_two(ta, n) + Self::arrive_two(tb, m));
        let y = y0 + (1.0 - y0) * (both + single);
        let e_both = match basis {
            Basis::X if n > 1 || m > 1 => self.multiphoton_x_error,
            _ => self.intrinsic_error,
        };
        let err = 0.5 * y0 + (1.0 - y0) * (both * e_both + 0.5 * single);
        (y.min(1.0), err.min(y))
    }

    pub fn true_y11(&self) -> f64 {
        self.yields(Basis::Z, 1, 1).0
    }

    /// True single-photon phase error rate (X basis).
    pub fn true_e11(&self) -> f64 {
        let (y, e) = self.yields(Basis::X, 1, 1);
        e / y
    }

    /// Noise-free expected counts after `n_pulses` slots.
    pub fn expected_counts(&self, params: &ProtocolParams, n_pulses: f64) -> CountTable {
        let mut t = CountTable::new("tagged");
        for a in IntensityLabel::ALL {
            for b in IntensityLabel::ALL {
                for basis in Basis::ALL {
                    let sent = n_pulses * params.cell_probability(a, b, basis);
                    let (ma, mb) = (params.mean_photon_number(a), params.mean_photon_number(b));
                    let (mut q, mut e) = (0.0, 0.0);
                    for n in 0..40 {
                        for m in 0..40 {
                            let w = poisson(ma, n) * poisson(mb, m);
                            let (y, err) = self.yields(basis, n, m);
                            q += w * y;
                            e += w * err;
                        }
                    }
                    let c = t.cell_mut(a, b, basis);
                    c.sent = sent;
                    c.coincidences = sent * q;
                    c.errors = sent * e;
                }
            }
        }
        t
    }

    /// One sampled run with per-`(n, m)` truth tags. Photon numbers at or
    /// above the truth-tag cap share the last bucket.
    pub fn sample(&self, params: &ProtocolParams, n_pulses: u64, seed: u64) -> SessionStatistics {
        let mut stats = SessionStatistics::new("tagged");
        let mut truth = TruthTags::new();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7a66));
        let cap = TRUTH_MAX_PHOTONS as u32;
        for a in IntensityLabel::ALL {
            for b in IntensityLabel::ALL {
                for basis in Basis::ALL {
                    let sent = (n_pulses as f64 * params.cell_probability(a, b, basis)).round() as u64;
                    let (ma, mb) = (params.mean_photon_number(a), params.mean_photon_number(b));
                    let pa: Vec<f64> = photon_distribution(ma, cap);
                    let pb: Vec<f64> = photon_distribution(mb, cap);
                    // multinomial split of `sent` by sequential binomials
                    let mut remaining = sent;
                    let mut mass_left = 1.0;
                    let mut total = CellCounts::default();
                    for n in 0..=cap {
                        for m in 0..=cap {
                            let p = pa[n as usize] * pb[m as usize];
                            let k = if remaining == 0 || p <= 0.0 {
                                0
                            } else if p >= mass_left {
                                remaining
                            } else {
                                draw(remaining, p / mass_left, &mut rng)
                            };
                            remaining -= k;
                            mass_left -= p;
                            let (y, err) = self.yields(basis, n, m);
                            let clicks = draw(k, y, &mut rng);
                            let errors = draw(clicks, if y > 0.0 { err / y } else { 0.0 }, &mut rng);
                            let cell = CellCounts {
                                sent: k,
                                coincidences: clicks,
                                errors,
                            };
                            *truth.get_mut(a, b, basis, n as usize, m as usize) = cell;
                            total.sent += k;
                            total.coincidences += clicks;
                            total.errors += errors;
                        }
                    }
                    // rounding leftovers land in the last bucket
                    if remaining > 0 {
                        total.sent += remaining;
                        truth.get_mut(a, b, basis, cap as usize, cap as usize).sent += remaining;
                    }
                    *stats.cell_mut(a, b, basis) = total;
                }
            }
        }
        stats.truth = Some(truth);
        stats
    }
}

fn photon_distribution(mean: f64, cap: u32) -> Vec<f64> {
    let mut p: Vec<f64> = (0..cap).map(|n| poisson(mean, n)).collect();
    let head: f64 = p.iter().sum();
    p.push((1.0 - head).max(0.0));
    p
}

fn draw(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}
