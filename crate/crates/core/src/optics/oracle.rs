//! Deterministic expectation of every sifted cell.
//!
//! Given both global phases the click model is closed-form, so the gains and
//! error rates follow from averaging the ψ⁻ acceptance probability over a
//! uniform grid of phases for each laser, over the four bit combinations and
//! over the encoder mode flips.
//!
//! The click probabilities depend on the two global phases only through
//! their difference, so the `PHASE_GRID²` grid collapses exactly onto
//! `PHASE_GRID` differences. The full grid is kept as a reference.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::bsm::{output_intensities, psi_minus_probability, slot_click_probabilities};
use super::encode::{encode_with_phase, flip_mode, scale};
use super::session::LinkModel;
use super::stats::{CellCounts, SessionStatistics};
use crate::error::Result;
use crate::model::{Basis, IntensityLabel, ProtocolParams};

/// Grid points per laser phase.
pub const PHASE_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCell {
    /// Probability that a slot lands in this cell (both users' preparations).
    pub probability: f64,
    /// Expected Qᵃᵇ: coincidences per sent pulse pair in the cell.
    pub gain: f64,
    /// Expected Eᵃᵇ: errors per coincidence.
    pub error_rate: f64,
}

impl ExpectedCell {
    pub fn error_gain(&self) -> f64 {
        self.gain * self.error_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedStatistics {
    pub pair_id: String,
    /// Indexed `[a][b][basis]`.
    pub cells: [[[ExpectedCell; 2]; 3]; 3],
}

impl ExpectedStatistics {
    pub fn cell(&self, a: IntensityLabel, b: IntensityLabel, basis: Basis) -> &ExpectedCell {
        &self.cells[a.index()][b.index()][basis.index()]
    }

    /// Expected counts after `n_pulses` slots, rounded to integers.
    pub fn expected_counts(&self, n_pulses: f64) -> SessionStatistics {
        let mut s = SessionStatistics::new(self.pair_id.clone());
        for a in IntensityLabel::ALL {
            for b in IntensityLabel::ALL {
                for basis in Basis::ALL {
                    let c = self.cell(a, b, basis);
                    let sent = (n_pulses * c.probability).round();
                    let coinc = (sent * c.gain).round();
                    let err = (coinc * c.error_rate).round();
                    *s.cell_mut(a, b, basis) = CellCounts {
                        sent: sent as u64,
                        coincidences: coinc as u64,
                        errors: err as u64,
                    };
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
enum PhaseGrid {
    Difference,
    Full { offset: f64 },
}

impl PhaseGrid {
    /// `(phase_a, phase_b, weight)` quadrature points.
    fn points(self) -> Vec<(f64, f64, f64)> {
        let step = TAU / PHASE_GRID as f64;
        match self {
            PhaseGrid::Difference => (0..PHASE_GRID)
                .map(|k| (step * k as f64, 0.0, 1.0 / PHASE_GRID as f64))
                .collect(),
            PhaseGrid::Full { offset } => {
                let w = 1.0 / (PHASE_GRID * PHASE_GRID) as f64;
                let mut v = Vec::with_capacity(PHASE_GRID * PHASE_GRID);
                for i in 0..PHASE_GRID {
                    for j in 0..PHASE_GRID {
                        v.push((offset + step * i as f64, offset + step * j as f64, w));
                    }
                }
                v
            }
        }
    }
}

pub fn expected_statistics(params: &ProtocolParams, link: &LinkModel) -> Result<ExpectedStatistics> {
    expected_on_grid(params, link, PhaseGrid::Difference)
}

/// Reference evaluation on the full per-laser phase grid, every phase
/// shifted by `offset`.
pub fn expected_statistics_full_grid(
    params: &ProtocolParams,
    link: &LinkModel,
    offset: f64,
) -> Result<ExpectedStatistics> {
    expected_on_grid(params, link, PhaseGrid::Full { offset })
}

fn expected_on_grid(params: &ProtocolParams, link: &LinkModel, grid: PhaseGrid) -> Result<ExpectedStatistics> {
    params.validate()?;
    link.validate()?;
    let empty = ExpectedCell {
        probability: 0.0,
        gain: 0.0,
        error_rate: 0.0,
    };
    let mut cells = [[[empty; 2]; 3]; 3];
    let points = grid.points();
    for a in IntensityLabel::ALL {
        for b in IntensityLabel::ALL {
            for basis in Basis::ALL {
                let (gain, error_gain) = cell_expectation(params, link, a, b, basis, &points);
                cells[a.index()][b.index()][basis.index()] = ExpectedCell {
                    probability: params.cell_probability(a, b, basis),
                    gain,
                    error_rate: if gain > 0.0 { error_gain / gain } else { 0.0 },
                };
            }
        }
    }
    Ok(ExpectedStatistics {
        pair_id: link.pair_id.clone(),
        cells,
    })
}

/// `(P(ψ⁻), P(ψ⁻ and error))` for one cell.
fn cell_expectation(
    params: &ProtocolParams,
    link: &LinkModel,
    a: IntensityLabel,
    b: IntensityLabel,
    basis: Basis,
    points: &[(f64, f64, f64)],
) -> (f64, f64) {
    let zeta = link.distinguishability.mode_overlap();
    let rel = link.distinguishability.relative_phase_rad;
    let t = link.channels.map(|c| c.transmittance());
    let m = link.channels.map(|c| c.misalignment);

    let mut gain = 0.0;
    let mut error = 0.0;
    for bit_a in [false, true] {
        for bit_b in [false, true] {
            for flip_a in [false, true] {
                for flip_b in [false, true] {
                    let w = 0.25
                        * if flip_a { m[0] } else { 1.0 - m[0] }
                        * if flip_b { m[1] } else { 1.0 - m[1] };
                    if w == 0.0 {
                        continue;
                    }
                    let mut p = 0.0;
                    for &(pa, pb, pw) in points {
                        let mut ea = encode_with_phase(bit_a, basis, params.setting(a), pa);
                        let mut eb = encode_with_phase(bit_b, basis, params.setting(b), pb);
                        if flip_a {
                            ea = flip_mode(&ea);
                        }
                        if flip_b {
                            eb = flip_mode(&eb);
                        }
                        let intens = output_intensities(&scale(&ea, t[0]), &scale(&eb, t[1]), zeta, rel);
                        p += pw * psi_minus_probability(&slot_click_probabilities(&intens, &link.detectors));
                    }
                    p *= w;
                    gain += p;
                    if bit_a == bit_b {
                        error += p;
                    }
                }
            }
        }
    }
    (gain, error)
}
