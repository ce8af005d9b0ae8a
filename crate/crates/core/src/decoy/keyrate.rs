use serde::{Deserialize, Serialize};

use super::estimate::{estimate_e11, estimate_y11, lp_y11_lower, single_photon_gain, CellBounds};
use super::fluctuation::{fluctuation_interval, ConfidenceBound};
use crate::error::Result;
use crate::model::{binary_entropy, Basis, IntensityLabel, ProtocolParams};
use crate::optics::{ExpectedStatistics, SessionStatistics};

/// Number of separately bounded quantities sharing the failure budget: the
/// nine Z-basis gains and the four X-basis error rates in the phase-error
/// bound.
pub const BOUNDED_QUANTITIES: usize = 13;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CountCell {
    pub sent: f64,
    pub coincidences: f64,
    pub errors: f64,
}

/// Real-valued sent/coincidence/error counts per `[a][b][basis]` cell.
///
/// Real counts let expectation values and re-weighted desk-scale runs go
/// through the same pipeline as integer Monte-Carlo counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    pub pair_id: String,
    pub cells: [[[CountCell; 2]; 3]; 3],
}

impl CountTable {
    pub fn new(pair_id: impl Into<String>) -> Self {
        CountTable {
            pair_id: pair_id.into(),
            cells: [[[CountCell::default(); 2]; 3]; 3],
        }
    }

    pub fn cell(&self, a: IntensityLabel, b: IntensityLabel, basis: Basis) -> &CountCell {
        &self.cells[a.index()][b.index()][basis.index()]
    }

    pub fn cell_mut(&mut self, a: IntensityLabel, b: IntensityLabel, basis: Basis) -> &mut CountCell {
        &mut self.cells[a.index()][b.index()][basis.index()]
    }

    /// Every count multiplied by `sample_weight`. A desk-scale run of `n`
    /// pulses standing in for `n / scale` physical pulses uses weight
    /// `1 / scale`.
    pub fn from_statistics(stats: &SessionStatistics, sample_weight: f64) -> Self {
        let mut t = CountTable::new(stats.pair_id.clone());
        for (a, b, basis, c) in stats.iter_cells() {
            *t.cell_mut(a, b, basis) = CountCell {
                sent: c.sent as f64 * sample_weight,
                coincidences: c.coincidences as f64 * sample_weight,
                errors: c.errors as f64 * sample_weight,
            };
        }
        t
    }

    /// Expected counts after `n_pulses` slots, unrounded.
    pub fn from_expected(expected: &ExpectedStatistics, n_pulses: f64) -> Self {
        let mut t = CountTable::new(expected.pair_id.clone());
        for a in IntensityLabel::ALL {
            for b in IntensityLabel::ALL {
                for basis in Basis::ALL {
                    let e = expected.cell(a, b, basis);
                    let sent = n_pulses * e.probability;
                    *t.cell_mut(a, b, basis) = CountCell {
                        sent,
                        coincidences: sent * e.gain,
                        errors: sent * e.error_gain(),
                    };
                }
            }
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellBound {
    pub a: IntensityLabel,
    pub b: IntensityLabel,
    pub basis: Basis,
    #[serde(flatten)]
    pub bound: ConfidenceBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyEstimate {
    pub y11_lower: f64,
    /// Feasibility-search cross-check of `y11_lower`.
    pub y11_lower_lp: Option<f64>,
    pub e11_upper: f64,
    pub z_gain_bounds: Vec<CellBound>,
    pub x_error_bounds: Vec<CellBound>,
}

/// One Z-basis cell's contribution to the key rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZCellTerm {
    pub a: IntensityLabel,
    pub b: IntensityLabel,
    /// Probability per slot that both users prepared this cell in Z.
    pub weight: f64,
    pub gain: f64,
    pub error_rate: f64,
    pub q11_lower: f64,
    /// `weight · (q11·(1 − H(e11)) − f·Q·H(E))`.
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    pub pair_id: String,
    /// Secret bits per slot (per pulse pair sent), clamped at zero.
    pub rate_per_pulse: f64,
    pub rate_bps: f64,
    pub estimate: DecoyEstimate,
    pub z_cells: Vec<ZCellTerm>,
    pub epsilon_total: f64,
    pub epsilon_share: f64,
    pub diagnostics: Vec<String>,
}

pub fn rate_to_bps(rate_per_pulse: f64, clock_rate_hz: f64, duty: f64) -> f64 {
    rate_per_pulse.max(0.0) * clock_rate_hz * duty
}

/// Finite-key rate from sifted counts: fluctuation bounds on every cell used,
/// the single-photon yield and phase-error bounds, then the per-cell sum over
/// the nine Z-basis intensity pairs.
pub fn secure_key_rate(table: &CountTable, params: &ProtocolParams) -> Result<KeyRateResult> {
    params.validate()?;
    let eps_share = params.failure_probability / BOUNDED_QUANTITIES as f64;
    let mut diagnostics = Vec::new();

    let bound = |c: &CountCell, observed: f64, diag: &mut Vec<String>, what: &str| -> ConfidenceBound {
        if c.sent < 1.0 {
            diag.push(format!("{what}: no pulses sent"));
            return ConfidenceBound {
                observed: 0.0,
                trials: c.sent,
                lower_rate: 0.0,
                upper_rate: 1.0,
                epsilon_share: eps_share,
            };
        }
        fluctuation_interval(observed.min(c.sent), c.sent, eps_share).expect("validated counts")
    };

    let empty = ConfidenceBound::exact(0.0, 0.0);
    let mut z: CellBounds = [[empty; 3]; 3];
    let mut x: CellBounds = [[empty; 3]; 3];
    let mut z_gain_bounds = Vec::new();
    let mut x_error_bounds = Vec::new();
    for a in IntensityLabel::ALL {
        for b in IntensityLabel::ALL {
            let c = table.cell(a, b, Basis::Z);
            let bz = bound(c, c.coincidences, &mut diagnostics, &format!("Z {a},{b}"));
            z[a.index()][b.index()] = bz;
            z_gain_bounds.push(CellBound { a, b, basis: Basis::Z, bound: bz });
            if a != IntensityLabel::Signal && b != IntensityLabel::Signal {
                let c = table.cell(a, b, Basis::X);
                let bx = bound(c, c.errors, &mut diagnostics, &format!("X {a},{b}"));
                x[a.index()][b.index()] = bx;
                x_error_bounds.push(CellBound { a, b, basis: Basis::X, bound: bx });
            }
        }
    }

    let nu = params.mean_photon_number(IntensityLabel::Decoy);
    let mu = params.mean_photon_number(IntensityLabel::Signal);
    let mut y11 = estimate_y11(&z, nu, mu)?;
    let y11_lp = match lp_y11_lower(&z, nu, mu) {
        Ok(v) => Some(v),
        Err(e) => {
            diagnostics.push(format!("yield bound: {e}"));
            y11 = 0.0;
            None
        }
    };
    if y11 <= 0.0 && !diagnostics.iter().any(|d| d.starts_with("yield bound")) {
        diagnostics.push("yield bound: single-photon yield lower bound is not positive".into());
    }
    let e11 = estimate_e11(&x, nu, y11)?;
    let h11 = binary_entropy(e11)?;

    let f = params.error_correction_efficiency;
    let mut z_cells = Vec::new();
    let mut total = 0.0;
    for a in IntensityLabel::ALL {
        for b in IntensityLabel::ALL {
            let c = table.cell(a, b, Basis::Z);
            let gain = if c.sent > 0.0 { c.coincidences / c.sent } else { 0.0 };
            let error_rate = if c.coincidences > 0.0 {
                (c.errors / c.coincidences).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let weight = params.cell_probability(a, b, Basis::Z);
            let q11 = single_photon_gain(params.mean_photon_number(a), params.mean_photon_number(b), y11);
            let term = weight * (q11 * (1.0 - h11) - f * gain * binary_entropy(error_rate)?);
            total += term;
            z_cells.push(ZCellTerm {
                a,
                b,
                weight,
                gain,
                error_rate,
                q11_lower: q11,
                term,
            });
        }
    }
    if total <= 0.0 && diagnostics.is_empty() {
        diagnostics.push(format!("error-correction cost exceeds secrecy (sum {total:.3e})"));
    }
    let rate = total.max(0.0);
    Ok(KeyRateResult {
        pair_id: table.pair_id.clone(),
        rate_per_pulse: rate,
        rate_bps: rate_to_bps(rate, params.clock_rate_hz, 1.0),
        estimate: DecoyEstimate {
            y11_lower: y11,
            y11_lower_lp: y11_lp,
            e11_upper: e11,
            z_gain_bounds,
            x_error_bounds,
        },
        z_cells,
        epsilon_total: params.failure_probability,
        epsilon_share: eps_share,
        diagnostics,
    })
}
