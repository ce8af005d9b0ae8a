//! Single-photon yield and phase-error bounds from three-intensity decoy
//! statistics.
//!
//! Both users draw from the same intensity set `{0, ν, μ}`. Cell bounds are
//! indexed `[a][b]` in label order (vacuum, decoy, signal) and bound the
//! per-pulse-pair rate: gain for the yield, errors per sent pulse pair for
//! the phase error.

use super::fluctuation::ConfidenceBound;
use super::lp::{minimize, Constraint, LpOutcome, Relation};
use crate::error::{Error, Result};
use crate::model::poisson;

pub type CellBounds = [[ConfidenceBound; 3]; 3];

/// Highest photon number per user kept explicitly in the feasibility search.
pub const LP_MAX_PHOTONS: u32 = 7;

fn check_intensities(decoy: f64, signal: f64) -> Result<()> {
    if !(decoy > 0.0 && decoy < signal && signal.is_finite()) {
        return Err(Error::domain("decoy", decoy, "need 0 < decoy < signal"));
    }
    Ok(())
}

/// Rate bound to use for a term with coefficient `c` in a lower bound.
fn pick_for_lower(c: f64, b: &ConfidenceBound) -> f64 {
    if c >= 0.0 {
        c * b.lower_rate
    } else {
        c * b.upper_rate
    }
}

fn pick_for_upper(c: f64, b: &ConfidenceBound) -> f64 {
    if c >= 0.0 {
        c * b.upper_rate
    } else {
        c * b.lower_rate
    }
}

/// Vacuum-subtracted combination `Q̃ᵃᵃ = Qᵃᵃ − e⁻ᵃQ⁰ᵃ − e⁻ᵃQᵃ⁰ + e⁻²ᵃQ⁰⁰`
/// as `(cell, coefficient)` terms.
fn subtracted(k: usize, x: f64) -> [((usize, usize), f64); 4] {
    let e = (-x).exp();
    [((k, k), 1.0), ((0, k), -e), ((k, 0), -e), ((0, 0), e * e)]
}

/// Analytic lower bound on the (1,1) yield from the Z-basis gains.
///
/// Uses `[μ³e^{2ν}Q̃^{νν} − ν³e^{2μ}Q̃^{μμ}] / (μ²ν²(μ−ν))`, in which every
/// multiphoton term enters with a non-positive coefficient. Each cell takes
/// whichever side of its interval keeps the result a lower bound. Negative
/// results clamp to zero.
pub fn estimate_y11(z: &CellBounds, decoy: f64, signal: f64) -> Result<f64> {
    check_intensities(decoy, signal)?;
    let (mu, nu) = (signal, decoy);
    let scale_nu = mu.powi(3) * (2.0 * nu).exp();
    let scale_mu = -nu.powi(3) * (2.0 * mu).exp();
    let mut acc = [[0.0f64; 3]; 3];
    for ((a, b), c) in subtracted(1, nu) {
        acc[a][b] += scale_nu * c;
    }
    for ((a, b), c) in subtracted(2, mu) {
        acc[a][b] += scale_mu * c;
    }
    let mut total = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            if acc[a][b] != 0.0 {
                total += pick_for_lower(acc[a][b], &z[a][b]);
            }
        }
    }
    let y = total / (mu * mu * nu * nu * (mu - nu));
    Ok(y.clamp(0.0, 1.0))
}

/// Upper bound on the single-photon phase error rate from the X-basis
/// error-per-pulse bounds of the `νν`, `0ν`, `ν0` and `00` cells.
///
/// Returns 0.5 when `y11_lower` is zero.
pub fn estimate_e11(x_errors: &CellBounds, decoy: f64, y11_lower: f64) -> Result<f64> {
    if !(decoy > 0.0 && decoy.is_finite()) {
        return Err(Error::domain("decoy", decoy, "need decoy > 0"));
    }
    if !(y11_lower > 0.0) {
        return Ok(0.5);
    }
    let mut numerator = 0.0;
    for ((a, b), c) in subtracted(1, decoy) {
        numerator += pick_for_upper(c, &x_errors[a][b]);
    }
    let p1 = poisson(decoy, 1);
    let e = numerator / (p1 * p1 * y11_lower);
    Ok(e.clamp(0.0, 0.5))
}

/// `P₁(a)·P₁(b)·y11`; zero if either side is vacuum.
pub fn single_photon_gain(a: f64, b: f64, y11_lower: f64) -> f64 {
    poisson(a, 1) * poisson(b, 1) * y11_lower
}

/// Feasibility-search lower bound on the (1,1) yield: minimise `Y₁₁` over
/// all yields `Y_nm ∈ [0, 1]` with `n, m ≤ 7` consistent with every Z-cell
/// gain interval. The omitted photon-number tail widens each lower
/// constraint by its Poisson mass.
pub fn lp_y11_lower(z: &CellBounds, decoy: f64, signal: f64) -> Result<f64> {
    check_intensities(decoy, signal)?;
    let means = [0.0, decoy, signal];
    let k = (LP_MAX_PHOTONS + 1) as usize;
    let idx = |n: usize, m: usize| n * k + m;
    let mut constraints = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            let pa: Vec<f64> = (0..k as u32).map(|n| poisson(means[a], n)).collect();
            let pb: Vec<f64> = (0..k as u32).map(|n| poisson(means[b], n)).collect();
            let mut coeff = vec![0.0; k * k];
            for n in 0..k {
                for m in 0..k {
                    coeff[idx(n, m)] = pa[n] * pb[m];
                }
            }
            let tail = (1.0 - pa.iter().sum::<f64>() * pb.iter().sum::<f64>()).max(0.0);
            constraints.push(Constraint {
                coefficients: coeff.clone(),
                relation: Relation::Le,
                rhs: z[a][b].upper_rate,
            });
            let lower = z[a][b].lower_rate - tail;
            if lower > 0.0 {
                constraints.push(Constraint {
                    coefficients: coeff,
                    relation: Relation::Ge,
                    rhs: lower,
                });
            }
        }
    }
    for j in 0..k * k {
        let mut c = vec![0.0; k * k];
        c[j] = 1.0;
        constraints.push(Constraint {
            coefficients: c,
            relation: Relation::Le,
            rhs: 1.0,
        });
    }
    let mut objective = vec![0.0; k * k];
    objective[idx(1, 1)] = 1.0;
    match minimize(&objective, &constraints) {
        LpOutcome::Optimal { value, .. } => Ok(value.clamp(0.0, 1.0)),
        LpOutcome::Infeasible => Err(Error::DegenerateStatistics(
            "gain bounds are mutually inconsistent".into(),
        )),
        LpOutcome::Unbounded => unreachable!("yields are boxed in [0, 1]"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoy::fluctuation::fluctuation_interval;

    const NU: f64 = 0.1;
    const MU: f64 = 0.33;

    /// Gains from a yield table `y(n, m)` summed to high photon number.
    fn gains_from_yields(y: impl Fn(u32, u32) -> f64) -> [[f64; 3]; 3] {
        let means = [0.0, NU, MU];
        let mut q = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                for n in 0..30 {
                    for m in 0..30 {
                        q[a][b] += poisson(means[a], n) * poisson(means[b], m) * y(n, m);
                    }
                }
            }
        }
        q
    }

    fn exact_bounds(q: &[[f64; 3]; 3]) -> CellBounds {
        q.map(|row| row.map(|g| ConfidenceBound::exact(g, 1.0)))
    }

    /// A lossy-link yield table: `1 − (1 − t)ⁿ` arrival per side, a quarter
    /// of two-sided arrivals accepted, a small dark floor.
    fn toy_yield(n: u32, m: u32) -> f64 {
        let (ta, tb, y0) = (0.1, 0.04, 1e-6);
        let arr = |t: f64, k: u32| 1.0 - (1.0 - t).powi(k as i32);
        y0 + (1.0 - y0) * 0.25 * arr(ta, n) * arr(tb, m)
    }

    #[test]
    fn zero_gains_give_zero() {
        let z = exact_bounds(&[[0.0; 3]; 3]);
        assert_eq!(estimate_y11(&z, NU, MU).unwrap(), 0.0);
        assert_eq!(lp_y11_lower(&z, NU, MU).unwrap(), 0.0);
    }

    #[test]
    fn analytic_bound_is_sound_and_tight_on_exact_gains() {
        let q = gains_from_yields(toy_yield);
        let truth = toy_yield(1, 1);
        let y = estimate_y11(&exact_bounds(&q), NU, MU).unwrap();
        assert!(y <= truth * (1.0 + 1e-12), "{y} > {truth}");
        assert!(y >= 0.8 * truth, "{y} < 0.8 × {truth}");
    }

    /// A yield table that only depends on the (1,1) entry is recovered
    /// exactly, which pins down the algebra of the analytic bound.
    #[test]
    fn analytic_bound_exact_when_only_y11_present() {
        let q = gains_from_yields(|n, m| if n == 1 && m == 1 { 0.3 } else { 0.0 });
        assert_close!(estimate_y11(&exact_bounds(&q), NU, MU).unwrap(), 0.3, 1e-12);
    }

    #[test]
    fn lp_and_analytic_agree_within_fluctuation_width() {
        let q = gains_from_yields(toy_yield);
        let n = 1e9;
        let z: CellBounds = q.map(|row| row.map(|g| fluctuation_interval(g * n, n, 1e-10 / 13.0).unwrap()));
        let analytic = estimate_y11(&z, NU, MU).unwrap();
        let lp = lp_y11_lower(&z, NU, MU).unwrap();
        let truth = toy_yield(1, 1);
        assert!(lp <= truth && analytic <= truth);
        let width = z[1][1].width() / (NU * NU * (-2.0 * NU).exp());
        assert!((lp - analytic).abs() <= width, "{lp} vs {analytic} (width {width})");
    }

    #[test]
    fn lp_reports_inconsistent_bounds() {
        let mut z = exact_bounds(&gains_from_yields(toy_yield));
        // νν gain above what Y ≤ 1 allows
        z[1][1] = ConfidenceBound::exact(0.9, 1.0);
        assert!(lp_y11_lower(&z, NU, MU).is_err());
    }

    #[test]
    fn e11_bounds() {
        let q = gains_from_yields(toy_yield);
        // phase errors: 3% on (1,1), coin flips whenever a side is empty,
        // 25% on multiphoton pairs
        let e = |n: u32, m: u32| {
            if n == 0 || m == 0 {
                0.5
            } else if n == 1 && m == 1 {
                0.03
            } else {
                0.25
            }
        };
        let t = gains_from_yields(|n, m| toy_yield(n, m) * e(n, m));
        let y_lo = estimate_y11(&exact_bounds(&q), NU, MU).unwrap();
        let e11 = estimate_e11(&exact_bounds(&t), NU, y_lo).unwrap();
        assert!(e11 >= 0.03, "{e11}");
        assert!(e11 < 0.5);
        assert_eq!(estimate_e11(&exact_bounds(&t), NU, 0.0).unwrap(), 0.5);
        // no errors anywhere, no dark counts → zero
        assert_eq!(estimate_e11(&exact_bounds(&[[0.0; 3]; 3]), NU, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn single_photon_gain_examples() {
        assert_eq!(single_photon_gain(0.0, MU, 0.7), 0.0);
        assert_close!(single_photon_gain(MU, MU, 1.0), 0.05629, 1e-5);
        assert_close!(single_photon_gain(NU, MU, 0.5), 0.010733, 1e-5);
    }
}
