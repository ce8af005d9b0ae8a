use serde::{Deserialize, Serialize};

use super::ScanConfig;
use crate::error::{CalibrationError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub temperature_c: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipFit {
    pub temperature_c: f64,
    /// Lowest measured value, not the fitted vertex.
    pub min_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavelengthScan {
    /// Coarse points followed by fine points, in measurement order.
    pub points: Vec<ScanPoint>,
    pub min_value: f64,
    /// `None` when no point fell below the dip threshold.
    pub dip: Option<DipFit>,
}

fn grid(center: f64, half: f64, step: f64) -> Vec<f64> {
    let n = (half / step).round() as i64;
    (-n..=n).map(|k| center + k as f64 * step).collect()
}

fn lowest(points: &[ScanPoint]) -> ScanPoint {
    *points
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("scan grids are never empty")
}

/// Vertex of the parabola through three points, kept inside their span.
/// Falls back to the lowest point when the three do not open upward.
fn parabola_vertex(p: [ScanPoint; 3]) -> f64 {
    let [(x0, y0), (x1, y1), (x2, y2)] = p.map(|q| (q.temperature_c, q.value));
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    let lo = x0.min(x1).min(x2);
    let hi = x0.max(x1).max(x2);
    if !(a > 0.0) || !denom.is_finite() || denom == 0.0 {
        return lowest(&p).temperature_c;
    }
    (-b / (2.0 * a)).clamp(lo, hi)
}

/// Measure the dip curve around `center_c`: a coarse grid over the whole
/// range, then a fine grid around the coarse minimum if it is deep enough.
/// `hom` returns the HOM coincidence value at a commanded temperature.
pub fn scan_dip(mut hom: impl FnMut(f64) -> Result<f64>, center_c: f64, config: &ScanConfig) -> Result<WavelengthScan> {
    if !(config.coarse_step_c > 0.0 && config.fine_step_c > 0.0 && config.half_range_c > 0.0) {
        return Err(CalibrationError::Scan("steps and range must be > 0".into()).into());
    }
    if !center_c.is_finite() {
        return Err(Error::domain("center_c", center_c, "must be finite"));
    }
    let mut points = Vec::new();
    for t in grid(center_c, config.half_range_c, config.coarse_step_c) {
        points.push(ScanPoint {
            temperature_c: t,
            value: hom(t)?,
        });
    }
    let coarse_min = lowest(&points);
    if coarse_min.value > config.dip_threshold {
        return Ok(WavelengthScan {
            points,
            min_value: coarse_min.value,
            dip: None,
        });
    }
    let (lo, hi) = (center_c - config.half_range_c, center_c + config.half_range_c);
    let mut fine = Vec::new();
    for t in grid(coarse_min.temperature_c, config.fine_half_range_c, config.fine_step_c) {
        if (lo..=hi).contains(&t) {
            fine.push(ScanPoint {
                temperature_c: t,
                value: hom(t)?,
            });
        }
    }
    let mut sorted = fine.clone();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value));
    let best = sorted[0];
    let t = if sorted.len() >= 3 {
        parabola_vertex([sorted[0], sorted[1], sorted[2]])
    } else {
        best.temperature_c
    };
    points.extend_from_slice(&fine);
    let min_value = lowest(&points).value;
    Ok(WavelengthScan {
        points,
        min_value,
        dip: Some(DipFit {
            temperature_c: t,
            min_value: best.value,
        }),
    })
}

/// Temperature of the dip centre, or `DipNotFound` when the curve is flat.
pub fn wavelength_calibrate(hom: impl FnMut(f64) -> Result<f64>, center_c: f64, config: &ScanConfig) -> Result<f64> {
    let scan = scan_dip(hom, center_c, config)?;
    match scan.dip {
        Some(d) => Ok(d.temperature_c),
        None => Err(CalibrationError::DipNotFound {
            min_value: scan.min_value,
            threshold: config.dip_threshold,
        }
        .into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{ControllerState, FeedbackConfig, Plant};
    use crate::optics::{expected_hom_coincidence_value, field_detectors};

    fn exact_source<'a>(plant: &'a Plant, ctrl: &ControllerState, intensity: f64) -> impl FnMut(f64) -> Result<f64> + 'a {
        let ctrl = ctrl.clone();
        move |t| {
            let mut d = plant.residual(&ctrl);
            d.delta_wavelength_pm = plant.delta_wavelength_at(t, &ctrl);
            expected_hom_coincidence_value(&d, intensity, &plant.detectors)
        }
    }

    #[test]
    fn vertex_of_exact_parabola() {
        let f = |x: f64| ScanPoint {
            temperature_c: x,
            value: 2.0 * (x - 0.3) * (x - 0.3) + 0.5,
        };
        assert_close!(parabola_vertex([f(0.0), f(0.5), f(1.0)]), 0.3, 1e-12);
        // downward opening falls back to the lowest point
        let g = |x: f64| ScanPoint {
            temperature_c: x,
            value: -x * x,
        };
        assert_eq!(parabola_vertex([g(0.0), g(0.5), g(1.0)]), 1.0);
    }

    #[test]
    fn aligned_noiseless_dip_at_nominal() {
        let c = FeedbackConfig::default();
        let p = Plant::aligned(field_detectors(), &c, 0);
        let s = ControllerState::new(&c);
        let t = wavelength_calibrate(exact_source(&p, &s, 0.1), 25.0, &c.scan).unwrap();
        assert!((t - 25.0).abs() <= c.scan.fine_step_c, "{t}");
    }

    #[test]
    fn offset_recovered_at_slope() {
        let c = FeedbackConfig::default();
        let mut p = Plant::aligned(field_detectors(), &c, 0);
        let s = ControllerState::new(&c);
        for offset in [8.0, -37.0, 80.0] {
            p.wavelength_offset_pm = offset;
            let t = wavelength_calibrate(exact_source(&p, &s, 0.1), 25.0, &c.scan).unwrap();
            assert!((t - 25.0 - offset / 80.0).abs() <= c.scan.fine_step_c, "{offset}: {t}");
        }
    }

    #[test]
    fn noisy_scan_lands_within_fraction_of_a_picometre() {
        let c = FeedbackConfig::default();
        for seed in 0..5 {
            let mut p = Plant::aligned(field_detectors(), &c, seed);
            p.wavelength_offset_pm = 3.3;
            let s = ControllerState::new(&c);
            let mut q = p.clone();
            let t = wavelength_calibrate(|t| q.measure_hom(&s, t, c.hom_intensity, c.hom_pulses), 25.0, &c.scan).unwrap();
            let dl = p.delta_wavelength_at(t, &s);
            assert!(dl.abs() < 0.5, "seed {seed}: {dl} pm");
        }
    }

    #[test]
    fn flat_curve_is_dip_not_found() {
        let c = FeedbackConfig::default();
        let mut p = Plant::aligned(field_detectors(), &c, 0);
        // crossed polarizers: nothing interferes
        p.polarization_disturbance_rad[0] = [std::f64::consts::FRAC_PI_2, 0.0];
        let s = ControllerState::new(&c);
        let mut q = p.clone();
        let e = wavelength_calibrate(|t| q.measure_hom(&s, t, c.hom_intensity, c.hom_pulses), 25.0, &c.scan).unwrap_err();
        assert!(matches!(e, Error::Calibration(CalibrationError::DipNotFound { .. })), "{e}");
    }
}
