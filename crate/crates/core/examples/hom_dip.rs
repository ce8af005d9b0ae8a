//! Hong-Ou-Mandel dip against the wavelength difference of the two lasers.
//!
//! Prints the Monte-Carlo coincidence value next to its expectation, then
//! the same dip seen through a temperature scan of the first laser.
//!
//! ```text
//! cargo run --release --example hom_dip
//! ```

use mdiqkd::calibration::{scan_dip, ControllerState, FeedbackConfig, Plant};
use mdiqkd::optics::{expected_hom_coincidence_value, field_detectors, hom_coincidence_value, DistinguishabilityState};

fn main() -> mdiqkd::Result<()> {
    let det = field_detectors();
    let fb = FeedbackConfig::default();
    println!("{:>8} {:>8} {:>10} {:>10}", "dl_pm", "zeta", "monte", "expected");
    for k in -8..=8 {
        let mut d = DistinguishabilityState::indistinguishable();
        d.delta_wavelength_pm = k as f64;
        let mc = hom_coincidence_value(&d, fb.hom_intensity, &det, 1_000_000, k as u64 + 100)?;
        let ex = expected_hom_coincidence_value(&d, fb.hom_intensity, &det)?;
        println!("{:>8.1} {:>8.4} {:>10.4} {:>10.4}", d.delta_wavelength_pm, d.mode_overlap(), mc, ex);
    }

    // the second laser sits 12 pm off; scanning the first finds it
    let mut plant = Plant::aligned(det, &fb, 3);
    plant.wavelength_offset_pm = 12.0;
    let ctrl = ControllerState::new(&fb);
    let scan = scan_dip(
        |t| plant.measure_hom(&ctrl, t, fb.hom_intensity, fb.hom_pulses),
        fb.nominal_temperature_c,
        &fb.scan,
    )?;
    let dip = scan.dip.expect("aligned polarization gives a dip");
    println!(
        "\nscan: {} points, dip {:.4} at {:.4} C (expected {:.4} C)",
        scan.points.len(),
        dip.min_value,
        dip.temperature_c,
        fb.nominal_temperature_c + 12.0 / fb.wavelength_slope_pm_per_c
    );
    Ok(())
}
