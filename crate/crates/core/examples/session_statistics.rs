//! One U1-U2 session: Monte-Carlo statistics against the expectation
//! oracle, cell by cell.
//!
//! ```text
//! cargo run --release --example session_statistics [pulses]
//! ```

use mdiqkd::network::{link_for, NetworkConfig};
use mdiqkd::optics::{expected_statistics, simulate_session};

fn main() -> mdiqkd::Result<()> {
    let pulses: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000_000);
    let config = NetworkConfig::default();
    let link = link_for(&config, &("U1".into(), "U2".into()))?;
    let stats = simulate_session(&config.protocol, &link, pulses, 1)?;
    let exp = expected_statistics(&config.protocol, &link)?;

    println!(
        "{:<7} {:<7} {:<5} {:>10} {:>8} {:>11} {:>11} {:>8} {:>8}",
        "a", "b", "basis", "sent", "coinc", "gain", "oracle", "qber", "oracle"
    );
    for (a, b, basis, c) in stats.iter_cells() {
        let e = exp.cell(a, b, basis);
        println!(
            "{:<7} {:<7} {:<5} {:>10} {:>8} {:>11.3e} {:>11.3e} {:>8.4} {:>8.4}",
            a.to_string(),
            b.to_string(),
            basis.to_string(),
            c.sent,
            c.coincidences,
            c.gain(),
            e.gain,
            c.error_rate(),
            e.error_rate
        );
    }
    println!("\n{}", stats.to_records_string());
    Ok(())
}
