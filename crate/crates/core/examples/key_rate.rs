//! Decoy-state estimate and finite-key rate for each pair as the sample
//! grows, on noise-free expected counts.
//!
//! ```text
//! cargo run --release --example key_rate
//! ```

use mdiqkd::decoy::{secure_key_rate, CountTable};
use mdiqkd::network::{link_for, NetworkConfig};
use mdiqkd::optics::expected_statistics;

fn main() -> mdiqkd::Result<()> {
    let config = NetworkConfig::default();
    let p = &config.protocol;
    for pair in config.pairs() {
        let link = link_for(&config, &pair)?;
        let exp = expected_statistics(p, &link)?;
        println!("{} ({:.1} + {:.1} dB)", link.pair_id, link.channels[0].total_loss_db(), link.channels[1].total_loss_db());
        for hours in [1.0, 2.0, 5.0, 10.0, 20.0, 50.0] {
            let table = CountTable::from_expected(&exp, hours * 3600.0 * p.clock_rate_hz);
            let r = secure_key_rate(&table, p)?;
            println!(
                "  {hours:>5.1} h  y11 >= {:.4e}  e11 <= {:.4}  {:>7.2} bps",
                r.estimate.y11_lower, r.estimate.e11_upper, r.rate_bps
            );
        }
    }

    // the nine Z-cell terms of the longest U1-U2 run
    let link = link_for(&config, &("U1".into(), "U2".into()))?;
    let table = CountTable::from_expected(&expected_statistics(p, &link)?, 50.0 * 3600.0 * p.clock_rate_hz);
    let r = secure_key_rate(&table, p)?;
    println!("\nU1-U2, 50 h");
    for z in &r.z_cells {
        println!(
            "  {:<7} {:<7} Q {:.3e}  E {:.4}  Q11 {:.3e}  term {:+.3e}",
            z.a.to_string(),
            z.b.to_string(),
            z.gain,
            z.error_rate,
            z.q11_lower,
            z.term
        );
    }
    println!("{}", serde_json::to_string_pretty(&r.estimate.z_gain_bounds[4])?);
    Ok(())
}
