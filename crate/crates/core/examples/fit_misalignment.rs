//! Fit the source misalignment to the field key rates.
//!
//! Runs the accumulated three-pair plan of a config (the field plan by
//! default) in expectation mode for every
//! misalignment on a 0.05% grid in [0, 3%] and reports the value minimising
//! the squared log-ratio to the target rates. Calibration and drift
//! tracking do not depend on misalignment, so each session is prepared once.
//!
//! ```text
//! cargo run --release --example fit_misalignment [configs/field.json] [seed]
//! ```

use mdiqkd::network::{
    accumulate_session, link_for, plan_for, prepare_session, summarize, NetworkConfig, SimulationMode,
};
use rayon::prelude::*;

/// (pair, target bps)
const TARGETS: [(&str, f64); 3] = [("U1-U2", 38.8), ("U1-U3", 29.1), ("U3-U2", 16.5)];

fn main() -> mdiqkd::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/field.json".into());
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut config = NetworkConfig::from_path(path.as_ref())?;
    config.schedule.mode = SimulationMode::Expected;
    config.validate()?;

    let plan = plan_for(&config, seed)?;
    eprintln!("preparing {} sessions", plan.sessions.len());
    let prepared: Vec<_> = plan.sessions.par_iter().map(|p| prepare_session(&config, p)).collect();
    let failed = prepared.iter().filter(|p| p.failure.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} sessions failed calibration");
    }

    let mut best = (f64::INFINITY, 0.0);
    for step in 0..=60 {
        let m = step as f64 * 0.0005;
        let mut c = config.clone();
        for u in &mut c.topology.users {
            u.channel.misalignment = m;
        }
        let outcomes = prepared
            .par_iter()
            .map(|p| accumulate_session(&c, p, &link_for(&c, &p.planned.pair)?))
            .collect::<mdiqkd::Result<Vec<_>>>()?;
        let pairs = summarize(&c, &outcomes)?;
        let mut cost = 0.0;
        print!("m={m:.4}");
        for (id, target) in TARGETS {
            let bps = pairs
                .iter()
                .find(|p| p.pair_id == id)
                .and_then(|p| p.key_rate.as_ref())
                .map_or(0.0, |r| r.rate_bps);
            print!("  {id} {bps:7.2}");
            cost += if bps > 0.0 { (bps / target).ln().powi(2) } else { f64::INFINITY };
        }
        println!("  cost {cost:.4}");
        if cost < best.0 {
            best = (cost, m);
        }
    }
    println!("best misalignment {:.4} (cost {:.4})", best.1, best.0);
    Ok(())
}
