//! Commands behind the `mdiqkd` binary.
//!
//! Every command reads one JSON config (defaults when `--config` is absent)
//! and writes plain files into `--out`:
//!
//! | command    | files                                                                  |
//! |------------|------------------------------------------------------------------------|
//! | `simulate` | `report.json`, `meta.json`, `session_rates.csv`, `pair_rates.csv`, `sessions/*.stats`, `sessions/*.trace.csv`, `sessions/*.sifted.csv`, `pairs/*.stats` |
//! | `keyrate`  | `keyrate.json`                                                         |
//! | `hom-scan` | `hom_scan.csv`                                                         |
//! | `calibrate`| `calibration.json`, `calibration.trace.csv`                            |
//! | `report`   | `session_rates.csv`, `pair_rates.csv` from an existing `report.json`   |
//!
//! All text is UTF-8 with LF line endings and comma separators. Errors are
//! printed as one line, `error: ...`; config errors name the offending
//! field and exit with status 2, other failures with 1.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::calibration::{scan_dip, write_trace, ControllerState, Plant, WavelengthScan};
use crate::decoy::{secure_key_rate, CountTable, KeyRateResult};
use crate::error::{CalibrationError, Error, Result};
use crate::network::{
    pair_id, plan_for, prepare_session, run_network, write_sifted, CalibrationSummary, NetworkConfig, PlannedSession,
    RunMeta, RunReport, TrackingSummary,
};
use crate::optics::SessionStatistics;
use crate::rng::derive_seed;

#[derive(Debug, Parser)]
#[command(name = "mdiqkd", version, about = "MDI-QKD star network simulator and key-rate engine")]
pub struct Cli {
    /// JSON config; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Override `schedule.desk_scale`.
    #[arg(long, global = true)]
    pub scale: Option<f64>,
    /// Progress on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scheduled network and write the report.
    Simulate,
    /// Key rate of a statistics record file.
    Keyrate {
        #[arg(long)]
        stats: PathBuf,
        /// Pulses represented by each simulated pulse (`sample_weight` in
        /// the report).
        #[arg(long, default_value_t = 1.0)]
        weight: f64,
    },
    /// Scan the first laser's temperature and record the HOM dip.
    HomScan {
        /// Wavelength offset of the second laser, pm.
        #[arg(long, default_value_t = 0.0)]
        offset_pm: f64,
        /// Half-width of the scan, degrees C (config value when omitted).
        #[arg(long)]
        half_range_c: Option<f64>,
        /// Cross the polarizations so the pulses never interfere.
        #[arg(long)]
        distinguishable: bool,
    },
    /// One switch event for a pair: kick, full recalibration, tracking.
    Calibrate {
        /// Pair as `A-B`; the first configured pair when omitted.
        #[arg(long)]
        pair: Option<String>,
        /// Tracking time after the recalibration, seconds.
        #[arg(long, default_value_t = 0.0)]
        duration_s: f64,
    },
    /// Re-emit plot tables from an existing `report.json` in `--out`.
    Report,
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        _ => 1,
    }
}

/// Parse `args`, run, print any error as a single line; returns the exit
/// status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            exit_code(&e)
        }
    }
}

/// Run a parsed command. `Ok(code)` carries a nonzero status for
/// outcomes that still produced output, such as a scan without a dip.
pub fn run(cli: &Cli) -> Result<i32> {
    let mut config = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.scale {
        config.schedule.desk_scale = s;
    }
    config.validate()?;
    match &cli.command {
        Command::Simulate => simulate(&config, cli).map(|_| 0),
        Command::Keyrate { stats, weight } => keyrate(&config, cli, stats, *weight).map(|_| 0),
        Command::HomScan {
            offset_pm,
            half_range_c,
            distinguishable,
        } => hom_scan(&config, cli, *offset_pm, *half_range_c, *distinguishable),
        Command::Calibrate { pair, duration_s } => calibrate(&config, cli, pair.as_deref(), *duration_s).map(|_| 0),
        Command::Report => {
            let report: RunReport = serde_json::from_reader(BufReader::new(open(&cli.out.join("report.json"))?))?;
            write_rate_tables(&report, &cli.out)?;
            print_summary(&report);
            Ok(0)
        }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<NetworkConfig> {
    match path {
        Some(p) => NetworkConfig::from_path(p),
        None => Ok(NetworkConfig::default()),
    }
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Run the network and write every artifact. Returns the report.
pub fn simulate(config: &NetworkConfig, cli: &Cli) -> Result<RunReport> {
    let started = Instant::now();
    if cli.verbose {
        eprintln!("simulating with seed {} at desk scale {}", cli.seed, config.schedule.desk_scale);
    }
    let report = run_network(config, cli.seed)?;
    let out = &cli.out;
    fs::create_dir_all(out)?;
    write_json(&out.join("report.json"), &report)?;
    for s in &report.sessions {
        let stem = format!("session_{:04}_{}", s.index, s.pair_id);
        if let Some(st) = &s.statistics {
            let mut w = create(&out.join("sessions").join(format!("{stem}.stats")))?;
            st.write_records(&mut w, true)?;
            w.flush()?;
        }
        if !s.trace.is_empty() {
            let mut w = create(&out.join("sessions").join(format!("{stem}.trace.csv")))?;
            write_trace(&mut w, &s.trace)?;
            w.flush()?;
        }
        if !s.sifted.is_empty() {
            let mut w = create(&out.join("sessions").join(format!("{stem}.sifted.csv")))?;
            write_sifted(&mut w, &s.sifted)?;
            w.flush()?;
        }
        if cli.verbose {
            let bps = s.key_rate.as_ref().map_or(0.0, |r| r.rate_bps);
            eprintln!("session {} {} valid={} {:.2} bps", s.index, s.pair_id, s.valid, bps);
        }
    }
    for p in &report.pairs {
        if let Some(st) = &p.statistics {
            let mut w = create(&out.join("pairs").join(format!("{}.stats", p.pair_id)))?;
            st.write_records(&mut w, true)?;
            w.flush()?;
        }
    }
    write_rate_tables(&report, out)?;
    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        wall_clock_s: started.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };
    write_json(&out.join("meta.json"), &meta)?;
    print_summary(&report);
    Ok(report)
}

/// `session_rates.csv` and `pair_rates.csv`. Weights are written with
/// full precision so `keyrate --weight` reproduces the in-run rates.
pub fn write_rate_tables(report: &RunReport, out: &Path) -> Result<()> {
    let mut w = create(&out.join("session_rates.csv"))?;
    writeln!(w, "index,pair_id,start_s,duration_s,valid,pulses,sample_weight,rate_bps")?;
    for s in &report.sessions {
        let bps = s.key_rate.as_ref().map_or(0.0, |r| r.rate_bps);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.index, s.pair_id, s.start_s, s.duration_s, s.valid, s.pulses, s.sample_weight, bps
        )?;
    }
    w.flush()?;
    let mut w = create(&out.join("pair_rates.csv"))?;
    writeln!(w, "pair_id,sessions,valid_sessions,valid_duration_s,pulses,sample_weight,rate_bps")?;
    for p in &report.pairs {
        let bps = p.key_rate.as_ref().map_or(0.0, |r| r.rate_bps);
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.pair_id, p.sessions, p.valid_sessions, p.valid_duration_s, p.pulses, p.sample_weight, bps
        )?;
    }
    w.flush()?;
    Ok(())
}

fn print_summary(report: &RunReport) {
    for p in &report.pairs {
        let bps = p.key_rate.as_ref().map_or(0.0, |r| r.rate_bps);
        println!(
            "{}  sessions {}/{}  {:.2} h  {:.3} bps",
            p.pair_id,
            p.valid_sessions,
            p.sessions,
            p.valid_duration_s / 3600.0,
            bps
        );
    }
}

pub fn keyrate(config: &NetworkConfig, cli: &Cli, stats: &Path, weight: f64) -> Result<KeyRateResult> {
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(Error::config("weight", "must be > 0"));
    }
    let st = SessionStatistics::read_records(BufReader::new(open(stats)?))?;
    let result = secure_key_rate(&CountTable::from_statistics(&st, weight), &config.protocol)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    if cli.verbose {
        eprintln!("{}: {:.4} bps", result.pair_id, result.rate_bps);
    }
    write_json(&cli.out.join("keyrate.json"), &result)?;
    Ok(result)
}

/// Outcome of `hom-scan`, returned for callers that want the curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomScanResult {
    pub scan: WavelengthScan,
    pub true_dip_c: f64,
}

/// Scan and write `hom_scan.csv`; exit status 3 if no dip was found.
pub fn hom_scan(
    config: &NetworkConfig,
    cli: &Cli,
    offset_pm: f64,
    half_range_c: Option<f64>,
    distinguishable: bool,
) -> Result<i32> {
    let result = hom_scan_curve(config, cli.seed, offset_pm, half_range_c, distinguishable)?;
    let scan = &result.scan;
    let lowest = scan
        .points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .map(|(i, _)| i);
    let mut sorted: Vec<(usize, _)> = scan.points.iter().enumerate().collect();
    sorted.sort_by(|a, b| a.1.temperature_c.total_cmp(&b.1.temperature_c));
    let mut w = create(&cli.out.join("hom_scan.csv"))?;
    writeln!(w, "temperature_c,coincidence_value,is_minimum")?;
    for (i, p) in sorted {
        writeln!(w, "{},{},{}", p.temperature_c, p.value, Some(i) == lowest)?;
    }
    w.flush()?;
    match &scan.dip {
        Some(d) => {
            println!(
                "dip at {:.4} C (value {:.4}); true {:.4} C",
                d.temperature_c, d.min_value, result.true_dip_c
            );
            Ok(0)
        }
        None => {
            let err = CalibrationError::DipNotFound {
                min_value: scan.min_value,
                threshold: config.feedback.scan.dip_threshold,
            };
            eprintln!("error: {err}");
            Ok(3)
        }
    }
}

pub fn hom_scan_curve(
    config: &NetworkConfig,
    seed: u64,
    offset_pm: f64,
    half_range_c: Option<f64>,
    distinguishable: bool,
) -> Result<HomScanResult> {
    let fb = &config.feedback;
    let mut plant = Plant::aligned(config.topology.relay.detectors, fb, derive_seed(seed, 7));
    plant.wavelength_offset_pm = offset_pm;
    if distinguishable {
        plant.polarization_disturbance_rad[0][0] = std::f64::consts::FRAC_PI_2;
    }
    let ctrl = ControllerState::new(fb);
    let mut scan_cfg = fb.scan;
    if let Some(h) = half_range_c {
        scan_cfg.half_range_c = h;
    }
    let center = fb.nominal_temperature_c;
    let pulses = fb.hom_pulses;
    let scan = scan_dip(
        |t| plant.measure_hom(&ctrl, t, fb.hom_intensity, pulses),
        center,
        &scan_cfg,
    )?;
    Ok(HomScanResult {
        scan,
        true_dip_c: center + offset_pm / fb.wavelength_slope_pm_per_c,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateResult {
    pub pair_id: String,
    pub failure: Option<String>,
    pub calibration: Option<CalibrationSummary>,
    pub tracking: Option<TrackingSummary>,
}

pub fn calibrate(config: &NetworkConfig, cli: &Cli, pair: Option<&str>, duration_s: f64) -> Result<CalibrateResult> {
    let pair = match pair {
        Some(p) => {
            let (a, b) = p
                .split_once('-')
                .ok_or_else(|| Error::config("pair", format!("expected A-B, got {p}")))?;
            (a.to_string(), b.to_string())
        }
        None => config
            .pairs()
            .into_iter()
            .next()
            .ok_or_else(|| Error::config("schedule.pairs", "no pairs"))?,
    };
    for id in [&pair.0, &pair.1] {
        if config.topology.user(id).is_none() {
            return Err(Error::config("pair", format!("unknown user {id}")));
        }
    }
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(Error::config("duration_s", "must be >= 0"));
    }
    let seed = plan_for(config, cli.seed)?
        .sessions
        .first()
        .map_or(derive_seed(cli.seed, 1), |s| s.seed);
    let planned = PlannedSession {
        index: 0,
        pair: pair.clone(),
        start_s: 0.0,
        duration_s,
        seed,
    };
    let prep = prepare_session(config, &planned);
    let result = CalibrateResult {
        pair_id: pair_id(&pair.0, &pair.1),
        failure: prep.failure.clone(),
        calibration: prep.calibration,
        tracking: prep.tracking,
    };
    write_json(&cli.out.join("calibration.json"), &result)?;
    let mut w = create(&cli.out.join("calibration.trace.csv"))?;
    write_trace(&mut w, &prep.trace)?;
    w.flush()?;
    match (&result.failure, &result.calibration) {
        (Some(f), _) => println!("{}: calibration failed: {f}", result.pair_id),
        (None, Some(c)) => println!(
            "{}: {} commands in {:.1} s, overlap {:.4}",
            result.pair_id,
            c.commands_issued,
            c.elapsed_s,
            c.residual.mode_overlap()
        ),
        (None, None) => {}
    }
    Ok(result)
}
