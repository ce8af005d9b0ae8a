//! Simulation and analysis engine for measurement-device-independent QKD over
//! an untrusted-relay star network.
//!
//! The crate is organised the way the experiment is:
//!
//! - [`model`]: intensities, bases, protocol parameters, closed-form primitives.
//! - [`optics`]: weak-coherent time-bin sources, lossy channels, the relay's
//!   beam-splitter Bell-state measurement with threshold detectors, a
//!   Monte-Carlo session simulator and a quadrature expectation oracle, and
//!   the Hong-Ou-Mandel coincidence measurement.
//! - [`decoy`]: fluctuation bounds, decoy-state single-photon estimation and
//!   the finite-key secure key rate.
//! - [`calibration`]: phase, wavelength, timing and polarization feedback
//!   loops acting on a drifting simulated plant.
//! - [`network`]: topology, switch scheduling, per-session lifecycle, sifting,
//!   merging and run reports.
//! - [`cli`]: the commands behind the `mdiqkd` binary.
//!
//! Runnable walkthroughs of each capability live in `examples/`.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }};
}

pub mod calibration;
pub mod cli;
pub mod decoy;
pub mod error;
pub mod model;
pub mod network;
pub mod optics;
pub(crate) mod rng;

pub use error::{CalibrationError, Error, Result};
pub use model::{Basis, IntensityLabel, ProtocolParams};
