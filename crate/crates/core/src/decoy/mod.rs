//! Finite-key decoy-state analysis: fluctuation intervals on the observed
//! rates, bounds on the single-photon yield and phase error, and the secure
//! key rate summed over the Z-basis intensity pairs.

pub mod estimate;
pub mod fluctuation;
pub mod keyrate;
pub mod lp;
pub mod tagged;

pub use estimate::{estimate_e11, estimate_y11, lp_y11_lower, single_photon_gain};
pub use fluctuation::{fluctuation_interval, ConfidenceBound};
pub use keyrate::{rate_to_bps, secure_key_rate, CountCell, CountTable, DecoyEstimate, KeyRateResult, ZCellTerm};
pub use tagged::TaggedYieldModel;
