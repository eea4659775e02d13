//! Differentially private broadband-coverage estimates per zip code.
//!
//! The pipeline privatizes four device counts per zone with the Laplace
//! mechanism, clamps negatives, derives a coverage fraction from the noisy
//! counts and attaches error ranges obtained by re-noising the released
//! counts. Nothing downstream of [`release::privatize_record`] ever sees the
//! true counts, so the error ranges cost no additional privacy budget.
//!
//! Modules:
//!
//! - [`mechanism`]: Laplace sampling with counter-based per-stream seeds.
//! - [`accountant`]: sequential/parallel composition and a budget ledger.
//! - [`release`]: the coverage formula and the per-zone release.
//! - [`errorsim`]: simulated error ranges and population buckets.
//! - [`synth`]: reproducible synthetic inputs.
//! - [`table`]: CSV formats read and written by the command-line tool.

pub mod accountant;
pub mod epsilon;
pub mod error;
pub mod errorsim;
pub mod mechanism;
pub mod release;
pub mod synth;
pub mod table;

pub use epsilon::Epsilon;
pub use error::{Error, Result};
