//! Characterization and calibration mathematics for a two-channel SERF
//! atomic magnetometer used as a zero/ultralow-field NMR detector.
//!
//! - [`lineshape`]: Lorentzian absorption and resonance-response fits
//! - [`cellchem`]: buffer-gas densities from D1 pressure shift and broadening
//! - [`serf`]: spin-exchange broadening, `T_SE` fit and alkali density
//! - [`gradiometer`]: amplitude/phase calibration and spectral subtraction
//! - [`psd`]: Welch ASD, tesla calibration and band noise floors
//! - [`simulator`]: seeded synthetic two-channel records
//! - [`nmr`]: thermal-polarisation NMR field estimate
//! - [`cli`]: the `serfkit` command-line front end

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cellchem;
pub mod cli;
pub mod error;
pub mod gradiometer;
pub mod io;
pub mod lineshape;
pub mod lm;
pub mod nmr;
pub mod psd;
pub mod record;
pub mod serf;
pub mod simulator;
pub mod spectrum;

pub use error::{Error, Result};
pub use record::TwoChannelRecord;
