//! Difference-set sampling for sub-Nyquist pulse-Doppler radar.
//!
//! Delay-Doppler scenes are measured through `K` Fourier coefficients per
//! pulse repetition interval and recovered by greedy sparse solvers.

pub mod dictionaries;
pub mod ds_codes;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod recovery;
pub mod scene_measurement;
pub mod waveforms;

pub use error::{Error, Result};
pub use linalg::C64;
