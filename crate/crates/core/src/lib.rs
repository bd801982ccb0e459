//! Precision limits for estimating the diffusion restriction length of tissue
//! microstructure from spin-echo diffusion-weighted signals.
//!
//! The crate is organised bottom-up:
//!
//! * [`units`]: SI constants, tissue description, characteristic length scales.
//! * [`spectrum`]: displacement power spectra as sums of Lorentzians, including
//!   the restricted-geometry eigenmode expansions.
//! * [`waveform`]: piecewise-constant effective gradient waveforms and their
//!   spectral filter functions.
//! * [`attenuation`]: the signal attenuation exponent, computed by several
//!   interchangeable engines selected by name.
//! * [`fisher`]: Fisher information, Cramer-Rao relative errors and the
//!   ultimate per-measurement bound.
//! * [`optimizer`]: optimal diffusion time, admissible gradient window and
//!   precision maps.
//! * [`mc`]: Monte-Carlo random-walk oracle for restricted diffusion.

pub mod attenuation;
pub mod error;
pub mod fisher;
pub mod mc;
pub mod numeric;
pub mod optimizer;
pub mod spectrum;
pub mod units;
pub mod waveform;

pub use error::{Error, Result};
