//! Time-varying biquad-cascade filtering for speech enhancement.
//!
//! A small recurrent controller looks at each 1024-sample frame and predicts
//! gain, quality factor and center frequency for 35 cascaded biquads; the
//! cascade then filters that frame in the time domain. The crate provides
//! the filter core, a serial (streaming) and a systolic (training) engine,
//! reverse-mode gradients through the whole chain, the controller network,
//! a trainer on synthetic mixtures, and evaluation metrics.

pub mod autodiff;
pub mod backbone;
pub mod bench;
pub mod engine;
pub mod error;
pub mod filter;
pub mod io;
pub mod sample;
pub mod systolic;
pub mod tensor;
pub mod training;

pub use error::{Result, TvfError};
