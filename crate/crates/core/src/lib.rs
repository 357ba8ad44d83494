//! Monte Carlo model of a two-laser polarization correlation bench and the
//! offline time-tag analysis that turns its recordings into coincidence
//! histograms, normalized probabilities and the Clauser-Horne statistic.
//!
//! Data flow:
//!
//! ```text
//! source -> (preparation polarizers) -> optics -> detector -> eventfile
//!        -> analysis (delay histograms, p12, p1, p2) -> bell (S, verdicts)
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bell;
pub mod config_text;
pub mod detector;
pub mod error;
pub mod eventfile;
pub mod experiment;
pub mod model;
pub mod optics;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod source;

pub use error::{ConfigError, Error, FormatError, Result};
pub use model::{
    ch_settings, relative_angle, Angle, BeamLayout, DaqSpec, DetectorSpec, ExperimentConfig,
    PhotonEvent, PixelGroup, PixelId, PolarizerSpec, SourceMode, SourceSpec, Tick,
};
