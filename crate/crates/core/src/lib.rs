//! Training-free refinement of out-of-distribution anomaly score maps.
//!
//! A coarse per-pixel anomaly map is calibrated with class-agnostic instance
//! masks ([`oasc`]), sharpened at object boundaries ([`mbp`]) and scored with
//! pixel- and component-level metrics ([`metrics`]). [`synth`] produces
//! seeded synthetic corpora and [`io`] holds the file formats.

pub mod cli;
pub mod coarse;
pub mod corpus;
pub mod error;
pub mod io;
pub mod mbp;
pub mod metrics;
pub mod oasc;
pub mod pipeline;
pub mod score_map;
pub mod synth;

pub use error::{Error, FormatError, Result};
pub use score_map::{clamp_unit, region_mean, PixelRegion, ScoreMap};
