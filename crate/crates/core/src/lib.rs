//! Visual-prompt zero-shot classification harness for chest radiographs.
//!
//! The pipeline loads nodule records and images, draws a visual prompt
//! (crop, circle, arrow or contour), preprocesses the annotated image the
//! way contrastive image encoders expect, classifies it against text
//! prompts through a model backend, and scores the results.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod legrad;
pub mod marker;
pub mod metrics;
pub mod preprocess;
pub mod raster;
pub mod zero_shot;

pub use error::{Error, Result};
pub use raster::RasterImage;
