//! Simulator for a visuotactile sensor with a semitransparent membrane.
//!
//! Objects pressed onto the membrane deform a spring-array elastomer; the
//! resulting height field is shaded under a four-colour LED ring to form the
//! tactile image, while the same object seen through the clear membrane
//! forms the visual image. [`dataset`] turns this into labeled datasets.

pub mod compliance;
pub mod dataset;
pub mod depth_io;
pub mod error;
pub mod geometry;
pub mod raster;
pub mod scene;
pub mod sensor;
pub mod shading;

pub use error::{Error, Result};
