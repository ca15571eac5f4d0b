//! Object-based spatial unmixing (OBSUM) for spatiotemporal fusion of a fine
//! image at a base date with a coarse image at a prediction date.
//!
//! The fusion runs in four stages:
//!
//! 1. [`preprocess`]: classify the base fine image, segment it into objects
//!    and make every object class-pure.
//! 2. [`unmix`]: windowed bounded least-squares unmixing of the coarse image,
//!    averaged over objects (OL-U).
//! 3. [`residual::olrc_compensate`]: object-level residual compensation
//!    guided by the object residual index (OL-RC).
//! 4. [`residual::plrc_compensate`]: pixel-level residual compensation from
//!    spectrally similar neighbors (PL-RC).
//!
//! [`pipeline::fuse`] chains them; [`metrics`] scores predictions and
//! [`pipeline::synth`] builds scenes with known truth.

pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod residual;
pub mod unmix;

pub use error::{Error, Result, Stage};
pub use pipeline::{fuse, FusionConfig, FusionInputs, FusionOutput};
pub use raster::{Raster, RasterDescriptor, ScaleFactor};
