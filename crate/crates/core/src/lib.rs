//! Ultrasound B-mode reconstruction as a static graph of operators.
//!
//! Raw multi-channel RF frames, paired with their acquisition geometry, are
//! delay-and-sum beamformed, envelope-detected and log-compressed into display
//! images. The same graph machinery hosts quantitative-ultrasound estimators.

pub mod beamform;
pub mod environment;
pub mod error;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod presets;
pub mod qus;
pub mod scalar;
pub mod sigproc;

pub use error::{Error, Result};
pub use scalar::{Dtype, Real};
