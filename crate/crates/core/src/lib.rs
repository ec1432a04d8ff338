//! Camera fingerprint (PRNU) estimation from block-coded video.
//!
//! The crate bundles a synthetic sensor model, a small reference block video
//! codec with an in-loop deblocking filter, a decoder that can emit the
//! unfiltered reconstructions alongside the filtered reference chain, and a
//! PRNU estimator that weights every macroblock's contribution by the
//! quantization it went through.

pub mod codec;
pub mod decoder;
pub mod error;
pub mod experiments;
pub mod frame_io;
pub mod pipeline;
pub mod plane;
pub mod prnu;
pub mod qp_comp;
pub mod sensor;

pub use error::{Error, Result};
pub use plane::{FramePlane, LumaPlane, Plane};
pub use prnu::{PceResult, PrnuPattern};

/// Side length of a macroblock in pixels.
pub const MB_SIZE: usize = 16;

/// PCE above which a pattern is considered to come from the reference sensor.
pub const PCE_THRESHOLD: f64 = 60.0;
