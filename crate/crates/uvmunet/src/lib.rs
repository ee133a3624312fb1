//! UltraLight VM-UNet building blocks, numerically and symbolically.
//!
//! The crate has two faces that are kept deliberately in sync:
//!
//! * a numeric one — a minimal dense-tensor kernel ([`tensor`]), the
//!   selective-scan state-space kernel ([`scan`]), the Mamba / VSS / PVM
//!   blocks built on top of it ([`blocks`]), and the full U-shaped
//!   segmentation network ([`net`]);
//! * a symbolic one — an exact integer parameter census and a closed-form
//!   FLOP estimator ([`accounting`]) that must agree, element for element,
//!   with whatever the numeric side instantiates.
//!
//! [`metrics`] evaluates binary segmentation masks and [`io`] provides
//! deterministic weight initialization, a portable weight-file format,
//! PGM/PPM image support, and JSON run configuration.

pub mod accounting;
pub mod blocks;
pub mod error;
pub mod io;
pub mod metrics;
pub mod net;
pub mod scan;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
