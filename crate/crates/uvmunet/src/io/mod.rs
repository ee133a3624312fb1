//! Artifact I/O: deterministic weight initialization, the portable weight
//! file format, PGM/PPM image support, and JSON run configuration.

pub mod config;
pub mod init;
pub mod pnm;
pub mod weightfile;

pub use config::RunConfig;
pub use init::{init_weights, SplitMix64};
pub use weightfile::{load_weights, save_weights};
