//! File formats, image I/O and the end-to-end pipeline around
//! [`metamorph_core`].

pub mod config;
pub mod format;
pub mod imageio;
pub mod pipeline;
pub mod visualize;
