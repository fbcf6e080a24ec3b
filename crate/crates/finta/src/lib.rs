//! Unsupervised tractography streamline filtering.
//!
//! A tractogram is encoded streamline-by-streamline into a low-dimensional
//! latent space by a 1D convolutional autoencoder trained on raw, unlabeled
//! tracking output. Filtering then reduces to a nearest-neighbor test in
//! latent space against a labeled reference set: a streamline is kept when
//! its distance to the closest reference entry falls below a threshold
//! selected from the ROC curve of reference distances.
//!
//! The crate is organized as:
//!
//! - [`streamline`]: geometry primitives (resampling, alignment, lengths,
//!   winding, streamline distance)
//! - [`phantom`]: deterministic generator of a labeled synthetic phantom
//!   with ground-truth bundles and four implausible streamline classes
//! - [`nn`]: the autoencoder (forward/backward passes, Adam training)
//! - [`latent`]: reference sets, exact nearest-neighbor queries, ROC
//!   threshold selection, filtering, bundling, and latent interpolation
//! - [`baseline`]: anatomy-style comparison filters (length, loops,
//!   endpoint masks) and their successive pipeline
//! - [`metrics`]: classification measures, group count rate, success rate
//! - [`io`]: track files, label sidecars, model files, mask volumes,
//!   latent dumps, reports
//! - [`bench`]: wall-clock scaling harness for filtering throughput

pub mod baseline;
pub mod bench;
pub mod error;
pub mod io;
pub mod latent;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod streamline;

pub use error::{Error, Result};
pub use streamline::{Point3, Streamline, Tractogram};
