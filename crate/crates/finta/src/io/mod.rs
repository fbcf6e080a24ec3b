//! Persistence: track files, label sidecars, model files, mask volumes,
//! latent dumps and evaluation/bench reports.

pub mod labels;
pub mod latents;
pub mod mask;
pub mod model;
pub mod report;
pub mod tracks;

pub use labels::{read_labels, write_labels, LabelEntry, LabelSidecar};
pub use latents::{read_latents, write_latents};
pub use mask::{read_mask, write_mask};
pub use model::{read_model, write_model};
pub use tracks::{read_tracks, write_tracks, TrackReadOutcome};
