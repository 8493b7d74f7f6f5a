//! Building blocks for producing platform-tailored video summaries.
//!
//! A summary is made in two independent passes over the source video:
//! a temporal pass that picks the most important shots under a duration
//! budget, and a spatial pass that crops each kept frame to a target aspect
//! ratio around the dominant point of visual attention.
//!
//! The neural models usually behind shot detection, frame scoring and
//! saliency prediction are not part of this crate. Their outputs can be
//! imported from files, and each stage also has a classical built-in
//! fallback so the whole pipeline runs without any model:
//!
//! | stage      | import                         | built-in                         |
//! |------------|--------------------------------|----------------------------------|
//! | shots      | [`shots::import_shots`]        | [`shots::detect_shots`]          |
//! | importance | [`scoring::import_scores`]     | [`scoring::baseline_scores`]     |
//! | saliency   | [`saliency::import_saliency`]  | [`saliency::spectral_residual`]  |
//!
//! Decoding and encoding go through an external transcoder executable, see
//! [`media`].

pub mod crop;
pub mod eval;
pub mod media;
pub mod pipeline;
pub mod preset;
pub mod saliency;
pub mod scoring;
pub mod selection;
pub mod shots;
pub mod synthetic;
mod types;

pub use crop::{CropWindow, FocusPoint};
pub use media::{Frame, FrameRate, OutputSpec, TranscoderConfig, VideoAsset};
pub use pipeline::{PipelineError, PipelineInput, PipelineOutput, Stage};
pub use preset::{PlatformPreset, SummarySpec};
pub use saliency::SaliencyMap;
pub use scoring::ImportanceSeries;
pub use selection::FragmentSelection;
pub use shots::Shot;
pub use types::{AspectRatio, ParseAspectError};
