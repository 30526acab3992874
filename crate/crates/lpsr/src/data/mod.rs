//! Synthetic plate rendering, degradation, and dataset manifests.

pub mod font;

mod degrade;
mod dataset;
mod render;

pub use dataset::{
    build_dataset, random_label, DataConfig, DatasetManifest, LpSample, ManifestEntry, Split,
    SplitFractions,
};
pub use degrade::{degrade, DegradeParams};
pub use render::{render_plate, RenderStyle};
