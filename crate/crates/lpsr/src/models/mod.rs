pub mod attention;
pub mod checkpoint;
pub mod deform;
pub mod generator;
pub mod layers;
pub mod ocr;
pub mod params;

pub use attention::{AttentionModule, ConvKind};
pub use checkpoint::{load_config, load_metadata, load_weights, save_checkpoint, CheckpointMeta};
pub use deform::DeformConv2d;
pub use generator::{Generator, GeneratorConfig};
pub use layers::{pixel_shuffle, pixel_unshuffle, Conv2d, DepthwiseConv2d, Linear};
pub use ocr::{BranchStyle, OcrConfig, OcrNet, OcrRole};
pub use params::{Init, ParamStore};
