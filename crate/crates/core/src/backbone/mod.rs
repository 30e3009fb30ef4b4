//! The causal controller: spectral features, two strided convolutions, a
//! stacked GRU and a linear head scaled to filter parameter ranges.

pub mod checkpoint;
pub mod config;
pub mod features;
pub mod layers;
pub mod mode;
pub mod model;
pub mod scaling;
pub mod weights;

pub use checkpoint::Checkpoint;
pub use config::BackboneConfig;
pub use features::{frame_features, FeatureExtractor, SpectralFrame};
pub use mode::{backbone_sequence, control_mode, ControlMode, StaticPeq, TimeVarying, CONTROL_MODES};
pub use model::{backbone_step, GruState};
pub use weights::{init_weights, BackboneWeights, DEFAULT_INIT_NOISE};
