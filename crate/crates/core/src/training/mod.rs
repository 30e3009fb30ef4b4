//! Losses, optimizer, synthetic data, the training loop and metrics.

pub mod data;
pub mod evaluate;
pub mod loss;
pub mod metrics;
pub mod optimizer;
pub mod pipeline;
pub mod synth;
pub mod trainer;

pub use data::{data_source, DataSource, DirectorySource, SyntheticSource};
pub use evaluate::{denoise_report, DenoiseReport};
pub use loss::{multiscale_spectral_loss, total_loss, LossConfig, SpectralLoss};
pub use metrics::{lsd, si_sdr};
pub use optimizer::{adam_step, AdamMoments, OptimizerConfig};
pub use pipeline::{enhance, predict_trajectory, record_pipeline};
pub use synth::{synth_mixture, Mixture, MixtureSpec, SNR_SET_DB};
pub use trainer::{history_csv, train, train_observed, HistoryRow, TrainConfig, TrainOutcome};
