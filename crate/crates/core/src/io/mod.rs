//! File formats and streaming.

pub mod response;
pub mod stream;
pub mod trajectory;
pub mod wav;

pub use response::{ResponseGrid, DEFAULT_GRID_POINTS};
pub use stream::{stream_all, BackboneController, FrameController, FrameSource, SliceSource, StreamProcessor, TrajectoryController};
pub use trajectory::{read_trajectory, write_trajectory, TrajectoryFile, TRAJECTORY_FORMAT_VERSION};
pub use wav::{read_wav, write_wav, BitDepth};
