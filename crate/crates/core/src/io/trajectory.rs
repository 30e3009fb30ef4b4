//! Versioned JSON exchange format for parameter trajectories.
//!
//! ```json
//! {"header": {"format_version": 1, "sample_rate": 48000.0, "frame_len": 1024, "num_filters": 35},
//!  "frames": [[{"g_db": 0.0, "q": 0.707, "f0_hz": 40.0}, ...], ...]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TvfError};
use crate::filter::{BandPlan, FilterParams, ParamTrajectory};

pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub format_version: u32,
    pub sample_rate: f64,
    pub frame_len: usize,
    pub num_filters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub g_db: f64,
    pub q: f64,
    pub f0_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub header: TrajectoryHeader,
    pub frames: Vec<Vec<ParamEntry>>,
}

fn format_err(detail: impl Into<String>) -> TvfError {
    TvfError::Format {
        what: "trajectory file",
        detail: detail.into(),
    }
}

impl TrajectoryFile {
    pub fn from_trajectory(traj: &ParamTrajectory) -> Self {
        TrajectoryFile {
            header: TrajectoryHeader {
                format_version: TRAJECTORY_FORMAT_VERSION,
                sample_rate: traj.sample_rate,
                frame_len: traj.frame_len,
                num_filters: traj.num_filters(),
            },
            frames: traj
                .frames
                .iter()
                .map(|f| {
                    f.iter()
                        .map(|p| ParamEntry {
                            g_db: p.gain_db,
                            q: p.q,
                            f0_hz: p.f0,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Checks the header, shape and value ranges against `plan`.
    pub fn to_trajectory(&self, plan: &BandPlan) -> Result<ParamTrajectory> {
        let h = &self.header;
        if h.format_version != TRAJECTORY_FORMAT_VERSION {
            return Err(format_err(format!(
                "format version {}, expected {TRAJECTORY_FORMAT_VERSION}",
                h.format_version
            )));
        }
        if h.num_filters != plan.len() {
            return Err(format_err(format!("{} filters, band plan has {}", h.num_filters, plan.len())));
        }
        if h.sample_rate != plan.sample_rate {
            return Err(format_err(format!("sample rate {}, band plan uses {}", h.sample_rate, plan.sample_rate)));
        }
        if h.frame_len == 0 {
            return Err(format_err("frame_len must be positive"));
        }
        let mut frames = Vec::with_capacity(self.frames.len());
        for (n, frame) in self.frames.iter().enumerate() {
            if frame.len() != h.num_filters {
                return Err(format_err(format!("frame {n} has {} filters, header says {}", frame.len(), h.num_filters)));
            }
            let mut out = Vec::with_capacity(frame.len());
            for (k, (e, band)) in frame.iter().zip(&plan.bands).enumerate() {
                let p = FilterParams {
                    gain_db: e.g_db,
                    q: e.q,
                    f0: e.f0_hz,
                };
                if !p.is_within(band) {
                    return Err(format_err(format!("frame {n} filter {k}: {p:?} outside its declared ranges")));
                }
                out.push(p);
            }
            frames.push(out);
        }
        if frames.is_empty() {
            return Err(format_err("no frames"));
        }
        Ok(ParamTrajectory {
            frame_len: h.frame_len,
            sample_rate: h.sample_rate,
            frames,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| format_err(e.to_string()))
    }
}

pub fn write_trajectory(path: &Path, traj: &ParamTrajectory) -> Result<()> {
    std::fs::write(path, TrajectoryFile::from_trajectory(traj).to_json()).map_err(|e| TvfError::io(path, e))
}

pub fn read_trajectory(path: &Path, plan: &BandPlan) -> Result<ParamTrajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| TvfError::io(path, e))?;
    TrajectoryFile::from_json(&text)?.to_trajectory(plan)
}
