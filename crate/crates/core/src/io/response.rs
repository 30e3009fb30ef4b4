//! Time-frequency magnitude response of a trajectory, exported as CSV.

use crate::error::{Result, TvfError};
use crate::filter::{log_grid, trajectory_response, CoeffTrajectory};

pub const DEFAULT_GRID_POINTS: usize = 256;
pub const GRID_LOW_HZ: f64 = 20.0;
pub const GRID_HIGH_HZ: f64 = 20_000.0;

/// Cascade gain in dB for every frame over a log-spaced frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseGrid {
    pub freqs: Vec<f64>,
    /// `values[n][i]`: gain of frame `n` at `freqs[i]`.
    pub values: Vec<Vec<f64>>,
}

impl ResponseGrid {
    pub fn from_trajectory(traj: &CoeffTrajectory, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(TvfError::InvalidParameter(format!("response grid needs at least 2 points, got {points}")));
        }
        let f_hi = GRID_HIGH_HZ.min(0.49 * traj.sample_rate);
        let freqs = log_grid(GRID_LOW_HZ, f_hi, points);
        let values = trajectory_response(traj, &freqs)?;
        let grid = ResponseGrid { freqs, values };
        grid.validate()?;
        Ok(grid)
    }

    pub fn num_frames(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.freqs.windows(2).all(|w| w[0] < w[1]) {
            return Err(TvfError::InvalidParameter("response grid frequencies must increase strictly".into()));
        }
        for (n, row) in self.values.iter().enumerate() {
            if row.len() != self.freqs.len() {
                return Err(TvfError::LengthMismatch(format!("response row {n} has {} cells", row.len())));
            }
            if let Some(i) = crate::error::first_non_finite(row) {
                return Err(TvfError::non_finite(format!("response of frame {n}"), i));
            }
        }
        Ok(())
    }

    /// Header `frame,<f_1>,...,<f_F>` then one row per frame.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame");
        for f in &self.freqs {
            out.push_str(&format!(",{f}"));
        }
        out.push('\n');
        for (n, row) in self.values.iter().enumerate() {
            out.push_str(&n.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |detail: String| TvfError::Format { what: "response csv", detail };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("frame") {
            return Err(bad("header must start with 'frame'".into()));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("'{s}': {e}")));
        let freqs = cols.map(parse).collect::<Result<Vec<_>>>()?;
        let mut values = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let mut cells = line.split(',');
            cells.next();
            values.push(cells.map(parse).collect::<Result<Vec<_>>>()?);
        }
        let grid = ResponseGrid { freqs, values };
        grid.validate()?;
        Ok(grid)
    }
}
