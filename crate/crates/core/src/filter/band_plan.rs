//! Band layout of the filter cascade.
//!
//! The canonical plan has a low shelf for rumble, 33 resonant peaks and a
//! high shelf for hiss. Peak centers are 50 Hz apart up to 975 Hz and
//! geometrically spaced from 1050 Hz to 11.5 kHz above that. Each peak may
//! move between the geometric midpoints to its neighbours.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TvfError};

pub const DEFAULT_SAMPLE_RATE: f64 = 48_000.0;
pub const NUM_BANDS: usize = 35;

const LINEAR_PEAKS: usize = 19;
const LINEAR_FIRST_HZ: f64 = 75.0;
const LINEAR_STEP_HZ: f64 = 50.0;
const GEOMETRIC_PEAKS: usize = 14;
const GEOMETRIC_FIRST_HZ: f64 = 1050.0;
const GEOMETRIC_LAST_HZ: f64 = 11_500.0;

pub const LOW_SHELF_RANGE: (f64, f64) = (20.0, 60.0);
pub const HIGH_SHELF_RANGE: (f64, f64) = (12_000.0, 22_000.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BandKind {
    LowShelf,
    Peak,
    HighShelf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub kind: BandKind,
    pub f_min: f64,
    pub f_max: f64,
}

impl BandSpec {
    /// Geometric center of the allowed f0 range.
    pub fn center(&self) -> f64 {
        (self.f_min * self.f_max).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPlan {
    pub sample_rate: f64,
    pub bands: Vec<BandSpec>,
}

/// Nominal centers of the 33 peak bands.
pub fn peak_centers() -> Vec<f64> {
    let ratio = (GEOMETRIC_LAST_HZ / GEOMETRIC_FIRST_HZ).powf(1.0 / (GEOMETRIC_PEAKS - 1) as f64);
    let linear = (0..LINEAR_PEAKS).map(|i| LINEAR_FIRST_HZ + LINEAR_STEP_HZ * i as f64);
    let geometric = (0..GEOMETRIC_PEAKS).map(|i| {
        if i == GEOMETRIC_PEAKS - 1 {
            GEOMETRIC_LAST_HZ
        } else {
            GEOMETRIC_FIRST_HZ * ratio.powi(i as i32)
        }
    });
    linear.chain(geometric).collect()
}

impl BandPlan {
    /// Builds a plan after checking that every band is well formed.
    pub fn new(sample_rate: f64, bands: Vec<BandSpec>) -> Result<Self> {
        let plan = BandPlan { sample_rate, bands };
        plan.validate()?;
        Ok(plan)
    }

    pub fn default_plan() -> Self {
        let centers = peak_centers();
        let n = centers.len();
        let mut bands = Vec::with_capacity(NUM_BANDS);
        bands.push(BandSpec {
            kind: BandKind::LowShelf,
            f_min: LOW_SHELF_RANGE.0,
            f_max: LOW_SHELF_RANGE.1,
        });
        for i in 0..n {
            let c = centers[i];
            let upper = if i + 1 < n {
                (c * centers[i + 1]).sqrt()
            } else {
                let lower_mid = (centers[i - 1] * c).sqrt();
                c * c / lower_mid
            };
            let lower = if i > 0 {
                (centers[i - 1] * c).sqrt()
            } else {
                c * c / upper
            };
            bands.push(BandSpec {
                kind: BandKind::Peak,
                f_min: lower,
                f_max: upper,
            });
        }
        bands.push(BandSpec {
            kind: BandKind::HighShelf,
            f_min: HIGH_SHELF_RANGE.0,
            f_max: HIGH_SHELF_RANGE.1,
        });
        BandPlan {
            sample_rate: DEFAULT_SAMPLE_RATE,
            bands,
        }
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate / 2.0
    }

    /// A plan made of the first `k` bands of this one.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.bands.len() {
            return Err(TvfError::Config(format!(
                "cannot take {k} bands from a {}-band plan",
                self.bands.len()
            )));
        }
        Ok(BandPlan {
            sample_rate: self.sample_rate,
            bands: self.bands[..k].to_vec(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(TvfError::Config(format!(
                "sample rate must be positive, got {}",
                self.sample_rate
            )));
        }
        if self.bands.is_empty() {
            return Err(TvfError::Config("band plan has no bands".into()));
        }
        let nyquist = self.nyquist();
        for (i, b) in self.bands.iter().enumerate() {
            if !(b.f_min.is_finite() && b.f_max.is_finite() && b.f_min > 0.0) {
                return Err(TvfError::Config(format!("band {i}: non-positive or non-finite range")));
            }
            if b.f_min >= b.f_max || b.f_max > nyquist {
                return Err(TvfError::Config(format!(
                    "band {i}: need 0 < f_min < f_max <= {nyquist}, got [{}, {}]",
                    b.f_min, b.f_max
                )));
            }
        }
        let peaks: Vec<&BandSpec> = self.bands.iter().filter(|b| b.kind == BandKind::Peak).collect();
        if peaks.windows(2).any(|w| w[1].f_min <= w[0].f_min) {
            return Err(TvfError::Config("peak band ranges must be ordered by f_min".into()));
        }
        Ok(())
    }

    /// Checks the structure expected of a full-size plan: 35 bands, shelves at
    /// both ends with their fixed ranges, peaks in between.
    pub fn validate_canonical(&self) -> Result<()> {
        self.validate()?;
        if self.bands.len() != NUM_BANDS {
            return Err(TvfError::Config(format!(
                "expected {NUM_BANDS} bands, got {}",
                self.bands.len()
            )));
        }
        let first = self.bands[0];
        let last = self.bands[NUM_BANDS - 1];
        if first.kind != BandKind::LowShelf || (first.f_min, first.f_max) != LOW_SHELF_RANGE {
            return Err(TvfError::Config("band 0 must be a low shelf over [20, 60] Hz".into()));
        }
        if last.kind != BandKind::HighShelf || (last.f_min, last.f_max) != HIGH_SHELF_RANGE {
            return Err(TvfError::Config(
                "last band must be a high shelf over [12000, 22000] Hz".into(),
            ));
        }
        if self.bands[1..NUM_BANDS - 1].iter().any(|b| b.kind != BandKind::Peak) {
            return Err(TvfError::Config("bands 1..33 must be peaks".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("band plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: BandPlan = serde_json::from_str(text).map_err(|e| TvfError::Format {
            what: "band plan",
            detail: e.to_string(),
        })?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| TvfError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TvfError::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Default for BandPlan {
    fn default() -> Self {
        Self::default_plan()
    }
}
