//! Sources of training and validation mixtures, selected by name.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::synth::{mix_at_snr, synth_pair, Mixture, MixtureSpec, SNR_SET_DB};
use crate::error::{Result, TvfError};
use crate::io::wav::read_wav;

pub trait DataSource: Send {
    fn name(&self) -> &'static str;

    /// Training items for `step`; the same step always yields the same batch.
    fn train_batch(&mut self, step: usize, batch: usize, len: usize) -> Result<Vec<Mixture>>;

    /// A fixed held-out set, disjoint from every training batch.
    fn validation_set(&mut self, count: usize, len: usize) -> Result<Vec<Mixture>>;
}

pub const DATA_SOURCES: [&str; 2] = ["synthetic", "directory"];

/// `directory` needs `dir` holding `clean/` and `noise/` folders of WAV files.
pub fn data_source(name: &str, dir: Option<&Path>, seed: u64) -> Result<Box<dyn DataSource>> {
    match (name, dir) {
        ("synthetic", _) => Ok(Box::new(SyntheticSource::new(seed))),
        ("directory", Some(d)) => Ok(Box::new(DirectorySource::open(d, seed)?)),
        ("directory", None) => Err(TvfError::Config("the directory data source needs a path".into())),
        (other, _) => Err(TvfError::UnknownName {
            kind: "data source",
            name: other.to_string(),
            known: DATA_SOURCES.join(", "),
        }),
    }
}

/// SplitMix64 finalizer, used to derive independent per-item seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn item_seed(seed: u64, stream: u64, step: usize, index: usize) -> u64 {
    mix(mix(mix(seed ^ (stream << 56)) ^ step as u64) ^ index as u64)
}

#[derive(Debug, Clone)]
pub struct SyntheticSource {
    seed: u64,
    /// SNRs used for validation items; defaults to the full mixing set.
    pub validation_snrs: Vec<f64>,
}

impl SyntheticSource {
    pub fn new(seed: u64) -> Self {
        SyntheticSource {
            seed,
            validation_snrs: SNR_SET_DB.to_vec(),
        }
    }

    fn item(&self, stream: u64, step: usize, index: usize, len: usize, snrs: &[f64]) -> Result<Mixture> {
        let s = item_seed(self.seed, stream, step, index);
        let snr = snrs[(mix(s) % snrs.len() as u64) as usize];
        synth_pair(&MixtureSpec::new(snr, s, len)?)
    }

    /// Held-out items at chosen SNRs, from a stream never used for training.
    pub fn held_out(&self, count: usize, len: usize, snrs: &[f64]) -> Result<Vec<Mixture>> {
        (0..count).map(|i| self.item(2, 0, i, len, snrs)).collect()
    }
}

impl DataSource for SyntheticSource {
    fn name(&self) -> &'static str {
        "synthetic"
    }

    fn train_batch(&mut self, step: usize, batch: usize, len: usize) -> Result<Vec<Mixture>> {
        (0..batch).map(|i| self.item(0, step, i, len, &SNR_SET_DB)).collect()
    }

    fn validation_set(&mut self, count: usize, len: usize) -> Result<Vec<Mixture>> {
        let snrs = self.validation_snrs.clone();
        (0..count).map(|i| self.item(1, 0, i, len, &snrs)).collect()
    }
}

/// Mixes random excerpts of clean and noise recordings at a random SNR from
/// the mixing set. The last clean file is held out for validation.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    root: PathBuf,
    seed: u64,
    clean: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
}

fn read_folder(dir: &Path) -> Result<Vec<Vec<f64>>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| TvfError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(TvfError::Empty(format!("no .wav files in {}", dir.display())));
    }
    paths.iter().map(|p| read_wav(p).map(|a| a.samples)).collect()
}

impl DirectorySource {
    pub fn open(root: &Path, seed: u64) -> Result<Self> {
        let clean = read_folder(&root.join("clean"))?;
        let noise = read_folder(&root.join("noise"))?;
        Ok(DirectorySource {
            root: root.to_path_buf(),
            seed,
            clean,
            noise,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn excerpt(rng: &mut ChaCha8Rng, src: &[f64], len: usize) -> Vec<f64> {
        if src.len() <= len {
            // loop short recordings
            return src.iter().copied().cycle().take(len).collect();
        }
        let start = rng.random_range(0..=src.len() - len);
        src[start..start + len].to_vec()
    }

    fn item(&self, seed: u64, clean_files: std::ops::Range<usize>, len: usize) -> Result<Mixture> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..16 {
            let c = &self.clean[rng.random_range(clean_files.clone())];
            let n = &self.noise[rng.random_range(0..self.noise.len())];
            let snr = SNR_SET_DB[rng.random_range(0..SNR_SET_DB.len())];
            let (c, n) = (Self::excerpt(&mut rng, c, len), Self::excerpt(&mut rng, n, len));
            if c.iter().any(|&v| v != 0.0) && n.iter().any(|&v| v != 0.0) {
                return mix_at_snr(c, n, snr);
            }
        }
        Err(TvfError::Empty(format!("only silent excerpts found under {}", self.root.display())))
    }

    fn split(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let n = self.clean.len();
        if n == 1 {
            (0..1, 0..1)
        } else {
            (0..n - 1, n - 1..n)
        }
    }
}

impl DataSource for DirectorySource {
    fn name(&self) -> &'static str {
        "directory"
    }

    fn train_batch(&mut self, step: usize, batch: usize, len: usize) -> Result<Vec<Mixture>> {
        let (train, _) = self.split();
        (0..batch)
            .map(|i| self.item(item_seed(self.seed, 0, step, i), train.clone(), len))
            .collect()
    }

    fn validation_set(&mut self, count: usize, len: usize) -> Result<Vec<Mixture>> {
        let (_, val) = self.split();
        (0..count)
            .map(|i| self.item(item_seed(self.seed, 1, 0, i), val.clone(), len))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_batches_are_repeatable_and_distinct() {
        let mut a = SyntheticSource::new(1);
        let mut b = SyntheticSource::new(1);
        let x = a.train_batch(3, 2, 2048).unwrap();
        assert_eq!(x, b.train_batch(3, 2, 2048).unwrap());
        assert_ne!(x[0], x[1]);
        assert_ne!(x, a.train_batch(4, 2, 2048).unwrap());
        let v = a.validation_set(2, 2048).unwrap();
        assert!(v.iter().all(|m| !x.contains(m)));
        assert!(x.iter().all(|m| SNR_SET_DB.contains(&m.snr_db)));
    }

    #[test]
    fn registry() {
        assert_eq!(data_source("synthetic", None, 0).unwrap().name(), "synthetic");
        assert!(matches!(data_source("directory", None, 0), Err(TvfError::Config(_))));
        assert!(matches!(data_source("tape", None, 0), Err(TvfError::UnknownName { .. })));
    }
}
