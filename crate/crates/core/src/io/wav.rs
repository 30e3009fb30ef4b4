//! Mono 48 kHz WAV files: 16/24-bit PCM or 32-bit float.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Result, TvfError};
use crate::filter::{AudioBuffer, DEFAULT_SAMPLE_RATE};

pub const REQUIRED_SAMPLE_RATE: u32 = DEFAULT_SAMPLE_RATE as u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Int16,
    Int24,
    Float32,
}

impl BitDepth {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "16" | "int16" => Ok(BitDepth::Int16),
            "24" | "int24" => Ok(BitDepth::Int24),
            "32f" | "float32" | "f32" => Ok(BitDepth::Float32),
            other => Err(TvfError::UnknownName {
                kind: "bit depth",
                name: other.to_string(),
                known: "16, 24, 32f".into(),
            }),
        }
    }

    fn spec(self) -> WavSpec {
        let (bits_per_sample, sample_format) = match self {
            BitDepth::Int16 => (16, SampleFormat::Int),
            BitDepth::Int24 => (24, SampleFormat::Int),
            BitDepth::Float32 => (32, SampleFormat::Float),
        };
        WavSpec {
            channels: 1,
            sample_rate: REQUIRED_SAMPLE_RATE,
            bits_per_sample,
            sample_format,
        }
    }
}

fn wav_err(path: &Path, e: hound::Error) -> TvfError {
    match e {
        hound::Error::IoError(io) => TvfError::io(path, io),
        other => TvfError::UnsupportedAudio(format!("{}: {other}", path.display())),
    }
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let mut reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(TvfError::UnsupportedAudio(format!(
            "{}: {} channels, only mono is supported",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_rate != REQUIRED_SAMPLE_RATE {
        return Err(TvfError::UnsupportedAudio(format!(
            "{}: sample rate {} Hz, {REQUIRED_SAMPLE_RATE} Hz required (no resampling is done)",
            path.display(),
            spec.sample_rate
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / (1i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_err(path, e))?
        }
        (fmt, bits) => {
            return Err(TvfError::UnsupportedAudio(format!(
                "{}: {bits}-bit {fmt:?} samples; 16/24-bit PCM or 32-bit float required",
                path.display()
            )))
        }
    };
    AudioBuffer::new(samples, f64::from(spec.sample_rate))
}

/// Writes mono audio; integer depths round to the nearest code and clip at full scale.
pub fn write_wav(path: &Path, audio: &AudioBuffer, depth: BitDepth) -> Result<()> {
    if audio.sample_rate != DEFAULT_SAMPLE_RATE {
        return Err(TvfError::UnsupportedAudio(format!(
            "cannot write {} Hz audio; {REQUIRED_SAMPLE_RATE} Hz required",
            audio.sample_rate
        )));
    }
    let mut w = WavWriter::create(path, depth.spec()).map_err(|e| wav_err(path, e))?;
    match depth {
        BitDepth::Float32 => {
            for &s in &audio.samples {
                w.write_sample(s as f32).map_err(|e| wav_err(path, e))?;
            }
        }
        BitDepth::Int16 | BitDepth::Int24 => {
            let bits = if depth == BitDepth::Int16 { 16 } else { 24 };
            let full = (1i64 << (bits - 1)) as f64;
            for &s in &audio.samples {
                let code = (s * full).round().clamp(-full, full - 1.0) as i32;
                w.write_sample(code).map_err(|e| wav_err(path, e))?;
            }
        }
    }
    w.finalize().map_err(|e| wav_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_audio(n: usize) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = (0..n).map(|_| rng.random_range(-1.0f32..1.0) as f64).collect();
        AudioBuffer::new(s, DEFAULT_SAMPLE_RATE).unwrap()
    }

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let a = random_audio(5000);
        write_wav(&p, &a, BitDepth::Float32).unwrap();
        assert_eq!(read_wav(&p).unwrap(), a);
    }

    #[test]
    fn int_round_trips_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let a = random_audio(5000);
        for (depth, bits) in [(BitDepth::Int16, 16), (BitDepth::Int24, 24)] {
            let p = dir.path().join(format!("{bits}.wav"));
            write_wav(&p, &a, depth).unwrap();
            let b = read_wav(&p).unwrap();
            let lsb = 1.0 / (1i64 << (bits - 1)) as f64;
            for (x, y) in a.samples.iter().zip(&b.samples) {
                assert!((x - y).abs() <= lsb, "{bits}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn wrong_rate_and_stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        match read_wav(&p) {
            Err(TvfError::UnsupportedAudio(m)) => assert!(m.contains("48000")),
            other => panic!("{other:?}"),
        }
        let mut w = WavWriter::create(&p, WavSpec { channels: 2, sample_rate: 48_000, ..spec }).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(TvfError::UnsupportedAudio(_))));
    }
}
