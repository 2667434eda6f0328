use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rubato::{FftFixedIn, Resampler};

use crate::error::{Result, StoneError};

/// Mono waveform at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        AudioClip {
            samples,
            sample_rate,
        }
    }

    pub fn silence(seconds: f64, sample_rate: u32) -> Self {
        let n = (seconds * sample_rate as f64).round() as usize;
        AudioClip::new(vec![0.0; n], sample_rate)
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Averages interleaved channels down to one.
    pub fn from_interleaved(interleaved: &[f32], channels: usize, sample_rate: u32) -> Self {
        let channels = channels.max(1);
        let samples = interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect();
        AudioClip::new(samples, sample_rate)
    }

    /// Returns a copy at `target_rate`; identity when the rates already match.
    pub fn resample(&self, target_rate: u32) -> Result<AudioClip> {
        if target_rate == self.sample_rate || self.samples.is_empty() {
            return Ok(AudioClip::new(self.samples.clone(), target_rate));
        }
        const CHUNK: usize = 1024;
        let mut resampler =
            FftFixedIn::<f64>::new(self.sample_rate as usize, target_rate as usize, CHUNK, 2, 1)
                .map_err(|e| StoneError::UnsupportedAudio(format!("resampler: {e}")))?;
        let delay = resampler.output_delay();
        let expected = (self.samples.len() as f64 * target_rate as f64 / self.sample_rate as f64)
            .round() as usize;
        let mut out: Vec<f64> = Vec::with_capacity(expected + delay + CHUNK);
        let input: Vec<f64> = self.samples.iter().map(|&s| s as f64).collect();
        let mut pos = 0;
        while out.len() < expected + delay {
            let mut chunk = vec![0.0; CHUNK];
            if pos < input.len() {
                let end = (pos + CHUNK).min(input.len());
                chunk[..end - pos].copy_from_slice(&input[pos..end]);
            }
            pos += CHUNK;
            let block = resampler
                .process(&[chunk], None)
                .map_err(|e| StoneError::UnsupportedAudio(format!("resampler: {e}")))?;
            out.extend_from_slice(&block[0]);
        }
        let samples = out[delay..delay + expected]
            .iter()
            .map(|&s| s as f32)
            .collect();
        Ok(AudioClip::new(samples, target_rate))
    }
}

/// Loads a WAV or FLAC file as a mono clip at its native sample rate.
pub fn load_audio(path: &Path) -> Result<AudioClip> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "wav" | "wave" => load_wav(path),
        "flac" => load_flac(path),
        other => Err(StoneError::UnsupportedAudio(format!(
            "{}: unknown extension {other:?}",
            path.display()
        ))),
    }
}

/// Loads audio and resamples it to the canonical rate.
pub fn load_audio_resampled(path: &Path, sample_rate: u32) -> Result<AudioClip> {
    load_audio(path)?.resample(sample_rate)
}

fn load_wav(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.into_samples::<f32>().collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<_, _>>()?
        }
    };
    Ok(AudioClip::from_interleaved(
        &interleaved,
        spec.channels as usize,
        spec.sample_rate,
    ))
}

fn load_flac(path: &Path) -> Result<AudioClip> {
    let file = File::open(path).map_err(|e| StoneError::io(path, e))?;
    let mut reader = claxon::FlacReader::new(BufReader::new(file))?;
    let info = reader.streaminfo();
    let scale = 1.0 / (1i64 << (info.bits_per_sample - 1)) as f32;
    let interleaved: Vec<f32> = reader
        .samples()
        .map(|s| s.map(|v| v as f32 * scale))
        .collect::<Result<_, _>>()?;
    Ok(AudioClip::from_interleaved(
        &interleaved,
        info.channels as usize,
        info.sample_rate,
    ))
}

/// Writes a clip as 16-bit PCM mono WAV.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}
