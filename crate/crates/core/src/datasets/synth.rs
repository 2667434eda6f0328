//! Additive-synthesis tonal corpus with known keys.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, KeyLabel, ManifestEntry, Mode};
use crate::error::{Result, StoneError};
use crate::frontend::{write_wav, AudioClip};

const MAJOR_SCALE: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
const MINOR_SCALE: [i32; 7] = [0, 2, 3, 5, 7, 8, 10];

/// How track keys are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyDistribution {
    /// Track `i` gets key index `i mod 24`.
    Balanced,
    /// Independent uniform draw per track.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_tracks: usize,
    pub seed: u64,
    pub keys: KeyDistribution,
    /// Track length in seconds.
    pub duration: f64,
    pub sample_rate: u32,
    pub tempo_bpm: (f64, f64),
    /// Harmonics per note.
    pub partials: usize,
    /// Maximum per-note detune in cents.
    pub detune_cents: f64,
    /// Noise level relative to the signal RMS, in dB.
    pub noise_db: f64,
    /// Probability that a progression opens on the tonic chord.
    pub tonic_start: f64,
    /// Probability of closing with a dominant-tonic cadence.
    pub cadence: f64,
    /// Probability that a minor-key dominant is made major.
    pub raised_dominant: f64,
    pub melody: bool,
    /// Split tag written to the manifest.
    pub split: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_tracks: 240,
            seed: 0,
            keys: KeyDistribution::Balanced,
            duration: 10.0,
            sample_rate: 22050,
            tempo_bpm: (70.0, 140.0),
            partials: 6,
            detune_cents: 4.0,
            noise_db: -40.0,
            tonic_start: 0.5,
            cadence: 0.5,
            raised_dominant: 0.5,
            melody: true,
            split: "train".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(StoneError::Config(format!("synth: {m}")));
        if self.n_tracks == 0 {
            return fail("n_tracks must be positive");
        }
        if !(self.duration > 0.0) || self.sample_rate == 0 || self.partials == 0 {
            return fail("duration, sample_rate and partials must be positive");
        }
        if !(self.tempo_bpm.0 > 0.0 && self.tempo_bpm.0 <= self.tempo_bpm.1) {
            return fail("tempo range must be positive and ordered");
        }
        for p in [self.tonic_start, self.cadence, self.raised_dominant] {
            if !(0.0..=1.0).contains(&p) {
                return fail("probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// One rendered track.
#[derive(Debug, Clone)]
pub struct SynthTrack {
    pub id: String,
    pub key: KeyLabel,
    pub clip: AudioClip,
}

struct Note {
    start: f64,
    duration: f64,
    midi: i32,
    gain: f64,
}

struct Timbre {
    amplitudes: Vec<f64>,
    attack: f64,
    decay: f64,
    sustain: f64,
    release: f64,
}

impl Timbre {
    fn random(rng: &mut ChaCha8Rng, partials: usize) -> Timbre {
        let rolloff = rng.gen_range(1.0..2.0);
        let amplitudes = (1..=partials)
            .map(|h| (h as f64).powf(-rolloff) * rng.gen_range(0.7..1.0))
            .collect();
        Timbre {
            amplitudes,
            attack: rng.gen_range(0.005..0.04),
            decay: rng.gen_range(0.3..1.5),
            sustain: rng.gen_range(0.3..0.8),
            release: 0.08,
        }
    }

    fn envelope(&self, t: f64, duration: f64) -> f64 {
        let shape = |t: f64| {
            let rise = (t / self.attack).min(1.0);
            rise * (self.sustain + (1.0 - self.sustain) * (-t / self.decay).exp())
        };
        if t < duration {
            shape(t)
        } else {
            shape(duration) * (1.0 - (t - duration) / self.release).max(0.0)
        }
    }
}

fn midi_to_hz(midi: f64) -> f64 {
    440.0 * 2f64.powf((midi - 69.0) / 12.0)
}

fn render_notes(
    notes: &[Note],
    timbre: &Timbre,
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let sr = spec.sample_rate as f64;
    let n = (spec.duration * sr).round() as usize;
    let mut out = vec![0.0f64; n];
    for note in notes {
        let detune = rng.gen_range(-spec.detune_cents..=spec.detune_cents) / 100.0;
        let f0 = midi_to_hz(note.midi as f64 + detune);
        let start = (note.start * sr) as usize;
        let end = (((note.start + note.duration + timbre.release) * sr) as usize).min(n);
        if start >= end {
            continue;
        }
        let env: Vec<f64> = (start..end)
            .map(|i| note.gain * timbre.envelope(i as f64 / sr - note.start, note.duration))
            .collect();
        for (h, &amp) in timbre.amplitudes.iter().enumerate() {
            let f = f0 * (h + 1) as f64;
            if f > 0.45 * sr {
                break;
            }
            // phasor recurrence: one complex multiply per sample
            let step = (TAU * f / sr).sin_cos();
            let phase0 = rng.gen_range(0.0..TAU);
            let (mut s, mut c) = phase0.sin_cos();
            for (o, e) in out[start..end].iter_mut().zip(&env) {
                *o += amp * e * s;
                let ns = s * step.1 + c * step.0;
                c = c * step.1 - s * step.0;
                s = ns;
            }
        }
    }
    out
}

fn finish(
    mut signal: Vec<f64>,
    noise_db: f64,
    rng: &mut ChaCha8Rng,
    sample_rate: u32,
) -> AudioClip {
    let rms = (signal.iter().map(|v| v * v).sum::<f64>() / signal.len().max(1) as f64).sqrt();
    let noise = rms * 10f64.powf(noise_db / 20.0) * 3f64.sqrt();
    for v in signal.iter_mut() {
        *v += noise * rng.gen_range(-1.0..1.0);
    }
    let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 0.5 / peak } else { 0.0 };
    AudioClip::new(
        signal.iter().map(|v| (v * scale) as f32).collect(),
        sample_rate,
    )
}

/// Triad on scale degree `degree` (0-based) as semitone offsets from the tonic.
fn triad(scale: &[i32; 7], degree: usize) -> [i32; 3] {
    let note = |step: usize| scale[(degree + step) % 7] + 12 * ((degree + step) / 7) as i32;
    [note(0), note(2), note(4)]
}

/// Functional chord walk: tonic group, predominant, dominant.
fn progression(rng: &mut ChaCha8Rng, n_chords: usize, spec: &SynthSpec) -> Vec<usize> {
    const TONIC: [usize; 3] = [0, 2, 5];
    const PREDOMINANT: [usize; 2] = [1, 3];
    const DOMINANT: [usize; 2] = [4, 6];
    let pick = |rng: &mut ChaCha8Rng, group: &[usize]| group[rng.gen_range(0..group.len())];
    let mut chords = Vec::with_capacity(n_chords);
    let mut current = if rng.gen_bool(spec.tonic_start) {
        0
    } else {
        rng.gen_range(0..7)
    };
    chords.push(current);
    while chords.len() < n_chords {
        let r: f64 = rng.gen();
        current = if TONIC.contains(&current) {
            match r {
                r if r < 0.5 => pick(rng, &PREDOMINANT),
                r if r < 0.8 => pick(rng, &DOMINANT),
                _ => pick(rng, &TONIC),
            }
        } else if PREDOMINANT.contains(&current) {
            match r {
                r if r < 0.6 => pick(rng, &DOMINANT),
                r if r < 0.8 => pick(rng, &TONIC),
                _ => pick(rng, &PREDOMINANT),
            }
        } else if r < 0.8 {
            pick(rng, &TONIC)
        } else {
            pick(rng, &PREDOMINANT)
        };
        chords.push(current);
    }
    if n_chords >= 2 && rng.gen_bool(spec.cadence) {
        chords[n_chords - 2] = 4;
        chords[n_chords - 1] = 0;
    }
    chords
}

fn key_for(spec: &SynthSpec, index: usize, rng: &mut ChaCha8Rng) -> KeyLabel {
    match spec.keys {
        KeyDistribution::Balanced => KeyLabel::from_index(index % 24),
        KeyDistribution::Uniform => KeyLabel::from_index(rng.gen_range(0..24)),
    }
}

fn track_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Render track `index` of the corpus described by `spec`.
pub fn render_track(spec: &SynthSpec, index: usize) -> SynthTrack {
    let mut rng = track_rng(spec.seed, index);
    let key = key_for(spec, index, &mut rng);
    SynthTrack {
        id: format!("track_{index:05}"),
        key,
        clip: render_in_key(spec, key, &mut rng),
    }
}

fn render_in_key(spec: &SynthSpec, key: KeyLabel, rng: &mut ChaCha8Rng) -> AudioClip {
    let scale = match key.mode() {
        Mode::Major => MAJOR_SCALE,
        Mode::Minor => MINOR_SCALE,
    };
    let tonic = key.tonic() as i32;
    let timbre = Timbre::random(rng, spec.partials);
    let beat = 60.0 / rng.gen_range(spec.tempo_bpm.0..=spec.tempo_bpm.1);
    let beats_per_chord = if rng.gen_bool(0.5) { 1 } else { 2 };
    let chord_len = beat * beats_per_chord as f64;
    let n_chords = (spec.duration / chord_len).ceil().max(1.0) as usize;
    let chords = progression(rng, n_chords, spec);
    // register of the tonic for this track
    let base = 48 + tonic - if tonic > 6 { 12 } else { 0 };

    let mut notes = Vec::new();
    // melody draws scale degrees without replacement so every degree sounds
    let mut bag: Vec<usize> = Vec::new();
    for (i, &degree) in chords.iter().enumerate() {
        let start = i as f64 * chord_len;
        let mut tones = triad(&scale, degree);
        if key.mode() == Mode::Minor && degree == 4 && rng.gen_bool(spec.raised_dominant) {
            tones[1] += 1;
        }
        let inversion = rng.gen_range(0..3);
        for (j, &t) in tones.iter().enumerate() {
            let lift = if j < inversion { 12 } else { 0 };
            notes.push(Note {
                start,
                duration: chord_len,
                midi: base + t + lift,
                gain: rng.gen_range(0.2..0.35),
            });
        }
        notes.push(Note {
            start,
            duration: chord_len,
            midi: base - 12 + tones[0] % 12,
            gain: rng.gen_range(0.25..0.4),
        });
        if spec.melody {
            let per_chord = beats_per_chord * if rng.gen_bool(0.5) { 1 } else { 2 };
            let step = chord_len / per_chord as f64;
            for s in 0..per_chord {
                if bag.is_empty() {
                    bag.extend(0..7);
                    bag.shuffle(rng);
                }
                let d = bag.pop().unwrap_or(0);
                notes.push(Note {
                    start: start + s as f64 * step,
                    duration: step * 0.9,
                    midi: base + 12 + scale[d],
                    gain: rng.gen_range(0.3..0.45),
                });
            }
        }
    }
    let signal = render_notes(&notes, &timbre, spec, rng);
    finish(signal, spec.noise_db, rng, spec.sample_rate)
}

/// Render every track in memory, in parallel.
pub fn render_corpus(spec: &SynthSpec) -> Result<Vec<SynthTrack>> {
    spec.validate()?;
    Ok((0..spec.n_tracks)
        .into_par_iter()
        .map(|i| render_track(spec, i))
        .collect())
}

/// Write every track as WAV into `out_dir` along with `manifest.csv`.
pub fn synthesize_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| StoneError::io(out_dir, e))?;
    let entries = (0..spec.n_tracks)
        .into_par_iter()
        .map(|i| {
            let track = render_track(spec, i);
            let rel = PathBuf::from(format!("{}.wav", track.id));
            write_wav(&out_dir.join(&rel), &track.clip)?;
            Ok(ManifestEntry {
                path: rel,
                key: Some(track.key),
                split: spec.split.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest::new("manifest", out_dir, entries)?;
    manifest.save(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Pieces concatenated into the calibration recording.
const CALIBRATION_PIECES: usize = 4;

/// The calibration recording: four 10 s generated C major pieces back to back,
/// each with its own timbre, tempo and progression.
pub fn calibration_clip(sample_rate: u32) -> AudioClip {
    let spec = SynthSpec {
        sample_rate,
        ..SynthSpec::default()
    };
    let mut samples = Vec::new();
    for piece in 0..CALIBRATION_PIECES {
        let mut rng = track_rng(0xCA11, piece);
        samples.extend(render_in_key(&spec, KeyLabel::from_index(0), &mut rng).samples);
    }
    AudioClip::new(samples, sample_rate)
}
