use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datasets::{render_track, subsample_size, DatasetManifest, KeyLabel, SynthSpec};
use crate::error::{Result, StoneError};
use crate::frontend::{compute_cqt, load_audio_resampled, sample_windows, CqtMatrix, CqtParams};

/// One track's CQT, ready for segment sampling.
#[derive(Debug, Clone)]
pub struct TrackData {
    pub id: String,
    pub key: Option<KeyLabel>,
    pub cqt: CqtMatrix,
}

/// Precomputed CQTs of a dataset.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub tracks: Vec<TrackData>,
}

impl Corpus {
    pub fn new(tracks: Vec<TrackData>) -> Self {
        Corpus { tracks }
    }

    /// Load, resample and transform every manifest entry in parallel.
    pub fn from_manifest(manifest: &DatasetManifest, params: &CqtParams) -> Result<Self> {
        let tracks = manifest
            .entries
            .par_iter()
            .map(|entry| {
                let path = manifest.resolve(entry);
                let clip = load_audio_resampled(&path, params.sample_rate)?;
                Ok(TrackData {
                    id: entry.path.to_string_lossy().into_owned(),
                    key: entry.key,
                    cqt: compute_cqt(&clip, params)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus { tracks })
    }

    /// Render and transform a synthetic corpus without touching the disk.
    pub fn from_synth(spec: &SynthSpec, params: &CqtParams) -> Result<Self> {
        spec.validate()?;
        let tracks = (0..spec.n_tracks)
            .into_par_iter()
            .map(|i| {
                let track = render_track(spec, i);
                let clip = if track.clip.sample_rate == params.sample_rate {
                    track.clip
                } else {
                    track.clip.resample(params.sample_rate)?
                };
                Ok(TrackData {
                    id: track.id,
                    key: Some(track.key),
                    cqt: compute_cqt(&clip, params)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus { tracks })
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Labeled tracks only.
    pub fn labeled(&self) -> Corpus {
        Corpus::new(
            self.tracks
                .iter()
                .filter(|t| t.key.is_some())
                .cloned()
                .collect(),
        )
    }

    /// Uniform random subset of the labeled tracks (round half up), order kept.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<Corpus> {
        let labeled = self.labeled();
        let keep = subsample_size(labeled.len(), fraction);
        if keep == 0 {
            return Err(StoneError::EmptySubsample {
                fraction,
                n: labeled.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = rand::seq::index::sample(&mut rng, labeled.len(), keep).into_vec();
        chosen.sort_unstable();
        Ok(Corpus::new(
            chosen
                .into_iter()
                .map(|i| labeled.tracks[i].clone())
                .collect(),
        ))
    }

    /// Fail early when a track cannot hold two segments of `seg_frames`.
    pub fn check_segment_length(&self, seg_frames: usize, params: &CqtParams) -> Result<()> {
        let seconds =
            |frames: usize| frames as f64 * params.hop_length as f64 / params.sample_rate as f64;
        for t in &self.tracks {
            if t.cqt.n_frames() < 2 * seg_frames {
                return Err(StoneError::ClipTooShort {
                    required: seconds(2 * seg_frames),
                    actual: seconds(t.cqt.n_frames()),
                });
            }
        }
        Ok(())
    }
}

/// Two disjoint windows of one track, expressed as frame offsets.
pub fn draw_windows<R: Rng + ?Sized>(
    track: &TrackData,
    seg_frames: usize,
    rng: &mut R,
) -> Result<(usize, usize)> {
    sample_windows(track.cqt.n_frames(), seg_frames, rng).ok_or_else(|| {
        StoneError::Shape(format!(
            "track {} has {} frames, fewer than two segments of {seg_frames}",
            track.id,
            track.cqt.n_frames()
        ))
    })
}
