use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EpochKind, Objective, TrainConfig};
use super::data::{draw_windows, Corpus, TrackData};
use super::optimizer::AdamW;
use super::sampler::sample_intervals;
use super::schedule::LrSchedule;
use crate::chromanet::{
    lambda_of, mu_of, softmax_backward, BatchNorm, ChromaNet, ChromaNetConfig, KeyModeMatrix, Ksp,
    ModeVector, Real, RunningStats, CHROMAS,
};
use crate::error::{Result, StoneError};
use crate::frontend::{crop_shift_to_interval, transpose_crop, CqtParams, CroppedCqt};
use crate::objectives::{
    ablation_crossentropy_loss_grad, bce_loss_grad, cpsd_loss_grad, supervised_oracles,
    CofFrequency, LossBreakdown, Responses,
};

/// One training item: three crops, or two crops plus oracle responses.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub a_c: CroppedCqt,
    /// Absent when oracles stand in for segment B.
    pub b_c: Option<CroppedCqt>,
    pub a_ck: CroppedCqt,
    /// Pitch interval from `a_c` to `a_ck` in semitones.
    pub interval: i64,
    pub oracle: Option<(Ksp, ModeVector)>,
}

impl Example {
    /// Build from a track, two window offsets, a crop and a crop shift.
    pub fn from_track(
        track: &TrackData,
        windows: (usize, usize),
        seg_frames: usize,
        c: i64,
        k: i64,
        supervised: bool,
    ) -> Result<Example> {
        let a = track.cqt.slice_frames(windows.0, seg_frames);
        let (b_c, oracle) = if supervised {
            let key = track.key.ok_or_else(|| {
                StoneError::EmptyDataset(format!("track {} has no label", track.id))
            })?;
            (None, Some(supervised_oracles(&key, c)?))
        } else {
            let b = track.cqt.slice_frames(windows.1, seg_frames);
            (Some(transpose_crop(&b, c)?), None)
        };
        Ok(Example {
            id: track.id.clone(),
            a_c: transpose_crop(&a, c)?,
            b_c,
            a_ck: transpose_crop(&a, c + k)?,
            interval: crop_shift_to_interval(k),
            oracle,
        })
    }
}

struct View<F> {
    item: usize,
    slot: usize,
    features: Vec<F>,
    trace: crate::chromanet::Trace<F>,
    logits: Vec<f64>,
}

/// Mean loss of a batch and its gradient with respect to `params`.
///
/// Returns the per-item breakdowns; the gradient is that of their mean total.
/// Batch normalization statistics of the structured head are computed over
/// every response in the batch and folded into `stats`.
pub fn batch_gradient<F: Real>(
    net: &ChromaNet,
    params: &[F],
    stats: &mut RunningStats,
    examples: &[Example],
    objective: Objective,
    omega: CofFrequency,
) -> Result<(Vec<LossBreakdown>, Vec<F>)> {
    if examples.is_empty() {
        return Err(StoneError::EmptyDataset("empty batch".into()));
    }
    let mut views = Vec::with_capacity(3 * examples.len());
    for (item, ex) in examples.iter().enumerate() {
        let inputs = [Some(&ex.a_c), ex.b_c.as_ref(), Some(&ex.a_ck)];
        for (slot, x) in inputs.into_iter().enumerate() {
            if let Some(x) = x {
                let (features, trace) = net.forward(params, x)?;
                let logits = net.logits(params, &features);
                views.push(View {
                    item,
                    slot,
                    features,
                    trace,
                    logits,
                });
            }
        }
    }
    let scale = 1.0 / examples.len() as f64;
    let mut breakdowns = Vec::with_capacity(examples.len());
    let mut d_logits: Vec<Vec<f64>> = vec![Vec::new(); views.len()];
    let slot_of =
        |item: usize, slot: usize| views.iter().position(|v| v.item == item && v.slot == slot);

    if net.out_channels() == 1 {
        let probs: Vec<Ksp> = views.iter().map(|v| Ksp::softmax(&v.logits)).collect();
        for (item, ex) in examples.iter().enumerate() {
            let ia = slot_of(item, 0).expect("a_c view");
            let ik = slot_of(item, 2).expect("a_ck view");
            let ib = slot_of(item, 1);
            let b = match (&ex.oracle, ib) {
                (Some((lambda, _)), _) => *lambda,
                (None, Some(i)) => probs[i],
                (None, None) => unreachable!("examples carry B or an oracle"),
            };
            let r = Responses {
                a_c: &probs[ia],
                b_c: &b,
                a_ck: &probs[ik],
            };
            let (loss, grads) = match objective {
                Objective::Cpsd => cpsd_loss_grad(r, ex.interval, omega),
                Objective::CrossEntropy => ablation_crossentropy_loss_grad(r, ex.interval),
            };
            breakdowns.push(loss);
            for (slot, index) in [(0, Some(ia)), (1, ib), (2, Some(ik))] {
                if let Some(i) = index {
                    let g: Vec<f64> = grads[slot].iter().map(|v| v * scale).collect();
                    d_logits[i] = softmax_backward(probs[i].values(), &g);
                }
            }
        }
    } else {
        let logits: Vec<Vec<f64>> = views.iter().map(|v| v.logits.clone()).collect();
        let bn = BatchNorm::forward(&logits, stats);
        let ys: Vec<KeyModeMatrix> = bn
            .normalized()
            .iter()
            .map(|z| KeyModeMatrix::softmax(z))
            .collect();
        let lambdas: Vec<Ksp> = ys.iter().map(lambda_of).collect();
        let mus: Vec<ModeVector> = ys.iter().map(mu_of).collect();
        let mut d_norm: Vec<Vec<f64>> = vec![vec![0.0; 2 * CHROMAS]; views.len()];
        for (item, ex) in examples.iter().enumerate() {
            let ia = slot_of(item, 0).expect("a_c view");
            let ik = slot_of(item, 2).expect("a_ck view");
            let ib = slot_of(item, 1);
            let (lambda_b, mu_b) = match (&ex.oracle, ib) {
                (Some(o), _) => *o,
                (None, Some(i)) => (lambdas[i], mus[i]),
                (None, None) => unreachable!("examples carry B or an oracle"),
            };
            let (cpsd, g_lambda) = cpsd_loss_grad(
                Responses {
                    a_c: &lambdas[ia],
                    b_c: &lambda_b,
                    a_ck: &lambdas[ik],
                },
                ex.interval,
                omega,
            );
            let (bce, g_mu) = bce_loss_grad(Responses {
                a_c: &mus[ia],
                b_c: &mu_b,
                a_ck: &mus[ik],
            });
            breakdowns.push(LossBreakdown::new(cpsd.l_ab, cpsd.l_aa, cpsd.l_ba, bce));
            for (slot, index) in [(0, Some(ia)), (1, ib), (2, Some(ik))] {
                if let Some(i) = index {
                    let d_y: Vec<f64> = (0..2 * CHROMAS)
                        .map(|j| scale * (g_lambda[slot][j % CHROMAS] + g_mu[slot][j / CHROMAS]))
                        .collect();
                    d_norm[i] = softmax_backward(&ys[i].channel_major(), &d_y);
                }
            }
        }
        d_logits = bn.backward(&d_norm);
    }

    let bad: Vec<String> = breakdowns
        .iter()
        .zip(examples)
        .filter(|(l, _)| !l.total.is_finite())
        .map(|(_, ex)| ex.id.clone())
        .collect();
    if !bad.is_empty() {
        return Err(StoneError::NonFiniteLoss {
            step: 0,
            items: bad,
        });
    }

    let mut grads = vec![F::zero(); net.n_params()];
    for (view, d) in views.iter().zip(&d_logits) {
        let d_features = net.logits_backward(params, &view.features, d, &mut grads);
        net.backward(params, &view.trace, &d_features, &mut grads);
    }
    Ok((breakdowns, grads))
}

/// Per-step log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub kind: EpochKind,
    pub lr: f64,
    pub loss: LossBreakdown,
}

/// Per-epoch summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub kind: EpochKind,
    pub steps: usize,
    pub mean: LossBreakdown,
}

/// Everything needed to continue training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    #[serde(with = "super::checkpoint::f32_as_f64")]
    pub params: Vec<f32>,
    pub stats: RunningStats,
    pub optimizer: AdamW,
    pub schedule: Option<LrSchedule>,
    /// Epochs completed.
    pub epoch: usize,
    /// Optimizer steps taken.
    pub step: usize,
    pub rng: ChaCha8Rng,
    pub history: Vec<EpochRecord>,
}

/// Trains a ChromaNet under one of the four regimes.
#[derive(Debug, Clone)]
pub struct Trainer {
    net: ChromaNet,
    cfg: TrainConfig,
    cqt: CqtParams,
    pub state: TrainState,
}

impl Trainer {
    pub fn new(net_cfg: &ChromaNetConfig, cfg: &TrainConfig, cqt: &CqtParams) -> Result<Self> {
        cfg.validate()?;
        cqt.validate()?;
        if net_cfg.out_channels != cfg.mode.out_channels() {
            return Err(StoneError::Config(format!(
                "mode {:?} needs out_channels = {}",
                cfg.mode,
                cfg.mode.out_channels()
            )));
        }
        let net = ChromaNet::new(net_cfg)?;
        let params = net.init_params::<f32>(cfg.seed);
        let state = TrainState {
            optimizer: AdamW::new(params.len(), cfg.weight_decay),
            params,
            stats: RunningStats::default(),
            schedule: None,
            epoch: 0,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1)),
            history: Vec::new(),
        };
        Ok(Trainer {
            net,
            cfg: cfg.clone(),
            cqt: cqt.clone(),
            state,
        })
    }

    /// Resume from saved parts; the network layout must match the state.
    pub fn from_parts(
        net_cfg: &ChromaNetConfig,
        cfg: &TrainConfig,
        cqt: &CqtParams,
        state: TrainState,
    ) -> Result<Self> {
        let mut trainer = Trainer::new(net_cfg, cfg, cqt)?;
        if state.params.len() != trainer.net.n_params() {
            return Err(StoneError::Checkpoint(format!(
                "checkpoint holds {} parameters, network needs {}",
                state.params.len(),
                trainer.net.n_params()
            )));
        }
        trainer.state = state;
        Ok(trainer)
    }

    pub fn net(&self) -> &ChromaNet {
        &self.net
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn cqt_params(&self) -> &CqtParams {
        &self.cqt
    }

    pub fn seg_frames(&self) -> usize {
        self.cqt.frames_for(self.cfg.segment_seconds)
    }

    fn steps_per_epoch(&self, n_tracks: usize) -> usize {
        n_tracks.div_ceil(self.cfg.batch_size)
    }

    fn examples(&mut self, batch: &[&TrackData], kind: EpochKind) -> Result<Vec<Example>> {
        let seg = self.seg_frames();
        batch
            .iter()
            .map(|track| {
                let windows = draw_windows(track, seg, &mut self.state.rng)?;
                let (c, k) = sample_intervals(&mut self.state.rng);
                Example::from_track(track, windows, seg, c, k, kind == EpochKind::Supervised)
            })
            .collect()
    }

    /// One optimizer step on prepared examples.
    pub fn step_examples(&mut self, examples: &[Example]) -> Result<(LossBreakdown, f64)> {
        let (losses, grads) = batch_gradient(
            &self.net,
            &self.state.params,
            &mut self.state.stats,
            examples,
            self.cfg.objective,
            self.cfg.omega,
        )
        .map_err(|e| match e {
            StoneError::NonFiniteLoss { items, .. } => StoneError::NonFiniteLoss {
                step: self.state.step as u64,
                items,
            },
            other => other,
        })?;
        let schedule = self
            .state
            .schedule
            .unwrap_or_else(|| LrSchedule::new(self.cfg.lr, 1, 0.0));
        let lr = schedule.lr(self.state.step);
        self.state
            .optimizer
            .step(&mut self.state.params, &grads, lr);
        self.state.step += 1;
        Ok((LossBreakdown::mean(&losses), lr))
    }

    /// Self-supervised step on a batch of tracks.
    pub fn ssl_step(&mut self, batch: &[&TrackData]) -> Result<LossBreakdown> {
        let examples = self.examples(batch, EpochKind::Ssl)?;
        Ok(self.step_examples(&examples)?.0)
    }

    /// Supervised step: segment B responses replaced by label oracles.
    pub fn supervised_step(&mut self, batch: &[&TrackData]) -> Result<LossBreakdown> {
        let examples = self.examples(batch, EpochKind::Supervised)?;
        Ok(self.step_examples(&examples)?.0)
    }

    /// Size the learning-rate schedule for the configured run length. A run
    /// resumed with a different epoch count gets a schedule for the new length.
    fn ensure_schedule(&mut self, unlabeled: usize, labeled: usize) {
        let total: usize = (0..self.cfg.epochs)
            .map(|e| match self.cfg.mode.epoch_kind(e) {
                EpochKind::Ssl => self.steps_per_epoch(unlabeled),
                EpochKind::Supervised => self.steps_per_epoch(labeled),
            })
            .sum();
        self.state.schedule = Some(LrSchedule::new(
            self.cfg.lr,
            total,
            self.cfg.warmup_fraction,
        ));
    }

    fn check_data(&self, unlabeled: Option<&Corpus>, labeled: Option<&Corpus>) -> Result<()> {
        let seg = self.seg_frames();
        if self.cfg.mode.needs_unlabeled() {
            let u = unlabeled
                .filter(|c| !c.is_empty())
                .ok_or_else(|| StoneError::EmptyDataset("unlabeled corpus is empty".into()))?;
            u.check_segment_length(seg, &self.cqt)?;
        }
        if self.cfg.mode.needs_labeled() {
            let l = labeled
                .filter(|c| !c.is_empty())
                .ok_or_else(|| StoneError::EmptyDataset("labeled corpus is empty".into()))?;
            if l.tracks.iter().any(|t| t.key.is_none()) {
                return Err(StoneError::EmptyDataset(
                    "labeled corpus has unlabeled tracks".into(),
                ));
            }
            l.check_segment_length(seg, &self.cqt)?;
        }
        Ok(())
    }

    /// Run the next epoch; SSL epochs read `unlabeled`, supervised epochs `labeled`.
    pub fn train_epoch(
        &mut self,
        unlabeled: Option<&Corpus>,
        labeled: Option<&Corpus>,
        log: &mut dyn FnMut(&StepRecord),
    ) -> Result<EpochRecord> {
        self.check_data(unlabeled, labeled)?;
        self.ensure_schedule(
            unlabeled.map_or(0, Corpus::len),
            labeled.map_or(0, Corpus::len),
        );
        let epoch = self.state.epoch;
        let kind = self.cfg.mode.epoch_kind(epoch);
        let corpus = match kind {
            EpochKind::Ssl => unlabeled,
            EpochKind::Supervised => labeled,
        }
        .expect("checked above");
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut self.state.rng);
        let mut losses = Vec::new();
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<&TrackData> = chunk.iter().map(|&i| &corpus.tracks[i]).collect();
            let examples = self.examples(&batch, kind)?;
            let step = self.state.step;
            let (loss, lr) = self.step_examples(&examples)?;
            log(&StepRecord {
                epoch,
                step,
                kind,
                lr,
                loss,
            });
            losses.push(loss);
        }
        let record = EpochRecord {
            epoch,
            kind,
            steps: losses.len(),
            mean: LossBreakdown::mean(&losses),
        };
        self.state.history.push(record.clone());
        self.state.epoch += 1;
        Ok(record)
    }

    /// Train until `cfg.epochs` epochs have completed.
    pub fn train(
        &mut self,
        unlabeled: Option<&Corpus>,
        labeled: Option<&Corpus>,
        log: &mut dyn FnMut(&StepRecord),
    ) -> Result<()> {
        while self.state.epoch < self.cfg.epochs {
            self.train_epoch(unlabeled, labeled, log)?;
        }
        Ok(())
    }

    /// Inference wrapper around the current weights.
    pub fn estimator(&self) -> super::Estimator {
        super::Estimator::new(
            self.net.clone(),
            self.state.params.clone(),
            (self.net.out_channels() == 2).then(|| self.state.stats.clone()),
            self.cfg.eval_crop,
            self.seg_frames(),
            self.cqt.clone(),
        )
    }
}

/// Alternating semi-supervised training: SSL on even epochs, supervised on odd.
pub fn alternate_train(
    trainer: &mut Trainer,
    unlabeled: &Corpus,
    labeled: &Corpus,
    log: &mut dyn FnMut(&StepRecord),
) -> Result<()> {
    if unlabeled.is_empty() || labeled.is_empty() {
        return Err(StoneError::EmptyDataset(
            "alternating training needs unlabeled and labeled data".into(),
        ));
    }
    if trainer.config().mode != super::TrainMode::Alternating {
        return Err(StoneError::Config(
            "alternate_train needs mode = alternating".into(),
        ));
    }
    trainer.train(Some(unlabeled), Some(labeled), log)
}
