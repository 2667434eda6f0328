use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stone_core::datasets::{calibration_clip, load_manifest, synthesize_corpus, SynthSpec};
use stone_core::eval::{
    baseline_chroma_argmax, baseline_template_matching, describe, ConfusionMatrix, EvalCounts, EvalReport,
    EvalSummary, FifthRule, KeyPrediction, KeyProfiles,
};
use stone_core::frontend::{load_audio, write_wav, AudioClip};
use stone_core::training::{
    Checkpoint, Corpus, Estimator, EpochRecord, NdjsonLog, Trainer, COLLAPSE_THRESHOLD_BITS, MIN_PROBE_ITEMS,
};
use stone_core::{KeyLabel, StoneError};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const CONFIG_COPY: &str = "config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LOG_DIR: &str = "logs";
pub const REPORT_DIR: &str = "reports";
pub const LAST_CHECKPOINT: &str = "last.json";
pub const STEP_LOG: &str = "steps.ndjson";
pub const EPOCH_LOG: &str = "epochs.ndjson";
pub const CALIBRATION_CLIP: &str = "calibration_cmaj.wav";

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| StoneError::io(path, e).into())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| StoneError::io(path, e).into())
}

/// Render a synthetic corpus to WAV files plus `manifest.csv`, and the C major calibration clip.
pub fn synth(spec: &SynthSpec, out_dir: &Path) -> Result<PathBuf> {
    let manifest = synthesize_corpus(spec, out_dir)?;
    let path = out_dir.join("manifest.csv");
    manifest.save(&path)?;
    write_wav(&out_dir.join(CALIBRATION_CLIP), &calibration_clip(spec.sample_rate))?;
    eprintln!("wrote {} tracks to {}", manifest.len(), out_dir.display());
    Ok(path)
}

/// Fixed layout of a training run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        for sub in [CHECKPOINT_DIR, LOG_DIR, REPORT_DIR] {
            create_dir(&root.join(sub))?;
        }
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn config(&self) -> PathBuf {
        self.root.join(CONFIG_COPY)
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join(CHECKPOINT_DIR).join(name)
    }

    pub fn log(&self, name: &str) -> PathBuf {
        self.root.join(LOG_DIR).join(name)
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join(REPORT_DIR)
    }
}

/// What `stone train` leaves in `reports/train_summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: Vec<EpochRecord>,
    pub calibration: Option<stone_core::eval::CalibrationState>,
    pub calibration_error: Option<String>,
    pub collapse_entropy: Option<f64>,
    pub eval: Option<EvalSummary>,
}

fn load_calibration_clip(path: Option<&Path>, sample_rate: u32) -> Result<AudioClip> {
    match path {
        Some(p) => Ok(load_audio(p)?),
        None => Ok(calibration_clip(sample_rate)),
    }
}

fn open_log(path: &Path) -> Result<NdjsonLog<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| StoneError::io(path, e))?;
    Ok(NdjsonLog::new(BufWriter::new(file)))
}

/// Train, calibrate, check for collapse and evaluate as configured.
///
/// Collapse is reported as an error after every output has been written.
pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainSummary> {
    cfg.validate()?;
    let run = RunDir::create(&cfg.run_dir)?;
    write_file(&run.config(), &cfg.to_toml()?)?;

    let load = |source: &Option<crate::config::DataSource>| -> Result<Option<Corpus>> {
        source.as_ref().map(|s| s.load(&cfg.cqt)).transpose()
    };
    let mode = cfg.train.mode;
    let unlabeled = if mode.needs_unlabeled() { load(&cfg.data.unlabeled)? } else { None };
    let labeled = match load(&cfg.data.labeled)? {
        Some(c) if mode.needs_labeled() => Some(c.subsample(cfg.train.label_fraction, cfg.train.seed)?),
        _ => None,
    };
    let eval = load(&cfg.data.eval)?;

    let net = cfg.network();
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            Trainer::from_parts(&net, &cfg.train, &cfg.cqt, ckpt.state)?
        }
        None => Trainer::new(&net, &cfg.train, &cfg.cqt)?,
    };

    let mut steps = open_log(&run.log(STEP_LOG))?;
    let mut epochs = open_log(&run.log(EPOCH_LOG))?;
    let mut log_error = None;
    while trainer.state.epoch < cfg.train.epochs {
        let record = trainer.train_epoch(unlabeled.as_ref(), labeled.as_ref(), &mut |r| {
            if let Err(e) = steps.record(r) {
                log_error.get_or_insert(e);
            }
        })?;
        if let Some(e) = log_error.take() {
            return Err(e.into());
        }
        epochs.record(&record)?;
        steps.flush()?;
        epochs.flush()?;
        eprintln!(
            "epoch {} ({:?}): loss {:.4} over {} steps",
            record.epoch, record.kind, record.mean.total, record.steps
        );
        let ckpt = Checkpoint::from_trainer(&trainer);
        ckpt.save(&run.checkpoint(LAST_CHECKPOINT))?;
        if cfg.checkpoint_every > 0 && trainer.state.epoch % cfg.checkpoint_every == 0 {
            ckpt.save(&run.checkpoint(&format!("epoch-{:04}.json", trainer.state.epoch)))?;
        }
    }

    let mut estimator = trainer.estimator();
    let clip = load_calibration_clip(cfg.calibration.clip.as_deref(), cfg.cqt.sample_rate)?;
    let (calibration, calibration_error) = match estimator.calibrate_clip(&clip) {
        Ok(state) => {
            eprintln!("calibration: q_cal {} mode_swap {}", state.q_cal, state.mode_swap);
            (Some(state), None)
        }
        Err(e @ StoneError::CalibrationNotDiscriminative { .. }) => {
            eprintln!("warning: {e}");
            (None, Some(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    let mut ckpt = Checkpoint::from_trainer(&trainer);
    ckpt.calibration = calibration;
    ckpt.save(&run.checkpoint(LAST_CHECKPOINT))?;

    let probe = [eval.as_ref(), unlabeled.as_ref(), labeled.as_ref()]
        .into_iter()
        .flatten()
        .find(|c| c.len() >= MIN_PROBE_ITEMS);
    let collapse_entropy = match probe {
        Some(p) => Some(estimator.collapse_entropy(p)?),
        None => {
            eprintln!("warning: no corpus of {MIN_PROBE_ITEMS} tracks to probe for collapse");
            None
        }
    };

    let eval_summary = match &eval {
        Some(corpus) => {
            let summary = evaluate_model(&estimator, corpus, "stone", &run.reports(), FifthRule::default())?;
            eprintln!("{}", describe(&summary));
            Some(summary)
        }
        None => None,
    };

    let summary = TrainSummary {
        epochs: trainer.state.history.clone(),
        calibration,
        calibration_error,
        collapse_entropy,
        eval: eval_summary,
    };
    write_file(
        &run.reports().join("train_summary.json"),
        &serde_json::to_string_pretty(&summary).map_err(StoneError::from)?,
    )?;
    if let Some(h) = collapse_entropy {
        eprintln!("collapse probe entropy: {h:.3} bits");
        if stone_core::training::is_collapsed(h) {
            return Err(CliError::Collapse {
                entropy: h,
                threshold: COLLAPSE_THRESHOLD_BITS,
            });
        }
    }
    Ok(summary)
}

/// Calibrate a checkpoint on a C major clip and save it to `out` (in place when absent).
pub fn calibrate(checkpoint: &Path, clip: Option<&Path>, out: Option<&Path>) -> Result<Checkpoint> {
    let mut ckpt = Checkpoint::load(checkpoint)?;
    let mut estimator = ckpt.estimator()?;
    let audio = load_calibration_clip(clip, ckpt.cqt.sample_rate)?;
    let state = estimator.calibrate_clip(&audio)?;
    ckpt.calibration = Some(state);
    ckpt.save(out.unwrap_or(checkpoint))?;
    eprintln!("q_cal {} mode_swap {}", state.q_cal, state.mode_swap);
    Ok(ckpt)
}

fn write_confusion(preds: &[KeyPrediction], refs: &[KeyLabel], dir: &Path, stem: &str) -> Result<()> {
    let signatures = ConfusionMatrix::signatures(preds, refs)?;
    signatures.write_csv(&dir.join(format!("{stem}_confusion_signatures.csv")))?;
    signatures.write_svg(&dir.join(format!("{stem}_confusion_signatures.svg")))?;
    if preds.iter().all(|p| p.mode.is_some()) {
        let keys = ConfusionMatrix::keys(preds, refs)?;
        keys.write_csv(&dir.join(format!("{stem}_confusion_keys.csv")))?;
        keys.write_svg(&dir.join(format!("{stem}_confusion_keys.svg")))?;
    }
    Ok(())
}

fn write_report(
    system: &str,
    ids: &[String],
    preds: &[KeyPrediction],
    refs: &[KeyLabel],
    out: &Path,
    rule: FifthRule,
) -> Result<EvalSummary> {
    let report = EvalReport::build(system, ids, preds, refs, rule)?;
    report.write(out, system)?;
    write_confusion(preds, refs, out, system)?;
    Ok(report.summary)
}

/// Evaluate a calibrated estimator and write `<system>.{csv,json}` and confusion matrices.
pub fn evaluate_model(
    estimator: &Estimator,
    corpus: &Corpus,
    system: &str,
    out: &Path,
    rule: FifthRule,
) -> Result<EvalSummary> {
    let labeled = corpus.labeled();
    if labeled.is_empty() {
        return Err(CliError::Data("evaluation set has no labeled tracks".into()));
    }
    let (ids, preds, refs) = estimator.evaluate(&labeled)?;
    write_report(system, &ids, &preds, &refs, out, rule)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    ChromaArgmax,
    TemplateMatching,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::ChromaArgmax => "chroma_argmax",
            Baseline::TemplateMatching => "template_matching",
        }
    }
}

/// Run a feature-engineering baseline over the labeled tracks of a corpus.
pub fn evaluate_baseline(
    baseline: Baseline,
    corpus: &Corpus,
    log_gain: f64,
    out: &Path,
    rule: FifthRule,
) -> Result<EvalSummary> {
    let labeled = corpus.labeled();
    if labeled.is_empty() {
        return Err(CliError::Data("evaluation set has no labeled tracks".into()));
    }
    let profiles = KeyProfiles::krumhansl();
    let mut ids = Vec::new();
    let mut preds = Vec::new();
    let mut refs = Vec::new();
    for t in &labeled.tracks {
        ids.push(t.id.clone());
        refs.push(t.key.expect("labeled"));
        preds.push(match baseline {
            Baseline::ChromaArgmax => baseline_chroma_argmax(&t.cqt, log_gain),
            Baseline::TemplateMatching => baseline_template_matching(&t.cqt, log_gain, &profiles),
        });
    }
    write_report(baseline.name(), &ids, &preds, &refs, out, rule)
}

/// Load a manifest (optionally one split) into a corpus with the given front end.
pub fn load_eval_corpus(
    manifest: &Path,
    split: Option<&str>,
    cqt: &stone_core::frontend::CqtParams,
) -> Result<Corpus> {
    let mut m = load_manifest(manifest)?;
    if let Some(s) = split {
        m = m.split(s);
    }
    if m.n_labeled() == 0 {
        return Err(CliError::Data(format!("{} has no labeled entries", manifest.display())));
    }
    Ok(Corpus::from_manifest(&m.filtered(|e| e.key.is_some()), cqt)?)
}

/// One row of a published results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsRow {
    pub system: String,
    pub correct: u64,
    pub fifth: u64,
    /// Table size for key-signature tables.
    #[serde(default)]
    pub total: Option<u64>,
    #[serde(default)]
    pub relative: Option<u64>,
    #[serde(default)]
    pub parallel: Option<u64>,
    #[serde(default)]
    pub wrong: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsFile {
    #[serde(rename = "row")]
    pub rows: Vec<CountsRow>,
}

/// Score computed from a row of counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsScore {
    pub system: String,
    pub counts: EvalCounts,
    pub ksea: Option<f64>,
    pub mirex: Option<f64>,
}

impl CountsRow {
    pub fn score(&self) -> Result<CountsScore> {
        let full = (self.relative, self.parallel, self.wrong);
        let (counts, ksea, mirex) = match (full, self.total) {
            ((Some(r), Some(p), Some(w)), None) => {
                let c = EvalCounts::key_counts(self.correct, self.fifth, r, p, w);
                (c, None, Some(c.mirex()))
            }
            ((None, None, None), Some(n)) => {
                if self.correct + self.fifth > n {
                    return Err(CliError::Config(format!("{}: counts exceed total {n}", self.system)));
                }
                let c = EvalCounts::signature_counts(self.correct, self.fifth, n);
                (c, Some(c.ksea()), None)
            }
            _ => {
                return Err(CliError::Config(format!(
                    "{}: give either total, or relative, parallel and wrong",
                    self.system
                )))
            }
        };
        Ok(CountsScore {
            system: self.system.clone(),
            counts,
            ksea,
            mirex,
        })
    }
}

/// Score every row of a counts file.
pub fn eval_from_counts(path: &Path) -> Result<Vec<CountsScore>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: CountsFile = toml::from_str(&text).map_err(|e| CliError::ConfigParse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    file.rows.iter().map(CountsRow::score).collect()
}

pub fn format_scores(scores: &[CountsScore]) -> String {
    let mut out = String::new();
    for s in scores {
        let mut line = format!("{:<32}", s.system);
        if let Some(k) = s.ksea {
            line.push_str(&format!(" KSEA {:5.1}%", 100.0 * k));
        }
        if let Some(m) = s.mirex {
            line.push_str(&format!(" MIREX {:5.1}%", 100.0 * m));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
