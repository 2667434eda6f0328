use std::path::{Path, PathBuf};
use std::process::Command;

use stone_cli::commands::{self, LAST_CHECKPOINT, STEP_LOG};
use stone_cli::error::{EXIT_COLLAPSE, EXIT_CONFIG, EXIT_DATA};
use stone_cli::{CliError, RunConfig};
use stone_core::training::Checkpoint;

fn stone(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stone")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY_NET: &str = r#"
[chromanet]
channels = [2, 3]
time_downsample = [2, 1]
stem_channels = 2
stem_stride = 2
kernel_time = 3
kernel_freq = 3
expansion = 2
out_channels = 1
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, format!("run_dir = \"run\"\n{body}\n{TINY_NET}")).unwrap();
    path
}

const SSL12: &str = r#"
[train]
mode = "ssl12"
epochs = 2
batch_size = 4
segment_seconds = 1.0
seed = 5

[data.unlabeled.synth]
n_tracks = 8
duration = 2.5
seed = 1
"#;

#[test]
fn synth_writes_manifest_audio_and_calibration_clip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus");
    let (code, _, err) = stone(&["synth", "--out", p(&out), "--n-tracks", "3", "--duration", "2", "--seed", "9"]);
    assert_eq!(code, 0, "{err}");
    let manifest = stone_core::datasets::load_manifest(&out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.len(), 3);
    assert!(manifest.entries.iter().all(|e| manifest.resolve(e).exists()));
    assert!(out.join(commands::CALIBRATION_CLIP).exists());
}

#[test]
fn train_writes_run_layout_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SSL12);
    let run_a = dir.path().join("a");
    let run_b = dir.path().join("b");
    for run in [&run_a, &run_b] {
        let (code, _, err) = stone(&["train", "--config", p(&config), "--run-dir", p(run)]);
        assert_eq!(code, 0, "{err}");
    }
    for sub in ["config.toml", "checkpoints/last.json", "logs/steps.ndjson", "logs/epochs.ndjson", "reports/train_summary.json"] {
        assert!(run_a.join(sub).exists(), "{sub}");
    }
    let log = |run: &Path| std::fs::read_to_string(run.join("logs").join(STEP_LOG)).unwrap();
    assert_eq!(log(&run_a).lines().count(), 4);
    assert_eq!(log(&run_a), log(&run_b));

    // the copied config reproduces the run on its own
    let copy = RunConfig::load(&run_a.join("config.toml")).unwrap();
    assert_eq!(copy.run_dir, run_a);
    assert_eq!(copy.train.seed, 5);

    let ckpt = Checkpoint::load(&run_a.join("checkpoints").join(LAST_CHECKPOINT)).unwrap();
    assert_eq!(ckpt.state.epoch, 2);
}

#[test]
fn resume_continues_to_the_configured_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &format!("checkpoint_every = 1\n{SSL12}"));
    let full = dir.path().join("full");
    assert_eq!(stone(&["train", "--config", p(&config), "--run-dir", p(&full)]).0, 0);
    let resumed = dir.path().join("resumed");
    let ckpt = full.join("checkpoints").join("epoch-0001.json");
    let (code, _, err) = stone(&["train", "--config", p(&config), "--run-dir", p(&resumed), "--resume", p(&ckpt)]);
    assert_eq!(code, 0, "{err}");
    let a = Checkpoint::load(&full.join("checkpoints").join(LAST_CHECKPOINT)).unwrap();
    let b = Checkpoint::load(&resumed.join("checkpoints").join(LAST_CHECKPOINT)).unwrap();
    assert_eq!(b.state.epoch, 2);
    assert_eq!(a.state.params, b.state.params);
    let lines = |run: &Path| std::fs::read_to_string(run.join("logs").join(STEP_LOG)).unwrap();
    assert!(lines(&full).ends_with(&lines(&resumed)));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "run_dir = \"r\"\nbogus = 1\n").unwrap();
    assert_eq!(stone(&["train", "--config", p(&bad)]).0, EXIT_CONFIG as i32);

    let missing = write_config(
        dir.path(),
        "[train]\nmode = \"ssl12\"\n[data.unlabeled.manifest]\npath = \"nowhere.csv\"\n",
    );
    assert_eq!(stone(&["train", "--config", p(&missing)]).0, EXIT_DATA as i32);

    let (code, _, _) = stone(&["eval", "--manifest", "nowhere.csv"]);
    assert_eq!(code, EXIT_CONFIG as i32);
    assert_eq!(CliError::Collapse { entropy: 0.0, threshold: 1.0 }.exit_code(), EXIT_COLLAPSE);
}

#[test]
fn untrained_model_on_a_large_probe_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[train]
mode = "ssl12"
epochs = 1
batch_size = 64
segment_seconds = 1.0
lr = 1e-9

[data.unlabeled.synth]
n_tracks = 120
duration = 2.5
seed = 2
"#;
    let config = write_config(dir.path(), body);
    let (code, _, err) = stone(&["train", "--config", p(&config)]);
    let summary: commands::TrainSummary =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/reports/train_summary.json")).unwrap()).unwrap();
    let h = summary.collapse_entropy.expect("probe ran");
    if h < 1.0 {
        assert_eq!(code, EXIT_COLLAPSE as i32, "{err}");
    } else {
        assert_eq!(code, 0, "{err}");
    }
}

#[test]
fn calibrate_and_evaluate_with_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert_eq!(stone(&["synth", "--out", p(&corpus), "--n-tracks", "6", "--duration", "2.5"]).0, 0);
    let config = write_config(dir.path(), SSL12);
    assert_eq!(stone(&["train", "--config", p(&config)]).0, 0);
    let ckpt = dir.path().join("run/checkpoints/last.json");
    let calibrated = dir.path().join("calibrated.json");
    let clip = corpus.join(commands::CALIBRATION_CLIP);
    let (code, _, err) = stone(&["calibrate", "--checkpoint", p(&ckpt), "--clip", p(&clip), "--out", p(&calibrated)]);
    // a barely trained tiny model may not separate the scale's chromas
    if code == 0 {
        assert!(Checkpoint::load(&calibrated).unwrap().calibration.is_some());
    } else {
        assert_eq!(code, EXIT_DATA as i32, "{err}");
        assert!(err.contains("not discriminative"), "{err}");
    }

    let reports = dir.path().join("reports");
    let manifest = corpus.join("manifest.csv");
    let (code, out, err) = stone(&[
        "eval", "--checkpoint", p(&ckpt), "--manifest", p(&manifest), "--out", p(&reports),
        "--baseline", "chroma", "--baseline", "template",
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 3, "{out}");
    for f in ["stone.csv", "stone.json", "chroma_argmax.json", "template_matching.json", "template_matching_confusion_keys.svg"] {
        assert!(reports.join(f).exists(), "{f}");
    }
    assert!(out.contains("MIREX"));
}

#[test]
fn golden_counts_reproduce_published_scores() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/golden_counts.toml");
    let (code, out, err) = stone(&["eval", "--from-counts", p(&path)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("MIREX  57.9%"), "{out}");
    assert!(out.contains("KSEA  38.1%"), "{out}");
}
