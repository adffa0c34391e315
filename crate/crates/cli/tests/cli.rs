use std::path::Path;
use std::process::Command;

use xdrive_cli::{stages, CliError, Overrides, Profile, RunConfig, Stamp};

fn xdrive(work: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_xdrive"))
        .arg("--work-dir")
        .arg(work)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn toml_round_trip_and_partial_files() {
    let cfg = RunConfig::default();
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);

    let partial = RunConfig::from_toml("seed = 9\nprofile = \"paper-scale\"\n[vqa]\nepochs = 3\n").unwrap();
    assert_eq!(partial.seed, 9);
    assert_eq!(partial.profile, Profile::PaperScale);
    assert_eq!(partial.vqa.epochs, 3);
    assert_eq!(partial.vqa.batch_size, 32);
    assert_eq!(partial.track, "track-a");

    assert!(matches!(RunConfig::from_toml("sede = 1"), Err(CliError::Config(_))));
}

#[test]
fn profile_picks_matching_shapes() {
    for profile in [Profile::Desk, Profile::PaperScale] {
        let cfg = RunConfig { profile, ..Default::default() };
        cfg.validate().unwrap();
        let (r, m) = (cfg.render_config(), cfg.model_config());
        assert_eq!((r.width, r.height, r.channels), (m.width, m.height, m.channels));
    }
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    std::fs::write(&file, "seed = 4\nk = 3\n[ddpg]\nepisodes = 10\n").unwrap();
    let o = Overrides {
        config: Some(file),
        seed: Some(7),
        episodes: Some(20),
        ..Default::default()
    };
    let cfg = o.resolve().unwrap();
    assert_eq!((cfg.seed, cfg.k, cfg.ddpg.episodes), (7, 3, 20));

    let bad = Overrides {
        track: Some("track-b".into()),
        ..Default::default()
    };
    assert!(matches!(bad.resolve(), Err(CliError::Config(_))));
}

#[test]
fn hash_tracks_every_field() {
    let a = RunConfig::default();
    assert_eq!(a.hash(), RunConfig::default().hash());
    assert_eq!(a.hash().len(), 64);
    let mut b = a.clone();
    b.ddpg.tau = 0.002;
    assert_ne!(a.hash(), b.hash());
    let mut c = a.clone();
    c.seed = 1;
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn stages_name_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        work_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    let missing = |r: Result<(), CliError>| match r {
        Err(CliError::MissingPrerequisite { path, .. }) => path,
        other => panic!("expected a missing prerequisite, got {other:?}"),
    };
    assert_eq!(missing(stages::record(&cfg).map(drop)), dir.path().join("agent/actor.ckpt"));
    assert_eq!(missing(stages::build_dataset(&cfg).map(drop)), dir.path().join("recordings/track-a.json"));
    assert_eq!(missing(stages::train_vqa(&cfg, |_| {}).map(drop)), dir.path().join("corpus/manifest.jsonl"));
    assert_eq!(missing(stages::eval_vqa(&cfg).map(drop)), dir.path().join("vqa/vqa.ckpt"));
}

#[test]
fn eval_before_training_fails_with_the_model_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = xdrive(dir.path(), &["eval-vqa"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains(&dir.path().join("vqa/vqa.ckpt").display().to_string()), "{err}");
    assert!(err.contains("train-vqa"));
}

#[test]
fn explain_rejects_an_empty_question() {
    let dir = tempfile::tempdir().unwrap();
    let out = xdrive(dir.path(), &["explain", "frame.png", ""]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("question has no tokens"));
}

#[test]
fn config_command_prints_resolved_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = xdrive(dir.path(), &["--seed", "12", "--profile", "paper-scale", "config"]);
    assert!(out.status.success());
    let cfg = RunConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 12);
    assert_eq!(cfg.profile, Profile::PaperScale);
    assert_eq!(cfg.work_dir, dir.path());
}

/// A small reference-driven run through every VQA stage, twice.
#[test]
fn small_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "driver = \"reference\"\nfps = 5.0\n[corpus]\ntrain_per_category = 4\ntest_per_category = 2\nmin_segment = 2\n[vqa]\nepochs = 2\n";
    let file = dir.path().join("small.toml");
    std::fs::write(&file, toml).unwrap();

    let run = |name: &str, extra: &[&str]| {
        let work = dir.path().join(name);
        for stage in ["record", "build-dataset", "train-vqa", "eval-vqa"] {
            let mut args = vec!["--config", file.to_str().unwrap()];
            args.extend(extra);
            args.push(stage);
            let out = xdrive(&work, &args);
            assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
        }
        work
    };
    let (a, b) = (run("a", &[]), run("b", &[]));
    for f in [
        "recordings/track-a.json",
        "corpus/manifest.jsonl",
        "vqa/vqa.ckpt",
        "vqa/train_log.jsonl",
        "reports/eval.txt",
        "reports/eval.json",
        "reports/question_probe.json",
    ] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("reports/eval.json")).unwrap()).unwrap();
    assert_eq!(report["total"], 10);
    let stamp = Stamp::read(&a.join("reports")).unwrap();
    assert_eq!(stamp.stage, "eval-vqa");
    // rerunning a stage rewrites an identical stamp
    let before = std::fs::read(a.join("reports/stamp.json")).unwrap();
    assert!(xdrive(&a, &["--config", file.to_str().unwrap(), "eval-vqa"]).status.success());
    assert_eq!(std::fs::read(a.join("reports/stamp.json")).unwrap(), before);

    // k = 1 prints a single row
    let manifest = std::fs::read_to_string(a.join("corpus/manifest.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(manifest.lines().last().unwrap()).unwrap();
    let frame = a.join("corpus").join(rec["frame_path"].as_str().unwrap());
    let out = xdrive(&a, &["--k", "1", "explain", "--format", "json", frame.to_str().unwrap(), rec["question"].as_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["answers"].as_array().unwrap().len(), 1);

    // generic questions: same corpus, only one question in the vocabulary
    let g = run("g", &["--questions", "generic"]);
    assert_eq!(std::fs::read(g.join("corpus/manifest.jsonl")).unwrap(), manifest.as_bytes());
    let vocab: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(g.join("vqa/question_vocab.json")).unwrap()).unwrap();
    let tokens: Vec<&str> = vocab["tokens"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
    assert!(tokens.contains(&"doing") && !tokens.contains(&"t-junction"), "{tokens:?}");
    let probe: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(g.join("reports/question_probe.json")).unwrap()).unwrap();
    assert_eq!(probe["total"], 10);
}
