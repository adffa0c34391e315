use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xdrive_core::dataset::{
    build_corpus, build_vocabs, default_distractors, generated_distractors, load_distractors, parse_overrides,
    write_corpus, Manifest, Recording, Split, GENERIC_QUESTION,
};
use xdrive_core::ddpg::{self, new_actor, observe, rollout, select_action, TrainOptions};
use xdrive_core::neural::{checkpoint, Mlp, Rng};
use xdrive_core::render::read_frame;
use xdrive_core::sim::{ActionCategory, Env, EpisodeEnd};
use xdrive_core::vqa::{
    self, evaluate, load_samples, probe_questions, AnswerModel, EvalReport, Prediction, QuestionProbe, Sample, TrainConfig, Vqa,
};

use crate::config::{Driver, Questions};
use crate::{read_file, write_file, CliError, RunConfig, Stamp};

pub const LEARNING_CURVE: &str = "learning_curve.jsonl";
pub const MANIFEST: &str = "manifest.jsonl";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const SUMMARY: &str = "summary.json";

/// Episodes averaged at each end of the learning curve.
pub const CURVE_WINDOW: usize = 20;

fn require(stage: &'static str, path: PathBuf, producer: &'static str) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingPrerequisite { stage, path, producer })
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("summary serializes") + "\n"
}

pub fn env_for(cfg: &RunConfig, track: &str) -> Result<Env, CliError> {
    Ok(Env::builtin(track, cfg.waypoints, cfg.env.clone())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub track: String,
    pub episodes: usize,
    pub total_steps: usize,
    pub first_mean_return: f64,
    pub last_mean_return: f64,
    pub greedy_end: EpisodeEnd,
    pub greedy_return: f64,
    pub greedy_steps: usize,
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len().max(1) as f64;
    xs.sum::<f64>() / n
}

/// Train the driving agent on `cfg.track`, then roll out the greedy policy.
pub fn train_agent(cfg: &RunConfig) -> Result<AgentSummary, CliError> {
    let env = env_for(cfg, &cfg.track)?;
    let dir = cfg.agent_dir();
    let out = ddpg::train(
        &env,
        cfg.ddpg,
        &TrainOptions {
            seed: cfg.seed,
            log_path: Some(dir.join(LEARNING_CURVE)),
            checkpoint_dir: Some(dir.clone()),
            checkpoint_every: cfg.checkpoint_every,
        },
    )?;
    let greedy = rollout(&env, &out.agent.actor, cfg.ddpg.lookahead)?;
    let w = CURVE_WINDOW.min(out.log.len());
    let summary = AgentSummary {
        track: cfg.track.clone(),
        episodes: out.log.len(),
        total_steps: out.total_steps,
        first_mean_return: mean(out.log[..w].iter().map(|e| e.ret)),
        last_mean_return: mean(out.log[out.log.len() - w..].iter().map(|e| e.ret)),
        greedy_end: greedy.end,
        greedy_return: greedy.ret,
        greedy_steps: greedy.actions.len(),
    };
    write_file(&dir.join(SUMMARY), &to_json(&summary))?;
    Stamp::new("train-agent", cfg).write(&dir)?;
    Ok(summary)
}

pub fn load_actor(cfg: &RunConfig, stage: &'static str) -> Result<Mlp<f32>, CliError> {
    let path = require(stage, cfg.agent_dir().join("actor.ckpt"), "train-agent")?;
    let mut actor = new_actor(cfg.ddpg.obs_dim(), cfg.ddpg.hidden, &mut Rng::seed(0));
    checkpoint::load(&mut actor, &path)?;
    Ok(actor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecording {
    pub track: String,
    pub frames: usize,
    pub end: EpisodeEnd,
    pub categories: BTreeMap<ActionCategory, usize>,
}

/// Drive both tracks and store the per-frame state log; pixels are
/// re-rendered from it on demand.
pub fn record(cfg: &RunConfig) -> Result<Vec<TrackRecording>, CliError> {
    let actor = match cfg.driver {
        Driver::Agent => Some(load_actor(cfg, "record")?),
        Driver::Reference => None,
    };
    let mut out = Vec::new();
    for track in [&cfg.track, &cfg.heldout_track] {
        let env = env_for(cfg, track)?;
        let rec = xdrive_core::dataset::record_drive(&env, track, cfg.fps, |s| match &actor {
            Some(a) => Ok(select_action(a, &observe(&env, s, cfg.ddpg.lookahead), None)?),
            None => Ok(env.follow_route(s, 6.0, 8.0)),
        })?;
        let mut categories = BTreeMap::new();
        for f in &rec.frames {
            *categories.entry(f.category).or_insert(0) += 1;
        }
        write_file(
            &cfg.recording_path(track),
            &serde_json::to_string(&rec).expect("recording serializes"),
        )?;
        out.push(TrackRecording {
            track: track.clone(),
            frames: rec.frames.len(),
            end: rec.end,
            categories,
        });
    }
    let dir = cfg.recordings_dir();
    write_file(&dir.join(SUMMARY), &to_json(&out))?;
    Stamp::new("record", cfg).write(&dir)?;
    Ok(out)
}

pub fn load_recording(cfg: &RunConfig, track: &str, stage: &'static str) -> Result<Recording, CliError> {
    let path = require(stage, cfg.recording_path(track), "record")?;
    let text = read_file(&path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub train: BTreeMap<ActionCategory, usize>,
    pub test: BTreeMap<ActionCategory, usize>,
    /// Test records per source track.
    pub test_tracks: BTreeMap<String, usize>,
}

/// Sample, annotate and render the QA corpus from the two recordings.
pub fn build_dataset(cfg: &RunConfig) -> Result<CorpusSummary, CliError> {
    let train_rec = load_recording(cfg, &cfg.track, "build-dataset")?;
    let heldout_rec = load_recording(cfg, &cfg.heldout_track, "build-dataset")?;
    let overrides = match &cfg.overrides {
        Some(p) => parse_overrides(&read_file(p)?)?,
        None => HashMap::new(),
    };
    let manifest = build_corpus(&train_rec, &heldout_rec, &cfg.corpus, &overrides)?;
    let env_a = env_for(cfg, &cfg.track)?;
    let env_b = env_for(cfg, &cfg.heldout_track)?;
    let root = cfg.corpus_dir();
    write_corpus(
        &root,
        &manifest,
        &[(&env_a, &train_rec), (&env_b, &heldout_rec)],
        &cfg.render_config(),
    )?;

    let mut summary = CorpusSummary {
        train: BTreeMap::new(),
        test: BTreeMap::new(),
        test_tracks: BTreeMap::new(),
    };
    for r in &manifest.records {
        let by_cat = match r.split {
            Split::Train => &mut summary.train,
            Split::Test => {
                *summary.test_tracks.entry(r.track_id.clone()).or_insert(0) += 1;
                &mut summary.test
            }
        };
        *by_cat.entry(r.category).or_insert(0) += 1;
    }
    write_file(&root.join(SUMMARY), &to_json(&summary))?;
    Stamp::new("build-dataset", cfg).write(&root)?;
    Ok(summary)
}

pub fn load_manifest(cfg: &RunConfig, stage: &'static str) -> Result<Manifest, CliError> {
    let path = require(stage, cfg.corpus_dir().join(MANIFEST), "build-dataset")?;
    Ok(Manifest::read(&path)?)
}

/// Candidate answers besides the five action explanations.
pub fn distractors(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    Ok(match (&cfg.distractors, cfg.distractor_count) {
        (Some(p), _) => load_distractors(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        (None, Some(n)) => generated_distractors(n),
        (None, None) => default_distractors(),
    })
}

pub fn vqa_train_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        seed: cfg.seed,
        ..cfg.vqa
    }
}

/// One split of the corpus, with the configured question on every record.
pub fn vqa_samples(cfg: &RunConfig, manifest: &Manifest, split: Split) -> Result<Vec<Sample>, CliError> {
    let mut samples = load_samples(&cfg.corpus_dir(), manifest, split)?;
    if cfg.questions == Questions::Generic {
        for s in &mut samples {
            s.record.question = GENERIC_QUESTION.into();
        }
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaSummary {
    pub samples: usize,
    pub answers: usize,
    pub question_tokens: usize,
    pub epochs: usize,
    pub final_loss: f64,
    pub final_accuracy: f64,
}

/// Fit the VQA network on the train split.
pub fn train_vqa(cfg: &RunConfig, mut on_epoch: impl FnMut(&vqa::EpochStats)) -> Result<VqaSummary, CliError> {
    let manifest = load_manifest(cfg, "train-vqa")?;
    let samples = vqa_samples(cfg, &manifest, Split::Train)?;
    let train: Vec<_> = samples.iter().map(|s| s.record.clone()).collect();
    let (qv, av) = build_vocabs(&train, &distractors(cfg)?);
    let dir = cfg.model_dir();
    let mut log = String::new();
    let out = vqa::train_vqa(&samples, &qv, &av, &cfg.model_config(), &vqa_train_config(cfg), |s| {
        log.push_str(&serde_json::to_string(s).expect("stats serialize"));
        log.push('\n');
        on_epoch(s);
    })?;
    out.vqa.save(&dir)?;
    write_file(&dir.join(TRAIN_LOG), &log)?;
    let last = out.history.last();
    let summary = VqaSummary {
        samples: samples.len(),
        answers: av.len(),
        question_tokens: qv.len(),
        epochs: out.history.len(),
        final_loss: last.map_or(f64::NAN, |s| s.loss),
        final_accuracy: last.map_or(f64::NAN, |s| s.accuracy),
    };
    write_file(&dir.join(SUMMARY), &to_json(&summary))?;
    Stamp::new("train-vqa", cfg).write(&dir)?;
    Ok(summary)
}

pub fn load_vqa(dir: &Path, stage: &'static str) -> Result<Vqa, CliError> {
    for f in Vqa::FILES {
        require(stage, dir.join(f), "train-vqa")?;
    }
    Ok(Vqa::load(dir)?)
}

pub struct EvalOutput {
    pub test: EvalReport,
    pub train: EvalReport,
    /// On the test split.
    pub probe: QuestionProbe,
}

/// Score the trained model on both splits and write the reports.
pub fn eval_vqa(cfg: &RunConfig) -> Result<EvalOutput, CliError> {
    let model = load_vqa(&cfg.model_dir(), "eval-vqa")?;
    let manifest = load_manifest(cfg, "eval-vqa")?;
    let test_samples = vqa_samples(cfg, &manifest, Split::Test)?;
    let test = evaluate(&model, &test_samples)?;
    let probe = probe_questions(&model, &test_samples)?;
    let train = evaluate(&model, &vqa_samples(cfg, &manifest, Split::Train)?)?;
    let dir = cfg.reports_dir();
    write_file(&dir.join("eval.txt"), &test.to_text())?;
    write_file(&dir.join("eval.json"), &(test.to_json() + "\n"))?;
    write_file(&dir.join("train_eval.txt"), &train.to_text())?;
    write_file(&dir.join("train_eval.json"), &(train.to_json() + "\n"))?;
    write_file(&dir.join("question_probe.json"), &to_json(&probe))?;
    Stamp::new("eval-vqa", cfg).write(&dir)?;
    Ok(EvalOutput { test, train, probe })
}

/// Top-`k` answers for one frame file and question.
pub fn explain(model_dir: &Path, frame: &Path, question: &str, k: usize) -> Result<Prediction, CliError> {
    if question.trim().is_empty() {
        return Err(vqa::VqaError::EmptyQuestion.into());
    }
    let model = load_vqa(model_dir, "explain")?;
    let frame = read_frame(frame).map_err(|e| match e {
        xdrive_core::render::RenderError::Io(source) => CliError::File {
            path: frame.to_path_buf(),
            source,
        },
        other => other.into(),
    })?;
    Ok(model.predict_topk(&frame, question, k)?)
}

/// Every stage in order.
pub fn pipeline(cfg: &RunConfig, mut log: impl FnMut(&str)) -> Result<EvalOutput, CliError> {
    if cfg.driver == Driver::Agent {
        let a = train_agent(cfg)?;
        log(&format!(
            "train-agent: {} episodes, greedy {:?} return {:.1}",
            a.episodes, a.greedy_end, a.greedy_return
        ));
    }
    let r = record(cfg)?;
    log(&format!("record: {} frames", r.iter().map(|t| t.frames).sum::<usize>()));
    build_dataset(cfg)?;
    log("build-dataset: done");
    let v = train_vqa(cfg, |_| {})?;
    log(&format!("train-vqa: final accuracy {:.3}", v.final_accuracy));
    let e = eval_vqa(cfg)?;
    log(&format!("eval-vqa: test accuracy {:.3}", e.test.accuracy));
    Ok(e)
}
