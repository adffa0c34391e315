use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xdrive_core::dataset::CorpusConfig;
use xdrive_core::ddpg::Hyperparams;
use xdrive_core::render::RenderConfig;
use xdrive_core::sim::EnvConfig;
use xdrive_core::vqa::{TrainConfig, VqaConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// 64×64 grayscale frames, small networks.
    Desk,
    /// 640×480 color frames, full-size networks.
    PaperScale,
}

/// Who drives the recorded rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Driver {
    /// The trained actor.
    Agent,
    /// A pure-pursuit controller; lets the VQA stages run without an agent.
    Reference,
}

/// Which question the VQA stages pair with each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Questions {
    /// The per-action question from the corpus.
    Table,
    /// The same question for every frame; the image has to carry the action.
    Generic,
}

/// Where each stage puts its artifacts. Unset entries live under `work_dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub agent: Option<PathBuf>,
    pub recordings: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub reports: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

/// Everything a pipeline run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub track: String,
    /// Second track; contributes only to the test split.
    pub heldout_track: String,
    pub seed: u64,
    pub profile: Profile,
    pub work_dir: PathBuf,
    pub paths: Paths,
    pub waypoints: usize,
    pub driver: Driver,
    /// Recording frame rate.
    pub fps: f64,
    /// Answers returned by `explain` and the service.
    pub k: usize,
    pub env: EnvConfig,
    pub ddpg: Hyperparams,
    pub checkpoint_every: usize,
    pub corpus: CorpusConfig,
    /// `frame_id category` lines that relabel frames.
    pub overrides: Option<PathBuf>,
    /// One candidate answer per line; the shipped list when unset.
    pub distractors: Option<PathBuf>,
    /// Use this many generated distractors instead of a list.
    pub distractor_count: Option<usize>,
    pub questions: Questions,
    pub vqa: TrainConfig,
    /// Network shape; the profile's default when unset.
    pub model: Option<VqaConfig>,
    /// Replay speed of the service session, frames per second.
    pub playback_fps: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            track: "track-a".into(),
            heldout_track: "track-b".into(),
            seed: 0,
            profile: Profile::Desk,
            work_dir: PathBuf::from("runs/default"),
            paths: Paths::default(),
            waypoints: 15,
            driver: Driver::Agent,
            fps: 30.0,
            k: 5,
            env: EnvConfig::default(),
            ddpg: Hyperparams::default(),
            checkpoint_every: 0,
            corpus: CorpusConfig::default(),
            overrides: None,
            distractors: None,
            distractor_count: None,
            questions: Questions::Table,
            vqa: TrainConfig::default(),
            model: None,
            playback_fps: 10.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// sha256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.track == self.heldout_track {
            return Err(CliError::Config("track and heldout_track must differ".into()));
        }
        if !(self.fps > 0.0 && self.playback_fps > 0.0) {
            return Err(CliError::Config("fps and playback_fps must be positive".into()));
        }
        if self.k == 0 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        self.ddpg.validate()?;
        self.model_config().validate()?;
        self.render_config().validate()?;
        Ok(())
    }

    fn under(&self, p: &Option<PathBuf>, default: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.work_dir.join(default))
    }

    pub fn agent_dir(&self) -> PathBuf {
        self.under(&self.paths.agent, "agent")
    }

    pub fn recordings_dir(&self) -> PathBuf {
        self.under(&self.paths.recordings, "recordings")
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.under(&self.paths.corpus, "corpus")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.under(&self.paths.model, "vqa")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.under(&self.paths.reports, "reports")
    }

    pub fn history_path(&self) -> PathBuf {
        self.under(&self.paths.history, "history.jsonl")
    }

    pub fn recording_path(&self, track: &str) -> PathBuf {
        self.recordings_dir().join(format!("{track}.json"))
    }

    pub fn render_config(&self) -> RenderConfig {
        match self.profile {
            Profile::Desk => RenderConfig::desk(),
            Profile::PaperScale => RenderConfig::paper_scale(),
        }
    }

    pub fn model_config(&self) -> VqaConfig {
        self.model.clone().unwrap_or_else(|| match self.profile {
            Profile::Desk => VqaConfig::desk(1, 1),
            Profile::PaperScale => VqaConfig::paper(1, 1),
        })
    }
}

/// Values given on the command line win over the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML file with any subset of the run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub track: Option<String>,
    #[arg(long, global = true)]
    pub heldout_track: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    #[arg(long, global = true)]
    pub work_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub waypoints: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub driver: Option<Driver>,
    #[arg(long, global = true)]
    pub fps: Option<f64>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// DDPG training episodes.
    #[arg(long, global = true)]
    pub episodes: Option<usize>,
    #[arg(long, global = true)]
    pub checkpoint_every: Option<usize>,
    #[arg(long, global = true)]
    pub overrides: Option<PathBuf>,
    #[arg(long, global = true)]
    pub distractors: Option<PathBuf>,
    #[arg(long, global = true)]
    pub distractor_count: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub questions: Option<Questions>,
    /// VQA training epochs.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// VQA learning rate.
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub playback_fps: Option<f64>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$flag { c.$($field).+ = v.clone().into(); })*
            };
        }
        set!(
            seed => seed,
            track => track,
            heldout_track => heldout_track,
            profile => profile,
            work_dir => work_dir,
            waypoints => waypoints,
            driver => driver,
            fps => fps,
            k => k,
            episodes => ddpg.episodes,
            checkpoint_every => checkpoint_every,
            overrides => overrides,
            distractors => distractors,
            distractor_count => distractor_count,
            questions => questions,
            epochs => vqa.epochs,
            batch_size => vqa.batch_size,
            lr => vqa.lr,
            playback_fps => playback_fps,
        );
        c.validate()?;
        Ok(c)
    }
}
