use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::{extract_segments, Recording};
use super::{answer_for, question_for, DatasetError};
use crate::render::{write_frame, RenderConfig};
use crate::sim::{ActionCategory, Env};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One annotated frame. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QARecord {
    pub frame_id: String,
    /// Relative to the corpus root.
    pub frame_path: String,
    pub category: ActionCategory,
    pub question: String,
    pub answer: String,
    pub track_id: String,
    pub split: Split,
}

impl QARecord {
    pub fn new(frame_id: &str, track_id: &str, category: ActionCategory, split: Split) -> Self {
        Self {
            frame_id: frame_id.to_string(),
            frame_path: format!("frames/{frame_id}.png"),
            category,
            question: question_for(category).to_string(),
            answer: answer_for(category).to_string(),
            track_id: track_id.to_string(),
            split,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub records: Vec<QARecord>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> Vec<&QARecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn count(&self, split: Split, category: ActionCategory) -> usize {
        self.records
            .iter()
            .filter(|r| r.split == split && r.category == category)
            .count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_jsonl().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, DatasetError> {
        let mut records = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(&line)
                .map_err(|e| DatasetError::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
            records.push(r);
        }
        Ok(Self { records })
    }
}

/// A frame available for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRef {
    pub track_id: String,
    pub frame_id: String,
    pub category: ActionCategory,
}

pub type Pools = BTreeMap<ActionCategory, Vec<FrameRef>>;

/// `k` indices spread evenly over `0..n`.
pub fn uniform_indices(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| ((2 * i + 1) * n) / (2 * k)).collect()
}

/// Take exactly `per_category` frames of every category, evenly spaced in
/// each pool, and annotate them.
pub fn build_split(pools: &Pools, per_category: usize, split: Split) -> Result<Vec<QARecord>, DatasetError> {
    let mut out = Vec::with_capacity(per_category * 5);
    for category in ActionCategory::ALL {
        let pool = pools.get(&category).map(Vec::as_slice).unwrap_or(&[]);
        if pool.len() < per_category {
            return Err(DatasetError::InsufficientFrames {
                category,
                needed: per_category,
                available: pool.len(),
            });
        }
        for i in uniform_indices(pool.len(), per_category) {
            let f = &pool[i];
            out.push(QARecord::new(&f.frame_id, &f.track_id, category, split));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub train_per_category: usize,
    pub test_per_category: usize,
    /// Shortest constant-category run (in frames) that is used at all.
    pub min_segment: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            train_per_category: 50,
            test_per_category: 20,
            min_segment: 10,
        }
    }
}

/// Manual relabelling: `frame_id category` per line, `#` comments.
pub fn parse_overrides(text: &str) -> Result<HashMap<String, ActionCategory>, DatasetError> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(id), Some(cat), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(DatasetError::Format(format!("overrides line {}: expected `frame_id category`", i + 1)));
        };
        let cat = cat
            .parse()
            .map_err(|_| DatasetError::Format(format!("overrides line {}: unknown category `{cat}`", i + 1)))?;
        out.insert(id.to_string(), cat);
    }
    Ok(out)
}

/// Safe frames of each segment, after applying overrides, in drive order.
fn segment_pools(
    rec: &Recording,
    min_segment: usize,
    overrides: &HashMap<String, ActionCategory>,
) -> Vec<(ActionCategory, Vec<FrameRef>)> {
    let cats: Vec<ActionCategory> = rec
        .frames
        .iter()
        .map(|f| overrides.get(&f.frame_id).copied().unwrap_or(f.category))
        .collect();
    extract_segments(&cats, min_segment)
        .into_iter()
        .map(|seg| {
            let frames = rec.frames[seg.start..seg.end]
                .iter()
                .filter(|f| f.safe)
                .map(|f| FrameRef {
                    track_id: rec.track_id.clone(),
                    frame_id: f.frame_id.clone(),
                    category: seg.category,
                })
                .collect();
            (seg.category, frames)
        })
        .collect()
}

/// Train split from the first half (rounded up) of each category's segments
/// on the training track; test split half from the remaining training-track
/// segments and half from the held-out track.
pub fn build_corpus(
    train_track: &Recording,
    heldout_track: &Recording,
    cfg: &CorpusConfig,
    overrides: &HashMap<String, ActionCategory>,
) -> Result<Manifest, DatasetError> {
    let mut train_pools = Pools::new();
    let mut test_a = Pools::new();
    let segs = segment_pools(train_track, cfg.min_segment, overrides);
    for category in ActionCategory::ALL {
        let mine: Vec<&Vec<FrameRef>> = segs.iter().filter(|s| s.0 == category).map(|s| &s.1).collect();
        let keep = mine.len().div_ceil(2);
        train_pools.insert(category, mine[..keep].iter().flat_map(|v| v.iter().cloned()).collect());
        test_a.insert(category, mine[keep..].iter().flat_map(|v| v.iter().cloned()).collect());
    }
    let mut test_b = Pools::new();
    for (category, frames) in segment_pools(heldout_track, cfg.min_segment, overrides) {
        test_b.entry(category).or_default().extend(frames);
    }

    let mut records = build_split(&train_pools, cfg.train_per_category, Split::Train)?;
    let from_a = cfg.test_per_category / 2;
    let mut test = Vec::new();
    for category in ActionCategory::ALL {
        let a = test_a.get(&category).map(Vec::as_slice).unwrap_or(&[]);
        let b = test_b.get(&category).map(Vec::as_slice).unwrap_or(&[]);
        // fall back to the other track when one side is short
        let take_a = from_a.min(a.len()).max(cfg.test_per_category.saturating_sub(b.len()));
        let take_b = cfg.test_per_category.saturating_sub(take_a);
        if take_a > a.len() || take_b > b.len() {
            return Err(DatasetError::InsufficientFrames {
                category,
                needed: cfg.test_per_category,
                available: a.len() + b.len(),
            });
        }
        for (pool, k) in [(a, take_a), (b, take_b)] {
            for i in uniform_indices(pool.len(), k) {
                let f = &pool[i];
                test.push(QARecord::new(&f.frame_id, &f.track_id, category, Split::Test));
            }
        }
    }
    records.extend(test);
    Ok(Manifest { records })
}

/// Render every manifest frame into `root/frames/` and write
/// `root/manifest.jsonl`.
pub fn write_corpus(
    root: &Path,
    manifest: &Manifest,
    sources: &[(&Env, &Recording)],
    cfg: &RenderConfig,
) -> Result<(), DatasetError> {
    fs::create_dir_all(root.join("frames"))?;
    for r in &manifest.records {
        let (env, rec) = sources
            .iter()
            .find(|(_, rec)| rec.track_id == r.track_id)
            .ok_or_else(|| DatasetError::Format(format!("no recording for track `{}`", r.track_id)))?;
        let fr = rec
            .find(&r.frame_id)
            .ok_or_else(|| DatasetError::Format(format!("frame `{}` not in recording", r.frame_id)))?;
        let mut frame = rec.render(env, fr.index, cfg)?;
        frame.meta.action_category = Some(r.category);
        write_frame(&frame, &root.join(&r.frame_path))?;
    }
    manifest.write(&root.join("manifest.jsonl"))
}
