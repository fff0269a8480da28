//! Dataset loading, validation, normalization and splitting.
//!
//! Files are UTF-8 JSON Lines, one episode per `\n`-terminated line:
//!
//! ```text
//! {"id": "...", "goal": "...", "subset": "general",
//!  "steps": [{"image_ref": "...",
//!             "layout": [{"name": "...", "y": 0.5, "x": 0.5,
//!                         "y_min": 0.4, "x_min": 0.4, "y_max": 0.6, "x_max": 0.6}],
//!             "action": {"action_type": "DUAL_POINT",
//!                        "touch_y": 0.5, "touch_x": 0.5, "lift_y": 0.5, "lift_x": 0.5,
//!                        "typed_text": ""},
//!             "agent_utterance": "...", "user_utterance": "..."}]}
//! ```
//!
//! The four bbox fields are optional as a group; items without them get a
//! synthetic box around the center. `subset` falls back to the manifest tag.
//! Utterances are only accepted for META-GUI style manifests. A step may
//! carry `"cap": "<action line>"` instead of `"action"`; that form is written
//! by the `encode` command and read back by [`read_cap_records`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cap::{self, CapConfig};
use crate::model::{
    validate_episode, ActionType, BoundingBox, CanonicalAction, Episode, LayoutItem, Point,
    ScreenObservation, Step, SENTINEL,
};

/// Size of the validation prefix taken from the test split.
pub const DEV_PREFIX_SIZE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    AitwJsonl,
    MetaguiJsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSource {
    pub tag: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    Fractions {
        train: f64,
        dev: f64,
        test: f64,
        #[serde(default)]
        seed: u64,
        /// Validation set is the first 1000 test episodes instead of its own fraction.
        #[serde(default)]
        dev_from_test: bool,
    },
    Files {
        train: Vec<PathBuf>,
        dev: Vec<PathBuf>,
        test: Vec<PathBuf>,
    },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Fractions {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
            seed: 0,
            dev_from_test: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub format: DatasetFormat,
    pub subsets: Vec<SubsetSource>,
    #[serde(default)]
    pub split: SplitSpec,
}

impl DatasetManifest {
    pub fn single(name: &str, format: DatasetFormat, tag: &str, path: impl Into<PathBuf>) -> Self {
        Self {
            name: name.to_string(),
            format,
            subsets: vec![SubsetSource {
                tag: tag.to_string(),
                path: path.into(),
            }],
            split: SplitSpec::default(),
        }
    }

    /// Resolves relative paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.subsets.iter_mut().for_each(|s| fix(&mut s.path));
        if let SplitSpec::Files { train, dev, test } = &mut self.split {
            train
                .iter_mut()
                .chain(dev.iter_mut())
                .chain(test.iter_mut())
                .for_each(fix);
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.subsets.is_empty() {
            return Err(IngestError::Manifest("no subsets listed".into()));
        }
        let mut paths: Vec<&PathBuf> = self.subsets.iter().map(|s| &s.path).collect();
        match &self.split {
            SplitSpec::Fractions {
                train, dev, test, ..
            } => {
                if [train, dev, test].iter().any(|f| !(0.0..=1.0).contains(*f)) {
                    return Err(IngestError::Manifest(
                        "split fractions must lie in [0, 1]".into(),
                    ));
                }
                if (train + dev + test - 1.0).abs() > 1e-9 {
                    return Err(IngestError::Manifest(format!(
                        "split fractions sum to {}, not 1",
                        train + dev + test
                    )));
                }
            }
            SplitSpec::Files { train, dev, test } => {
                paths.extend(train.iter().chain(dev).chain(test))
            }
        }
        for p in paths {
            if !p.exists() {
                return Err(IngestError::Manifest(format!(
                    "{} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("no episodes to split")]
    NoEpisodes,
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("episode {0} is not listed in any split file")]
    Unassigned(String),
    #[error("reading split file: {0}")]
    Io(String),
}

// ---------------------------------------------------------------------------
// Wire records
// ---------------------------------------------------------------------------

fn sentinel() -> f64 {
    SENTINEL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub action_type: ActionType,
    #[serde(default = "sentinel")]
    pub touch_y: f64,
    #[serde(default = "sentinel")]
    pub touch_x: f64,
    #[serde(default = "sentinel")]
    pub lift_y: f64,
    #[serde(default = "sentinel")]
    pub lift_x: f64,
    #[serde(default)]
    pub typed_text: String,
}

impl From<&CanonicalAction> for ActionRecord {
    fn from(a: &CanonicalAction) -> Self {
        Self {
            action_type: a.action_type,
            touch_y: a.touch_point.y,
            touch_x: a.touch_point.x,
            lift_y: a.lift_point.y,
            lift_x: a.lift_point.x,
            typed_text: a.typed_text.clone(),
        }
    }
}

impl From<&ActionRecord> for CanonicalAction {
    fn from(r: &ActionRecord) -> Self {
        CanonicalAction {
            action_type: r.action_type,
            touch_point: Point::new(r.touch_y, r.touch_x),
            lift_point: Point::new(r.lift_y, r.lift_x),
            typed_text: r.typed_text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRecord {
    pub name: String,
    pub y: f64,
    pub x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
}

impl From<&LayoutItem> for LayoutRecord {
    fn from(item: &LayoutItem) -> Self {
        let bbox = item.bbox.filter(|_| !item.synthetic_bbox);
        Self {
            name: item.name.clone(),
            y: item.center.y,
            x: item.center.x,
            y_min: bbox.map(|b| b.y_min),
            x_min: bbox.map(|b| b.x_min),
            y_max: bbox.map(|b| b.y_max),
            x_max: bbox.map(|b| b.x_max),
        }
    }
}

impl LayoutRecord {
    pub fn to_item(&self) -> Result<LayoutItem, String> {
        let center = Point::new(self.y, self.x);
        match (self.y_min, self.x_min, self.y_max, self.x_max) {
            (Some(y_min), Some(x_min), Some(y_max), Some(x_max)) => Ok(LayoutItem {
                name: self.name.clone(),
                center,
                bbox: Some(BoundingBox::new(y_min, x_min, y_max, x_max)),
                synthetic_bbox: false,
            }),
            (None, None, None, None) => Ok(LayoutItem::at(self.name.clone(), center)),
            _ => Err(format!("layout item {:?} has a partial bbox", self.name)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub image_ref: String,
    #[serde(default)]
    pub layout: Vec<LayoutRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_utterance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_utterance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub id: String,
    pub goal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    pub steps: Vec<StepRecord>,
}

impl From<&Episode> for EpisodeRecord {
    fn from(ep: &Episode) -> Self {
        Self {
            id: ep.id.clone(),
            goal: ep.goal.clone(),
            subset: Some(ep.subset.clone()),
            steps: ep
                .steps
                .iter()
                .map(|s| StepRecord {
                    image_ref: s.observation.image_ref.clone(),
                    layout: s
                        .observation
                        .layout
                        .iter()
                        .map(LayoutRecord::from)
                        .collect(),
                    action: Some(ActionRecord::from(&s.gold_action)),
                    cap: None,
                    agent_utterance: s.agent_utterance.clone(),
                    user_utterance: s.user_utterance.clone(),
                })
                .collect(),
        }
    }
}

/// One JSON line for `ep`, without the trailing newline.
pub fn episode_to_line(ep: &Episode) -> String {
    serde_json::to_string(&EpisodeRecord::from(ep)).expect("episode records serialize")
}

pub fn write_episodes(path: &Path, episodes: &[Episode]) -> Result<(), IngestError> {
    let mut out = String::new();
    for ep in episodes {
        out.push_str(&episode_to_line(ep));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Turns a record into an episode without normalizing gold actions.
/// Returns the episode plus the list of automatic fixes applied.
pub fn record_to_episode(
    rec: &EpisodeRecord,
    default_subset: &str,
) -> Result<(Episode, Vec<String>), Vec<String>> {
    let mut fixes = Vec::new();
    let mut problems = Vec::new();
    let mut steps = Vec::with_capacity(rec.steps.len());
    for (i, s) in rec.steps.iter().enumerate() {
        let layout: Vec<LayoutItem> = s
            .layout
            .iter()
            .filter_map(|l| {
                l.to_item()
                    .map_err(|e| problems.push(format!("step {i}: {e}")))
                    .ok()
            })
            .collect();
        let Some(action) = &s.action else {
            problems.push(format!("step {i}: missing \"action\""));
            continue;
        };
        let mut gold = CanonicalAction::from(action);
        if gold.action_type == ActionType::Type
            && (!gold.touch_point.is_sentinel() || !gold.lift_point.is_sentinel())
        {
            gold.touch_point = Point::NONE;
            gold.lift_point = Point::NONE;
            fixes.push(format!("step {i}: TYPE points reset to sentinel"));
        }
        steps.push(Step {
            observation: ScreenObservation {
                image_ref: s.image_ref.clone(),
                layout,
            },
            gold_action: gold,
            agent_utterance: s.agent_utterance.clone(),
            user_utterance: s.user_utterance.clone(),
        });
    }
    if !problems.is_empty() {
        return Err(problems);
    }
    let ep = Episode {
        id: rec.id.clone(),
        goal: rec.goal.clone(),
        subset: rec
            .subset
            .clone()
            .unwrap_or_else(|| default_subset.to_string()),
        steps,
    };
    Ok((ep, fixes))
}

/// Applies gold normalization to every step.
pub fn normalize_episode(ep: &mut Episode, cap_cfg: &CapConfig) {
    for step in &mut ep.steps {
        step.gold_action =
            cap::normalize_gold(&step.gold_action, &step.observation.layout, cap_cfg);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemaViolation {
    pub path: PathBuf,
    pub line: usize,
    pub episode_id: Option<String>,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub episodes: Vec<Episode>,
    pub violations: Vec<SchemaViolation>,
    pub fixes: Vec<String>,
    pub lines_read: usize,
}

struct FileLoad {
    episodes: Vec<(usize, Episode)>,
    violations: Vec<SchemaViolation>,
    fixes: Vec<String>,
    lines: usize,
}

fn load_file(
    src: &SubsetSource,
    format: DatasetFormat,
    cap_cfg: &CapConfig,
) -> Result<FileLoad, IngestError> {
    let file = fs::File::open(&src.path).map_err(|source| IngestError::Io {
        path: src.path.clone(),
        source,
    })?;
    let mut out = FileLoad {
        episodes: Vec::new(),
        violations: Vec::new(),
        fixes: Vec::new(),
        lines: 0,
    };
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: src.path.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.lines += 1;
        let rec: EpisodeRecord =
            serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
                path: src.path.clone(),
                line: lineno,
                message: e.to_string(),
            })?;
        let violation = |messages| SchemaViolation {
            path: src.path.clone(),
            line: lineno,
            episode_id: Some(rec.id.clone()),
            messages,
        };
        let (mut ep, fixes) = match record_to_episode(&rec, &src.tag) {
            Ok(v) => v,
            Err(problems) => {
                out.violations.push(violation(problems));
                continue;
            }
        };
        let mut problems = validate_episode(&ep);
        if format == DatasetFormat::AitwJsonl
            && ep
                .steps
                .iter()
                .any(|s| s.agent_utterance.is_some() || s.user_utterance.is_some())
        {
            problems.push("utterances are only allowed in META-GUI style datasets".into());
        }
        if !problems.is_empty() {
            out.violations.push(violation(problems));
            continue;
        }
        out.fixes.extend(
            fixes
                .into_iter()
                .map(|f| format!("{}:{lineno}: {f}", src.path.display())),
        );
        normalize_episode(&mut ep, cap_cfg);
        out.episodes.push((lineno, ep));
    }
    Ok(out)
}

/// Loads every subset file of `manifest` (files are read in parallel),
/// normalizes gold actions and keeps source order. Lines that parse but
/// break an invariant are listed in the report and skipped.
pub fn load_episodes(
    manifest: &DatasetManifest,
    cap_cfg: &CapConfig,
) -> Result<LoadReport, IngestError> {
    manifest.validate()?;
    cap_cfg
        .validate()
        .map_err(|e| IngestError::Manifest(e.to_string()))?;
    let loads: Vec<Result<FileLoad, IngestError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = manifest
            .subsets
            .iter()
            .map(|src| scope.spawn(move || load_file(src, manifest.format, cap_cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("loader thread panicked"))
            .collect()
    });
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for (src, load) in manifest.subsets.iter().zip(loads) {
        let load = load?;
        report.lines_read += load.lines;
        report.violations.extend(load.violations);
        report.fixes.extend(load.fixes);
        for (line, ep) in load.episodes {
            if !seen.insert(ep.id.clone()) {
                report.violations.push(SchemaViolation {
                    path: src.path.clone(),
                    line,
                    episode_id: Some(ep.id.clone()),
                    messages: vec![format!("duplicate episode id {:?}", ep.id)],
                });
                continue;
            }
            report.episodes.push(ep);
        }
    }
    Ok(report)
}

/// Reads a file of CAP-form records (steps carry `cap` strings).
pub fn read_cap_records(path: &Path) -> Result<Vec<EpisodeRecord>, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IngestError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Episode>,
    pub dev: Vec<Episode>,
    pub test: Vec<Episode>,
}

fn read_ids(path: &Path) -> Result<Vec<String>, SplitError> {
    let text =
        fs::read_to_string(path).map_err(|e| SplitError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l)
                .ok()
                .and_then(|v| v.get("id").and_then(|id| id.as_str()).map(str::to_string))
                .ok_or_else(|| SplitError::Io(format!("{}: line without an id", path.display())))
        })
        .collect()
}

/// Splits by episode, never by step. Fraction splits shuffle episode indices
/// with a seeded ChaCha8 generator; each split keeps source order.
pub fn split_dataset(
    episodes: &[Episode],
    manifest: &DatasetManifest,
) -> Result<DatasetSplit, SplitError> {
    if episodes.is_empty() {
        return Err(SplitError::NoEpisodes);
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| episodes[i].clone()).collect::<Vec<_>>();
    match &manifest.split {
        SplitSpec::Fractions {
            train,
            dev,
            test,
            seed,
            dev_from_test,
        } => {
            let n = episodes.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let n_train = ((n as f64) * train).round() as usize;
            let n_train = n_train.min(n);
            let mut train_idx = order[..n_train].to_vec();
            train_idx.sort_unstable();
            let (mut dev_idx, mut test_idx) = if *dev_from_test {
                let mut test_idx = order[n_train..].to_vec();
                test_idx.sort_unstable();
                let dev_idx = test_idx[..test_idx.len().min(DEV_PREFIX_SIZE)].to_vec();
                (dev_idx, test_idx)
            } else {
                let n_dev = (((n as f64) * dev).round() as usize).min(n - n_train);
                (
                    order[n_train..n_train + n_dev].to_vec(),
                    order[n_train + n_dev..].to_vec(),
                )
            };
            dev_idx.sort_unstable();
            test_idx.sort_unstable();
            for (name, frac, idx) in [
                ("train", *train, &train_idx),
                ("dev", if *dev_from_test { *test } else { *dev }, &dev_idx),
                ("test", *test, &test_idx),
            ] {
                if frac > 0.0 && idx.is_empty() {
                    return Err(SplitError::EmptySplit(name));
                }
            }
            Ok(DatasetSplit {
                train: pick(&train_idx),
                dev: pick(&dev_idx),
                test: pick(&test_idx),
            })
        }
        SplitSpec::Files { train, dev, test } => {
            let mut assign: HashMap<String, usize> = HashMap::new();
            for (slot, files) in [train, dev, test].into_iter().enumerate() {
                for f in files {
                    for id in read_ids(f)? {
                        assign.entry(id).or_insert(slot);
                    }
                }
            }
            let mut out = DatasetSplit::default();
            for ep in episodes {
                match assign.get(&ep.id) {
                    Some(0) => out.train.push(ep.clone()),
                    Some(1) => out.dev.push(ep.clone()),
                    Some(_) => out.test.push(ep.clone()),
                    None => return Err(SplitError::Unassigned(ep.id.clone())),
                }
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SubsetStats {
    pub episodes: usize,
    pub steps: usize,
    pub type_counts: BTreeMap<ActionType, usize>,
    /// Share of each canonical action type among this subset's steps.
    pub type_proportions: BTreeMap<ActionType, f64>,
    pub agent_utterances: usize,
    pub user_utterances: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetStats {
    pub episodes: usize,
    pub steps: usize,
    pub subsets: BTreeMap<String, SubsetStats>,
    pub overall: SubsetStats,
}

fn finish(s: &mut SubsetStats) {
    s.type_proportions = ActionType::ALL
        .iter()
        .map(|t| {
            let c = s.type_counts.get(t).copied().unwrap_or(0);
            let p = if s.steps == 0 {
                0.0
            } else {
                c as f64 / s.steps as f64
            };
            (*t, p)
        })
        .collect();
}

pub fn dataset_stats(episodes: &[Episode]) -> DatasetStats {
    let mut stats = DatasetStats::default();
    for ep in episodes {
        let sub = stats.subsets.entry(ep.subset.clone()).or_default();
        for s in [&mut *sub, &mut stats.overall] {
            s.episodes += 1;
            s.steps += ep.steps.len();
            for step in &ep.steps {
                *s.type_counts
                    .entry(step.gold_action.action_type)
                    .or_default() += 1;
                s.agent_utterances += usize::from(step.agent_utterance.is_some());
                s.user_utterances += usize::from(step.user_utterance.is_some());
            }
        }
    }
    stats.episodes = stats.overall.episodes;
    stats.steps = stats.overall.steps;
    stats.subsets.values_mut().for_each(finish);
    finish(&mut stats.overall);
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn ep(id: &str) -> Episode {
        Episode {
            id: id.into(),
            goal: "g".into(),
            subset: "general".into(),
            steps: vec![Step::new(
                ScreenObservation {
                    image_ref: format!("{id}.png"),
                    layout: vec![],
                },
                CanonicalAction::simple(ActionType::PressHome),
            )],
        }
    }

    fn fraction_manifest(seed: u64, dev_from_test: bool) -> DatasetManifest {
        DatasetManifest {
            name: "t".into(),
            format: DatasetFormat::AitwJsonl,
            subsets: vec![],
            split: SplitSpec::Fractions {
                train: 0.8,
                dev: 0.1,
                test: 0.1,
                seed,
                dev_from_test,
            },
        }
    }

    #[test]
    fn eight_one_one() {
        let eps: Vec<_> = (0..10).map(|i| ep(&format!("e{i}"))).collect();
        let s = split_dataset(&eps, &fraction_manifest(7, false)).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (8, 1, 1));
        let mut ids: Vec<_> = s
            .train
            .iter()
            .chain(&s.dev)
            .chain(&s.test)
            .map(|e| e.id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn split_is_deterministic() {
        let eps: Vec<_> = (0..50).map(|i| ep(&format!("e{i}"))).collect();
        let a = split_dataset(&eps, &fraction_manifest(3, false)).unwrap();
        let b = split_dataset(&eps, &fraction_manifest(3, false)).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&eps, &fraction_manifest(4, false)).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn dev_split_from_test_prefix() {
        let eps: Vec<_> = (0..500).map(|i| ep(&format!("e{i:03}"))).collect();
        let mut m = fraction_manifest(1, true);
        if let SplitSpec::Fractions {
            train, dev, test, ..
        } = &mut m.split
        {
            *train = 0.8;
            *dev = 0.0;
            *test = 0.2;
        }
        let s = split_dataset(&eps, &m).unwrap();
        assert_eq!(s.test.len(), 100);
        assert_eq!(s.dev, s.test[..100]);
    }

    #[test]
    fn empty_split_is_an_error() {
        let eps = vec![ep("a"), ep("b")];
        assert_eq!(
            split_dataset(&eps, &fraction_manifest(0, false)),
            Err(SplitError::EmptySplit("dev"))
        );
        assert_eq!(
            split_dataset(&[], &fraction_manifest(0, false)),
            Err(SplitError::NoEpisodes)
        );
    }

    #[test]
    fn file_split_partitions_by_listed_ids() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, ids: &[&str]| {
            let p = dir.path().join(name);
            let mut f = fs::File::create(&p).unwrap();
            for id in ids {
                writeln!(f, "{{\"id\": \"{id}\"}}").unwrap();
            }
            p
        };
        let m = DatasetManifest {
            split: SplitSpec::Files {
                train: vec![write("train.jsonl", &["a", "b"])],
                dev: vec![write("dev.jsonl", &["c"])],
                test: vec![write("test.jsonl", &["d"])],
            },
            ..fraction_manifest(0, false)
        };
        let eps = vec![ep("a"), ep("b"), ep("c"), ep("d")];
        let s = split_dataset(&eps, &m).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (2, 1, 1));
        assert_eq!(
            split_dataset(&[ep("zzz")], &m),
            Err(SplitError::Unassigned("zzz".into()))
        );
    }

    #[test]
    fn type_points_fixed_to_sentinel() {
        let line = r#"{"id":"x","goal":"g","steps":[{"image_ref":"i","action":{"action_type":"TYPE","touch_y":0.5,"touch_x":0.5,"lift_y":0.5,"lift_x":0.5,"typed_text":"hi"}}]}"#;
        let rec: EpisodeRecord = serde_json::from_str(line).unwrap();
        let (ep, fixes) = record_to_episode(&rec, "general").unwrap();
        assert_eq!(fixes.len(), 1);
        assert!(ep.steps[0].gold_action.touch_point.is_sentinel());
        assert_eq!(ep.subset, "general");
    }

    #[test]
    fn partial_bbox_is_a_violation() {
        let line = r#"{"id":"x","goal":"g","steps":[{"image_ref":"i","layout":[{"name":"a","y":0.5,"x":0.5,"y_min":0.4}],"action":{"action_type":"PRESS_HOME"}}]}"#;
        let rec: EpisodeRecord = serde_json::from_str(line).unwrap();
        assert!(record_to_episode(&rec, "general").is_err());
    }

    #[test]
    fn stats_proportions() {
        let mut e = ep("a");
        e.steps.push(e.steps[0].clone());
        e.steps.push(Step::new(
            e.steps[0].observation.clone(),
            CanonicalAction::type_text("x"),
        ));
        e.steps.push(Step::new(
            e.steps[0].observation.clone(),
            CanonicalAction::type_text("y"),
        ));
        let s = dataset_stats(&[e]);
        assert_eq!(s.steps, 4);
        assert_eq!(s.overall.type_proportions[&ActionType::PressHome], 0.5);
        assert_eq!(s.overall.type_proportions[&ActionType::Type], 0.5);
        let total: f64 = s.overall.type_proportions.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}
