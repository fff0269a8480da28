//! Analysis tasks built on top of the prompt builder: element-replacement
//! probes, ablation configurations and n-next future-action samples.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cap::CapConfig;
use crate::cep::{self, CepConfig, CepError, HistoryItem, HistoryMode, PromptBundle};
use crate::eval::{self, MatchConfig, MatchVerdict};
use crate::model::{Episode, ScreenObservation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReplacedElement {
    None,
    Goal,
    Image,
    Layout,
    History,
}

impl ReplacedElement {
    pub const ALL: [ReplacedElement; 5] = [
        Self::None,
        Self::Goal,
        Self::Image,
        Self::Layout,
        Self::History,
    ];
    pub const REPLACEABLE: [ReplacedElement; 4] =
        [Self::Goal, Self::Image, Self::Layout, Self::History];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::None => "NONE",
            Self::Goal => "GOAL",
            Self::Image => "IMAGE",
            Self::Layout => "LAYOUT",
            Self::History => "HISTORY",
        }
    }
}

impl fmt::Display for ReplacedElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("need at least 2 episodes, got {0}")]
    TooSmall(usize),
    #[error("none_fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error("n must be at least 1")]
    ZeroHorizon,
    #[error("no donor step differs from {episode}#{step} in its {element}")]
    NoDonor {
        episode: String,
        step: usize,
        element: ReplacedElement,
    },
    #[error("{episode}#{step}: {source}")]
    Prompt {
        episode: String,
        step: usize,
        source: CepError,
    },
    #[error("probe file: {0}")]
    Io(#[from] io::Error),
    #[error("probe file line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub episode_id: String,
    pub step_index: usize,
    pub base: PromptBundle,
    pub probed: PromptBundle,
    #[serde(rename = "label")]
    pub replaced: ReplacedElement,
    pub donor_episode_id: Option<String>,
    pub donor_step_index: Option<usize>,
    /// Gold next action of the base step.
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub seed: u64,
    pub none_fraction: f64,
    pub count: usize,
}

/// Prompt sections compared by the label oracle.
fn sections(p: &PromptBundle) -> (&str, &str, &[String], &[String]) {
    (p.goal(), &p.image_ref, p.layout_lines(), p.history_lines())
}

struct Pool<'a> {
    dataset: &'a [Episode],
    keys: Vec<(usize, usize)>,
    by_subset: BTreeMap<&'a str, Vec<usize>>,
}

impl<'a> Pool<'a> {
    fn new(dataset: &'a [Episode]) -> Self {
        let keys: Vec<(usize, usize)> = dataset
            .iter()
            .enumerate()
            .flat_map(|(e, ep)| (0..ep.steps.len()).map(move |t| (e, t)))
            .collect();
        let mut by_subset: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (k, (e, _)) in keys.iter().enumerate() {
            by_subset.entry(&dataset[*e].subset).or_default().push(k);
        }
        Self {
            dataset,
            keys,
            by_subset,
        }
    }
}

fn prompt_err(ep: &Episode, t: usize) -> impl FnOnce(CepError) -> ProbeError + '_ {
    move |source| ProbeError::Prompt {
        episode: ep.id.clone(),
        step: t,
        source,
    }
}

/// Base prompt with `element` taken from donor step `(d_ep, d_t)`.
fn replaced_prompt(
    ep: &Episode,
    t: usize,
    donor: &Episode,
    d_t: usize,
    element: ReplacedElement,
    cfg: &CepConfig,
    cap_cfg: &CapConfig,
) -> Result<PromptBundle, CepError> {
    let obs = &ep.steps[t].observation;
    let d_obs = &donor.steps[d_t].observation;
    let mut goal = ep.goal.as_str();
    let mut history: Vec<HistoryItem<'_>> = cep::gold_history(ep, t);
    let observation;
    let mut obs_ref = obs;
    match element {
        ReplacedElement::None => {}
        ReplacedElement::Goal => goal = &donor.goal,
        ReplacedElement::Image => {
            observation = ScreenObservation {
                image_ref: d_obs.image_ref.clone(),
                layout: obs.layout.clone(),
            };
            obs_ref = &observation;
        }
        ReplacedElement::Layout => {
            observation = ScreenObservation {
                image_ref: obs.image_ref.clone(),
                layout: d_obs.layout.clone(),
            };
            obs_ref = &observation;
        }
        ReplacedElement::History => history = cep::gold_history(donor, d_t),
    }
    cep::build_prompt(goal, obs_ref, &history, cfg, cap_cfg)
}

fn element_differs(base: &PromptBundle, probed: &PromptBundle, element: ReplacedElement) -> bool {
    let (bg, bi, bl, bh) = sections(base);
    let (pg, pi, pl, ph) = sections(probed);
    match element {
        ReplacedElement::None => true,
        ReplacedElement::Goal => bg != pg,
        ReplacedElement::Image => bi != pi,
        ReplacedElement::Layout => bl != pl,
        ReplacedElement::History => bh != ph,
    }
}

/// Draws `count` probes. Each picks a uniformly random step, then NONE with
/// probability `none_fraction` or else one of the four elements uniformly,
/// and swaps that element with the one of a random step of another episode
/// (same subset when possible) whose element actually differs.
///
/// Prompts are not truncated, so the replaced element always stays visible.
pub fn make_replacement_probes(
    dataset: &[Episode],
    params: &ProbeParams,
    cfg: &CepConfig,
    cap_cfg: &CapConfig,
) -> Result<Vec<ProbeSample>, ProbeError> {
    if dataset.len() < 2 {
        return Err(ProbeError::TooSmall(dataset.len()));
    }
    if !(0.0..=1.0).contains(&params.none_fraction) {
        return Err(ProbeError::BadFraction(params.none_fraction));
    }
    let pool = Pool::new(dataset);
    if pool.keys.is_empty() {
        return Err(ProbeError::TooSmall(0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut out = Vec::with_capacity(params.count);
    for _ in 0..params.count {
        let (e, t) = pool.keys[rng.gen_range(0..pool.keys.len())];
        let ep = &dataset[e];
        let element = if rng.gen_bool(params.none_fraction) {
            ReplacedElement::None
        } else {
            ReplacedElement::REPLACEABLE[rng.gen_range(0..4)]
        };
        let base = cep::build_step_prompt(ep, t, cfg, cap_cfg).map_err(prompt_err(ep, t))?;
        let target = cep::render_action(
            &ep.steps[t].gold_action,
            &ep.steps[t].observation.layout,
            HistoryMode::FullActions,
            cfg.use_cap_targets,
            cap_cfg,
        )
        .map_err(|err| prompt_err(ep, t)(err.into()))?;

        let (probed, donor) = if element == ReplacedElement::None {
            (base.clone(), None)
        } else {
            let (p, d) = find_donor(&pool, &mut rng, e, t, &base, element, cfg, cap_cfg)?;
            (p, Some(d))
        };
        out.push(ProbeSample {
            episode_id: ep.id.clone(),
            step_index: t,
            base,
            probed,
            replaced: element,
            donor_episode_id: donor.map(|(de, _)| dataset[de].id.clone()),
            donor_step_index: donor.map(|(_, dt)| dt),
            target,
        });
    }
    Ok(out)
}

const DONOR_ATTEMPTS: usize = 64;

/// Probed prompt plus the donor (episode, step) it borrowed from.
type Donated = (PromptBundle, (usize, usize));

#[allow(clippy::too_many_arguments)]
fn find_donor(
    pool: &Pool<'_>,
    rng: &mut ChaCha8Rng,
    e: usize,
    t: usize,
    base: &PromptBundle,
    element: ReplacedElement,
    cfg: &CepConfig,
    cap_cfg: &CapConfig,
) -> Result<Donated, ProbeError> {
    let dataset = pool.dataset;
    let ep = &dataset[e];
    let try_key = |k: usize| -> Result<Option<Donated>, ProbeError> {
        let (de, dt) = pool.keys[k];
        if de == e {
            return Ok(None);
        }
        let p = replaced_prompt(ep, t, &dataset[de], dt, element, cfg, cap_cfg)
            .map_err(prompt_err(ep, t))?;
        Ok(element_differs(base, &p, element).then_some((p, (de, dt))))
    };
    let same_subset = &pool.by_subset[ep.subset.as_str()];
    for candidates in [same_subset.as_slice(), &[]] {
        let draw = |rng: &mut ChaCha8Rng| {
            if candidates.is_empty() {
                rng.gen_range(0..pool.keys.len())
            } else {
                candidates[rng.gen_range(0..candidates.len())]
            }
        };
        for _ in 0..DONOR_ATTEMPTS {
            if let Some(found) = try_key(draw(rng))? {
                return Ok(found);
            }
        }
    }
    // Rare: almost every step looks the same. Scan in order.
    for k in 0..pool.keys.len() {
        if let Some(found) = try_key(k)? {
            return Ok(found);
        }
    }
    Err(ProbeError::NoDonor {
        episode: ep.id.clone(),
        step: t,
        element,
    })
}

/// Recovers the replaced element by comparing prompt sections.
pub fn diff_label(base: &PromptBundle, probed: &PromptBundle) -> Option<ReplacedElement> {
    let changed: Vec<ReplacedElement> = ReplacedElement::REPLACEABLE
        .into_iter()
        .filter(|el| element_differs(base, probed, *el))
        .collect();
    match changed.as_slice() {
        [] => Some(ReplacedElement::None),
        [one] => Some(*one),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// CAP strings.
    Cap,
    /// Raw canonical command JSON.
    CanonicalJson,
}

/// The five ablation rows, from goal and image only up to the full prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationRow {
    GoalImage = 1,
    WithCap = 2,
    WithLayout = 3,
    WithActionTypes = 4,
    WithFullActions = 5,
}

impl AblationRow {
    pub const ALL: [AblationRow; 5] = [
        Self::GoalImage,
        Self::WithCap,
        Self::WithLayout,
        Self::WithActionTypes,
        Self::WithFullActions,
    ];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i.checked_sub(1)?).copied()
    }
}

pub fn make_ablation_config(row: AblationRow) -> (CepConfig, TargetMode) {
    let base = CepConfig::default();
    let (include_layout, history_mode, cap) = match row {
        AblationRow::GoalImage => (false, HistoryMode::None, false),
        AblationRow::WithCap => (false, HistoryMode::None, true),
        AblationRow::WithLayout => (true, HistoryMode::None, true),
        AblationRow::WithActionTypes => (true, HistoryMode::TypesOnly, true),
        AblationRow::WithFullActions => (true, HistoryMode::FullActions, true),
    };
    let cfg = CepConfig {
        include_layout,
        history_mode,
        use_cap_targets: cap,
        ..base
    };
    (
        cfg,
        if cap {
            TargetMode::Cap
        } else {
            TargetMode::CanonicalJson
        },
    )
}

pub const FUTURE_SEPARATOR: &str = "\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FutureSample {
    pub episode_id: String,
    pub step_index: usize,
    pub prompt: PromptBundle,
    /// Gold actions `t..t+n`, oldest first.
    pub targets: Vec<String>,
}

impl FutureSample {
    pub fn target(&self) -> String {
        self.targets.join(FUTURE_SEPARATOR)
    }
}

/// One sample per step that has at least `n` actions left, with the prompt
/// the evaluation loop would send for that step.
pub fn make_future_samples(
    dataset: &[Episode],
    n: usize,
    cfg: &CepConfig,
    cap_cfg: &CapConfig,
) -> Result<Vec<FutureSample>, ProbeError> {
    if n == 0 {
        return Err(ProbeError::ZeroHorizon);
    }
    let mut out = Vec::new();
    for ep in dataset {
        for t in 0..(ep.steps.len() + 1).saturating_sub(n) {
            let prompt = cep::eval_step_prompt(ep, t, cfg, cap_cfg).map_err(prompt_err(ep, t))?;
            let targets = ep.steps[t..t + n]
                .iter()
                .map(|s| {
                    cep::render_action(
                        &s.gold_action,
                        &s.observation.layout,
                        HistoryMode::FullActions,
                        cfg.use_cap_targets,
                        cap_cfg,
                    )
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|err| prompt_err(ep, t)(err.into()))?;
            out.push(FutureSample {
                episode_id: ep.id.clone(),
                step_index: t,
                prompt,
                targets,
            });
        }
    }
    Ok(out)
}

/// Scores a multi-action prediction position by position against the gold
/// steps starting at `t`. Missing positions score as unparseable.
pub fn score_future(
    prediction: &str,
    ep: &Episode,
    t: usize,
    n: usize,
    cfg: &MatchConfig,
) -> Vec<MatchVerdict> {
    let mut lines = prediction
        .split(FUTURE_SEPARATOR)
        .filter(|l| !l.trim().is_empty());
    ep.steps[t..(t + n).min(ep.steps.len())]
        .iter()
        .map(|gold| eval::match_step(lines.next().unwrap_or(""), gold, cfg))
        .collect()
}

/// Accuracy of the k-th predicted action for k = 1..=n.
pub fn k_next_accuracy(per_sample: &[Vec<MatchVerdict>], n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let hits = per_sample
                .iter()
                .filter(|v| v.get(k).is_some_and(|v| v.action_correct))
                .count();
            if per_sample.is_empty() {
                0.0
            } else {
                hits as f64 / per_sample.len() as f64
            }
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ProbeHeader {
    kind: String,
    #[serde(flatten)]
    params: ProbeParams,
}

pub const PROBE_FILE_KIND: &str = "replacement_probes";

/// Header line with the generation parameters, then one sample per line.
pub fn write_probes(
    w: &mut impl Write,
    params: &ProbeParams,
    samples: &[ProbeSample],
) -> io::Result<()> {
    let header = ProbeHeader {
        kind: PROBE_FILE_KIND.into(),
        params: params.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for s in samples {
        writeln!(w, "{}", serde_json::to_string(s)?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ProbeLine {
    pub episode_id: String,
    pub step_index: usize,
    pub base: PromptText,
    pub probed: PromptText,
    pub label: ReplacedElement,
    pub donor_episode_id: Option<String>,
}

/// The serialized part of a prompt.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub image_ref: String,
}

pub fn read_probes(r: impl BufRead) -> Result<(ProbeParams, Vec<ProbeLine>), ProbeError> {
    let mut lines = r.lines().enumerate();
    let (_, first) = lines.next().ok_or(ProbeError::Format {
        line: 1,
        message: "empty file".into(),
    })?;
    let header: ProbeHeader = serde_json::from_str(&first?).map_err(|e| ProbeError::Format {
        line: 1,
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ProbeError::Format {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok((header.params, out))
}

#[derive(Debug, Serialize)]
struct FutureLine<'a> {
    #[serde(flatten)]
    sample: &'a FutureSample,
    target: String,
}

pub fn write_future(w: &mut impl Write, n: usize, samples: &[FutureSample]) -> io::Result<()> {
    writeln!(
        w,
        "{}",
        serde_json::json!({ "kind": "future_actions", "n": n })
    )?;
    for s in samples {
        let line = FutureLine {
            sample: s,
            target: s.target(),
        };
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cap;
    use crate::model::{ActionType, CanonicalAction, LayoutItem, Point, Step};

    fn episode(id: &str, goal: &str, n: usize) -> Episode {
        Episode {
            id: id.into(),
            goal: goal.into(),
            subset: "general".into(),
            steps: (0..n)
                .map(|t| {
                    let c = Point::new(0.1 + 0.1 * t as f64, 0.5);
                    Step::new(
                        ScreenObservation {
                            image_ref: format!("{id}_{t}.png"),
                            layout: vec![LayoutItem::at(format!("{id} item {t}"), c)],
                        },
                        if t % 2 == 0 {
                            CanonicalAction::dual_point(c, c)
                        } else {
                            CanonicalAction::simple(ActionType::PressBack)
                        },
                    )
                })
                .collect(),
        }
    }

    fn dataset() -> Vec<Episode> {
        vec![
            episode("a", "open maps", 4),
            episode("b", "check mail", 3),
            episode("c", "play music", 5),
        ]
    }

    fn params(seed: u64, count: usize) -> ProbeParams {
        ProbeParams {
            seed,
            none_fraction: 0.2,
            count,
        }
    }

    #[test]
    fn probes_are_deterministic() {
        let ds = dataset();
        let cfg = CepConfig::default();
        let a = make_replacement_probes(&ds, &params(3, 200), &cfg, &CapConfig::default()).unwrap();
        let b = make_replacement_probes(&ds, &params(3, 200), &cfg, &CapConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = make_replacement_probes(&ds, &params(4, 200), &cfg, &CapConfig::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn labels_are_recoverable() {
        let ds = dataset();
        let samples = make_replacement_probes(
            &ds,
            &params(9, 500),
            &CepConfig::default(),
            &CapConfig::default(),
        )
        .unwrap();
        for s in &samples {
            assert_eq!(diff_label(&s.base, &s.probed), Some(s.replaced), "{s:?}");
            if s.replaced != ReplacedElement::None {
                assert_ne!(s.donor_episode_id.as_deref(), Some(s.episode_id.as_str()));
            }
        }
    }

    #[test]
    fn goal_probe_changes_only_goal_line() {
        let ds = dataset();
        let samples = make_replacement_probes(
            &ds,
            &params(1, 300),
            &CepConfig::default(),
            &CapConfig::default(),
        )
        .unwrap();
        let s = samples
            .iter()
            .find(|s| s.replaced == ReplacedElement::Goal)
            .unwrap();
        let b: Vec<&str> = s.base.text.lines().collect();
        let p: Vec<&str> = s.probed.text.lines().collect();
        assert_eq!(b.len(), p.len());
        let diffs: Vec<usize> = (0..b.len()).filter(|i| b[*i] != p[*i]).collect();
        assert_eq!(diffs.len(), 1);
        assert!(p[diffs[0]].starts_with("Goal: "));
    }

    #[test]
    fn too_small_dataset() {
        let ds = vec![episode("a", "x", 3)];
        let r = make_replacement_probes(
            &ds,
            &params(0, 10),
            &CepConfig::default(),
            &CapConfig::default(),
        );
        assert!(matches!(r, Err(ProbeError::TooSmall(1))));
    }

    #[test]
    fn ablation_rows() {
        let (c1, m1) = make_ablation_config(AblationRow::GoalImage);
        assert!(!c1.include_layout && c1.history_mode == HistoryMode::None && !c1.use_cap_targets);
        assert_eq!(m1, TargetMode::CanonicalJson);
        let (c4, _) = make_ablation_config(AblationRow::WithActionTypes);
        assert_eq!(c4.history_mode, HistoryMode::TypesOnly);
        let (c5, m5) = make_ablation_config(AblationRow::WithFullActions);
        assert!(c5.include_layout && c5.history_mode == HistoryMode::FullActions && c5.h == 8);
        assert_eq!(m5, TargetMode::Cap);
        let all: Vec<_> = AblationRow::ALL
            .iter()
            .map(|r| make_ablation_config(*r))
            .collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
        assert_eq!(AblationRow::from_index(3), Some(AblationRow::WithLayout));
        assert_eq!(AblationRow::from_index(0), None);
    }

    #[test]
    fn future_counts() {
        let ds = vec![episode("a", "x", 3)];
        let cfg = CepConfig::default();
        let s3 = make_future_samples(&ds, 3, &cfg, &CapConfig::default()).unwrap();
        assert_eq!(s3.len(), 1);
        assert_eq!(s3[0].step_index, 0);
        for t in s3[0].target().split(FUTURE_SEPARATOR) {
            cap::parse_action(t).unwrap();
        }
        let all = dataset();
        let counts: Vec<usize> = (1..7)
            .map(|n| {
                make_future_samples(&all, n, &cfg, &CapConfig::default())
                    .unwrap()
                    .len()
            })
            .collect();
        assert_eq!(counts[0], 12);
        assert!(counts.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn future_scoring_by_position() {
        let ds = dataset();
        let cfg = CepConfig::default();
        let samples = make_future_samples(&ds, 3, &cfg, &CapConfig::default()).unwrap();
        let m = MatchConfig::default();
        let scored: Vec<Vec<MatchVerdict>> = samples
            .iter()
            .map(|s| {
                let ep = ds.iter().find(|e| e.id == s.episode_id).unwrap();
                let mut pred = s.targets.clone();
                pred[2] = "I need to <PRESS_HOME>".into();
                score_future(&pred.join("\n"), ep, s.step_index, 3, &m)
            })
            .collect();
        assert_eq!(k_next_accuracy(&scored, 3), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn probe_file_round_trip() {
        let ds = dataset();
        let p = params(5, 20);
        let samples =
            make_replacement_probes(&ds, &p, &CepConfig::default(), &CapConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_probes(&mut buf, &p, &samples).unwrap();
        let (back, lines) = read_probes(buf.as_slice()).unwrap();
        assert_eq!(back, p);
        assert_eq!(lines.len(), 20);
        assert_eq!(lines[3].label, samples[3].replaced);
        assert_eq!(lines[3].probed.text, samples[3].probed.text);
    }
}
