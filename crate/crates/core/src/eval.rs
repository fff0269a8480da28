//! Step matching and metric aggregation.
//!
//! A prediction is parsed, turned back into a canonical command and compared
//! with the normalized gold action field by field:
//!
//! * action type over the six canonical types,
//! * refactored verb over the eight templates ("CoT type"),
//! * for clicks and taps, the point: same element box or within `coord_tau`
//!   normalized Euclidean distance (a click naming the gold item also counts),
//! * for scrolls, the main direction,
//! * for typing, the gold text contained in the predicted text (or equal to
//!   it, in F1 mode); token F1 is always reported.
//!
//! An action is correct when its verb and every applicable field are correct.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::cap::{self, CapConfig, RefactoredAction, Verb};
use crate::model::{ActionType, BoundingBox, CanonicalAction, Point, Step};

pub const REPORT_SCHEMA: &str = "report/1";
pub const BLEU_VARIANT: &str =
    "sentence-bleu4 uniform weights, brevity penalty, add-one smoothing for n>=2 (nltk method2), lowercase whitespace tokens";

/// Prefix of the optional prediction line carrying a dialogue response.
pub const RESPONSE_PREFIX: &str = "Response:";

/// Slack on the distance threshold comparison, far below the 1e-4 grid of
/// rendered coordinates.
const TAU_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypedTextMode {
    Contains,
    F1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub coord_tau: f64,
    pub swipe_threshold: f64,
    pub typed_text_mode: TypedTextMode,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            coord_tau: 0.14,
            swipe_threshold: cap::DEFAULT_SWIPE_THRESHOLD,
            typed_text_mode: TypedTextMode::Contains,
        }
    }
}

impl MatchConfig {
    pub fn cap(&self) -> CapConfig {
        CapConfig {
            swipe_threshold: self.swipe_threshold,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.coord_tau > 0.0 && self.coord_tau < 1.0) {
            return Err(format!("coord_tau {} outside (0, 1)", self.coord_tau));
        }
        self.cap().validate().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchVerdict {
    pub action_correct: bool,
    pub act_type_correct: bool,
    pub cot_type_correct: bool,
    pub item_correct: Option<bool>,
    pub direction_correct: Option<bool>,
    pub text_correct: Option<bool>,
    pub input_f1: Option<f64>,
    pub bleu: Option<f64>,
    pub parse_failed: bool,
    pub gold_verb: Verb,
    pub predicted_verb: Option<Verb>,
}

impl MatchVerdict {
    /// Verdict for a step whose prediction is missing or unusable.
    pub fn failed(gold: &Step, cfg: &MatchConfig) -> Self {
        let gold_verb = gold_refactored(gold, cfg).map_or(Verb::Tap, |r| r.verb());
        let mut v = MatchVerdict {
            action_correct: false,
            act_type_correct: false,
            cot_type_correct: false,
            item_correct: None,
            direction_correct: None,
            text_correct: None,
            input_f1: None,
            bleu: gold.agent_utterance.as_ref().map(|_| 0.0),
            parse_failed: true,
            gold_verb,
            predicted_verb: None,
        };
        match gold_verb {
            Verb::Click | Verb::Tap => v.item_correct = Some(false),
            Verb::Scroll => v.direction_correct = Some(false),
            Verb::Type => {
                v.text_correct = Some(false);
                v.input_f1 = Some(0.0);
            }
            _ => {}
        }
        v
    }
}

/// True when some box holds both points or they are within `tau`.
pub fn coord_match(pred: Point, gold: Point, bboxes: &[BoundingBox], tau: f64) -> bool {
    bboxes
        .iter()
        .any(|b| b.contains(&pred) && b.contains(&gold))
        || pred.distance(&gold) <= tau + TAU_EPSILON
}

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

fn normalize_text(s: &str) -> String {
    tokens(s).join(" ")
}

/// Bag-of-tokens F1 over lowercased whitespace tokens.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = tokens(pred);
    let g = tokens(gold);
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn ngram_counts(toks: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_default() += 1;
        }
    }
    m
}

/// BLEU-4 of one prediction against one reference; see [`BLEU_VARIANT`].
pub fn bleu(pred: &str, reference: &str) -> f64 {
    let hyp = tokens(pred);
    let refs = tokens(reference);
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let h = ngram_counts(&hyp, n);
        let r = ngram_counts(&refs, n);
        let matched: usize = h
            .iter()
            .map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0)))
            .sum();
        let total = hyp.len().saturating_sub(n - 1).max(1);
        let p = if n == 1 {
            if matched == 0 {
                return 0.0;
            }
            matched as f64 / total as f64
        } else {
            (matched + 1) as f64 / (total + 1) as f64
        };
        log_sum += p.ln() / 4.0;
    }
    let (c, r) = (hyp.len() as f64, refs.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_sum.exp()
}

/// Splits a prediction into the action line(s) and an optional response.
pub fn split_prediction(pred_text: &str) -> (&str, Option<&str>) {
    let mut offset = 0;
    for line in pred_text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix(RESPONSE_PREFIX) {
            return (&pred_text[..offset], Some(rest.trim()));
        }
        offset += line.len();
    }
    (pred_text, None)
}

/// Parses a prediction in CAP form, or as a canonical JSON command refactored
/// against `layout`.
pub fn parse_prediction(
    action_text: &str,
    layout: &[crate::model::LayoutItem],
    cap_cfg: &CapConfig,
) -> Option<RefactoredAction> {
    let trimmed = action_text.trim_start();
    if trimmed.starts_with('{') {
        let a = CanonicalAction::from_command_json(trimmed)?;
        cap::refactor(&a, layout, cap_cfg).ok()
    } else {
        cap::parse_action(action_text).ok()
    }
}

fn gold_refactored(gold: &Step, cfg: &MatchConfig) -> Option<RefactoredAction> {
    cap::refactor(&gold.gold_action, &gold.observation.layout, &cfg.cap()).ok()
}

fn text_correct(pred: &str, gold: &str, mode: TypedTextMode) -> bool {
    let (p, g) = (normalize_text(pred), normalize_text(gold));
    match mode {
        TypedTextMode::Contains => p.contains(&g),
        TypedTextMode::F1 => p == g,
    }
}

pub fn match_step(pred_text: &str, gold: &Step, cfg: &MatchConfig) -> MatchVerdict {
    let cap_cfg = cfg.cap();
    let (action_text, response) = split_prediction(pred_text);
    let bleu_score = gold
        .agent_utterance
        .as_ref()
        .map(|u| bleu(response.unwrap_or(""), u));
    let Some(gold_r) = gold_refactored(gold, cfg) else {
        return MatchVerdict {
            bleu: bleu_score,
            ..MatchVerdict::failed(gold, cfg)
        };
    };
    let Some(pred_r) = parse_prediction(action_text, &gold.observation.layout, &cap_cfg) else {
        return MatchVerdict {
            bleu: bleu_score,
            ..MatchVerdict::failed(gold, cfg)
        };
    };
    let bboxes: Vec<BoundingBox> = gold
        .observation
        .layout
        .iter()
        .filter_map(|i| i.bbox)
        .collect();
    let gold_verb = gold_r.verb();
    let pred_verb = pred_r.verb();
    let mut v = MatchVerdict {
        action_correct: false,
        act_type_correct: cap::canonicalize(&pred_r).action_type == gold_verb.action_type(),
        cot_type_correct: pred_verb == gold_verb,
        item_correct: None,
        direction_correct: None,
        text_correct: None,
        input_f1: None,
        bleu: bleu_score,
        parse_failed: false,
        gold_verb,
        predicted_verb: Some(pred_verb),
    };
    match &gold_r {
        RefactoredAction::Click {
            item_name,
            tap_point,
        } => {
            let ok = match &pred_r {
                RefactoredAction::Click { item_name: p, .. } if p.trim() == item_name.trim() => {
                    true
                }
                other => other
                    .tap_point()
                    .is_some_and(|p| coord_match(p, *tap_point, &bboxes, cfg.coord_tau)),
            };
            v.item_correct = Some(ok);
        }
        RefactoredAction::Tap { tap_point } => {
            v.item_correct = Some(
                pred_r
                    .tap_point()
                    .is_some_and(|p| coord_match(p, *tap_point, &bboxes, cfg.coord_tau)),
            );
        }
        RefactoredAction::Scroll { direction } => {
            v.direction_correct = Some(
                matches!(&pred_r, RefactoredAction::Scroll { direction: d } if d == direction),
            );
        }
        RefactoredAction::Type { text } => match &pred_r {
            RefactoredAction::Type { text: p } => {
                v.text_correct = Some(text_correct(p, text, cfg.typed_text_mode));
                v.input_f1 = Some(token_f1(p, text));
            }
            _ => {
                v.text_correct = Some(false);
                v.input_f1 = Some(0.0);
            }
        },
        _ => {}
    }
    v.action_correct = v.cot_type_correct
        && [v.item_correct, v.direction_correct, v.text_correct]
            .iter()
            .all(|f| f.unwrap_or(true));
    v
}

/// One scored step, keyed for deterministic aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredStep {
    pub subset: String,
    pub episode_id: String,
    pub step_index: usize,
    pub action_type: ActionType,
    pub verdict: MatchVerdict,
    /// Set when no usable prediction was obtained; the verdict is all-false.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<StepFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepFailure {
    /// The backend answered with text that is neither CAP nor a command.
    Parse,
    /// Timeout, transport or protocol error.
    Backend,
    /// The step prompt could not be built or truncated.
    Prompt,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steps: usize,
    pub action_accuracy: f64,
    pub act_type_accuracy: f64,
    pub cot_type_accuracy: f64,
    pub item_accuracy: Option<f64>,
    pub direction_accuracy: Option<f64>,
    pub text_accuracy: Option<f64>,
    pub input_f1: Option<f64>,
    pub bleu: Option<f64>,
    pub parse_failures: usize,
    pub backend_failures: usize,
    pub prompt_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub action_type: ActionType,
    pub steps: usize,
    pub proportion: f64,
    pub action_accuracy: f64,
    pub type_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub summary: Summary,
    pub per_type: Vec<TypeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub bleu_variant: String,
    /// Resolved configuration that produced the numbers, filled by the caller.
    pub config: serde_json::Value,
    pub subsets: BTreeMap<String, SubsetReport>,
    /// Unweighted mean over subsets.
    pub overall_macro: Summary,
    /// Pooled over all steps.
    pub overall_micro: Summary,
}

fn mean_flag<'a>(
    it: impl Iterator<Item = &'a ScoredStep>,
    f: impl Fn(&MatchVerdict) -> bool,
) -> f64 {
    let (mut n, mut k) = (0usize, 0usize);
    for s in it {
        n += 1;
        k += usize::from(f(&s.verdict));
    }
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

fn mean_opt<'a>(
    it: impl Iterator<Item = &'a ScoredStep>,
    f: impl Fn(&MatchVerdict) -> Option<f64>,
) -> Option<f64> {
    let vals: Vec<f64> = it.filter_map(|s| f(&s.verdict)).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

fn count_failures(steps: &[&ScoredStep], kind: StepFailure) -> usize {
    steps.iter().filter(|s| s.failure == Some(kind)).count()
}

fn summarize(steps: &[&ScoredStep]) -> Summary {
    let flag = |o: Option<bool>| o.map(|b| if b { 1.0 } else { 0.0 });
    Summary {
        steps: steps.len(),
        action_accuracy: mean_flag(steps.iter().copied(), |v| v.action_correct),
        act_type_accuracy: mean_flag(steps.iter().copied(), |v| v.act_type_correct),
        cot_type_accuracy: mean_flag(steps.iter().copied(), |v| v.cot_type_correct),
        item_accuracy: mean_opt(steps.iter().copied(), |v| flag(v.item_correct)),
        direction_accuracy: mean_opt(steps.iter().copied(), |v| flag(v.direction_correct)),
        text_accuracy: mean_opt(steps.iter().copied(), |v| flag(v.text_correct)),
        input_f1: mean_opt(steps.iter().copied(), |v| v.input_f1),
        bleu: mean_opt(steps.iter().copied(), |v| v.bleu),
        parse_failures: count_failures(steps, StepFailure::Parse),
        backend_failures: count_failures(steps, StepFailure::Backend),
        prompt_failures: count_failures(steps, StepFailure::Prompt),
    }
}

fn macro_mean(parts: &[&Summary]) -> Summary {
    let n = parts.len() as f64;
    let mean = |f: &dyn Fn(&Summary) -> f64| {
        if parts.is_empty() {
            0.0
        } else {
            parts.iter().map(|s| f(s)).sum::<f64>() / n
        }
    };
    let mean_opt = |f: &dyn Fn(&Summary) -> Option<f64>| {
        let vals: Vec<f64> = parts.iter().filter_map(|s| f(s)).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Summary {
        steps: parts.iter().map(|s| s.steps).sum(),
        action_accuracy: mean(&|s| s.action_accuracy),
        act_type_accuracy: mean(&|s| s.act_type_accuracy),
        cot_type_accuracy: mean(&|s| s.cot_type_accuracy),
        item_accuracy: mean_opt(&|s| s.item_accuracy),
        direction_accuracy: mean_opt(&|s| s.direction_accuracy),
        text_accuracy: mean_opt(&|s| s.text_accuracy),
        input_f1: mean_opt(&|s| s.input_f1),
        bleu: mean_opt(&|s| s.bleu),
        parse_failures: parts.iter().map(|s| s.parse_failures).sum(),
        backend_failures: parts.iter().map(|s| s.backend_failures).sum(),
        prompt_failures: parts.iter().map(|s| s.prompt_failures).sum(),
    }
}

/// Folds scored steps into a report, in `(subset, episode id, step index)`
/// order regardless of input order.
pub fn aggregate(steps: &[ScoredStep]) -> MetricsReport {
    let mut sorted: Vec<&ScoredStep> = steps.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.subset, &a.episode_id, a.step_index).cmp(&(&b.subset, &b.episode_id, b.step_index))
    });
    let mut by_subset: BTreeMap<&str, Vec<&ScoredStep>> = BTreeMap::new();
    for s in &sorted {
        by_subset.entry(&s.subset).or_default().push(s);
    }
    let subsets: BTreeMap<String, SubsetReport> = by_subset
        .iter()
        .map(|(tag, rows)| {
            let per_type = ActionType::ALL
                .iter()
                .filter_map(|t| {
                    let of_type: Vec<&ScoredStep> = rows
                        .iter()
                        .copied()
                        .filter(|s| s.action_type == *t)
                        .collect();
                    (!of_type.is_empty()).then(|| TypeRow {
                        action_type: *t,
                        steps: of_type.len(),
                        proportion: of_type.len() as f64 / rows.len() as f64,
                        action_accuracy: mean_flag(of_type.iter().copied(), |v| v.action_correct),
                        type_accuracy: mean_flag(of_type.iter().copied(), |v| v.act_type_correct),
                    })
                })
                .collect();
            (
                tag.to_string(),
                SubsetReport {
                    summary: summarize(rows),
                    per_type,
                },
            )
        })
        .collect();
    let summaries: Vec<&Summary> = subsets.values().map(|s| &s.summary).collect();
    MetricsReport {
        schema: REPORT_SCHEMA.to_string(),
        bleu_variant: BLEU_VARIANT.to_string(),
        config: serde_json::Value::Null,
        overall_macro: macro_mean(&summaries),
        overall_micro: summarize(&sorted),
        subsets,
    }
}

fn pct(v: f64) -> String {
    format!("{:6.2}", v * 100.0)
}

fn pct_opt(v: Option<f64>) -> String {
    v.map_or_else(|| format!("{:>6}", "-"), pct)
}

/// Plain-text tables: one summary row per subset plus overall rows, then
/// the per-type breakdown.
pub fn render_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}\n",
        "subset", "steps", "action", "type", "cot", "item", "dir", "f1", "bleu", "fail"
    ));
    let mut row = |name: &str, s: &Summary| {
        out.push_str(&format!(
            "{:<16} {:>6} {} {} {} {} {} {} {} {:>6}\n",
            name,
            s.steps,
            pct(s.action_accuracy),
            pct(s.act_type_accuracy),
            pct(s.cot_type_accuracy),
            pct_opt(s.item_accuracy),
            pct_opt(s.direction_accuracy),
            pct_opt(s.input_f1),
            pct_opt(s.bleu),
            s.parse_failures + s.backend_failures + s.prompt_failures,
        ));
    };
    for (tag, sub) in &report.subsets {
        row(tag, &sub.summary);
    }
    row("overall(macro)", &report.overall_macro);
    row("overall(micro)", &report.overall_micro);
    out.push('\n');
    out.push_str(&format!(
        "{:<16} {:<22} {:>6} {:>6} {:>6} {:>6}\n",
        "subset", "action type", "steps", "prop", "acc", "type"
    ));
    for (tag, sub) in &report.subsets {
        for t in &sub.per_type {
            out.push_str(&format!(
                "{:<16} {:<22} {:>6} {} {} {}\n",
                tag,
                t.action_type.as_str(),
                t.steps,
                pct(t.proportion),
                pct(t.action_accuracy),
                pct(t.type_accuracy)
            ));
        }
    }
    out
}
