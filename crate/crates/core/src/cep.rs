//! Prompt assembly for one step.
//!
//! The prompt lists, one element per line:
//!
//! ```text
//! <image>
//! {item name} location: [{y}, {x}]        (one line per layout item, source order)
//! Previous Actions:
//! {a_(t-h)}                               (oldest first, at most h lines)
//! {a_(t-1)}
//! Goal: {goal}
//! Next action:
//! ```
//!
//! Lines are joined with a single `\n` and the prompt has no trailing newline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cap::{self, CapConfig, CodecError};
use crate::model::{CanonicalAction, Episode, LayoutItem, ScreenObservation};

pub const HISTORY_HEADER: &str = "Previous Actions:";
pub const NEXT_ACTION: &str = "Next action:";
pub const GOAL_PREFIX: &str = "Goal: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    FullActions,
    TypesOnly,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CepConfig {
    /// Maximum number of history actions.
    pub h: usize,
    pub history_mode: HistoryMode,
    pub include_layout: bool,
    /// Render actions in the conditional (CAP) form; otherwise as canonical JSON.
    pub use_cap_targets: bool,
    /// Length budget, measured by the injected length function.
    pub max_len: usize,
    pub image_token: String,
}

impl Default for CepConfig {
    fn default() -> Self {
        Self {
            h: 8,
            history_mode: HistoryMode::FullActions,
            include_layout: true,
            use_cap_targets: true,
            max_len: 2048,
            image_token: "<image>".to_string(),
        }
    }
}

/// A previous action together with the layout of the screen it was taken on.
#[derive(Debug, Clone, Copy)]
pub struct HistoryItem<'a> {
    pub action: &'a CanonicalAction,
    pub layout: &'a [LayoutItem],
}

/// Gold actions of steps `0..t`.
pub fn gold_history(ep: &Episode, t: usize) -> Vec<HistoryItem<'_>> {
    ep.steps[..t.min(ep.steps.len())]
        .iter()
        .map(|s| HistoryItem {
            action: &s.gold_action,
            layout: &s.observation.layout,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub text: String,
    pub image_ref: String,
    pub history_len: usize,
    #[serde(skip)]
    parts: Parts,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Parts {
    image_token: String,
    layout: Vec<String>,
    history: Option<Vec<String>>,
    goal: String,
}

impl Parts {
    fn render(&self) -> String {
        let mut lines: Vec<&str> = Vec::with_capacity(self.layout.len() + 12);
        lines.push(&self.image_token);
        lines.extend(self.layout.iter().map(String::as_str));
        if let Some(history) = &self.history {
            lines.push(HISTORY_HEADER);
            lines.extend(history.iter().map(String::as_str));
        }
        let goal = format!("{GOAL_PREFIX}{}", self.goal);
        lines.push(&goal);
        lines.push(NEXT_ACTION);
        lines.join("\n")
    }
}

impl PromptBundle {
    fn from_parts(parts: Parts, image_ref: String) -> Self {
        Self {
            text: parts.render(),
            image_ref,
            history_len: parts.history.as_ref().map_or(0, Vec::len),
            parts,
        }
    }

    /// Rendered layout lines, in source order.
    pub fn layout_lines(&self) -> &[String] {
        &self.parts.layout
    }

    /// Rendered history lines, oldest first.
    pub fn history_lines(&self) -> &[String] {
        self.parts.history.as_deref().unwrap_or(&[])
    }

    pub fn goal(&self) -> &str {
        &self.parts.goal
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CepError {
    #[error("goal is empty")]
    EmptyGoal,
    #[error("history action: {0}")]
    History(#[from] CodecError),
    #[error(transparent)]
    Truncation(#[from] TruncationError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("budget {budget} cannot hold the prompt scaffold ({needed} needed)")]
pub struct TruncationError {
    pub budget: usize,
    pub needed: usize,
}

pub fn layout_line(item: &LayoutItem) -> String {
    format!("{} location: {}", item.name, item.center)
}

/// One action line as it appears in history or as a training target.
pub fn render_action(
    a: &CanonicalAction,
    layout: &[LayoutItem],
    mode: HistoryMode,
    use_cap: bool,
    cap_cfg: &CapConfig,
) -> Result<String, CodecError> {
    match (mode, use_cap) {
        (HistoryMode::TypesOnly, true) => Ok(cap::refactor(a, layout, cap_cfg)?.verb().prefix()),
        (HistoryMode::TypesOnly, false) => Ok(a.action_type.as_str().to_string()),
        (_, true) => cap::encode_action(a, layout, cap_cfg),
        (_, false) => Ok(a.to_command_json()),
    }
}

pub fn build_prompt(
    goal: &str,
    obs: &ScreenObservation,
    history: &[HistoryItem<'_>],
    cfg: &CepConfig,
    cap_cfg: &CapConfig,
) -> Result<PromptBundle, CepError> {
    if goal.trim().is_empty() {
        return Err(CepError::EmptyGoal);
    }
    let layout = if cfg.include_layout {
        obs.layout.iter().map(layout_line).collect()
    } else {
        Vec::new()
    };
    let history = match cfg.history_mode {
        HistoryMode::None => None,
        mode => {
            let window = &history[history.len().saturating_sub(cfg.h)..];
            let lines = window
                .iter()
                .map(|h| render_action(h.action, h.layout, mode, cfg.use_cap_targets, cap_cfg))
                .collect::<Result<Vec<_>, _>>()?;
            Some(lines)
        }
    };
    let parts = Parts {
        image_token: cfg.image_token.clone(),
        layout,
        history,
        goal: goal.to_string(),
    };
    Ok(PromptBundle::from_parts(parts, obs.image_ref.clone()))
}

/// Prompt for step `t` of `ep` with gold history.
pub fn build_step_prompt(
    ep: &Episode,
    t: usize,
    cfg: &CepConfig,
    cap_cfg: &CapConfig,
) -> Result<PromptBundle, CepError> {
    build_prompt(
        &ep.goal,
        &ep.steps[t].observation,
        &gold_history(ep, t),
        cfg,
        cap_cfg,
    )
}

/// Prompt for step `t` exactly as the evaluation loop sends it: gold
/// history, truncated to `cfg.max_len` characters.
pub fn eval_step_prompt(
    ep: &Episode,
    t: usize,
    cfg: &CepConfig,
    cap_cfg: &CapConfig,
) -> Result<PromptBundle, CepError> {
    let p = build_step_prompt(ep, t, cfg, cap_cfg)?;
    Ok(truncate(&p, cfg.max_len, &char_len)?)
}

/// Default length function: Unicode scalar count.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Drops the oldest history lines, then trailing layout lines, until the
/// prompt fits `budget`. The goal and the scaffold lines are always kept.
pub fn truncate(
    p: &PromptBundle,
    budget: usize,
    length_fn: &dyn Fn(&str) -> usize,
) -> Result<PromptBundle, TruncationError> {
    if length_fn(&p.text) <= budget {
        return Ok(p.clone());
    }
    let mut parts = p.parts.clone();
    loop {
        let text = parts.render();
        let len = length_fn(&text);
        if len <= budget {
            return Ok(PromptBundle::from_parts(parts, p.image_ref.clone()));
        }
        if let Some(h) = parts.history.as_mut().filter(|h| !h.is_empty()) {
            h.remove(0);
        } else if parts.layout.pop().is_none() {
            return Err(TruncationError {
                budget,
                needed: len,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionType, Point};

    fn obs(layout: Vec<LayoutItem>) -> ScreenObservation {
        ScreenObservation {
            image_ref: "s.png".into(),
            layout,
        }
    }

    fn presses(n: usize) -> Vec<CanonicalAction> {
        let cycle = [
            ActionType::PressHome,
            ActionType::PressBack,
            ActionType::PressEnter,
        ];
        (0..n)
            .map(|i| CanonicalAction::simple(cycle[i % 3]))
            .collect()
    }

    fn items(actions: &[CanonicalAction]) -> Vec<HistoryItem<'_>> {
        actions
            .iter()
            .map(|a| HistoryItem {
                action: a,
                layout: &[],
            })
            .collect()
    }

    #[test]
    fn minimal_prompt() {
        let p = build_prompt(
            "g",
            &obs(vec![]),
            &[],
            &CepConfig::default(),
            &CapConfig::default(),
        )
        .unwrap();
        assert_eq!(p.text, "<image>\nPrevious Actions:\nGoal: g\nNext action:");
        assert_eq!(p.history_len, 0);
        assert_eq!(p.image_ref, "s.png");
    }

    #[test]
    fn history_window_keeps_latest() {
        let mut actions = presses(9);
        actions.insert(0, CanonicalAction::type_text("first"));
        let p = build_prompt(
            "g",
            &obs(vec![]),
            &items(&actions),
            &CepConfig::default(),
            &CapConfig::default(),
        )
        .unwrap();
        assert_eq!(p.history_len, 8);
        assert!(!p.text.contains("first"));
        assert_eq!(p.history_lines().len(), 8);
    }

    #[test]
    fn history_modes() {
        let actions = vec![
            CanonicalAction::type_text("abc"),
            CanonicalAction::dual_point(Point::new(0.9, 0.9), Point::new(0.9, 0.9)),
        ];
        let cap = CapConfig::default();
        let types = CepConfig {
            history_mode: HistoryMode::TypesOnly,
            ..CepConfig::default()
        };
        let p = build_prompt("g", &obs(vec![]), &items(&actions), &types, &cap).unwrap();
        assert_eq!(p.history_lines(), ["I need to <TYPE>", "I need to <TAP>"]);

        let none = CepConfig {
            history_mode: HistoryMode::None,
            ..CepConfig::default()
        };
        let p = build_prompt("g", &obs(vec![]), &items(&actions), &none, &cap).unwrap();
        assert_eq!(p.text, "<image>\nGoal: g\nNext action:");

        let json = CepConfig {
            use_cap_targets: false,
            ..CepConfig::default()
        };
        let p = build_prompt("g", &obs(vec![]), &items(&actions), &json, &cap).unwrap();
        assert!(p.history_lines()[0].starts_with("{\"action_type\":\"TYPE\""));
    }

    #[test]
    fn layout_lines_in_order() {
        let layout = vec![
            LayoutItem::at("ICON_HOME", Point::new(0.0654, 0.0657)),
            LayoutItem::at("Google", Point::new(0.1417, 0.4981)),
        ];
        let p = build_prompt(
            "g",
            &obs(layout),
            &[],
            &CepConfig::default(),
            &CapConfig::default(),
        )
        .unwrap();
        assert_eq!(
            p.text,
            "<image>\nICON_HOME location: [0.0654, 0.0657]\nGoogle location: [0.1417, 0.4981]\nPrevious Actions:\nGoal: g\nNext action:"
        );
        let off = CepConfig {
            include_layout: false,
            ..CepConfig::default()
        };
        let p = build_prompt(
            "g",
            &obs(vec![LayoutItem::at("x", Point::new(0.5, 0.5))]),
            &[],
            &off,
            &CapConfig::default(),
        )
        .unwrap();
        assert!(!p.text.contains("location"));
    }

    #[test]
    fn empty_goal_rejected() {
        let err = build_prompt(
            " ",
            &obs(vec![]),
            &[],
            &CepConfig::default(),
            &CapConfig::default(),
        );
        assert_eq!(err, Err(CepError::EmptyGoal));
    }

    #[test]
    fn truncate_within_budget_is_identity() {
        let p = build_prompt(
            "g",
            &obs(vec![]),
            &[],
            &CepConfig::default(),
            &CapConfig::default(),
        )
        .unwrap();
        assert_eq!(truncate(&p, 10_000, &char_len).unwrap(), p);
    }

    #[test]
    fn truncate_drops_oldest_history_first() {
        let actions = presses(8);
        let layout = vec![LayoutItem::at("x", Point::new(0.5, 0.5))];
        let p = build_prompt(
            "g",
            &obs(layout),
            &items(&actions),
            &CepConfig::default(),
            &CapConfig::default(),
        )
        .unwrap();
        // every press line is "I need to <PRESS_...>" plus a newline
        let lines = p.history_lines().to_vec();
        let budget = char_len(&p.text) - (lines[0].len() + lines[1].len() + lines[2].len() + 3);
        let t = truncate(&p, budget, &char_len).unwrap();
        assert_eq!(t.history_len, 5);
        assert_eq!(t.history_lines(), &lines[3..]);
        assert_eq!(t.layout_lines(), p.layout_lines());
        assert!(t.text.ends_with("Goal: g\nNext action:"));
    }

    #[test]
    fn truncate_then_drops_trailing_layout() {
        let layout = vec![
            LayoutItem::at("first", Point::new(0.1, 0.1)),
            LayoutItem::at("second", Point::new(0.2, 0.2)),
        ];
        let p = build_prompt(
            "g",
            &obs(layout),
            &items(&presses(1)),
            &CepConfig::default(),
            &CapConfig::default(),
        )
        .unwrap();
        let t = truncate(&p, char_len(&p.text) - 1, &char_len).unwrap();
        assert_eq!(t.history_len, 0);
        assert_eq!(t.layout_lines().len(), 2);
        let t = truncate(&t, char_len(&t.text) - 1, &char_len).unwrap();
        assert_eq!(t.layout_lines(), ["first location: [0.1000, 0.1000]"]);
    }

    #[test]
    fn truncate_budget_too_small() {
        let p = build_prompt(
            "g",
            &obs(vec![]),
            &[],
            &CepConfig::default(),
            &CapConfig::default(),
        )
        .unwrap();
        assert!(truncate(&p, 1, &char_len).is_err());
    }

    #[test]
    fn increasing_h_never_drops_lines() {
        let actions = presses(12);
        let cap = CapConfig::default();
        let mut prev: Vec<String> = Vec::new();
        for h in 0..=12 {
            let cfg = CepConfig {
                h,
                ..CepConfig::default()
            };
            let p = build_prompt("g", &obs(vec![]), &items(&actions), &cfg, &cap).unwrap();
            let lines = p.history_lines().to_vec();
            assert!(lines.ends_with(&prev), "h={h}");
            assert_eq!(p.history_len, h);
            prev = lines;
        }
    }
}
