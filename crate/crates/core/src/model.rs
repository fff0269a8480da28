//! Domain types shared by every part of the harness: screen points, canonical
//! GUI commands, OCR layouts, steps and episodes.
//!
//! All coordinates are normalized to the screen and stored in `[y, x]` order.
//! `[-1.0, -1.0]` marks "no coordinate", which is what the canonical action
//! format uses for every non-gesture command.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Value used by both axes of a point that carries no coordinate.
pub const SENTINEL: f64 = -1.0;

/// Tolerance used when checking that a layout item's center is its bbox centroid.
pub const CENTROID_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub y: f64,
    pub x: f64,
}

impl Point {
    pub const NONE: Point = Point {
        y: SENTINEL,
        x: SENTINEL,
    };

    pub const fn new(y: f64, x: f64) -> Self {
        Self { y, x }
    }

    pub fn is_sentinel(&self) -> bool {
        self.y == SENTINEL && self.x == SENTINEL
    }

    /// True when both coordinates are finite and inside `[0, 1]`.
    pub fn is_on_screen(&self) -> bool {
        (0.0..=1.0).contains(&self.y) && (0.0..=1.0).contains(&self.x)
    }

    /// Either fully on screen or exactly the sentinel.
    pub fn is_well_formed(&self) -> bool {
        self.is_sentinel() || self.is_on_screen()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.y - other.y).hypot(self.x - other.x)
    }
}

impl fmt::Display for Point {
    /// Renders `[y, x]` with four decimals; the sentinel keeps the
    /// `[-1.0, -1.0]` spelling of the canonical format.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_sentinel() {
            f.write_str("[-1.0, -1.0]")
        } else {
            write!(f, "[{:.4}, {:.4}]", self.y, self.x)
        }
    }
}

/// The six action types of the canonical command format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionType {
    DualPoint,
    Type,
    PressBack,
    PressHome,
    PressEnter,
    StatusTaskComplete,
}

impl ActionType {
    pub const ALL: [ActionType; 6] = [
        ActionType::DualPoint,
        ActionType::Type,
        ActionType::PressBack,
        ActionType::PressHome,
        ActionType::PressEnter,
        ActionType::StatusTaskComplete,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActionType::DualPoint => "DUAL_POINT",
            ActionType::Type => "TYPE",
            ActionType::PressBack => "PRESS_BACK",
            ActionType::PressHome => "PRESS_HOME",
            ActionType::PressEnter => "PRESS_ENTER",
            ActionType::StatusTaskComplete => "STATUS_TASK_COMPLETE",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == name)
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A JSON-style GUI command: action type, touch and lift points, typed text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalAction {
    pub action_type: ActionType,
    pub touch_point: Point,
    pub lift_point: Point,
    pub typed_text: String,
}

impl CanonicalAction {
    /// A command without coordinates or text (press keys, task complete).
    pub fn simple(action_type: ActionType) -> Self {
        Self {
            action_type,
            touch_point: Point::NONE,
            lift_point: Point::NONE,
            typed_text: String::new(),
        }
    }

    pub fn type_text(text: impl Into<String>) -> Self {
        Self {
            typed_text: text.into(),
            ..Self::simple(ActionType::Type)
        }
    }

    pub fn dual_point(touch: Point, lift: Point) -> Self {
        Self {
            action_type: ActionType::DualPoint,
            touch_point: touch,
            lift_point: lift,
            typed_text: String::new(),
        }
    }

    /// Invariant violations of this action, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (label, p) in [
            ("touch_point", &self.touch_point),
            ("lift_point", &self.lift_point),
        ] {
            if !p.is_well_formed() {
                out.push(format!(
                    "{label} {p:?} mixes sentinel and screen coordinates or leaves [0, 1]"
                ));
            }
        }
        if self.action_type == ActionType::DualPoint {
            if self.touch_point.is_sentinel() || self.lift_point.is_sentinel() {
                out.push("DUAL_POINT requires non-sentinel touch and lift points".to_string());
            }
        } else if !self.touch_point.is_sentinel() || !self.lift_point.is_sentinel() {
            out.push(format!(
                "{} must carry sentinel touch and lift points",
                self.action_type
            ));
        }
        if self.action_type != ActionType::Type && !self.typed_text.is_empty() {
            out.push(format!("{} must not carry typed_text", self.action_type));
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }

    /// Reads the object written by [`CanonicalAction::to_command_json`]. Points
    /// may be `"[y, x]"` strings or two-element arrays.
    pub fn from_command_json(text: &str) -> Option<Self> {
        let v: serde_json::Value = serde_json::from_str(text.trim()).ok()?;
        let point = |key: &str| -> Option<Point> {
            match v.get(key) {
                None => Some(Point::NONE),
                Some(serde_json::Value::String(s)) => {
                    let inner = s.trim().strip_prefix('[')?.strip_suffix(']')?;
                    let (y, x) = inner.split_once(',')?;
                    Some(Point::new(y.trim().parse().ok()?, x.trim().parse().ok()?))
                }
                Some(serde_json::Value::Array(a)) if a.len() == 2 => {
                    Some(Point::new(a[0].as_f64()?, a[1].as_f64()?))
                }
                Some(_) => None,
            }
        };
        Some(Self {
            action_type: ActionType::from_name(v.get("action_type")?.as_str()?)?,
            touch_point: point("touch_point")?,
            lift_point: point("lift_point")?,
            typed_text: v
                .get("typed_text")
                .and_then(|t| t.as_str())
                .unwrap_or_default()
                .to_string(),
        })
    }

    /// Same type and text, points within `tol` per coordinate.
    pub fn approx_eq(&self, other: &CanonicalAction, tol: f64) -> bool {
        let close = |a: &Point, b: &Point| (a.y - b.y).abs() <= tol && (a.x - b.x).abs() <= tol;
        self.action_type == other.action_type
            && self.typed_text == other.typed_text
            && close(&self.touch_point, &other.touch_point)
            && close(&self.lift_point, &other.lift_point)
    }

    /// The command as a compact JSON object using the canonical column names.
    pub fn to_command_json(&self) -> String {
        serde_json::json!({
            "action_type": self.action_type.as_str(),
            "touch_point": self.touch_point.to_string(),
            "lift_point": self.lift_point.to_string(),
            "typed_text": self.typed_text,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub y_min: f64,
    pub x_min: f64,
    pub y_max: f64,
    pub x_max: f64,
}

impl BoundingBox {
    pub fn new(y_min: f64, x_min: f64, y_max: f64, x_max: f64) -> Self {
        Self {
            y_min,
            x_min,
            y_max,
            x_max,
        }
    }

    /// Box of half-width `min(half, c, 1 - c)` per axis around `center`, so
    /// it stays on screen and keeps `center` as its centroid.
    pub fn around(center: Point, half: f64) -> Self {
        let hy = half.min(center.y).min(1.0 - center.y).max(0.0);
        let hx = half.min(center.x).min(1.0 - center.x).max(0.0);
        Self::new(center.y - hy, center.x - hx, center.y + hy, center.x + hx)
    }

    pub fn is_valid(&self) -> bool {
        0.0 <= self.y_min
            && self.y_min <= self.y_max
            && self.y_max <= 1.0
            && 0.0 <= self.x_min
            && self.x_min <= self.x_max
            && self.x_max <= 1.0
    }

    /// Inclusive containment.
    pub fn contains(&self, p: &Point) -> bool {
        self.y_min <= p.y && p.y <= self.y_max && self.x_min <= p.x && p.x <= self.x_max
    }

    pub fn centroid(&self) -> Point {
        Point::new(
            (self.y_min + self.y_max) / 2.0,
            (self.x_min + self.x_max) / 2.0,
        )
    }
}

/// Half-width of the box given to layout items that arrive without one.
pub const SYNTHETIC_BBOX_HALF: f64 = 0.02;

/// One OCR or icon-detector result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutItem {
    pub name: String,
    pub center: Point,
    pub bbox: Option<BoundingBox>,
    /// The bbox was synthesized around the center rather than read from the source.
    #[serde(default)]
    pub synthetic_bbox: bool,
}

impl LayoutItem {
    pub fn with_bbox(name: impl Into<String>, bbox: BoundingBox) -> Self {
        Self {
            name: name.into(),
            center: bbox.centroid(),
            bbox: Some(bbox),
            synthetic_bbox: false,
        }
    }

    /// Item with only a center; a synthetic box is attached for containment tests.
    pub fn at(name: impl Into<String>, center: Point) -> Self {
        Self {
            name: name.into(),
            center,
            bbox: Some(BoundingBox::around(center, SYNTHETIC_BBOX_HALF)),
            synthetic_bbox: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenObservation {
    pub image_ref: String,
    /// Source reading order.
    pub layout: Vec<LayoutItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub observation: ScreenObservation,
    pub gold_action: CanonicalAction,
    pub agent_utterance: Option<String>,
    pub user_utterance: Option<String>,
}

impl Step {
    pub fn new(observation: ScreenObservation, gold_action: CanonicalAction) -> Self {
        Self {
            observation,
            gold_action,
            agent_utterance: None,
            user_utterance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub goal: String,
    pub subset: String,
    pub steps: Vec<Step>,
}

/// Checks every type invariant of `ep`. Violations are returned, never raised.
pub fn validate_episode(ep: &Episode) -> Vec<String> {
    let mut out = Vec::new();
    if ep.steps.is_empty() {
        out.push("empty episode: at least one step is required".to_string());
    }
    if ep.goal.trim().is_empty() {
        out.push("goal is empty".to_string());
    }
    for (i, step) in ep.steps.iter().enumerate() {
        for v in step.gold_action.violations() {
            out.push(format!("step {i}: {v}"));
        }
        for (j, item) in step.observation.layout.iter().enumerate() {
            if item.name.is_empty() {
                out.push(format!("step {i}: layout item {j} has an empty name"));
            }
            if item.center.is_sentinel() || !item.center.is_on_screen() {
                out.push(format!(
                    "step {i}: layout item {j} ({}) center is not on screen",
                    item.name
                ));
            }
            if let Some(bbox) = &item.bbox {
                if !bbox.is_valid() {
                    out.push(format!(
                        "step {i}: layout item {j} ({}) has an invalid bbox",
                        item.name
                    ));
                } else {
                    let c = bbox.centroid();
                    if (c.y - item.center.y).abs() > CENTROID_TOLERANCE
                        || (c.x - item.center.x).abs() > CENTROID_TOLERANCE
                    {
                        out.push(format!(
                            "step {i}: layout item {j} ({}) center is not its bbox centroid",
                            item.name
                        ));
                    }
                }
            }
        }
    }
    out
}
