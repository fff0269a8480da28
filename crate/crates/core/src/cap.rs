//! Conditional action codec.
//!
//! Canonical commands are rewritten into short natural-language lines where
//! the action type comes first and its target (item, direction, text or
//! point) is stated after it. The grammar has eight templates, one per verb
//! token:
//!
//! ```text
//! I need to <PRESS_HOME>
//! I need to <PRESS_BACK>
//! I need to <PRESS_ENTER>
//! For this goal, no more action is needed, so <STATUS_TASK_COMPLETE>
//! I need to <TYPE> a string here, "typed_text": "{text}"
//! I need to <SCROLL> {up|down|left|right}
//! I need to <CLICK> {item}, the location of {item} on the screen is "tap_point": "[{y}, {x}]"
//! I need to <TAP> on the screen, the location is "tap_point": "[{y}, {x}]"
//! ```
//!
//! Coordinates are rendered with four decimals. The parser keys on the first
//! `<VERB>` token and ignores the leading phrase. For `<CLICK>` the item name
//! runs up to `, the location of ` followed by a repeat of the same name, so
//! names containing commas or the delimiter itself still split correctly. The
//! "on the screen" before `is` is optional when parsing.
//!
//! A `DUAL_POINT` command becomes one of three verbs: `<SCROLL>` when touch and
//! lift are farther apart than the swipe threshold, `<CLICK>` when the touch
//! point falls inside a layout item's box, `<TAP>` otherwise.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActionType, CanonicalAction, LayoutItem, Point};

pub const DEFAULT_SWIPE_THRESHOLD: f64 = 0.04;

/// Upper bound for the swipe threshold: canonical scroll anchors are 0.6 apart.
pub const MAX_SWIPE_THRESHOLD: f64 = 0.6;

const CLICK_DELIMITER: &str = ", the location of ";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapConfig {
    pub swipe_threshold: f64,
}

impl Default for CapConfig {
    fn default() -> Self {
        Self {
            swipe_threshold: DEFAULT_SWIPE_THRESHOLD,
        }
    }
}

impl CapConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        let t = self.swipe_threshold;
        if t.is_finite() && t > 0.0 && t < MAX_SWIPE_THRESHOLD {
            Ok(())
        } else {
            Err(CodecError::InvalidThreshold(t))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn from_word(word: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(word))
    }

    /// Fixed `(touch, lift)` segment used when a scroll is turned back into a command.
    pub fn anchors(&self) -> (Point, Point) {
        match self {
            Direction::Up => (Point::new(0.8, 0.5), Point::new(0.2, 0.5)),
            Direction::Down => (Point::new(0.2, 0.5), Point::new(0.8, 0.5)),
            Direction::Left => (Point::new(0.5, 0.8), Point::new(0.5, 0.2)),
            Direction::Right => (Point::new(0.5, 0.2), Point::new(0.5, 0.8)),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The eight verb tokens of the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verb {
    PressHome,
    PressBack,
    PressEnter,
    StatusTaskComplete,
    Type,
    Scroll,
    Click,
    Tap,
}

impl Verb {
    pub const ALL: [Verb; 8] = [
        Verb::PressHome,
        Verb::PressBack,
        Verb::PressEnter,
        Verb::StatusTaskComplete,
        Verb::Type,
        Verb::Scroll,
        Verb::Click,
        Verb::Tap,
    ];

    pub fn token_name(&self) -> &'static str {
        match self {
            Verb::PressHome => "PRESS_HOME",
            Verb::PressBack => "PRESS_BACK",
            Verb::PressEnter => "PRESS_ENTER",
            Verb::StatusTaskComplete => "STATUS_TASK_COMPLETE",
            Verb::Type => "TYPE",
            Verb::Scroll => "SCROLL",
            Verb::Click => "CLICK",
            Verb::Tap => "TAP",
        }
    }

    pub fn from_token_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.token_name() == name)
    }

    pub fn action_type(&self) -> ActionType {
        match self {
            Verb::PressHome => ActionType::PressHome,
            Verb::PressBack => ActionType::PressBack,
            Verb::PressEnter => ActionType::PressEnter,
            Verb::StatusTaskComplete => ActionType::StatusTaskComplete,
            Verb::Type => ActionType::Type,
            Verb::Scroll | Verb::Click | Verb::Tap => ActionType::DualPoint,
        }
    }

    /// Template text up to and including the verb token.
    pub fn prefix(&self) -> String {
        match self {
            Verb::StatusTaskComplete => {
                "For this goal, no more action is needed, so <STATUS_TASK_COMPLETE>".to_string()
            }
            v => format!("I need to <{}>", v.token_name()),
        }
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "snake_case")]
pub enum RefactoredAction {
    PressHome,
    PressBack,
    PressEnter,
    TaskComplete,
    Type { text: String },
    Scroll { direction: Direction },
    Click { item_name: String, tap_point: Point },
    Tap { tap_point: Point },
}

impl RefactoredAction {
    pub fn verb(&self) -> Verb {
        match self {
            RefactoredAction::PressHome => Verb::PressHome,
            RefactoredAction::PressBack => Verb::PressBack,
            RefactoredAction::PressEnter => Verb::PressEnter,
            RefactoredAction::TaskComplete => Verb::StatusTaskComplete,
            RefactoredAction::Type { .. } => Verb::Type,
            RefactoredAction::Scroll { .. } => Verb::Scroll,
            RefactoredAction::Click { .. } => Verb::Click,
            RefactoredAction::Tap { .. } => Verb::Tap,
        }
    }

    /// Point of a click or tap.
    pub fn tap_point(&self) -> Option<Point> {
        match self {
            RefactoredAction::Click { tap_point, .. } | RefactoredAction::Tap { tap_point } => {
                Some(*tap_point)
            }
            _ => None,
        }
    }

    /// Full template line.
    pub fn render(&self) -> String {
        let prefix = self.verb().prefix();
        match self {
            RefactoredAction::Type { text } => {
                format!("{prefix} a string here, \"typed_text\": \"{text}\"")
            }
            RefactoredAction::Scroll { direction } => format!("{prefix} {direction}"),
            RefactoredAction::Click {
                item_name,
                tap_point,
            } => format!(
                "{prefix} {item_name}{CLICK_DELIMITER}{item_name} on the screen is \"tap_point\": \"{tap_point}\""
            ),
            RefactoredAction::Tap { tap_point } => {
                format!("{prefix} on the screen, the location is \"tap_point\": \"{tap_point}\"")
            }
            _ => prefix,
        }
    }
}

impl fmt::Display for RefactoredAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("invalid action: {}", .0.join("; "))]
    InvalidAction(Vec<String>),
    #[error("zero displacement between touch and lift points")]
    ZeroDisplacement,
    #[error("swipe threshold {0} outside (0, {MAX_SWIPE_THRESHOLD})")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "field", rename_all = "snake_case")]
pub enum ParseErrorKind {
    UnknownVerb,
    BadCoordinate,
    MissingField(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} at byte {offset}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the parsed text.
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, offset: usize, message: impl Into<String>) -> Self {
        Self {
            kind,
            offset,
            message: message.into(),
        }
    }
}

/// Main direction of a swipe. Ties between axes go to the vertical axis.
pub fn direction_of(touch: Point, lift: Point) -> Result<Direction, CodecError> {
    let dy = lift.y - touch.y;
    let dx = lift.x - touch.x;
    if dy == 0.0 && dx == 0.0 {
        return Err(CodecError::ZeroDisplacement);
    }
    Ok(if dy.abs() >= dx.abs() {
        if dy < 0.0 {
            Direction::Up
        } else {
            Direction::Down
        }
    } else if dx < 0.0 {
        Direction::Left
    } else {
        Direction::Right
    })
}

/// Index of the layout item whose box contains `point`. An item centered
/// exactly on the point wins; otherwise the first containing item in layout
/// order.
pub fn containing_item(point: Point, layout: &[LayoutItem]) -> Option<usize> {
    let mut first = None;
    for (i, item) in layout.iter().enumerate() {
        let Some(bbox) = &item.bbox else { continue };
        if bbox.contains(&point) {
            if item.center == point {
                return Some(i);
            }
            first.get_or_insert(i);
        }
    }
    first
}

enum Gesture {
    Scroll(Direction),
    Click(usize),
    Tap,
}

fn classify(touch: Point, lift: Point, layout: &[LayoutItem], threshold: f64) -> Gesture {
    if touch.distance(&lift) > threshold {
        // distance > threshold > 0, so the points differ
        return Gesture::Scroll(direction_of(touch, lift).expect("nonzero displacement"));
    }
    match containing_item(touch, layout) {
        Some(i) => Gesture::Click(i),
        None => Gesture::Tap,
    }
}

/// Splits a dual-point gesture into scroll, click or tap.
pub fn classify_dual_point(
    touch: Point,
    lift: Point,
    layout: &[LayoutItem],
    swipe_threshold: f64,
) -> RefactoredAction {
    match classify(touch, lift, layout, swipe_threshold) {
        Gesture::Scroll(direction) => RefactoredAction::Scroll { direction },
        Gesture::Click(i) => RefactoredAction::Click {
            item_name: layout[i].name.clone(),
            tap_point: touch,
        },
        Gesture::Tap => RefactoredAction::Tap { tap_point: touch },
    }
}

/// Refactored form of a canonical command. Clicks carry the clicked item's
/// center as their tap point.
pub fn refactor(
    a: &CanonicalAction,
    layout: &[LayoutItem],
    cfg: &CapConfig,
) -> Result<RefactoredAction, CodecError> {
    let violations = a.violations();
    if !violations.is_empty() {
        return Err(CodecError::InvalidAction(violations));
    }
    cfg.validate()?;
    Ok(match a.action_type {
        ActionType::PressHome => RefactoredAction::PressHome,
        ActionType::PressBack => RefactoredAction::PressBack,
        ActionType::PressEnter => RefactoredAction::PressEnter,
        ActionType::StatusTaskComplete => RefactoredAction::TaskComplete,
        ActionType::Type => RefactoredAction::Type {
            text: a.typed_text.clone(),
        },
        ActionType::DualPoint => {
            match classify(a.touch_point, a.lift_point, layout, cfg.swipe_threshold) {
                Gesture::Scroll(direction) => RefactoredAction::Scroll { direction },
                Gesture::Click(i) => RefactoredAction::Click {
                    item_name: layout[i].name.clone(),
                    tap_point: layout[i].center,
                },
                Gesture::Tap => RefactoredAction::Tap {
                    tap_point: a.touch_point,
                },
            }
        }
    })
}

pub fn encode_action(
    a: &CanonicalAction,
    layout: &[LayoutItem],
    cfg: &CapConfig,
) -> Result<String, CodecError> {
    refactor(a, layout, cfg).map(|r| r.render())
}

pub fn canonicalize(r: &RefactoredAction) -> CanonicalAction {
    match r {
        RefactoredAction::PressHome => CanonicalAction::simple(ActionType::PressHome),
        RefactoredAction::PressBack => CanonicalAction::simple(ActionType::PressBack),
        RefactoredAction::PressEnter => CanonicalAction::simple(ActionType::PressEnter),
        RefactoredAction::TaskComplete => CanonicalAction::simple(ActionType::StatusTaskComplete),
        RefactoredAction::Type { text } => CanonicalAction::type_text(text.clone()),
        RefactoredAction::Scroll { direction } => {
            let (touch, lift) = direction.anchors();
            CanonicalAction::dual_point(touch, lift)
        }
        RefactoredAction::Click { tap_point, .. } | RefactoredAction::Tap { tap_point } => {
            CanonicalAction::dual_point(*tap_point, *tap_point)
        }
    }
}

/// Normalized gold command: clicks snap to the item center, scrolls to the
/// direction anchors, taps collapse onto their touch point. Invalid actions
/// are returned unchanged.
pub fn normalize_gold(
    a: &CanonicalAction,
    layout: &[LayoutItem],
    cfg: &CapConfig,
) -> CanonicalAction {
    if a.action_type != ActionType::DualPoint {
        return a.clone();
    }
    match refactor(a, layout, cfg) {
        Ok(r) => canonicalize(&r),
        Err(_) => a.clone(),
    }
}

fn skip_ws(s: &str, i: usize) -> usize {
    i + (s[i..].len() - s[i..].trim_start().len())
}

fn find_verb(text: &str) -> Result<(Verb, usize), ParseError> {
    let Some(start) = text.find('<') else {
        return Err(ParseError::new(
            ParseErrorKind::UnknownVerb,
            0,
            "no <VERB> token",
        ));
    };
    let Some(len) = text[start..].find('>') else {
        return Err(ParseError::new(
            ParseErrorKind::UnknownVerb,
            start,
            "unterminated verb token",
        ));
    };
    let name = text[start + 1..start + len].trim();
    match Verb::from_token_name(name) {
        Some(v) => Ok((v, start + len + 1)),
        None => Err(ParseError::new(
            ParseErrorKind::UnknownVerb,
            start,
            format!("unknown verb <{name}>"),
        )),
    }
}

/// Parses `"[y, x]"` (quotes optional) starting at byte `at`.
fn parse_coordinate(text: &str, at: usize) -> Result<Point, ParseError> {
    let bad =
        |offset: usize, msg: &str| ParseError::new(ParseErrorKind::BadCoordinate, offset, msg);
    let mut i = skip_ws(text, at);
    if text[i..].starts_with('"') {
        i = skip_ws(text, i + 1);
    }
    if !text[i..].starts_with('[') {
        return Err(bad(i, "expected '['"));
    }
    let open = i;
    let Some(close) = text[open..].find(']') else {
        return Err(bad(open, "expected ']'"));
    };
    let inner = &text[open + 1..open + close];
    let mut parts = inner.split(',');
    let (Some(ys), Some(xs), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(bad(open, "expected two comma-separated numbers"));
    };
    let (Ok(y), Ok(x)) = (ys.trim().parse::<f64>(), xs.trim().parse::<f64>()) else {
        return Err(bad(open, "coordinate is not a number"));
    };
    let p = Point::new(y, x);
    if !p.is_on_screen() {
        return Err(bad(open, "coordinate outside [0, 1]"));
    }
    Ok(p)
}

fn tap_point_after(text: &str, from: usize) -> Result<(Point, usize), ParseError> {
    const KEY: &str = "\"tap_point\"";
    let Some(rel) = text[from..].rfind(KEY) else {
        return Err(ParseError::new(
            ParseErrorKind::MissingField("tap_point"),
            text.len(),
            "missing \"tap_point\"",
        ));
    };
    let key_at = from + rel;
    let mut i = skip_ws(text, key_at + KEY.len());
    if !text[i..].starts_with(':') {
        return Err(ParseError::new(
            ParseErrorKind::BadCoordinate,
            i,
            "expected ':' after \"tap_point\"",
        ));
    }
    i += 1;
    Ok((parse_coordinate(text, i)?, key_at))
}

fn strip_suffix_ci<'a>(s: &'a str, suffix: &str) -> Option<&'a str> {
    let cut = s.len().checked_sub(suffix.len())?;
    if s.is_char_boundary(cut) && s[cut..].eq_ignore_ascii_case(suffix) {
        Some(&s[..cut])
    } else {
        None
    }
}

/// Item name out of `{name}, the location of {name}`.
fn split_click_name(part: &str) -> &str {
    let mut fallback = None;
    let mut chosen = None;
    for (idx, _) in part.match_indices(CLICK_DELIMITER) {
        let a = part[..idx].trim();
        let b = part[idx + CLICK_DELIMITER.len()..].trim();
        if a == b {
            chosen = Some(a);
        }
        fallback = Some(a);
    }
    chosen.or(fallback).unwrap_or(part.trim())
}

/// Parses one action line. Never panics; malformed input yields a [`ParseError`]
/// carrying the byte offset of the problem.
pub fn parse_action(text: &str) -> Result<RefactoredAction, ParseError> {
    let (verb, after) = find_verb(text)?;
    match verb {
        Verb::PressHome => Ok(RefactoredAction::PressHome),
        Verb::PressBack => Ok(RefactoredAction::PressBack),
        Verb::PressEnter => Ok(RefactoredAction::PressEnter),
        Verb::StatusTaskComplete => Ok(RefactoredAction::TaskComplete),
        Verb::Type => {
            const KEY: &str = "\"typed_text\"";
            let missing = |offset| {
                ParseError::new(
                    ParseErrorKind::MissingField("typed_text"),
                    offset,
                    "expected \"typed_text\": \"...\"",
                )
            };
            let Some(rel) = text[after..].find(KEY) else {
                return Err(missing(text.len()));
            };
            let mut i = skip_ws(text, after + rel + KEY.len());
            if !text[i..].starts_with(':') {
                return Err(missing(i));
            }
            i = skip_ws(text, i + 1);
            if !text[i..].starts_with('"') {
                return Err(missing(i));
            }
            let open = i + 1;
            match text[open..].rfind('"') {
                Some(len) => Ok(RefactoredAction::Type {
                    text: text[open..open + len].to_string(),
                }),
                None => Err(missing(open)),
            }
        }
        Verb::Scroll => {
            let i = skip_ws(text, after);
            let word: String = text[i..]
                .chars()
                .take_while(|c| c.is_ascii_alphabetic())
                .collect();
            Direction::from_word(&word)
                .map(|direction| RefactoredAction::Scroll { direction })
                .ok_or_else(|| {
                    ParseError::new(
                        ParseErrorKind::MissingField("direction"),
                        i,
                        format!("expected up/down/left/right, found {word:?}"),
                    )
                })
        }
        Verb::Tap => {
            let (tap_point, _) = tap_point_after(text, after)?;
            Ok(RefactoredAction::Tap { tap_point })
        }
        Verb::Click => {
            let (tap_point, key_at) = tap_point_after(text, after)?;
            let mut part = text[after..key_at].trim();
            if let Some(p) = strip_suffix_ci(part, "is") {
                part = p.trim_end();
            }
            if let Some(p) = strip_suffix_ci(part, "on the screen") {
                part = p.trim_end();
            }
            let name = split_click_name(part);
            if name.is_empty() {
                return Err(ParseError::new(
                    ParseErrorKind::MissingField("item_name"),
                    after,
                    "click without an item name",
                ));
            }
            Ok(RefactoredAction::Click {
                item_name: name.to_string(),
                tap_point,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoundingBox;
    use proptest::prelude::*;

    fn p(y: f64, x: f64) -> Point {
        Point::new(y, x)
    }

    fn settings() -> Vec<LayoutItem> {
        vec![LayoutItem::with_bbox(
            "Settings",
            BoundingBox::new(0.4, 0.4, 0.6, 0.6),
        )]
    }

    #[test]
    fn direction_examples() {
        assert_eq!(direction_of(p(0.8, 0.5), p(0.2, 0.5)), Ok(Direction::Up));
        assert_eq!(direction_of(p(0.5, 0.2), p(0.5, 0.9)), Ok(Direction::Right));
        assert_eq!(
            direction_of(p(0.5, 0.5), p(0.5, 0.5)),
            Err(CodecError::ZeroDisplacement)
        );
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify_dual_point(p(0.5, 0.5), p(0.5, 0.5), &settings(), 0.04),
            RefactoredAction::Click {
                item_name: "Settings".into(),
                tap_point: p(0.5, 0.5)
            }
        );
        assert_eq!(
            classify_dual_point(p(0.8, 0.5), p(0.2, 0.5), &settings(), 0.04),
            RefactoredAction::Scroll {
                direction: Direction::Up
            }
        );
        assert_eq!(
            classify_dual_point(p(0.95, 0.95), p(0.95, 0.95), &[], 0.04),
            RefactoredAction::Tap {
                tap_point: p(0.95, 0.95)
            }
        );
    }

    #[test]
    fn overlapping_boxes_pick_first_in_layout_order() {
        let layout = vec![
            LayoutItem::with_bbox("outer", BoundingBox::new(0.0, 0.0, 1.0, 1.0)),
            LayoutItem::with_bbox("inner", BoundingBox::new(0.4, 0.4, 0.6, 0.6)),
        ];
        let r = classify_dual_point(p(0.45, 0.45), p(0.45, 0.45), &layout, 0.04);
        assert_eq!(r.verb(), Verb::Click);
        assert!(matches!(r, RefactoredAction::Click { ref item_name, .. } if item_name == "outer"));
        // a point sitting on an item's center selects that item
        let r = classify_dual_point(p(0.5, 0.5), p(0.5, 0.5), &layout, 0.04);
        assert!(matches!(r, RefactoredAction::Click { ref item_name, .. } if item_name == "outer"));
        let r = classify_dual_point(p(0.5, 0.5), p(0.5, 0.5), &layout[1..], 0.04);
        assert!(matches!(r, RefactoredAction::Click { ref item_name, .. } if item_name == "inner"));
    }

    #[test]
    fn encode_table_rows() {
        let cfg = CapConfig::default();
        let enc = |a: &CanonicalAction| encode_action(a, &[], &cfg).unwrap();
        assert_eq!(
            enc(&CanonicalAction::simple(ActionType::PressHome)),
            "I need to <PRESS_HOME>"
        );
        assert_eq!(
            enc(&CanonicalAction::simple(ActionType::StatusTaskComplete)),
            "For this goal, no more action is needed, so <STATUS_TASK_COMPLETE>"
        );
        assert_eq!(
            enc(&CanonicalAction::type_text("Whats the news in Chile?")),
            "I need to <TYPE> a string here, \"typed_text\": \"Whats the news in Chile?\""
        );
        assert_eq!(
            enc(&CanonicalAction::dual_point(
                p(0.7768, 0.7205),
                p(0.7768, 0.7205)
            )),
            "I need to <TAP> on the screen, the location is \"tap_point\": \"[0.7768, 0.7205]\""
        );
        assert_eq!(
            enc(&CanonicalAction::dual_point(p(0.2, 0.5), p(0.8, 0.5))),
            "I need to <SCROLL> down"
        );
    }

    #[test]
    fn encode_click_uses_item_center() {
        let layout = vec![LayoutItem::at(
            "Chile | Today's latest from Al",
            p(0.3947, 0.4370),
        )];
        let a = CanonicalAction::dual_point(p(0.401, 0.44), p(0.401, 0.44));
        assert_eq!(
            encode_action(&a, &layout, &CapConfig::default()).unwrap(),
            "I need to <CLICK> Chile | Today's latest from Al, the location of Chile | Today's latest from Al on the screen is \"tap_point\": \"[0.3947, 0.4370]\""
        );
    }

    #[test]
    fn encode_rejects_invalid_action() {
        let mut a = CanonicalAction::simple(ActionType::PressBack);
        a.typed_text = "x".into();
        assert!(matches!(
            encode_action(&a, &[], &CapConfig::default()),
            Err(CodecError::InvalidAction(_))
        ));
    }

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_action("I need to <SCROLL> down"),
            Ok(RefactoredAction::Scroll {
                direction: Direction::Down
            })
        );
        let err = parse_action("I need to <FLY>").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownVerb);
        assert_eq!(err.offset, 10);
    }

    #[test]
    fn parse_error_kinds() {
        let e = parse_action(
            "I need to <TAP> on the screen, the location is \"tap_point\": \"[0.5; 0.2]\"",
        )
        .unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::BadCoordinate);
        let e = parse_action("I need to <TAP> on the screen").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MissingField("tap_point"));
        let e = parse_action("I need to <TYPE> something").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MissingField("typed_text"));
        let e = parse_action("I need to <SCROLL> sideways").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::MissingField("direction"));
        let e = parse_action("").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownVerb);
    }

    #[test]
    fn parse_click_variants() {
        let spaced_template = "I need to <CLICK> Wi-Fi, on, the location of Wi-Fi, on is  \"tap_point\": \"[0.1000, 0.2000]\"";
        assert_eq!(
            parse_action(spaced_template),
            Ok(RefactoredAction::Click {
                item_name: "Wi-Fi, on".into(),
                tap_point: p(0.1, 0.2)
            })
        );
        let nested = RefactoredAction::Click {
            item_name: "a, the location of b".into(),
            tap_point: p(0.3, 0.3),
        };
        assert_eq!(parse_action(&nested.render()), Ok(nested));
        let spaced = "  I need to   < CLICK >   Maps ,  the location of Maps on the screen is \"tap_point\" : \" [0.2785 ,0.8843] \"";
        // delimiter does not match exactly, so the whole name part is taken
        assert!(
            matches!(parse_action(spaced), Ok(RefactoredAction::Click { tap_point, .. }) if tap_point == p(0.2785, 0.8843))
        );
    }

    #[test]
    fn parse_type_keeps_inner_quotes() {
        let r = RefactoredAction::Type {
            text: "say \"hi\", ok".into(),
        };
        assert_eq!(parse_action(&r.render()), Ok(r));
        let empty = RefactoredAction::Type {
            text: String::new(),
        };
        assert_eq!(parse_action(&empty.render()), Ok(empty));
    }

    #[test]
    fn canonicalize_rows() {
        assert_eq!(
            canonicalize(&RefactoredAction::PressEnter),
            CanonicalAction::simple(ActionType::PressEnter)
        );
        let up = canonicalize(&RefactoredAction::Scroll {
            direction: Direction::Up,
        });
        assert_eq!((up.touch_point, up.lift_point), (p(0.8, 0.5), p(0.2, 0.5)));
        let tap = canonicalize(&RefactoredAction::Tap {
            tap_point: p(0.3, 0.7),
        });
        assert_eq!(tap, CanonicalAction::dual_point(p(0.3, 0.7), p(0.3, 0.7)));
    }

    #[test]
    fn anchors_are_fixed_points() {
        for d in Direction::ALL {
            let c = canonicalize(&RefactoredAction::Scroll { direction: d });
            assert_eq!(direction_of(c.touch_point, c.lift_point), Ok(d));
        }
    }

    #[test]
    fn normalize_examples() {
        let cfg = CapConfig::default();
        let click = CanonicalAction::dual_point(p(0.52, 0.58), p(0.52, 0.58));
        let n = normalize_gold(&click, &settings(), &cfg);
        assert!((n.touch_point.y - 0.5).abs() < 1e-12 && (n.touch_point.x - 0.5).abs() < 1e-12);
        assert_eq!(n.touch_point, n.lift_point);

        let scroll = CanonicalAction::dual_point(p(0.7, 0.45), p(0.1, 0.55));
        let n = normalize_gold(&scroll, &[], &cfg);
        assert_eq!((n.touch_point, n.lift_point), Direction::Up.anchors());

        let back = CanonicalAction::simple(ActionType::PressBack);
        assert_eq!(normalize_gold(&back, &settings(), &cfg), back);
    }

    #[test]
    fn threshold_bounds() {
        assert!(CapConfig {
            swipe_threshold: 0.0
        }
        .validate()
        .is_err());
        assert!(CapConfig {
            swipe_threshold: 0.6
        }
        .validate()
        .is_err());
        assert!(CapConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn parse_never_panics(s in ".{0,200}") {
            let _ = parse_action(&s);
        }

        #[test]
        fn parse_never_panics_near_grammar(
            verb in prop::sample::select(Verb::ALL.to_vec()),
            tail in "[ -~\u{00e9}\u{4e2d}]{0,60}",
        ) {
            let _ = parse_action(&format!("{} {tail}", verb.prefix()));
        }

        #[test]
        fn classification_is_total(
            ty in 0.0f64..=1.0, tx in 0.0f64..=1.0,
            ly in 0.0f64..=1.0, lx in 0.0f64..=1.0,
            threshold in 0.001f64..0.59,
            centers in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..6),
        ) {
            let layout: Vec<_> = centers.iter().enumerate()
                .map(|(i, (y, x))| LayoutItem::at(format!("item{i}"), p(*y, *x)))
                .collect();
            let r = classify_dual_point(p(ty, tx), p(ly, lx), &layout, threshold);
            prop_assert!(matches!(r.verb(), Verb::Scroll | Verb::Click | Verb::Tap));
        }

        #[test]
        fn normalize_is_idempotent(
            ty in 0.0f64..=1.0, tx in 0.0f64..=1.0,
            dy in -0.3f64..0.3, dx in -0.3f64..0.3,
            centers in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..8),
        ) {
            let cfg = CapConfig::default();
            let layout: Vec<_> = centers.iter().enumerate()
                .map(|(i, (y, x))| LayoutItem::at(format!("item{i}"), p(*y, *x)))
                .collect();
            let lift = p((ty + dy).clamp(0.0, 1.0), (tx + dx).clamp(0.0, 1.0));
            let a = CanonicalAction::dual_point(p(ty, tx), lift);
            let once = normalize_gold(&a, &layout, &cfg);
            prop_assert_eq!(normalize_gold(&once, &layout, &cfg), once);
        }
    }
}
