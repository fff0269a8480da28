//! Browser demo bindings. Every export returns a JSON string so the page
//! needs no glue beyond `JSON.parse`.

use coco_core::cap::{self, CapConfig, RefactoredAction};
use coco_core::eval::{self, MatchConfig};
use coco_core::model::{BoundingBox, CanonicalAction, LayoutItem, Point, ScreenObservation, Step};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Screen the demo page draws; gestures are classified against it.
pub fn demo_layout() -> Vec<LayoutItem> {
    vec![
        LayoutItem::with_bbox("Search", BoundingBox::new(0.08, 0.10, 0.16, 0.90)),
        LayoutItem::with_bbox("Hotels", BoundingBox::new(0.30, 0.10, 0.40, 0.45)),
        LayoutItem::with_bbox("Flights", BoundingBox::new(0.30, 0.55, 0.40, 0.90)),
        LayoutItem::with_bbox("Settings", BoundingBox::new(0.85, 0.35, 0.93, 0.65)),
    ]
}

fn describe(r: &RefactoredAction) -> Value {
    let canonical = cap::canonicalize(r);
    json!({
        "ok": true,
        "verb": r.verb().token_name(),
        "cap": r.render(),
        "canonical": canonical.to_command_json(),
    })
}

fn error(message: impl ToString) -> String {
    json!({ "ok": false, "error": message.to_string() }).to_string()
}

#[wasm_bindgen]
pub fn layout_json() -> String {
    serde_json::to_string(&demo_layout()).unwrap_or_default()
}

/// Classifies a drag from touch to lift on the demo layout.
#[wasm_bindgen]
pub fn classify_gesture(touch_y: f64, touch_x: f64, lift_y: f64, lift_x: f64) -> String {
    let cfg = CapConfig::default();
    let (touch, lift) = (Point::new(touch_y, touch_x), Point::new(lift_y, lift_x));
    let r = cap::classify_dual_point(touch, lift, &demo_layout(), cfg.swipe_threshold);
    let mut v = describe(&r);
    v["distance"] = json!(touch.distance(&lift));
    v.to_string()
}

#[wasm_bindgen]
pub fn parse_cap(text: &str) -> String {
    match cap::parse_action(text) {
        Ok(r) => describe(&r).to_string(),
        Err(e) => error(e),
    }
}

/// Scores a predicted output against a gold CAP string on the demo layout.
#[wasm_bindgen]
pub fn score(gold_cap: &str, prediction: &str) -> String {
    let gold = match cap::parse_action(gold_cap) {
        Ok(r) => cap::canonicalize(&r),
        Err(e) => return error(format!("gold: {e}")),
    };
    score_against(gold, prediction)
}

fn score_against(gold: CanonicalAction, prediction: &str) -> String {
    let step = Step::new(
        ScreenObservation {
            image_ref: "demo.png".into(),
            layout: demo_layout(),
        },
        gold,
    );
    let verdict = eval::match_step(prediction, &step, &MatchConfig::default());
    match serde_json::to_value(&verdict) {
        Ok(mut v) => {
            v["ok"] = json!(true);
            v.to_string()
        }
        Err(e) => error(e),
    }
}
