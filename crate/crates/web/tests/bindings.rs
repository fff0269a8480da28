use coco_web::{classify_gesture, layout_json, parse_cap, score};
use serde_json::Value;

fn j(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn drag_up_is_a_scroll() {
    let v = j(classify_gesture(0.8, 0.5, 0.3, 0.55));
    assert_eq!(v["verb"], "SCROLL");
    assert!(v["cap"].as_str().unwrap().ends_with("<SCROLL> up"));
}

#[test]
fn press_inside_a_box_is_a_click() {
    let v = j(classify_gesture(0.35, 0.2, 0.351, 0.2));
    assert_eq!(v["verb"], "CLICK");
    assert!(v["cap"].as_str().unwrap().contains("Hotels"));
    assert_eq!(j(classify_gesture(0.6, 0.5, 0.6, 0.5))["verb"], "TAP");
}

#[test]
fn parse_reports_errors() {
    assert_eq!(j(parse_cap("I need to <PRESS_HOME>"))["verb"], "PRESS_HOME");
    let bad = j(parse_cap("I need to <PRESS_HOEM>"));
    assert_eq!(bad["ok"], false);
    assert!(bad["error"].is_string());
}

#[test]
fn score_click_by_name_and_miss() {
    let gold = j(classify_gesture(0.35, 0.2, 0.35, 0.2))["cap"]
        .as_str()
        .unwrap()
        .to_string();
    let hit = j(score(&gold, &gold));
    assert_eq!(hit["action_correct"], true);
    let miss = j(score(&gold, "I need to <PRESS_BACK>"));
    assert_eq!(miss["action_correct"], false);
    assert_eq!(miss["cot_type_correct"], false);
    assert_eq!(j(layout_json()).as_array().unwrap().len(), 4);
}
