use std::fs;
use std::path::PathBuf;

use coco_core::cap::{self, CapConfig, RefactoredAction};
use coco_core::cep::{self, CepConfig};
use coco_core::ingest::{self, DatasetFormat, DatasetManifest};
use coco_core::model::Episode;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn load() -> Episode {
    let manifest = DatasetManifest::single(
        "worked",
        DatasetFormat::AitwJsonl,
        "general",
        fixture("worked_episode.jsonl"),
    );
    let report = ingest::load_episodes(&manifest, &CapConfig::default()).unwrap();
    assert!(report.violations.is_empty(), "{:?}", report.violations);
    assert_eq!(report.episodes.len(), 1);
    report.episodes.into_iter().next().unwrap()
}

#[test]
fn prompt_is_byte_identical() {
    let ep = load();
    let want = fs::read_to_string(fixture("worked_prompt.txt")).unwrap();
    let got = cep::build_step_prompt(&ep, 6, &CepConfig::default(), &CapConfig::default()).unwrap();
    assert_eq!(got.text, want);
    assert_eq!(got.history_len, 6);
    assert_eq!(got.layout_lines().len(), 44);
}

#[test]
fn output_is_byte_identical() {
    let ep = load();
    let want = fs::read_to_string(fixture("worked_output.txt")).unwrap();
    let step = &ep.steps[6];
    let got = cap::encode_action(
        &step.gold_action,
        &step.observation.layout,
        &CapConfig::default(),
    )
    .unwrap();
    assert_eq!(got, want);
    match cap::parse_action(&want).unwrap() {
        RefactoredAction::Click { item_name, .. } => {
            assert_eq!(item_name, "Chile | Today's latest from Al")
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn history_lines_follow_the_episode() {
    let ep = load();
    let p = cep::build_step_prompt(&ep, 6, &CepConfig::default(), &CapConfig::default()).unwrap();
    let verbs: Vec<_> = p
        .history_lines()
        .iter()
        .map(|l| cap::parse_action(l).unwrap().verb().token_name())
        .collect();
    assert_eq!(
        verbs,
        ["PRESS_HOME", "TAP", "CLICK", "TYPE", "TYPE", "PRESS_ENTER"]
    );
}

#[test]
fn truncation_keeps_goal_and_recent_history() {
    let ep = load();
    let full =
        cep::build_step_prompt(&ep, 6, &CepConfig::default(), &CapConfig::default()).unwrap();
    let cut = cep::eval_step_prompt(&ep, 6, &CepConfig::default(), &CapConfig::default()).unwrap();
    assert!(cep::char_len(&full.text) > 2048);
    assert!(cep::char_len(&cut.text) <= 2048);
    assert!(cut
        .text
        .ends_with("Goal: What's the news in Chile?\nNext action:"));
    assert_eq!(cut.layout_lines(), full.layout_lines());
    assert_eq!(
        cut.history_lines(),
        &full.history_lines()[full.history_len - cut.history_len..]
    );
}
