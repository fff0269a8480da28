use std::path::PathBuf;
use std::time::Duration;

use coco_core::cap::CapConfig;
use coco_core::cep::CepConfig;
use coco_core::eval::MatchConfig;
use coco_core::gateway::{
    self, AgentBackend, AgentRequest, GatewayError, RunConfig, StdioBackend, StdioSpec,
};
use coco_core::model::ActionType;
use coco_core::synth::{self, SynthSpec};

fn agent() -> StdioSpec {
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/home_agent.py");
    StdioSpec {
        program: "python3".into(),
        args: vec![script.to_string_lossy().into_owned()],
    }
}

fn request(prompt: &str) -> AgentRequest {
    AgentRequest {
        request_id: gateway::request_id(0, "e", 0),
        episode_id: "e".into(),
        step_index: 0,
        prompt_text: prompt.into(),
        image_ref: "e.png".into(),
    }
}

#[test]
fn stdio_agent_answers_and_survives_handshake_echo() {
    let mut b = StdioBackend::spawn(&agent()).unwrap();
    for _ in 0..3 {
        let r = b
            .query(
                &request("<image>\nGoal: x\nNext action:"),
                Duration::from_secs(10),
            )
            .unwrap();
        assert_eq!(r.action_text, "I need to <PRESS_HOME>");
        assert_eq!(r.latency_ms, Some(0.1));
    }
    let r = b.query(&request("BREAK"), Duration::from_secs(10));
    assert!(matches!(r, Err(GatewayError::Protocol(_))), "{r:?}");
}

#[test]
fn stdio_eval_scores_against_gold() {
    let eps = synth::synthetic_dataset(
        &SynthSpec {
            episodes: 12,
            ..SynthSpec::default()
        },
        &CapConfig::default(),
    );
    let total: usize = eps.iter().map(|e| e.steps.len()).sum();
    let homes = eps
        .iter()
        .flat_map(|e| &e.steps)
        .filter(|s| s.gold_action.action_type == ActionType::PressHome)
        .count();
    let run = RunConfig {
        parallelism: 3,
        timeout_ms: 10_000,
        ..RunConfig::default()
    };
    let out = gateway::run_eval(
        &eps,
        &agent(),
        &CepConfig::default(),
        &MatchConfig::default(),
        &run,
    )
    .unwrap();
    assert_eq!(out.steps.len(), total);
    assert_eq!(
        out.report.overall_micro.action_accuracy,
        homes as f64 / total as f64
    );
    assert_eq!(out.report.overall_micro.backend_failures, 0);
}
