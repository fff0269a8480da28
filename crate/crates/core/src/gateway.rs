//! Agent backends and the teacher-forced evaluation loop.
//!
//! External backends speak newline-delimited JSON. The harness first writes
//! the handshake `{"protocol": "coco-agent/1"}`, then one [`AgentRequest`] per
//! line, and reads one [`AgentResponse`] per line. Lines from the agent that
//! carry a `"protocol"` key (a handshake echo) are skipped. The HTTP variant
//! POSTs the same request body and expects the response object as the body.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cap::{self, Direction, RefactoredAction};
use crate::cep::{self, CepConfig};
use crate::eval::{self, MatchConfig, MatchVerdict, MetricsReport, ScoredStep, StepFailure};
use crate::model::{Episode, Point};

pub const PROTOCOL: &str = "coco-agent/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub request_id: String,
    pub episode_id: String,
    pub step_index: usize,
    pub prompt_text: String,
    pub image_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub request_id: String,
    pub action_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("{failures} backend failures exceed the budget of {budget}")]
    FailureBudgetExceeded { failures: usize, budget: usize },
}

impl GatewayError {
    /// Transport-level trouble, which counts against the failure budget and
    /// makes the worker reconnect.
    pub fn is_connection_loss(&self) -> bool {
        matches!(
            self,
            Self::Timeout(_) | Self::Transport(_) | Self::Protocol(_)
        )
    }
}

/// One connection to a policy. One request is in flight at a time.
pub trait AgentBackend: Send {
    fn query(
        &mut self,
        req: &AgentRequest,
        timeout: Duration,
    ) -> Result<AgentResponse, GatewayError>;
}

/// Opens independent connections, one per evaluation worker.
pub trait BackendFactory: Sync {
    fn connect(&self) -> Result<Box<dyn AgentBackend>, GatewayError>;
}

impl<T> BackendFactory for T
where
    T: AgentBackend + Clone + Sync + 'static,
{
    fn connect(&self) -> Result<Box<dyn AgentBackend>, GatewayError> {
        Ok(Box::new(self.clone()))
    }
}

/// Request id for the `ordinal`-th step of a run.
pub fn request_id(ordinal: usize, episode_id: &str, step_index: usize) -> String {
    format!("{ordinal:06}-{episode_id}-{step_index}")
}

fn respond(req: &AgentRequest, action_text: String) -> AgentResponse {
    AgentResponse {
        request_id: req.request_id.clone(),
        action_text,
        latency_ms: None,
    }
}

/// Answers with the gold action of the requested step, plus the gold agent
/// utterance as a `Response:` line when the step has one.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    answers: Arc<HashMap<(String, usize), String>>,
}

impl ReplayBackend {
    pub fn new(episodes: &[Episode], cap_cfg: &cap::CapConfig) -> Result<Self, cap::CodecError> {
        let mut answers = HashMap::new();
        for ep in episodes {
            for (t, step) in ep.steps.iter().enumerate() {
                let mut text =
                    cap::encode_action(&step.gold_action, &step.observation.layout, cap_cfg)?;
                if let Some(u) = &step.agent_utterance {
                    text.push('\n');
                    text.push_str(eval::RESPONSE_PREFIX);
                    text.push(' ');
                    text.push_str(u);
                }
                answers.insert((ep.id.clone(), t), text);
            }
        }
        Ok(Self {
            answers: Arc::new(answers),
        })
    }
}

impl AgentBackend for ReplayBackend {
    fn query(
        &mut self,
        req: &AgentRequest,
        _timeout: Duration,
    ) -> Result<AgentResponse, GatewayError> {
        self.answers
            .get(&(req.episode_id.clone(), req.step_index))
            .map(|a| respond(req, a.clone()))
            .ok_or_else(|| {
                GatewayError::Backend(format!(
                    "no gold step {}#{}",
                    req.episode_id, req.step_index
                ))
            })
    }
}

/// Fixed answers: a per-step table with a default for everything else.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    pub default: String,
    pub per_step: Arc<HashMap<(String, usize), String>>,
}

impl ScriptedBackend {
    pub fn constant(text: impl Into<String>) -> Self {
        Self {
            default: text.into(),
            per_step: Arc::default(),
        }
    }

    pub fn with_steps(
        default: impl Into<String>,
        per_step: HashMap<(String, usize), String>,
    ) -> Self {
        Self {
            default: default.into(),
            per_step: Arc::new(per_step),
        }
    }
}

impl AgentBackend for ScriptedBackend {
    fn query(
        &mut self,
        req: &AgentRequest,
        _timeout: Duration,
    ) -> Result<AgentResponse, GatewayError> {
        let text = self
            .per_step
            .get(&(req.episode_id.clone(), req.step_index))
            .unwrap_or(&self.default);
        Ok(respond(req, text.clone()))
    }
}

/// Emits a random grammatical CAP action. The draw for a step depends only on
/// the seed and the step key, so reports do not depend on scheduling.
#[derive(Debug, Clone, Copy)]
pub struct RandomBackend {
    pub seed: u64,
}

const RANDOM_WORDS: [&str; 6] = ["search", "news", "settings", "weather", "maps", "ok"];

impl RandomBackend {
    fn rng_for(&self, episode_id: &str, step_index: usize) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(episode_id.as_bytes());
        h.update([0]);
        h.update((step_index as u64).to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    pub fn draw(&self, episode_id: &str, step_index: usize) -> RefactoredAction {
        let mut rng = self.rng_for(episode_id, step_index);
        let mut point = || Point::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let p = point();
        let word = *RANDOM_WORDS.choose(&mut rng).unwrap_or(&"ok");
        match rng.gen_range(0..8) {
            0 => RefactoredAction::PressHome,
            1 => RefactoredAction::PressBack,
            2 => RefactoredAction::PressEnter,
            3 => RefactoredAction::TaskComplete,
            4 => RefactoredAction::Type {
                text: word.to_string(),
            },
            5 => RefactoredAction::Scroll {
                direction: Direction::ALL[rng.gen_range(0..4)],
            },
            6 => RefactoredAction::Click {
                item_name: word.to_string(),
                tap_point: p,
            },
            _ => RefactoredAction::Tap { tap_point: p },
        }
    }
}

impl AgentBackend for RandomBackend {
    fn query(
        &mut self,
        req: &AgentRequest,
        _timeout: Duration,
    ) -> Result<AgentResponse, GatewayError> {
        Ok(respond(
            req,
            self.draw(&req.episode_id, req.step_index).render(),
        ))
    }
}

/// Command line of a JSON-lines agent process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StdioSpec {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl BackendFactory for StdioSpec {
    fn connect(&self) -> Result<Box<dyn AgentBackend>, GatewayError> {
        Ok(Box::new(StdioBackend::spawn(self)?))
    }
}

/// A child process speaking the protocol on its standard streams.
pub struct StdioBackend {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    poisoned: bool,
}

impl StdioBackend {
    pub fn spawn(spec: &StdioSpec) -> Result<Self, GatewayError> {
        let mut child = Command::new(&spec.program)
            .args(&spec.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| GatewayError::Transport(format!("spawn {}: {e}", spec.program)))?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let hello = serde_json::json!({ "protocol": PROTOCOL });
        writeln!(stdin, "{hello}")
            .and_then(|_| stdin.flush())
            .map_err(|e| GatewayError::Transport(format!("handshake: {e}")))?;
        Ok(Self {
            child,
            stdin,
            lines: rx,
            poisoned: false,
        })
    }

    fn poison(&mut self) {
        self.poisoned = true;
        let _ = self.child.kill();
    }

    fn read_response(
        &mut self,
        req: &AgentRequest,
        deadline: Instant,
    ) -> Result<AgentResponse, GatewayError> {
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(left) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(GatewayError::Transport(format!("read: {e}"))),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(GatewayError::Timeout(Duration::ZERO))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(GatewayError::Transport("agent closed its output".into()))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&line)
                .map_err(|e| GatewayError::Protocol(format!("not JSON ({e}): {line:.80}")))?;
            if value.get("protocol").is_some() {
                continue;
            }
            let resp: AgentResponse = serde_json::from_value(value)
                .map_err(|e| GatewayError::Protocol(format!("bad response object: {e}")))?;
            if resp.request_id != req.request_id {
                return Err(GatewayError::Protocol(format!(
                    "response for {} while waiting for {}",
                    resp.request_id, req.request_id
                )));
            }
            return Ok(resp);
        }
    }
}

impl AgentBackend for StdioBackend {
    fn query(
        &mut self,
        req: &AgentRequest,
        timeout: Duration,
    ) -> Result<AgentResponse, GatewayError> {
        if self.poisoned {
            return Err(GatewayError::Transport(
                "connection closed after an earlier failure".into(),
            ));
        }
        let deadline = Instant::now() + timeout;
        let line = serde_json::to_string(req).map_err(|e| GatewayError::Protocol(e.to_string()))?;
        let sent = writeln!(self.stdin, "{line}").and_then(|_| self.stdin.flush());
        if let Err(e) = sent {
            self.poison();
            return Err(GatewayError::Transport(format!("write: {e}")));
        }
        let result = self.read_response(req, deadline).map_err(|e| match e {
            GatewayError::Timeout(_) => GatewayError::Timeout(timeout),
            other => other,
        });
        // A late answer would be taken for the next request's.
        if result.is_err() {
            self.poison();
        }
        result
    }
}

impl Drop for StdioBackend {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// POSTs each request to one endpoint.
#[cfg(not(target_arch = "wasm32"))]
#[derive(Debug, Clone)]
pub struct HttpBackend {
    pub url: String,
    agent: ureq::Agent,
}

#[cfg(not(target_arch = "wasm32"))]
impl HttpBackend {
    pub fn new(url: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            url: url.into(),
            agent,
        }
    }
}

#[cfg(not(target_arch = "wasm32"))]
impl AgentBackend for HttpBackend {
    fn query(
        &mut self,
        req: &AgentRequest,
        timeout: Duration,
    ) -> Result<AgentResponse, GatewayError> {
        let body = serde_json::to_string(req).map_err(|e| GatewayError::Protocol(e.to_string()))?;
        let result = self
            .agent
            .post(&self.url)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .header("content-type", "application/json")
            .send(body.as_str());
        let mut resp = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(GatewayError::Timeout(timeout)),
            Err(e) => return Err(GatewayError::Transport(e.to_string())),
        };
        let status = resp.status();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Backend(format!("HTTP {status}: {text:.200}")));
        }
        let resp: AgentResponse = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Protocol(format!("bad response body: {e}")))?;
        if resp.request_id != req.request_id {
            return Err(GatewayError::Protocol(format!(
                "response for {} while waiting for {}",
                resp.request_id, req.request_id
            )));
        }
        Ok(resp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub parallelism: usize,
    /// Connection-loss failures tolerated before the run aborts.
    pub failure_budget: usize,
    pub timeout_ms: u64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            parallelism: 1,
            failure_budget: 0,
            timeout_ms: 30_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    /// Run order.
    pub steps: Vec<ScoredStep>,
}

struct Job<'a> {
    ordinal: usize,
    episode: &'a Episode,
    t: usize,
}

fn score_job(
    job: &Job<'_>,
    backend: &mut Option<Box<dyn AgentBackend>>,
    factory: &dyn BackendFactory,
    cep_cfg: &CepConfig,
    match_cfg: &MatchConfig,
    timeout: Duration,
) -> (ScoredStep, Option<GatewayError>) {
    let ep = job.episode;
    let step = &ep.steps[job.t];
    let scored = |verdict: MatchVerdict, failure: Option<StepFailure>| ScoredStep {
        subset: ep.subset.clone(),
        episode_id: ep.id.clone(),
        step_index: job.t,
        action_type: step.gold_action.action_type,
        verdict,
        failure,
    };
    let failed = || MatchVerdict::failed(step, match_cfg);
    let prompt = match cep::eval_step_prompt(ep, job.t, cep_cfg, &match_cfg.cap()) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("{}#{}: {e}", ep.id, job.t);
            return (scored(failed(), Some(StepFailure::Prompt)), None);
        }
    };
    let req = AgentRequest {
        request_id: request_id(job.ordinal, &ep.id, job.t),
        episode_id: ep.id.clone(),
        step_index: job.t,
        prompt_text: prompt.text,
        image_ref: prompt.image_ref,
    };
    let result = match backend {
        Some(b) => b.query(&req, timeout),
        None => factory.connect().and_then(|mut b| {
            let r = b.query(&req, timeout);
            *backend = Some(b);
            r
        }),
    };
    match result {
        Ok(resp) => {
            let verdict = eval::match_step(&resp.action_text, step, match_cfg);
            let failure = verdict.parse_failed.then_some(StepFailure::Parse);
            (scored(verdict, failure), None)
        }
        Err(e) => {
            log::warn!("{}: {e}", req.request_id);
            if e.is_connection_loss() {
                *backend = None;
            }
            (scored(failed(), Some(StepFailure::Backend)), Some(e))
        }
    }
}

/// Scores every step of `episodes` with gold history in the prompts.
///
/// Backend failures are scored as incorrect. The run aborts once connection
/// losses exceed `run.failure_budget`.
pub fn run_eval(
    episodes: &[Episode],
    factory: &dyn BackendFactory,
    cep_cfg: &CepConfig,
    match_cfg: &MatchConfig,
    run: &RunConfig,
) -> Result<EvalOutcome, GatewayError> {
    let jobs: Vec<Job<'_>> = episodes
        .iter()
        .flat_map(|ep| (0..ep.steps.len()).map(move |t| (ep, t)))
        .enumerate()
        .map(|(ordinal, (episode, t))| Job {
            ordinal,
            episode,
            t,
        })
        .collect();
    let timeout = Duration::from_millis(run.timeout_ms);
    let next = AtomicUsize::new(0);
    let losses = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<(usize, ScoredStep)>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = run.parallelism.clamp(1, jobs.len().max(1));

    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                let mut backend: Option<Box<dyn AgentBackend>> = None;
                let mut local = Vec::new();
                while !abort.load(Ordering::Relaxed) {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(job) = jobs.get(i) else { break };
                    let (scored, err) =
                        score_job(job, &mut backend, factory, cep_cfg, match_cfg, timeout);
                    if err.is_some_and(|e| e.is_connection_loss())
                        && losses.fetch_add(1, Ordering::Relaxed) + 1 > run.failure_budget
                    {
                        abort.store(true, Ordering::Relaxed);
                    }
                    local.push((job.ordinal, scored));
                }
                results.lock().expect("worker panicked").extend(local);
            });
        }
    });

    let failures = losses.load(Ordering::Relaxed);
    if abort.load(Ordering::Relaxed) {
        return Err(GatewayError::FailureBudgetExceeded {
            failures,
            budget: run.failure_budget,
        });
    }
    let mut results = results.into_inner().expect("worker panicked");
    results.sort_by_key(|(ordinal, _)| *ordinal);
    let steps: Vec<ScoredStep> = results.into_iter().map(|(_, s)| s).collect();
    let mut report = eval::aggregate(&steps);
    report.config = serde_json::json!({ "cep": cep_cfg, "match": match_cfg, "run": run });
    Ok(EvalOutcome { report, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActionType, CanonicalAction, LayoutItem, ScreenObservation, Step};

    fn episode(id: &str, actions: Vec<CanonicalAction>) -> Episode {
        Episode {
            id: id.into(),
            goal: "open settings".into(),
            subset: "general".into(),
            steps: actions
                .into_iter()
                .map(|a| {
                    Step::new(
                        ScreenObservation {
                            image_ref: format!("{id}.png"),
                            layout: vec![LayoutItem::at("Settings", Point::new(0.3, 0.6))],
                        },
                        a,
                    )
                })
                .collect(),
        }
    }

    fn home_fixture() -> Vec<Episode> {
        vec![episode(
            "e1",
            vec![
                CanonicalAction::simple(ActionType::PressHome),
                CanonicalAction::dual_point(Point::new(0.3, 0.6), Point::new(0.3, 0.6)),
                CanonicalAction::type_text("wifi"),
                CanonicalAction::simple(ActionType::StatusTaskComplete),
            ],
        )]
    }

    fn req(ep: &str, t: usize) -> AgentRequest {
        AgentRequest {
            request_id: request_id(0, ep, t),
            episode_id: ep.into(),
            step_index: t,
            prompt_text: "<image>\nGoal: x\nNext action:".into(),
            image_ref: "x.png".into(),
        }
    }

    fn sh(script: &str) -> StdioSpec {
        StdioSpec {
            program: "sh".into(),
            args: vec!["-c".into(), script.into()],
        }
    }

    #[test]
    fn replay_returns_gold_string() {
        let eps = home_fixture();
        let mut b = ReplayBackend::new(&eps, &cap::CapConfig::default()).unwrap();
        let r = b.query(&req("e1", 1), Duration::from_secs(1)).unwrap();
        assert_eq!(
            r.action_text,
            "I need to <CLICK> Settings, the location of Settings on the screen is \"tap_point\": \"[0.3000, 0.6000]\""
        );
        assert!(matches!(
            b.query(&req("nope", 0), Duration::from_secs(1)),
            Err(GatewayError::Backend(_))
        ));
    }

    #[test]
    fn replay_eval_is_perfect() {
        let eps = home_fixture();
        let b = ReplayBackend::new(&eps, &cap::CapConfig::default()).unwrap();
        let out = run_eval(
            &eps,
            &b,
            &CepConfig::default(),
            &MatchConfig::default(),
            &RunConfig::default(),
        )
        .unwrap();
        assert_eq!(out.report.overall_micro.action_accuracy, 1.0);
        assert_eq!(out.steps.len(), 4);
    }

    #[test]
    fn always_home_scores_one_quarter() {
        let eps = home_fixture();
        let b = ScriptedBackend::constant("I need to <PRESS_HOME>");
        let out = run_eval(
            &eps,
            &b,
            &CepConfig::default(),
            &MatchConfig::default(),
            &RunConfig::default(),
        )
        .unwrap();
        assert_eq!(out.report.overall_macro.action_accuracy, 0.25);
    }

    #[test]
    fn random_backend_is_deterministic_across_parallelism() {
        let eps: Vec<Episode> = (0..6)
            .map(|i| {
                let mut e = home_fixture().remove(0);
                e.id = format!("e{i}");
                e
            })
            .collect();
        let b = RandomBackend { seed: 7 };
        let run = |p| {
            let cfg = RunConfig {
                parallelism: p,
                ..RunConfig::default()
            };
            serde_json::to_string(
                &run_eval(
                    &eps,
                    &b,
                    &CepConfig::default(),
                    &MatchConfig::default(),
                    &cfg,
                )
                .unwrap()
                .steps,
            )
            .unwrap()
        };
        assert_eq!(run(1), run(1));
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn stdio_timeout() {
        let mut b = StdioBackend::spawn(&sh("sleep 5")).unwrap();
        let start = Instant::now();
        let r = b.query(&req("e1", 0), Duration::from_millis(200));
        assert!(matches!(r, Err(GatewayError::Timeout(_))), "{r:?}");
        assert!(start.elapsed() < Duration::from_secs(2));
    }

    #[test]
    fn stdio_non_json_is_protocol_error() {
        let mut b = StdioBackend::spawn(&sh("read hello; read req; echo 'not json'")).unwrap();
        let r = b.query(&req("e1", 0), Duration::from_secs(5));
        assert!(matches!(r, Err(GatewayError::Protocol(_))), "{r:?}");
    }

    #[test]
    fn stdio_skips_handshake_echo() {
        let script = r#"read hello; echo "$hello"; read req; echo '{"request_id": "000000-e1-0", "action_text": "I need to <PRESS_BACK>"}'"#;
        let mut b = StdioBackend::spawn(&sh(script)).unwrap();
        let r = b.query(&req("e1", 0), Duration::from_secs(5)).unwrap();
        assert_eq!(r.action_text, "I need to <PRESS_BACK>");
    }

    #[test]
    fn failure_budget_aborts_run() {
        let eps = home_fixture();
        let spec = sh("exit 0");
        let cfg = RunConfig {
            failure_budget: 1,
            timeout_ms: 2000,
            ..RunConfig::default()
        };
        let r = run_eval(
            &eps,
            &spec,
            &CepConfig::default(),
            &MatchConfig::default(),
            &cfg,
        );
        assert!(
            matches!(r, Err(GatewayError::FailureBudgetExceeded { .. })),
            "{r:?}"
        );

        let cfg = RunConfig {
            failure_budget: 10,
            ..cfg
        };
        let out = run_eval(
            &eps,
            &spec,
            &CepConfig::default(),
            &MatchConfig::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(out.report.overall_micro.backend_failures, 4);
        assert_eq!(out.report.overall_micro.action_accuracy, 0.0);
    }
}
