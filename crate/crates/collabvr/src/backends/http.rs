//! Generic JSON-over-HTTP adapter for remote planner/verifier/generator
//! services.
//!
//! Every call POSTs `{"prompt_template_id": ..., "inputs": {...}}` to the
//! configured endpoint and expects the role's strict-JSON object back,
//! possibly wrapped in prose. Transport failures and 5xx responses are
//! retried with exponential backoff; a response whose body contains no
//! parseable JSON object triggers exactly one structured re-ask before the
//! error is surfaced.
//!
//! Token counts are read from a `usage` object in the response body when
//! present, otherwise estimated from the role's [`BackendProfile`].

use std::thread::sleep;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::types::{Clip, PlanStep, Progress, RouterAction, RouterDecision, Verdict};

use super::{
    BackendError, BackendProfile, BackendResult, CallMeta, Critic, CriticRequest, FrameRef,
    Generator, GeneratorRequest, Metered, Planner, PlannerRequest, Router, RouterRequest,
    Selector, SelectorRequest, Verifier, VerifierRequest, extract_json_object,
};

pub const TEMPLATE_PLANNER: &str = "step_planner";
pub const TEMPLATE_VERIFIER: &str = "step_verifier";
pub const TEMPLATE_ROUTER: &str = "failure_router";
pub const TEMPLATE_GENERATOR: &str = "clip_generator";
pub const TEMPLATE_SELECTOR: &str = "passk_selector";
pub const TEMPLATE_CRITIC: &str = "tpo_critic";

const REASK_HINT: &str = "Return ONLY the JSON object.";
const BACKOFF_INITIAL_MS: u64 = 500;

/// One remote endpoint. The auth token is read from the named environment
/// variable at call time and never stored in config files; model identity
/// and decoding temperature configure the deployment and are opaque to the
/// engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    #[serde(default)]
    pub auth_token_env_var: Option<String>,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_temperature() -> f64 {
    0.2
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    3
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            auth_token_env_var: None,
            model_name: model_name.into(),
            temperature: default_temperature(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
        }
    }
}

/// Shared call machinery for all roles.
struct HttpCaller {
    client: reqwest::blocking::Client,
    config: EndpointConfig,
    template_id: &'static str,
    profile: BackendProfile,
}

impl HttpCaller {
    fn new(config: EndpointConfig, template_id: &'static str, profile: BackendProfile) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .expect("reqwest client builds");
        Self { client, config, template_id, profile }
    }

    /// POST the wrapped request, retrying timeouts and 5xx with exponential
    /// backoff up to `max_retries` total tries. 4xx fails immediately.
    fn post_with_retries(&self, body: &Value) -> Result<String, BackendError> {
        let tries = self.config.max_retries.max(1);
        let mut last_err = String::new();
        for attempt in 0..tries {
            if attempt > 0 {
                sleep(Duration::from_millis(BACKOFF_INITIAL_MS << (attempt - 1)));
            }
            let mut req = self.client.post(&self.config.url).json(body);
            if let Some(var) = &self.config.auth_token_env_var {
                if let Ok(token) = std::env::var(var) {
                    req = req.bearer_auth(token);
                }
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return Ok(text);
                    }
                    if status.is_server_error() {
                        last_err = format!("status {status}");
                        continue;
                    }
                    return Err(BackendError::Status { status: status.as_u16(), body: text });
                }
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            }
        }
        Err(BackendError::Exhausted { attempts: tries, last: last_err })
    }

    /// Full call: wrap inputs, POST, extract the strict-JSON object, re-ask
    /// once on malformed output.
    fn call(&self, inputs: Value) -> Result<(Value, CallMeta), BackendError> {
        let started = Instant::now();
        let body = json!({ "prompt_template_id": self.template_id, "inputs": inputs });
        let text = self.post_with_retries(&body)?;
        let (payload, warning) = match extract_json_object(&text) {
            Some(v) => (v, None),
            None => {
                let mut reask_inputs = body["inputs"].clone();
                reask_inputs["reask"] = json!(REASK_HINT);
                let reask_body =
                    json!({ "prompt_template_id": self.template_id, "inputs": reask_inputs });
                let text = self.post_with_retries(&reask_body)?;
                match extract_json_object(&text) {
                    Some(v) => (v, Some("malformed output recovered via re-ask".to_string())),
                    None => {
                        return Err(BackendError::Malformed(format!(
                            "{}: no JSON object in response after re-ask",
                            self.template_id
                        )))
                    }
                }
            }
        };
        let mut meta = self.usage_meta(&payload);
        meta.latency_ms = started.elapsed().as_millis() as u64;
        meta.warning = warning;
        Ok((payload, meta))
    }

    fn usage_meta(&self, payload: &Value) -> CallMeta {
        match payload.get("usage") {
            Some(u) => CallMeta {
                input_tokens: u["input_tokens"]
                    .as_u64()
                    .unwrap_or(self.profile.input_token_estimate),
                output_tokens: u["output_tokens"]
                    .as_u64()
                    .unwrap_or(self.profile.output_token_estimate),
                latency_ms: 0,
                warning: None,
            },
            None => CallMeta::estimate(&self.profile),
        }
    }
}

fn parse_payload<T: serde::de::DeserializeOwned>(
    template: &str,
    payload: Value,
) -> Result<T, BackendError> {
    serde_json::from_value(payload)
        .map_err(|e| BackendError::Malformed(format!("{template}: {e}")))
}

pub struct HttpPlanner {
    caller: HttpCaller,
}

impl HttpPlanner {
    pub fn new(config: EndpointConfig) -> Self {
        Self {
            caller: HttpCaller::new(config, TEMPLATE_PLANNER, BackendProfile::planner_default()),
        }
    }
}

/// Planner wire response: the strict-JSON object without the engine-local
/// step index.
#[derive(Debug, Deserialize)]
struct PlanStepWire {
    observation: String,
    remaining_goal: String,
    task_complete: bool,
    instruction: String,
    target_state: String,
    estimated_steps_remaining: u32,
}

impl Planner for HttpPlanner {
    fn plan(&self, req: &PlannerRequest) -> BackendResult<PlanStep> {
        req.validate()?;
        let (payload, meta) = self.caller.call(serde_json::to_value(req).expect("serializable"))?;
        let wire: PlanStepWire = parse_payload(TEMPLATE_PLANNER, payload)?;
        let step = PlanStep {
            step_index: req.step_number,
            observation: wire.observation,
            remaining_goal: wire.remaining_goal,
            task_complete: wire.task_complete,
            instruction: wire.instruction,
            target_state: wire.target_state,
            estimated_steps_remaining: wire.estimated_steps_remaining,
        };
        step.validate().map_err(|e| BackendError::Malformed(e.to_string()))?;
        Ok(Metered::new(step, meta))
    }
}

/// Which representation of the candidate clip the remote verifier receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierVideoMode {
    /// Send the engine-sampled frames (default).
    SampledFrames,
    /// Send every frame and let the model sample internally.
    RawVideo,
}

pub struct HttpVerifier {
    caller: HttpCaller,
    mode: VerifierVideoMode,
}

impl HttpVerifier {
    pub fn new(config: EndpointConfig) -> Self {
        Self::with_mode(config, VerifierVideoMode::SampledFrames)
    }

    pub fn with_mode(config: EndpointConfig, mode: VerifierVideoMode) -> Self {
        Self {
            caller: HttpCaller::new(config, TEMPLATE_VERIFIER, BackendProfile::verifier_default()),
            mode,
        }
    }
}

impl Verifier for HttpVerifier {
    fn verify(&self, req: &VerifierRequest, clip: &Clip) -> BackendResult<Verdict> {
        req.validate()?;
        let mut inputs = serde_json::to_value(req).expect("serializable");
        if self.mode == VerifierVideoMode::RawVideo {
            let all: Vec<FrameRef> = clip.frames.iter().cloned().map(FrameRef::Frame).collect();
            inputs["sampled_frames"] = Value::Null;
            inputs["video"] = serde_json::to_value(all).expect("serializable");
        }
        let (payload, meta) = self.caller.call(inputs)?;
        let mut verdict: Verdict = parse_payload(TEMPLATE_VERIFIER, payload)?;
        let mut meta = meta;
        if !verdict.is_accept() && verdict.good_fraction.is_none() {
            meta.warning = Some("reject without good_fraction, defaulted to 0.0".to_string());
            verdict.good_fraction = Some(0.0);
        }
        verdict.validate().map_err(|e| BackendError::Malformed(e.to_string()))?;
        Ok(Metered::new(verdict, meta))
    }
}

pub struct HttpGenerator {
    caller: HttpCaller,
}

impl HttpGenerator {
    pub fn new(config: EndpointConfig) -> Self {
        Self {
            caller: HttpCaller::new(config, TEMPLATE_GENERATOR, BackendProfile::verifier_default()),
        }
    }
}

/// Generator wire response: inline frames only. Opaque media URIs cannot be
/// verified or resumed by the in-memory loop and are rejected here.
#[derive(Debug, Deserialize)]
struct ClipWire {
    frames: Vec<FrameRef>,
    fps: f64,
    #[serde(default)]
    fault: Option<crate::types::InjectedFault>,
}

#[derive(Debug, Serialize)]
struct GeneratorInputs<'a> {
    conditioning: FrameRef,
    action_prompt: &'a str,
    duration_s: f64,
    fps: f64,
    seed: u64,
}

impl Generator for HttpGenerator {
    fn generate(&self, req: &GeneratorRequest) -> BackendResult<Clip> {
        req.validate()?;
        let inputs = GeneratorInputs {
            conditioning: FrameRef::Frame(req.conditioning.clone()),
            action_prompt: &req.action_prompt,
            duration_s: req.duration_s,
            fps: req.fps,
            seed: req.seed,
        };
        let (payload, mut meta) =
            self.caller.call(serde_json::to_value(&inputs).expect("serializable"))?;
        let wire: ClipWire = parse_payload(TEMPLATE_GENERATOR, payload)?;
        let mut frames = Vec::with_capacity(wire.frames.len());
        for (i, r) in wire.frames.into_iter().enumerate() {
            match r {
                FrameRef::Frame(f) => frames.push(f),
                FrameRef::Uri(u) => {
                    return Err(BackendError::Malformed(format!(
                        "{TEMPLATE_GENERATOR}: frame {i} is an opaque media reference ({u}); \
                         inline grid frames are required"
                    )))
                }
            }
        }
        let clip = Clip {
            frames,
            fps: wire.fps,
            action_prompt: req.action_prompt.clone(),
            attempt_index: req.attempt_index,
            step_index: req.step_index,
            seed: req.seed,
            fault: wire.fault,
        };
        clip.validate().map_err(|e| BackendError::Malformed(e.to_string()))?;
        // Generator calls never carry VLM tokens.
        meta.input_tokens = 0;
        meta.output_tokens = 0;
        Ok(Metered::new(clip, meta))
    }
}

pub struct HttpRouter {
    caller: HttpCaller,
}

impl HttpRouter {
    pub fn new(config: EndpointConfig) -> Self {
        Self { caller: HttpCaller::new(config, TEMPLATE_ROUTER, BackendProfile::router_default()) }
    }
}

#[derive(Debug, Deserialize)]
struct RouterWire {
    action: String,
    #[serde(default)]
    suggestion: String,
    #[serde(default)]
    reason: String,
    #[serde(default)]
    estimated_steps: Option<u32>,
}

impl Router for HttpRouter {
    fn route(&self, req: &RouterRequest, _failed_clip: &Clip) -> BackendResult<RouterDecision> {
        let (payload, mut meta) =
            self.caller.call(serde_json::to_value(req).expect("serializable"))?;
        let wire: RouterWire = parse_payload(TEMPLATE_ROUTER, payload)?;
        let action = match wire.action.as_str() {
            "regen" => RouterAction::Regen,
            "split" => RouterAction::Split,
            "fallback" => RouterAction::Fallback,
            other => {
                meta.warning =
                    Some(format!("unknown router action {other:?}, treated as regen"));
                RouterAction::Regen
            }
        };
        let estimated_steps = match action {
            RouterAction::Split => Some(wire.estimated_steps.unwrap_or(2).max(2)),
            _ => None,
        };
        Ok(Metered::new(
            RouterDecision { action, suggestion: wire.suggestion, reason: wire.reason, estimated_steps },
            meta,
        ))
    }
}

pub struct HttpSelector {
    caller: HttpCaller,
}

impl HttpSelector {
    pub fn new(config: EndpointConfig) -> Self {
        Self {
            caller: HttpCaller::new(config, TEMPLATE_SELECTOR, BackendProfile::verifier_default()),
        }
    }
}

impl Selector for HttpSelector {
    fn select(&self, req: &SelectorRequest, candidates: &[Clip]) -> BackendResult<usize> {
        let (payload, mut meta) =
            self.caller.call(serde_json::to_value(req).expect("serializable"))?;
        let index = payload["selected_index"].as_u64().map(|i| i as usize);
        // A malformed or out-of-range index falls back to the first declared
        // seed rather than failing the run.
        let index = match index {
            Some(i) if i < candidates.len() => i,
            other => {
                meta.warning = Some(format!(
                    "selector returned invalid index {other:?}, defaulting to candidate 0"
                ));
                0
            }
        };
        Ok(Metered::new(index, meta))
    }
}

pub struct HttpCritic {
    caller: HttpCaller,
}

impl HttpCritic {
    pub fn new(config: EndpointConfig) -> Self {
        Self {
            caller: HttpCaller::new(config, TEMPLATE_CRITIC, BackendProfile::verifier_default()),
        }
    }
}

impl Critic for HttpCritic {
    fn critique(&self, req: &CriticRequest, _batch: &[Clip]) -> BackendResult<String> {
        let (payload, mut meta) =
            self.caller.call(serde_json::to_value(req).expect("serializable"))?;
        match payload["rewritten_prompt"].as_str() {
            Some(p) => Ok(Metered::new(p.to_string(), meta)),
            None => {
                meta.warning = Some("critic response missing rewritten_prompt".to_string());
                Ok(Metered::new(req.current_prompt.clone(), meta))
            }
        }
    }
}

/// A verdict parsed from a verifier response body outside the adapter, used
/// by round-trip tests.
pub fn verdict_from_body(body: &str) -> Result<Verdict, BackendError> {
    let payload = extract_json_object(body)
        .ok_or_else(|| BackendError::Malformed("no JSON object in body".into()))?;
    let mut verdict: Verdict = parse_payload(TEMPLATE_VERIFIER, payload)?;
    if !verdict.is_accept() && verdict.good_fraction.is_none() {
        verdict.good_fraction = Some(0.0);
    }
    if verdict.is_accept() && verdict.progress == Progress::None {
        verdict.progress = Progress::Partial;
    }
    Ok(verdict)
}
