//! Backend contracts and adapters.
//!
//! The loop talks to four pluggable roles: a planner that emits the next
//! action, a verifier that judges each clip, a generator that turns a
//! conditioning frame and action prompt into a clip, and a failure router.
//! Two auxiliary roles serve the matched-compute baselines: a selector for
//! best-of-k runs and a critic for prompt-rewrite runs.
//!
//! Two adapter families implement the contracts: scripted adapters for tests
//! ([`scripted`]) and a generic JSON-over-HTTP adapter for real services
//! ([`http`]). The grid-world backends in [`crate::simworld`] implement the
//! same traits.

pub mod http;
pub mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Clip, ContractViolation, Frame, PlanStep, RouterDecision, Verdict};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed backend output: {0}")]
    Malformed(String),
    #[error("retries exhausted after {attempts} tries: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error(transparent)]
    Contract(#[from] ContractViolation),
}

pub type BackendResult<T> = Result<Metered<T>, BackendError>;

/// Per-call accounting attached to every backend response.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallMeta {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl CallMeta {
    /// Estimated accounting for backends that do not report real usage.
    pub fn estimate(profile: &BackendProfile) -> Self {
        Self {
            input_tokens: profile.input_token_estimate,
            output_tokens: profile.output_token_estimate,
            latency_ms: 0,
            warning: None,
        }
    }
}

/// A backend response plus its call accounting.
#[derive(Debug, Clone)]
pub struct Metered<T> {
    pub value: T,
    pub meta: CallMeta,
}

impl<T> Metered<T> {
    pub fn new(value: T, meta: CallMeta) -> Self {
        Self { value, meta }
    }

    pub fn estimated(value: T, profile: &BackendProfile) -> Self {
        Self { value, meta: CallMeta::estimate(profile) }
    }
}

/// Latency and token profile of one backend call type, used to estimate
/// costs when a response carries no usage metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendProfile {
    pub name: String,
    pub mean_latency_ms: u64,
    pub input_token_estimate: u64,
    pub output_token_estimate: u64,
}

impl BackendProfile {
    /// Measured planner profile: one image plus the task description.
    pub fn planner_default() -> Self {
        Self {
            name: "planner".into(),
            mean_latency_ms: 10_150,
            input_token_estimate: 800,
            output_token_estimate: 186,
        }
    }

    /// Measured step-verifier profile; the input is dominated by the inline
    /// video.
    pub fn verifier_default() -> Self {
        Self {
            name: "verifier".into(),
            mean_latency_ms: 10_600,
            input_token_estimate: 2_724,
            output_token_estimate: 117,
        }
    }

    /// Router sees the failed video like a verifier but emits a tiny JSON
    /// decision; output estimate reduced accordingly.
    pub fn router_default() -> Self {
        Self {
            name: "router".into(),
            mean_latency_ms: 10_600,
            input_token_estimate: 2_724,
            output_token_estimate: 96,
        }
    }
}

/// A frame passed across a backend boundary: inline pixel data for small
/// grids, or an opaque URI for real media the orchestrator never decodes.
///
/// Serializes as a single string: inline frames become
/// `data:application/json;base64,...` of the frame JSON, opaque references
/// stay untouched.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameRef {
    Frame(Frame),
    Uri(String),
}

const DATA_URI_PREFIX: &str = "data:application/json;base64,";

impl FrameRef {
    pub fn as_frame(&self) -> Option<&Frame> {
        match self {
            FrameRef::Frame(f) => Some(f),
            FrameRef::Uri(_) => None,
        }
    }

    pub fn to_uri_string(&self) -> String {
        match self {
            FrameRef::Frame(f) => {
                use base64::Engine as _;
                let json = serde_json::to_string(f).expect("frame serializes");
                format!(
                    "{DATA_URI_PREFIX}{}",
                    base64::engine::general_purpose::STANDARD.encode(json)
                )
            }
            FrameRef::Uri(u) => u.clone(),
        }
    }

    pub fn from_uri_string(s: &str) -> Result<Self, ContractViolation> {
        if let Some(b64) = s.strip_prefix(DATA_URI_PREFIX) {
            use base64::Engine as _;
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(b64)
                .map_err(|e| ContractViolation(format!("bad frame data uri: {e}")))?;
            let frame: Frame = serde_json::from_slice(&bytes)
                .map_err(|e| ContractViolation(format!("bad frame data uri payload: {e}")))?;
            Ok(FrameRef::Frame(frame))
        } else {
            Ok(FrameRef::Uri(s.to_string()))
        }
    }
}

impl From<Frame> for FrameRef {
    fn from(f: Frame) -> Self {
        FrameRef::Frame(f)
    }
}

impl Serialize for FrameRef {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_uri_string())
    }
}

impl<'de> Deserialize<'de> for FrameRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        FrameRef::from_uri_string(&s).map_err(serde::de::Error::custom)
    }
}

/// Planner call inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerRequest {
    pub task_prompt: String,
    pub current_image: FrameRef,
    pub completed_steps: Vec<String>,
    pub step_number: u32,
}

impl PlannerRequest {
    pub fn validate(&self) -> Result<(), ContractViolation> {
        if self.step_number as usize != self.completed_steps.len() + 1 {
            return Err(ContractViolation(format!(
                "step_number {} must equal completed_steps+1 ({})",
                self.step_number,
                self.completed_steps.len() + 1
            )));
        }
        Ok(())
    }
}

/// Verifier call inputs. The verifier judges only whether the planned action
/// was executed; it sees the task prompt, the planned action and target
/// state, and the sampled frames of the candidate clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierRequest {
    pub task_prompt: String,
    pub planned_action: String,
    pub target_state: String,
    pub sampled_frames: Vec<FrameRef>,
}

impl VerifierRequest {
    pub fn validate(&self) -> Result<(), ContractViolation> {
        if self.sampled_frames.is_empty() {
            return Err(ContractViolation("sampled_frames must be non-empty".into()));
        }
        Ok(())
    }
}

/// Generator call inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub conditioning: Frame,
    pub action_prompt: String,
    pub duration_s: f64,
    pub fps: f64,
    pub seed: u64,
    pub step_index: u32,
    pub attempt_index: u32,
}

impl GeneratorRequest {
    pub fn validate(&self) -> Result<(), ContractViolation> {
        if self.duration_s <= 0.0 || self.duration_s.is_nan() {
            return Err(ContractViolation("duration_s must be positive".into()));
        }
        if self.fps <= 0.0 || self.fps.is_nan() {
            return Err(ContractViolation("fps must be positive".into()));
        }
        Ok(())
    }
}

/// Failure-router call inputs: the failed step's diagnosis plus the task
/// context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterRequest {
    pub task_prompt: String,
    pub input_image: FrameRef,
    pub failed_video: Vec<FrameRef>,
    pub reject_reason: String,
    pub suggestion: String,
    pub good_fraction: f64,
}

/// Selector call inputs for best-of-k runs: every candidate is shown in a
/// single call, as frame samples grouped per candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorRequest {
    pub task_prompt: String,
    pub input_image: FrameRef,
    pub candidates: Vec<Vec<FrameRef>>,
}

/// Critic call inputs for prompt-rewrite runs: the whole-task prompt plus
/// frame samples of every clip in the batch, labeled by seed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticRequest {
    pub task_prompt: String,
    pub current_prompt: String,
    pub batch: Vec<Vec<FrameRef>>,
}

pub trait Planner: Send + Sync {
    fn plan(&self, req: &PlannerRequest) -> BackendResult<PlanStep>;
}

pub trait Verifier: Send + Sync {
    /// Judge one clip. The wire contract carries only the request fields;
    /// the clip itself is available to in-process oracles that hold
    /// generation ground truth.
    fn verify(&self, req: &VerifierRequest, clip: &Clip) -> BackendResult<Verdict>;
}

pub trait Generator: Send + Sync {
    fn generate(&self, req: &GeneratorRequest) -> BackendResult<Clip>;
}

pub trait Router: Send + Sync {
    fn route(&self, req: &RouterRequest, failed_clip: &Clip) -> BackendResult<RouterDecision>;
}

pub trait Selector: Send + Sync {
    /// Return the index of the chosen candidate.
    fn select(&self, req: &SelectorRequest, candidates: &[Clip]) -> BackendResult<usize>;
}

pub trait Critic: Send + Sync {
    /// Return the rewritten whole-task prompt.
    fn critique(&self, req: &CriticRequest, batch: &[Clip]) -> BackendResult<String>;
}

/// The four roles the loop drives, borrowed together.
pub struct BackendSet<'a> {
    pub planner: &'a dyn Planner,
    pub verifier: &'a dyn Verifier,
    pub generator: &'a dyn Generator,
    pub router: Option<&'a dyn Router>,
}

/// Extract the first balanced top-level JSON object from free-form text.
///
/// Services occasionally wrap their strict-JSON output in prose; this scans
/// for the first `{` from which a balanced, parseable object can be read.
/// For input that contains exactly one balanced object this is equivalent to
/// parsing that object directly.
pub fn extract_json_object(raw: &str) -> Option<serde_json::Value> {
    let trimmed = raw.trim();
    if trimmed.starts_with('{') {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(trimmed) {
            if v.is_object() {
                return Some(v);
            }
        }
    }
    for (i, ch) in raw.char_indices() {
        if ch != '{' {
            continue;
        }
        if let Some(end) = balanced_object_end(raw, i) {
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(&raw[i..end]) {
                if v.is_object() {
                    return Some(v);
                }
            }
        }
    }
    None
}

/// Byte offset one past the `}` matching the `{` at `start`, tracking string
/// and escape state.
fn balanced_object_end(raw: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, ch) in raw[start..].char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i + ch.len_utf8());
                }
            }
            _ => {}
        }
    }
    None
}
