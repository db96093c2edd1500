//! Domain types shared by every module.
//!
//! All types here are immutable values: cheap to clone, safe to share across
//! threads, and serializable to the JSONL trace format with field names that
//! match the wire contracts exactly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// A precondition or invariant was violated by a caller.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("contract violation: {0}")]
pub struct ContractViolation(pub String);

/// A single grayscale frame: row-major intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<f64>) -> Result<Self, ContractViolation> {
        if width == 0 || height == 0 {
            return Err(ContractViolation("frame dimensions must be positive".into()));
        }
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(ContractViolation(format!(
                "pixel count {} does not match {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p) || p.is_nan()) {
            return Err(ContractViolation(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, pixels })
    }

    /// A frame filled with one intensity value.
    pub fn constant(width: u32, height: u32, value: f64) -> Self {
        Self::new(width, height, vec![value; (width as usize) * (height as usize)])
            .expect("constant frame is valid by construction")
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.pixels[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: f64) {
        self.pixels[(y as usize) * (self.width as usize) + x as usize] = value;
    }

    /// Stable content digest used to reference frames compactly in trace
    /// payloads without embedding pixel data twice.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.width.to_le_bytes());
        hasher.update(self.height.to_le_bytes());
        for p in &self.pixels {
            hasher.update(p.to_bits().to_le_bytes());
        }
        hex_digest(hasher)
    }
}

fn hex_digest(hasher: Sha256) -> String {
    let bytes = hasher.finalize();
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// One video reasoning task: the initial frame, the goal prompt, and the
/// loop budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub input_frame: Frame,
    pub prompt: String,
    pub n_max: u32,
    pub m_budget: u32,
    pub rng_seed: u64,
}

impl Task {
    pub fn validate(&self) -> Result<(), ContractViolation> {
        if self.n_max < 1 {
            return Err(ContractViolation("n_max must be >= 1".into()));
        }
        if self.m_budget < 1 {
            return Err(ContractViolation("m_budget must be >= 1".into()));
        }
        if self.prompt.is_empty() {
            return Err(ContractViolation("task prompt must be non-empty".into()));
        }
        Frame::new(
            self.input_frame.width,
            self.input_frame.height,
            self.input_frame.pixels.clone(),
        )?;
        Ok(())
    }
}

/// Kinds of deviation the simulated generator can inject into a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    WrongDirection,
    EarlyStop,
    WrongTarget,
    Unparseable,
}

/// Ground-truth annotation of an injected deviation, carried on the clip so
/// an oracle verifier can judge it without re-deriving the generation.
///
/// `onset` is the fraction of the clip that executed correctly before the
/// deviation begins (0.0 = wrong from the first motion frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedFault {
    pub kind: FaultKind,
    pub onset: f64,
    pub detail: String,
}

/// One generated clip: an ordered frame sequence plus the generation
/// metadata needed for replay and cost accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub frames: Vec<Frame>,
    pub fps: f64,
    pub action_prompt: String,
    pub attempt_index: u32,
    pub step_index: u32,
    pub seed: u64,
    /// Injected-deviation ground truth, present only on simulated clips.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<InjectedFault>,
}

impl Clip {
    pub fn validate(&self) -> Result<(), ContractViolation> {
        if self.frames.is_empty() {
            return Err(ContractViolation("clip must contain at least one frame".into()));
        }
        if self.fps <= 0.0 || self.fps.is_nan() {
            return Err(ContractViolation("clip fps must be positive".into()));
        }
        let (w, h) = (self.frames[0].width, self.frames[0].height);
        for (i, f) in self.frames.iter().enumerate() {
            if f.width != w || f.height != h {
                return Err(ContractViolation(format!(
                    "frame {i} is {}x{}, expected {w}x{h}",
                    f.width, f.height
                )));
            }
        }
        Ok(())
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    pub fn first_frame(&self) -> &Frame {
        &self.frames[0]
    }

    pub fn last_frame(&self) -> &Frame {
        self.frames.last().expect("clip frames are non-empty")
    }
}

/// Concatenate clips into one continuous clip.
///
/// All clips must share frame dimensions and fps; the offending clip index is
/// named on mismatch. A single-clip input is returned unchanged. For multi-
/// clip inputs the metadata of the first clip is kept and any fault
/// annotation is dropped (the concatenation is no longer a single generation).
pub fn concat_clips(clips: &[Clip]) -> Result<Clip, ContractViolation> {
    let first = clips
        .first()
        .ok_or_else(|| ContractViolation("cannot concatenate an empty clip sequence".into()))?;
    first.validate()?;
    if clips.len() == 1 {
        return Ok(first.clone());
    }
    let (w, h, fps) = (first.frames[0].width, first.frames[0].height, first.fps);
    let mut frames = Vec::new();
    for (i, clip) in clips.iter().enumerate() {
        clip.validate()?;
        if clip.frames[0].width != w || clip.frames[0].height != h {
            return Err(ContractViolation(format!(
                "clip {i} is {}x{}, expected {w}x{h}",
                clip.frames[0].width, clip.frames[0].height
            )));
        }
        if clip.fps != fps {
            return Err(ContractViolation(format!(
                "clip {i} has fps {}, expected {fps}",
                clip.fps
            )));
        }
        frames.extend(clip.frames.iter().cloned());
    }
    Ok(Clip {
        frames,
        fps,
        action_prompt: first.action_prompt.clone(),
        attempt_index: first.attempt_index,
        step_index: first.step_index,
        seed: first.seed,
        fault: None,
    })
}

/// The planner's structured output for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub step_index: u32,
    pub observation: String,
    pub remaining_goal: String,
    pub task_complete: bool,
    pub instruction: String,
    pub target_state: String,
    pub estimated_steps_remaining: u32,
}

impl PlanStep {
    pub fn validate(&self) -> Result<(), ContractViolation> {
        if !self.task_complete && self.instruction.is_empty() {
            return Err(ContractViolation(
                "plan instruction must be non-empty unless task_complete".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Progress {
    None,
    Partial,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Low,
    Medium,
    High,
}

/// The verifier's structured judgment over one clip.
///
/// `good_fraction` is present only on rejects: the fraction of the clip that
/// executed correctly before the first failure. A reject that omits it is
/// treated as 0.0, the most conservative resume point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub verdict: VerdictKind,
    pub action_executed: bool,
    pub progress: Progress,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub good_fraction: Option<f64>,
    pub confidence: Confidence,
    pub reason: String,
    pub suggestion: String,
}

impl Verdict {
    pub fn accept(progress: Progress, confidence: Confidence, reason: impl Into<String>) -> Self {
        Self {
            verdict: VerdictKind::Accept,
            action_executed: true,
            progress,
            good_fraction: None,
            confidence,
            reason: reason.into(),
            suggestion: String::new(),
        }
    }

    pub fn reject(
        good_fraction: f64,
        confidence: Confidence,
        reason: impl Into<String>,
        suggestion: impl Into<String>,
    ) -> Self {
        Self {
            verdict: VerdictKind::Reject,
            action_executed: false,
            progress: Progress::None,
            good_fraction: Some(good_fraction),
            confidence,
            reason: reason.into(),
            suggestion: suggestion.into(),
        }
    }

    pub fn is_accept(&self) -> bool {
        self.verdict == VerdictKind::Accept
    }

    /// Reject resume fraction, defaulting to 0.0 when omitted.
    pub fn good_fraction_or_default(&self) -> f64 {
        self.good_fraction.unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), ContractViolation> {
        if self.verdict == VerdictKind::Accept && self.progress == Progress::None {
            return Err(ContractViolation(
                "accept verdict requires partial or complete progress".into(),
            ));
        }
        if let Some(g) = self.good_fraction {
            if !(0.0..=1.0).contains(&g) {
                return Err(ContractViolation(format!("good_fraction {g} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterAction {
    Regen,
    Split,
    Fallback,
}

/// The failure router's choice after a step exhausts its attempt budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterDecision {
    pub action: RouterAction,
    pub suggestion: String,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated_steps: Option<u32>,
}

impl RouterDecision {
    pub fn validate(&self) -> Result<(), ContractViolation> {
        if self.action == RouterAction::Split {
            match self.estimated_steps {
                Some(n) if n >= 2 => {}
                _ => {
                    return Err(ContractViolation(
                        "split decision requires estimated_steps >= 2".into(),
                    ))
                }
            }
        }
        Ok(())
    }
}

/// The history of accepted clips plus the conditioning frame they imply.
///
/// The conditioning frame always equals the final frame of the last accepted
/// clip, or the input frame while the history is empty; the fields are
/// private so the invariant cannot be broken from outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    accepted_clips: Vec<Clip>,
    conditioning_frame: Frame,
}

impl History {
    pub fn new(input_frame: Frame) -> Self {
        Self { accepted_clips: Vec::new(), conditioning_frame: input_frame }
    }

    pub fn push(&mut self, clip: Clip) -> Result<(), ContractViolation> {
        clip.validate()?;
        self.conditioning_frame = clip.last_frame().clone();
        self.accepted_clips.push(clip);
        Ok(())
    }

    pub fn accepted_clips(&self) -> &[Clip] {
        &self.accepted_clips
    }

    pub fn conditioning_frame(&self) -> &Frame {
        &self.conditioning_frame
    }

    pub fn len(&self) -> usize {
        self.accepted_clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted_clips.is_empty()
    }
}
