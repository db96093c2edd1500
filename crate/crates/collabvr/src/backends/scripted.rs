//! Scripted backends: canned responses for deterministic tests.
//!
//! Each adapter pops its script in call order (optionally repeating the last
//! entry) and reports profile-estimated token counts with zero latency, so
//! scripted runs are bit-reproducible.

use std::sync::Mutex;

use crate::types::{Clip, Frame, PlanStep, RouterDecision, Verdict};

use super::{
    BackendError, BackendProfile, BackendResult, CriticRequest, Generator, GeneratorRequest,
    Metered, Planner, PlannerRequest, Router, RouterRequest, Selector, SelectorRequest, Verifier,
    VerifierRequest,
};

struct Script<T> {
    items: Vec<T>,
    cursor: Mutex<usize>,
    repeat_last: bool,
}

impl<T: Clone> Script<T> {
    fn new(items: Vec<T>, repeat_last: bool) -> Self {
        Self { items, cursor: Mutex::new(0), repeat_last }
    }

    fn next(&self, role: &str) -> Result<T, BackendError> {
        let mut cursor = self.cursor.lock().expect("script cursor poisoned");
        if *cursor < self.items.len() {
            let item = self.items[*cursor].clone();
            *cursor += 1;
            return Ok(item);
        }
        if self.repeat_last {
            if let Some(last) = self.items.last() {
                return Ok(last.clone());
            }
        }
        Err(BackendError::Malformed(format!("{role} script exhausted after {} calls", *cursor)))
    }
}

pub struct ScriptedPlanner {
    script: Script<PlanStep>,
    profile: BackendProfile,
}

impl ScriptedPlanner {
    pub fn new(steps: Vec<PlanStep>) -> Self {
        Self { script: Script::new(steps, false), profile: BackendProfile::planner_default() }
    }

    /// Keep returning the last scripted plan once the script runs out.
    pub fn repeating(steps: Vec<PlanStep>) -> Self {
        Self { script: Script::new(steps, true), profile: BackendProfile::planner_default() }
    }
}

impl Planner for ScriptedPlanner {
    fn plan(&self, req: &PlannerRequest) -> BackendResult<PlanStep> {
        req.validate()?;
        let mut step = self.script.next("planner")?;
        step.step_index = req.step_number;
        Ok(Metered::estimated(step, &self.profile))
    }
}

pub struct ScriptedVerifier {
    script: Script<Verdict>,
    profile: BackendProfile,
}

impl ScriptedVerifier {
    pub fn new(verdicts: Vec<Verdict>) -> Self {
        Self { script: Script::new(verdicts, false), profile: BackendProfile::verifier_default() }
    }

    pub fn repeating(verdicts: Vec<Verdict>) -> Self {
        Self { script: Script::new(verdicts, true), profile: BackendProfile::verifier_default() }
    }
}

impl Verifier for ScriptedVerifier {
    fn verify(&self, req: &VerifierRequest, _clip: &Clip) -> BackendResult<Verdict> {
        req.validate()?;
        Ok(Metered::estimated(self.script.next("verifier")?, &self.profile))
    }
}

/// Generator that emits motionless clips: every frame repeats the
/// conditioning frame.
pub struct IdentityGenerator;

impl Generator for IdentityGenerator {
    fn generate(&self, req: &GeneratorRequest) -> BackendResult<Clip> {
        req.validate()?;
        let frame_count = ((req.duration_s * req.fps).round() as usize).max(1);
        Ok(Metered::new(
            Clip {
                frames: vec![req.conditioning.clone(); frame_count],
                fps: req.fps,
                action_prompt: req.action_prompt.clone(),
                attempt_index: req.attempt_index,
                step_index: req.step_index,
                seed: req.seed,
                fault: None,
            },
            Default::default(),
        ))
    }
}

/// Generator driven by a closure, for tests that need bespoke motion.
pub struct FnGenerator<F>(pub F);

impl<F> Generator for FnGenerator<F>
where
    F: Fn(&GeneratorRequest) -> Result<Clip, BackendError> + Send + Sync,
{
    fn generate(&self, req: &GeneratorRequest) -> BackendResult<Clip> {
        req.validate()?;
        Ok(Metered::new((self.0)(req)?, Default::default()))
    }
}

pub struct ScriptedRouter {
    script: Script<RouterDecision>,
    profile: BackendProfile,
}

impl ScriptedRouter {
    pub fn new(decisions: Vec<RouterDecision>) -> Self {
        Self { script: Script::new(decisions, false), profile: BackendProfile::router_default() }
    }

    pub fn repeating(decisions: Vec<RouterDecision>) -> Self {
        Self { script: Script::new(decisions, true), profile: BackendProfile::router_default() }
    }
}

impl Router for ScriptedRouter {
    fn route(&self, _req: &RouterRequest, _failed_clip: &Clip) -> BackendResult<RouterDecision> {
        Ok(Metered::estimated(self.script.next("router")?, &self.profile))
    }
}

pub struct ScriptedSelector {
    script: Script<usize>,
    profile: BackendProfile,
}

impl ScriptedSelector {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { script: Script::new(indices, false), profile: BackendProfile::verifier_default() }
    }
}

impl Selector for ScriptedSelector {
    fn select(&self, _req: &SelectorRequest, _candidates: &[Clip]) -> BackendResult<usize> {
        Ok(Metered::estimated(self.script.next("selector")?, &self.profile))
    }
}

/// Critic that never changes the prompt.
pub struct NoOpCritic;

impl super::Critic for NoOpCritic {
    fn critique(&self, req: &CriticRequest, _batch: &[Clip]) -> BackendResult<String> {
        Ok(Metered::estimated(
            req.current_prompt.clone(),
            &BackendProfile::verifier_default(),
        ))
    }
}

/// Convenience: a plan step that just carries an instruction.
pub fn plan(step_index: u32, instruction: &str, estimated_steps_remaining: u32) -> PlanStep {
    PlanStep {
        step_index,
        observation: String::new(),
        remaining_goal: String::new(),
        task_complete: false,
        instruction: instruction.to_string(),
        target_state: String::new(),
        estimated_steps_remaining,
    }
}

/// Convenience: a task-complete plan step.
pub fn plan_complete(step_index: u32) -> PlanStep {
    PlanStep {
        step_index,
        observation: String::new(),
        remaining_goal: String::new(),
        task_complete: true,
        instruction: String::new(),
        target_state: String::new(),
        estimated_steps_remaining: 0,
    }
}

/// Convenience: a conditioning frame for small scripted tests.
pub fn test_frame(value: f64) -> Frame {
    Frame::constant(4, 4, value)
}
