//! The closed plan -> generate -> verify -> evolve loop, with the auxiliary
//! failure router and partial re-generation.
//!
//! One run is strictly sequential: the planner emits the immediate next
//! action conditioned on the realized trajectory, the generator rolls a clip
//! from the current conditioning frame, and the verifier decides whether the
//! clip commits. A reject folds the diagnosis into the action prompt before
//! the next attempt; a step that exhausts its attempt budget consults the
//! failure router (retry once, decompose further, or collapse to a single
//! shot) and otherwise propagates its best attempt downstream.
//!
//! Every backend call and decision appends a trace event; the returned
//! [`RunResult`] is folded from that trace, so persisted traces replay into
//! identical results.

use std::time::Instant;

use serde_json::json;

use crate::backends::{
    BackendError, BackendSet, GeneratorRequest, PlannerRequest, RouterRequest, VerifierRequest,
};
use crate::metrics::{first_frame_gate, DEFAULT_SSIM_GATE_THRESHOLD};
use crate::prompt::fold_correction;
use crate::seeding::attempt_seed;
use crate::trace::{
    payload, splice_recovered, EventKind, RunHeader, RunResult, RunTrace, TraceEvent,
};
use crate::types::{
    Clip, ContractViolation, Frame, History, PlanStep, Progress, RouterAction, RouterDecision,
    Task, Verdict,
};

/// Loop configuration. `n_max` and `m_budget` are the defaults copied into
/// tasks when a run is materialized from config; the loop itself honors the
/// budgets carried by the task.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub n_max: u32,
    pub m_budget: u32,
    pub first_clip_seconds: f64,
    pub later_clip_seconds: f64,
    pub fps: f64,
    pub router_enabled: bool,
    /// Generate and verify one single shot before any planning; only on its
    /// rejection does multi-step orchestration begin.
    pub sample_level_routing: bool,
    /// Router regens resume from the failed clip's good prefix when the
    /// verifier-estimated good fraction reaches
    /// [`PARTIAL_REGEN_MIN_GOOD_FRACTION`].
    pub partial_regen_enabled: bool,
    /// Frames per second shown to the verifier.
    pub verifier_fps_sample: f64,
    /// Ablation knob: ignore task-complete signals and run every planning
    /// step up to the budget, bypassing adaptive step-count selection.
    pub force_exact_steps: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_max: 3,
            m_budget: 3,
            first_clip_seconds: 6.0,
            later_clip_seconds: 3.0,
            fps: 16.0,
            router_enabled: true,
            sample_level_routing: false,
            partial_regen_enabled: true,
            verifier_fps_sample: 1.0,
            force_exact_steps: false,
        }
    }
}

/// Engage partial regen only when at least this fraction of the failed clip
/// executed correctly; below it the retry restarts from the step's
/// conditioning frame.
pub const PARTIAL_REGEN_MIN_GOOD_FRACTION: f64 = 0.25;

/// One step's attempts and outcome.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub step_index: u32,
    pub attempts: Vec<(Clip, Verdict)>,
    pub accepted: bool,
    pub chosen_clip: Clip,
    pub final_prompt: String,
}

/// A run aborted by a backend failure: the error plus everything traced up
/// to that point.
#[derive(Debug)]
pub struct RunError {
    pub error: BackendError,
    pub partial_trace: RunTrace,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted: {}", self.error)
    }
}

impl std::error::Error for RunError {}

/// Fold a reject's diagnosis into the action prompt.
///
/// The returned prompt keeps the base instruction and carries exactly one
/// correction block with the latest suggestion (and reason when present).
/// An empty suggestion leaves the prompt unchanged; the second element is
/// the warning to trace in that case.
pub fn evolve_prompt(current: &str, diagnosis: &Verdict) -> (String, Option<String>) {
    if diagnosis.suggestion.is_empty() {
        return (current.to_string(), Some("empty suggestion, prompt unchanged".to_string()));
    }
    (fold_correction(current, &diagnosis.suggestion, &diagnosis.reason), None)
}

/// Map a reject's good fraction to the resume point: frame index
/// `floor(good_fraction * (frames - 1))` and the frame itself. Floor is
/// conservative; with onset-aligned generation it never lands past the
/// first failing frame.
pub fn partial_regen_frame(
    clip: &Clip,
    good_fraction: f64,
) -> Result<(usize, Frame), ContractViolation> {
    if !(0.0..=1.0).contains(&good_fraction) {
        return Err(ContractViolation(format!("good_fraction {good_fraction} outside [0, 1]")));
    }
    clip.validate()?;
    let index = (good_fraction * (clip.frames.len() - 1) as f64).floor() as usize;
    Ok((index, clip.frames[index].clone()))
}

/// Frame indices shown to the verifier: `round(k * fps / fps_sample)` for
/// k = 0, 1, ... while in range. Frame 0 is always included.
pub fn sample_indices(frame_count: usize, fps: f64, fps_sample: f64) -> Vec<usize> {
    let mut out = Vec::new();
    if frame_count == 0 || fps_sample <= 0.0 || fps_sample.is_nan() {
        return out;
    }
    let stride = fps / fps_sample;
    for k in 0.. {
        let idx = (k as f64 * stride).round() as usize;
        if idx >= frame_count {
            break;
        }
        if out.last() != Some(&idx) {
            out.push(idx);
        }
        if stride < 1.0 && out.len() >= frame_count {
            break;
        }
    }
    out
}

/// The frames the verifier sees for a clip.
pub fn sample_verifier_frames(clip: &Clip, fps_sample: f64) -> Vec<Frame> {
    sample_indices(clip.frames.len(), clip.fps, fps_sample)
        .into_iter()
        .map(|i| clip.frames[i].clone())
        .collect()
}

struct LoopCtx<'a> {
    trace: RunTrace,
    started: Instant,
    task: &'a Task,
    cfg: &'a EngineConfig,
    backends: &'a BackendSet<'a>,
    /// The single extra generation beyond the step budgets (sample-level
    /// shot, router regen, or router fallback) allowed per run.
    extra_generation_used: bool,
}

impl<'a> LoopCtx<'a> {
    fn now_ms(&self) -> i64 {
        self.started.elapsed().as_millis() as i64
    }

    fn emit(&mut self, event: TraceEvent) {
        self.trace.append(event).expect("engine events are monotone and well-formed");
    }

    fn abort(self, error: BackendError) -> RunError {
        RunError { error, partial_trace: self.trace }
    }

    fn plan(
        &mut self,
        step: u32,
        completed_steps: &[String],
        conditioning: &Frame,
    ) -> Result<Option<PlanStep>, BackendError> {
        let req = PlannerRequest {
            task_prompt: self.task.prompt.clone(),
            current_image: conditioning.clone().into(),
            completed_steps: completed_steps.to_vec(),
            step_number: step,
        };
        let ts = self.now_ms();
        match self.backends.planner.plan(&req) {
            Ok(metered) => {
                let plan = metered.value;
                let executed = !plan.task_complete || self.cfg.force_exact_steps;
                let mut body = json!({
                    payload::REQUEST: {
                        "task_prompt": req.task_prompt,
                        "completed_steps": req.completed_steps,
                        "step_number": req.step_number,
                        "current_image_hash": conditioning.content_hash(),
                    },
                    payload::RESPONSE: plan,
                    payload::EXECUTED: executed,
                });
                if let Some(w) = &metered.meta.warning {
                    body[payload::WARNING] = json!(w);
                }
                self.emit(
                    TraceEvent::new(EventKind::PlannerCall, ts, step, 0, body)
                        .with_tokens(metered.meta.input_tokens, metered.meta.output_tokens)
                        .with_wall_ms(metered.meta.latency_ms),
                );
                Ok(Some(plan))
            }
            Err(BackendError::Malformed(m)) => {
                // Reject-equivalent: record the failed call and let the loop
                // move on to the next planning slot.
                self.emit(TraceEvent::new(
                    EventKind::PlannerCall,
                    ts,
                    step,
                    0,
                    json!({
                        payload::EXECUTED: false,
                        payload::WARNING: format!("malformed planner output: {m}"),
                    }),
                ));
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn generate(
        &mut self,
        phase: &str,
        conditioning: &Frame,
        action_prompt: &str,
        duration_s: f64,
        step: u32,
        attempt: u32,
        resume: Option<(usize, u32, bool)>,
    ) -> Result<Clip, BackendError> {
        let req = GeneratorRequest {
            conditioning: conditioning.clone(),
            action_prompt: action_prompt.to_string(),
            duration_s,
            fps: self.cfg.fps,
            seed: attempt_seed(self.task.rng_seed, step, attempt),
            step_index: step,
            attempt_index: attempt,
        };
        let ts = self.now_ms();
        let metered = self.backends.generator.generate(&req)?;
        let clip = metered.value;
        let gate = first_frame_gate(&clip, conditioning, DEFAULT_SSIM_GATE_THRESHOLD)
            .map_err(BackendError::Contract)?;
        let mut body = json!({
            payload::PHASE: phase,
            "action_prompt": action_prompt,
            "duration_s": duration_s,
            "seed": req.seed,
            "conditioning_hash": conditioning.content_hash(),
            "first_frame_ssim": gate.ssim_value,
            "gate_pass": gate.pass,
            payload::CLIP: clip,
        });
        if let Some((frame_index, source_attempt, partial)) = resume {
            body[payload::RESUME_FRAME_INDEX] = json!(frame_index);
            body[payload::RESUME_SOURCE_ATTEMPT] = json!(source_attempt);
            body[payload::PARTIAL] = json!(partial);
        }
        if let Some(w) = &metered.meta.warning {
            body[payload::WARNING] = json!(w);
        }
        self.emit(
            TraceEvent::new(EventKind::GeneratorCall, ts, step, attempt, body)
                .with_vgm_seconds(clip.duration_seconds())
                .with_wall_ms(metered.meta.latency_ms),
        );
        Ok(clip)
    }

    fn verify(
        &mut self,
        plan_target: &str,
        action_prompt: &str,
        clip: &Clip,
        step: u32,
        attempt: u32,
    ) -> Result<Verdict, BackendError> {
        let req = VerifierRequest {
            task_prompt: self.task.prompt.clone(),
            planned_action: action_prompt.to_string(),
            target_state: plan_target.to_string(),
            sampled_frames: sample_verifier_frames(clip, self.cfg.verifier_fps_sample)
                .into_iter()
                .map(Into::into)
                .collect(),
        };
        let ts = self.now_ms();
        match self.backends.verifier.verify(&req, clip) {
            Ok(metered) => {
                let mut verdict = metered.value;
                let mut warning = metered.meta.warning.clone();
                if !verdict.is_accept() && verdict.good_fraction.is_none() {
                    verdict.good_fraction = Some(0.0);
                    warning.get_or_insert_with(|| {
                        "reject without good_fraction, defaulted to 0.0".to_string()
                    });
                }
                let mut body = json!({
                    payload::ROLE: payload::ROLE_VERIFIER,
                    payload::REQUEST: {
                        "planned_action": req.planned_action,
                        "target_state": req.target_state,
                        "sampled_frame_count": req.sampled_frames.len(),
                    },
                    payload::RESPONSE: verdict,
                });
                if let Some(w) = &warning {
                    body[payload::WARNING] = json!(w);
                }
                self.emit(
                    TraceEvent::new(EventKind::VerifierCall, ts, step, attempt, body)
                        .with_tokens(metered.meta.input_tokens, metered.meta.output_tokens)
                        .with_wall_ms(metered.meta.latency_ms),
                );
                Ok(verdict)
            }
            Err(BackendError::Malformed(m)) => {
                // Reject-equivalent after the adapter's re-ask failed.
                let verdict = Verdict::reject(
                    0.0,
                    crate::types::Confidence::Low,
                    "verifier output malformed",
                    "",
                );
                self.emit(TraceEvent::new(
                    EventKind::VerifierCall,
                    ts,
                    step,
                    attempt,
                    json!({
                        payload::ROLE: payload::ROLE_VERIFIER,
                        payload::RESPONSE: verdict,
                        payload::WARNING: format!("malformed verifier output treated as reject: {m}"),
                    }),
                ));
                Ok(verdict)
            }
            Err(e) => Err(e),
        }
    }

    fn accept(&mut self, step: u32, attempt: u32, recovered: bool, partial: bool) {
        let ts = self.now_ms();
        self.emit(TraceEvent::new(
            EventKind::Accept,
            ts,
            step,
            attempt,
            json!({ payload::RECOVERED: recovered, payload::PARTIAL: partial }),
        ));
    }

    fn reject(&mut self, step: u32, attempt: u32, verdict: &Verdict) {
        let ts = self.now_ms();
        self.emit(TraceEvent::new(
            EventKind::Reject,
            ts,
            step,
            attempt,
            json!({
                payload::GOOD_FRACTION: verdict.good_fraction_or_default(),
                payload::REASON: verdict.reason,
            }),
        ));
    }

    fn evolve(&mut self, step: u32, attempt: u32, from: &str, to: &str, warning: Option<&str>) {
        let ts = self.now_ms();
        let mut body = json!({ "from_prompt": from, "to_prompt": to });
        if let Some(w) = warning {
            body[payload::WARNING] = json!(w);
        }
        self.emit(TraceEvent::new(EventKind::Evolve, ts, step, attempt, body));
    }

    fn terminate(&mut self, reason: &str) {
        let ts = self.now_ms();
        self.emit(TraceEvent::new(
            EventKind::Terminate,
            ts,
            0,
            0,
            json!({ payload::REASON: reason }),
        ));
    }

    fn route(&mut self, step: &StepOutcome) -> Result<RouterDecision, BackendError> {
        let router = self.backends.router.expect("route() is called only when a router is set");
        let last_verdict = &step.attempts.last().expect("failed step has attempts").1;
        let best = step
            .attempts
            .iter()
            .map(|(_, v)| v.good_fraction_or_default())
            .fold(0.0f64, f64::max);
        let req = RouterRequest {
            task_prompt: self.task.prompt.clone(),
            input_image: self.task.input_frame.clone().into(),
            failed_video: sample_verifier_frames(&step.chosen_clip, self.cfg.verifier_fps_sample)
                .into_iter()
                .map(Into::into)
                .collect(),
            reject_reason: last_verdict.reason.clone(),
            suggestion: last_verdict.suggestion.clone(),
            good_fraction: best,
        };
        let ts = self.now_ms();
        match router.route(&req, &step.chosen_clip) {
            Ok(metered) => {
                let mut body = json!({
                    payload::REQUEST: {
                        "reject_reason": req.reject_reason,
                        "suggestion": req.suggestion,
                        "good_fraction": req.good_fraction,
                    },
                    payload::RESPONSE: metered.value,
                });
                if let Some(w) = &metered.meta.warning {
                    body[payload::WARNING] = json!(w);
                }
                self.emit(
                    TraceEvent::new(EventKind::RouterCall, ts, step.step_index, 0, body)
                        .with_tokens(metered.meta.input_tokens, metered.meta.output_tokens)
                        .with_wall_ms(metered.meta.latency_ms),
                );
                Ok(metered.value)
            }
            Err(BackendError::Malformed(m)) => {
                // Unusable router output is treated as a plain regen.
                let decision = RouterDecision {
                    action: RouterAction::Regen,
                    suggestion: last_verdict.suggestion.clone(),
                    reason: "router output malformed".into(),
                    estimated_steps: None,
                };
                self.emit(TraceEvent::new(
                    EventKind::RouterCall,
                    ts,
                    step.step_index,
                    0,
                    json!({
                        payload::RESPONSE: decision,
                        payload::WARNING: format!("malformed router output treated as regen: {m}"),
                    }),
                ));
                Ok(decision)
            }
            Err(e) => Err(e),
        }
    }
}

fn best_attempt(attempts: &[(Clip, Verdict)]) -> usize {
    let scored: Vec<(u32, f64)> = attempts
        .iter()
        .map(|(c, v)| (c.attempt_index, v.good_fraction_or_default()))
        .collect();
    let best = crate::trace::best_of_attempts(&scored).expect("attempts non-empty");
    attempts.iter().position(|(c, _)| c.attempt_index == best).expect("index present")
}

/// Run the full closed loop for one task.
///
/// Backend failures that survive the adapters' own retry budgets abort the
/// run with the partial trace; malformed planner/verifier outputs degrade to
/// reject-equivalent events instead.
pub fn run_collabvr(
    task: &Task,
    cfg: &EngineConfig,
    backends: &BackendSet<'_>,
    config_hash: &str,
) -> Result<RunResult, RunError> {
    if let Err(e) = task.validate() {
        return Err(RunError {
            error: BackendError::Contract(e),
            partial_trace: RunTrace::new(header(task, config_hash)),
        });
    }
    let mut ctx = LoopCtx {
        trace: RunTrace::new(header(task, config_hash)),
        started: Instant::now(),
        task,
        cfg,
        backends,
        extra_generation_used: false,
    };

    let mut history = History::new(task.input_frame.clone());
    let mut conditioning = task.input_frame.clone();
    let mut completed_steps: Vec<String> = Vec::new();
    let mut sample_shot_taken = false;

    // Sample-level routing: try the single-shot baseline first; only on its
    // rejection does multi-step planning begin. The shot consumes the run's
    // single extra generation.
    if cfg.sample_level_routing {
        ctx.extra_generation_used = true;
        sample_shot_taken = true;
        let clip = match ctx.generate(
            payload::PHASE_SINGLE_SHOT,
            &task.input_frame,
            &task.prompt,
            cfg.first_clip_seconds,
            0,
            1,
            None,
        ) {
            Ok(c) => c,
            Err(e) => return Err(ctx.abort(e)),
        };
        let verdict = match ctx.verify(&task.prompt, &task.prompt, &clip, 0, 1) {
            Ok(v) => v,
            Err(e) => return Err(ctx.abort(e)),
        };
        if verdict.is_accept() {
            ctx.accept(0, 1, false, false);
            ctx.terminate(payload::REASON_SINGLE_SHOT_ACCEPT);
            return finish(ctx);
        }
        ctx.reject(0, 1, &verdict);
    }

    let mut step = 1u32;
    while step <= task.n_max {
        let plan = match ctx.plan(step, &completed_steps, &conditioning) {
            Ok(Some(plan)) => plan,
            Ok(None) => {
                // Malformed planner output: the slot is consumed.
                completed_steps.push("(planner output unusable)".to_string());
                step += 1;
                continue;
            }
            Err(e) => return Err(ctx.abort(e)),
        };
        if plan.task_complete && !cfg.force_exact_steps {
            ctx.terminate(payload::REASON_PLANNER_COMPLETE);
            return finish(ctx);
        }

        let duration = if step == 1 { cfg.first_clip_seconds } else { cfg.later_clip_seconds };
        let step_conditioning = conditioning.clone();
        let base_prompt = plan.instruction.clone();
        let mut action_prompt = base_prompt.clone();
        let mut attempts: Vec<(Clip, Verdict)> = Vec::new();
        let mut accepted = false;
        let mut complete_signal = false;

        for attempt in 1..=task.m_budget {
            let clip = match ctx.generate(
                payload::PHASE_ATTEMPT,
                &step_conditioning,
                &action_prompt,
                duration,
                step,
                attempt,
                None,
            ) {
                Ok(c) => c,
                Err(e) => return Err(ctx.abort(e)),
            };
            let verdict =
                match ctx.verify(&plan.target_state, &action_prompt, &clip, step, attempt) {
                    Ok(v) => v,
                    Err(e) => return Err(ctx.abort(e)),
                };
            if verdict.is_accept() {
                ctx.accept(step, attempt, false, false);
                history.push(clip.clone()).expect("generated clips are valid");
                conditioning = history.conditioning_frame().clone();
                complete_signal = verdict.progress == Progress::Complete;
                attempts.push((clip, verdict));
                accepted = true;
                break;
            }
            ctx.reject(step, attempt, &verdict);
            let (evolved, warning) = evolve_prompt(&action_prompt, &verdict);
            ctx.evolve(step, attempt, &action_prompt, &evolved, warning.as_deref());
            attempts.push((clip, verdict));
            action_prompt = evolved;
        }

        if accepted {
            completed_steps.push(base_prompt);
            if complete_signal && !cfg.force_exact_steps {
                ctx.terminate(payload::REASON_VERDICT_COMPLETE);
                return finish(ctx);
            }
            step += 1;
            continue;
        }

        // All attempts rejected: best-of-attempts is the step's provisional
        // outcome, then the router (if any) decides what becomes of it.
        let best_idx = best_attempt(&attempts);
        let mut outcome = StepOutcome {
            step_index: step,
            attempts: attempts.clone(),
            accepted: false,
            chosen_clip: attempts[best_idx].0.clone(),
            final_prompt: action_prompt.clone(),
        };

        if cfg.router_enabled && backends.router.is_some() {
            let decision = match ctx.route(&outcome) {
                Ok(d) => d,
                Err(e) => return Err(ctx.abort(e)),
            };
            match decision.action {
                RouterAction::Regen if !ctx.extra_generation_used => {
                    ctx.extra_generation_used = true;
                    let best_gf = attempts[best_idx].1.good_fraction_or_default();
                    let partial = cfg.partial_regen_enabled
                        && best_gf >= PARTIAL_REGEN_MIN_GOOD_FRACTION;
                    let (resume_index, resume_frame) = if partial {
                        partial_regen_frame(&attempts[best_idx].0, best_gf)
                            .expect("attempt clips are valid")
                    } else {
                        (0, step_conditioning.clone())
                    };
                    let regen_prompt = if decision.suggestion.is_empty() {
                        action_prompt.clone()
                    } else {
                        fold_correction(&base_prompt, &decision.suggestion, &decision.reason)
                    };
                    let regen_attempt = task.m_budget + 1;
                    let regen = match ctx.generate(
                        payload::PHASE_RECOVERY,
                        &resume_frame,
                        &regen_prompt,
                        duration,
                        step,
                        regen_attempt,
                        Some((resume_index, attempts[best_idx].0.attempt_index, partial)),
                    ) {
                        Ok(c) => c,
                        Err(e) => return Err(ctx.abort(e)),
                    };
                    let recovered = if partial {
                        splice_recovered(&attempts[best_idx].0, resume_index, &regen)
                    } else {
                        regen
                    };
                    let verdict = match ctx.verify(
                        &plan.target_state,
                        &regen_prompt,
                        &recovered,
                        step,
                        regen_attempt,
                    ) {
                        Ok(v) => v,
                        Err(e) => return Err(ctx.abort(e)),
                    };
                    if verdict.is_accept() {
                        ctx.accept(step, regen_attempt, true, partial);
                        history.push(recovered).expect("recovered clip is valid");
                        conditioning = history.conditioning_frame().clone();
                        completed_steps.push(base_prompt);
                        if verdict.progress == Progress::Complete && !cfg.force_exact_steps {
                            ctx.terminate(payload::REASON_VERDICT_COMPLETE);
                            return finish(ctx);
                        }
                        step += 1;
                        continue;
                    }
                    ctx.reject(step, regen_attempt, &verdict);
                    // The recovered clip competes as best-of-attempts.
                    outcome.attempts.push((recovered.clone(), verdict));
                    let scored: Vec<(u32, f64)> = outcome
                        .attempts
                        .iter()
                        .map(|(c, v)| (c.attempt_index, v.good_fraction_or_default()))
                        .collect();
                    if crate::trace::best_of_attempts(&scored) == Some(regen_attempt) {
                        outcome.chosen_clip = recovered;
                    }
                }
                RouterAction::Regen => {
                    // Extra-generation budget spent; fall through to
                    // propagating the best attempt.
                }
                RouterAction::Split => {
                    // Re-enter the planner with the residual goal; the failed
                    // clips are discarded and the global step cap still rules.
                    completed_steps.push(format!(
                        "step {step} failed ({}); residual: {}",
                        outcome.attempts[best_idx].1.reason, decision.suggestion
                    ));
                    step += 1;
                    continue;
                }
                RouterAction::Fallback => {
                    if sample_shot_taken {
                        // The sample-level shot already is the single-shot
                        // trajectory; reuse it instead of generating again.
                        ctx.terminate(payload::REASON_FALLBACK);
                        return finish(ctx);
                    }
                    if !ctx.extra_generation_used {
                        ctx.extra_generation_used = true;
                        match ctx.generate(
                            payload::PHASE_FALLBACK,
                            &task.input_frame,
                            &task.prompt,
                            cfg.first_clip_seconds,
                            0,
                            2,
                            None,
                        ) {
                            Ok(_) => {
                                ctx.terminate(payload::REASON_FALLBACK);
                                return finish(ctx);
                            }
                            Err(e) => return Err(ctx.abort(e)),
                        }
                    }
                    // No budget left for a fallback shot; propagate instead.
                }
            }
        }

        // Propagate the best-of-attempts clip downstream: it joins the final
        // video and conditions the next step, but is never committed to the
        // accepted history.
        conditioning = outcome.chosen_clip.last_frame().clone();
        completed_steps.push(base_prompt);
        step += 1;
    }

    ctx.terminate(payload::REASON_BUDGET_EXHAUSTED);
    finish(ctx)
}

fn header(task: &Task, config_hash: &str) -> RunHeader {
    RunHeader {
        task_id: task.task_id.clone(),
        config_hash: config_hash.to_string(),
        rng_seed: task.rng_seed,
        started_at: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0),
    }
}

fn finish(ctx: LoopCtx<'_>) -> Result<RunResult, RunError> {
    let header = ctx.trace.header.clone();
    RunResult::from_trace(ctx.trace)
        .map_err(|e| RunError {
            error: BackendError::Contract(e),
            partial_trace: RunTrace::new(header),
        })
}
