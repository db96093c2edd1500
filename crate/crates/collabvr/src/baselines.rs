//! Matched-compute baselines: single inference, best-of-k with a selector,
//! and a whole-video prompt-rewrite loop.
//!
//! Every baseline produces the same trace/result shape as the closed loop,
//! so scoring, cost accounting, and replay treat all policies uniformly.
//! Generation budgets are explicit: one clip for single inference, `k` clips
//! for best-of-k, and `rewrite_iterations * seeds_per_iteration +
//! final_seeds` clips for the rewrite loop.

use serde_json::json;

use crate::backends::{
    BackendError, Critic, CriticRequest, FrameRef, Generator, GeneratorRequest,
    Selector, SelectorRequest,
};
use crate::engine::{sample_verifier_frames, EngineConfig, RunError};
use crate::seeding::{attempt_seed, derive_seed};
use crate::trace::{payload, EventKind, RunHeader, RunResult, RunTrace, TraceEvent};
use crate::types::{Clip, ContractViolation, Task};

/// Best-of-k configuration. Declared seeds default to `1..=k`; the effective
/// generation seed is the declared seed mixed with the task seed so attempts
/// stay decorrelated across tasks.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PassKConfig {
    pub k: u32,
    pub seeds: Vec<u64>,
}

impl PassKConfig {
    pub fn new(k: u32) -> Self {
        Self { k, seeds: (1..=k as u64).collect() }
    }

    pub fn validate(&self) -> Result<(), ContractViolation> {
        if self.k < 1 || self.seeds.len() != self.k as usize {
            return Err(ContractViolation(format!(
                "pass@k requires k >= 1 and exactly k seeds (k={}, seeds={})",
                self.k,
                self.seeds.len()
            )));
        }
        Ok(())
    }
}

/// Prompt-rewrite configuration; the defaults yield five generations total.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TpoConfig {
    pub rewrite_iterations: u32,
    pub seeds_per_iteration: u32,
    pub final_seeds: u32,
}

impl Default for TpoConfig {
    fn default() -> Self {
        Self { rewrite_iterations: 2, seeds_per_iteration: 2, final_seeds: 1 }
    }
}

impl TpoConfig {
    pub fn total_generations(&self) -> u32 {
        self.rewrite_iterations * self.seeds_per_iteration + self.final_seeds
    }

    pub fn validate(&self) -> Result<(), ContractViolation> {
        if self.final_seeds < 1 {
            return Err(ContractViolation("final_seeds must be >= 1".into()));
        }
        Ok(())
    }
}

struct BaselineCtx<'a> {
    trace: RunTrace,
    started: std::time::Instant,
    cfg: &'a EngineConfig,
}

impl<'a> BaselineCtx<'a> {
    fn new(task: &Task, cfg: &'a EngineConfig, config_hash: &str) -> Self {
        Self {
            trace: RunTrace::new(RunHeader {
                task_id: task.task_id.clone(),
                config_hash: config_hash.to_string(),
                rng_seed: task.rng_seed,
                started_at: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_millis() as i64)
                    .unwrap_or(0),
            }),
            started: std::time::Instant::now(),
            cfg,
        }
    }

    fn now_ms(&self) -> i64 {
        self.started.elapsed().as_millis() as i64
    }

    fn emit(&mut self, event: TraceEvent) {
        self.trace.append(event).expect("baseline events are monotone and well-formed");
    }

    fn abort(self, error: BackendError) -> RunError {
        RunError { error, partial_trace: self.trace }
    }

    #[allow(clippy::too_many_arguments)]
    fn generate(
        &mut self,
        generator: &dyn Generator,
        phase: &str,
        task: &Task,
        prompt: &str,
        seed: u64,
        declared_seed: Option<u64>,
        step: u32,
        attempt: u32,
    ) -> Result<Clip, BackendError> {
        let req = GeneratorRequest {
            conditioning: task.input_frame.clone(),
            action_prompt: prompt.to_string(),
            duration_s: self.cfg.first_clip_seconds,
            fps: self.cfg.fps,
            seed,
            step_index: step,
            attempt_index: attempt,
        };
        let ts = self.now_ms();
        let metered = generator.generate(&req)?;
        let clip = metered.value;
        let mut body = json!({
            payload::PHASE: phase,
            "action_prompt": prompt,
            "duration_s": req.duration_s,
            "seed": seed,
            "conditioning_hash": task.input_frame.content_hash(),
            payload::CLIP: clip,
        });
        if let Some(d) = declared_seed {
            body["declared_seed"] = json!(d);
        }
        self.emit(
            TraceEvent::new(EventKind::GeneratorCall, ts, step, attempt, body)
                .with_vgm_seconds(clip.duration_seconds())
                .with_wall_ms(metered.meta.latency_ms),
        );
        Ok(clip)
    }

    fn terminate(&mut self, reason: &str, extra: serde_json::Value) {
        let ts = self.now_ms();
        let mut body = json!({ payload::REASON: reason });
        if let serde_json::Value::Object(map) = extra {
            for (k, v) in map {
                body[k] = v;
            }
        }
        self.emit(TraceEvent::new(EventKind::Terminate, ts, 0, 0, body));
    }

    fn result(self) -> Result<RunResult, RunError> {
        let header = self.trace.header.clone();
        RunResult::from_trace(self.trace).map_err(|e| RunError {
            error: BackendError::Contract(e),
            partial_trace: RunTrace::new(header),
        })
    }
}

/// One-shot generation from the input frame and the whole task prompt.
pub fn run_single(
    task: &Task,
    cfg: &EngineConfig,
    generator: &dyn Generator,
    config_hash: &str,
) -> Result<RunResult, RunError> {
    if let Err(e) = task.validate() {
        let ctx = BaselineCtx::new(task, cfg, config_hash);
        return Err(ctx.abort(BackendError::Contract(e)));
    }
    let mut ctx = BaselineCtx::new(task, cfg, config_hash);
    let seed = attempt_seed(task.rng_seed, 0, 1);
    if let Err(e) = ctx.generate(
        generator,
        payload::PHASE_SINGLE_SHOT,
        task,
        &task.prompt,
        seed,
        None,
        0,
        1,
    ) {
        return Err(ctx.abort(e));
    }
    ctx.terminate(payload::REASON_SINGLE_SHOT, json!({}));
    ctx.result()
}

/// `k` independent generations with declared seeds; the selector sees every
/// candidate in one call and picks the winner. A selector that fails to
/// produce a usable index falls back to the first declared seed with a
/// trace warning.
pub fn run_pass_k(
    task: &Task,
    cfg: &EngineConfig,
    generator: &dyn Generator,
    selector: &dyn Selector,
    pass_cfg: &PassKConfig,
    config_hash: &str,
) -> Result<RunResult, RunError> {
    let mut ctx = BaselineCtx::new(task, cfg, config_hash);
    if let Err(e) = task.validate().and(pass_cfg.validate()) {
        return Err(ctx.abort(BackendError::Contract(e)));
    }

    let mut candidates = Vec::with_capacity(pass_cfg.k as usize);
    for (i, declared) in pass_cfg.seeds.iter().enumerate() {
        let seed = derive_seed(task.rng_seed, *declared);
        let clip = match ctx.generate(
            generator,
            payload::PHASE_CANDIDATE,
            task,
            &task.prompt,
            seed,
            Some(*declared),
            1,
            (i + 1) as u32,
        ) {
            Ok(c) => c,
            Err(e) => return Err(ctx.abort(e)),
        };
        candidates.push(clip);
    }

    let req = SelectorRequest {
        task_prompt: task.prompt.clone(),
        input_image: task.input_frame.clone().into(),
        candidates: candidates
            .iter()
            .map(|c| {
                sample_verifier_frames(c, cfg.verifier_fps_sample)
                    .into_iter()
                    .map(FrameRef::Frame)
                    .collect()
            })
            .collect(),
    };
    let ts = ctx.now_ms();
    let (index, meta, warning) = match selector.select(&req, &candidates) {
        Ok(m) if m.value < candidates.len() => {
            let w = m.meta.warning.clone();
            (m.value, m.meta, w)
        }
        Ok(m) => (
            0,
            m.meta,
            Some("selector returned an out-of-range index, defaulting to seed 1".to_string()),
        ),
        Err(BackendError::Malformed(msg)) => (
            0,
            Default::default(),
            Some(format!("malformed selector output, defaulting to seed 1: {msg}")),
        ),
        Err(e) => return Err(ctx.abort(e)),
    };
    let mut body = json!({
        payload::ROLE: payload::ROLE_SELECTOR,
        payload::RESPONSE: { "selected_index": index },
    });
    if let Some(w) = &warning {
        body[payload::WARNING] = json!(w);
    }
    ctx.emit(
        TraceEvent::new(EventKind::VerifierCall, ts, 1, (index + 1) as u32, body)
            .with_tokens(meta.input_tokens, meta.output_tokens)
            .with_wall_ms(meta.latency_ms),
    );
    ctx.terminate(
        payload::REASON_PASS_K,
        json!({ payload::SELECTED_ATTEMPT: (index + 1) as u32 }),
    );
    ctx.result()
}

/// Whole-video prompt rewriting: each iteration generates a seed batch from
/// the current prompt and lets the critic rewrite it; the final prompt
/// drives the last generation(s), of which the last clip is the output. A
/// failing critic leaves the prompt unchanged and the iteration still
/// counts.
pub fn run_tpo(
    task: &Task,
    cfg: &EngineConfig,
    generator: &dyn Generator,
    critic: &dyn Critic,
    tpo_cfg: &TpoConfig,
    config_hash: &str,
) -> Result<RunResult, RunError> {
    let mut ctx = BaselineCtx::new(task, cfg, config_hash);
    if let Err(e) = task.validate().and(tpo_cfg.validate()) {
        return Err(ctx.abort(BackendError::Contract(e)));
    }

    let mut prompt = task.prompt.clone();
    for iteration in 1..=tpo_cfg.rewrite_iterations {
        let mut batch = Vec::with_capacity(tpo_cfg.seeds_per_iteration as usize);
        for s in 1..=tpo_cfg.seeds_per_iteration {
            let clip = match ctx.generate(
                generator,
                payload::PHASE_REWRITE,
                task,
                &prompt,
                attempt_seed(task.rng_seed, iteration, s),
                Some(s as u64),
                iteration,
                s,
            ) {
                Ok(c) => c,
                Err(e) => return Err(ctx.abort(e)),
            };
            batch.push(clip);
        }
        let req = CriticRequest {
            task_prompt: task.prompt.clone(),
            current_prompt: prompt.clone(),
            batch: batch
                .iter()
                .map(|c| {
                    sample_verifier_frames(c, cfg.verifier_fps_sample)
                        .into_iter()
                        .map(FrameRef::Frame)
                        .collect()
                })
                .collect(),
        };
        let ts = ctx.now_ms();
        let (rewritten, meta, warning) = match critic.critique(&req, &batch) {
            Ok(m) => {
                let w = m.meta.warning.clone();
                (m.value, m.meta, w)
            }
            // A failing critic keeps the prompt; the iteration still counts.
            Err(e) => (
                prompt.clone(),
                Default::default(),
                Some(format!("critic failed, prompt retained: {e}")),
            ),
        };
        let mut body = json!({
            payload::ROLE: payload::ROLE_CRITIC,
            payload::RESPONSE: { "rewritten_prompt": rewritten },
        });
        if let Some(w) = &warning {
            body[payload::WARNING] = json!(w);
        }
        ctx.emit(
            TraceEvent::new(EventKind::VerifierCall, ts, iteration, 0, body)
                .with_tokens(meta.input_tokens, meta.output_tokens)
                .with_wall_ms(meta.latency_ms),
        );
        prompt = rewritten;
    }

    let final_step = tpo_cfg.rewrite_iterations + 1;
    for s in 1..=tpo_cfg.final_seeds {
        if let Err(e) = ctx.generate(
            generator,
            payload::PHASE_FINAL,
            task,
            &prompt,
            attempt_seed(task.rng_seed, final_step, s),
            Some(s as u64),
            final_step,
            s,
        ) {
            return Err(ctx.abort(e));
        }
    }
    ctx.terminate(payload::REASON_PROMPT_REWRITE, json!({ "final_prompt": prompt }));
    ctx.result()
}
