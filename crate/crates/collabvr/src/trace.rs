//! Append-only run traces and the result fold.
//!
//! Every backend call, accept/reject, prompt evolution, and termination is
//! appended to a [`RunTrace`] as it happens. A [`RunResult`] is not assembled
//! independently by the loop: it is [`RunResult::from_trace`], a pure fold
//! over the event log. Replaying a persisted trace therefore reconstructs the
//! original result exactly.
//!
//! Trace files are JSONL: the first line is the run header, each subsequent
//! line one event with an explicit `event_kind` discriminator.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::types::{Clip, ContractViolation, InjectedFault};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PlannerCall,
    GeneratorCall,
    VerifierCall,
    RouterCall,
    Accept,
    Reject,
    Evolve,
    Terminate,
}

impl EventKind {
    fn may_carry_tokens(self) -> bool {
        matches!(self, EventKind::PlannerCall | EventKind::VerifierCall | EventKind::RouterCall)
    }
}

/// One trace record. `timestamp_ms` is engine-local monotonic time from run
/// start; wall-clock provenance lives once in the run header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub event_kind: EventKind,
    pub timestamp_ms: i64,
    pub step_index: u32,
    pub attempt_index: u32,
    pub payload: Value,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub vgm_seconds: f64,
    pub wall_ms: u64,
}

impl TraceEvent {
    pub fn new(
        event_kind: EventKind,
        timestamp_ms: i64,
        step_index: u32,
        attempt_index: u32,
        payload: Value,
    ) -> Self {
        Self {
            event_kind,
            timestamp_ms,
            step_index,
            attempt_index,
            payload,
            input_tokens: 0,
            output_tokens: 0,
            vgm_seconds: 0.0,
            wall_ms: 0,
        }
    }

    pub fn with_tokens(mut self, input_tokens: u64, output_tokens: u64) -> Self {
        self.input_tokens = input_tokens;
        self.output_tokens = output_tokens;
        self
    }

    pub fn with_vgm_seconds(mut self, vgm_seconds: f64) -> Self {
        self.vgm_seconds = vgm_seconds;
        self
    }

    pub fn with_wall_ms(mut self, wall_ms: u64) -> Self {
        self.wall_ms = wall_ms;
        self
    }
}

/// First line of every trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub task_id: String,
    pub config_hash: String,
    pub rng_seed: u64,
    /// Wall-clock provenance, unix milliseconds.
    pub started_at: i64,
}

/// Payload field names and enumerated values shared by the loop that writes
/// events and the fold that reads them back.
pub mod payload {
    /// Generation phase discriminator on `generator_call` events.
    pub const PHASE: &str = "phase";
    pub const PHASE_ATTEMPT: &str = "attempt";
    pub const PHASE_RECOVERY: &str = "recovery";
    pub const PHASE_FALLBACK: &str = "fallback";
    pub const PHASE_SINGLE_SHOT: &str = "single_shot";
    pub const PHASE_CANDIDATE: &str = "candidate";
    pub const PHASE_REWRITE: &str = "rewrite";
    pub const PHASE_FINAL: &str = "final";

    pub const CLIP: &str = "clip";
    pub const REQUEST: &str = "request";
    pub const RESPONSE: &str = "response";
    /// On `planner_call`: whether the loop went on to execute this plan.
    pub const EXECUTED: &str = "executed";
    /// On `verifier_call`: which supervisory role the call served.
    pub const ROLE: &str = "role";
    pub const ROLE_VERIFIER: &str = "verifier";
    pub const ROLE_SELECTOR: &str = "selector";
    pub const ROLE_CRITIC: &str = "critic";

    pub const GOOD_FRACTION: &str = "good_fraction";
    /// On `accept`: true when the committed clip came from the failure
    /// router's regen rather than a budgeted attempt.
    pub const RECOVERED: &str = "recovered";
    /// On `accept`/`generator_call`: true when the regen resumed from a
    /// mid-clip frame, preserving the prefix.
    pub const PARTIAL: &str = "partial";
    pub const RESUME_FRAME_INDEX: &str = "resume_frame_index";
    pub const RESUME_SOURCE_ATTEMPT: &str = "resume_source_attempt";
    /// On `router_call`: what the loop actually did with the decision.
    pub const ROUTED: &str = "routed";
    pub const WARNING: &str = "warning";

    pub const REASON: &str = "reason";
    pub const REASON_PLANNER_COMPLETE: &str = "planner_complete";
    pub const REASON_VERDICT_COMPLETE: &str = "verdict_complete";
    pub const REASON_BUDGET_EXHAUSTED: &str = "budget_exhausted";
    pub const REASON_FALLBACK: &str = "fallback";
    pub const REASON_SINGLE_SHOT_ACCEPT: &str = "single_shot_accept";
    pub const REASON_SINGLE_SHOT: &str = "single_shot";
    pub const REASON_PASS_K: &str = "pass_k";
    pub const REASON_PROMPT_REWRITE: &str = "prompt_rewrite";

    /// On `terminate` for pass@k runs: the attempt index the selector chose.
    pub const SELECTED_ATTEMPT: &str = "selected_attempt";
}

/// The append-only event log of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub header: RunHeader,
    events: Vec<TraceEvent>,
}

impl RunTrace {
    pub fn new(header: RunHeader) -> Self {
        Self { header, events: Vec::new() }
    }

    /// Append one event. Timestamps must be monotone non-decreasing, and the
    /// cost fields must match the event kind: only generator calls carry
    /// vgm seconds, only planner/verifier/router calls carry tokens.
    pub fn append(&mut self, event: TraceEvent) -> Result<(), ContractViolation> {
        if let Some(last) = self.events.last() {
            if event.timestamp_ms < last.timestamp_ms {
                return Err(ContractViolation(format!(
                    "non-monotone timestamp {} after {}",
                    event.timestamp_ms, last.timestamp_ms
                )));
            }
        }
        if event.vgm_seconds > 0.0 && event.event_kind != EventKind::GeneratorCall {
            return Err(ContractViolation(
                "vgm_seconds may only be positive on generator_call events".into(),
            ));
        }
        if (event.input_tokens > 0 || event.output_tokens > 0)
            && !event.event_kind.may_carry_tokens()
        {
            return Err(ContractViolation(
                "token counts may only be positive on planner/verifier/router events".into(),
            ));
        }
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn is_terminated(&self) -> bool {
        self.events.iter().any(|e| e.event_kind == EventKind::Terminate)
    }

    /// Copy with timestamps, wall-clock latencies, and the header start time
    /// zeroed, for comparing runs across executions.
    pub fn erased(&self) -> RunTrace {
        let mut out = self.clone();
        out.header.started_at = 0;
        for e in &mut out.events {
            e.timestamp_ms = 0;
            e.wall_ms = 0;
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, ContractViolation> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| ContractViolation("trace file is empty".into()))?
            .map_err(|e| ContractViolation(format!("trace read error: {e}")))?;
        let header: RunHeader = serde_json::from_str(&header_line)
            .map_err(|e| ContractViolation(format!("bad trace header: {e}")))?;
        let mut trace = RunTrace::new(header);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| ContractViolation(format!("trace read error: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let event: TraceEvent = serde_json::from_str(&line)
                .map_err(|e| ContractViolation(format!("bad trace event at line {}: {e}", i + 2)))?;
            trace.append(event)?;
        }
        Ok(trace)
    }
}

/// Splice a failure-router regen onto the correct prefix of a failed clip.
///
/// The regen's first frame repeats the resume frame, so it is dropped; the
/// fault annotation (if the regen itself faulted) has its onset rescaled to
/// the recovered clip's length. Both the loop and the trace fold go through
/// this one function so replay is bit-exact.
pub fn splice_recovered(failed: &Clip, frame_index: usize, regen: &Clip) -> Clip {
    let mut frames = failed.frames[..=frame_index].to_vec();
    frames.extend(regen.frames.iter().skip(1).cloned());
    let fault = regen.fault.as_ref().map(|f| {
        let regen_span = (regen.frames.len().saturating_sub(1)) as f64;
        let total_span = (frames.len().saturating_sub(1)) as f64;
        let onset = if total_span > 0.0 {
            (frame_index as f64 + f.onset * regen_span) / total_span
        } else {
            0.0
        };
        InjectedFault { kind: f.kind, onset, detail: f.detail.clone() }
    });
    Clip {
        frames,
        fps: regen.fps,
        action_prompt: regen.action_prompt.clone(),
        attempt_index: regen.attempt_index,
        step_index: regen.step_index,
        seed: regen.seed,
        fault,
    }
}

/// Pick the best failed attempt: maximal good fraction, ties broken by the
/// highest attempt index (the latest attempt saw the most evolved prompt).
pub fn best_of_attempts(candidates: &[(u32, f64)]) -> Option<u32> {
    candidates
        .iter()
        .max_by(|(ai, gi), (aj, gj)| gi.partial_cmp(gj).unwrap().then(ai.cmp(aj)))
        .map(|(a, _)| *a)
}

/// The outcome of one run, derived entirely from its trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task_id: String,
    pub final_video: Vec<Clip>,
    pub steps_taken: u32,
    pub regenerations: u32,
    pub clips_generated: u32,
    pub vlm_calls: u32,
    pub total_vgm_seconds: f64,
    pub trace: RunTrace,
}

#[derive(Default)]
struct StepAgg {
    /// attempt_index -> generated clip, budgeted attempts only.
    attempts: BTreeMap<u32, Clip>,
    /// attempt_index -> good_fraction of the reject verdict.
    rejects: BTreeMap<u32, f64>,
    /// (attempt_index, recovered, partial) of the accept event, if any.
    accept: Option<(u32, bool, bool)>,
    recovery: Option<RecoveryAgg>,
    split: bool,
}

struct RecoveryAgg {
    clip: Clip,
    partial: bool,
    resume_frame_index: usize,
    resume_source_attempt: u32,
    attempt_index: u32,
}

impl StepAgg {
    /// Materialize the clip the step contributed downstream, if any.
    fn chosen_clip(&self) -> Option<Clip> {
        if let Some((attempt, recovered, partial)) = self.accept {
            if recovered {
                return self.recovered_clip(partial);
            }
            return self.attempts.get(&attempt).cloned();
        }
        if self.split {
            return None;
        }
        // Fully rejected: propagate the best-of-attempts clip.
        let mut candidates: Vec<(u32, f64)> =
            self.attempts.keys().map(|a| (*a, *self.rejects.get(a).unwrap_or(&0.0))).collect();
        if let Some(rec) = &self.recovery {
            candidates.push((
                rec.attempt_index,
                *self.rejects.get(&rec.attempt_index).unwrap_or(&0.0),
            ));
        }
        let best = best_of_attempts(&candidates)?;
        match &self.recovery {
            Some(rec) if rec.attempt_index == best => self.recovered_clip(rec.partial),
            _ => self.attempts.get(&best).cloned(),
        }
    }

    fn recovered_clip(&self, partial: bool) -> Option<Clip> {
        let rec = self.recovery.as_ref()?;
        if !partial {
            return Some(rec.clip.clone());
        }
        let failed = self.attempts.get(&rec.resume_source_attempt)?;
        Some(splice_recovered(failed, rec.resume_frame_index, &rec.clip))
    }
}

impl RunResult {
    /// Fold a trace into its run result.
    ///
    /// Counters come straight from event counts; the final video is
    /// reassembled from the recorded clips using the same chosen-clip rules
    /// the loop applied.
    pub fn from_trace(trace: RunTrace) -> Result<Self, ContractViolation> {
        let mut steps: BTreeMap<u32, StepAgg> = BTreeMap::new();
        let mut single_shot: Option<Clip> = None;
        let mut fallback: Option<Clip> = None;
        let mut candidates: BTreeMap<u32, Clip> = BTreeMap::new();
        let mut final_phase: Vec<Clip> = Vec::new();
        let mut terminate: Option<(String, Value)> = None;

        let mut steps_taken = 0u32;
        let mut clips_generated = 0u32;
        let mut vlm_calls = 0u32;
        let mut total_vgm_seconds = 0.0f64;

        for e in trace.events() {
            match e.event_kind {
                EventKind::PlannerCall => {
                    vlm_calls += 1;
                    if e.payload[payload::EXECUTED].as_bool() == Some(true) {
                        steps_taken += 1;
                    }
                }
                EventKind::VerifierCall => vlm_calls += 1,
                EventKind::RouterCall => {
                    vlm_calls += 1;
                    if e.payload[payload::RESPONSE]["action"].as_str() == Some("split") {
                        steps.entry(e.step_index).or_default().split = true;
                    }
                }
                EventKind::GeneratorCall => {
                    clips_generated += 1;
                    total_vgm_seconds += e.vgm_seconds;
                    let clip: Clip = parse_field(&e.payload, payload::CLIP)?;
                    match e.payload[payload::PHASE].as_str() {
                        Some(payload::PHASE_ATTEMPT) => {
                            steps
                                .entry(e.step_index)
                                .or_default()
                                .attempts
                                .insert(e.attempt_index, clip);
                        }
                        Some(payload::PHASE_RECOVERY) => {
                            let agg = steps.entry(e.step_index).or_default();
                            agg.recovery = Some(RecoveryAgg {
                                clip,
                                partial: e.payload[payload::PARTIAL].as_bool().unwrap_or(false),
                                resume_frame_index: e.payload[payload::RESUME_FRAME_INDEX]
                                    .as_u64()
                                    .unwrap_or(0)
                                    as usize,
                                resume_source_attempt: e.payload[payload::RESUME_SOURCE_ATTEMPT]
                                    .as_u64()
                                    .unwrap_or(0)
                                    as u32,
                                attempt_index: e.attempt_index,
                            });
                        }
                        Some(payload::PHASE_FALLBACK) => fallback = Some(clip),
                        Some(payload::PHASE_SINGLE_SHOT) => single_shot = Some(clip),
                        Some(payload::PHASE_CANDIDATE) => {
                            candidates.insert(e.attempt_index, clip);
                        }
                        Some(payload::PHASE_FINAL) => final_phase.push(clip),
                        Some(payload::PHASE_REWRITE) => {}
                        other => {
                            return Err(ContractViolation(format!(
                                "generator_call event with unknown phase {other:?}"
                            )))
                        }
                    }
                }
                EventKind::Accept => {
                    let agg = steps.entry(e.step_index).or_default();
                    agg.accept = Some((
                        e.attempt_index,
                        e.payload[payload::RECOVERED].as_bool().unwrap_or(false),
                        e.payload[payload::PARTIAL].as_bool().unwrap_or(false),
                    ));
                }
                EventKind::Reject => {
                    let gf = e.payload[payload::GOOD_FRACTION].as_f64().unwrap_or(0.0);
                    steps.entry(e.step_index).or_default().rejects.insert(e.attempt_index, gf);
                }
                EventKind::Evolve => {}
                EventKind::Terminate => {
                    let reason = e.payload[payload::REASON]
                        .as_str()
                        .ok_or_else(|| ContractViolation("terminate event without reason".into()))?
                        .to_string();
                    terminate = Some((reason, e.payload.clone()));
                }
            }
        }

        let (reason, term_payload) = terminate
            .ok_or_else(|| ContractViolation("trace has no terminate event".into()))?;

        let final_video: Vec<Clip> = match reason.as_str() {
            payload::REASON_SINGLE_SHOT | payload::REASON_SINGLE_SHOT_ACCEPT => single_shot
                .map(|c| vec![c])
                .ok_or_else(|| ContractViolation("terminated single-shot without a clip".into()))?,
            // A fallback may reuse the sample-level shot instead of
            // generating a second single-shot clip.
            payload::REASON_FALLBACK => fallback
                .or(single_shot)
                .map(|c| vec![c])
                .ok_or_else(|| ContractViolation("terminated fallback without a clip".into()))?,
            payload::REASON_PASS_K => {
                let selected = term_payload[payload::SELECTED_ATTEMPT].as_u64().ok_or_else(
                    || ContractViolation("pass_k terminate without selected_attempt".into()),
                )? as u32;
                vec![candidates.get(&selected).cloned().ok_or_else(|| {
                    ContractViolation(format!("pass_k selected missing candidate {selected}"))
                })?]
            }
            payload::REASON_PROMPT_REWRITE => {
                vec![final_phase.last().cloned().ok_or_else(|| {
                    ContractViolation("prompt_rewrite terminate without final clip".into())
                })?]
            }
            _ => steps.values().filter_map(StepAgg::chosen_clip).collect(),
        };

        Ok(Self {
            task_id: trace.header.task_id.clone(),
            final_video,
            steps_taken,
            regenerations: clips_generated.saturating_sub(steps_taken),
            clips_generated,
            vlm_calls,
            total_vgm_seconds,
            trace,
        })
    }

    /// Copy with trace timestamps erased, for cross-execution comparison.
    pub fn erased(&self) -> RunResult {
        let mut out = self.clone();
        out.trace = self.trace.erased();
        out
    }
}

fn parse_field<T: serde::de::DeserializeOwned>(
    payload: &Value,
    key: &str,
) -> Result<T, ContractViolation> {
    serde_json::from_value(payload[key].clone())
        .map_err(|e| ContractViolation(format!("bad {key} in event payload: {e}")))
}

/// Convenience constructor for payloads carrying a warning alongside other
/// fields.
pub fn warn_payload(mut base: Value, warning: Option<&str>) -> Value {
    if let Some(w) = warning {
        base[payload::WARNING] = json!(w);
    }
    base
}
