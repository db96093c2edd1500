//! Closed-loop orchestration over pluggable planner/verifier/generator
//! backends.
//!
//! The engine drives a plan -> generate -> verify loop at clip granularity:
//! the planner emits only the immediate next action, every generated clip is
//! verified before it is committed, and a rejected clip's diagnosis is folded
//! back into the action prompt before the next attempt. A failure router
//! (regen / split / fallback) takes over once a step exhausts its attempt
//! budget.
//!
//! Everything a run does is recorded in an append-only trace; the run result
//! is a pure fold over that trace, so any persisted trace can be replayed
//! into an identical result.
//!
//! Module map:
//! - [`types`]: shared domain types (frames, clips, verdicts, plans).
//! - [`trace`]: trace events, JSONL persistence, and the result fold.
//! - [`engine`]: the closed loop, prompt evolution, failure routing.
//! - [`backends`]: backend contracts, scripted adapters, HTTP adapter.
//! - [`simworld`]: deterministic fault-injecting grid world playing all
//!   backend roles, plus a rule-based scorer.
//! - [`baselines`]: single inference, pass@k, and prompt-rewrite baselines
//!   at matched generation budgets.
//! - [`metrics`]: cost accounting, pipeline statistics, agreement metrics,
//!   and the SSIM first-frame gate.

pub mod backends;
pub mod prompt;
pub mod seeding;
pub mod baselines;
pub mod engine;
pub mod metrics;
pub mod simworld;
pub mod trace;
pub mod types;
