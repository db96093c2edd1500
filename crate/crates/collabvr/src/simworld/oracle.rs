//! Grid-world implementations of every backend role, plus the rule-based
//! judge-free scorer.
//!
//! The planner decomposes the shortest path from the *realized* agent
//! position into straight segments and emits one at a time, so it re-plans
//! automatically after drift. The verifier judges a clip from its recorded
//! deviation ground truth: any direction/target contradiction with onset
//! below 1.0 rejects, early stops in the correct direction are partial
//! progress, and the reject's good fraction echoes the recorded onset.

use std::collections::BTreeMap;

use crate::backends::{
    BackendError, BackendProfile, BackendResult, CallMeta, Critic, CriticRequest, Generator,
    GeneratorRequest, Metered, Planner, PlannerRequest, Router, RouterRequest, Selector,
    SelectorRequest, Verifier, VerifierRequest,
};
use crate::prompt::fold_correction;
use crate::trace::RunResult;
use crate::types::{
    Clip, Confidence, FaultKind, Frame, PlanStep, Progress, RouterAction, RouterDecision, Verdict,
};

use super::dynamics::{parse_action, sim_generate};
use super::gen::{first_inversion, initial_frame};
use super::grid::{
    bfs_path, decode, first_segment, goal_reached, straight_segments, token_col, Cell, WorldState,
};
use super::{ActionCommand, Category, FaultConfig, GridTask, Verb};

/// Canonical phrasing for a command, used for instructions and suggestions.
fn canonical_phrase(task: &GridTask, cmd: &ActionCommand) -> String {
    match (cmd.verb, cmd.direction, cmd.target) {
        (Verb::Move, Some(dir), _) => format!("move {} {}", dir.name(), cmd.count),
        (Verb::Move, None, Some(t)) => format!("move toward ({}, {})", t.x, t.y),
        (Verb::Mark, _, Some(t)) => format!("mark the token at ({}, {})", t.x, t.y),
        (Verb::Swap, _, Some(t)) => {
            let i = (0..task.token_values.len())
                .find(|i| token_col(task, *i) == t.x)
                .unwrap_or(0);
            format!("swap the tokens at positions {} and {}", i, i + 1)
        }
        _ => String::new(),
    }
}

/// The correct next command from a frame, or None when the task state is
/// already satisfied (or unreachable).
fn canonical_next_command(task: &GridTask, frame: &Frame) -> Option<String> {
    let state = decode(task, frame).ok()?;
    match (task.category, state) {
        (Category::Navigation, WorldState::Nav { agent }) => {
            if agent == task.goal {
                return None;
            }
            match bfs_path(&task.grid, agent, task.goal) {
                Some(path) => {
                    let (dir, count) = first_segment(&path)?;
                    Some(format!("move {} {}", dir.name(), count))
                }
                None => Some(format!("move toward ({}, {})", task.goal.x, task.goal.y)),
            }
        }
        (Category::MarkTarget, WorldState::Mark { marked }) => {
            if marked.contains(&task.goal) {
                None
            } else {
                Some(format!("mark the token at ({}, {})", task.goal.x, task.goal.y))
            }
        }
        (Category::SortTokens, WorldState::Sort { values }) => {
            let i = first_inversion(&values)?;
            Some(format!("swap the tokens at positions {} and {}", i, i + 1))
        }
        _ => None,
    }
}

/// Shortest-path progressive planner.
pub struct SimPlanner {
    pub task: GridTask,
}

impl Planner for SimPlanner {
    fn plan(&self, req: &PlannerRequest) -> BackendResult<PlanStep> {
        req.validate()?;
        let frame = req.current_image.as_frame().ok_or_else(|| {
            BackendError::Malformed("grid planner requires an inline frame".into())
        })?;
        let state = decode(&self.task, frame).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let profile = BackendProfile::planner_default();

        let step = match (self.task.category, state) {
            (Category::Navigation, WorldState::Nav { agent }) => {
                if agent == self.task.goal {
                    complete_step(req.step_number, format!("agent is at the goal ({}, {})", agent.x, agent.y))
                } else {
                    let goal = self.task.goal;
                    match bfs_path(&self.task.grid, agent, goal) {
                        Some(path) => {
                            let (dir, count) = first_segment(&path).expect("path has two cells");
                            let end = path[count as usize];
                            let segments = straight_segments(&path) as u32;
                            PlanStep {
                                step_index: req.step_number,
                                observation: format!("agent at ({}, {})", agent.x, agent.y),
                                remaining_goal: format!("reach the goal at ({}, {})", goal.x, goal.y),
                                task_complete: false,
                                instruction: format!("move {} {}", dir.name(), count),
                                target_state: format!("agent at ({}, {})", end.x, end.y),
                                estimated_steps_remaining: segments - 1,
                            }
                        }
                        None => PlanStep {
                            step_index: req.step_number,
                            observation: format!(
                                "warning: no path from ({}, {}) to the goal; steering greedily",
                                agent.x, agent.y
                            ),
                            remaining_goal: format!("reach the goal at ({}, {})", goal.x, goal.y),
                            task_complete: false,
                            instruction: format!("move toward ({}, {})", goal.x, goal.y),
                            target_state: format!("agent nearer to ({}, {})", goal.x, goal.y),
                            estimated_steps_remaining: 1,
                        },
                    }
                }
            }
            (Category::MarkTarget, WorldState::Mark { marked }) => {
                let target = self.task.goal;
                if marked == vec![target] {
                    complete_step(req.step_number, "the target token is marked".to_string())
                } else if marked.contains(&target) {
                    // Extra marks cannot be undone; keep the canonical action.
                    mark_step(req.step_number, target, "target marked but extra marks present")
                } else {
                    mark_step(req.step_number, target, "target not yet marked")
                }
            }
            (Category::SortTokens, WorldState::Sort { values }) => match first_inversion(&values) {
                None => complete_step(req.step_number, "the row is sorted ascending".to_string()),
                Some(i) => {
                    let inversions =
                        values.windows(2).filter(|w| w[0] > w[1]).count() as u32;
                    PlanStep {
                        step_index: req.step_number,
                        observation: format!("tokens out of order at positions {} and {}", i, i + 1),
                        remaining_goal: "sort the row ascending".into(),
                        task_complete: false,
                        instruction: format!("swap the tokens at positions {} and {}", i, i + 1),
                        target_state: "row closer to ascending order".into(),
                        estimated_steps_remaining: inversions - 1,
                    }
                }
            },
            _ => return Err(BackendError::Malformed("frame does not match task category".into())),
        };
        Ok(Metered::estimated(step, &profile))
    }
}

fn complete_step(step_index: u32, observation: String) -> PlanStep {
    PlanStep {
        step_index,
        observation,
        remaining_goal: String::new(),
        task_complete: true,
        instruction: String::new(),
        target_state: String::new(),
        estimated_steps_remaining: 0,
    }
}

fn mark_step(step_index: u32, target: Cell, observation: &str) -> PlanStep {
    PlanStep {
        step_index,
        observation: observation.to_string(),
        remaining_goal: format!("mark the token at ({}, {})", target.x, target.y),
        task_complete: false,
        instruction: format!("mark the token at ({}, {})", target.x, target.y),
        target_state: format!("token at ({}, {}) marked", target.x, target.y),
        estimated_steps_remaining: 0,
    }
}

/// Fault-injecting generator.
pub struct SimGenerator {
    pub task: GridTask,
    pub faults: FaultConfig,
}

impl Generator for SimGenerator {
    fn generate(&self, req: &GeneratorRequest) -> BackendResult<Clip> {
        let clip = sim_generate(&self.task, req, &self.faults)
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        Ok(Metered::new(clip, CallMeta::default()))
    }
}

/// Ground-truth verifier over recorded deviation metadata.
pub struct SimVerifier {
    pub task: GridTask,
}

impl Verifier for SimVerifier {
    fn verify(&self, req: &VerifierRequest, clip: &Clip) -> BackendResult<Verdict> {
        req.validate()?;
        let profile = BackendProfile::verifier_default();
        let complete = goal_reached(&self.task, clip.last_frame());
        let progress = if complete { Progress::Complete } else { Progress::Partial };

        let verdict = match &clip.fault {
            None => Verdict::accept(progress, Confidence::High, "action executed as planned"),
            Some(f) => match f.kind {
                FaultKind::EarlyStop => Verdict::accept(
                    progress,
                    Confidence::High,
                    format!("correct direction, incomplete: {}", f.detail),
                ),
                FaultKind::WrongDirection | FaultKind::WrongTarget | FaultKind::Unparseable => {
                    let suggestion = self.suggestion_for(req, clip);
                    Verdict::reject(f.onset, Confidence::High, f.detail.clone(), suggestion)
                }
            },
        };
        Ok(Metered::estimated(verdict, &profile))
    }
}

impl SimVerifier {
    /// Name the correct action: restate the planned command when it parses,
    /// otherwise derive the right next command from the clip's conditioning
    /// frame.
    fn suggestion_for(&self, req: &VerifierRequest, clip: &Clip) -> String {
        if let Some(cmd) = parse_action(&self.task, &req.planned_action).command {
            return canonical_phrase(&self.task, &cmd);
        }
        canonical_next_command(&self.task, clip.first_frame())
            .unwrap_or_else(|| "restate the action as a single command".to_string())
    }
}

/// Deterministic failure router: usable prefix favors a retry, structural
/// multi-segment failures favor decomposition, anything else collapses to a
/// single shot.
pub struct SimRouter {
    pub task: GridTask,
}

impl Router for SimRouter {
    fn route(&self, req: &RouterRequest, failed_clip: &Clip) -> BackendResult<RouterDecision> {
        let profile = BackendProfile::router_default();
        let suggestion = parse_action(&self.task, &failed_clip.action_prompt)
            .command
            .map(|c| canonical_phrase(&self.task, &c))
            .unwrap_or_else(|| req.suggestion.clone());
        let decision = if req.good_fraction >= 0.25 {
            RouterDecision {
                action: RouterAction::Regen,
                suggestion,
                reason: "execution slip with a usable prefix".into(),
                estimated_steps: None,
            }
        } else if self.task.category == Category::Navigation && self.task.required_steps > 1 {
            RouterDecision {
                action: RouterAction::Split,
                suggestion,
                reason: "structural failure on a multi-segment path".into(),
                estimated_steps: Some(self.task.required_steps.max(2)),
            }
        } else {
            RouterDecision {
                action: RouterAction::Fallback,
                suggestion,
                reason: "single-step task; retry as one shot".into(),
                estimated_steps: None,
            }
        };
        Ok(Metered::estimated(decision, &profile))
    }
}

/// Content quality of a candidate's end state, for best-of-k selection.
fn candidate_quality(task: &GridTask, clip: &Clip) -> f64 {
    let frame = clip.last_frame();
    if goal_reached(task, frame) {
        return 2.0;
    }
    match (task.category, decode(task, frame)) {
        (Category::Navigation, Ok(WorldState::Nav { agent })) => {
            let dist = bfs_path(&task.grid, agent, task.goal)
                .map(|p| (p.len() - 1) as f64)
                .unwrap_or((task.grid.width + task.grid.height) as f64 + agent.manhattan(task.goal) as f64);
            1.0 / (1.0 + dist)
        }
        (Category::MarkTarget, Ok(WorldState::Mark { marked })) => {
            if marked.contains(&task.goal) {
                0.5
            } else {
                0.1
            }
        }
        (Category::SortTokens, Ok(WorldState::Sort { values })) => {
            let pairs = values.len().saturating_sub(1).max(1) as f64;
            values.windows(2).filter(|w| w[0] <= w[1]).count() as f64 / (pairs + 1.0)
        }
        _ => 0.0,
    }
}

/// Order-blind oracle selector: argmax of end-state quality, ties broken by
/// the lowest declared seed (which travels with the clip, so permuting the
/// candidate order cannot change the chosen content).
pub struct SimSelector {
    pub task: GridTask,
}

impl Selector for SimSelector {
    fn select(&self, _req: &SelectorRequest, candidates: &[Clip]) -> BackendResult<usize> {
        if candidates.is_empty() {
            return Err(BackendError::Malformed("selector needs at least one candidate".into()));
        }
        let best = candidates
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                candidate_quality(&self.task, a)
                    .partial_cmp(&candidate_quality(&self.task, b))
                    .unwrap()
                    .then(b.seed.cmp(&a.seed))
            })
            .map(|(i, _)| i)
            .expect("non-empty candidates");
        Ok(Metered::estimated(best, &BackendProfile::verifier_default()))
    }
}

/// Whole-video critic: when any batch clip deviated, fold the correct
/// command for the batch's starting state into the prompt.
pub struct SimCritic {
    pub task: GridTask,
}

impl Critic for SimCritic {
    fn critique(&self, req: &CriticRequest, batch: &[Clip]) -> BackendResult<String> {
        let profile = BackendProfile::verifier_default();
        let deviated = batch.iter().any(|c| {
            matches!(
                c.fault.as_ref().map(|f| f.kind),
                Some(FaultKind::WrongDirection | FaultKind::WrongTarget | FaultKind::Unparseable)
            )
        });
        if !deviated {
            return Ok(Metered::estimated(req.current_prompt.clone(), &profile));
        }
        let suggestion = batch
            .first()
            .and_then(|c| canonical_next_command(&self.task, c.first_frame()))
            .unwrap_or_default();
        if suggestion.is_empty() {
            return Ok(Metered::estimated(req.current_prompt.clone(), &profile));
        }
        Ok(Metered::estimated(
            fold_correction(&req.current_prompt, &suggestion, "batch clips deviated"),
            &profile,
        ))
    }
}

/// Judge-free score: 1 when the final frame satisfies the task's goal
/// condition, else 0. An empty final video is scored on the initial frame.
pub fn rule_score(result: &RunResult, task: &GridTask) -> u8 {
    let frame = match result.final_video.last() {
        Some(clip) => clip.last_frame().clone(),
        None => initial_frame(task),
    };
    goal_reached(task, &frame) as u8
}

/// Per-category success aggregation: (runs, successes).
pub fn score_by_category<'a>(
    runs: impl IntoIterator<Item = (&'a RunResult, &'a GridTask)>,
) -> BTreeMap<Category, (usize, usize)> {
    let mut out: BTreeMap<Category, (usize, usize)> = BTreeMap::new();
    for (result, task) in runs {
        let entry = out.entry(task.category).or_default();
        entry.0 += 1;
        entry.1 += rule_score(result, task) as usize;
    }
    out
}

/// All grid-world backends for one task, bundled for convenient borrowing.
pub struct SimBackends {
    pub planner: SimPlanner,
    pub verifier: SimVerifier,
    pub generator: SimGenerator,
    pub router: SimRouter,
    pub selector: SimSelector,
    pub critic: SimCritic,
}

impl SimBackends {
    pub fn new(task: GridTask, faults: FaultConfig) -> Self {
        Self {
            planner: SimPlanner { task: task.clone() },
            verifier: SimVerifier { task: task.clone() },
            generator: SimGenerator { task: task.clone(), faults },
            router: SimRouter { task: task.clone() },
            selector: SimSelector { task: task.clone() },
            critic: SimCritic { task },
        }
    }

    pub fn set(&self) -> crate::backends::BackendSet<'_> {
        crate::backends::BackendSet {
            planner: &self.planner,
            verifier: &self.verifier,
            generator: &self.generator,
            router: Some(&self.router),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::FrameRef;
    use crate::simworld::grid::{render, Grid};
    use crate::simworld::{Difficulty, generate_task};
    use crate::trace::{payload, EventKind, RunHeader, RunTrace, TraceEvent};
    use serde_json::json;

    fn straight_task() -> GridTask {
        GridTask {
            grid: Grid::open(13, 13),
            start: Cell::new(2, 6),
            goal: Cell::new(10, 6),
            required_steps: 1,
            category: Category::Navigation,
            tokens: vec![],
            token_row: 0,
            token_values: vec![],
        }
    }

    /// L-corridor: right 3 then down 3.
    fn l_task() -> GridTask {
        let mut grid = Grid::filled(9, 9);
        let mut path = vec![Cell::new(1, 1)];
        for x in 2..=4 {
            path.push(Cell::new(x, 1));
        }
        for y in 2..=4 {
            path.push(Cell::new(4, y));
        }
        for c in &path {
            grid.set_wall(*c, false);
        }
        GridTask {
            grid,
            start: Cell::new(1, 1),
            goal: Cell::new(4, 4),
            required_steps: 2,
            category: Category::Navigation,
            tokens: vec![],
            token_row: 0,
            token_values: vec![],
        }
    }

    fn gen_clip(task: &GridTask, prompt: &str, faults: &FaultConfig, seed: u64) -> Clip {
        let req = GeneratorRequest {
            conditioning: initial_frame(task),
            action_prompt: prompt.to_string(),
            duration_s: 3.0,
            fps: 16.0,
            seed,
            step_index: 1,
            attempt_index: 1,
        };
        sim_generate(task, &req, faults).unwrap()
    }

    fn verify_req(task: &GridTask, action: &str, clip: &Clip) -> VerifierRequest {
        VerifierRequest {
            task_prompt: crate::simworld::task_prompt(task),
            planned_action: action.to_string(),
            target_state: "somewhere useful".into(),
            sampled_frames: vec![FrameRef::Frame(clip.first_frame().clone())],
        }
    }

    #[test]
    fn verifier_accepts_clean_clips_and_flags_completion() {
        let task = straight_task();
        let v = SimVerifier { task: task.clone() };
        let clip = gen_clip(&task, "move right 8", &FaultConfig::default(), 1);
        let verdict = v.verify(&verify_req(&task, "move right 8", &clip), &clip).unwrap().value;
        assert!(verdict.is_accept());
        assert_eq!(verdict.progress, Progress::Complete, "goal reached");

        let partial = gen_clip(&task, "move right 3", &FaultConfig::default(), 1);
        let verdict = v.verify(&verify_req(&task, "move right 3", &partial), &partial).unwrap().value;
        assert!(verdict.is_accept());
        assert_eq!(verdict.progress, Progress::Partial);
    }

    #[test]
    fn verifier_rejects_wrong_direction_and_echoes_onset() {
        let task = straight_task();
        let v = SimVerifier { task: task.clone() };
        let faults = FaultConfig { p_wrong_direction: 1.0, ..Default::default() };
        let clip = gen_clip(&task, "move right 4", &faults, 3);
        let verdict = v.verify(&verify_req(&task, "move right 4", &clip), &clip).unwrap().value;
        assert!(!verdict.is_accept());
        assert_eq!(verdict.good_fraction, Some(0.0));
        assert!(verdict.suggestion.contains("move right 4"), "suggestion: {}", verdict.suggestion);
    }

    #[test]
    fn verifier_accepts_early_stop_as_partial_progress() {
        let task = straight_task();
        let v = SimVerifier { task: task.clone() };
        let faults = FaultConfig { p_early_stop: 1.0, ..Default::default() };
        let clip = gen_clip(&task, "move right 6", &faults, 5);
        assert_eq!(clip.fault.as_ref().unwrap().kind, FaultKind::EarlyStop);
        let verdict = v.verify(&verify_req(&task, "move right 6", &clip), &clip).unwrap().value;
        assert!(verdict.is_accept(), "early stop in the correct direction is partial progress");
        assert_eq!(verdict.progress, Progress::Partial);
    }

    #[test]
    fn planner_decomposes_the_l_path_one_leg_at_a_time() {
        let task = l_task();
        let p = SimPlanner { task: task.clone() };
        let req = PlannerRequest {
            task_prompt: crate::simworld::task_prompt(&task),
            current_image: initial_frame(&task).into(),
            completed_steps: vec![],
            step_number: 1,
        };
        let plan = p.plan(&req).unwrap().value;
        assert!(!plan.task_complete);
        assert_eq!(plan.instruction, "move right 3");
        assert_eq!(plan.estimated_steps_remaining, 1);
    }

    #[test]
    fn planner_replans_from_the_drifted_position() {
        let task = l_task();
        let p = SimPlanner { task: task.clone() };
        // The agent drifted one cell along the second leg already.
        let drifted = render(&task, &WorldState::Nav { agent: Cell::new(4, 2) });
        let req = PlannerRequest {
            task_prompt: crate::simworld::task_prompt(&task),
            current_image: drifted.into(),
            completed_steps: vec!["move right 3".into()],
            step_number: 2,
        };
        let plan = p.plan(&req).unwrap().value;
        assert_eq!(plan.instruction, "move down 2", "plans from the realized cell");
        assert_eq!(plan.estimated_steps_remaining, 0);
    }

    #[test]
    fn planner_signals_completion_at_the_goal() {
        let task = l_task();
        let p = SimPlanner { task: task.clone() };
        let at_goal = render(&task, &WorldState::Nav { agent: task.goal });
        let req = PlannerRequest {
            task_prompt: crate::simworld::task_prompt(&task),
            current_image: at_goal.into(),
            completed_steps: vec!["move right 3".into(), "move down 3".into()],
            step_number: 3,
        };
        let plan = p.plan(&req).unwrap().value;
        assert!(plan.task_complete);
        assert!(plan.instruction.is_empty());
    }

    #[test]
    fn oracle_soundness_over_random_clips() {
        // Accept exactly the clips whose metadata records no
        // direction/target contradiction.
        let task = straight_task();
        let v = SimVerifier { task: task.clone() };
        let faults = FaultConfig {
            p_wrong_direction: 0.4,
            p_early_stop: 0.4,
            p_wrong_target: 0.0,
            rng_seed: 2,
        };
        for seed in 0..200u64 {
            let clip = gen_clip(&task, "move right 5", &faults, seed);
            let verdict =
                v.verify(&verify_req(&task, "move right 5", &clip), &clip).unwrap().value;
            let contradiction = matches!(
                clip.fault.as_ref().map(|f| f.kind),
                Some(FaultKind::WrongDirection | FaultKind::WrongTarget | FaultKind::Unparseable)
            );
            assert_eq!(verdict.is_accept(), !contradiction, "seed {seed}");
            if let (false, Some(f)) = (verdict.is_accept(), clip.fault.as_ref()) {
                assert_eq!(verdict.good_fraction, Some(f.onset), "seed {seed}");
            }
        }
    }

    #[test]
    fn empty_motion_scores_zero_unless_trivially_done() {
        let task = straight_task();
        let clip = Clip {
            frames: vec![initial_frame(&task); 8],
            fps: 16.0,
            action_prompt: "hold".into(),
            attempt_index: 1,
            step_index: 1,
            seed: 0,
            fault: None,
        };
        let mut trace = RunTrace::new(RunHeader {
            task_id: "score".into(),
            config_hash: "h".into(),
            rng_seed: 0,
            started_at: 0,
        });
        trace
            .append(
                TraceEvent::new(
                    EventKind::GeneratorCall,
                    0,
                    0,
                    1,
                    json!({ payload::PHASE: payload::PHASE_SINGLE_SHOT, payload::CLIP: clip }),
                )
                .with_vgm_seconds(0.5),
            )
            .unwrap();
        trace
            .append(TraceEvent::new(
                EventKind::Terminate,
                1,
                0,
                0,
                json!({ payload::REASON: payload::REASON_SINGLE_SHOT }),
            ))
            .unwrap();
        let result = RunResult::from_trace(trace).unwrap();
        assert_eq!(rule_score(&result, &task), 0);
    }

    #[test]
    fn wrong_target_marks_the_nearest_distractor() {
        let task = generate_task(1234, Difficulty::N1);
        // Find a mark task deterministically.
        let task = if task.category == Category::MarkTarget {
            task
        } else {
            (0..100u64)
                .map(|s| generate_task(9000 + s, Difficulty::N1))
                .find(|t| t.category == Category::MarkTarget)
                .expect("mark tasks occur")
        };
        let faults = FaultConfig { p_wrong_target: 1.0, ..Default::default() };
        let prompt = crate::simworld::task_prompt(&task);
        let clip = gen_clip(&task, &prompt, &faults, 8);
        let fault = clip.fault.as_ref().unwrap();
        assert_eq!(fault.kind, FaultKind::WrongTarget);
        // The verifier rejects and names the correct target.
        let v = SimVerifier { task: task.clone() };
        let verdict = v.verify(&verify_req(&task, &prompt, &clip), &clip).unwrap().value;
        assert!(!verdict.is_accept());
        assert!(verdict
            .suggestion
            .contains(&format!("({}, {})", task.goal.x, task.goal.y)));
    }

    #[test]
    fn selector_is_order_blind() {
        let task = straight_task();
        let sel = SimSelector { task: task.clone() };
        // Three candidates of different quality.
        let clean = gen_clip(&task, "move right 8", &FaultConfig::default(), 1);
        let short = gen_clip(&task, "move right 3", &FaultConfig::default(), 2);
        let garbage = gen_clip(&task, "gibberish", &FaultConfig::default(), 3);
        let req = |cands: &[Clip]| SelectorRequest {
            task_prompt: "t".into(),
            input_image: initial_frame(&task).into(),
            candidates: cands
                .iter()
                .map(|c| vec![FrameRef::Frame(c.last_frame().clone())])
                .collect(),
        };
        let a = [clean.clone(), short.clone(), garbage.clone()];
        let b = [garbage, short, clean.clone()];
        let pick_a = sel.select(&req(&a), &a).unwrap().value;
        let pick_b = sel.select(&req(&b), &b).unwrap().value;
        assert_eq!(a[pick_a], b[pick_b], "chosen content must not depend on order");
        assert_eq!(a[pick_a].seed, clean.seed);
    }
}
