//! Action-prompt compilation and clip synthesis with seeded fault injection.
//!
//! A prompt compiles to at most one action command; a prompt that compiles
//! to nothing produces a garbage-motion clip the verifier can see and
//! reject. Injected deviations are drawn from a per-clip RNG stream derived
//! from the generation seed, and their ground truth (kind, onset fraction,
//! description) is recorded on the clip for the oracle verifier.
//!
//! Onset semantics: the deviation's first failing frame is
//! `floor(onset * (frames - 1)) + 1`, so resuming from the frame at
//! `floor(onset * (frames - 1))` always lands on correct state.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backends::GeneratorRequest;
use crate::prompt;
use crate::types::{Clip, ContractViolation, FaultKind, Frame, InjectedFault};

use super::grid::{decode, render, token_col, Cell, Direction, WorldState, ALL_DIRECTIONS};
use super::{derive_seed, palette, ActionCommand, FaultConfig, GridTask, Verb};

/// Multiplier applied to wrong-direction / wrong-target probabilities when
/// the prompt carries a correction block that restates the command: a
/// clarified prompt makes the same slip less likely, which is what gives
/// prompt evolution its repair value in simulation.
pub const CORRECTION_DAMPING: f64 = 0.5;

const GARBAGE_STREAM_LABEL: u64 = 0x6a5b;

/// Compiled view of an action prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPrompt {
    pub command: Option<ActionCommand>,
    /// True when a correction block supplied (or confirmed) the command.
    pub damped: bool,
}

/// Compile a prompt against a task. A parseable correction block wins over
/// the base instruction (the latest diagnosis is the most informed) and
/// marks the prompt as corrected.
pub fn parse_action(task: &GridTask, prompt_text: &str) -> ParsedPrompt {
    if let Some(correction) = prompt::correction_of(prompt_text) {
        // The folded reason annotation is diagnosis metadata, not part of
        // the instruction.
        let instruction = correction.split("(reason:").next().unwrap_or(correction);
        if let Some(cmd) = parse_fragment(task, instruction) {
            return ParsedPrompt { command: Some(cmd), damped: true };
        }
    }
    ParsedPrompt { command: parse_fragment(task, prompt::base_of(prompt_text)), damped: false }
}

fn parse_fragment(task: &GridTask, text: &str) -> Option<ActionCommand> {
    let lower = text.to_lowercase();
    let max_count = task.grid.width.max(task.grid.height);
    if lower.contains("swap") {
        let ints = extract_ints(&lower);
        let (a, b) = match ints.as_slice() {
            [a, b, ..] => (*a.min(b), *a.max(b)),
            _ => return None,
        };
        if b != a + 1 || b as usize >= task.token_values.len().max(1) {
            return None;
        }
        return Some(ActionCommand {
            verb: Verb::Swap,
            direction: None,
            count: 1,
            target: Some(Cell::new(token_col(task, a as usize), task.token_row)),
        });
    }
    if lower.contains("mark") {
        let target = extract_cell(&lower)?;
        return Some(ActionCommand { verb: Verb::Mark, direction: None, count: 1, target: Some(target) });
    }
    let movish = ["move", "go", "navigate", "toward", "walk"].iter().any(|w| lower.contains(w));
    if !movish {
        return None;
    }
    // The first direction word by position wins, so trailing diagnosis text
    // ("... not up") cannot hijack the command.
    let first_dir = ALL_DIRECTIONS
        .into_iter()
        .filter_map(|d| find_word(&lower, d.name()).map(|pos| (pos, d)))
        .min_by_key(|(pos, _)| *pos);
    if let Some((pos, dir)) = first_dir {
        let count = extract_ints(&lower[pos..]).first().copied().unwrap_or(1).max(1) as u32;
        return Some(ActionCommand {
            verb: Verb::Move,
            direction: Some(dir),
            count: count.min(max_count),
            target: None,
        });
    }
    let target = extract_cell(&lower)?;
    Some(ActionCommand {
        verb: Verb::Move,
        direction: None,
        count: max_count,
        target: Some(target),
    })
}

fn find_word(text: &str, word: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(rel) = text[from..].find(word) {
        let start = from + rel;
        let end = start + word.len();
        let left_ok = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
        let right_ok = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
        if left_ok && right_ok {
            return Some(start);
        }
        from = end;
    }
    None
}

fn extract_ints(text: &str) -> Vec<u64> {
    let mut out = Vec::new();
    let mut current: Option<u64> = None;
    for ch in text.chars() {
        if let Some(d) = ch.to_digit(10) {
            current = Some(current.unwrap_or(0).saturating_mul(10) + d as u64);
        } else if let Some(v) = current.take() {
            out.push(v);
        }
    }
    if let Some(v) = current {
        out.push(v);
    }
    out
}

/// First "(x, y)" pair in the text.
fn extract_cell(text: &str) -> Option<Cell> {
    let open = text.find('(')?;
    let close = text[open..].find(')')? + open;
    let inner = &text[open + 1..close];
    let parts: Vec<u64> = extract_ints(inner);
    match parts.as_slice() {
        [x, y] => Some(Cell::new(*x as u32, *y as u32)),
        _ => extract_cell(&text[close + 1..]),
    }
}

/// Motion length at which the configured wrong-direction probability
/// applies as-is. Longer motions compound the per-cell hazard, shorter ones
/// dilute it, which is what makes re-rolling a whole segment riskier than
/// regenerating only its failed suffix.
pub const HAZARD_REFERENCE_CELLS: f64 = 4.0;

/// Wrong-direction probability for a motion of `cells` length.
pub fn effective_wrong_probability(p: f64, cells: usize) -> f64 {
    if cells == 0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    1.0 - (1.0 - p).powf(cells as f64 / HAZARD_REFERENCE_CELLS)
}

/// Raw per-clip deviation draw. The five values are always consumed in this
/// order regardless of command type, so any draw can be replayed
/// independently of the clip it shaped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultDraw {
    pub u_wrong: f64,
    /// Index into the three non-correct directions.
    pub wrong_dir_index: usize,
    pub u_early: f64,
    /// Deviation onset (wrong direction + early trigger) or stop fraction
    /// (early trigger alone).
    pub fraction: f64,
    pub u_target: f64,
    pub damped: bool,
}

impl FaultDraw {
    /// Whether the wrong-direction hazard fires for a motion of `cells`.
    pub fn wrong_direction_fires(&self, faults: &FaultConfig, cells: usize) -> bool {
        let p = faults.p_wrong_direction * self.damp();
        self.u_wrong < effective_wrong_probability(p, cells)
    }

    pub fn early_stop_fires(&self, faults: &FaultConfig) -> bool {
        self.u_early < faults.p_early_stop
    }

    pub fn wrong_target_fires(&self, faults: &FaultConfig) -> bool {
        self.u_target < faults.p_wrong_target * self.damp()
    }

    fn damp(&self) -> f64 {
        if self.damped {
            CORRECTION_DAMPING
        } else {
            1.0
        }
    }
}

/// Replayable fault draw for the clip stream identified by `clip_seed`.
pub fn fault_draw_for(clip_seed: u64, faults: &FaultConfig, damped: bool) -> FaultDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(clip_seed, faults.rng_seed));
    FaultDraw {
        u_wrong: rng.gen(),
        wrong_dir_index: rng.gen_range(0..3usize),
        u_early: rng.gen(),
        fraction: rng.gen(),
        u_target: rng.gen(),
        damped,
    }
}

/// Execute an action prompt from a conditioning frame, producing the clip
/// and its deviation ground truth.
pub fn sim_generate(
    task: &GridTask,
    req: &GeneratorRequest,
    faults: &FaultConfig,
) -> Result<Clip, ContractViolation> {
    req.validate()?;
    faults.validate()?;
    let frame_count = ((req.duration_s * req.fps).round() as usize).max(1);
    let group = ((req.fps / 4.0).ceil() as usize).max(1);
    let state0 = decode(task, &req.conditioning)?;
    let parsed = parse_action(task, &req.action_prompt);
    let draw = fault_draw_for(req.seed, faults, parsed.damped);

    let (frames, fault) = match (parsed.command, &state0) {
        (Some(ActionCommand { verb: Verb::Move, direction, target, count, .. }), WorldState::Nav { agent }) => {
            move_frames(task, *agent, direction, target, count, frame_count, group, &draw, faults)
        }
        (Some(ActionCommand { verb: Verb::Mark, target: Some(target), .. }), WorldState::Mark { marked }) => {
            mark_frames(task, marked, target, frame_count, &draw, faults, &req.conditioning)
        }
        (Some(ActionCommand { verb: Verb::Swap, target: Some(target), .. }), WorldState::Sort { values }) => {
            swap_frames(task, values, target, frame_count, &draw, faults, &req.conditioning)
        }
        _ => garbage_frames(task, &state0, frame_count, group, req.seed, &req.conditioning),
    };

    let clip = Clip {
        frames,
        fps: req.fps,
        action_prompt: req.action_prompt.clone(),
        attempt_index: req.attempt_index,
        step_index: req.step_index,
        seed: req.seed,
        fault,
    };
    debug_assert!(clip.validate().is_ok());
    Ok(clip)
}

/// Cell-by-cell motion with the three deviation modes. Correct motion
/// respects walls; injected deviations cross them (that is what makes them
/// visible failures), staying on the grid.
#[allow(clippy::too_many_arguments)]
fn move_frames(
    task: &GridTask,
    start: Cell,
    direction: Option<Direction>,
    target: Option<Cell>,
    count: u32,
    frame_count: usize,
    group: usize,
    draw: &FaultDraw,
    faults: &FaultConfig,
) -> (Vec<Frame>, Option<InjectedFault>) {
    let (dir, planned) = match (direction, target) {
        (Some(d), _) => (Some(d), count),
        // Short-horizon prior: a single straight run along the dominant
        // axis toward the target; it cannot turn.
        (None, Some(t)) => {
            let dx = t.x as i64 - start.x as i64;
            let dy = t.y as i64 - start.y as i64;
            if dx == 0 && dy == 0 {
                (None, 0)
            } else if dx.abs() >= dy.abs() {
                (Some(if dx > 0 { Direction::Right } else { Direction::Left }), dx.unsigned_abs() as u32)
            } else {
                (Some(if dy > 0 { Direction::Down } else { Direction::Up }), dy.unsigned_abs() as u32)
            }
        }
        (None, None) => (None, 0),
    };

    let idle = |state: Cell| vec![render(task, &WorldState::Nav { agent: state }); frame_count];
    let Some(dir) = dir else {
        return (idle(start), None);
    };

    // Wall- and frame-budget-limited correct walk.
    let mut walk = Vec::new();
    let mut cur = start;
    let budget = (frame_count - 1) / group;
    for _ in 0..planned.min(budget as u32) {
        match task.grid.step(cur, dir) {
            Some(next) => {
                walk.push(next);
                cur = next;
            }
            None => break,
        }
    }
    let n = walk.len();

    let (correct_cells, wrong_dir, tau, fault) = if draw.wrong_direction_fires(faults, n) {
        let onset = if draw.early_stop_fires(faults) { draw.fraction } else { 0.0 };
        let wrong = ALL_DIRECTIONS
            .into_iter()
            .filter(|d| *d != dir)
            .nth(draw.wrong_dir_index)
            .expect("three wrong directions exist");
        let c = (onset * n as f64).floor() as usize;
        let tau = (onset * (frame_count - 1) as f64).floor() as usize;
        let fault = InjectedFault {
            kind: FaultKind::WrongDirection,
            onset,
            detail: format!("veered {} instead of {}", wrong.name(), dir.name()),
        };
        (c, Some(wrong), tau, Some(fault))
    } else if draw.early_stop_fires(faults) && n > 0 {
        let stop = (draw.fraction * n as f64).floor() as usize;
        let fault = InjectedFault {
            kind: FaultKind::EarlyStop,
            onset: draw.fraction,
            detail: format!("stopped after {stop} of {n} cells moving {}", dir.name()),
        };
        (stop, None, frame_count, Some(fault))
    } else {
        (n, None, frame_count, None)
    };

    let mut frames = Vec::with_capacity(frame_count);
    let mut pos = start;
    let mut correct_done = 0usize;
    let mut wrong_done = 0usize;
    frames.push(render(task, &WorldState::Nav { agent: pos }));
    for k in 1..frame_count {
        if k % group == 0 {
            if k <= tau {
                if correct_done < correct_cells {
                    pos = walk[correct_done];
                    correct_done += 1;
                }
            } else if let Some(w) = wrong_dir {
                if wrong_done < n - correct_cells {
                    if let Some(next) = task.grid.step_unchecked(pos, w) {
                        pos = next;
                    }
                    wrong_done += 1;
                }
            }
        }
        frames.push(render(task, &WorldState::Nav { agent: pos }));
    }
    (frames, fault)
}

/// Mark animation: the chosen token fades from token to marked intensity;
/// the final frame lands exactly on the marked palette value.
#[allow(clippy::too_many_arguments)]
fn mark_frames(
    task: &GridTask,
    marked: &[Cell],
    target: Cell,
    frame_count: usize,
    draw: &FaultDraw,
    faults: &FaultConfig,
    conditioning: &Frame,
) -> (Vec<Frame>, Option<InjectedFault>) {
    let (actual, fault) = if draw.wrong_target_fires(faults) {
        match nearest_distractor(&task.tokens, target) {
            Some(d) => (
                d,
                Some(InjectedFault {
                    kind: FaultKind::WrongTarget,
                    onset: 0.0,
                    detail: format!(
                        "marked the token at ({}, {}) instead of ({}, {})",
                        d.x, d.y, target.x, target.y
                    ),
                }),
            ),
            None => (target, None),
        }
    } else {
        (target, None)
    };

    let already = marked.contains(&actual);
    let mut frames = Vec::with_capacity(frame_count);
    frames.push(conditioning.clone());
    for k in 1..frame_count {
        let mut f = conditioning.clone();
        if !already {
            let v = if k == frame_count - 1 {
                palette::MARKED
            } else {
                palette::TOKEN
                    + (palette::MARKED - palette::TOKEN) * (k as f64 / (frame_count - 1) as f64)
            };
            f.set(actual.x, actual.y, v);
        }
        frames.push(f);
    }
    (frames, fault)
}

fn nearest_distractor(tokens: &[Cell], target: Cell) -> Option<Cell> {
    tokens
        .iter()
        .copied()
        .filter(|t| *t != target)
        .min_by_key(|t| (t.manhattan(target), t.y, t.x))
}

/// Swap animation: the pair's intensities crossfade; the final frame lands
/// exactly on the swapped values.
#[allow(clippy::too_many_arguments)]
fn swap_frames(
    task: &GridTask,
    values: &[f64],
    target: Cell,
    frame_count: usize,
    draw: &FaultDraw,
    faults: &FaultConfig,
    conditioning: &Frame,
) -> (Vec<Frame>, Option<InjectedFault>) {
    let k = values.len();
    let left_of = |cell: Cell| (0..k).find(|i| token_col(task, *i) == cell.x);
    let Some(i) = left_of(target).filter(|i| i + 1 < k) else {
        return garbage_frames(task, &WorldState::Sort { values: values.to_vec() }, frame_count, 4, 0, conditioning);
    };

    let (a, fault) = if draw.wrong_target_fires(faults) && k > 2 {
        let alt = if i + 2 < k { i + 1 } else { i - 1 };
        (
            alt,
            Some(InjectedFault {
                kind: FaultKind::WrongTarget,
                onset: 0.0,
                detail: format!(
                    "swapped positions {} and {} instead of {} and {}",
                    alt,
                    alt + 1,
                    i,
                    i + 1
                ),
            }),
        )
    } else {
        (i, None)
    };

    let (ca, cb) = (token_col(task, a), token_col(task, a + 1));
    let (va, vb) = (values[a], values[a + 1]);
    let mut frames = Vec::with_capacity(frame_count);
    frames.push(conditioning.clone());
    for k in 1..frame_count {
        let mut f = conditioning.clone();
        if k == frame_count - 1 {
            f.set(ca, task.token_row, vb);
            f.set(cb, task.token_row, va);
        } else {
            let t = k as f64 / (frame_count - 1) as f64;
            f.set(ca, task.token_row, va + (vb - va) * t);
            f.set(cb, task.token_row, vb + (va - vb) * t);
        }
        frames.push(f);
    }
    (frames, fault)
}

/// Unparseable prompts produce seeded garbage motion rather than an error:
/// the deviation is something the verifier must catch.
fn garbage_frames(
    task: &GridTask,
    state0: &WorldState,
    frame_count: usize,
    group: usize,
    seed: u64,
    conditioning: &Frame,
) -> (Vec<Frame>, Option<InjectedFault>) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, GARBAGE_STREAM_LABEL));
    let fault = InjectedFault {
        kind: FaultKind::Unparseable,
        onset: 0.0,
        detail: "action prompt did not compile to a single command".to_string(),
    };
    let mut frames = Vec::with_capacity(frame_count);
    frames.push(conditioning.clone());
    match state0 {
        WorldState::Nav { agent } => {
            let mut pos = *agent;
            for k in 1..frame_count {
                if k % group == 0 {
                    let dir = ALL_DIRECTIONS[rng.gen_range(0..4usize)];
                    if let Some(next) = task.grid.step_unchecked(pos, dir) {
                        pos = next;
                    }
                }
                frames.push(render(task, &WorldState::Nav { agent: pos }));
            }
        }
        WorldState::Mark { marked } => {
            let mut marked = marked.clone();
            for k in 1..frame_count {
                if k % group == 0 && !task.tokens.is_empty() {
                    let t = task.tokens[rng.gen_range(0..task.tokens.len())];
                    match marked.iter().position(|m| *m == t) {
                        Some(idx) => {
                            marked.remove(idx);
                        }
                        None => marked.push(t),
                    }
                }
                frames.push(render(task, &WorldState::Mark { marked: marked.clone() }));
            }
        }
        WorldState::Sort { values } => {
            let mut values = values.clone();
            for k in 1..frame_count {
                if k % group == 0 && values.len() >= 2 {
                    let i = rng.gen_range(0..values.len() - 1);
                    values.swap(i, i + 1);
                }
                frames.push(render(task, &WorldState::Sort { values: values.clone() }));
            }
        }
    }
    (frames, Some(fault))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::fold_correction;
    use crate::simworld::grid::Grid;
    use crate::simworld::Category;

    /// Open board with a straight west-east run from (2, 6) to (10, 6).
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

    fn gen_req(task: &GridTask, prompt: &str, seed: u64) -> GeneratorRequest {
        GeneratorRequest {
            conditioning: render(task, &WorldState::Nav { agent: task.start }),
            action_prompt: prompt.to_string(),
            duration_s: 3.0,
            fps: 16.0,
            seed,
            step_index: 1,
            attempt_index: 1,
        }
    }

    fn agent_of(task: &GridTask, frame: &Frame) -> Cell {
        match decode(task, frame).unwrap() {
            WorldState::Nav { agent } => agent,
            _ => panic!("nav state expected"),
        }
    }

    #[test]
    fn fault_free_move_displaces_by_count() {
        let task = straight_task();
        let clip = sim_generate(&task, &gen_req(&task, "move right 3", 5), &FaultConfig::default())
            .unwrap();
        assert!(clip.fault.is_none());
        assert_eq!(clip.frames[0], gen_req(&task, "move right 3", 5).conditioning);
        let end = agent_of(&task, clip.last_frame());
        assert_eq!(end, Cell::new(5, 6));
    }

    #[test]
    fn forced_wrong_direction_has_zero_onset() {
        let task = straight_task();
        let faults = FaultConfig { p_wrong_direction: 1.0, ..Default::default() };
        let clip = sim_generate(&task, &gen_req(&task, "move right 3", 11), &faults).unwrap();
        let fault = clip.fault.as_ref().unwrap();
        assert_eq!(fault.kind, FaultKind::WrongDirection);
        assert_eq!(fault.onset, 0.0);
        // Motion went somewhere other than right.
        let end = agent_of(&task, clip.last_frame());
        assert_ne!(end, Cell::new(5, 6));
        assert_ne!(end, task.start);
    }

    #[test]
    fn forced_early_stop_matches_the_replayed_draw() {
        let task = straight_task();
        let faults = FaultConfig { p_early_stop: 1.0, ..Default::default() };
        // Find a stream whose drawn fraction lands in [0.5, 0.75), the
        // published half-way example: "move right 4" stops at +2.
        let seed = (0..500u64)
            .find(|s| {
                let d = fault_draw_for(*s, &faults, false);
                (0.5..0.75).contains(&d.fraction)
            })
            .expect("some stream draws a half-way fraction");
        let draw = fault_draw_for(seed, &faults, false);
        let clip = sim_generate(&task, &gen_req(&task, "move right 4", seed), &faults).unwrap();
        let fault = clip.fault.as_ref().unwrap();
        assert_eq!(fault.kind, FaultKind::EarlyStop);
        assert_eq!(fault.onset, draw.fraction);
        let end = agent_of(&task, clip.last_frame());
        assert_eq!(end, Cell::new(task.start.x + 2, task.start.y));
    }

    #[test]
    fn deviation_starts_after_the_resume_index() {
        let task = straight_task();
        let faults =
            FaultConfig { p_wrong_direction: 1.0, p_early_stop: 1.0, ..Default::default() };
        let req = gen_req(&task, "move right 6", 17);
        let clip = sim_generate(&task, &req, &faults).unwrap();
        let fault = clip.fault.clone().unwrap();
        assert_eq!(fault.kind, FaultKind::WrongDirection);
        assert!(fault.onset > 0.0, "combined trigger deviates mid-clip");

        // Frames up to floor(onset*(F-1)) stay on the correct trajectory
        // (the executed prefix, possibly paused), so the resume point is
        // always correct state; the deviation begins strictly after it.
        let clean = sim_generate(&task, &req, &FaultConfig::default()).unwrap();
        let tau = (fault.onset * (clip.frames.len() - 1) as f64).floor() as usize;
        let c = (fault.onset * 6.0).floor() as usize;
        let group = 4; // one cell per ceil(fps/4) frames at 16 fps
        assert_eq!(clip.frames[tau], clean.frames[c * group], "resume frame is the settled prefix");
        let prefix_cells: Vec<Cell> =
            (0..=c).map(|i| Cell::new(task.start.x + i as u32, task.start.y)).collect();
        for k in 0..=tau {
            let pos = agent_of(&task, &clip.frames[k]);
            assert!(prefix_cells.contains(&pos), "frame {k} left the correct prefix");
        }
        assert_ne!(clip.frames.last(), clean.frames.last());
    }

    #[test]
    fn correction_block_damps_the_fault_rate() {
        // At the hazard reference length the configured rate applies as-is;
        // a matching correction block halves it.
        let task = straight_task();
        let faults = FaultConfig { p_wrong_direction: 0.6, ..Default::default() };
        let plain = "move right 4";
        let corrected = fold_correction(plain, "move right 4", "veered up last time");
        let mut plain_faults = 0;
        let mut corrected_faults = 0;
        for seed in 0..400u64 {
            let p = sim_generate(&task, &gen_req(&task, plain, seed), &faults).unwrap();
            let c = sim_generate(&task, &gen_req(&task, &corrected, seed), &faults).unwrap();
            plain_faults += p.fault.is_some() as u32;
            corrected_faults += c.fault.is_some() as u32;
        }
        assert!((plain_faults as f64 / 400.0 - 0.6).abs() < 0.07);
        assert!((corrected_faults as f64 / 400.0 - 0.3).abs() < 0.07);
    }

    #[test]
    fn longer_motions_compound_the_hazard() {
        assert!((effective_wrong_probability(0.3, 4) - 0.3).abs() < 1e-12);
        assert!(effective_wrong_probability(0.3, 8) > 0.3);
        assert!(effective_wrong_probability(0.3, 2) < 0.3);
        assert_eq!(effective_wrong_probability(1.0, 2), 1.0);
        assert_eq!(effective_wrong_probability(0.5, 0), 0.0);

        // Monotone in length: a full re-roll of a segment is never safer
        // than regenerating its suffix.
        let task = straight_task();
        let faults = FaultConfig { p_wrong_direction: 0.5, ..Default::default() };
        let mut long_faults = 0u32;
        let mut short_faults = 0u32;
        for seed in 0..300u64 {
            let l = sim_generate(&task, &gen_req(&task, "move right 8", seed), &faults).unwrap();
            let s = sim_generate(&task, &gen_req(&task, "move right 2", seed), &faults).unwrap();
            long_faults += l.fault.is_some() as u32;
            short_faults += s.fault.is_some() as u32;
            // Same draw, monotone thresholds: a faulted short run implies a
            // faulted long run.
            if s.fault.is_some() {
                assert!(l.fault.is_some(), "seed {seed}");
            }
        }
        assert!(long_faults > short_faults);
    }

    #[test]
    fn unparseable_prompt_yields_garbage_with_ground_truth() {
        let task = straight_task();
        let clip =
            sim_generate(&task, &gen_req(&task, "do something nice", 3), &FaultConfig::default())
                .unwrap();
        let fault = clip.fault.as_ref().unwrap();
        assert_eq!(fault.kind, FaultKind::Unparseable);
        assert_eq!(fault.onset, 0.0);
        assert_eq!(clip.frames[0], gen_req(&task, "x", 3).conditioning);
    }

    #[test]
    fn correction_command_overrides_the_base() {
        let task = straight_task();
        let evolved = fold_correction("move right 6", "move left 2", "overshot");
        let parsed = parse_action(&task, &evolved);
        let cmd = parsed.command.unwrap();
        assert_eq!(cmd.direction, Some(Direction::Left));
        assert_eq!(cmd.count, 2);
        assert!(parsed.damped);
    }

    #[test]
    fn whole_task_prompts_compile_to_toward_moves() {
        let task = straight_task();
        let parsed = parse_action(&task, "Move the agent to the goal at (10, 6).");
        let cmd = parsed.command.unwrap();
        assert_eq!(cmd.verb, Verb::Move);
        assert_eq!(cmd.target, Some(Cell::new(10, 6)));
        assert!(cmd.direction.is_none());
    }
}
