//! Seeded benchmark-task generation and task-set files.
//!
//! Navigation tasks are carved as single corridors with exactly the required
//! number of straight segments, so the shortest path (and its segment count)
//! is unique by construction. Single-step tasks rotate among straight
//! corridors, mark-target boards, and one-swap sort rows.
//!
//! Task sets are JSONL: a header line declaring the mix and fault config,
//! then one task record per line. Generation is a pure function of the seed,
//! so identical invocations produce byte-identical files.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::types::{ContractViolation, Frame, Task};

use super::grid::{render, Cell, Direction, Grid, WorldState, ALL_DIRECTIONS};
#[cfg(test)]
use super::grid::{bfs_path, first_segment, straight_segments};
use super::{derive_seed, palette, Category, Difficulty, FaultConfig, GridTask, NMix};

const NAV_GRID: u32 = 13;
const BOARD_GRID: u32 = 9;

/// Deterministically generate one task of the given step depth.
pub fn generate_task(seed: u64, difficulty: Difficulty) -> GridTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match difficulty {
        Difficulty::N1 => match rng.gen_range(0..3u32) {
            0 => nav_task(&mut rng, 1),
            1 => mark_task(&mut rng),
            _ => sort_task(&mut rng),
        },
        Difficulty::N2 => nav_task(&mut rng, 2),
        Difficulty::N3 => nav_task(&mut rng, 3),
    }
}

/// Carve a corridor with exactly `segments` maximal straight runs through an
/// otherwise solid grid. Retries draws from the same stream until the
/// corridor is self-avoiding and shortcut-free, so the result is still a
/// pure function of the seed.
fn nav_task(rng: &mut ChaCha8Rng, segments: u32) -> GridTask {
    loop {
        let start = Cell::new(rng.gen_range(2..NAV_GRID - 2), rng.gen_range(2..NAV_GRID - 2));
        let mut path = vec![start];
        let mut dir = ALL_DIRECTIONS[rng.gen_range(0..4usize)];
        let mut ok = true;
        for seg in 0..segments {
            if seg > 0 {
                let turns = perpendicular(dir);
                dir = turns[rng.gen_range(0..2usize)];
            }
            let len = rng.gen_range(2..=5u32);
            for _ in 0..len {
                let (dx, dy) = dir.delta();
                let last = *path.last().expect("path non-empty");
                let nx = last.x as i64 + dx;
                let ny = last.y as i64 + dy;
                if nx < 1 || ny < 1 || nx >= (NAV_GRID - 1) as i64 || ny >= (NAV_GRID - 1) as i64 {
                    ok = false;
                    break;
                }
                path.push(Cell::new(nx as u32, ny as u32));
            }
            if !ok {
                break;
            }
        }
        if !ok || !corridor_is_clean(&path) {
            continue;
        }
        let mut grid = Grid::filled(NAV_GRID, NAV_GRID);
        for c in &path {
            grid.set_wall(*c, false);
        }
        let goal = *path.last().expect("path non-empty");
        let task = GridTask {
            grid,
            start,
            goal,
            required_steps: segments,
            category: Category::Navigation,
            tokens: vec![],
            token_row: 0,
            token_values: vec![],
        };
        debug_assert!(task.validate().is_ok());
        return task;
    }
}

fn perpendicular(dir: Direction) -> [Direction; 2] {
    match dir {
        Direction::Up | Direction::Down => [Direction::Left, Direction::Right],
        Direction::Left | Direction::Right => [Direction::Up, Direction::Down],
    }
}

/// No revisits and no orthogonal contact between non-consecutive cells,
/// which would open a shortcut through the corridor.
fn corridor_is_clean(path: &[Cell]) -> bool {
    for (i, a) in path.iter().enumerate() {
        for (j, b) in path.iter().enumerate().skip(i + 1) {
            if a == b {
                return false;
            }
            if j > i + 1 && a.manhattan(*b) == 1 {
                return false;
            }
        }
    }
    true
}

fn mark_task(rng: &mut ChaCha8Rng) -> GridTask {
    let count = rng.gen_range(3..=5usize);
    let mut tokens: Vec<Cell> = Vec::new();
    while tokens.len() < count {
        let c = Cell::new(rng.gen_range(1..BOARD_GRID - 1), rng.gen_range(1..BOARD_GRID - 1));
        if !tokens.contains(&c) {
            tokens.push(c);
        }
    }
    let target = tokens[rng.gen_range(0..tokens.len())];
    GridTask {
        grid: Grid::open(BOARD_GRID, BOARD_GRID),
        start: target,
        goal: target,
        required_steps: 1,
        category: Category::MarkTarget,
        tokens,
        token_row: 0,
        token_values: vec![],
    }
}

/// Sorted row with exactly one adjacent inversion, so a single swap solves
/// it.
fn sort_task(rng: &mut ChaCha8Rng) -> GridTask {
    let count = rng.gen_range(4..=5usize);
    let mut values: Vec<f64> = palette::SORT_VALUES[..count].to_vec();
    let i = rng.gen_range(0..count - 1);
    values.swap(i, i + 1);
    GridTask {
        grid: Grid::open(BOARD_GRID, 3),
        start: Cell::new(0, 0),
        goal: Cell::new(0, 0),
        required_steps: 1,
        category: Category::SortTokens,
        tokens: vec![],
        token_row: 1,
        token_values: values,
    }
}

/// The task's goal prompt.
pub fn task_prompt(task: &GridTask) -> String {
    match task.category {
        Category::Navigation => {
            format!("Move the agent to the goal at ({}, {}).", task.goal.x, task.goal.y)
        }
        Category::MarkTarget => {
            format!("Mark the token at ({}, {}).", task.goal.x, task.goal.y)
        }
        Category::SortTokens => {
            let i = first_inversion(&task.token_values).unwrap_or(0);
            format!(
                "Swap the tokens at positions {} and {} to sort the row in ascending order.",
                i,
                i + 1
            )
        }
    }
}

pub(super) fn first_inversion(values: &[f64]) -> Option<usize> {
    values.windows(2).position(|w| w[0] > w[1])
}

/// The frame the task starts from.
pub fn initial_frame(task: &GridTask) -> Frame {
    let state = match task.category {
        Category::Navigation => WorldState::Nav { agent: task.start },
        Category::MarkTarget => WorldState::Mark { marked: vec![] },
        Category::SortTokens => WorldState::Sort { values: task.token_values.clone() },
    };
    render(task, &state)
}

/// Header line of a task-set file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TaskSetHeader {
    pub kind: String,
    pub count: u32,
    pub seed: u64,
    pub mix: NMix,
    pub faults: FaultConfig,
}

/// One task-set line: the task plus its run identity.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub rng_seed: u64,
    #[serde(flatten)]
    pub task: GridTask,
}

/// Generate `count` tasks at the declared mix. Difficulty counts are
/// stratified (largest-remainder rounding) and then shuffled, so empirical
/// shares match the mix up to rounding while order stays seed-random.
pub fn generate_task_set(
    seed: u64,
    count: u32,
    mix: NMix,
    faults: FaultConfig,
) -> Result<(TaskSetHeader, Vec<TaskRecord>), ContractViolation> {
    mix.validate()?;
    faults.validate()?;
    let shares = [mix.n1, mix.n2, mix.n3];
    let mut counts = [0usize; 3];
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0usize;
    for (i, share) in shares.iter().enumerate() {
        let exact = share * count as f64;
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        remainders.push((i, exact - exact.floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in remainders.iter().cycle().take(count as usize - assigned) {
        counts[*i] += 1;
    }

    let mut difficulties = Vec::with_capacity(count as usize);
    difficulties.extend(std::iter::repeat_n(Difficulty::N1, counts[0]));
    difficulties.extend(std::iter::repeat_n(Difficulty::N2, counts[1]));
    difficulties.extend(std::iter::repeat_n(Difficulty::N3, counts[2]));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    difficulties.shuffle(&mut rng);

    let records = difficulties
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let task_seed = derive_seed(seed, 1000 + i as u64);
            TaskRecord {
                task_id: format!("task{i:05}"),
                rng_seed: task_seed,
                task: generate_task(task_seed, d),
            }
        })
        .collect();
    Ok((TaskSetHeader { kind: "task_set".into(), count, seed, mix, faults }, records))
}

pub fn write_task_set<W: Write>(
    mut w: W,
    header: &TaskSetHeader,
    records: &[TaskRecord],
) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_task_set<R: BufRead>(r: R) -> Result<(TaskSetHeader, Vec<TaskRecord>), ContractViolation> {
    let mut lines = r.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| ContractViolation("task-set file is empty".into()))?
        .map_err(|e| ContractViolation(format!("task-set read: {e}")))?;
    let header: TaskSetHeader = serde_json::from_str(&header_line)
        .map_err(|e| ContractViolation(format!("bad task-set header: {e}")))?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| ContractViolation(format!("task-set read: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TaskRecord = serde_json::from_str(&line)
            .map_err(|e| ContractViolation(format!("bad task record at line {}: {e}", i + 2)))?;
        records.push(rec);
    }
    Ok((header, records))
}

/// Materialize the loop-facing task for a record.
pub fn task_from_record(rec: &TaskRecord, n_max: u32, m_budget: u32) -> Task {
    Task {
        task_id: rec.task_id.clone(),
        input_frame: initial_frame(&rec.task),
        prompt: task_prompt(&rec.task),
        n_max,
        m_budget,
        rng_seed: rec.rng_seed,
    }
}
