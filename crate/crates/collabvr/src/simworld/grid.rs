//! Grid geometry, frame rendering/decoding, and shortest-path machinery.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::types::{ContractViolation, Frame};

use super::palette;
use super::{Category, GridTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

pub const ALL_DIRECTIONS: [Direction; 4] =
    [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

impl Direction {
    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "up" => Some(Direction::Up),
            "down" => Some(Direction::Down),
            "left" => Some(Direction::Left),
            "right" => Some(Direction::Right),
            _ => None,
        }
    }

    /// The step from `a` to its orthogonal neighbor `b`.
    pub fn between(a: Cell, b: Cell) -> Option<Self> {
        let dx = b.x as i64 - a.x as i64;
        let dy = b.y as i64 - a.y as i64;
        match (dx, dy) {
            (0, -1) => Some(Direction::Up),
            (0, 1) => Some(Direction::Down),
            (-1, 0) => Some(Direction::Left),
            (1, 0) => Some(Direction::Right),
            _ => None,
        }
    }
}

/// Occupancy grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width: u32,
    pub height: u32,
    pub walls: Vec<bool>,
}

impl Grid {
    pub fn open(width: u32, height: u32) -> Self {
        Self { width, height, walls: vec![false; (width * height) as usize] }
    }

    pub fn filled(width: u32, height: u32) -> Self {
        Self { width, height, walls: vec![true; (width * height) as usize] }
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.walls[(cell.y * self.width + cell.x) as usize]
    }

    pub fn set_wall(&mut self, cell: Cell, wall: bool) {
        self.walls[(cell.y * self.width + cell.x) as usize] = wall;
    }

    /// Neighbor in `dir` if it stays on the grid, walls ignored.
    pub fn step_unchecked(&self, from: Cell, dir: Direction) -> Option<Cell> {
        let (dx, dy) = dir.delta();
        let (nx, ny) = (from.x as i64 + dx, from.y as i64 + dy);
        self.in_bounds(nx, ny).then(|| Cell::new(nx as u32, ny as u32))
    }

    /// Neighbor in `dir` if it stays on the grid and is free.
    pub fn step(&self, from: Cell, dir: Direction) -> Option<Cell> {
        self.step_unchecked(from, dir).filter(|c| !self.is_wall(*c))
    }
}

/// Shortest path including both endpoints, or None when unreachable. The
/// neighbor expansion order is fixed so the path is deterministic.
pub fn bfs_path(grid: &Grid, from: Cell, to: Cell) -> Option<Vec<Cell>> {
    if grid.is_wall(from) || grid.is_wall(to) {
        return None;
    }
    if from == to {
        return Some(vec![from]);
    }
    let idx = |c: Cell| (c.y * grid.width + c.x) as usize;
    let mut prev: Vec<Option<Cell>> = vec![None; (grid.width * grid.height) as usize];
    let mut seen = vec![false; prev.len()];
    let mut queue = VecDeque::new();
    seen[idx(from)] = true;
    queue.push_back(from);
    while let Some(cur) = queue.pop_front() {
        for dir in ALL_DIRECTIONS {
            if let Some(next) = grid.step(cur, dir) {
                if !seen[idx(next)] {
                    seen[idx(next)] = true;
                    prev[idx(next)] = Some(cur);
                    if next == to {
                        let mut path = vec![to];
                        let mut walk = cur;
                        loop {
                            path.push(walk);
                            match prev[idx(walk)] {
                                Some(p) => walk = p,
                                None => break,
                            }
                        }
                        path.reverse();
                        return Some(path);
                    }
                    queue.push_back(next);
                }
            }
        }
    }
    None
}

/// Number of maximal straight segments of a path (0 for a single cell).
pub fn straight_segments(path: &[Cell]) -> usize {
    if path.len() < 2 {
        return 0;
    }
    let mut segments = 1;
    let mut dir = Direction::between(path[0], path[1]).expect("path cells are adjacent");
    for pair in path.windows(2).skip(1) {
        let next = Direction::between(pair[0], pair[1]).expect("path cells are adjacent");
        if next != dir {
            segments += 1;
            dir = next;
        }
    }
    segments
}

/// First maximal straight run of a path: direction and cell count.
pub fn first_segment(path: &[Cell]) -> Option<(Direction, u32)> {
    if path.len() < 2 {
        return None;
    }
    let dir = Direction::between(path[0], path[1])?;
    let mut count = 1;
    for pair in path.windows(2).skip(1) {
        if Direction::between(pair[0], pair[1]) == Some(dir) {
            count += 1;
        } else {
            break;
        }
    }
    Some((dir, count))
}

/// Dynamic world state decoded from / rendered into a frame.
#[derive(Debug, Clone, PartialEq)]
pub enum WorldState {
    Nav { agent: Cell },
    Mark { marked: Vec<Cell> },
    Sort { values: Vec<f64> },
}

/// Render the static scenery plus a dynamic state into a frame.
pub fn render(task: &GridTask, state: &WorldState) -> Frame {
    let mut frame = Frame::constant(task.grid.width, task.grid.height, palette::FREE);
    for y in 0..task.grid.height {
        for x in 0..task.grid.width {
            if task.grid.is_wall(Cell::new(x, y)) {
                frame.set(x, y, palette::WALL);
            }
        }
    }
    match (task.category, state) {
        (Category::Navigation, WorldState::Nav { agent }) => {
            frame.set(task.goal.x, task.goal.y, palette::GOAL);
            frame.set(agent.x, agent.y, palette::AGENT);
        }
        (Category::MarkTarget, WorldState::Mark { marked }) => {
            for t in &task.tokens {
                frame.set(t.x, t.y, palette::TOKEN);
            }
            for m in marked {
                frame.set(m.x, m.y, palette::MARKED);
            }
        }
        (Category::SortTokens, WorldState::Sort { values }) => {
            for (i, v) in values.iter().enumerate() {
                frame.set(token_col(task, i), task.token_row, *v);
            }
        }
        _ => unreachable!("state variant must match task category"),
    }
    frame
}

/// Column of the i-th sort token, centered on the row.
pub fn token_col(task: &GridTask, i: usize) -> u32 {
    let k = task.token_values.len() as u32;
    let left = (task.grid.width - k) / 2;
    left + i as u32
}

/// Recover the dynamic state from a frame.
pub fn decode(task: &GridTask, frame: &Frame) -> Result<WorldState, ContractViolation> {
    if frame.width != task.grid.width || frame.height != task.grid.height {
        return Err(ContractViolation(format!(
            "frame {}x{} does not match grid {}x{}",
            frame.width, frame.height, task.grid.width, task.grid.height
        )));
    }
    match task.category {
        Category::Navigation => {
            for y in 0..frame.height {
                for x in 0..frame.width {
                    if frame.get(x, y) == palette::AGENT {
                        return Ok(WorldState::Nav { agent: Cell::new(x, y) });
                    }
                }
            }
            Err(ContractViolation("no agent pixel in frame".into()))
        }
        Category::MarkTarget => {
            let marked = task
                .tokens
                .iter()
                .copied()
                .filter(|t| frame.get(t.x, t.y) == palette::MARKED)
                .collect();
            Ok(WorldState::Mark { marked })
        }
        Category::SortTokens => {
            let values = (0..task.token_values.len())
                .map(|i| frame.get(token_col(task, i), task.token_row))
                .collect();
            Ok(WorldState::Sort { values })
        }
    }
}

/// Whether a frame shows the task's goal condition satisfied.
pub fn goal_reached(task: &GridTask, frame: &Frame) -> bool {
    match decode(task, frame) {
        Ok(WorldState::Nav { agent }) => agent == task.goal,
        Ok(WorldState::Mark { marked }) => marked == vec![task.goal],
        Ok(WorldState::Sort { values }) => {
            values.windows(2).all(|w| w[0] <= w[1])
                && values.iter().all(|v| task.token_values.contains(v))
        }
        Err(_) => false,
    }
}
