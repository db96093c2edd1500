//! A deterministic grid world that plays every backend role with seeded
//! fault injection, plus a rule-based judge-free scorer.
//!
//! The world renders to the same single-channel frames the loop passes
//! around, so the whole closed loop runs against it at desk scale: the
//! generator executes a compiled action command cell by cell (optionally
//! injecting a seeded deviation and recording its ground truth on the clip),
//! the planner decomposes a shortest path into straight segments from the
//! realized agent position, and the verifier judges clips exactly from the
//! recorded deviation metadata.

mod dynamics;
mod gen;
mod grid;
mod oracle;

pub use dynamics::{
    fault_draw_for, parse_action, sim_generate, FaultDraw, ParsedPrompt, CORRECTION_DAMPING,
};
pub use gen::{
    generate_task, generate_task_set, initial_frame, read_task_set, task_from_record, task_prompt,
    write_task_set, TaskRecord, TaskSetHeader,
};
pub use grid::{bfs_path, straight_segments, Cell, Direction, Grid, WorldState};
pub use oracle::{
    rule_score, score_by_category, SimBackends, SimCritic, SimGenerator, SimPlanner, SimRouter,
    SimSelector, SimVerifier,
};

use serde::{Deserialize, Serialize};

use crate::types::ContractViolation;

/// Render intensities. One grid cell maps to one pixel at the default
/// block size, so frame equality and SSIM operate directly on world state.
pub mod palette {
    pub const FREE: f64 = 0.0;
    pub const WALL: f64 = 0.6;
    pub const GOAL: f64 = 0.9;
    pub const AGENT: f64 = 1.0;
    pub const TOKEN: f64 = 0.45;
    pub const MARKED: f64 = 0.8;
    /// Sort-task token intensities by rank; at most this many tokens.
    pub const SORT_VALUES: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Navigation,
    MarkTarget,
    SortTokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    N1,
    N2,
    N3,
}

impl Difficulty {
    pub fn steps(self) -> u32 {
        match self {
            Difficulty::N1 => 1,
            Difficulty::N2 => 2,
            Difficulty::N3 => 3,
        }
    }
}

/// One benchmark task instance.
///
/// `goal` doubles as the mark target for mark tasks; sort tasks carry their
/// token row and current values instead and ignore start/goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTask {
    pub grid: Grid,
    pub start: Cell,
    pub goal: Cell,
    pub required_steps: u32,
    pub category: Category,
    /// Mark tasks: every token cell, target included.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<Cell>,
    /// Sort tasks: the row holding the tokens.
    #[serde(default)]
    pub token_row: u32,
    /// Sort tasks: current token intensities left to right.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub token_values: Vec<f64>,
}

impl GridTask {
    pub fn validate(&self) -> Result<(), ContractViolation> {
        if self.required_steps < 1 {
            return Err(ContractViolation("required_steps must be >= 1".into()));
        }
        match self.category {
            Category::Navigation => {
                if self.start == self.goal {
                    return Err(ContractViolation("navigation start must differ from goal".into()));
                }
                let path = bfs_path(&self.grid, self.start, self.goal).ok_or_else(|| {
                    ContractViolation("navigation task has no path from start to goal".into())
                })?;
                let segments = straight_segments(&path);
                if segments as u32 != self.required_steps {
                    return Err(ContractViolation(format!(
                        "required_steps {} does not match the {} straight segments of the path",
                        self.required_steps, segments
                    )));
                }
            }
            Category::MarkTarget => {
                if !self.tokens.contains(&self.goal) {
                    return Err(ContractViolation("mark target must be one of the tokens".into()));
                }
            }
            Category::SortTokens => {
                if self.token_values.len() < 2 {
                    return Err(ContractViolation("sort task needs at least two tokens".into()));
                }
            }
        }
        Ok(())
    }
}

/// Seeded deviation probabilities for the simulated generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    pub p_wrong_direction: f64,
    pub p_early_stop: f64,
    pub p_wrong_target: f64,
    pub rng_seed: u64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        Self { p_wrong_direction: 0.0, p_early_stop: 0.0, p_wrong_target: 0.0, rng_seed: 0 }
    }
}

impl FaultConfig {
    pub fn validate(&self) -> Result<(), ContractViolation> {
        for (name, p) in [
            ("p_wrong_direction", self.p_wrong_direction),
            ("p_early_stop", self.p_early_stop),
            ("p_wrong_target", self.p_wrong_target),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ContractViolation(format!("{name} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Mini action language the planner instructions compile to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    pub count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Cell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Move,
    Mark,
    Swap,
}

/// Share of tasks per step-count bucket in a generated set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NMix {
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
}

impl NMix {
    /// Multi-step-heavy profile.
    pub fn multi_step_heavy() -> Self {
        Self { n1: 0.167, n2: 0.111, n3: 0.722 }
    }

    /// Single-step-heavy profile.
    pub fn single_step_heavy() -> Self {
        Self { n1: 0.698, n2: 0.128, n3: 0.174 }
    }

    pub fn validate(&self) -> Result<(), ContractViolation> {
        let sum = self.n1 + self.n2 + self.n3;
        if !(self.n1 >= 0.0 && self.n2 >= 0.0 && self.n3 >= 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(ContractViolation(format!("mix shares must be >= 0 and sum to 1, got {sum}")));
        }
        Ok(())
    }
}

pub use crate::seeding::{derive_seed, mix64};
