use std::collections::BTreeSet;

use rand::Rng;

use super::{StepError, StepResult};
use crate::action::ActionCall;
use crate::oracle::grid::{cost_to_goal, entry_cost};
use crate::task::{Cell, GridWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    /// Tie-break precedence for canonical choices.
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == name)
    }

    pub fn action(&self) -> ActionCall {
        ActionCall::new(self.name())
    }

    /// Neighbor of `cell` in this direction, or `None` off the board.
    pub fn apply(&self, cell: Cell, size: usize) -> Option<Cell> {
        let Cell { row, col } = cell;
        let next = match self {
            Direction::Up => Cell::new(row.checked_sub(1)?, col),
            Direction::Down => Cell::new(row + 1, col),
            Direction::Left => Cell::new(row, col.checked_sub(1)?),
            Direction::Right => Cell::new(row, col + 1),
        };
        (next.row < size && next.col < size).then_some(next)
    }
}

/// Board layout without the agent's position; what the cost oracle needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridGeometry {
    pub size: usize,
    pub holes: BTreeSet<Cell>,
}

impl GridGeometry {
    pub fn new(size: usize, holes: impl IntoIterator<Item = Cell>) -> Self {
        Self {
            size,
            holes: holes.into_iter().collect(),
        }
    }

    pub fn is_hole(&self, cell: Cell) -> bool {
        self.holes.contains(&cell)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.size).flat_map(move |r| (0..self.size).map(move |c| Cell::new(r, c)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridState {
    pub geometry: GridGeometry,
    pub start: Cell,
    pub position: Cell,
    pub goal: Cell,
    pub cost_used: u32,
    pub max_moves: u32,
}

impl GridState {
    pub fn new(world: &GridWorld) -> Self {
        Self {
            geometry: GridGeometry::new(world.size, world.holes.iter().copied()),
            start: world.start,
            position: world.start,
            goal: world.goal,
            cost_used: 0,
            max_moves: world.max_moves,
        }
    }

    pub fn remaining(&self) -> u32 {
        self.max_moves - self.cost_used
    }
}

/// Builds a world around a fixed layout: budget is the min cost plus `budget_slack`.
pub fn with_layout(
    size: usize,
    start: Cell,
    goal: Cell,
    holes: impl IntoIterator<Item = Cell>,
    budget_slack: u32,
) -> GridWorld {
    let geometry = GridGeometry::new(size, holes);
    let to_goal = cost_to_goal(&geometry, goal);
    let min_cost = to_goal[start.row][start.col].cost;
    GridWorld {
        size,
        start,
        goal,
        holes: geometry.holes.into_iter().collect(),
        max_moves: min_cost + budget_slack,
    }
}

/// Random board with each non-start, non-goal cell a hole with probability `hole_density`.
///
/// Holes are passable at a penalty, so every board is solvable within its budget.
pub fn generate(
    size: usize,
    hole_density: f64,
    budget_slack: u32,
    rng: &mut impl Rng,
) -> GridWorld {
    assert!(size >= 2);
    let cells = size * size;
    let start_ix = rng.gen_range(0..cells);
    let goal_ix = loop {
        let g = rng.gen_range(0..cells);
        if g != start_ix {
            break g;
        }
    };
    let at = |i: usize| Cell::new(i / size, i % size);
    let density = hole_density.clamp(0.0, 1.0);
    let holes: Vec<Cell> = (0..cells)
        .filter(|&i| {
            let roll = rng.gen_bool(density);
            roll && i != start_ix && i != goal_ix
        })
        .map(at)
        .collect();
    with_layout(size, at(start_ix), at(goal_ix), holes, budget_slack)
}

/// Moves on a min-cost path, counting the final `done()`.
pub fn optimal_steps(world: &GridWorld) -> u32 {
    let geometry = GridGeometry::new(world.size, world.holes.iter().copied());
    cost_to_goal(&geometry, world.goal)[world.start.row][world.start.col].steps + 1
}

pub fn step(state: &GridState, action: &ActionCall) -> (GridState, StepResult) {
    if let Some(dir) = Direction::from_name(&action.name) {
        if !action.args.is_empty() {
            return (
                state.clone(),
                StepResult::error(
                    StepError::InvalidArguments,
                    format!("Error: {}() takes no arguments.", dir.name()),
                ),
            );
        }
        let Some(dest) = dir.apply(state.position, state.geometry.size) else {
            return (
                state.clone(),
                StepResult::error(
                    StepError::OffGrid,
                    format!(
                        "Error: cannot move {} from {}. You must stay within the grid boundaries. Position: {}. Remaining moves: {}",
                        dir.name(),
                        state.position,
                        state.position,
                        state.remaining()
                    ),
                ),
            );
        };
        let cost = entry_cost(&state.geometry, dest);
        if state.cost_used + cost > state.max_moves {
            return (
                state.clone(),
                StepResult {
                    observation: format!(
                        "Move budget exceeded: moving {} costs {cost} but only {} moves remain. Game over.",
                        dir.name(),
                        state.remaining()
                    ),
                    terminal: true,
                    success: false,
                    error: Some(StepError::BudgetExceeded),
                },
            );
        }
        let mut next = state.clone();
        next.position = dest;
        next.cost_used += cost;
        let hole_note = if cost > 1 {
            " into a hole (penalty of 3 additional moves)"
        } else {
            ""
        };
        let obs = format!(
            "Moved {}{hole_note}. Position: {}. Remaining moves: {}",
            dir.name(),
            dest,
            next.remaining()
        );
        return (next, StepResult::ongoing(obs));
    }
    match action.name.as_str() {
        "done" => {
            if !action.args.is_empty() {
                return (
                    state.clone(),
                    StepResult::error(
                        StepError::InvalidArguments,
                        "Error: done() takes no arguments.",
                    ),
                );
            }
            let result = if state.position == state.goal && state.cost_used <= state.max_moves {
                StepResult::finished(true, "Goal reached. Game over.")
            } else {
                StepResult::finished(
                    false,
                    format!("Not at the goal (position {}). Game over.", state.position),
                )
            };
            (state.clone(), result)
        }
        other => (
            state.clone(),
            StepResult::unknown_action(other, &["up", "down", "left", "right", "done"]),
        ),
    }
}

pub fn legal_actions(state: &GridState) -> Vec<ActionCall> {
    let mut out: Vec<ActionCall> = Direction::ALL
        .into_iter()
        .filter(|d| d.apply(state.position, state.geometry.size).is_some())
        .map(|d| d.action())
        .collect();
    out.push(ActionCall::new("done"));
    out
}
