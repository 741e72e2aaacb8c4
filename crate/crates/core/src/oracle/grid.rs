use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{OptimalActionSet, OracleError};
use crate::action::ActionCall;
use crate::envs::{Direction, GridGeometry, GridState};
use crate::task::Cell;

pub const MOVE_COST: u32 = 1;
pub const HOLE_PENALTY: u32 = 3;

/// Cost of stepping onto `cell`.
pub fn entry_cost(geometry: &GridGeometry, cell: Cell) -> u32 {
    if geometry.is_hole(cell) {
        MOVE_COST + HOLE_PENALTY
    } else {
        MOVE_COST
    }
}

/// Min cost to the goal and, among min-cost paths, the fewest moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct GoalDistance {
    pub cost: u32,
    pub steps: u32,
}

/// Single-source min-cost distances from `from`, indexed `[row][col]`.
pub fn grid_min_cost(geometry: &GridGeometry, from: Cell) -> Vec<Vec<u32>> {
    let n = geometry.size;
    let mut dist = vec![vec![u32::MAX; n]; n];
    let mut heap = BinaryHeap::new();
    dist[from.row][from.col] = 0;
    heap.push(Reverse((0u32, from)));
    while let Some(Reverse((d, cell))) = heap.pop() {
        if d > dist[cell.row][cell.col] {
            continue;
        }
        for dir in Direction::ALL {
            let Some(next) = dir.apply(cell, n) else {
                continue;
            };
            let nd = d + entry_cost(geometry, next);
            if nd < dist[next.row][next.col] {
                dist[next.row][next.col] = nd;
                heap.push(Reverse((nd, next)));
            }
        }
    }
    dist
}

/// Distances from every cell to `goal`. Edge costs depend on the entered
/// cell, so this runs on the reversed graph.
pub fn cost_to_goal(geometry: &GridGeometry, goal: Cell) -> Vec<Vec<GoalDistance>> {
    let n = geometry.size;
    let unreached = GoalDistance {
        cost: u32::MAX,
        steps: u32::MAX,
    };
    let mut dist = vec![vec![unreached; n]; n];
    let mut heap = BinaryHeap::new();
    let zero = GoalDistance { cost: 0, steps: 0 };
    dist[goal.row][goal.col] = zero;
    heap.push(Reverse((zero, goal)));
    while let Some(Reverse((d, cell))) = heap.pop() {
        if d > dist[cell.row][cell.col] {
            continue;
        }
        // Moving from `prev` onto `cell` costs entry_cost(cell).
        let step_cost = entry_cost(geometry, cell);
        for dir in Direction::ALL {
            let Some(prev) = dir.apply(cell, n) else {
                continue;
            };
            let nd = GoalDistance {
                cost: d.cost + step_cost,
                steps: d.steps + 1,
            };
            if nd < dist[prev.row][prev.col] {
                dist[prev.row][prev.col] = nd;
                heap.push(Reverse((nd, prev)));
            }
        }
    }
    dist
}

/// `{done}` at the goal, else every move onto a min-cost path. The first
/// entry is the canonical move: fewest remaining moves, then up, down, left, right.
pub fn optimal_actions(state: &GridState) -> Result<OptimalActionSet, OracleError> {
    let to_goal = cost_to_goal(&state.geometry, state.goal);
    let here = to_goal[state.position.row][state.position.col];
    if here.cost > state.remaining() {
        return Err(OracleError::BudgetInfeasible {
            needed: here.cost,
            remaining: state.remaining(),
        });
    }
    if state.position == state.goal {
        return Ok(OptimalActionSet::new(vec![ActionCall::new("done")]));
    }
    let mut moves: Vec<(u32, usize, Direction)> = Direction::ALL
        .into_iter()
        .enumerate()
        .filter_map(|(rank, dir)| {
            let next = dir.apply(state.position, state.geometry.size)?;
            let d = to_goal[next.row][next.col];
            (entry_cost(&state.geometry, next) + d.cost == here.cost)
                .then_some((d.steps, rank, dir))
        })
        .collect();
    moves.sort();
    Ok(OptimalActionSet::new(
        moves.into_iter().map(|(_, _, d)| d.action()).collect(),
    ))
}
