//! Exact optimal-action sets for every environment state, and the three
//! context interventions built on top of them.

pub mod context;
pub mod grid;
pub mod list;
pub mod render;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::ActionCall;
use crate::envs::{EnvState, WorldState};

pub use context::{build_context, intervention_text, InterventionText, Message, Role};
pub use grid::{cost_to_goal, grid_min_cost};
pub use list::list_solvable;
pub use render::{render_plan_hint, render_state_summary};
pub use tree::TreeMode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("state can no longer reach the goal")]
    UnsolvableState,
    #[error("remaining budget {remaining} is below the minimum cost {needed}")]
    BudgetInfeasible { needed: u32, remaining: u32 },
    #[error("episode is over")]
    Terminal,
}

/// Actions consistent with at least one optimal policy from the current state.
///
/// Ordered: the first entry is the canonical choice used for plan hints and
/// by the scripted oracle follower.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OptimalActionSet {
    pub actions: Vec<ActionCall>,
}

impl OptimalActionSet {
    pub fn new(actions: Vec<ActionCall>) -> Self {
        Self { actions }
    }

    pub fn contains(&self, action: &ActionCall) -> bool {
        self.actions.contains(action)
    }

    pub fn canonical(&self) -> Option<&ActionCall> {
        self.actions.first()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Knobs that change oracle output. Runs record them in their spec file so
/// offline re-scoring can use the same definitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    pub tree_mode: TreeMode,
    /// Mention the ListWorld lock index in state summaries.
    pub list_show_lock: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            tree_mode: TreeMode::Exploration,
            list_show_lock: true,
        }
    }
}

pub fn optimal_actions(
    state: &EnvState,
    options: &OracleOptions,
) -> Result<OptimalActionSet, OracleError> {
    if state.terminal {
        return Err(OracleError::Terminal);
    }
    match &state.world {
        WorldState::List(s) => list::optimal_actions(s),
        WorldState::Tree(s) => tree::optimal_actions(s, options.tree_mode),
        WorldState::Grid(s) => grid::optimal_actions(s),
    }
}
