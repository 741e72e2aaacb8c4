use serde::{Deserialize, Serialize};

use super::{OptimalActionSet, OracleError};
use crate::action::{ActionCall, Scalar};
use crate::envs::TreeState;

/// Which expansions count as optimal when the target is not yet revealed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeMode {
    /// Any frontier expansion.
    #[default]
    Exploration,
    /// Only the expansion that reveals the next node on the true root-to-target path.
    Hindsight,
}

fn expand(id: &str) -> ActionCall {
    ActionCall::new("get_children").with_arg("id", Scalar::Str(id.to_string()))
}

/// The frontier node whose expansion reveals the next on-path node: the
/// deepest revealed node on the root-to-target path.
pub fn on_path_frontier(state: &TreeState) -> Option<&str> {
    let path = state.tree.target_path()?;
    let deepest = path.iter().rposition(|id| state.revealed.contains(id))?;
    if deepest + 1 == path.len() {
        return None;
    }
    let id = &path[deepest];
    (!state.expanded.contains(id)).then(|| state.tree.nodes.get_key_value(id).unwrap().0.as_str())
}

/// Optimal actions for a non-terminal tree state. The first entry is the
/// canonical choice: the on-path expansion when one exists, otherwise the
/// earliest discovered frontier node.
pub fn optimal_actions(state: &TreeState, mode: TreeMode) -> Result<OptimalActionSet, OracleError> {
    if let Some(target) = state.target_revealed() {
        let found = ActionCall::new("found").with_arg("id", Scalar::Str(target.to_string()));
        return Ok(OptimalActionSet::new(vec![found]));
    }
    let frontier = state.frontier();
    if frontier.is_empty() {
        if state.tree.target_id.is_none() {
            return Ok(OptimalActionSet::new(vec![ActionCall::new("unreachable")]));
        }
        return Err(OracleError::UnsolvableState);
    }
    let on_path = on_path_frontier(state);
    let actions = match (mode, on_path) {
        (TreeMode::Hindsight, Some(id)) => vec![expand(id)],
        (_, Some(id)) => std::iter::once(id)
            .chain(frontier.iter().copied().filter(|f| *f != id))
            .map(expand)
            .collect(),
        (_, None) => frontier.into_iter().map(expand).collect(),
    };
    Ok(OptimalActionSet::new(actions))
}
