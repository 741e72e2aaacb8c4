use super::{OptimalActionSet, OracleError};
use crate::action::{ActionCall, Scalar};
use crate::envs::ListState;

/// True iff the target is still reachable by left-to-right pops: the locked
/// prefix already matches and the rest of the target is a subsequence of the
/// unlocked suffix.
pub fn list_solvable(state: &ListState) -> bool {
    let lock = state.lock;
    if lock > state.target.len() || lock > state.current.len() {
        return false;
    }
    if state.current[..lock] != state.target[..lock] {
        return false;
    }
    is_subsequence(&state.target[lock..], &state.current[lock..])
}

fn is_subsequence(needle: &[String], haystack: &[String]) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// `{done}` at the target, else every pop that keeps the task solvable, by
/// increasing index. Each pop removes exactly one of the
/// `len(current) - len(target)` surplus elements, so all of them are optimal.
pub fn optimal_actions(state: &ListState) -> Result<OptimalActionSet, OracleError> {
    if !list_solvable(state) {
        return Err(OracleError::UnsolvableState);
    }
    if state.at_target() {
        return Ok(OptimalActionSet::new(vec![ActionCall::new("done")]));
    }
    let mut actions = Vec::new();
    let mut probe = state.clone();
    for i in state.lock..state.current.len() {
        probe.current.clone_from(&state.current);
        probe.current.remove(i);
        probe.lock = i;
        if list_solvable(&probe) {
            actions.push(ActionCall::new("pop").with_arg("id", Scalar::Int(i as i64)));
        }
    }
    Ok(OptimalActionSet::new(actions))
}
