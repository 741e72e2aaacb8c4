use std::collections::BTreeMap;
use std::sync::Arc;

use indexmap::IndexSet;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{StepError, StepResult};
use crate::action::{ActionCall, Scalar};
use crate::task::{TreeNode, TreeWorld};

/// Agent-visible knowledge over a fixed ground-truth tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeState {
    pub tree: Arc<TreeWorld>,
    /// Ids whose value the agent knows, in discovery order.
    pub revealed: IndexSet<String>,
    /// Ids whose children the agent has been shown.
    pub expanded: IndexSet<String>,
}

impl TreeState {
    pub fn new(world: &TreeWorld) -> Self {
        Self {
            tree: Arc::new(world.clone()),
            revealed: world.revealed.iter().cloned().collect(),
            expanded: world.expanded.iter().cloned().collect(),
        }
    }

    pub fn value(&self, id: &str) -> Option<i64> {
        self.tree.nodes.get(id).map(|n| n.value)
    }

    /// Revealed nodes whose children are still unknown, in discovery order.
    pub fn frontier(&self) -> Vec<&str> {
        self.revealed
            .iter()
            .filter(|id| !self.expanded.contains(*id))
            .map(String::as_str)
            .collect()
    }

    pub fn target_revealed(&self) -> Option<&str> {
        self.tree
            .target_id
            .as_deref()
            .filter(|id| self.revealed.contains(*id))
    }
}

/// Builds a random rooted tree with at most `branching` children per node.
///
/// With probability `unreachable_rate` the target value is one that no node
/// carries; otherwise it is the value of a random leaf.
pub fn generate(
    branching: usize,
    num_nodes: usize,
    reveal_fraction: f64,
    unreachable_rate: f64,
    rng: &mut impl Rng,
) -> TreeWorld {
    assert!(num_nodes >= 1 && branching >= 2);
    let id_space = (10 * num_nodes).max(50);
    let ids: Vec<String> = sample(rng, id_space, num_nodes)
        .into_iter()
        .map(|k| format!("n{k}"))
        .collect();
    let value_space = (10 * num_nodes).max(100);
    let values: Vec<i64> = sample(rng, value_space, num_nodes + 1)
        .into_iter()
        .map(|v| v as i64 + 1)
        .collect();

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
    let mut open: Vec<usize> = vec![0];
    for k in 1..num_nodes {
        let slot = rng.gen_range(0..open.len());
        let parent = open[slot];
        children[parent].push(k);
        if children[parent].len() == branching {
            open.swap_remove(slot);
        }
        open.push(k);
    }

    let nodes: BTreeMap<String, TreeNode> = (0..num_nodes)
        .map(|k| {
            (
                ids[k].clone(),
                TreeNode {
                    value: values[k],
                    children: children[k].iter().map(|&c| ids[c].clone()).collect(),
                },
            )
        })
        .collect();

    let unreachable = rng.gen_bool(unreachable_rate.clamp(0.0, 1.0));
    let (target_value, target_id) = if unreachable {
        (values[num_nodes], None)
    } else {
        let leaves: Vec<usize> = (0..num_nodes).filter(|&k| children[k].is_empty()).collect();
        let leaf = *leaves.choose(rng).expect("a tree has at least one leaf");
        (values[leaf], Some(ids[leaf].clone()))
    };

    // Initial knowledge is an explored subtree: expanded nodes form a
    // connected set from the root and every child of an expanded node is
    // revealed. The target's parent is never pre-expanded.
    let target_parent = target_id
        .as_ref()
        .and_then(|t| (0..num_nodes).find(|&k| children[k].iter().any(|&c| &ids[c] == t)));
    let mut revealed = vec![ids[0].clone()];
    let mut expanded = Vec::new();
    let wanted = 1 + ((num_nodes - 1) as f64 * reveal_fraction.clamp(0.0, 1.0)).round() as usize;
    let mut frontier: Vec<usize> = vec![0];
    while revealed.len() < wanted {
        let candidates: Vec<usize> = frontier
            .iter()
            .copied()
            .filter(|&k| !children[k].is_empty() && Some(k) != target_parent)
            .collect();
        let Some(&pick) = candidates.choose(rng) else {
            break;
        };
        frontier.retain(|&k| k != pick);
        expanded.push(ids[pick].clone());
        for &c in &children[pick] {
            revealed.push(ids[c].clone());
            frontier.push(c);
        }
    }

    TreeWorld {
        root: ids[0].clone(),
        nodes,
        target_value,
        target_id,
        revealed,
        expanded,
    }
}

/// Actions an optimal policy needs, counting the terminating call.
pub fn optimal_steps(world: &TreeWorld) -> u32 {
    let revealed: IndexSet<&str> = world.revealed.iter().map(String::as_str).collect();
    match world.target_path() {
        Some(path) => {
            let deepest = path
                .iter()
                .rposition(|id| revealed.contains(id.as_str()))
                .expect("root is always revealed");
            (path.len() - 1 - deepest) as u32 + 1
        }
        None => (world.nodes.len() - world.expanded.len()) as u32 + 1,
    }
}

/// Renders children as the list of `{"id", "val"}` objects the tool returns.
pub fn render_children(state: &TreeState, id: &str) -> String {
    let items: Vec<String> = state.tree.nodes[id]
        .children
        .iter()
        .map(|c| {
            format!(
                "{{\"id\": \"{c}\", \"val\": {}}}",
                state.tree.nodes[c].value
            )
        })
        .collect();
    format!("[{}]", items.join(", "))
}

pub fn step(state: &TreeState, action: &ActionCall) -> (TreeState, StepResult) {
    let id_arg = || match (action.args.len(), action.arg("id")) {
        (1, Some(Scalar::Str(s))) => Some(s.clone()),
        (1, Some(Scalar::Int(i))) => Some(i.to_string()),
        _ => None,
    };
    match action.name.as_str() {
        "get_children" => {
            let Some(id) = id_arg() else {
                return invalid(state, "get_children expects a single string argument 'id'.");
            };
            if !state.revealed.contains(&id) || !state.tree.nodes.contains_key(&id) {
                return (
                    state.clone(),
                    StepResult::error(
                        StepError::UnknownNodeId,
                        format!("Error: node '{id}' is not known. Only nodes whose id you have seen can be queried."),
                    ),
                );
            }
            let mut next = state.clone();
            next.expanded.insert(id.clone());
            for child in &state.tree.nodes[&id].children {
                next.revealed.insert(child.clone());
            }
            let obs = render_children(state, &id);
            (next, StepResult::ongoing(obs))
        }
        "found" => {
            let Some(id) = id_arg() else {
                return invalid(state, "found expects a single string argument 'id'.");
            };
            let result = if state.value(&id) == Some(state.tree.target_value) {
                StepResult::finished(true, format!("Correct. Node '{id}' has the target value."))
            } else {
                StepResult::finished(
                    false,
                    format!("Incorrect. Node '{id}' does not have the target value."),
                )
            };
            (state.clone(), result)
        }
        "unreachable" => {
            if !action.args.is_empty() {
                return invalid(state, "unreachable takes no arguments.");
            }
            let result = if state.tree.target_id.is_none() {
                StepResult::finished(true, "Correct. The target value is not in the tree.")
            } else {
                StepResult::finished(false, "Incorrect. The target value was reachable.")
            };
            (state.clone(), result)
        }
        other => (
            state.clone(),
            StepResult::unknown_action(other, &["get_children", "found", "unreachable"]),
        ),
    }
}

fn invalid(state: &TreeState, msg: &str) -> (TreeState, StepResult) {
    (
        state.clone(),
        StepResult::error(StepError::InvalidArguments, format!("Error: {msg}")),
    )
}

pub fn legal_actions(state: &TreeState) -> Vec<ActionCall> {
    let id = |s: &String| Scalar::Str(s.clone());
    let mut out: Vec<ActionCall> = state
        .revealed
        .iter()
        .map(|s| ActionCall::new("get_children").with_arg("id", id(s)))
        .collect();
    out.extend(
        state
            .revealed
            .iter()
            .map(|s| ActionCall::new("found").with_arg("id", id(s))),
    );
    out.push(ActionCall::new("unreachable"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::seeded_rng;

    fn get_children(id: &str) -> ActionCall {
        ActionCall::new("get_children").with_arg("id", Scalar::Str(id.into()))
    }

    fn small() -> TreeWorld {
        let node = |value, children: &[&str]| TreeNode {
            value,
            children: children.iter().map(|c| c.to_string()).collect(),
        };
        TreeWorld {
            root: "n5".into(),
            nodes: [
                ("n5".to_string(), node(12, &["n2", "n8"])),
                ("n2".to_string(), node(40, &[])),
                ("n8".to_string(), node(7, &["n1"])),
                ("n1".to_string(), node(23, &[])),
            ]
            .into_iter()
            .collect(),
            target_value: 23,
            target_id: Some("n1".into()),
            revealed: vec!["n5".into()],
            expanded: vec![],
        }
    }

    #[test]
    fn expanding_root_reveals_children() {
        let s = TreeState::new(&small());
        let (next, r) = step(&s, &get_children("n5"));
        assert_eq!(
            r.observation,
            r#"[{"id": "n2", "val": 40}, {"id": "n8", "val": 7}]"#
        );
        assert_eq!(next.frontier(), vec!["n2", "n8"]);
        assert!(next.expanded.contains("n5"));
    }

    #[test]
    fn re_expanding_is_idempotent() {
        let s = TreeState::new(&small());
        let (once, r1) = step(&s, &get_children("n5"));
        let (twice, r2) = step(&once, &get_children("n5"));
        assert_eq!(once, twice);
        assert_eq!(r1.observation, r2.observation);
    }

    #[test]
    fn unknown_ids_are_rejected() {
        let s = TreeState::new(&small());
        // n8 exists but has not been revealed yet.
        for id in ["n8", "zz"] {
            let (next, r) = step(&s, &get_children(id));
            assert_eq!(next, s);
            assert_eq!(r.error, Some(StepError::UnknownNodeId));
        }
    }

    #[test]
    fn found_and_unreachable_terminate() {
        let s = TreeState::new(&small());
        let (_, r) = step(
            &s,
            &ActionCall::new("found").with_arg("id", Scalar::Str("n1".into())),
        );
        assert!(r.terminal && r.success);
        let (_, r) = step(
            &s,
            &ActionCall::new("found").with_arg("id", Scalar::Str("n2".into())),
        );
        assert!(r.terminal && !r.success);
        let (_, r) = step(&s, &ActionCall::new("unreachable"));
        assert!(r.terminal && !r.success);

        let mut w = small();
        w.target_id = None;
        w.target_value = 99;
        let (_, r) = step(&TreeState::new(&w), &ActionCall::new("unreachable"));
        assert!(r.terminal && r.success);
    }

    #[test]
    fn degenerate_single_node() {
        let w = generate(2, 1, 0.0, 0.0, &mut seeded_rng(1, "gen"));
        assert_eq!(w.nodes.len(), 1);
        assert_eq!(w.target_id.as_deref(), Some(w.root.as_str()));
        assert_eq!(w.target_value, w.nodes[&w.root].value);
        assert_eq!(optimal_steps(&w), 1);
    }

    #[test]
    fn generated_trees_respect_shape() {
        for seed in 0..50 {
            let w = generate(3, 12, 0.0, 0.0, &mut seeded_rng(seed, "gen"));
            assert_eq!(w.nodes.len(), 12);
            let mut values: Vec<i64> = w.nodes.values().map(|n| n.value).collect();
            values.sort();
            values.dedup();
            assert_eq!(values.len(), 12);
            assert!(w.nodes.values().all(|n| n.children.len() <= 3));
            let child_count: usize = w.nodes.values().map(|n| n.children.len()).sum();
            assert_eq!(child_count, 11);
            let path = w.target_path().unwrap();
            assert!(w.nodes[path.last().unwrap()].children.is_empty());
            assert_eq!(optimal_steps(&w), path.len() as u32);
        }
    }

    #[test]
    fn binary_tree_of_seven() {
        let w = generate(2, 7, 0.0, 0.0, &mut seeded_rng(11, "gen"));
        assert_eq!(w.nodes.len(), 7);
        assert!(w.nodes.values().all(|n| n.children.len() <= 2));
        assert_eq!(w.revealed, vec![w.root.clone()]);
    }

    #[test]
    fn unreachable_rate_one_hides_target() {
        let w = generate(2, 9, 0.0, 1.0, &mut seeded_rng(2, "gen"));
        assert!(w.target_id.is_none());
        assert!(w.nodes.values().all(|n| n.value != w.target_value));
        assert_eq!(optimal_steps(&w), 10);
    }

    #[test]
    fn partial_reveal_keeps_invariants() {
        for seed in 0..50 {
            let w = generate(2, 15, 0.5, 0.0, &mut seeded_rng(seed, "gen"));
            assert_eq!(w.revealed[0], w.root);
            assert!(w.revealed.len() <= 9);
            let target = w.target_id.as_ref().unwrap();
            assert!(!w.revealed.contains(target));
            for e in &w.expanded {
                assert!(w.revealed.contains(e));
                assert!(w.nodes[e].children.iter().all(|c| w.revealed.contains(c)));
                let parent = w
                    .nodes
                    .iter()
                    .find(|(_, n)| n.children.contains(e))
                    .map(|(id, _)| id);
                assert!(parent.is_none_or(|p| w.expanded.contains(p)));
            }
            // Exactly one revealed, unexpanded node lies on the target path.
            let path = w.target_path().unwrap();
            let open = path
                .iter()
                .filter(|id| w.revealed.contains(id) && !w.expanded.contains(id))
                .count();
            assert_eq!(open, 1);
        }
    }
}
