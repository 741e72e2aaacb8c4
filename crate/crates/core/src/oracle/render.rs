//! Natural-language renderings of the oracle's knowledge.

use super::{optimal_actions, OracleOptions};
use crate::action::Scalar;
use crate::envs::{Direction, EnvState, GridState, ListState, TreeState, WorldState};
use crate::template::{fill, intervention, prompt_template, TemplateError};

/// Python-style list of quoted strings: `['a', 'b']`.
pub fn python_list(items: &[String]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("'{s}'")).collect();
    format!("[{}]", quoted.join(", "))
}

/// One line per revealed node in discovery order:
/// `(id=n5, value=12) -> [n2, n8]` or `(id=n2, value=40) -> UNKNOWN`.
pub fn known_nodes(state: &TreeState) -> String {
    state
        .revealed
        .iter()
        .map(|id| {
            let value = state.tree.nodes[id].value;
            if state.expanded.contains(id) {
                let kids = state.tree.nodes[id].children.join(", ");
                format!("(id={id}, value={value}) -> [{kids}]")
            } else {
                format!("(id={id}, value={value}) -> UNKNOWN")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Task text for the environment with the given state taken as the starting
/// point. At reset this is the original task; later it is the rewritten task
/// used by history pruning.
pub fn render_task(state: &EnvState) -> Result<String, TemplateError> {
    let template = prompt_template(state.kind()).task;
    match &state.world {
        WorldState::List(s) => fill(
            template,
            &[
                ("initial_list", &python_list(&s.current)),
                ("target_list", &python_list(&s.target)),
            ],
        ),
        WorldState::Tree(s) => fill(
            template,
            &[
                ("known_nodes", &known_nodes(s)),
                ("target_node_val", &s.tree.target_value.to_string()),
            ],
        ),
        WorldState::Grid(s) => {
            let holes: Vec<String> = s.geometry.holes.iter().map(|c| c.to_string()).collect();
            fill(
                template,
                &[
                    ("size", &s.geometry.size.to_string()),
                    ("start", &s.position.to_string()),
                    ("goal", &s.goal.to_string()),
                    ("holes", &format!("[{}]", holes.join(", "))),
                    ("max_moves", &s.remaining().to_string()),
                ],
            )
        }
    }
}

/// One-step subtask whose satisfying action is the canonical optimal action.
pub fn render_plan_hint(
    state: &EnvState,
    options: &OracleOptions,
) -> Result<String, TemplateError> {
    let Ok(set) = optimal_actions(state, options) else {
        return intervention("common", "plan_none").map(str::to_string);
    };
    let Some(action) = set.canonical() else {
        return intervention("common", "plan_none").map(str::to_string);
    };
    let id_arg = || match action.arg("id") {
        Some(Scalar::Str(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => String::new(),
    };
    match &state.world {
        WorldState::List(s) => match action.name.as_str() {
            "pop" => {
                let index = action
                    .arg("id")
                    .and_then(Scalar::as_int)
                    .unwrap_or_default();
                let value = &s.current[index as usize];
                fill(
                    intervention("listworld", "plan_pop")?,
                    &[("index", &index.to_string()), ("value", value)],
                )
            }
            _ => intervention("listworld", "plan_done").map(str::to_string),
        },
        WorldState::Tree(_) => match action.name.as_str() {
            "get_children" => fill(
                intervention("treeworld", "plan_expand")?,
                &[("id", &id_arg())],
            ),
            "found" => fill(
                intervention("treeworld", "plan_found")?,
                &[("id", &id_arg())],
            ),
            _ => intervention("treeworld", "plan_unreachable").map(str::to_string),
        },
        WorldState::Grid(s) => match Direction::from_name(&action.name) {
            Some(dir) => {
                let cell = dir
                    .apply(s.position, s.geometry.size)
                    .expect("optimal moves stay on the board");
                fill(
                    intervention("gridworld", "plan_move")?,
                    &[("direction", dir.name()), ("cell", &cell.to_string())],
                )
            }
            None => intervention("gridworld", "plan_done").map(str::to_string),
        },
    }
}

/// Compact description of the exact current state.
pub fn render_state_summary(
    state: &EnvState,
    options: &OracleOptions,
) -> Result<String, TemplateError> {
    match &state.world {
        WorldState::List(s) => list_summary(s, options.list_show_lock),
        WorldState::Tree(s) => {
            let frontier = format!("[{}]", s.frontier().join(", "));
            fill(
                intervention("treeworld", "state")?,
                &[("known_nodes", &known_nodes(s)), ("frontier", &frontier)],
            )
        }
        WorldState::Grid(s) => grid_summary(s),
    }
}

fn list_summary(s: &ListState, show_lock: bool) -> Result<String, TemplateError> {
    let current = python_list(&s.current);
    let key = match (show_lock, s.lock) {
        (false, _) => "state_plain",
        (true, 0) => "state_unlocked",
        (true, _) => "state_locked",
    };
    fill(
        intervention("listworld", key)?,
        &[("current_list", &current), ("lock", &s.lock.to_string())],
    )
}

fn grid_summary(s: &GridState) -> Result<String, TemplateError> {
    fill(
        intervention("gridworld", "state")?,
        &[
            ("position", &s.position.to_string()),
            ("cost_used", &s.cost_used.to_string()),
            ("remaining", &s.remaining().to_string()),
        ],
    )
}
