//! Task prompts and in-context example episodes.
//!
//! Each environment has one hand-written example episode. It is replayed
//! through the real environment and re-rendered for every oracle
//! configuration, so the example shows exactly the kind of feedback the agent
//! will receive during the rollout.

use std::collections::BTreeMap;

use crate::action::{ActionCall, Scalar};
use crate::config::OracleConfig;
use crate::envs::EnvState;
use crate::oracle::render::render_task;
use crate::oracle::{intervention_text, OracleOptions};
use crate::task::{Cell, EnvKind, ListWorld, TaskInstance, TreeNode, TreeWorld, World};
use crate::template::{prompt_template, TemplateError};

/// Everything static in the agent's context for one episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system: String,
    /// Example episode rendered for the active oracle configuration.
    pub examples: String,
    pub task: String,
}

impl PromptBundle {
    pub fn system_message(&self) -> String {
        if self.examples.is_empty() {
            self.system.clone()
        } else {
            format!("{}\n{}", self.system, self.examples)
        }
    }
}

pub fn build_prompt(
    instance: &TaskInstance,
    config: OracleConfig,
    options: &OracleOptions,
) -> Result<PromptBundle, TemplateError> {
    let template = prompt_template(instance.env);
    Ok(PromptBundle {
        system: template.system.to_string(),
        examples: render_examples(instance.env, config, options)?,
        task: render_task(&EnvState::reset(instance))?,
    })
}

struct ExampleStep {
    thought: &'static str,
    action: ActionCall,
}

struct ExampleEpisode {
    world: World,
    steps: Vec<ExampleStep>,
}

fn step(thought: &'static str, action: ActionCall) -> ExampleStep {
    ExampleStep { thought, action }
}

fn example_episode(env: EnvKind) -> ExampleEpisode {
    let words = |s: &[&str]| s.iter().map(|w| w.to_string()).collect::<Vec<_>>();
    let id = |s: &str| Scalar::Str(s.to_string());
    match env {
        EnvKind::ListWorld => ExampleEpisode {
            world: World::List(ListWorld {
                initial: words(&["cat", "dog", "cat", "sun"]),
                target: words(&["dog", "sun"]),
            }),
            steps: vec![
                step(
                    "The target starts with 'dog', so the 'cat' at index 0 is extra. It must be removed before anything to its right.",
                    ActionCall::new("pop").with_arg("id", Scalar::Int(0)),
                ),
                step(
                    "The list is now ['dog', 'cat', 'sun']. 'dog' matches the target, and the 'cat' at index 1 is the remaining extra element.",
                    ActionCall::new("pop").with_arg("id", Scalar::Int(1)),
                ),
                step("The list is now ['dog', 'sun'], which equals the target.", ActionCall::new("done")),
            ],
        },
        EnvKind::TreeWorld => {
            let node = |value, children: &[&str]| TreeNode {
                value,
                children: words(children),
            };
            ExampleEpisode {
                world: World::Tree(TreeWorld {
                    root: "n5".into(),
                    nodes: BTreeMap::from([
                        ("n5".to_string(), node(12, &["n2", "n8"])),
                        ("n2".to_string(), node(40, &[])),
                        ("n8".to_string(), node(7, &["n1"])),
                        ("n1".to_string(), node(23, &[])),
                    ]),
                    target_value: 23,
                    target_id: Some("n1".into()),
                    revealed: vec!["n5".into()],
                    expanded: vec![],
                }),
                steps: vec![
                    step(
                        "Only the root n5 is known and its children are unknown, so I expand it.",
                        ActionCall::new("get_children").with_arg("id", id("n5")),
                    ),
                    step(
                        "Neither n2 (value 40) nor n8 (value 7) has value 23. Both are unexplored; I expand n8 next.",
                        ActionCall::new("get_children").with_arg("id", id("n8")),
                    ),
                    step("Node n1 has value 23, which is the target.", ActionCall::new("found").with_arg("id", id("n1"))),
                ],
            }
        }
        EnvKind::GridWorld => ExampleEpisode {
            world: World::Grid(crate::envs::grid::with_layout(
                3,
                Cell::new(0, 0),
                Cell::new(1, 2),
                [Cell::new(0, 1)],
                1,
            )),
            steps: vec![
                step(
                    "Moving right would enter the hole at (0, 1), so I go down first.",
                    ActionCall::new("down"),
                ),
                step("I am at (1, 0) and the goal (1, 2) is two columns to the right.", ActionCall::new("right")),
                step("One more step to the right reaches the goal.", ActionCall::new("right")),
                step("I am at the goal (1, 2).", ActionCall::new("done")),
            ],
        },
    }
}

/// Example transcript for `env` rendered under `config`.
pub fn render_examples(
    env: EnvKind,
    config: OracleConfig,
    options: &OracleOptions,
) -> Result<String, TemplateError> {
    let episode = example_episode(env);
    let mut state = EnvState::from_world(&episode.world);
    let mut out = String::from("Here is an example of a complete task and the environment's responses.\n\n=== Example ===\n");
    if !config.history() {
        out.push_str(&render_task(&state)?);
    }
    for (i, ex) in episode.steps.iter().enumerate() {
        let text = intervention_text(&state, config, options)?;
        if let Some(task) = &text.rewritten_task {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(task);
        }
        if let Some(msg) = text.message() {
            out.push_str(&format!("Environment: {msg}\n"));
        }
        out.push_str(&format!(
            "Agent: {}\n{}\n",
            ex.thought,
            ex.action.render_block()
        ));
        let (next, result) = state.step(&ex.action);
        debug_assert!(result.error.is_none(), "example episode must be legal");
        if !config.history() {
            out.push_str(&format!("Environment: {}\n", result.observation));
        }
        state = next;
    }
    debug_assert!(state.success, "example episode must succeed");
    out.push_str("=== End of example ===\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::optimal_actions;

    #[test]
    fn example_episodes_are_optimal_and_succeed() {
        for env in EnvKind::ALL {
            let episode = example_episode(env);
            let mut state = EnvState::from_world(&episode.world);
            for ex in &episode.steps {
                let set = optimal_actions(&state, &OracleOptions::default()).unwrap();
                assert!(set.contains(&ex.action), "{env}: {} not optimal", ex.action);
                state = state.step(&ex.action).0;
            }
            assert!(state.terminal && state.success, "{env}");
        }
    }

    #[test]
    fn examples_reflect_interventions() {
        let o = OracleOptions::default();
        for env in EnvKind::ALL {
            let base = render_examples(env, OracleConfig::NONE, &o).unwrap();
            assert!(!base.contains("Next:"));
            let plan = render_examples(env, "P".parse().unwrap(), &o).unwrap();
            assert!(plan.contains("Environment: Next:"));
            let pruned = render_examples(env, "S+H".parse().unwrap(), &o).unwrap();
            assert!(!pruned.contains("Next:"));
            assert!(pruned.matches("=== ").count() > base.matches("=== ").count());
        }
    }

    #[test]
    fn list_prompt_fills_lists() {
        let inst = crate::envs::generate_indexed(
            &crate::envs::GenParams::List {
                target_len: 2,
                num_pops: 2,
            },
            Default::default(),
            1,
            0,
        );
        let b = build_prompt(&inst, OracleConfig::NONE, &OracleOptions::default()).unwrap();
        let World::List(w) = &inst.world else {
            panic!()
        };
        let initial = crate::oracle::render::python_list(&w.initial);
        assert!(b.task.contains(&format!("Initial list: {initial}\n")));
        assert!(b.task.contains("Target list: ['"));
        assert_eq!(
            b,
            build_prompt(&inst, OracleConfig::NONE, &OracleOptions::default()).unwrap()
        );
    }
}
