//! Environment dynamics: procedural generation and `reset -> step* -> terminal`
//! for the three games behind one state type.

pub mod grid;
pub mod list;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::action::ActionCall;
use crate::seed::{derive_seed, seeded_rng};
use crate::task::{EnvKind, TaskInstance, World};

pub use grid::{Direction, GridGeometry, GridState};
pub use list::ListState;
pub use tree::TreeState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepError {
    UnknownAction,
    InvalidArguments,
    IllegalIndex,
    LockedIndex,
    UnknownNodeId,
    OffGrid,
    BudgetExceeded,
    EpisodeOver,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub observation: String,
    pub terminal: bool,
    pub success: bool,
    pub error: Option<StepError>,
}

impl StepResult {
    fn ongoing(observation: impl Into<String>) -> Self {
        Self {
            observation: observation.into(),
            terminal: false,
            success: false,
            error: None,
        }
    }

    fn finished(success: bool, observation: impl Into<String>) -> Self {
        Self {
            observation: observation.into(),
            terminal: true,
            success,
            error: None,
        }
    }

    fn error(error: StepError, observation: impl Into<String>) -> Self {
        Self {
            observation: observation.into(),
            terminal: false,
            success: false,
            error: Some(error),
        }
    }

    fn unknown_action(name: &str, available: &[&str]) -> Self {
        Self::error(
            StepError::UnknownAction,
            format!(
                "Error: unknown function '{name}'. Available functions: {}.",
                available.join(", ")
            ),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorldState {
    List(ListState),
    Tree(TreeState),
    Grid(GridState),
}

/// Hidden environment state plus episode status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    pub world: WorldState,
    pub terminal: bool,
    pub success: bool,
}

impl EnvState {
    pub fn reset(instance: &TaskInstance) -> Self {
        Self::from_world(&instance.world)
    }

    pub fn from_world(world: &World) -> Self {
        let world = match world {
            World::List(w) => WorldState::List(ListState::new(w)),
            World::Tree(w) => WorldState::Tree(TreeState::new(w)),
            World::Grid(w) => WorldState::Grid(GridState::new(w)),
        };
        Self {
            world,
            terminal: false,
            success: false,
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self.world {
            WorldState::List(_) => EnvKind::ListWorld,
            WorldState::Tree(_) => EnvKind::TreeWorld,
            WorldState::Grid(_) => EnvKind::GridWorld,
        }
    }

    /// Applies one action. Deterministic: the same state and action always
    /// produce the same successor and observation.
    pub fn step(&self, action: &ActionCall) -> (EnvState, StepResult) {
        if self.terminal {
            return (
                self.clone(),
                StepResult {
                    observation: "Error: the episode is over.".into(),
                    terminal: true,
                    success: self.success,
                    error: Some(StepError::EpisodeOver),
                },
            );
        }
        let (world, result) = match &self.world {
            WorldState::List(s) => {
                let (n, r) = list::step(s, action);
                (WorldState::List(n), r)
            }
            WorldState::Tree(s) => {
                let (n, r) = tree::step(s, action);
                (WorldState::Tree(n), r)
            }
            WorldState::Grid(s) => {
                let (n, r) = grid::step(s, action);
                (WorldState::Grid(n), r)
            }
        };
        let next = EnvState {
            world,
            terminal: result.terminal,
            success: result.success,
        };
        (next, result)
    }

    /// Actions accepted without an error observation.
    pub fn legal_actions(&self) -> Vec<ActionCall> {
        if self.terminal {
            return Vec::new();
        }
        match &self.world {
            WorldState::List(s) => list::legal_actions(s),
            WorldState::Tree(s) => tree::legal_actions(s),
            WorldState::Grid(s) => grid::legal_actions(s),
        }
    }
}

/// Turn cap `m * T* + n`.
pub fn horizon_budget(optimal_steps: u32, m: u32, n: u32) -> u32 {
    m * optimal_steps + n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetParams {
    pub m: u32,
    pub n: u32,
}

impl Default for BudgetParams {
    fn default() -> Self {
        Self { m: 2, n: 5 }
    }
}

/// Generator parameters for one complexity cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenParams {
    List {
        target_len: usize,
        num_pops: usize,
    },
    Tree {
        branching: usize,
        num_nodes: usize,
        reveal_fraction: f64,
        unreachable_rate: f64,
    },
    Grid {
        size: usize,
        hole_density: f64,
        budget_slack: u32,
    },
}

impl GenParams {
    pub fn kind(&self) -> EnvKind {
        match self {
            GenParams::List { .. } => EnvKind::ListWorld,
            GenParams::Tree { .. } => EnvKind::TreeWorld,
            GenParams::Grid { .. } => EnvKind::GridWorld,
        }
    }

    /// Short complexity tag used in instance ids, e.g. `pops4`.
    pub fn tag(&self) -> String {
        match self {
            GenParams::List {
                target_len,
                num_pops,
            } => format!("len{target_len}-pops{num_pops}"),
            GenParams::Tree {
                branching,
                num_nodes,
                ..
            } => format!("m{branching}-nodes{num_nodes}"),
            GenParams::Grid {
                size, budget_slack, ..
            } => format!("n{size}-slack{budget_slack}"),
        }
    }
}

/// Generates one instance; a pure function of `(params, budget, seed)`.
pub fn generate_instance(
    id: impl Into<String>,
    params: &GenParams,
    budget: BudgetParams,
    seed: u64,
) -> TaskInstance {
    let mut rng = seeded_rng(seed, &format!("gen:{}", params.kind()));
    let (world, optimal_steps) = match *params {
        GenParams::List {
            target_len,
            num_pops,
        } => {
            let w = list::generate(target_len, num_pops, &mut rng);
            (World::List(w), num_pops as u32 + 1)
        }
        GenParams::Tree {
            branching,
            num_nodes,
            reveal_fraction,
            unreachable_rate,
        } => {
            let w = tree::generate(
                branching,
                num_nodes,
                reveal_fraction,
                unreachable_rate,
                &mut rng,
            );
            let t = tree::optimal_steps(&w);
            (World::Tree(w), t)
        }
        GenParams::Grid {
            size,
            hole_density,
            budget_slack,
        } => {
            let w = grid::generate(size, hole_density, budget_slack, &mut rng);
            let t = grid::optimal_steps(&w);
            (World::Grid(w), t)
        }
    };
    TaskInstance {
        id: id.into(),
        env: params.kind(),
        world,
        optimal_steps,
        turn_budget: horizon_budget(optimal_steps, budget.m, budget.n),
        seed,
    }
}

/// Convenience for tests and examples: instance `index` of a cell under a base seed.
pub fn generate_indexed(
    params: &GenParams,
    budget: BudgetParams,
    base_seed: u64,
    index: usize,
) -> TaskInstance {
    let id = format!("{}-{}-{index:04}", params.kind(), params.tag());
    let seed = derive_seed(base_seed, &id);
    generate_instance(id, params, budget, seed)
}
