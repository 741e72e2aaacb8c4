//! Serializable episode records: generated task instances and trajectories.
//!
//! Both are written as JSON lines with a stable key order; the files are the
//! interchange format between generation, rollout and reporting.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::action::{ActionCall, ParseError, ParseErrorKind};
use crate::config::OracleConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    ListWorld,
    TreeWorld,
    GridWorld,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::ListWorld, EnvKind::TreeWorld, EnvKind::GridWorld];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvKind::ListWorld => "listworld",
            EnvKind::TreeWorld => "treeworld",
            EnvKind::GridWorld => "gridworld",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "listworld" | "list" => Ok(EnvKind::ListWorld),
            "treeworld" | "tree" => Ok(EnvKind::TreeWorld),
            "gridworld" | "grid" => Ok(EnvKind::GridWorld),
            other => Err(format!(
                "unknown environment '{other}' (expected listworld, treeworld or gridworld)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListWorld {
    pub initial: Vec<String>,
    pub target: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeNode {
    pub value: i64,
    pub children: Vec<String>,
}

/// Ground-truth tree plus what the agent is told up front.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeWorld {
    pub root: String,
    pub nodes: BTreeMap<String, TreeNode>,
    pub target_value: i64,
    /// Absent when the target value is not in the tree.
    pub target_id: Option<String>,
    /// Nodes whose id and value are known at the start, in presentation order.
    pub revealed: Vec<String>,
    /// Revealed nodes whose children are listed at the start.
    pub expanded: Vec<String>,
}

impl TreeWorld {
    /// Root-to-target id path, or `None` when the target is unreachable.
    pub fn target_path(&self) -> Option<Vec<String>> {
        let target = self.target_id.as_ref()?;
        let mut parent: BTreeMap<&str, &str> = BTreeMap::new();
        for (id, node) in &self.nodes {
            for child in &node.children {
                parent.insert(child, id);
            }
        }
        let mut path = vec![target.clone()];
        let mut cur = target.as_str();
        while let Some(p) = parent.get(cur) {
            path.push(p.to_string());
            cur = p;
        }
        path.reverse();
        (path[0] == self.root).then_some(path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridWorld {
    pub size: usize,
    pub start: Cell,
    pub goal: Cell,
    /// Sorted, without duplicates.
    pub holes: Vec<Cell>,
    pub max_moves: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum World {
    List(ListWorld),
    Tree(TreeWorld),
    Grid(GridWorld),
}

impl World {
    pub fn kind(&self) -> EnvKind {
        match self {
            World::List(_) => EnvKind::ListWorld,
            World::Tree(_) => EnvKind::TreeWorld,
            World::Grid(_) => EnvKind::GridWorld,
        }
    }
}

/// One procedurally generated episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskInstance {
    pub id: String,
    pub env: EnvKind,
    pub world: World,
    /// Number of actions an optimal policy needs, including the terminating one.
    pub optimal_steps: u32,
    /// Cap on agent turns.
    pub turn_budget: u32,
    pub seed: u64,
}

impl TaskInstance {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("instance serializes")
    }

    pub fn from_json(line: &str) -> Result<Self, String> {
        let instance: TaskInstance = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if instance.world.kind() != instance.env {
            return Err(format!(
                "instance '{}' declares env {} but carries a {} world",
                instance.id,
                instance.env,
                instance.world.kind()
            ));
        }
        if instance.turn_budget < instance.optimal_steps {
            return Err(format!(
                "instance '{}' has turn_budget below optimal_steps",
                instance.id
            ));
        }
        Ok(instance)
    }
}

/// Outcome of parsing one model response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedAction {
    Action(ActionCall),
    Error {
        kind: ParseErrorKind,
        span: [usize; 2],
        detail: String,
    },
}

impl ParsedAction {
    pub fn action(&self) -> Option<&ActionCall> {
        match self {
            ParsedAction::Action(a) => Some(a),
            ParsedAction::Error { .. } => None,
        }
    }
}

impl From<Result<ActionCall, ParseError>> for ParsedAction {
    fn from(r: Result<ActionCall, ParseError>) -> Self {
        match r {
            Ok(a) => ParsedAction::Action(a),
            Err(e) => ParsedAction::Error {
                kind: e.kind,
                span: [e.span.start, e.span.end],
                detail: e.detail,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: u32,
    pub context_fingerprint: String,
    pub raw_output: String,
    pub parsed: ParsedAction,
    /// Scored against the optimal set of the state before the action applied.
    pub optimal: bool,
    pub observation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    AgentDone,
    EnvBudget,
    ParseFailureLimit,
    PolicyFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub instance_id: String,
    pub env: EnvKind,
    pub optimal_steps: u32,
    pub config: OracleConfig,
    /// Policy label, e.g. `oracle_follower` or `llm:qwen3-8b`.
    pub policy: String,
    /// Stable hash of the full policy parameters; part of the episode key.
    pub policy_fingerprint: String,
    pub turns: Vec<Turn>,
    pub success: bool,
    pub terminated_by: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trajectory {
    /// Key used to skip completed episodes when a run resumes.
    pub fn episode_key(&self) -> EpisodeKey {
        EpisodeKey {
            instance_id: self.instance_id.clone(),
            config: self.config,
            policy_fingerprint: self.policy_fingerprint.clone(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EpisodeKey {
    pub instance_id: String,
    pub config: OracleConfig,
    pub policy_fingerprint: String,
}
