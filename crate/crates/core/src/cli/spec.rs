use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::agent::PolicyHandle;
use crate::config::OracleConfig;
use crate::envs::{generate_indexed, BudgetParams, GenParams};
use crate::oracle::OracleOptions;
use crate::task::{EnvKind, TaskInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ListGrid {
    pub target_len: Vec<usize>,
    pub num_pops: Vec<usize>,
}

impl Default for ListGrid {
    fn default() -> Self {
        Self {
            target_len: vec![3],
            num_pops: vec![2, 4, 6, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeGrid {
    pub branching: Vec<usize>,
    pub num_nodes: Vec<usize>,
    pub reveal_fraction: f64,
    pub unreachable_rate: f64,
}

impl Default for TreeGrid {
    fn default() -> Self {
        Self {
            branching: vec![2],
            num_nodes: vec![5, 10, 15],
            reveal_fraction: 0.3,
            unreachable_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridGrid {
    pub size: Vec<usize>,
    pub hole_density: f64,
    pub budget_slack: Vec<u32>,
}

impl Default for GridGrid {
    fn default() -> Self {
        Self {
            size: vec![3, 4, 5],
            hole_density: 0.2,
            budget_slack: vec![2],
        }
    }
}

/// Everything a sweep needs. Loaded from TOML; command-line flags override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub envs: Vec<EnvKind>,
    pub instances_per_cell: usize,
    pub seed: u64,
    pub configs: Vec<OracleConfig>,
    pub concurrency: usize,
    pub out: PathBuf,
    pub listworld: ListGrid,
    pub treeworld: TreeGrid,
    pub gridworld: GridGrid,
    pub budget: BudgetParams,
    pub policy: PolicyHandle,
    pub oracle: OracleOptions,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            envs: EnvKind::ALL.to_vec(),
            instances_per_cell: 10,
            seed: 0,
            configs: OracleConfig::all().to_vec(),
            concurrency: 4,
            out: PathBuf::from("runs/default"),
            listworld: ListGrid::default(),
            treeworld: TreeGrid::default(),
            gridworld: GridGrid::default(),
            budget: BudgetParams::default(),
            policy: PolicyHandle::OracleFollower,
            oracle: OracleOptions::default(),
        }
    }
}

fn positive<T: Copy + PartialOrd + std::fmt::Display>(
    name: &str,
    values: &[T],
    min: T,
) -> Result<(), String> {
    if values.is_empty() {
        return Err(format!("{name} must list at least one value"));
    }
    if let Some(v) = values.iter().find(|v| **v < min) {
        return Err(format!("{name} value {v} is below the minimum {min}"));
    }
    let distinct: BTreeSet<String> = values.iter().map(|v| v.to_string()).collect();
    if distinct.len() != values.len() {
        return Err(format!("{name} lists a value twice"));
    }
    Ok(())
}

fn fraction(name: &str, v: f64, upper_open: bool) -> Result<(), String> {
    let ok = v >= 0.0 && if upper_open { v < 1.0 } else { v <= 1.0 };
    if ok {
        Ok(())
    } else {
        Err(format!(
            "{name} = {v} is outside {}",
            if upper_open { "[0, 1)" } else { "[0, 1]" }
        ))
    }
}

impl RunSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read spec {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let spec: RunSpec = toml::from_str(text).map_err(|e| e.to_string())?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.envs.is_empty() {
            return Err("envs must list at least one environment".into());
        }
        if BTreeSet::from_iter(&self.envs).len() != self.envs.len() {
            return Err("envs lists an environment twice".into());
        }
        if self.configs.is_empty() {
            return Err("configs must list at least one oracle config".into());
        }
        if self.instances_per_cell == 0 {
            return Err("instances_per_cell must be at least 1".into());
        }
        if self.concurrency == 0 {
            return Err("concurrency must be at least 1".into());
        }
        positive("listworld.target_len", &self.listworld.target_len, 1)?;
        positive("listworld.num_pops", &self.listworld.num_pops, 1)?;
        positive("treeworld.branching", &self.treeworld.branching, 2)?;
        positive("treeworld.num_nodes", &self.treeworld.num_nodes, 1)?;
        fraction(
            "treeworld.reveal_fraction",
            self.treeworld.reveal_fraction,
            false,
        )?;
        fraction(
            "treeworld.unreachable_rate",
            self.treeworld.unreachable_rate,
            false,
        )?;
        positive("gridworld.size", &self.gridworld.size, 2)?;
        positive("gridworld.budget_slack", &self.gridworld.budget_slack, 0)?;
        fraction("gridworld.hole_density", self.gridworld.hole_density, true)?;
        if self.budget.m == 0 {
            return Err("budget.m must be at least 1".into());
        }
        self.policy.validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    /// Complexity cells of one environment, in spec order.
    pub fn cells(&self, env: EnvKind) -> Vec<GenParams> {
        let mut out = Vec::new();
        match env {
            EnvKind::ListWorld => {
                for &target_len in &self.listworld.target_len {
                    for &num_pops in &self.listworld.num_pops {
                        out.push(GenParams::List {
                            target_len,
                            num_pops,
                        });
                    }
                }
            }
            EnvKind::TreeWorld => {
                for &branching in &self.treeworld.branching {
                    for &num_nodes in &self.treeworld.num_nodes {
                        out.push(GenParams::Tree {
                            branching,
                            num_nodes,
                            reveal_fraction: self.treeworld.reveal_fraction,
                            unreachable_rate: self.treeworld.unreachable_rate,
                        });
                    }
                }
            }
            EnvKind::GridWorld => {
                for &size in &self.gridworld.size {
                    for &budget_slack in &self.gridworld.budget_slack {
                        out.push(GenParams::Grid {
                            size,
                            hole_density: self.gridworld.hole_density,
                            budget_slack,
                        });
                    }
                }
            }
        }
        out
    }

    /// All instances of the sweep: env, then cell, then index.
    pub fn instances(&self) -> Vec<TaskInstance> {
        let mut out = Vec::new();
        for &env in &self.envs {
            for cell in self.cells(env) {
                for index in 0..self.instances_per_cell {
                    out.push(generate_indexed(&cell, self.budget, self.seed, index));
                }
            }
        }
        out
    }
}
