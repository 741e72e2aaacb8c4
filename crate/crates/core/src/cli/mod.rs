//! Command-line entry points: `generate`, `run` and `report`.

mod run;
mod spec;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::agent::PolicyHandle;
use crate::config::OracleConfig;
use crate::eval::{self, ExportFormat, GroupBy};
use crate::llm::{Cassette, CassetteMode, LlmClient, NoNetwork};
use crate::task::EnvKind;

pub use run::{completed_keys, read_instances, run_sweep, RunSummary};
pub use spec::{GridGrid, ListGrid, RunSpec, TreeGrid};

pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const SPEC_FILE: &str = "spec.toml";

#[derive(Debug, Error)]
pub enum CliError {
    /// Empty or unreadable input.
    #[error("{0}")]
    Input(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Policy(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Config(_) => 2,
            CliError::Policy(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "turnbench",
    version,
    about = "Multi-turn agent environments with oracle interventions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the instance set of a spec to <out>/instances.jsonl.
    Generate(SpecArgs),
    /// Run every instance under every oracle config; resumes partial runs.
    Run {
        #[command(flatten)]
        spec: SpecArgs,
        /// Instance file; defaults to <out>/instances.jsonl, generated if missing.
        #[arg(long)]
        instances: Option<PathBuf>,
    },
    /// Aggregate a trajectory file into report.csv and report.jsonl.
    Report {
        /// Trajectory file; defaults to <out>/trajectories.jsonl.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// Comma-separated keys from env, config, horizon, length, policy.
        #[arg(long, default_value = "env,config,horizon,policy")]
        group_by: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    OracleFollower,
    EpsilonNoisy,
    UniformRandom,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ModeArg {
    Record,
    Replay,
    #[default]
    Live,
}

/// Spec file plus overrides. Flags win over file values.
#[derive(Debug, Clone, Default, Args)]
pub struct SpecArgs {
    /// TOML run spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Environment to include (repeatable).
    #[arg(long = "env")]
    pub envs: Vec<String>,
    /// Oracle config such as "none", "S,P" or "S,P,H" (repeatable); "all" for all six.
    #[arg(long = "config")]
    pub configs: Vec<String>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyKind>,
    /// Noise rate for the epsilon_noisy policy.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Chat-completion base URL for the llm policy.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Instances per complexity cell.
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cassette file for recording or replaying model responses.
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "live")]
    pub mode: ModeArg,
    #[arg(long)]
    pub concurrency: Option<usize>,
}

impl SpecArgs {
    /// File values (or defaults) with flag overrides applied, validated.
    pub fn resolve(&self) -> Result<RunSpec, CliError> {
        let mut spec = match &self.spec {
            Some(path) => RunSpec::load(path)?,
            None => RunSpec::default(),
        };
        if !self.envs.is_empty() {
            spec.envs = self
                .envs
                .iter()
                .map(|e| e.parse::<EnvKind>())
                .collect::<Result<_, _>>()
                .map_err(CliError::Config)?;
        }
        if !self.configs.is_empty() {
            let mut configs = Vec::new();
            for c in &self.configs {
                if c.trim().eq_ignore_ascii_case("all") {
                    configs.extend(OracleConfig::all());
                } else {
                    configs.push(
                        c.parse::<OracleConfig>()
                            .map_err(|e| CliError::Config(e.to_string()))?,
                    );
                }
            }
            spec.configs = configs;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(n) = self.episodes {
            spec.instances_per_cell = n;
        }
        if let Some(out) = &self.out {
            spec.out = out.clone();
        }
        if let Some(k) = self.concurrency {
            spec.concurrency = k;
        }
        self.apply_policy(&mut spec)?;
        spec.validate().map_err(CliError::Config)?;
        Ok(spec)
    }

    fn apply_policy(&self, spec: &mut RunSpec) -> Result<(), CliError> {
        let (file_seed, file_eps, file_endpoint, file_model) = match &spec.policy {
            PolicyHandle::EpsilonNoisy { epsilon, seed } => {
                (Some(*seed), Some(*epsilon), None, None)
            }
            PolicyHandle::UniformRandom { seed } => (Some(*seed), None, None, None),
            PolicyHandle::Llm {
                endpoint, model, ..
            } => (None, None, Some(endpoint.clone()), Some(model.clone())),
            PolicyHandle::OracleFollower => (None, None, None, None),
        };
        let kind = match (self.policy, &spec.policy) {
            (Some(k), _) => k,
            (None, PolicyHandle::OracleFollower) => PolicyKind::OracleFollower,
            (None, PolicyHandle::EpsilonNoisy { .. }) => PolicyKind::EpsilonNoisy,
            (None, PolicyHandle::UniformRandom { .. }) => PolicyKind::UniformRandom,
            (None, PolicyHandle::Llm { .. }) => PolicyKind::Llm,
        };
        let noise_seed = file_seed.unwrap_or(spec.seed);
        spec.policy =
            match kind {
                PolicyKind::OracleFollower => PolicyHandle::OracleFollower,
                PolicyKind::EpsilonNoisy => PolicyHandle::EpsilonNoisy {
                    epsilon: self
                        .epsilon
                        .or(file_eps)
                        .ok_or_else(|| CliError::Config("epsilon_noisy needs --epsilon".into()))?,
                    seed: noise_seed,
                },
                PolicyKind::UniformRandom => PolicyHandle::UniformRandom { seed: noise_seed },
                PolicyKind::Llm => {
                    let (temperature, max_tokens) = match &spec.policy {
                        PolicyHandle::Llm {
                            temperature,
                            max_tokens,
                            ..
                        } => (*temperature, *max_tokens),
                        _ => (
                            crate::agent::policy::DEFAULT_TEMPERATURE,
                            crate::agent::policy::DEFAULT_MAX_TOKENS,
                        ),
                    };
                    PolicyHandle::Llm {
                        endpoint: self.endpoint.clone().or(file_endpoint).ok_or_else(|| {
                            CliError::Config("llm policy needs --endpoint".into())
                        })?,
                        model: self
                            .model
                            .clone()
                            .or(file_model)
                            .ok_or_else(|| CliError::Config("llm policy needs --model".into()))?,
                        temperature,
                        max_tokens,
                    }
                }
            };
        Ok(())
    }

    /// Client for the llm policy; `None` for scripted policies.
    fn client(&self, spec: &RunSpec) -> Result<Option<Arc<LlmClient>>, CliError> {
        let PolicyHandle::Llm { endpoint, .. } = &spec.policy else {
            return Ok(None);
        };
        let mode = match self.mode {
            ModeArg::Record => CassetteMode::Record,
            ModeArg::Replay => CassetteMode::Replay,
            ModeArg::Live => CassetteMode::Passthrough,
        };
        let cassette = match (&self.cassette, mode) {
            (Some(path), CassetteMode::Passthrough) => {
                return Err(CliError::Config(format!(
                    "--cassette {} needs --mode record or replay",
                    path.display()
                )))
            }
            (Some(path), mode) => {
                Cassette::open(path, mode).map_err(|e| CliError::Config(e.to_string()))?
            }
            (None, CassetteMode::Passthrough) => Cassette::passthrough(),
            (None, _) => {
                return Err(CliError::Config(
                    "--mode record/replay needs --cassette".into(),
                ))
            }
        };
        let client = if mode == CassetteMode::Replay {
            LlmClient::new(endpoint, Box::new(NoNetwork), cassette)
        } else {
            LlmClient::http(endpoint, cassette).map_err(|e| CliError::Policy(e.to_string()))?
        };
        Ok(Some(Arc::new(client.with_max_inflight(spec.concurrency))))
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

/// Writes `<out>/instances.jsonl` and `<out>/spec.toml`.
pub fn cmd_generate(spec: &RunSpec) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&spec.out).map_err(io_err(&spec.out))?;
    let path = spec.out.join(INSTANCES_FILE);
    let mut text = String::new();
    for instance in spec.instances() {
        text.push_str(&instance.to_json_line());
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(io_err(&path))?;
    let spec_path = spec.out.join(SPEC_FILE);
    std::fs::write(&spec_path, spec.to_toml()).map_err(io_err(&spec_path))?;
    Ok(path)
}

pub fn cmd_run(args: &SpecArgs, instances: Option<&Path>) -> Result<RunSummary, CliError> {
    let spec = args.resolve()?;
    let client = args.client(&spec)?;
    let path = match instances {
        Some(p) => p.to_path_buf(),
        None => {
            let p = spec.out.join(INSTANCES_FILE);
            if p.exists() {
                p
            } else {
                cmd_generate(&spec)?
            }
        }
    };
    let instances = read_instances(&path)?;
    if instances.is_empty() {
        return Err(CliError::Input(format!(
            "no instances in {}",
            path.display()
        )));
    }
    std::fs::create_dir_all(&spec.out).map_err(io_err(&spec.out))?;
    let out = spec.out.join(TRAJECTORIES_FILE);
    let summary = run_sweep(
        &instances,
        &spec.configs,
        &spec.policy,
        &spec.oracle,
        client,
        spec.concurrency,
        &out,
    )?;
    Ok(summary)
}

/// Aggregates a trajectory file, writes both report formats and returns
/// the summary table.
pub fn cmd_report(
    trajectories: &Path,
    group_by: GroupBy,
    out_dir: &Path,
) -> Result<String, CliError> {
    let trajs =
        eval::read_trajectories(trajectories).map_err(|e| CliError::Input(e.to_string()))?;
    if trajs.is_empty() {
        return Err(CliError::Input("no episodes".into()));
    }
    let reports = eval::aggregate(&trajs, group_by);
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    eval::export_results(&reports, ExportFormat::Csv, out_dir.join("report.csv"))
        .map_err(|e| CliError::Input(e.to_string()))?;
    eval::export_results(&reports, ExportFormat::Jsonl, out_dir.join("report.jsonl"))
        .map_err(|e| CliError::Input(e.to_string()))?;
    Ok(eval::render_table(&reports))
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(args) => {
            let spec = args.resolve()?;
            let path = cmd_generate(&spec)?;
            let _ = writeln!(
                stdout,
                "wrote {} instances to {}",
                spec.instances().len(),
                path.display()
            );
        }
        Command::Run { spec, instances } => {
            let summary = cmd_run(&spec, instances.as_deref())?;
            let _ = writeln!(
                stdout,
                "episodes: {} completed, {} skipped (already done), {} failed",
                summary.completed,
                summary.skipped,
                summary.failed.len()
            );
            if !summary.failed.is_empty() {
                let mut lines: Vec<String> = summary
                    .failed
                    .iter()
                    .take(10)
                    .map(|(k, e)| format!("  {} [{}]: {e}", k.instance_id, k.config))
                    .collect();
                if summary.failed.len() > 10 {
                    lines.push(format!("  ... and {} more", summary.failed.len() - 10));
                }
                return Err(CliError::Policy(format!(
                    "{} episode(s) failed; completed episodes were kept and a rerun retries the rest\n{}",
                    summary.failed.len(),
                    lines.join("\n")
                )));
            }
        }
        Command::Report {
            trajectories,
            group_by,
            out,
        } => {
            let group_by: GroupBy = group_by
                .parse()
                .map_err(|e: eval::EvalError| CliError::Config(e.to_string()))?;
            let path = trajectories.unwrap_or_else(|| out.join(TRAJECTORIES_FILE));
            let table = cmd_report(&path, group_by, &out)?;
            let _ = write!(stdout, "{table}");
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli, &mut std::io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
