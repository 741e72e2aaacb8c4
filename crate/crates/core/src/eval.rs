//! Trajectory scoring, grouping and report export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::OracleConfig;
use crate::task::{EnvKind, Trajectory};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectory has no turns")]
    EmptyTrajectory,
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid group-by spec: {0}")]
    GroupBy(String),
}

/// (success, step accuracy). Every turn counts in the denominator,
/// including parse failures and illegal actions.
pub fn score_trajectory(trajectory: &Trajectory) -> Result<(bool, f64), EvalError> {
    if trajectory.turns.is_empty() {
        return Err(EvalError::EmptyTrajectory);
    }
    let optimal = trajectory.turns.iter().filter(|t| t.optimal).count();
    Ok((
        trajectory.success,
        optimal as f64 / trajectory.turns.len() as f64,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonKey {
    /// Optimal step count of the instance.
    #[default]
    OptimalSteps,
    /// Number of turns the episode actually took.
    EpisodeLength,
}

/// Which key fields split groups. Disabled fields collapse to "all".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupBy {
    pub env: bool,
    pub config: bool,
    pub horizon: bool,
    pub policy: bool,
    pub horizon_key: HorizonKey,
}

impl Default for GroupBy {
    fn default() -> Self {
        Self {
            env: true,
            config: true,
            horizon: true,
            policy: true,
            horizon_key: HorizonKey::OptimalSteps,
        }
    }
}

impl GroupBy {
    pub fn none() -> Self {
        Self {
            env: false,
            config: false,
            horizon: false,
            policy: false,
            horizon_key: HorizonKey::OptimalSteps,
        }
    }
}

impl FromStr for GroupBy {
    type Err = EvalError;

    /// Comma-separated subset of `env`, `config`, `horizon`, `length`, `policy`;
    /// `length` groups by episode length instead of optimal steps.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut g = GroupBy::none();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "env" => g.env = true,
                "config" => g.config = true,
                "horizon" => g.horizon = true,
                "length" => {
                    g.horizon = true;
                    g.horizon_key = HorizonKey::EpisodeLength;
                }
                "policy" | "model" => g.policy = true,
                other => {
                    return Err(EvalError::GroupBy(format!(
                        "unknown key '{other}' (expected env, config, horizon, length, policy)"
                    )))
                }
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub env: Option<EnvKind>,
    pub config: Option<OracleConfig>,
    pub horizon: Option<u32>,
    pub policy: Option<String>,
    pub episodes: usize,
    pub success_rate: f64,
    pub step_accuracy: f64,
    /// Wald 95% half-width of the success rate.
    pub ci95: f64,
}

pub fn binomial_ci95(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

type GroupKey = (Option<EnvKind>, Option<usize>, Option<u32>, Option<String>);

fn config_rank(c: OracleConfig) -> usize {
    OracleConfig::all()
        .iter()
        .position(|x| *x == c)
        .unwrap_or(usize::MAX)
}

/// Groups trajectories and computes unweighted per-episode means. Empty
/// trajectories (a policy that failed before its first turn) score a step
/// accuracy of 0. Groups come out ordered by env, config, horizon, policy.
pub fn aggregate<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
    group_by: GroupBy,
) -> Vec<MetricsReport> {
    #[derive(Default)]
    struct Acc {
        n: usize,
        successes: usize,
        step_sum: f64,
    }
    let mut groups: BTreeMap<GroupKey, (Option<OracleConfig>, Acc)> = BTreeMap::new();
    for t in trajectories {
        let horizon = match group_by.horizon_key {
            HorizonKey::OptimalSteps => t.optimal_steps,
            HorizonKey::EpisodeLength => t.turns.len() as u32,
        };
        let key = (
            group_by.env.then_some(t.env),
            group_by.config.then(|| config_rank(t.config)),
            group_by.horizon.then_some(horizon),
            group_by.policy.then(|| t.policy.clone()),
        );
        let (_, acc) = groups
            .entry(key)
            .or_insert_with(|| (group_by.config.then_some(t.config), Acc::default()));
        let (success, step) = score_trajectory(t).unwrap_or((t.success, 0.0));
        acc.n += 1;
        acc.successes += usize::from(success);
        acc.step_sum += step;
    }
    groups
        .into_iter()
        .map(|((env, _, horizon, policy), (config, acc))| {
            let p = acc.successes as f64 / acc.n as f64;
            MetricsReport {
                env,
                config,
                horizon,
                policy,
                episodes: acc.n,
                success_rate: p,
                step_accuracy: acc.step_sum / acc.n as f64,
                ci95: binomial_ci95(p, acc.n),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

pub const CSV_HEADER: &str = "env,config,horizon,policy,episodes,success_rate,step_accuracy,ci95";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.4},{:.4},{:.4}",
            r.env.map_or("all", |e| e.as_str()),
            csv_field(&r.config.map_or("all".into(), |c| c.label())),
            r.horizon.map_or("all".into(), |h| h.to_string()),
            csv_field(r.policy.as_deref().unwrap_or("all")),
            r.episodes,
            r.success_rate,
            r.step_accuracy,
            r.ci95,
        );
    }
    out
}

pub fn render_jsonl(reports: &[MetricsReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
        .collect()
}

pub fn export_results(
    reports: &[MetricsReport],
    format: ExportFormat,
    path: impl AsRef<Path>,
) -> Result<(), EvalError> {
    let text = match format {
        ExportFormat::Csv => render_csv(reports),
        ExportFormat::Jsonl => render_jsonl(reports),
    };
    let mut file = File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_reports_jsonl(path: impl AsRef<Path>) -> Result<Vec<MetricsReport>, EvalError> {
    read_jsonl(path.as_ref())
}

pub fn read_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, EvalError> {
    read_jsonl(path.as_ref())
}

/// Reads a trajectory file and aggregates it with the given grouping.
pub fn score_file(
    path: impl AsRef<Path>,
    group_by: GroupBy,
) -> Result<Vec<MetricsReport>, EvalError> {
    Ok(aggregate(&read_trajectories(path)?, group_by))
}

/// Fixed-width summary for terminals.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let rows: Vec<[String; 8]> = reports
        .iter()
        .map(|r| {
            [
                r.env.map_or("all", |e| e.as_str()).to_string(),
                r.config.map_or("all".into(), |c| c.label()),
                r.horizon.map_or("all".into(), |h| h.to_string()),
                r.policy.clone().unwrap_or_else(|| "all".into()),
                r.episodes.to_string(),
                format!("{:.4}", r.success_rate),
                format!("{:.4}", r.step_accuracy),
                format!("{:.4}", r.ci95),
            ]
        })
        .collect();
    let header = [
        "env", "config", "horizon", "policy", "episodes", "success", "step_acc", "ci95",
    ];
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&header);
    for row in &rows {
        line(&row.each_ref().map(String::as_str));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionCall;
    use crate::task::{ParsedAction, Termination, Turn};

    fn traj(
        env: EnvKind,
        config: OracleConfig,
        t_star: u32,
        flags: &[bool],
        success: bool,
    ) -> Trajectory {
        Trajectory {
            instance_id: "x".into(),
            env,
            optimal_steps: t_star,
            config,
            policy: "p".into(),
            policy_fingerprint: "f".into(),
            turns: flags
                .iter()
                .enumerate()
                .map(|(i, &optimal)| Turn {
                    index: i as u32,
                    context_fingerprint: String::new(),
                    raw_output: String::new(),
                    parsed: ParsedAction::Action(ActionCall::new("done")),
                    optimal,
                    observation: String::new(),
                })
                .collect(),
            success,
            terminated_by: Termination::AgentDone,
            error: None,
        }
    }

    #[test]
    fn step_accuracy_ratio() {
        let t = traj(
            EnvKind::ListWorld,
            OracleConfig::NONE,
            4,
            &[true, true, false, true],
            false,
        );
        assert_eq!(score_trajectory(&t).unwrap(), (false, 0.75));
        let empty = traj(EnvKind::ListWorld, OracleConfig::NONE, 4, &[], false);
        assert!(matches!(
            score_trajectory(&empty),
            Err(EvalError::EmptyTrajectory)
        ));
    }

    #[test]
    fn single_group_mean() {
        let ts = [
            traj(
                EnvKind::GridWorld,
                OracleConfig::NONE,
                3,
                &[true, true, true],
                true,
            ),
            traj(
                EnvKind::GridWorld,
                OracleConfig::NONE,
                3,
                &[true, false],
                false,
            ),
        ];
        let r = aggregate(&ts, GroupBy::none());
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].success_rate, 0.5);
        assert_eq!(r[0].step_accuracy, 0.75);
        assert!((r[0].ci95 - 1.96 * (0.25f64 / 2.0).sqrt()).abs() < 1e-12);
        assert!(aggregate(&[], GroupBy::default()).is_empty());
    }

    #[test]
    fn horizon_curve_from_synthetic_outcomes() {
        // Horizon h gets h episodes of which exactly one succeeds.
        let mut ts = Vec::new();
        for h in 2..6u32 {
            for k in 0..h {
                ts.push(traj(
                    EnvKind::ListWorld,
                    OracleConfig::NONE,
                    h,
                    &[true],
                    k == 0,
                ));
            }
        }
        let g: GroupBy = "env,horizon".parse().unwrap();
        let r = aggregate(&ts, g);
        assert_eq!(r.len(), 4);
        for (row, h) in r.iter().zip(2..6u32) {
            assert_eq!(row.horizon, Some(h));
            assert_eq!(row.episodes, h as usize);
            assert!((row.success_rate - 1.0 / h as f64).abs() < 1e-12);
            assert!(row.config.is_none() && row.policy.is_none());
        }
    }

    #[test]
    fn config_groups_follow_canonical_order() {
        let ts: Vec<_> = OracleConfig::all()
            .iter()
            .rev()
            .map(|c| traj(EnvKind::TreeWorld, *c, 2, &[true], true))
            .collect();
        let r = aggregate(&ts, "env,config".parse().unwrap());
        let labels: Vec<String> = r.iter().map(|x| x.config.unwrap().label()).collect();
        assert_eq!(labels, ["none", "P", "S", "S+P", "S+H", "S+P+H"]);
    }

    #[test]
    fn csv_and_jsonl_exports() {
        let ts = [
            traj(
                EnvKind::ListWorld,
                OracleConfig::NONE,
                3,
                &[true, true, true],
                true,
            ),
            traj(
                EnvKind::ListWorld,
                OracleConfig::all()[3],
                3,
                &[false, true, true],
                false,
            ),
        ];
        let reports = aggregate(&ts, GroupBy::default());
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("r.csv");
        export_results(&reports, ExportFormat::Csv, &csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + reports.len());
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "listworld,none,3,p,1,1.0000,1.0000,0.0000");
        assert_eq!(lines[2], "listworld,S+P,3,p,1,0.0000,0.6667,0.0000");
        export_results(&reports, ExportFormat::Csv, dir.path().join("again.csv")).unwrap();
        assert_eq!(
            std::fs::read(&csv).unwrap(),
            std::fs::read(dir.path().join("again.csv")).unwrap()
        );

        let jl = dir.path().join("r.jsonl");
        export_results(&reports, ExportFormat::Jsonl, &jl).unwrap();
        assert_eq!(read_reports_jsonl(&jl).unwrap(), reports);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let good = serde_json::to_string(&traj(
            EnvKind::ListWorld,
            OracleConfig::NONE,
            1,
            &[true],
            true,
        ))
        .unwrap();
        std::fs::write(&p, format!("{good}\n{{broken\n")).unwrap();
        let err = read_trajectories(&p).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn table_has_header_and_rows() {
        let ts = [traj(
            EnvKind::ListWorld,
            OracleConfig::NONE,
            3,
            &[true],
            true,
        )];
        let table = render_table(&aggregate(&ts, GroupBy::default()));
        assert_eq!(table.lines().count(), 2);
        assert!(table.starts_with("env"));
    }
}
