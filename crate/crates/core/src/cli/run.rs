use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use super::CliError;
use crate::agent::{policy_for_episode, run_episode, PolicyHandle};
use crate::config::OracleConfig;
use crate::llm::LlmClient;
use crate::oracle::OracleOptions;
use crate::task::{EpisodeKey, TaskInstance, Termination, Trajectory};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub completed: usize,
    pub skipped: usize,
    pub failed: Vec<(EpisodeKey, String)>,
}

pub fn read_instances(path: &Path) -> Result<Vec<TaskInstance>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read instances {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            TaskInstance::from_json(l)
                .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Keys already present in a trajectory file. A torn final line (one
/// without a trailing newline) is cut off so appends stay well-formed.
pub fn completed_keys(path: &Path) -> Result<HashSet<EpisodeKey>, CliError> {
    let mut keys = HashSet::new();
    if !path.exists() {
        return Ok(keys);
    }
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut good_len = 0usize;
    let mut offset = 0usize;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        offset += line.len();
        let complete = line.ends_with('\n');
        if line.trim().is_empty() {
            good_len = offset;
            continue;
        }
        if !complete {
            break;
        }
        let t: Trajectory = serde_json::from_str(line)
            .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        keys.insert(t.episode_key());
        good_len = offset;
    }
    if good_len < text.len() {
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| CliError::Input(format!("cannot repair {}: {e}", path.display())))?;
        f.set_len(good_len as u64)
            .map_err(|e| CliError::Input(format!("cannot repair {}: {e}", path.display())))?;
    }
    Ok(keys)
}

struct Job<'a> {
    instance: &'a TaskInstance,
    config: OracleConfig,
}

/// Runs every (instance, config) episode not yet in `out`, appending
/// trajectories in job order regardless of which worker finishes first.
/// Episodes whose policy failed are reported and left out of the file so a
/// rerun retries them.
pub fn run_sweep(
    instances: &[TaskInstance],
    configs: &[OracleConfig],
    handle: &PolicyHandle,
    options: &OracleOptions,
    client: Option<Arc<LlmClient>>,
    concurrency: usize,
    out: &Path,
) -> Result<RunSummary, CliError> {
    let done = completed_keys(out)?;
    let fingerprint = handle.fingerprint();
    let mut summary = RunSummary::default();
    let mut jobs = Vec::new();
    for instance in instances {
        for &config in configs {
            let key = EpisodeKey {
                instance_id: instance.id.clone(),
                config,
                policy_fingerprint: fingerprint.clone(),
            };
            if done.contains(&key) {
                summary.skipped += 1;
            } else {
                jobs.push(Job { instance, config });
            }
        }
    }
    if jobs.is_empty() {
        return Ok(summary);
    }

    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", out.display())))?;
    let mut writer = BufWriter::new(file);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<Trajectory, String>)>();

    let write_result: Result<(), CliError> = std::thread::scope(|scope| {
        for _ in 0..concurrency.clamp(1, jobs.len()) {
            let tx = tx.clone();
            let jobs = &jobs;
            let next = &next;
            let client = client.clone();
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let result = policy_for_episode(handle, job.instance, job.config, client.clone())
                    .map_err(|e| e.to_string())
                    .and_then(|mut policy| {
                        run_episode(job.instance, policy.as_mut(), handle, job.config, options)
                            .map_err(|e| e.to_string())
                    });
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut cursor = 0usize;
        for (i, result) in rx {
            pending.insert(i, result);
            while let Some(result) = pending.remove(&cursor) {
                let job = &jobs[cursor];
                cursor += 1;
                let key = EpisodeKey {
                    instance_id: job.instance.id.clone(),
                    config: job.config,
                    policy_fingerprint: fingerprint.clone(),
                };
                match result {
                    Ok(t) if t.terminated_by == Termination::PolicyFailure => {
                        summary.failed.push((key, t.error.unwrap_or_default()));
                    }
                    Ok(t) => {
                        writeln!(writer, "{}", t.to_json_line())
                            .and_then(|_| writer.flush())
                            .map_err(|e| {
                                CliError::Input(format!("cannot write {}: {e}", out.display()))
                            })?;
                        summary.completed += 1;
                    }
                    Err(e) => summary.failed.push((key, e)),
                }
            }
        }
        Ok(())
    });
    write_result?;
    Ok(summary)
}
