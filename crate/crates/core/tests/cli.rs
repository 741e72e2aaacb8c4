use std::path::Path;
use std::process::{Command, Output};

use turnbench::eval::{read_reports_jsonl, read_trajectories, CSV_HEADER};

fn turnbench(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_turnbench"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn small_run(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--episodes",
        "2",
        "--seed",
        "3",
        "--concurrency",
        "3",
    ];
    args.extend_from_slice(extra);
    turnbench(&args, out)
}

#[test]
fn run_then_report_covers_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &["--config", "all"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // 3 envs x (4 + 3 + 3) cells x 2 instances x 6 configs.
    let trajs = read_trajectories(dir.path().join("trajectories.jsonl")).unwrap();
    assert_eq!(trajs.len(), (4 + 3 + 3) * 2 * 6);
    assert!(trajs.iter().all(|t| t.success));

    let report = turnbench(&["report", "--group-by", "env,config"], dir.path());
    assert!(
        report.status.success(),
        "{}",
        String::from_utf8_lossy(&report.stderr)
    );
    let rows = read_reports_jsonl(dir.path().join("report.jsonl")).unwrap();
    assert_eq!(rows.len(), 18);
    assert!(rows
        .iter()
        .all(|r| r.success_rate == 1.0 && r.horizon.is_none()));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), 19);
}

#[test]
fn rerun_skips_finished_episodes_and_repairs_a_torn_line() {
    let dir = tempfile::tempdir().unwrap();
    let flags = ["--env", "list", "--config", "none", "--config", "S,P"];
    assert!(small_run(dir.path(), &flags).status.success());
    let path = dir.path().join("trajectories.jsonl");
    let full = std::fs::read_to_string(&path).unwrap();
    assert_eq!(full.lines().count(), 16);

    let again = small_run(dir.path(), &flags);
    assert!(String::from_utf8_lossy(&again.stdout).contains("0 completed, 16 skipped"));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), full);

    // Simulate a crash mid-write: drop the last line and half of the one before.
    let lines: Vec<&str> = full.lines().collect();
    let keep = lines[..14].join("\n") + "\n" + &lines[14][..lines[14].len() / 2];
    std::fs::write(&path, keep).unwrap();
    let resumed = small_run(dir.path(), &flags);
    assert!(resumed.status.success());
    assert!(String::from_utf8_lossy(&resumed.stdout).contains("2 completed, 14 skipped"));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), full);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |o: Output| o.status.code();

    assert_eq!(
        code(turnbench(&["generate", "--config", "P,H"], dir.path())),
        Some(2)
    );
    assert_eq!(
        code(turnbench(&["generate", "--env", "chess"], dir.path())),
        Some(2)
    );
    assert_eq!(
        code(turnbench(
            &["generate", "--policy", "epsilon-noisy", "--epsilon", "1.5"],
            dir.path()
        )),
        Some(2)
    );

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let report = Command::new(env!("CARGO_BIN_EXE_turnbench"))
        .args(["report", "--trajectories"])
        .arg(&empty)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(report.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&report.stderr).contains("no episodes"));

    // Replaying from an empty cassette fails every episode without touching the network.
    let cassette = dir.path().join("cassette.jsonl");
    std::fs::write(&cassette, "").unwrap();
    let run = Command::new(env!("CARGO_BIN_EXE_turnbench"))
        .args([
            "run",
            "--env",
            "grid",
            "--episodes",
            "1",
            "--config",
            "none",
            "--policy",
            "llm",
        ])
        .args([
            "--endpoint",
            "http://127.0.0.1:9/v1",
            "--model",
            "m",
            "--mode",
            "replay",
            "--cassette",
        ])
        .arg(&cassette)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        run.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stderr).contains("no cassette entry"));

    let generate = turnbench(&["generate", "--episodes", "1"], dir.path());
    assert_eq!(generate.status.code(), Some(0));
    assert!(dir.path().join("spec.toml").exists());
}
