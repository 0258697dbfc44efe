//! Black-box tests of the `autotune` binary: flag precedence, exit codes,
//! and the stdout contracts of each subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_autotune"));
    cmd.env_remove("AUTOTUNE_SEED");
    cmd
}

fn write_job(dir: &Path, body: &str) -> PathBuf {
    write_named_job(dir, "job.toml", body)
}

fn write_named_job(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn basic_job(seed_line: &str, history_line: &str) -> String {
    format!(
        r#"
budget = 20
set_size = 5
{seed_line}
{history_line}
utility = "identity(throughput)"
goal = "maximize"

[space]
parameter = [
  {{ name = "x0", kind = "float", min = 0.0, max = 1.0 }},
  {{ name = "x1", kind = "float", min = 0.0, max = 1.0 }},
]

[target]
kind = "synthetic"
landscape = "bumpy"
"#
    )
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).unwrap()
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("terminated by signal")
}

#[test]
fn tune_is_deterministic_and_prints_the_best() {
    let dir = tempfile::tempdir().unwrap();
    let job = write_job(dir.path(), &basic_job("seed = 7", ""));
    let run = || bin().arg("tune").arg(&job).arg("--quiet").output().unwrap();
    let first = run();
    let second = run();
    assert_eq!(exit_code(&first), 0, "stderr: {}", stderr(&first));
    assert_eq!(stdout(&first), stdout(&second));
    let text = stdout(&first);
    assert!(text.contains("seed: 7"));
    assert!(text.contains("tests_run: 20"));
    assert!(text.contains("best_utility: "));
    assert!(text.contains("best.x0 = "));
}

#[test]
fn flag_overrides_beat_the_job_file() {
    let dir = tempfile::tempdir().unwrap();
    let job = write_job(dir.path(), &basic_job("seed = 7", ""));
    let output = bin()
        .arg("tune")
        .arg(&job)
        .args(["--budget", "10", "--set-size", "5", "--sampler", "uniform", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("tests_run: 10"));
    assert!(text.contains("rounds: 2"));
}

#[test]
fn seed_comes_from_flag_then_job_file_then_environment() {
    let dir = tempfile::tempdir().unwrap();
    let no_seed = write_job(dir.path(), &basic_job("", ""));

    let bare = bin().arg("tune").arg(&no_seed).arg("--quiet").output().unwrap();
    assert_eq!(exit_code(&bare), 2);
    assert!(stderr(&bare).contains("no seed"));

    let from_env = bin()
        .arg("tune")
        .arg(&no_seed)
        .arg("--quiet")
        .env("AUTOTUNE_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(exit_code(&from_env), 0);
    assert!(stdout(&from_env).contains("seed: 5"));

    let flag_beats_env = bin()
        .arg("tune")
        .arg(&no_seed)
        .args(["--seed", "9", "--quiet"])
        .env("AUTOTUNE_SEED", "5")
        .output()
        .unwrap();
    assert!(stdout(&flag_beats_env).contains("seed: 9"));

    let seeded = write_named_job(dir.path(), "seeded.toml", &basic_job("seed = 7", ""));
    let job_beats_env = bin()
        .arg("tune")
        .arg(&seeded)
        .arg("--quiet")
        .env("AUTOTUNE_SEED", "5")
        .output()
        .unwrap();
    assert!(stdout(&job_beats_env).contains("seed: 7"));

    let garbage_env = bin()
        .arg("tune")
        .arg(&no_seed)
        .arg("--quiet")
        .env("AUTOTUNE_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(exit_code(&garbage_env), 2);
}

#[test]
fn zero_set_size_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let job = write_job(dir.path(), &basic_job("seed = 7", ""));
    let output = bin()
        .arg("tune")
        .arg(&job)
        .args(["--set-size", "0"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 2);
    assert!(stderr(&output).contains("set_size"));
}

#[test]
fn bad_job_file_exits_2_with_a_location() {
    let dir = tempfile::tempdir().unwrap();
    let job = write_job(dir.path(), "budget = [nonsense");
    let output = bin().arg("tune").arg(&job).output().unwrap();
    assert_eq!(exit_code(&output), 2);
    assert!(stderr(&output).contains("error: "));
}

#[test]
fn report_summarizes_a_finished_run() {
    let dir = tempfile::tempdir().unwrap();
    let job = write_job(dir.path(), &basic_job("seed = 7", ""));
    let history = dir.path().join("run.jsonl");
    let tuned = bin()
        .arg("tune")
        .arg(&job)
        .arg("--quiet")
        .arg("--history")
        .arg(&history)
        .output()
        .unwrap();
    assert_eq!(exit_code(&tuned), 0, "stderr: {}", stderr(&tuned));

    let report = bin().arg("report").arg(&history).output().unwrap();
    assert_eq!(exit_code(&report), 0, "stderr: {}", stderr(&report));
    let text = stdout(&report);
    assert!(text.contains("job: dds+rbs, budget 20, set 5, seed 7"));
    assert!(text.contains("round 1: tests 5, best_so_far "));
    assert!(text.contains("round 4: tests 5, best_so_far "));
    assert!(text.contains("tests: 20 (0 failed)"));
    assert!(text.contains("best_utility: "));
}

#[test]
fn report_handles_an_empty_history() {
    let dir = tempfile::tempdir().unwrap();
    let job = write_job(dir.path(), &basic_job("seed = 7", ""));
    let history = dir.path().join("run.jsonl");
    bin()
        .arg("tune")
        .arg(&job)
        .arg("--quiet")
        .arg("--history")
        .arg(&history)
        .output()
        .unwrap();
    let header = std::fs::read_to_string(&history)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let header_only = dir.path().join("header_only.jsonl");
    std::fs::write(&header_only, header + "\n").unwrap();

    let report = bin().arg("report").arg(&header_only).output().unwrap();
    assert_eq!(exit_code(&report), 0);
    assert!(stdout(&report).contains("no tests recorded"));
}

#[test]
fn report_names_the_first_corrupt_line() {
    let dir = tempfile::tempdir().unwrap();
    let job = write_job(dir.path(), &basic_job("seed = 7", ""));
    let history = dir.path().join("run.jsonl");
    bin()
        .arg("tune")
        .arg(&job)
        .arg("--quiet")
        .arg("--history")
        .arg(&history)
        .output()
        .unwrap();
    let header = std::fs::read_to_string(&history)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let corrupt = dir.path().join("corrupt.jsonl");
    std::fs::write(&corrupt, header + "\n{broken\n").unwrap();

    let report = bin().arg("report").arg(&corrupt).output().unwrap();
    assert_eq!(exit_code(&report), 2);
    assert!(stderr(&report).contains("line 2"), "stderr: {}", stderr(&report));
}

#[test]
fn resume_finishes_an_interrupted_run_and_rejects_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let job = write_job(dir.path(), &basic_job("seed = 7", ""));
    let history = dir.path().join("run.jsonl");
    let full = bin()
        .arg("tune")
        .arg(&job)
        .arg("--quiet")
        .arg("--history")
        .arg(&history)
        .output()
        .unwrap();
    assert_eq!(exit_code(&full), 0);

    // cut the log mid-round and resume in place
    let lines: Vec<String> = std::fs::read_to_string(&history)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    std::fs::write(&history, lines[..8].join("\n") + "\n").unwrap();
    let resumed = bin()
        .arg("resume")
        .arg(&job)
        .arg("--history")
        .arg(&history)
        .output()
        .unwrap();
    assert_eq!(exit_code(&resumed), 0, "stderr: {}", stderr(&resumed));
    assert_eq!(stdout(&resumed), stdout(&full));

    let with_seed = bin()
        .arg("resume")
        .arg(&job)
        .arg("--history")
        .arg(&history)
        .args(["--seed", "9"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&with_seed), 2);
    assert!(stderr(&with_seed).contains("history header"));
}

#[test]
fn compare_emits_csv_and_rejects_unknown_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("cmp.csv");
    let output = bin()
        .arg("compare")
        .args(["--landscape", "bumpy", "--strategies", "dds+rbs,uniform+rbs"])
        .args(["--trials", "2", "--budget", "20", "--set-size", "10"])
        .arg("--out")
        .arg(&csv_path)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("dds+rbs on bumpy: median "));

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sampler,optimizer,landscape,seed,round,tests_used,best_utility"
    );
    // 2 strategies x 2 trials x 2 rounds
    assert_eq!(lines.count(), 8);

    // without --out the CSV itself goes to stdout
    let piped = bin()
        .arg("compare")
        .args(["--landscape", "bumpy", "--trials", "1", "--budget", "10", "--set-size", "10"])
        .output()
        .unwrap();
    assert!(stdout(&piped).starts_with("sampler,optimizer,landscape"));

    let unknown = bin()
        .arg("compare")
        .args(["--strategies", "dds+bogus", "--trials", "1"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&unknown), 2);

    let malformed = bin()
        .arg("compare")
        .args(["--strategies", "ddsrbs", "--trials", "1"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&malformed), 2);
    assert!(stderr(&malformed).contains("sampler>+<optimizer"));
}

#[test]
fn phi_prints_the_exact_slab_share() {
    let output = bin()
        .arg("phi")
        .args(["--landscape", "step_slab", "--y0", "100", "--resolution", "64"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "stderr: {}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("phi: 0.875"), "stdout: {text}");
    assert!(text.contains("points_total: 4096"));

    let bounded = bin()
        .arg("phi")
        .args(["--landscape", "step_slab", "--y0", "100", "--resolution", "64"])
        .args(["--bounds", "0.65:0.775,0:1"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&bounded), 0, "stderr: {}", stderr(&bounded));
    assert!(stdout(&bounded).contains("phi: 0"), "stdout: {}", stdout(&bounded));

    let unknown = bin()
        .arg("phi")
        .args(["--landscape", "nope", "--y0", "1"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&unknown), 2);
    assert!(stderr(&unknown).contains("step_slab"), "stderr: {}", stderr(&unknown));

    let bad_bounds = bin()
        .arg("phi")
        .args(["--landscape", "step_slab", "--y0", "100", "--bounds", "0.1:0.2"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&bad_bounds), 2);
}

#[test]
fn help_documents_every_subcommand() {
    let output = bin().arg("--help").output().unwrap();
    assert_eq!(exit_code(&output), 0);
    let text = stdout(&output);
    for subcommand in ["tune", "resume", "compare", "phi", "report"] {
        assert!(text.contains(subcommand), "missing {subcommand}");
    }
    let tune_help = bin().args(["tune", "--help"]).output().unwrap();
    let text = stdout(&tune_help);
    for flag in ["--budget", "--set-size", "--seed", "--sampler", "--optimizer", "--history"] {
        assert!(text.contains(flag), "missing {flag}");
    }
    assert!(text.contains("default"));
}
