//! Runs one configuration against the target system and reports metrics.
//!
//! Two target kinds exist behind one interface:
//!
//! - process targets run user-supplied setup/test/teardown command lines
//!   under a timeout, with the decoded configuration rendered either as
//!   `CONF_<name>` environment variables or as a `<name>=<value>` file, and
//!   metrics read back as space-separated `<name>=<number>` pairs from the
//!   final stdout line or a results file;
//! - synthetic targets evaluate a registered landscape, with optional
//!   Gaussian relative noise that is a pure function of (run seed, test
//!   index) so replays and resumes see identical values.
//!
//! Tests never panic the tuner: crashes, timeouts, and unparseable output
//! all come back as failed outcomes with a reason. A process target runs at
//! most one test at a time; the tuning loop is sequential by contract.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};
use wait_timeout::ChildExt;

use crate::error::{Error, Result};
use crate::landscape::{get_landscape, LandscapeDef};
use crate::seeding::{per_test_rng, STREAM_NOISE};
use crate::space::{ConfigSetting, ParameterSpace};
use crate::utility::{MetricDecl, MetricVector};

/// Captured output kept per test, per stream.
const LOG_CAPTURE_LIMIT: u64 = 1 << 20;

/// How the decoded configuration reaches the process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigRender {
    /// `CONF_<name>` environment variables on every command.
    Env,
    /// A `<name>=<value>` file, one parameter per line in declaration order.
    File {
        path: PathBuf,
        #[serde(default)]
        format: FileFormat,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    #[default]
    KeyValue,
}

impl Default for ConfigRender {
    fn default() -> Self {
        ConfigRender::Env
    }
}

/// Where metrics are read from after the test command succeeds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsSource {
    #[default]
    StdoutLastLine,
    ResultsFile {
        path: PathBuf,
    },
}

fn default_repetitions() -> u32 {
    1
}

/// A real system driven through shell commands.
///
/// No `deny_unknown_fields` here: the internally tagged [`TargetSpec`]
/// buffers fields before dispatch, which that attribute cannot handle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    #[serde(default)]
    pub setup_command: Option<String>,
    pub test_command: String,
    #[serde(default)]
    pub teardown_command: Option<String>,
    #[serde(default)]
    pub config_render: ConfigRender,
    #[serde(default)]
    pub metrics_source: MetricsSource,
    pub timeout_secs: f64,
    pub declared_metrics: Vec<MetricDecl>,
    /// Repeat the test command and average the metrics.
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
}

/// What the tuner measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    Process(ProcessSpec),
    Synthetic {
        landscape: String,
        /// Relative standard deviation of multiplicative Gaussian noise.
        #[serde(default)]
        noise: f64,
    },
}

/// Why a test failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    NonzeroExit,
    Timeout,
    ParseError,
    SetupError,
}

impl std::fmt::Display for FailReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FailReason::NonzeroExit => "nonzero_exit",
            FailReason::Timeout => "timeout",
            FailReason::ParseError => "parse_error",
            FailReason::SetupError => "setup_error",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestStatus {
    Ok,
    Failed(FailReason),
}

impl TestStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, TestStatus::Ok)
    }
}

/// Result of running one configuration.
#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub status: TestStatus,
    /// Present iff the test succeeded; all declared metrics, finite.
    pub metrics: Option<MetricVector>,
    pub duration: Duration,
    /// Captured command output, truncated; empty for synthetic targets.
    pub raw_log: String,
}

impl TestOutcome {
    fn failed(reason: FailReason, duration: Duration, raw_log: String) -> Self {
        Self {
            status: TestStatus::Failed(reason),
            metrics: None,
            duration,
            raw_log,
        }
    }
}

/// A target spec validated against a space and tied to a run seed.
#[derive(Debug, Clone)]
pub struct BoundTarget {
    spec: TargetSpec,
    space: ParameterSpace,
    landscape: Option<LandscapeDef>,
    run_seed: u64,
}

impl BoundTarget {
    pub fn bind(spec: TargetSpec, space: &ParameterSpace, run_seed: u64) -> Result<Self> {
        let landscape = match &spec {
            TargetSpec::Synthetic { landscape, noise } => {
                if !(*noise >= 0.0) {
                    return Err(Error::BadTargetSpec {
                        detail: format!("noise {noise} must be non-negative"),
                    });
                }
                let def = get_landscape(landscape)?;
                if def.dimension() != space.dimension() {
                    return Err(Error::BadTargetSpec {
                        detail: format!(
                            "landscape `{landscape}` is {}-dimensional but the space has {} parameters",
                            def.dimension(),
                            space.dimension()
                        ),
                    });
                }
                Some(def)
            }
            TargetSpec::Process(proc) => {
                if !(proc.timeout_secs > 0.0) {
                    return Err(Error::BadTargetSpec {
                        detail: format!("timeout_secs {} must be positive", proc.timeout_secs),
                    });
                }
                if proc.repetitions == 0 {
                    return Err(Error::BadTargetSpec {
                        detail: "repetitions must be at least 1".into(),
                    });
                }
                if proc.declared_metrics.is_empty() {
                    return Err(Error::BadTargetSpec {
                        detail: "a process target must declare at least one metric".into(),
                    });
                }
                for (i, m) in proc.declared_metrics.iter().enumerate() {
                    if proc.declared_metrics[..i].iter().any(|d| d.name == m.name) {
                        return Err(Error::BadTargetSpec {
                            detail: format!("metric `{}` declared twice", m.name),
                        });
                    }
                }
                for command in [
                    Some(&proc.test_command),
                    proc.setup_command.as_ref(),
                    proc.teardown_command.as_ref(),
                ]
                .into_iter()
                .flatten()
                {
                    for name in scan_placeholders(command) {
                        if !space.parameters().iter().any(|p| p.name == name) {
                            return Err(Error::BadTargetSpec {
                                detail: format!(
                                    "command references unknown parameter `{{{name}}}`"
                                ),
                            });
                        }
                    }
                }
                None
            }
        };
        Ok(Self {
            spec,
            space: space.clone(),
            landscape,
            run_seed,
        })
    }

    pub fn spec(&self) -> &TargetSpec {
        &self.spec
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    /// Metrics the target promises, with positivity flags.
    pub fn declared_metrics(&self) -> Vec<MetricDecl> {
        match &self.spec {
            TargetSpec::Process(proc) => proc.declared_metrics.clone(),
            TargetSpec::Synthetic { .. } => vec![self.landscape.as_ref().unwrap().metric_decl()],
        }
    }

    /// Run one test. The setting must be valid for the bound space;
    /// operational failures are reported in the outcome, never panicked.
    pub fn run_test(&self, setting: &ConfigSetting, test_index: u64) -> Result<TestOutcome> {
        self.space.validate(setting)?;
        match &self.spec {
            TargetSpec::Synthetic { noise, .. } => Ok(self.run_synthetic(setting, *noise, test_index)),
            TargetSpec::Process(proc) => Ok(self.run_process(proc, setting)),
        }
    }

    fn run_synthetic(&self, setting: &ConfigSetting, noise: f64, test_index: u64) -> TestOutcome {
        let start = Instant::now();
        let def = self.landscape.as_ref().unwrap();
        let unit: Vec<f64> = self
            .space
            .encoded_ranges()
            .iter()
            .zip(&setting.values)
            .map(|(&(low, high), &x)| (x - low) / (high - low))
            .collect();
        let mut value = def.eval_unit(&unit);
        if noise > 0.0 {
            let mut rng = per_test_rng(self.run_seed, STREAM_NOISE, test_index);
            let z: f64 = StandardNormal.sample(&mut rng);
            // metric stays positive under the declared contract even when a
            // noise excursion would cross zero
            value = (value * (1.0 + noise * z)).max(f64::EPSILON);
        }
        TestOutcome {
            status: TestStatus::Ok,
            metrics: Some(
                MetricVector::from_pairs([(def.metric_decl().name, value)]).expect("finite"),
            ),
            duration: start.elapsed(),
            raw_log: String::new(),
        }
    }

    fn run_process(&self, proc: &ProcessSpec, setting: &ConfigSetting) -> TestOutcome {
        let natives = self
            .space
            .decode_setting(setting)
            .expect("validated setting decodes");
        let rendered: Vec<(String, String)> = self
            .space
            .parameters()
            .iter()
            .zip(&natives)
            .map(|(p, v)| (p.name.clone(), v.to_string()))
            .collect();
        let by_name: BTreeMap<String, String> = rendered.iter().cloned().collect();
        let envs: Vec<(String, String)> = match proc.config_render {
            ConfigRender::Env => rendered
                .iter()
                .map(|(name, value)| (format!("CONF_{name}"), value.clone()))
                .collect(),
            ConfigRender::File { .. } => Vec::new(),
        };
        let timeout = Duration::from_secs_f64(proc.timeout_secs);
        let mut log = String::new();

        if let ConfigRender::File { path, .. } = &proc.config_render {
            let mut content = String::new();
            for (name, value) in &rendered {
                content.push_str(name);
                content.push('=');
                content.push_str(value);
                content.push('\n');
            }
            let write = || -> std::io::Result<()> {
                if let Some(parent) = path.parent() {
                    if !parent.as_os_str().is_empty() {
                        std::fs::create_dir_all(parent)?;
                    }
                }
                std::fs::write(path, content)
            };
            if let Err(e) = write() {
                return TestOutcome::failed(
                    FailReason::SetupError,
                    Duration::ZERO,
                    format!("writing config file {}: {e}", path.display()),
                );
            }
        }

        if let Some(setup) = &proc.setup_command {
            let run = run_shell(&expand_placeholders(setup, &by_name), &envs, timeout);
            append_log(&mut log, "setup", &run);
            if !run_succeeded(&run) {
                // nothing measured yet; clean up best-effort and report
                if let Some(teardown) = &proc.teardown_command {
                    let run = run_shell(&expand_placeholders(teardown, &by_name), &envs, timeout);
                    append_log(&mut log, "teardown", &run);
                }
                return TestOutcome::failed(FailReason::SetupError, Duration::ZERO, log);
            }
        }

        let command = expand_placeholders(&proc.test_command, &by_name);
        let mut rep_metrics: Vec<Vec<(String, f64)>> = Vec::new();
        let mut test_duration = Duration::ZERO;
        let mut failure: Option<FailReason> = None;
        let mut parse_detail = String::new();
        for _ in 0..proc.repetitions {
            let run = run_shell(&command, &envs, timeout);
            append_log(&mut log, "test", &run);
            test_duration += run_duration(&run);
            match &run {
                Err(_) => {
                    failure = Some(FailReason::SetupError);
                }
                Ok(out) if out.timed_out => {
                    failure = Some(FailReason::Timeout);
                }
                Ok(out) if out.status != Some(0) => {
                    failure = Some(FailReason::NonzeroExit);
                }
                Ok(out) => {
                    let text = match &proc.metrics_source {
                        MetricsSource::StdoutLastLine => Ok(out.stdout.clone()),
                        MetricsSource::ResultsFile { path } => std::fs::read_to_string(path)
                            .map_err(|e| format!("reading {}: {e}", path.display())),
                    };
                    match text.and_then(|t| parse_metrics_text(&t, &proc.declared_metrics)) {
                        Ok(pairs) => rep_metrics.push(pairs),
                        Err(detail) => {
                            parse_detail = detail;
                            failure = Some(FailReason::ParseError);
                        }
                    }
                }
            }
            if failure.is_some() {
                break;
            }
        }
        if !parse_detail.is_empty() {
            log.push_str("[metrics] ");
            log.push_str(&parse_detail);
            log.push('\n');
        }

        let mut status = match failure {
            Some(reason) => TestStatus::Failed(reason),
            None => TestStatus::Ok,
        };

        if let Some(teardown) = &proc.teardown_command {
            let run = run_shell(&expand_placeholders(teardown, &by_name), &envs, timeout);
            append_log(&mut log, "teardown", &run);
            // a broken teardown poisons later tests; report it even when the
            // test itself measured fine
            if !run_succeeded(&run) && status.is_ok() {
                status = TestStatus::Failed(FailReason::SetupError);
            }
        }

        let metrics = if status.is_ok() {
            let averaged: Vec<(String, f64)> = proc
                .declared_metrics
                .iter()
                .map(|d| {
                    let sum: f64 = rep_metrics
                        .iter()
                        .map(|pairs| pairs.iter().find(|(n, _)| n == &d.name).unwrap().1)
                        .sum();
                    (d.name.clone(), sum / rep_metrics.len() as f64)
                })
                .collect();
            match MetricVector::from_pairs(averaged) {
                Ok(m) => Some(m),
                Err(_) => {
                    status = TestStatus::Failed(FailReason::ParseError);
                    None
                }
            }
        } else {
            None
        };

        truncate_log(&mut log);
        TestOutcome {
            status,
            metrics,
            duration: test_duration,
            raw_log: log,
        }
    }
}

struct RunOutput {
    status: Option<i32>,
    timed_out: bool,
    stdout: String,
    stderr: String,
    duration: Duration,
}

fn run_succeeded(run: &std::io::Result<RunOutput>) -> bool {
    matches!(run, Ok(out) if !out.timed_out && out.status == Some(0))
}

fn run_duration(run: &std::io::Result<RunOutput>) -> Duration {
    match run {
        Ok(out) => out.duration,
        Err(_) => Duration::ZERO,
    }
}

fn append_log(log: &mut String, phase: &str, run: &std::io::Result<RunOutput>) {
    match run {
        Err(e) => log.push_str(&format!("[{phase}] spawn failed: {e}\n")),
        Ok(out) => {
            let state = if out.timed_out {
                "timed out".to_string()
            } else {
                format!("exit {:?}", out.status)
            };
            log.push_str(&format!("[{phase}] {state}\n"));
            if !out.stdout.is_empty() {
                log.push_str(&out.stdout);
                if !out.stdout.ends_with('\n') {
                    log.push('\n');
                }
            }
            if !out.stderr.is_empty() {
                log.push_str(&out.stderr);
                if !out.stderr.ends_with('\n') {
                    log.push('\n');
                }
            }
        }
    }
}

fn truncate_log(log: &mut String) {
    const LIMIT: usize = 16 * 1024;
    if log.len() > LIMIT {
        let mut cut = LIMIT;
        while !log.is_char_boundary(cut) {
            cut -= 1;
        }
        log.truncate(cut);
        log.push_str("\n[truncated]\n");
    }
}

/// Run a command line through `sh -c` in its own process group, draining
/// output on threads so a chatty child cannot deadlock against the pipe,
/// and killing the whole group on timeout.
fn run_shell(
    command: &str,
    envs: &[(String, String)],
    timeout: Duration,
) -> std::io::Result<RunOutput> {
    use std::os::unix::process::CommandExt;

    let start = Instant::now();
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .process_group(0)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .envs(envs.iter().map(|(k, v)| (k.clone(), v.clone())))
        .spawn()?;

    let mut stdout_pipe = child.stdout.take().expect("piped");
    let mut stderr_pipe = child.stderr.take().expect("piped");
    let out_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = (&mut stdout_pipe).take(LOG_CAPTURE_LIMIT).read_to_end(&mut buf);
        buf
    });
    let err_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = (&mut stderr_pipe).take(LOG_CAPTURE_LIMIT).read_to_end(&mut buf);
        buf
    });

    let (status, timed_out) = match child.wait_timeout(timeout)? {
        Some(status) => (status.code(), false),
        None => {
            // hard kill of the process group; the group id equals the child
            // pid because of process_group(0)
            unsafe {
                libc::kill(-(child.id() as i32), libc::SIGKILL);
            }
            let _ = child.wait();
            (None, true)
        }
    };
    let duration = start.elapsed();
    let stdout = String::from_utf8_lossy(&out_thread.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err_thread.join().unwrap_or_default()).into_owned();
    Ok(RunOutput {
        status,
        timed_out,
        stdout,
        stderr,
    duration,
    })
}

/// `{name}` placeholders in command lines; `${...}` is left to the shell.
fn scan_placeholders(template: &str) -> Vec<String> {
    let bytes = template.as_bytes();
    let mut names = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' && (i == 0 || bytes[i - 1] != b'$') {
            let start = i + 1;
            let mut end = start;
            while end < bytes.len()
                && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
            {
                end += 1;
            }
            if end > start && end < bytes.len() && bytes[end] == b'}' {
                names.push(template[start..end].to_string());
                i = end + 1;
                continue;
            }
        }
        i += 1;
    }
    names
}

fn expand_placeholders(template: &str, values: &BTreeMap<String, String>) -> String {
    let mut result = template.to_string();
    for (name, value) in values {
        result = result.replace(&format!("{{{name}}}"), value);
    }
    result
}

/// Parse the last non-empty line of `text` as space-separated
/// `<name>=<number>` pairs; every declared metric must be present.
fn parse_metrics_text(
    text: &str,
    declared: &[MetricDecl],
) -> std::result::Result<Vec<(String, f64)>, String> {
    let line = text
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| "no output line to parse".to_string())?;
    let mut pairs: Vec<(String, f64)> = Vec::new();
    for token in line.split_whitespace() {
        let (name, value) = token
            .split_once('=')
            .ok_or_else(|| format!("token `{token}` is not <name>=<number>"))?;
        if name.is_empty() {
            return Err(format!("token `{token}` has an empty metric name"));
        }
        let value: f64 = value
            .parse()
            .map_err(|_| format!("metric `{name}` has non-numeric value `{value}`"))?;
        if !value.is_finite() {
            return Err(format!("metric `{name}` is not finite"));
        }
        if pairs.iter().any(|(n, _)| n == name) {
            return Err(format!("metric `{name}` appears twice"));
        }
        pairs.push((name.to_string(), value));
    }
    for d in declared {
        if !pairs.iter().any(|(n, _)| n == &d.name) {
            return Err(format!("declared metric `{}` missing from `{line}`", d.name));
        }
    }
    Ok(pairs)
}
