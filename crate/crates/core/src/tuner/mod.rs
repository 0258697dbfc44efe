//! The tuning loop: drives sampling, execution, and the search strategy
//! against a budget, records history, and supports crash-safe resume.
//!
//! Everything random flows from one run seed through named streams, and the
//! per-test noise of synthetic targets is keyed by test index, so rerunning
//! a job with the same seed reproduces the run bit-for-bit. Resume exploits
//! this: the loop is replayed from the start, already-recorded outcomes are
//! fed back instead of re-executing tests (with the regenerated settings
//! checked against the recorded ones), and execution picks up where the
//! history stops. A resumed run therefore ends in exactly the state an
//! uninterrupted run would have reached.

pub mod history;
pub mod job;

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::executor::{BoundTarget, FailReason, TestStatus};
use crate::optimizer::{
    RbsOptimizer, RoundAction, RoundReason, RrsOptimizer, Sample, SampleStatus, SearchStrategy,
};
use crate::sampler::{self, SampleBatch, SamplerState};
use crate::seeding::{derive_seed, STREAM_SAMPLER};
use crate::space::{ConfigSetting, NativeValue, ParameterSpace};
use crate::utility::{orient_for_maximization, GoalDirection, UtilitySpec};

use history::{
    schema_hash, unix_ms_now, FinalRecord, HeaderRecord, HistoryFile, HistoryRecord, RoundRecord,
    ScopeKind, TestRecord, TestSource, HISTORY_VERSION,
};

pub use history::{read_history, FileSink, HistorySink, MemorySink, NullSink};
pub use job::{OptimizerChoice, SamplerChoice, TuningJob};

/// What a finished run found.
#[derive(Debug, Clone)]
pub struct TuningOutcome {
    pub seed: u64,
    pub best_test_index: u64,
    pub best_encoded: ConfigSetting,
    pub best_decoded: BTreeMap<String, NativeValue>,
    pub best_metrics: Option<crate::utility::MetricVector>,
    pub best_utility: f64,
    pub tests_run: u64,
    pub rounds_completed: u64,
    /// Whole-space rounds entered because a bounded round failed to improve.
    pub whole_space_restarts: u64,
    /// Failed tests by reason label.
    pub failure_counts: BTreeMap<String, u64>,
}

fn goal_label(goal: GoalDirection) -> &'static str {
    match goal {
        GoalDirection::Maximize => "maximize",
        GoalDirection::Minimize => "minimize",
    }
}

fn job_schema_hash(j: &TuningJob, seed: u64) -> String {
    schema_hash(
        &j.space.canonical_description(),
        &j.target,
        &j.utility.to_string(),
        goal_label(j.goal),
        j.budget,
        j.set_size,
        &j.sampler.to_string(),
        &j.optimizer.to_string(),
        seed,
    )
}

fn make_header(j: &TuningJob, seed: u64) -> HeaderRecord {
    HeaderRecord {
        version: HISTORY_VERSION,
        schema_hash: job_schema_hash(j, seed),
        seed,
        budget: j.budget,
        set_size: j.set_size,
        sampler: j.sampler.to_string(),
        optimizer: j.optimizer.to_string(),
        utility: j.utility.to_string(),
        goal: goal_label(j.goal).to_string(),
        space: j.space.canonical_description(),
        target: j.target.clone(),
        started_unix_ms: unix_ms_now(),
    }
}

/// Run a job from scratch, recording into `sink`.
pub fn run_tuning(job: &TuningJob, seed: u64, sink: &mut dyn HistorySink) -> Result<TuningOutcome> {
    sink.record(&HistoryRecord::Header(make_header(job, seed)))?;
    drive(job, seed, sink, &[], 0)
}

/// Continue an interrupted run from its history file. The job must hash to
/// the recorded schema; the seed always comes from the header.
pub fn resume_tuning(job: &TuningJob, history_path: &Path) -> Result<TuningOutcome> {
    let file = read_history(history_path)?;
    check_schema(job, &file)?;
    if file.final_record.is_some() {
        return reconstruct_outcome(&file);
    }
    let mut sink = FileSink::open(history_path)?;
    drive(job, file.header.seed, &mut sink, &file.tests, file.rounds.len())
}

fn check_schema(job: &TuningJob, file: &HistoryFile) -> Result<()> {
    let expected = job_schema_hash(job, file.header.seed);
    if expected != file.header.schema_hash {
        return Err(Error::SchemaMismatch {
            expected,
            found: file.header.schema_hash.clone(),
        });
    }
    Ok(())
}

/// Rebuild the outcome of an already-complete run from its records.
fn reconstruct_outcome(file: &HistoryFile) -> Result<TuningOutcome> {
    let final_record = file.final_record.as_ref().expect("caller checked");
    let best = file
        .tests
        .get(final_record.best_test_index as usize)
        .ok_or(Error::HistoryCorrupt {
            line: 0,
            detail: "final record points at a missing test".into(),
        })?;
    let mut failure_counts = BTreeMap::new();
    for t in &file.tests {
        if let Some(reason) = t.reason {
            *failure_counts.entry(reason.to_string()).or_insert(0) += 1;
        }
    }
    let restarts = file
        .rounds
        .iter()
        .filter(|r| r.reason == RoundReason::NoImprovementRestart && r.next_action == "whole")
        .count() as u64;
    Ok(TuningOutcome {
        seed: file.header.seed,
        best_test_index: final_record.best_test_index,
        best_encoded: ConfigSetting::new(final_record.best_encoded.clone()),
        best_decoded: final_record.best_decoded.clone(),
        best_metrics: best.metrics.clone(),
        best_utility: final_record.best_utility,
        tests_run: final_record.tests_run,
        rounds_completed: final_record.rounds,
        whole_space_restarts: restarts,
        failure_counts,
    })
}

/// Largest side length whose full grid fits in `batch` tests.
fn grid_side(batch: usize, dim: usize) -> usize {
    let fits = |side: usize| {
        (0..dim).try_fold(1usize, |acc, _| acc.checked_mul(side)).map_or(false, |t| t <= batch)
    };
    let mut side = ((batch as f64).powf(1.0 / dim as f64).floor() as usize).max(1);
    while fits(side + 1) {
        side += 1;
    }
    while side > 1 && !fits(side) {
        side -= 1;
    }
    side
}

fn sample_whole(
    state: &mut SamplerState,
    choice: SamplerChoice,
    space: &ParameterSpace,
    k: usize,
) -> Result<SampleBatch> {
    match choice {
        SamplerChoice::Dds => sampler::dds_sample(state, space, k),
        SamplerChoice::Uniform => sampler::uniform_sample(state, space, k),
        SamplerChoice::Lhs => sampler::lhs_sample(state, space, k),
        SamplerChoice::Grid => sampler::grid_sample(state, space, grid_side(k, space.dimension())),
    }
}

fn sample_bounded(
    state: &mut SamplerState,
    choice: SamplerChoice,
    space: &ParameterSpace,
    bounds: &[(f64, f64)],
    k: usize,
) -> Result<SampleBatch> {
    match choice {
        SamplerChoice::Dds => sampler::dds_sample_within(state, space, bounds, k),
        SamplerChoice::Uniform => sampler::uniform_sample_within(state, space, bounds, k),
        SamplerChoice::Lhs => sampler::lhs_sample_within(state, space, bounds, k),
        SamplerChoice::Grid => {
            sampler::grid_sample_within(state, space, bounds, grid_side(k, space.dimension()))
        }
    }
}

struct ExecutedTest {
    status: SampleStatus,
    reason: Option<FailReason>,
    metrics: Option<crate::utility::MetricVector>,
    utility: Option<f64>,
    duration_ms: f64,
    replayed: bool,
}

/// Execute one test, or feed back its recorded outcome during replay.
fn run_or_replay(
    target: &BoundTarget,
    utility: &UtilitySpec,
    setting: &ConfigSetting,
    test_index: u64,
    replay: &[TestRecord],
) -> Result<ExecutedTest> {
    if let Some(record) = replay.get(test_index as usize) {
        if record.encoded != setting.values {
            return Err(Error::ReplayMismatch {
                test_index,
                detail: format!(
                    "regenerated setting {:?} differs from recorded {:?}",
                    setting.values, record.encoded
                ),
            });
        }
        let utility_value = match record.status {
            SampleStatus::Ok => {
                let metrics = record.metrics.as_ref().ok_or(Error::ReplayMismatch {
                    test_index,
                    detail: "successful test recorded without metrics".into(),
                })?;
                Some(utility.evaluate(metrics).map_err(|e| Error::ReplayMismatch {
                    test_index,
                    detail: format!("recorded metrics no longer evaluate: {e}"),
                })?)
            }
            SampleStatus::Failed => None,
        };
        return Ok(ExecutedTest {
            status: record.status,
            reason: record.reason,
            metrics: record.metrics.clone(),
            utility: utility_value,
            duration_ms: record.duration_ms,
            replayed: true,
        });
    }

    let outcome = target.run_test(setting, test_index)?;
    let duration_ms = outcome.duration.as_secs_f64() * 1000.0;
    match outcome.status {
        TestStatus::Failed(reason) => Ok(ExecutedTest {
            status: SampleStatus::Failed,
            reason: Some(reason),
            metrics: None,
            utility: None,
            duration_ms,
            replayed: false,
        }),
        TestStatus::Ok => {
            let metrics = outcome.metrics.expect("successful test carries metrics");
            // a metric vector the utility cannot evaluate (zero denominator,
            // overflow) makes the test unusable, not the run fatal
            match utility.evaluate(&metrics) {
                Ok(value) => Ok(ExecutedTest {
                    status: SampleStatus::Ok,
                    reason: None,
                    metrics: Some(metrics),
                    utility: Some(value),
                    duration_ms,
                    replayed: false,
                }),
                Err(_) => Ok(ExecutedTest {
                    status: SampleStatus::Failed,
                    reason: Some(FailReason::ParseError),
                    metrics: Some(metrics),
                    utility: None,
                    duration_ms,
                    replayed: false,
                }),
            }
        }
    }
}

fn action_label(action: &RoundAction) -> &'static str {
    match action {
        RoundAction::SampleWhole => "whole",
        RoundAction::SampleBounded(_) => "bounded",
        RoundAction::Stop => "stop",
    }
}

fn drive(
    job: &TuningJob,
    seed: u64,
    sink: &mut dyn HistorySink,
    replay: &[TestRecord],
    rounds_recorded: usize,
) -> Result<TuningOutcome> {
    let target = BoundTarget::bind(job.target.clone(), &job.space, seed)?;
    let declared = target.declared_metrics();
    job.utility.validate_against(&declared)?;
    let utility = orient_for_maximization(job.utility.clone(), job.goal, &declared)?;
    let mut optimizer: Box<dyn SearchStrategy> = match job.optimizer {
        OptimizerChoice::Rbs => Box::new(RbsOptimizer::new(
            job.space.clone(),
            job.budget,
            job.set_size,
        )),
        OptimizerChoice::Rrs => Box::new(RrsOptimizer::new(job.space.clone(), job.budget)),
    };
    let mut sampler_state = SamplerState::new(derive_seed(seed, STREAM_SAMPLER));

    let mut test_index: u64 = 0;
    let mut round: u64 = 0;
    let mut failure_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut whole_space_restarts: u64 = 0;

    let record_test = |sink: &mut dyn HistorySink,
                           executed: &ExecutedTest,
                           setting: &ConfigSetting,
                           cell: Option<Vec<usize>>,
                           source: TestSource,
                           scope: ScopeKind,
                           test_index: u64,
                           round: u64,
                           failure_counts: &mut BTreeMap<String, u64>|
     -> Result<()> {
        if let Some(reason) = executed.reason {
            *failure_counts.entry(reason.to_string()).or_insert(0) += 1;
        }
        if executed.replayed {
            return Ok(());
        }
        let decoded: BTreeMap<String, NativeValue> = job
            .space
            .parameters()
            .iter()
            .zip(job.space.decode_setting(setting)?)
            .map(|(p, v)| (p.name.clone(), v))
            .collect();
        sink.record(&HistoryRecord::Test(TestRecord {
            test_index,
            round,
            scope,
            source,
            cell,
            encoded: setting.values.clone(),
            decoded,
            metrics: executed.metrics.clone(),
            utility: executed.utility,
            status: executed.status,
            reason: executed.reason,
            duration_ms: executed.duration_ms,
            unix_ms: unix_ms_now(),
        }))
    };

    if let Some(baseline) = &job.baseline {
        let setting = job.encode_baseline(baseline)?;
        let executed = run_or_replay(&target, &utility, &setting, test_index, replay)?;
        record_test(
            sink,
            &executed,
            &setting,
            None,
            TestSource::Baseline,
            ScopeKind::Whole,
            test_index,
            round,
            &mut failure_counts,
        )?;
        optimizer.ingest_baseline(Sample {
            setting,
            metrics: executed.metrics,
            utility: executed.utility,
            round,
            test_index,
            status: executed.status,
        })?;
        test_index += 1;
    }

    let mut action = RoundAction::SampleWhole;
    loop {
        let remaining = optimizer.state().remaining_budget();
        if remaining == 0 {
            break;
        }
        // the last round is truncated to the leftover budget, never skipped
        let k = optimizer.desired_batch().min(remaining as usize);
        let (batch, scope) = match &action {
            RoundAction::SampleWhole => (
                sample_whole(&mut sampler_state, job.sampler, &job.space, k)?,
                ScopeKind::Whole,
            ),
            RoundAction::SampleBounded(bounds) => {
                // bounded subspaces get a fresh divergence state; the fork
                // seed is drawn either way so replay stays aligned
                let mut sub = SamplerState::new(sampler_state.fork_seed());
                (
                    sample_bounded(&mut sub, job.sampler, &job.space, bounds.as_slice(), k)?,
                    ScopeKind::Bounded,
                )
            }
            RoundAction::Stop => break,
        };
        round += 1;

        let mut samples = Vec::with_capacity(batch.len());
        for (setting, cell) in batch.settings.iter().zip(&batch.cells) {
            let executed = run_or_replay(&target, &utility, setting, test_index, replay)?;
            record_test(
                sink,
                &executed,
                setting,
                Some(cell.clone()),
                TestSource::from(batch.origin),
                scope,
                test_index,
                round,
                &mut failure_counts,
            )?;
            samples.push(Sample {
                setting: setting.clone(),
                metrics: executed.metrics,
                utility: executed.utility,
                round,
                test_index,
                status: executed.status,
            });
            test_index += 1;
        }

        let decision = optimizer.step(&samples)?;
        if round == 1 && optimizer.best().is_none() {
            // nothing usable came out of the very first batch: the target
            // is broken, burning more budget will not help
            return Err(Error::TargetUnusable { round });
        }
        if decision.reason == RoundReason::NoImprovementRestart
            && matches!(decision.action, RoundAction::SampleWhole)
        {
            whole_space_restarts += 1;
        }
        if round > rounds_recorded as u64 {
            sink.record(&HistoryRecord::Round(RoundRecord {
                round,
                next_action: action_label(&decision.action).to_string(),
                reason: decision.reason,
                bounds: match &decision.action {
                    RoundAction::SampleBounded(b) => Some(b.as_slice().to_vec()),
                    _ => None,
                },
            }))?;
        }
        action = decision.action;
        if matches!(action, RoundAction::Stop) {
            break;
        }
    }

    if (test_index as usize) < replay.len() {
        return Err(Error::HistoryCorrupt {
            line: 0,
            detail: format!(
                "history holds {} tests but the budget only allows {test_index}",
                replay.len()
            ),
        });
    }

    let best = optimizer
        .best()
        .cloned()
        .ok_or(Error::AllTestsFailed)?;
    let best_decoded: BTreeMap<String, NativeValue> = job
        .space
        .parameters()
        .iter()
        .zip(job.space.decode_setting(&best.setting)?)
        .map(|(p, v)| (p.name.clone(), v))
        .collect();
    let outcome = TuningOutcome {
        seed,
        best_test_index: best.test_index,
        best_encoded: best.setting.clone(),
        best_decoded: best_decoded.clone(),
        best_metrics: best.metrics.clone(),
        best_utility: best.utility.expect("best sample has utility"),
        tests_run: test_index,
        rounds_completed: optimizer.state().rounds_completed,
        whole_space_restarts,
        failure_counts,
    };
    sink.record(&HistoryRecord::Final(FinalRecord {
        best_test_index: outcome.best_test_index,
        best_utility: outcome.best_utility,
        best_encoded: outcome.best_encoded.values.clone(),
        best_decoded,
        tests_run: outcome.tests_run,
        rounds: outcome.rounds_completed,
    }))?;
    Ok(outcome)
}
