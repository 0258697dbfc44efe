//! Search strategies: measured batches in, next sampling action out.
//!
//! Recursive bound-and-search (`RbsOptimizer`) finds the best sample of a
//! batch, bounds a subspace around it using the nearest sampled coordinates
//! on each dimension, and asks for the next batch inside those bounds while
//! improvement continues; on a non-improving round it restarts from the
//! whole space, where the sampler's divergence memory takes over. The
//! search never stops early: budget permitting, a restart always follows.
//!
//! Recursive random search (`RrsOptimizer`) is the classic
//! explore-then-exploit baseline, included for comparisons. It consumes one
//! sample at a time and carries the usual hyper-parameters (exploitation
//! quantile `q`, shrink factor `c`, volume floor `v`).
//!
//! Both run behind [`SearchStrategy`], which the tuner drives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ConfigSetting, ParameterSpace};
use crate::utility::MetricVector;

pub const RRS_DEFAULT_Q: f64 = 0.1;
pub const RRS_DEFAULT_C: f64 = 0.5;
pub const RRS_DEFAULT_V: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleStatus {
    Ok,
    Failed,
}

/// One measured test. Failed tests consume budget but carry no utility.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub setting: ConfigSetting,
    pub metrics: Option<MetricVector>,
    /// Present and finite iff `status` is `Ok`.
    pub utility: Option<f64>,
    pub round: u64,
    pub test_index: u64,
    pub status: SampleStatus,
}

impl Sample {
    pub fn is_ok(&self) -> bool {
        self.status == SampleStatus::Ok
    }
}

/// Axis-aligned subspace in encoded coordinates; `low < high` per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bounds {
    pub dims: Vec<(f64, f64)>,
}

impl Bounds {
    pub fn new(dims: Vec<(f64, f64)>) -> Self {
        debug_assert!(dims.iter().all(|&(l, h)| l < h));
        Self { dims }
    }

    pub fn as_slice(&self) -> &[(f64, f64)] {
        &self.dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoundAction {
    SampleWhole,
    SampleBounded(Bounds),
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundReason {
    Initial,
    Improved,
    NoImprovementRestart,
    BudgetExhausted,
}

/// What to do next and why; emitted once per ingested batch.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundDecision {
    pub action: RoundAction,
    pub reason: RoundReason,
}

/// Current sampling scope of a search.
#[derive(Debug, Clone, PartialEq)]
pub enum Scope {
    Whole,
    Bounded(Bounds),
}

/// Bookkeeping shared by every strategy.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub best_so_far: Option<Sample>,
    pub given_baseline: Option<Sample>,
    pub budget_total: u64,
    pub budget_used: u64,
    pub set_size: usize,
    pub rounds_completed: u64,
    pub current_scope: Scope,
}

impl OptimizerState {
    fn new(budget_total: u64, set_size: usize) -> Self {
        Self {
            best_so_far: None,
            given_baseline: None,
            budget_total,
            budget_used: 0,
            set_size,
            rounds_completed: 0,
            current_scope: Scope::Whole,
        }
    }

    pub fn remaining_budget(&self) -> u64 {
        self.budget_total - self.budget_used
    }

    fn charge(&mut self, tests: usize) -> Result<()> {
        if tests as u64 > self.remaining_budget() {
            return Err(Error::BatchExceedsBudget {
                batch: tests,
                remaining: self.remaining_budget(),
            });
        }
        self.budget_used += tests as u64;
        Ok(())
    }

    /// Fold a candidate into `best_so_far`; strictly-better utility wins,
    /// ties keep the earlier test.
    fn consider(&mut self, candidate: &Sample) {
        if !candidate.is_ok() {
            return;
        }
        let better = match &self.best_so_far {
            None => true,
            Some(best) => candidate.utility > best.utility,
        };
        if better {
            self.best_so_far = Some(candidate.clone());
        }
    }
}

/// Best sample of a set: highest utility among successful tests, ties going
/// to the lowest test index. Errors when every test failed.
pub fn find_best(samples: &[Sample]) -> Result<&Sample> {
    samples
        .iter()
        .filter(|s| s.is_ok())
        .max_by(|a, b| {
            a.utility
                .partial_cmp(&b.utility)
                .unwrap()
                // reversed index: on equal utility, the earlier test wins
                .then(b.test_index.cmp(&a.test_index))
        })
        .ok_or(Error::AllTestsFailed)
}

/// Tightest axis-aligned bounds around `best` supported by the sample set:
/// per dimension, the largest sampled coordinate below and the smallest
/// above, falling back to the space edge when `best` is extreme.
pub fn compute_bounds(
    all_samples: &[Sample],
    best: &Sample,
    space: &ParameterSpace,
) -> Result<Bounds> {
    if !all_samples
        .iter()
        .any(|s| s.test_index == best.test_index && s.setting == best.setting)
    {
        return Err(Error::BestMissing);
    }
    let ranges = space.encoded_ranges();
    let dims = ranges
        .iter()
        .enumerate()
        .map(|(dim, &(space_low, space_high))| {
            let center = best.setting.values[dim];
            let mut low = space_low;
            let mut high = space_high;
            for s in all_samples.iter().filter(|s| s.is_ok()) {
                let x = s.setting.values[dim];
                if x < center && x > low {
                    low = x;
                }
                if x > center && x < high {
                    high = x;
                }
            }
            // duplicate-coordinate guard; cannot trigger for distinct draws
            if !(low < high) {
                (space_low, space_high)
            } else {
                (low, high)
            }
        })
        .collect();
    Ok(Bounds::new(dims))
}

/// A budget-bounded search strategy the tuner can drive.
pub trait SearchStrategy {
    fn state(&self) -> &OptimizerState;

    /// Batch size the strategy wants next, before budget truncation.
    fn desired_batch(&self) -> usize;

    /// Record the round-0 measurement of a user-given setting.
    fn ingest_baseline(&mut self, sample: Sample) -> Result<()>;

    /// Ingest one measured batch and decide the next action.
    fn step(&mut self, batch: &[Sample]) -> Result<RoundDecision>;

    fn best(&self) -> Option<&Sample> {
        self.state().best_so_far.as_ref()
    }
}

/// Recursive bound-and-search.
#[derive(Debug, Clone)]
pub struct RbsOptimizer {
    state: OptimizerState,
    space: ParameterSpace,
}

impl RbsOptimizer {
    pub fn new(space: ParameterSpace, budget_total: u64, set_size: usize) -> Self {
        Self {
            state: OptimizerState::new(budget_total, set_size),
            space,
        }
    }
}

impl SearchStrategy for RbsOptimizer {
    fn state(&self) -> &OptimizerState {
        &self.state
    }

    fn desired_batch(&self) -> usize {
        (self.state.set_size as u64).min(self.state.remaining_budget()) as usize
    }

    fn ingest_baseline(&mut self, sample: Sample) -> Result<()> {
        self.state.charge(1)?;
        self.state.consider(&sample);
        self.state.given_baseline = Some(sample);
        Ok(())
    }

    fn step(&mut self, batch: &[Sample]) -> Result<RoundDecision> {
        self.state.charge(batch.len())?;
        let previous_best = self.state.best_so_far.clone();
        for sample in batch {
            self.state.consider(sample);
        }
        self.state.rounds_completed += 1;

        if self.state.remaining_budget() == 0 {
            return Ok(RoundDecision {
                action: RoundAction::Stop,
                reason: RoundReason::BudgetExhausted,
            });
        }

        let improved = match (&self.state.best_so_far, &previous_best) {
            (Some(now), Some(before)) => now.utility > before.utility,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improved {
            // bound around the new best using this batch plus the previous
            // best; older rounds are dropped so a restart is not pulled back
            // toward regions that already failed to improve
            let best = self.state.best_so_far.clone().unwrap();
            let mut support: Vec<Sample> = batch.to_vec();
            if let Some(before) = previous_best {
                if !support.iter().any(|s| s.test_index == before.test_index) {
                    support.push(before);
                }
            }
            let bounds = compute_bounds(&support, &best, &self.space)?;
            self.state.current_scope = Scope::Bounded(bounds.clone());
            Ok(RoundDecision {
                action: RoundAction::SampleBounded(bounds),
                reason: RoundReason::Improved,
            })
        } else {
            self.state.current_scope = Scope::Whole;
            Ok(RoundDecision {
                action: RoundAction::SampleWhole,
                reason: RoundReason::NoImprovementRestart,
            })
        }
    }
}

#[derive(Debug, Clone)]
enum RrsPhase {
    Explore,
    Exploit {
        center: ConfigSetting,
        center_utility: f64,
        /// Nominal per-dimension box widths; the emitted bounds are these
        /// clamped into the space, but shrink accounting stays nominal.
        widths: Vec<f64>,
        volume_fraction: f64,
    },
}

/// Recursive random search baseline; consumes one sample per step.
#[derive(Debug, Clone)]
pub struct RrsOptimizer {
    state: OptimizerState,
    space: ParameterSpace,
    q: f64,
    c: f64,
    v: f64,
    explore_best: Option<Sample>,
    explore_utilities: Vec<f64>,
    exploited_before: bool,
    phase: RrsPhase,
}

impl RrsOptimizer {
    pub fn new(space: ParameterSpace, budget_total: u64) -> Self {
        Self::with_params(space, budget_total, RRS_DEFAULT_Q, RRS_DEFAULT_C, RRS_DEFAULT_V)
    }

    pub fn with_params(
        space: ParameterSpace,
        budget_total: u64,
        q: f64,
        c: f64,
        v: f64,
    ) -> Self {
        debug_assert!(q > 0.0 && q <= 1.0 && c > 0.0 && c < 1.0 && v > 0.0 && v < 1.0);
        Self {
            state: OptimizerState::new(budget_total, 1),
            space,
            q,
            c,
            v,
            explore_best: None,
            explore_utilities: Vec::new(),
            exploited_before: false,
            phase: RrsPhase::Explore,
        }
    }

    fn explore_warmup(&self) -> usize {
        (1.0 / self.q).ceil() as usize
    }

    /// Utility a new exploration sample must reach to rank in the top-q
    /// quantile of the exploration history.
    fn explore_threshold(&self) -> f64 {
        let mut sorted = self.explore_utilities.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let rank = ((self.q * sorted.len() as f64).floor() as usize).max(1);
        sorted[rank - 1]
    }

    fn exploit_bounds(&self, center: &ConfigSetting, widths: &[f64]) -> Bounds {
        let dims = self
            .space
            .encoded_ranges()
            .iter()
            .enumerate()
            .map(|(dim, &(space_low, space_high))| {
                let half = widths[dim] / 2.0;
                let low = (center.values[dim] - half).max(space_low);
                let high = (center.values[dim] + half).min(space_high);
                if low < high {
                    (low, high)
                } else {
                    (space_low, space_high)
                }
            })
            .collect();
        Bounds::new(dims)
    }

    fn enter_exploit(&mut self, seed_sample: &Sample) -> RoundDecision {
        let widths: Vec<f64> = self
            .space
            .encoded_ranges()
            .iter()
            .map(|&(l, h)| h - l)
            .collect();
        let bounds = self.exploit_bounds(&seed_sample.setting, &widths);
        self.exploited_before = true;
        self.phase = RrsPhase::Exploit {
            center: seed_sample.setting.clone(),
            center_utility: seed_sample.utility.unwrap(),
            widths,
            volume_fraction: 1.0,
        };
        self.state.current_scope = Scope::Bounded(bounds.clone());
        RoundDecision {
            action: RoundAction::SampleBounded(bounds),
            reason: RoundReason::Improved,
        }
    }
}

impl SearchStrategy for RrsOptimizer {
    fn state(&self) -> &OptimizerState {
        &self.state
    }

    fn desired_batch(&self) -> usize {
        1
    }

    fn ingest_baseline(&mut self, sample: Sample) -> Result<()> {
        self.state.charge(1)?;
        self.state.consider(&sample);
        self.state.given_baseline = Some(sample);
        Ok(())
    }

    fn step(&mut self, batch: &[Sample]) -> Result<RoundDecision> {
        if batch.len() != 1 {
            return Err(Error::BatchExceedsBudget {
                batch: batch.len(),
                remaining: 1,
            });
        }
        self.state.charge(1)?;
        let sample = &batch[0];
        self.state.consider(sample);
        self.state.rounds_completed += 1;

        let decision = match &mut self.phase {
            RrsPhase::Explore => {
                let mut qualifies = false;
                let mut seed = None;
                if sample.is_ok() {
                    self.explore_utilities.push(sample.utility.unwrap());
                    let beats_best = self
                        .explore_best
                        .as_ref()
                        .map_or(true, |b| sample.utility > b.utility);
                    if beats_best {
                        self.explore_best = Some(sample.clone());
                    }
                    if self.explore_utilities.len() == self.explore_warmup() {
                        // warmup complete: exploit around the best seen
                        qualifies = true;
                        seed = self.explore_best.clone();
                    } else if self.explore_utilities.len() > self.explore_warmup()
                        && sample.utility.unwrap() >= self.explore_threshold()
                    {
                        qualifies = true;
                        seed = Some(sample.clone());
                    }
                }
                if qualifies {
                    self.enter_exploit(&seed.unwrap())
                } else {
                    self.state.current_scope = Scope::Whole;
                    RoundDecision {
                        action: RoundAction::SampleWhole,
                        reason: if self.exploited_before {
                            RoundReason::NoImprovementRestart
                        } else {
                            RoundReason::Initial
                        },
                    }
                }
            }
            RrsPhase::Exploit {
                center,
                center_utility,
                widths,
                volume_fraction,
            } => {
                let improved = sample.is_ok() && sample.utility.unwrap() > *center_utility;
                if improved {
                    *center = sample.setting.clone();
                    *center_utility = sample.utility.unwrap();
                } else {
                    *volume_fraction *= self.c;
                    let per_dim = self.c.powf(1.0 / self.space.dimension() as f64);
                    for w in widths.iter_mut() {
                        *w *= per_dim;
                    }
                }
                if *volume_fraction < self.v {
                    self.phase = RrsPhase::Explore;
                    self.state.current_scope = Scope::Whole;
                    RoundDecision {
                        action: RoundAction::SampleWhole,
                        reason: RoundReason::NoImprovementRestart,
                    }
                } else {
                    let (center, widths) = match &self.phase {
                        RrsPhase::Exploit { center, widths, .. } => (center.clone(), widths.clone()),
                        RrsPhase::Explore => unreachable!(),
                    };
                    let bounds = self.exploit_bounds(&center, &widths);
                    self.state.current_scope = Scope::Bounded(bounds.clone());
                    RoundDecision {
                        action: RoundAction::SampleBounded(bounds),
                        reason: if improved {
                            RoundReason::Improved
                        } else {
                            RoundReason::NoImprovementRestart
                        },
                    }
                }
            }
        };

        if self.state.remaining_budget() == 0 {
            return Ok(RoundDecision {
                action: RoundAction::Stop,
                reason: RoundReason::BudgetExhausted,
            });
        }
        Ok(decision)
    }
}
