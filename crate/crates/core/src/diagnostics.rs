//! Measurement tools that sit outside the tuning loop: lattice estimates of
//! how much of a space fails to beat a reference utility, brute-force optima
//! for validating search results, and head-to-head strategy comparisons on
//! the built-in landscapes.

use serde::Serialize;
use std::io::Write;

use crate::error::{Error, Result};
use crate::landscape::{get_landscape, LandscapeDef, LANDSCAPE_METRIC};
use crate::space::{ConfigSetting, ParameterSpace};
use crate::tuner::history::TestSource;
use crate::tuner::{run_tuning, MemorySink, OptimizerChoice, SamplerChoice, TuningJob};
use crate::utility::{GoalDirection, UtilitySpec};

/// Hard cap on lattice size for the exhaustive estimators.
pub const GRID_POINT_LIMIT: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiEstimate {
    /// Qualifying fraction of the whole space.
    pub fraction: f64,
    pub points_total: u64,
    pub points_qualifying: u64,
}

fn checked_lattice_size(points_per_dim: usize, dimension: usize) -> Result<u64> {
    if points_per_dim == 0 {
        return Err(Error::ZeroIntervals);
    }
    let mut total: u128 = 1;
    for _ in 0..dimension {
        total = total.saturating_mul(points_per_dim as u128);
        if total > GRID_POINT_LIMIT as u128 {
            return Err(Error::GridGuard {
                points: (points_per_dim as u128).saturating_pow(dimension as u32),
                limit: GRID_POINT_LIMIT,
            });
        }
    }
    Ok(total as u64)
}

/// Visit every point of the left-corner lattice with `n` points per
/// dimension: coordinate j maps to `low + span * j / n`, so the lattice
/// covers `[low, high)` like the space itself.
fn for_each_lattice_point<F: FnMut(&ConfigSetting)>(
    space: &ParameterSpace,
    points_per_dim: usize,
    mut visit: F,
) {
    let ranges = space.encoded_ranges();
    let dim = ranges.len();
    let mut digits = vec![0usize; dim];
    let mut setting = ConfigSetting::new(vec![0.0; dim]);
    loop {
        for (i, &(low, high)) in ranges.iter().enumerate() {
            setting.values[i] = low + (high - low) * (digits[i] as f64 / points_per_dim as f64);
        }
        visit(&setting);
        let mut carry = dim;
        while carry > 0 {
            digits[carry - 1] += 1;
            if digits[carry - 1] < points_per_dim {
                break;
            }
            digits[carry - 1] = 0;
            carry -= 1;
        }
        if carry == 0 {
            return;
        }
    }
}

/// Fraction of the whole space (by uniform lattice measure) where the
/// utility does not exceed `reference`, optionally restricted to an
/// axis-aligned subspace. The denominator is always the whole space, so a
/// subspace estimate reads as "how much not-better-than-reference mass this
/// box holds". One minus the whole-space value is the chance a single
/// uniform draw beats the reference.
pub fn empirical_phi<F>(
    space: &ParameterSpace,
    eval: F,
    reference: f64,
    bounds: Option<&[(f64, f64)]>,
    points_per_dim: usize,
) -> Result<PhiEstimate>
where
    F: Fn(&ConfigSetting) -> Result<f64>,
{
    let points_total = checked_lattice_size(points_per_dim, space.dimension())?;
    if let Some(bounds) = bounds {
        if bounds.len() != space.dimension() {
            return Err(Error::InvalidBounds {
                detail: format!(
                    "{} bound pairs for a {}-dimensional space",
                    bounds.len(),
                    space.dimension()
                ),
            });
        }
    }
    let mut qualifying: u64 = 0;
    let mut first_error: Option<Error> = None;
    for_each_lattice_point(space, points_per_dim, |setting| {
        if first_error.is_some() {
            return;
        }
        if let Some(bounds) = bounds {
            let inside = setting
                .values
                .iter()
                .zip(bounds)
                .all(|(&x, &(low, high))| x >= low && x < high);
            if !inside {
                return;
            }
        }
        match eval(setting) {
            Ok(value) => {
                if value <= reference {
                    qualifying += 1;
                }
            }
            Err(e) => first_error = Some(e),
        }
    });
    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(PhiEstimate {
        fraction: qualifying as f64 / points_total as f64,
        points_total,
        points_qualifying: qualifying,
    })
}

/// Exhaustive lattice argmax; ties keep the first point in scan order, so
/// the result is deterministic.
pub fn brute_force_optimum<F>(
    space: &ParameterSpace,
    eval: F,
    points_per_dim: usize,
) -> Result<(ConfigSetting, f64)>
where
    F: Fn(&ConfigSetting) -> Result<f64>,
{
    checked_lattice_size(points_per_dim, space.dimension())?;
    let mut best: Option<(ConfigSetting, f64)> = None;
    let mut first_error: Option<Error> = None;
    for_each_lattice_point(space, points_per_dim, |setting| {
        if first_error.is_some() {
            return;
        }
        match eval(setting) {
            Ok(value) => {
                if best.as_ref().map_or(true, |(_, b)| value > *b) {
                    best = Some((setting.clone(), value));
                }
            }
            Err(e) => first_error = Some(e),
        }
    });
    if let Some(e) = first_error {
        return Err(e);
    }
    best.ok_or(Error::AllTestsFailed)
}

/// Utility evaluator for a landscape's sole metric.
pub fn landscape_eval(def: &LandscapeDef) -> impl Fn(&ConfigSetting) -> Result<f64> + '_ {
    move |setting| {
        Ok(def
            .evaluate(setting)?
            .get(LANDSCAPE_METRIC)
            .expect("landscape reports its metric"))
    }
}

/// One strategy pairing to race.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strategy {
    pub sampler: SamplerChoice,
    pub optimizer: OptimizerChoice,
}

#[derive(Debug, Clone)]
pub struct ComparisonConfig {
    pub strategies: Vec<Strategy>,
    /// Landscape ids, variant suffixes allowed.
    pub landscapes: Vec<String>,
    pub trials: u64,
    pub seed_base: u64,
    pub budget: u64,
    pub set_size: usize,
    pub noise: f64,
}

/// Best-so-far after one round of one trial.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryPoint {
    pub sampler: SamplerChoice,
    pub optimizer: OptimizerChoice,
    pub landscape: String,
    pub seed: u64,
    pub round: u64,
    pub tests_used: u64,
    pub best_utility: f64,
}

/// Race every strategy on every landscape over `trials` seeds, all under
/// the same budget, and report per-round best-so-far trajectories.
pub fn compare_strategies(config: &ComparisonConfig) -> Result<Vec<TrajectoryPoint>> {
    let mut rows = Vec::new();
    for landscape_id in &config.landscapes {
        let def = get_landscape(landscape_id)?;
        for strategy in &config.strategies {
            for trial in 0..config.trials {
                let seed = config.seed_base + trial;
                let job = TuningJob {
                    space: def.canonical_space(),
                    target: crate::executor::TargetSpec::Synthetic {
                        landscape: landscape_id.clone(),
                        noise: config.noise,
                    },
                    utility: UtilitySpec::Identity(LANDSCAPE_METRIC.to_string()),
                    goal: GoalDirection::Maximize,
                    budget: config.budget,
                    set_size: config.set_size,
                    seed: Some(seed),
                    sampler: strategy.sampler,
                    optimizer: strategy.optimizer,
                    history_path: None,
                    baseline: None,
                };
                job.validate()?;
                let mut sink = MemorySink::new();
                run_tuning(&job, seed, &mut sink)?;
                rows.extend(trajectory(&sink, strategy, landscape_id, seed));
            }
        }
    }
    Ok(rows)
}

fn trajectory(
    sink: &MemorySink,
    strategy: &Strategy,
    landscape: &str,
    seed: u64,
) -> Vec<TrajectoryPoint> {
    let mut rows = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut tests_used: u64 = 0;
    let mut current_round: Option<u64> = None;
    for test in sink.tests() {
        if test.source != TestSource::Baseline && current_round != Some(test.round) {
            if let Some(round) = current_round {
                rows.push(TrajectoryPoint {
                    sampler: strategy.sampler,
                    optimizer: strategy.optimizer,
                    landscape: landscape.to_string(),
                    seed,
                    round,
                    tests_used,
                    best_utility: best,
                });
            }
            current_round = Some(test.round);
        }
        tests_used += 1;
        if let Some(u) = test.utility {
            if u > best {
                best = u;
            }
        }
    }
    if let Some(round) = current_round {
        rows.push(TrajectoryPoint {
            sampler: strategy.sampler,
            optimizer: strategy.optimizer,
            landscape: landscape.to_string(),
            seed,
            round,
            tests_used,
            best_utility: best,
        });
    }
    rows
}

/// CSV with one row per trajectory point.
pub fn write_comparison_csv<W: Write>(rows: &[TrajectoryPoint], writer: W) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer
        .write_record([
            "sampler",
            "optimizer",
            "landscape",
            "seed",
            "round",
            "tests_used",
            "best_utility",
        ])
        .map_err(Error::from)?;
    for row in rows {
        csv_writer
            .write_record([
                row.sampler.to_string(),
                row.optimizer.to_string(),
                row.landscape.clone(),
                row.seed.to_string(),
                row.round.to_string(),
                row.tests_used.to_string(),
                row.best_utility.to_string(),
            ])
            .map_err(Error::from)?;
    }
    csv_writer.flush()?;
    Ok(())
}

/// Distribution of final best utilities for one strategy on one landscape.
#[derive(Debug, Clone, Serialize)]
pub struct StrategySummary {
    pub sampler: SamplerChoice,
    pub optimizer: OptimizerChoice,
    pub landscape: String,
    pub trials: u64,
    pub median_best: f64,
    pub p25_best: f64,
    pub p75_best: f64,
}

/// Linear-interpolated quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let position = q * (sorted.len() - 1) as f64;
    let lower = position.floor() as usize;
    let upper = position.ceil() as usize;
    let weight = position - lower as f64;
    sorted[lower] * (1.0 - weight) + sorted[upper] * weight
}

/// Collapse trajectories to per-strategy medians of the final best utility.
pub fn summarize(rows: &[TrajectoryPoint]) -> Vec<StrategySummary> {
    let mut groups: Vec<(SamplerChoice, OptimizerChoice, String, Vec<f64>)> = Vec::new();
    for row in rows {
        let key = (row.sampler, row.optimizer, row.landscape.clone());
        // final point of a trial is the one with the largest tests_used;
        // rows arrive in order, so the last row per (group, seed) wins
        match groups
            .iter_mut()
            .find(|(s, o, l, _)| (*s, *o, l.as_str()) == (key.0, key.1, key.2.as_str()))
        {
            Some(_) => {}
            None => groups.push((key.0, key.1, key.2.clone(), Vec::new())),
        }
    }
    for group in &mut groups {
        let mut finals: Vec<(u64, f64)> = Vec::new();
        for row in rows {
            if (row.sampler, row.optimizer, row.landscape.as_str())
                != (group.0, group.1, group.2.as_str())
            {
                continue;
            }
            match finals.iter_mut().find(|(seed, _)| *seed == row.seed) {
                Some(entry) => entry.1 = row.best_utility,
                None => finals.push((row.seed, row.best_utility)),
            }
        }
        group.3 = finals.into_iter().map(|(_, u)| u).collect();
    }
    groups
        .into_iter()
        .map(|(sampler, optimizer, landscape, mut finals)| {
            finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            StrategySummary {
                sampler,
                optimizer,
                landscape,
                trials: finals.len() as u64,
                median_best: quantile(&finals, 0.5),
                p25_best: quantile(&finals, 0.25),
                p75_best: quantile(&finals, 0.75),
            }
        })
        .collect()
}
