//! Batch sampling strategies over an encoded parameter space.
//!
//! The workhorse is divide-and-diverge sampling (`dds_sample`): each
//! dimension's range is divided into `k` intervals, one random permutation
//! of intervals per dimension is drawn, and the permutations are aligned
//! into `k` samples. Every interval of every dimension is represented
//! exactly once, so `k` samples give `k`-interval coverage per dimension
//! instead of the `k^(1/n)` a grid would manage.
//!
//! Across rounds the sampler remembers which cells of the first division it
//! has visited and steers later batches into unvisited cells (divergence).
//! Plain Latin hypercube (`lhs_sample`), full-grid (`grid_sample`), and
//! uniform (`uniform_sample`) batches are provided for comparison; only
//! divide-and-diverge consults or updates the memory.
//!
//! All draws come from the state's seeded RNG in a fixed order, so a batch
//! is a pure function of (space, k, seed, call sequence).

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::space::{divide_span, ConfigSetting, ParameterSpace};

/// Largest batch `grid_sample` will produce by default.
pub const DEFAULT_GRID_CEILING: u64 = 10_000;

/// Repair passes spent steering colliding rows toward unvisited cells
/// before residual collisions are accepted.
const REPAIR_PASSES: usize = 64;

/// Which strategy produced a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleOrigin {
    Dds,
    Grid,
    Uniform,
    Lhs,
}

/// One generated batch: settings plus the cell each setting was drawn in.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub origin: SampleOrigin,
    pub settings: Vec<ConfigSetting>,
    /// Per-dimension interval indices, parallel to `settings`.
    pub cells: Vec<Vec<usize>>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }
}

/// Sampler memory: seeded RNG plus visited cells of the base division.
///
/// `base_k` is fixed by the first whole-space call; later calls with a
/// different `k` map their cells onto the base division for memory purposes.
/// The tuner keeps one state per whole-space scope and a fresh state per
/// bounded subspace.
#[derive(Debug, Clone)]
pub struct SamplerState {
    rng: ChaCha8Rng,
    base_k: Option<usize>,
    visited: HashSet<Vec<usize>>,
    grid_ceiling: u64,
}

impl SamplerState {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            base_k: None,
            visited: HashSet::new(),
            grid_ceiling: DEFAULT_GRID_CEILING,
        }
    }

    pub fn with_grid_ceiling(mut self, ceiling: u64) -> Self {
        self.grid_ceiling = ceiling;
        self
    }

    pub fn base_k(&self) -> Option<usize> {
        self.base_k
    }

    pub fn visited_cells(&self) -> &HashSet<Vec<usize>> {
        &self.visited
    }

    /// Deterministically derive a seed for a child state (bounded scopes).
    pub fn fork_seed(&mut self) -> u64 {
        self.rng.random()
    }
}

/// Division of every parameter's whole range into `k` intervals.
fn whole_divisions(space: &ParameterSpace, k: usize) -> Result<Vec<Vec<(f64, f64)>>> {
    space.parameters().iter().map(|p| p.divide(k)).collect()
}

/// Division used only to classify points into memory cells. Falls back to
/// equal encoded widths when `k` exceeds a discrete parameter's cardinality,
/// where no legal sampling division exists but membership is still defined.
fn memory_divisions(space: &ParameterSpace, k: usize) -> Vec<Vec<(f64, f64)>> {
    space
        .parameters()
        .iter()
        .map(|p| {
            p.divide(k).unwrap_or_else(|_| {
                let (low, high) = p.encoded_range();
                divide_span(low, high, k)
            })
        })
        .collect()
}

/// Bounded-subspace division: every kind is treated as continuous inside
/// the bounds, floor decoding keeps discrete samples legal.
fn bounded_divisions(
    space: &ParameterSpace,
    bounds: &[(f64, f64)],
    k: usize,
) -> Result<Vec<Vec<(f64, f64)>>> {
    if k == 0 {
        return Err(Error::ZeroIntervals);
    }
    if bounds.len() != space.dimension() {
        return Err(Error::InvalidBounds {
            detail: format!(
                "{} bound pairs for {} parameters",
                bounds.len(),
                space.dimension()
            ),
        });
    }
    space
        .parameters()
        .iter()
        .zip(bounds)
        .map(|(p, &(low, high))| {
            let (plow, phigh) = p.encoded_range();
            if !(low < high) || low < plow || high > phigh {
                return Err(Error::InvalidBounds {
                    detail: format!(
                        "`{}`: [{low}, {high}) not inside [{plow}, {phigh})",
                        p.name
                    ),
                });
            }
            Ok(divide_span(low, high, k))
        })
        .collect()
}

fn locate(spans: &[(f64, f64)], x: f64) -> usize {
    let i = spans.partition_point(|s| s.1 <= x);
    i.min(spans.len() - 1)
}

/// Draw one coordinate inside a half-open span.
fn draw_in(rng: &mut ChaCha8Rng, low: f64, high: f64) -> f64 {
    let x = low + rng.random::<f64>() * (high - low);
    // float rounding guard; keeps the draw inside the half-open span
    if x < high {
        x
    } else {
        low
    }
}

/// Aligned-permutation core shared by divide-and-diverge and Latin
/// hypercube. When `memory` is given, colliding rows are repaired away from
/// visited cells and the produced cells are recorded.
fn stratified_batch(
    rng: &mut ChaCha8Rng,
    divisions: &[Vec<(f64, f64)>],
    origin: SampleOrigin,
    memory: Option<(&mut HashSet<Vec<usize>>, Vec<Vec<(f64, f64)>>)>,
) -> SampleBatch {
    let n = divisions.len();
    let k = divisions[0].len();
    let mut perms: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let mut p: Vec<usize> = (0..k).collect();
            p.shuffle(rng);
            p
        })
        .collect();

    let mut memory = memory;
    if let Some((visited, base_divisions)) = memory.as_mut() {
        // map a row's cell onto the base division (identity when k == base_k)
        let base_cell = |perms: &[Vec<usize>], row: usize| -> Vec<usize> {
            (0..n)
                .map(|dim| {
                    let (low, high) = divisions[dim][perms[dim][row]];
                    let base = &base_divisions[dim];
                    if base.len() == k {
                        perms[dim][row]
                    } else {
                        locate(base, (low + high) / 2.0)
                    }
                })
                .collect()
        };
        // In one dimension the produced cell set is permutation-invariant,
        // so repairs cannot help; collisions are simply recorded.
        if n >= 2 && k >= 2 && !visited.is_empty() {
            for _ in 0..REPAIR_PASSES {
                let colliding: Vec<usize> = (0..k)
                    .filter(|&row| visited.contains(&base_cell(&perms, row)))
                    .collect();
                if colliding.is_empty() {
                    break;
                }
                for row in colliding {
                    if !visited.contains(&base_cell(&perms, row)) {
                        continue; // fixed by an earlier swap this pass
                    }
                    let mut partner = rng.random_range(0..k - 1);
                    if partner >= row {
                        partner += 1;
                    }
                    let dim = rng.random_range(0..n);
                    let hits = |perms: &[Vec<usize>]| {
                        visited.contains(&base_cell(perms, row)) as u32
                            + visited.contains(&base_cell(perms, partner)) as u32
                    };
                    let before = hits(&perms);
                    perms[dim].swap(row, partner);
                    if hits(&perms) > before {
                        perms[dim].swap(row, partner);
                    }
                }
            }
        }
        for row in 0..k {
            visited.insert(base_cell(&perms, row));
        }
    }

    let mut settings = Vec::with_capacity(k);
    let mut cells = Vec::with_capacity(k);
    for row in 0..k {
        let mut values = Vec::with_capacity(n);
        for dim in 0..n {
            let (low, high) = divisions[dim][perms[dim][row]];
            values.push(draw_in(rng, low, high));
        }
        settings.push(ConfigSetting::new(values));
        cells.push((0..n).map(|dim| perms[dim][row]).collect());
    }
    SampleBatch {
        origin,
        settings,
        cells,
    }
}

/// Divide-and-diverge batch over the whole space: `k` aligned stratified
/// samples steered away from cells visited in earlier rounds.
pub fn dds_sample(state: &mut SamplerState, space: &ParameterSpace, k: usize) -> Result<SampleBatch> {
    let divisions = whole_divisions(space, k)?;
    let base_k = *state.base_k.get_or_insert(k);
    let base_divisions = if base_k == k {
        divisions.clone()
    } else {
        memory_divisions(space, base_k)
    };
    Ok(stratified_batch(
        &mut state.rng,
        &divisions,
        SampleOrigin::Dds,
        Some((&mut state.visited, base_divisions)),
    ))
}

/// One-shot Latin hypercube batch; identical construction to a single
/// divide-and-diverge call but without the divergence memory.
pub fn lhs_sample(state: &mut SamplerState, space: &ParameterSpace, k: usize) -> Result<SampleBatch> {
    let divisions = whole_divisions(space, k)?;
    Ok(stratified_batch(
        &mut state.rng,
        &divisions,
        SampleOrigin::Lhs,
        None,
    ))
}

/// `k` independent uniform draws; cells are reported against the base
/// division for diagnostics but never recorded.
pub fn uniform_sample(
    state: &mut SamplerState,
    space: &ParameterSpace,
    k: usize,
) -> Result<SampleBatch> {
    if k == 0 {
        return Err(Error::ZeroIntervals);
    }
    let base_k = *state.base_k.get_or_insert(k);
    let divisions = memory_divisions(space, base_k);
    let ranges = space.encoded_ranges();
    let mut settings = Vec::with_capacity(k);
    let mut cells = Vec::with_capacity(k);
    for _ in 0..k {
        let values: Vec<f64> = ranges
            .iter()
            .map(|&(low, high)| draw_in(&mut state.rng, low, high))
            .collect();
        cells.push(
            values
                .iter()
                .zip(&divisions)
                .map(|(&x, spans)| locate(spans, x))
                .collect(),
        );
        settings.push(ConfigSetting::new(values));
    }
    Ok(SampleBatch {
        origin: SampleOrigin::Uniform,
        settings,
        cells,
    })
}

/// Full Cartesian grid, one midpoint setting per cell, `k_per_dim^n` total.
pub fn grid_sample(
    state: &SamplerState,
    space: &ParameterSpace,
    k_per_dim: usize,
) -> Result<SampleBatch> {
    if k_per_dim == 0 {
        return Err(Error::ZeroIntervals);
    }
    let n = space.dimension();
    let mut total: u128 = 1;
    for _ in 0..n {
        total = total.saturating_mul(k_per_dim as u128);
        if total > state.grid_ceiling as u128 {
            return Err(Error::BatchCeiling {
                cells: (k_per_dim as u128).saturating_pow(n as u32),
                ceiling: state.grid_ceiling,
            });
        }
    }
    let divisions = whole_divisions(space, k_per_dim)?;
    let total = total as usize;
    let mut settings = Vec::with_capacity(total);
    let mut cells = Vec::with_capacity(total);
    for flat in 0..total {
        let mut cell = vec![0usize; n];
        let mut rem = flat;
        for dim in (0..n).rev() {
            cell[dim] = rem % k_per_dim;
            rem /= k_per_dim;
        }
        let values: Vec<f64> = (0..n)
            .map(|dim| {
                let (low, high) = divisions[dim][cell[dim]];
                (low + high) / 2.0
            })
            .collect();
        settings.push(ConfigSetting::new(values));
        cells.push(cell);
    }
    Ok(SampleBatch {
        origin: SampleOrigin::Grid,
        settings,
        cells,
    })
}

/// Divide-and-diverge inside a bounded subspace (fresh state per subspace).
pub fn dds_sample_within(
    state: &mut SamplerState,
    space: &ParameterSpace,
    bounds: &[(f64, f64)],
    k: usize,
) -> Result<SampleBatch> {
    let divisions = bounded_divisions(space, bounds, k)?;
    state.base_k.get_or_insert(k);
    let base_divisions = divisions.clone();
    Ok(stratified_batch(
        &mut state.rng,
        &divisions,
        SampleOrigin::Dds,
        Some((&mut state.visited, base_divisions)),
    ))
}

/// Latin hypercube inside a bounded subspace.
pub fn lhs_sample_within(
    state: &mut SamplerState,
    space: &ParameterSpace,
    bounds: &[(f64, f64)],
    k: usize,
) -> Result<SampleBatch> {
    let divisions = bounded_divisions(space, bounds, k)?;
    Ok(stratified_batch(
        &mut state.rng,
        &divisions,
        SampleOrigin::Lhs,
        None,
    ))
}

/// Uniform draws inside a bounded subspace.
pub fn uniform_sample_within(
    state: &mut SamplerState,
    space: &ParameterSpace,
    bounds: &[(f64, f64)],
    k: usize,
) -> Result<SampleBatch> {
    let divisions = bounded_divisions(space, bounds, k.max(1))?;
    if k == 0 {
        return Err(Error::ZeroIntervals);
    }
    let mut settings = Vec::with_capacity(k);
    let mut cells = Vec::with_capacity(k);
    for _ in 0..k {
        let mut values = Vec::with_capacity(bounds.len());
        let mut cell = Vec::with_capacity(bounds.len());
        for (dim, &(low, high)) in bounds.iter().enumerate() {
            let x = draw_in(&mut state.rng, low, high);
            cell.push(locate(&divisions[dim], x));
            values.push(x);
        }
        settings.push(ConfigSetting::new(values));
        cells.push(cell);
    }
    Ok(SampleBatch {
        origin: SampleOrigin::Uniform,
        settings,
        cells,
    })
}

/// Midpoint grid inside a bounded subspace, `k_per_dim^n` cells.
pub fn grid_sample_within(
    state: &SamplerState,
    space: &ParameterSpace,
    bounds: &[(f64, f64)],
    k_per_dim: usize,
) -> Result<SampleBatch> {
    let divisions = bounded_divisions(space, bounds, k_per_dim)?;
    let n = space.dimension();
    let mut total: u128 = 1;
    for _ in 0..n {
        total = total.saturating_mul(k_per_dim as u128);
        if total > state.grid_ceiling as u128 {
            return Err(Error::BatchCeiling {
                cells: (k_per_dim as u128).saturating_pow(n as u32),
                ceiling: state.grid_ceiling,
            });
        }
    }
    let total = total as usize;
    let mut settings = Vec::with_capacity(total);
    let mut cells = Vec::with_capacity(total);
    for flat in 0..total {
        let mut cell = vec![0usize; n];
        let mut rem = flat;
        for dim in (0..n).rev() {
            cell[dim] = rem % k_per_dim;
            rem /= k_per_dim;
        }
        let values: Vec<f64> = (0..n)
            .map(|dim| {
                let (low, high) = divisions[dim][cell[dim]];
                (low + high) / 2.0
            })
            .collect();
        settings.push(ConfigSetting::new(values));
        cells.push(cell);
    }
    Ok(SampleBatch {
        origin: SampleOrigin::Grid,
        settings,
        cells,
    })
}
