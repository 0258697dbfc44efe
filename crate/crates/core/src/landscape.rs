//! Synthetic test surfaces with known structure.
//!
//! Three archetypes cover the qualitative shapes real systems showed:
//!
//! - `step_slab`: flat everywhere except a slab along one axis where the
//!   value jumps by a fixed ratio; all-or-nothing threshold behavior,
//! - `bumpy`: a gentle global trend plus nested flat regime plateaus on one
//!   sensitive axis, rewarding dense coverage and precise refinement,
//! - `smooth_bowl`: smooth and unimodal with an interior maximum.
//!
//! Surfaces are deterministic functions on the unit box `[0,1)^d`;
//! measurement noise is the executor's concern. All constants are frozen so
//! tests can assert exact values.

use crate::error::{Error, Result};
use crate::space::{ConfigSetting, Parameter, ParameterSpace};
use crate::utility::{MetricDecl, MetricVector};

/// Metric every landscape reports.
pub const LANDSCAPE_METRIC: &str = "throughput";

pub const STEP_BASE: f64 = 100.0;
pub const STEP_RATIO: f64 = 12.0;
pub const STEP_SLAB_START: f64 = 0.65;
pub const STEP_SLAB_FRACTION: f64 = 0.125;

pub const BOWL_PEAK: f64 = 100.0;
/// Total curvature, split evenly across dimensions so the surface stays
/// strictly positive on the unit box at any dimension.
pub const BOWL_CURVATURE: f64 = 120.0;
/// Maximizer coordinates cycle this pattern.
pub const BOWL_CENTER: [f64; 2] = [0.6, 0.4];

pub const BUMPY_TREND_BASE: f64 = 44.0;
pub const BUMPY_TREND_GAIN: f64 = 6.0;
/// Per-axis trend weights cycle this pattern (normalized over axes).
pub const BUMPY_TREND_WEIGHT: [f64; 2] = [0.6, 0.4];
/// `(low, high, level)` regime plateaus on the first axis; the value at a
/// point is the highest level whose half-open stripe `[low, high)` contains
/// `x0`, or the trend when no stripe does.
///
/// The layout mimics threshold behavior in real systems, where a knob
/// crossing a working-set or batching boundary moves the metric to a new
/// flat regime: a broad mediocre regime is easy to land in, a narrow good
/// regime inside it takes a dense scan of the sensitive axis, and the prized
/// regime is a sliver that rewards refining around the good one rather than
/// polishing the smooth trend toward its corner. Within a regime the metric
/// is flat, so only resolution helps, not hill-climbing.
pub const BUMPY_MESAS: [(f64, f64, f64); 3] = [
    (0.20, 0.40, 55.0),
    (0.2985, 0.3115, 57.0),
    (0.30475, 0.30505, 96.0),
];
/// A point inside the top regime, on its plateau. Exact at any dimension
/// (the plateaus depend on the first axis only).
pub const BUMPY_ARGMAX: [f64; 2] = [0.3049, 0.5];
/// The top plateau's level, the exact global maximum.
pub const BUMPY_MAX: f64 = 96.0;

#[derive(Debug, Clone, PartialEq)]
enum Surface {
    StepSlab { fraction: f64 },
    Bumpy,
    SmoothBowl,
}

/// A registered synthetic landscape.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeDef {
    id: String,
    dimension: usize,
    surface: Surface,
}

/// Stable ids accepted by [`get_landscape`].
pub fn list_landscapes() -> &'static [&'static str] {
    &["step_slab", "bumpy", "smooth_bowl"]
}

/// Look up a landscape by id. Ids take optional suffix arguments separated
/// by `:`: `<name>[:<dimension>]`, plus a slab-fraction override for
/// `step_slab` (`step_slab:2:0.25`).
pub fn get_landscape(id: &str) -> Result<LandscapeDef> {
    let mut parts = id.split(':');
    let name = parts.next().unwrap_or_default();
    let bad = |detail: String| Error::BadVariant {
        id: id.to_string(),
        detail,
    };
    let dimension = match parts.next() {
        None => 2,
        Some(text) => {
            let d: usize = text
                .parse()
                .map_err(|_| bad(format!("bad dimension `{text}`")))?;
            if d == 0 {
                return Err(bad("dimension must be at least 1".into()));
            }
            d
        }
    };
    let fraction = parts.next();
    if parts.next().is_some() {
        return Err(bad("too many suffix arguments".into()));
    }
    let surface = match name {
        "step_slab" => {
            let fraction = match fraction {
                None => STEP_SLAB_FRACTION,
                Some(text) => {
                    let f: f64 = text
                        .parse()
                        .map_err(|_| bad(format!("bad slab fraction `{text}`")))?;
                    if !(f > 0.0 && f + STEP_SLAB_START <= 1.0) {
                        return Err(bad(format!(
                            "slab fraction {f} must be in (0, {}]",
                            1.0 - STEP_SLAB_START
                        )));
                    }
                    f
                }
            };
            Surface::StepSlab { fraction }
        }
        "bumpy" | "smooth_bowl" => {
            if fraction.is_some() {
                return Err(bad(format!("`{name}` takes no third argument")));
            }
            if name == "bumpy" {
                Surface::Bumpy
            } else {
                Surface::SmoothBowl
            }
        }
        _ => {
            return Err(Error::UnknownLandscape {
                id: id.to_string(),
                available: list_landscapes().join(", "),
            })
        }
    };
    Ok(LandscapeDef {
        id: id.to_string(),
        dimension,
        surface,
    })
}

impl LandscapeDef {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn metric_decl(&self) -> MetricDecl {
        MetricDecl {
            name: LANDSCAPE_METRIC.into(),
            positive: true,
        }
    }

    /// The unit box `[0,1)^d` as a parameter space (`x0`, `x1`, ...).
    pub fn canonical_space(&self) -> ParameterSpace {
        ParameterSpace::new(
            (0..self.dimension)
                .map(|i| Parameter::float(format!("x{i}"), 0.0, 1.0).unwrap())
                .collect(),
        )
        .unwrap()
    }

    /// Surface value at a point of the unit box.
    pub fn eval_unit(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dimension);
        match &self.surface {
            Surface::StepSlab { fraction } => {
                let x = u[0];
                if x >= STEP_SLAB_START && x < STEP_SLAB_START + fraction {
                    STEP_BASE * STEP_RATIO
                } else {
                    STEP_BASE
                }
            }
            Surface::SmoothBowl => {
                let per_axis = BOWL_CURVATURE / self.dimension as f64;
                let mut sum = 0.0;
                for (i, &x) in u.iter().enumerate() {
                    let d = x - BOWL_CENTER[i % 2];
                    sum += d * d;
                }
                BOWL_PEAK - per_axis * sum
            }
            Surface::Bumpy => {
                let mut weight_total = 0.0;
                let mut trend = 0.0;
                for (i, &x) in u.iter().enumerate() {
                    let w = BUMPY_TREND_WEIGHT[i % 2];
                    weight_total += w;
                    trend += w * x;
                }
                let mut value = BUMPY_TREND_BASE + BUMPY_TREND_GAIN * trend / weight_total;
                for (low, high, level) in BUMPY_MESAS {
                    if u[0] >= low && u[0] < high {
                        value = value.max(level);
                    }
                }
                value
            }
        }
    }

    /// Known maximizer and value, exact for every surface. `step_slab` and
    /// `bumpy` are flat at their top, so the returned point is one interior
    /// representative of the maximizing set.
    pub fn analytic_max(&self) -> Option<(Vec<f64>, f64)> {
        let point: Vec<f64> = match &self.surface {
            Surface::StepSlab { fraction } => {
                let mut p = vec![0.5; self.dimension];
                p[0] = STEP_SLAB_START + fraction / 2.0;
                p
            }
            Surface::SmoothBowl => (0..self.dimension).map(|i| BOWL_CENTER[i % 2]).collect(),
            Surface::Bumpy => {
                let mut p = vec![BUMPY_ARGMAX[1]; self.dimension];
                p[0] = BUMPY_ARGMAX[0];
                p
            }
        };
        let value = self.eval_unit(&point);
        Some((point, value))
    }

    /// Evaluate a point of the canonical space into a metric vector.
    pub fn evaluate(&self, point: &ConfigSetting) -> Result<MetricVector> {
        if point.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: point.dimension(),
            });
        }
        self.canonical_space().validate(point)?;
        MetricVector::from_pairs([(LANDSCAPE_METRIC.to_string(), self.eval_unit(&point.values))])
    }
}

/// Convenience lookup-and-evaluate.
pub fn eval_landscape(id: &str, point: &ConfigSetting) -> Result<MetricVector> {
    get_landscape(id)?.evaluate(point)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_slab_is_two_valued_with_exact_ratio() {
        let def = get_landscape("step_slab").unwrap();
        assert_eq!(def.eval_unit(&[0.0, 0.5]), 100.0);
        assert_eq!(def.eval_unit(&[0.649, 0.5]), 100.0);
        assert_eq!(def.eval_unit(&[0.65, 0.5]), 1200.0);
        assert_eq!(def.eval_unit(&[0.774, 0.99]), 1200.0);
        assert_eq!(def.eval_unit(&[0.775, 0.5]), 100.0);
    }

    #[test]
    fn smooth_bowl_peaks_at_its_declared_maximizer() {
        let def = get_landscape("smooth_bowl").unwrap();
        let (point, value) = def.analytic_max().unwrap();
        assert_eq!(point, vec![0.6, 0.4]);
        assert_eq!(value, 100.0);
        assert!(def.eval_unit(&[0.5, 0.5]) < 100.0);
        // strictly positive everywhere, worst case at the far corner
        assert!(def.eval_unit(&[0.0, 0.999]) > 0.0);
        let def = get_landscape("smooth_bowl:6").unwrap();
        assert!(def.eval_unit(&[0.0, 0.9999, 0.0, 0.9999, 0.0, 0.9999]) > 0.0);
    }

    #[test]
    fn bumpy_regimes_nest_and_top_level_is_the_exact_maximum() {
        let def = get_landscape("bumpy").unwrap();
        let (point, value) = def.analytic_max().unwrap();
        assert_eq!(value, BUMPY_MAX);
        assert_eq!(def.eval_unit(&point), BUMPY_MAX);
        // regime levels are exact and independent of the other axis
        assert_eq!(def.eval_unit(&[0.25, 0.0]), 55.0);
        assert_eq!(def.eval_unit(&[0.25, 1.0 - 1e-9]), 55.0);
        assert_eq!(def.eval_unit(&[0.30, 0.7]), 57.0);
        assert_eq!(def.eval_unit(&[0.3049, 0.2]), 96.0);
        assert_eq!(def.eval_unit(&[0.3052, 0.2]), 57.0);
        // off the stripes the trend rules and stays below every regime
        assert_eq!(def.eval_unit(&[0.0, 0.0]), 44.0);
        assert!(def.eval_unit(&[1.0 - 1e-12, 1.0 - 1e-12]) < 50.0 + 1e-9);
        // a dense scan of the sensitive axis never exceeds the declared top
        let n = 40_000;
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0.0;
        for i in 0..n {
            let x = i as f64 / n as f64;
            let v = def.eval_unit(&[x, 0.999]);
            if v > best {
                best = v;
                arg = x;
            }
        }
        assert_eq!(best, BUMPY_MAX);
        assert!(arg >= BUMPY_MESAS[2].0 && arg < BUMPY_MESAS[2].1);
    }

    #[test]
    fn variants_parse_dimension_and_fraction() {
        assert_eq!(get_landscape("step_slab:3").unwrap().dimension(), 3);
        assert_eq!(get_landscape("smooth_bowl:1").unwrap().dimension(), 1);
        let wide = get_landscape("step_slab:2:0.25").unwrap();
        assert_eq!(wide.eval_unit(&[0.85, 0.0]), 1200.0);

        assert!(matches!(
            get_landscape("mesa"),
            Err(Error::UnknownLandscape { .. })
        ));
        assert!(get_landscape("bumpy:0").is_err());
        assert!(get_landscape("bumpy:2:0.5").is_err());
        assert!(get_landscape("step_slab:2:0.9").is_err());
    }

    #[test]
    fn evaluate_checks_dimension_and_range() {
        let def = get_landscape("step_slab").unwrap();
        let m = def.evaluate(&ConfigSetting::new(vec![0.7, 0.1])).unwrap();
        assert_eq!(m.get(LANDSCAPE_METRIC), Some(1200.0));
        assert!(def.evaluate(&ConfigSetting::new(vec![0.7])).is_err());
        assert!(def.evaluate(&ConfigSetting::new(vec![0.7, 1.5])).is_err());
    }
}
