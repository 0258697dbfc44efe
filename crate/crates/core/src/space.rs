//! Typed configuration parameters over one uniform encoded representation.
//!
//! Every parameter, whatever its native type, is handled internally as a
//! half-open numeric range `[low, high)`:
//!
//! - float: the declared range itself,
//! - int: `[lower, upper)` with floor decoding, so sampling any encoded
//!   value yields a legal integer,
//! - bool: `[0, 2)`, `[0, 1)` decodes to `false` and `[1, 2)` to `true`,
//! - categorical: `[0, c)` over the declared label order, floor decoding.
//!
//! Samplers and optimizers only ever see encoded coordinates; decoding back
//! to native values happens at the executor boundary.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Kind and native domain of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamKind {
    Float { lower: f64, upper: f64 },
    Int { lower: i64, upper: i64 },
    Bool,
    Categorical { categories: Vec<String> },
}

/// One named tunable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub kind: ParamKind,
}

/// A decoded, native-typed parameter value.
///
/// Untagged variants are tried in order, so `Int` precedes `Float`: a bare
/// `3` stays an integer and `0.25` falls through to a float.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NativeValue {
    Int(i64),
    Float(f64),
    Bool(bool),
    Category(String),
}

impl fmt::Display for NativeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NativeValue::Float(v) => write!(f, "{v}"),
            NativeValue::Int(v) => write!(f, "{v}"),
            NativeValue::Bool(v) => write!(f, "{v}"),
            NativeValue::Category(v) => write!(f, "{v}"),
        }
    }
}

/// One slice of a parameter's encoded range, produced by [`ParameterSpace::divide_range`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub param_index: usize,
    pub interval_index: usize,
    /// Inclusive.
    pub low: f64,
    /// Exclusive.
    pub high: f64,
}

/// One point of the encoded space; coordinates follow parameter declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigSetting {
    pub values: Vec<f64>,
}

impl ConfigSetting {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

impl From<Vec<f64>> for ConfigSetting {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

impl Parameter {
    pub fn float(name: impl Into<String>, lower: f64, upper: f64) -> Result<Self> {
        let name = name.into();
        if !lower.is_finite() || !upper.is_finite() || !(lower < upper) {
            return Err(Error::BadParameter {
                name,
                detail: format!("float range [{lower}, {upper}) is empty or not finite"),
            });
        }
        Ok(Self {
            name,
            kind: ParamKind::Float { lower, upper },
        })
    }

    pub fn int(name: impl Into<String>, lower: i64, upper: i64) -> Result<Self> {
        let name = name.into();
        if lower >= upper {
            return Err(Error::BadParameter {
                name,
                detail: format!("integer range [{lower}, {upper}) is empty"),
            });
        }
        Ok(Self {
            name,
            kind: ParamKind::Int { lower, upper },
        })
    }

    pub fn boolean(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Bool,
        }
    }

    pub fn categorical(name: impl Into<String>, categories: Vec<String>) -> Result<Self> {
        let name = name.into();
        if categories.is_empty() {
            return Err(Error::BadParameter {
                name,
                detail: "categorical parameter needs at least one category".into(),
            });
        }
        for (i, c) in categories.iter().enumerate() {
            if categories[..i].contains(c) {
                return Err(Error::BadParameter {
                    name,
                    detail: format!("duplicate category `{c}`"),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            kind: ParamKind::Categorical { categories },
        })
    }

    /// Encoded half-open range `[low, high)`.
    pub fn encoded_range(&self) -> (f64, f64) {
        match &self.kind {
            ParamKind::Float { lower, upper } => (*lower, *upper),
            ParamKind::Int { lower, upper } => (*lower as f64, *upper as f64),
            ParamKind::Bool => (0.0, 2.0),
            ParamKind::Categorical { categories } => (0.0, categories.len() as f64),
        }
    }

    /// Number of distinct decodable values; `None` for float.
    pub fn distinct_values(&self) -> Option<u64> {
        match &self.kind {
            ParamKind::Float { .. } => None,
            ParamKind::Int { lower, upper } => Some((upper - lower) as u64),
            ParamKind::Bool => Some(2),
            ParamKind::Categorical { categories } => Some(categories.len() as u64),
        }
    }

    fn range_check(&self, encoded: f64) -> Result<()> {
        let (low, high) = self.encoded_range();
        if encoded.is_finite() && encoded >= low && encoded < high {
            Ok(())
        } else {
            Err(Error::EncodedOutOfRange {
                param: self.name.clone(),
                value: encoded,
                low,
                high,
            })
        }
    }

    /// Encoded coordinate to native value. The encoded value must lie in range.
    pub fn decode(&self, encoded: f64) -> Result<NativeValue> {
        self.range_check(encoded)?;
        Ok(match &self.kind {
            ParamKind::Float { .. } => NativeValue::Float(encoded),
            ParamKind::Int { .. } => NativeValue::Int(encoded.floor() as i64),
            ParamKind::Bool => NativeValue::Bool(encoded >= 1.0),
            ParamKind::Categorical { categories } => {
                NativeValue::Category(categories[encoded.floor() as usize].clone())
            }
        })
    }

    /// Native value to encoded coordinate; `decode(encode(v)) == v`.
    pub fn encode(&self, value: &NativeValue) -> Result<f64> {
        let mismatch = |detail: String| Error::EncodeError {
            param: self.name.clone(),
            detail,
        };
        let encoded = match (&self.kind, value) {
            (ParamKind::Float { .. }, NativeValue::Float(v)) => *v,
            (ParamKind::Float { .. }, NativeValue::Int(v)) => *v as f64,
            (ParamKind::Int { .. }, NativeValue::Int(v)) => *v as f64,
            (ParamKind::Bool, NativeValue::Bool(v)) => {
                if *v {
                    1.0
                } else {
                    0.0
                }
            }
            (ParamKind::Categorical { categories }, NativeValue::Category(label)) => categories
                .iter()
                .position(|c| c == label)
                .ok_or_else(|| mismatch(format!("unknown category `{label}`")))?
                as f64,
            (_, other) => {
                return Err(mismatch(format!("value {other} does not match the parameter kind")))
            }
        };
        self.range_check(encoded)?;
        Ok(encoded)
    }

    /// Divide the whole encoded range into `k` half-open intervals.
    ///
    /// Float ranges split into equal widths. Discrete ranges split on value
    /// boundaries as evenly as possible, the remainder going to the leftmost
    /// intervals, and reject `k` larger than the number of distinct values.
    pub fn divide(&self, k: usize) -> Result<Vec<(f64, f64)>> {
        if k == 0 {
            return Err(Error::ZeroIntervals);
        }
        let (low, high) = self.encoded_range();
        match self.distinct_values() {
            None => Ok(divide_span(low, high, k)),
            Some(m) => {
                if k as u64 > m {
                    return Err(Error::KTooLarge {
                        param: self.name.clone(),
                        k,
                        distinct: m,
                    });
                }
                let base = m / k as u64;
                let rem = (m % k as u64) as usize;
                let mut spans = Vec::with_capacity(k);
                let mut edge = low as i64;
                for i in 0..k {
                    let width = base + if i < rem { 1 } else { 0 };
                    let next = edge + width as i64;
                    spans.push((edge as f64, next as f64));
                    edge = next;
                }
                debug_assert_eq!(edge as f64, high);
                Ok(spans)
            }
        }
    }
}

/// Equal-width division of an arbitrary encoded span; used for float ranges
/// and for bounded subspaces, where discrete kinds are treated as continuous
/// because floor decoding keeps every sample legal.
pub fn divide_span(low: f64, high: f64, k: usize) -> Vec<(f64, f64)> {
    debug_assert!(k >= 1 && low < high);
    let width = high - low;
    let mut edges: Vec<f64> = (0..=k).map(|i| low + width * i as f64 / k as f64).collect();
    edges[0] = low;
    edges[k] = high;
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Ordered set of named parameters; the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    parameters: Vec<Parameter>,
}

impl ParameterSpace {
    pub fn new(parameters: Vec<Parameter>) -> Result<Self> {
        if parameters.is_empty() {
            return Err(Error::SpaceParse {
                detail: "a parameter space needs at least one parameter".into(),
            });
        }
        for (i, p) in parameters.iter().enumerate() {
            if parameters[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::SpaceParse {
                    detail: format!("duplicate parameter name `{}`", p.name),
                });
            }
        }
        Ok(Self { parameters })
    }

    pub fn dimension(&self) -> usize {
        self.parameters.len()
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.parameters
    }

    pub fn parameter(&self, index: usize) -> &Parameter {
        &self.parameters[index]
    }

    /// Encoded `[low, high)` per dimension, in declaration order.
    pub fn encoded_ranges(&self) -> Vec<(f64, f64)> {
        self.parameters.iter().map(|p| p.encoded_range()).collect()
    }

    /// Divide one parameter's whole encoded range into `k` intervals.
    pub fn divide_range(&self, param_index: usize, k: usize) -> Result<Vec<Interval>> {
        let spans = self.parameters[param_index].divide(k)?;
        Ok(spans
            .into_iter()
            .enumerate()
            .map(|(interval_index, (low, high))| Interval {
                param_index,
                interval_index,
                low,
                high,
            })
            .collect())
    }

    /// Check dimension, then every coordinate against its encoded range.
    pub fn validate(&self, setting: &ConfigSetting) -> Result<()> {
        if setting.values.len() != self.parameters.len() {
            return Err(Error::DimensionMismatch {
                expected: self.parameters.len(),
                got: setting.values.len(),
            });
        }
        let violations: Vec<String> = self
            .parameters
            .iter()
            .zip(&setting.values)
            .filter_map(|(p, &v)| {
                let (low, high) = p.encoded_range();
                if v.is_finite() && v >= low && v < high {
                    None
                } else {
                    Some(format!("`{}` = {v} outside [{low}, {high})", p.name))
                }
            })
            .collect();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::RangeViolations { violations })
        }
    }

    /// Decode every coordinate; fails on the first out-of-range value.
    pub fn decode_setting(&self, setting: &ConfigSetting) -> Result<Vec<NativeValue>> {
        if setting.values.len() != self.parameters.len() {
            return Err(Error::DimensionMismatch {
                expected: self.parameters.len(),
                got: setting.values.len(),
            });
        }
        self.parameters
            .iter()
            .zip(&setting.values)
            .map(|(p, &v)| p.decode(v))
            .collect()
    }

    /// Encode native values given in declaration order.
    pub fn encode_setting(&self, values: &[NativeValue]) -> Result<ConfigSetting> {
        if values.len() != self.parameters.len() {
            return Err(Error::DimensionMismatch {
                expected: self.parameters.len(),
                got: values.len(),
            });
        }
        let encoded = self
            .parameters
            .iter()
            .zip(values)
            .map(|(p, v)| p.encode(v))
            .collect::<Result<Vec<f64>>>()?;
        Ok(ConfigSetting::new(encoded))
    }

    /// Stable one-line-per-parameter rendering; input to the job schema hash.
    pub fn canonical_description(&self) -> String {
        self.parameters
            .iter()
            .map(|p| match &p.kind {
                ParamKind::Float { lower, upper } => format!("{}|float|{lower}|{upper}", p.name),
                ParamKind::Int { lower, upper } => format!("{}|int|{lower}|{upper}", p.name),
                ParamKind::Bool => format!("{}|bool", p.name),
                ParamKind::Categorical { categories } => {
                    format!("{}|categorical|{}", p.name, categories.join(","))
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Serde shape of one parameter in a space definition document.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamDoc {
    name: String,
    kind: String,
    min: Option<f64>,
    max: Option<f64>,
    categories: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceDoc {
    parameter: Vec<ParamDoc>,
}

fn param_from_doc(doc: ParamDoc) -> Result<Parameter> {
    let name = doc.name;
    let need = |field: &str, v: Option<f64>| {
        v.ok_or_else(|| Error::SpaceParse {
            detail: format!("parameter `{name}`: missing field `{field}`"),
        })
    };
    let reject_extra = |field: &str, present: bool| {
        if present {
            Err(Error::SpaceParse {
                detail: format!("parameter `{name}`: field `{field}` does not apply to kind `{}`", doc.kind),
            })
        } else {
            Ok(())
        }
    };
    match doc.kind.as_str() {
        "float" => {
            reject_extra("categories", doc.categories.is_some())?;
            Parameter::float(name.clone(), need("min", doc.min)?, need("max", doc.max)?)
        }
        "int" => {
            reject_extra("categories", doc.categories.is_some())?;
            let min = need("min", doc.min)?;
            let max = need("max", doc.max)?;
            if min.fract() != 0.0 || max.fract() != 0.0 {
                return Err(Error::SpaceParse {
                    detail: format!("parameter `{name}`: integer bounds must be whole numbers"),
                });
            }
            Parameter::int(name.clone(), min as i64, max as i64)
        }
        "bool" => {
            reject_extra("min", doc.min.is_some())?;
            reject_extra("max", doc.max.is_some())?;
            reject_extra("categories", doc.categories.is_some())?;
            Ok(Parameter::boolean(name))
        }
        "categorical" => {
            reject_extra("min", doc.min.is_some())?;
            reject_extra("max", doc.max.is_some())?;
            let categories = doc.categories.ok_or_else(|| Error::SpaceParse {
                detail: format!("parameter `{name}`: missing field `categories`"),
            })?;
            Parameter::categorical(name.clone(), categories)
        }
        other => Err(Error::SpaceParse {
            detail: format!("parameter `{name}`: unknown kind `{other}`"),
        }),
    }
}

/// Parse a space definition document (TOML, one `[[parameter]]` table per
/// parameter with fields `name`, `kind`, `min`, `max`, `categories`).
pub fn parse_space_str(text: &str) -> Result<ParameterSpace> {
    let doc: SpaceDoc = toml::from_str(text).map_err(|e| Error::SpaceParse {
        detail: e.to_string(),
    })?;
    space_from_doc(doc)
}

/// Same document shape, already parsed as TOML (an inline `[space]` table).
pub(crate) fn space_from_toml(value: toml::Value) -> Result<ParameterSpace> {
    let doc: SpaceDoc = value.try_into().map_err(|e: toml::de::Error| Error::SpaceParse {
        detail: e.to_string(),
    })?;
    space_from_doc(doc)
}

fn space_from_doc(doc: SpaceDoc) -> Result<ParameterSpace> {
    ParameterSpace::new(
        doc.parameter
            .into_iter()
            .map(param_from_doc)
            .collect::<Result<Vec<_>>>()?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mixed_space() -> ParameterSpace {
        ParameterSpace::new(vec![
            Parameter::float("ratio", 0.0, 12.0).unwrap(),
            Parameter::int("threads", 0, 10).unwrap(),
            Parameter::boolean("cache_on"),
            Parameter::categorical(
                "policy",
                vec!["lru".into(), "fifo".into(), "arc".into()],
            )
            .unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn float_division_is_equal_width() {
        let space = mixed_space();
        let ivs = space.divide_range(0, 6).unwrap();
        let expect = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0];
        for (i, iv) in ivs.iter().enumerate() {
            assert_eq!(iv.param_index, 0);
            assert_eq!(iv.interval_index, i);
            assert_eq!(iv.low, expect[i]);
            assert_eq!(iv.high, expect[i + 1]);
        }
    }

    #[test]
    fn integer_division_puts_remainder_leftmost() {
        let space = mixed_space();
        let ivs = space.divide_range(1, 3).unwrap();
        let spans: Vec<(f64, f64)> = ivs.iter().map(|iv| (iv.low, iv.high)).collect();
        assert_eq!(spans, vec![(0.0, 4.0), (4.0, 7.0), (7.0, 10.0)]);
    }

    #[test]
    fn boolean_division_splits_at_one() {
        let space = mixed_space();
        let ivs = space.divide_range(2, 2).unwrap();
        let spans: Vec<(f64, f64)> = ivs.iter().map(|iv| (iv.low, iv.high)).collect();
        assert_eq!(spans, vec![(0.0, 1.0), (1.0, 2.0)]);
    }

    #[test]
    fn oversized_k_names_the_parameter() {
        let space = mixed_space();
        let err = space.divide_range(3, 16).unwrap_err();
        match err {
            Error::KTooLarge { param, k, distinct } => {
                assert_eq!(param, "policy");
                assert_eq!(k, 16);
                assert_eq!(distinct, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn zero_k_is_rejected() {
        let space = mixed_space();
        assert!(matches!(space.divide_range(0, 0), Err(Error::ZeroIntervals)));
    }

    #[test]
    fn boolean_decode_splits_the_encoded_range() {
        let p = Parameter::boolean("flag");
        assert_eq!(p.decode(0.0).unwrap(), NativeValue::Bool(false));
        assert_eq!(p.decode(0.999).unwrap(), NativeValue::Bool(false));
        assert_eq!(p.decode(1.0).unwrap(), NativeValue::Bool(true));
        assert_eq!(p.decode(1.999).unwrap(), NativeValue::Bool(true));
        assert!(p.decode(2.0).is_err());
    }

    #[test]
    fn decode_checks_ranges() {
        let space = mixed_space();
        assert!(space.parameter(0).decode(12.0).is_err());
        assert!(space.parameter(0).decode(11.999).is_ok());
        assert!(space.parameter(1).decode(-0.5).is_err());
        assert_eq!(
            space.parameter(3).decode(2.7).unwrap(),
            NativeValue::Category("arc".into())
        );
    }

    #[test]
    fn validate_distinguishes_dimension_from_range() {
        let space = mixed_space();
        let err = space.validate(&ConfigSetting::new(vec![0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 4, got: 2 }));

        let err = space
            .validate(&ConfigSetting::new(vec![-1.0, 3.0, 5.0, 1.0]))
            .unwrap_err();
        match err {
            Error::RangeViolations { violations } => {
                assert_eq!(violations.len(), 2);
                assert!(violations[0].contains("ratio"));
                assert!(violations[1].contains("cache_on"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_space_document() {
        let text = r#"
            [[parameter]]
            name = "buffer_mb"
            kind = "int"
            min = 1
            max = 65

            [[parameter]]
            name = "query_cache"
            kind = "bool"

            [[parameter]]
            name = "policy"
            kind = "categorical"
            categories = ["lru", "fifo"]

            [[parameter]]
            name = "decay"
            kind = "float"
            min = 0.5
            max = 1.0
        "#;
        let space = parse_space_str(text).unwrap();
        assert_eq!(space.dimension(), 4);
        assert_eq!(space.parameter(0).encoded_range(), (1.0, 65.0));
        assert_eq!(space.parameter(1).distinct_values(), Some(2));
    }

    #[test]
    fn parse_errors_cite_the_parameter_or_line() {
        let err = parse_space_str(
            "[[parameter]]\nname = \"x\"\nkind = \"gauge\"\nmin = 0.0\nmax = 1.0\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("`x`"), "{err}");
        assert!(err.to_string().contains("gauge"), "{err}");

        let err = parse_space_str("[[parameter]\nname = \"x\"\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");

        let err = parse_space_str(
            "[[parameter]]\nname = \"x\"\nkind = \"float\"\nmin = 0.0\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("max"), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn float_division_covers_the_range(k in 1usize..40, low in -100.0f64..100.0, width in 0.001f64..500.0) {
            let p = Parameter::float("x", low, low + width).unwrap();
            let spans = p.divide(k).unwrap();
            prop_assert_eq!(spans.len(), k);
            prop_assert_eq!(spans[0].0, low);
            prop_assert_eq!(spans[k - 1].1, low + width);
            for w in spans.windows(2) {
                prop_assert_eq!(w[0].1, w[1].0);
                prop_assert!(w[0].0 < w[0].1);
            }
        }

        #[test]
        fn integer_division_is_even_within_one(card in 1i64..200, k in 1usize..50) {
            prop_assume!(k as i64 <= card);
            let p = Parameter::int("n", -3, card - 3).unwrap();
            let spans = p.divide(k).unwrap();
            let widths: Vec<i64> = spans.iter().map(|s| (s.1 - s.0) as i64).collect();
            let min = *widths.iter().min().unwrap();
            let max = *widths.iter().max().unwrap();
            prop_assert!(max - min <= 1);
            prop_assert_eq!(widths.iter().sum::<i64>(), card);
            // remainder sits leftmost: widths never increase
            for w in widths.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }

        #[test]
        fn encode_decode_round_trip(v in -50i64..50) {
            let p = Parameter::int("n", -50, 50).unwrap();
            let nv = NativeValue::Int(v);
            let encoded = p.encode(&nv).unwrap();
            prop_assert_eq!(p.decode(encoded).unwrap(), nv);
        }

        #[test]
        fn decode_never_leaves_the_native_domain(x in 0.0f64..3.0) {
            let p = Parameter::categorical("c", vec!["a".into(), "b".into(), "z".into()]).unwrap();
            match p.decode(x).unwrap() {
                NativeValue::Category(label) => prop_assert!(["a", "b", "z"].contains(&label.as_str())),
                other => prop_assert!(false, "unexpected {:?}", other),
            }
        }
    }
}
