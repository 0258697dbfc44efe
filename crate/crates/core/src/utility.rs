//! Scalar figures of merit computed from measured metrics.
//!
//! A utility expression names the metrics it consumes and is evaluated
//! against the `MetricVector` a test produced. Supported forms:
//!
//! - `identity(metric)`
//! - `ratio(numerator, denominator)`
//! - `weighted_sum(metric*weight, ...)`
//! - `gate(metric, gated, cm=<threshold>[, margin=<margin>])`, a soft
//!   requirement: `gated * sigmoid(cm - metric - margin)`
//! - `inverse(...)`, for minimization of strictly positive quantities
//!
//! Minimization is always expressed through `inverse`, never by negating,
//! so the denominator-style metrics must be declared strictly positive.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

pub const DEFAULT_GATE_MARGIN: f64 = 5.0;

/// Named measurement results of one test; names unique, values finite.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricVector {
    values: BTreeMap<String, f64>,
}

impl MetricVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<N: Into<String>>(pairs: impl IntoIterator<Item = (N, f64)>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (name, value) in pairs {
            let name = name.into();
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    detail: format!("metric `{name}` = {value}"),
                });
            }
            if values.insert(name.clone(), value).is_some() {
                return Err(Error::NonFinite {
                    detail: format!("metric `{name}` appears twice"),
                });
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Name and sign contract of one metric a target promises to report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDecl {
    pub name: String,
    /// Declared strictly positive; prerequisite for `inverse`.
    #[serde(default)]
    pub positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalDirection {
    Maximize,
    Minimize,
}

/// Parsed utility expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UtilitySpec {
    Identity(String),
    Ratio {
        numerator: String,
        denominator: String,
    },
    WeightedSum(Vec<(String, f64)>),
    Gate {
        metric: String,
        gated: String,
        threshold: f64,
        margin: f64,
    },
    Inverse(Box<UtilitySpec>),
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl UtilitySpec {
    /// Evaluate against one metric vector. Missing metrics, zero
    /// denominators, and non-finite results are errors, never NaN.
    pub fn evaluate(&self, metrics: &MetricVector) -> Result<f64> {
        let need = |name: &str| {
            metrics.get(name).ok_or_else(|| Error::MissingMetric {
                name: name.to_string(),
            })
        };
        let value = match self {
            UtilitySpec::Identity(m) => need(m)?,
            UtilitySpec::Ratio {
                numerator,
                denominator,
            } => {
                let den = need(denominator)?;
                if den == 0.0 {
                    return Err(Error::ZeroDenominator {
                        name: denominator.clone(),
                    });
                }
                need(numerator)? / den
            }
            UtilitySpec::WeightedSum(terms) => {
                let mut acc = 0.0;
                for (m, w) in terms {
                    acc += w * need(m)?;
                }
                acc
            }
            UtilitySpec::Gate {
                metric,
                gated,
                threshold,
                margin,
            } => need(gated)? * sigmoid(threshold - need(metric)? - margin),
            UtilitySpec::Inverse(inner) => {
                let v = inner.evaluate(metrics)?;
                if v <= 0.0 {
                    return Err(Error::NonFinite {
                        detail: format!("inverse of non-positive value {v}"),
                    });
                }
                1.0 / v
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite {
                detail: format!("`{self}` evaluated to {value}"),
            })
        }
    }

    /// Metric names the expression reads.
    pub fn referenced_metrics(&self) -> Vec<&str> {
        match self {
            UtilitySpec::Identity(m) => vec![m],
            UtilitySpec::Ratio {
                numerator,
                denominator,
            } => vec![numerator, denominator],
            UtilitySpec::WeightedSum(terms) => terms.iter().map(|(m, _)| m.as_str()).collect(),
            UtilitySpec::Gate { metric, gated, .. } => vec![metric, gated],
            UtilitySpec::Inverse(inner) => inner.referenced_metrics(),
        }
    }

    /// Reject references to metrics the target never declared; runs at job
    /// load so a bad expression fails before any test is spent.
    pub fn validate_against(&self, declared: &[MetricDecl]) -> Result<()> {
        for name in self.referenced_metrics() {
            if !declared.iter().any(|d| d.name == name) {
                return Err(Error::UnknownMetric { name: name.into() });
            }
        }
        // ratio denominators must carry the positivity contract up front
        if let UtilitySpec::Ratio { denominator, .. } = self {
            if !declared_positive_metric(denominator, declared) {
                return Err(Error::NotDeclaredPositive {
                    name: denominator.clone(),
                });
            }
        }
        if let UtilitySpec::Inverse(inner) = self {
            inner.validate_against(declared)?;
        }
        Ok(())
    }

    /// Conservative proof that values are strictly positive, from the
    /// declared positivity flags alone.
    pub fn provably_positive(&self, declared: &[MetricDecl]) -> bool {
        match self {
            UtilitySpec::Identity(m) => declared_positive_metric(m, declared),
            UtilitySpec::Ratio {
                numerator,
                denominator,
            } => {
                declared_positive_metric(numerator, declared)
                    && declared_positive_metric(denominator, declared)
            }
            UtilitySpec::WeightedSum(_) => false,
            UtilitySpec::Gate { gated, .. } => declared_positive_metric(gated, declared),
            UtilitySpec::Inverse(inner) => inner.provably_positive(declared),
        }
    }
}

fn declared_positive_metric(name: &str, declared: &[MetricDecl]) -> bool {
    declared.iter().any(|d| d.name == name && d.positive)
}

/// Rewrite a goal as pure maximization. Minimization wraps the expression
/// in `inverse`, which requires it provably positive; negation is never used
/// because it would distort ratio- and gate-shaped utilities.
pub fn orient_for_maximization(
    spec: UtilitySpec,
    goal: GoalDirection,
    declared: &[MetricDecl],
) -> Result<UtilitySpec> {
    match goal {
        GoalDirection::Maximize => Ok(spec),
        GoalDirection::Minimize => {
            if spec.provably_positive(declared) {
                Ok(UtilitySpec::Inverse(Box::new(spec)))
            } else {
                let name = spec.to_string();
                Err(Error::NotDeclaredPositive { name })
            }
        }
    }
}

impl fmt::Display for UtilitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UtilitySpec::Identity(m) => write!(f, "identity({m})"),
            UtilitySpec::Ratio {
                numerator,
                denominator,
            } => write!(f, "ratio({numerator}, {denominator})"),
            UtilitySpec::WeightedSum(terms) => {
                write!(f, "weighted_sum(")?;
                for (i, (m, w)) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{m}*{w}")?;
                }
                write!(f, ")")
            }
            UtilitySpec::Gate {
                metric,
                gated,
                threshold,
                margin,
            } => write!(f, "gate({metric}, {gated}, cm={threshold}, margin={margin})"),
            UtilitySpec::Inverse(inner) => write!(f, "inverse({inner})"),
        }
    }
}

// --- expression parser ---

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Star,
    Equals,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bad = |detail: String| Error::UtilityParse { detail };
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            ',' => {
                tokens.push(Token::Comma);
                i += 1;
            }
            '*' => {
                tokens.push(Token::Star);
                i += 1;
            }
            '=' => {
                tokens.push(Token::Equals);
                i += 1;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push(Token::Ident(chars[start..i].iter().collect()));
            }
            _ if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '-' || chars[i] == '+')
                            && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let value = text
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad number `{text}`")))?;
                tokens.push(Token::Number(value));
            }
            other => return Err(bad(format!("unexpected character `{other}`"))),
        }
    }
    Ok(tokens)
}

fn describe(token: Option<&Token>) -> String {
    match token {
        None => "end of input".to_string(),
        Some(Token::Ident(name)) => format!("`{name}`"),
        Some(Token::Number(v)) => format!("`{v}`"),
        Some(Token::LParen) => "`(`".to_string(),
        Some(Token::RParen) => "`)`".to_string(),
        Some(Token::Comma) => "`,`".to_string(),
        Some(Token::Star) => "`*`".to_string(),
        Some(Token::Equals) => "`=`".to_string(),
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn bad<T>(&self, detail: impl Into<String>) -> Result<T> {
        Err(Error::UtilityParse {
            detail: detail.into(),
        })
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, token: Token, what: &str) -> Result<()> {
        match self.next() {
            Some(t) if t == token => Ok(()),
            other => self.bad(format!("expected {what}, found {}", describe(other.as_ref()))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.next() {
            Some(Token::Ident(name)) => Ok(name),
            other => self.bad(format!("expected {what}, found {}", describe(other.as_ref()))),
        }
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        match self.next() {
            Some(Token::Number(v)) => Ok(v),
            other => self.bad(format!("expected {what}, found {}", describe(other.as_ref()))),
        }
    }

    fn expr(&mut self) -> Result<UtilitySpec> {
        let head = self.ident("a utility function name")?;
        self.expect(Token::LParen, "`(`")?;
        let spec = match head.as_str() {
            "identity" => UtilitySpec::Identity(self.ident("a metric name")?),
            "ratio" => {
                let numerator = self.ident("a metric name")?;
                self.expect(Token::Comma, "`,`")?;
                let denominator = self.ident("a metric name")?;
                UtilitySpec::Ratio {
                    numerator,
                    denominator,
                }
            }
            "weighted_sum" => {
                let mut terms = Vec::new();
                loop {
                    let metric = self.ident("a metric name")?;
                    self.expect(Token::Star, "`*`")?;
                    let weight = self.number("a weight")?;
                    terms.push((metric, weight));
                    match self.peek() {
                        Some(Token::Comma) => {
                            self.next();
                        }
                        _ => break,
                    }
                }
                UtilitySpec::WeightedSum(terms)
            }
            "gate" => {
                let metric = self.ident("a metric name")?;
                self.expect(Token::Comma, "`,`")?;
                let gated = self.ident("a metric name")?;
                let mut threshold = None;
                let mut margin = DEFAULT_GATE_MARGIN;
                while matches!(self.peek(), Some(Token::Comma)) {
                    self.next();
                    let key = self.ident("`cm` or `margin`")?;
                    self.expect(Token::Equals, "`=`")?;
                    let value = self.number("a number")?;
                    match key.as_str() {
                        "cm" => threshold = Some(value),
                        "margin" => margin = value,
                        other => return self.bad(format!("unknown gate argument `{other}`")),
                    }
                }
                let threshold = match threshold {
                    Some(t) => t,
                    None => return self.bad("gate requires `cm=<threshold>`"),
                };
                UtilitySpec::Gate {
                    metric,
                    gated,
                    threshold,
                    margin,
                }
            }
            "inverse" => match self.peek() {
                // bare metric shorthand: inverse(latency)
                Some(Token::Ident(_)) if self.tokens.get(self.pos + 1) == Some(&Token::RParen) => {
                    UtilitySpec::Inverse(Box::new(UtilitySpec::Identity(
                        self.ident("a metric name")?,
                    )))
                }
                _ => UtilitySpec::Inverse(Box::new(self.expr()?)),
            },
            other => return self.bad(format!("unknown utility function `{other}`")),
        };
        self.expect(Token::RParen, "`)`")?;
        Ok(spec)
    }
}

/// Parse a utility expression such as `ratio(throughput, latency)`.
pub fn parse_utility(text: &str) -> Result<UtilitySpec> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
    };
    let spec = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return parser.bad("trailing input after the expression");
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(pairs: &[(&str, f64)]) -> MetricVector {
        MetricVector::from_pairs(pairs.iter().map(|(n, v)| (n.to_string(), *v))).unwrap()
    }

    #[test]
    fn ratio_divides() {
        let spec = parse_utility("ratio(throughput, latency)").unwrap();
        let m = metrics(&[("throughput", 100.0), ("latency", 4.0)]);
        assert_eq!(spec.evaluate(&m).unwrap(), 25.0);
    }

    #[test]
    fn sigmoid_midpoint_is_half() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(10.0) > 0.9999);
        assert!(sigmoid(-10.0) < 0.0001);
    }

    #[test]
    fn gate_halves_at_the_margin_boundary() {
        // memory exactly at threshold minus margin puts the sigmoid at 0
        let spec = parse_utility("gate(memory, throughput, cm=1024)").unwrap();
        let m = metrics(&[("memory", 1019.0), ("throughput", 200.0)]);
        assert_eq!(spec.evaluate(&m).unwrap(), 100.0);
    }

    #[test]
    fn gate_margin_is_overridable() {
        let spec = parse_utility("gate(memory, throughput, cm=1024, margin=0)").unwrap();
        let m = metrics(&[("memory", 1024.0), ("throughput", 200.0)]);
        assert_eq!(spec.evaluate(&m).unwrap(), 100.0);
    }

    #[test]
    fn weighted_sum_applies_weights() {
        let spec = parse_utility("weighted_sum(throughput*2, latency*-0.5)").unwrap();
        let m = metrics(&[("throughput", 10.0), ("latency", 4.0)]);
        assert_eq!(spec.evaluate(&m).unwrap(), 18.0);
    }

    #[test]
    fn missing_metric_is_named() {
        let spec = parse_utility("identity(throughput)").unwrap();
        let err = spec.evaluate(&metrics(&[("latency", 1.0)])).unwrap_err();
        assert!(matches!(err, Error::MissingMetric { name } if name == "throughput"));
    }

    #[test]
    fn zero_denominator_is_an_error_not_nan() {
        let spec = parse_utility("ratio(throughput, latency)").unwrap();
        let m = metrics(&[("throughput", 5.0), ("latency", 0.0)]);
        assert!(matches!(
            spec.evaluate(&m).unwrap_err(),
            Error::ZeroDenominator { name } if name == "latency"
        ));
    }

    #[test]
    fn inverse_reverses_order_for_positive_metrics() {
        let spec = parse_utility("inverse(latency)").unwrap();
        let fast = spec.evaluate(&metrics(&[("latency", 2.0)])).unwrap();
        let slow = spec.evaluate(&metrics(&[("latency", 8.0)])).unwrap();
        assert!(fast > slow);
        assert!(spec.evaluate(&metrics(&[("latency", 0.0)])).is_err());
    }

    #[test]
    fn minimize_requires_declared_positive() {
        let decls = [
            MetricDecl {
                name: "latency".into(),
                positive: true,
            },
            MetricDecl {
                name: "delta".into(),
                positive: false,
            },
        ];
        let ok = orient_for_maximization(
            UtilitySpec::Identity("latency".into()),
            GoalDirection::Minimize,
            &decls,
        )
        .unwrap();
        assert_eq!(ok.to_string(), "inverse(identity(latency))");

        let err = orient_for_maximization(
            UtilitySpec::Identity("delta".into()),
            GoalDirection::Minimize,
            &decls,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotDeclaredPositive { .. }));
    }

    #[test]
    fn validation_rejects_undeclared_metrics() {
        let decls = [MetricDecl {
            name: "throughput".into(),
            positive: true,
        }];
        let spec = parse_utility("identity(throughput)").unwrap();
        assert!(spec.validate_against(&decls).is_ok());
        let spec = parse_utility("identity(missing)").unwrap();
        assert!(matches!(
            spec.validate_against(&decls).unwrap_err(),
            Error::UnknownMetric { name } if name == "missing"
        ));
    }

    #[test]
    fn ratio_denominator_must_be_declared_positive() {
        let decls = [
            MetricDecl {
                name: "throughput".into(),
                positive: true,
            },
            MetricDecl {
                name: "jitter".into(),
                positive: false,
            },
        ];
        let spec = parse_utility("ratio(throughput, jitter)").unwrap();
        assert!(matches!(
            spec.validate_against(&decls).unwrap_err(),
            Error::NotDeclaredPositive { name } if name == "jitter"
        ));
    }

    #[test]
    fn display_round_trips_through_the_parser() {
        for text in [
            "identity(throughput)",
            "ratio(throughput, latency)",
            "weighted_sum(a*1, b*-0.5)",
            "gate(memory, throughput, cm=1024, margin=5)",
            "inverse(identity(latency))",
            "inverse(ratio(cost, throughput))",
        ] {
            let spec = parse_utility(text).unwrap();
            assert_eq!(parse_utility(&spec.to_string()).unwrap(), spec);
        }
    }

    #[test]
    fn parse_errors_are_descriptive() {
        for (text, needle) in [
            ("softmax(x)", "softmax"),
            ("ratio(a)", "`,`"),
            ("gate(a, b)", "cm"),
            ("identity(a) extra", "trailing"),
            ("weighted_sum(a*x)", "weight"),
        ] {
            let err = parse_utility(text).unwrap_err();
            assert!(err.to_string().contains(needle), "{text}: {err}");
        }
    }
}
