//! Append-only JSONL run history.
//!
//! Line one is a header that pins everything the run depends on (space,
//! target, utility, goal, budget, seed, strategy choices) behind a hash, so
//! a resume against an edited job file is refused instead of silently
//! diverging. Every executed test appends one record; round transitions and
//! the final result get their own record types. Records are flushed as they
//! are written so a killed run leaves a usable prefix.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::executor::{FailReason, TargetSpec};
use crate::optimizer::{RoundReason, SampleStatus};
use crate::sampler::SampleOrigin;
use crate::space::NativeValue;
use crate::utility::MetricVector;

pub const HISTORY_VERSION: u32 = 1;

/// Where a tested configuration came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSource {
    Baseline,
    Dds,
    Grid,
    Uniform,
    Lhs,
}

impl From<SampleOrigin> for TestSource {
    fn from(origin: SampleOrigin) -> Self {
        match origin {
            SampleOrigin::Dds => TestSource::Dds,
            SampleOrigin::Grid => TestSource::Grid,
            SampleOrigin::Uniform => TestSource::Uniform,
            SampleOrigin::Lhs => TestSource::Lhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKind {
    Whole,
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeaderRecord {
    pub version: u32,
    pub schema_hash: String,
    pub seed: u64,
    pub budget: u64,
    pub set_size: usize,
    pub sampler: String,
    pub optimizer: String,
    pub utility: String,
    pub goal: String,
    pub space: String,
    pub target: TargetSpec,
    pub started_unix_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub test_index: u64,
    pub round: u64,
    pub scope: ScopeKind,
    pub source: TestSource,
    /// Interval indexes per dimension under the current division, when the
    /// sampler works cell-wise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<Vec<usize>>,
    pub encoded: Vec<f64>,
    pub decoded: BTreeMap<String, NativeValue>,
    pub metrics: Option<MetricVector>,
    pub utility: Option<f64>,
    pub status: SampleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<FailReason>,
    pub duration_ms: f64,
    pub unix_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// The round that just finished.
    pub round: u64,
    /// What the search does next: `whole`, `bounded`, or `stop`.
    pub next_action: String,
    pub reason: RoundReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub best_test_index: u64,
    pub best_utility: f64,
    pub best_encoded: Vec<f64>,
    pub best_decoded: BTreeMap<String, NativeValue>,
    pub tests_run: u64,
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HistoryRecord {
    Header(HeaderRecord),
    Test(TestRecord),
    Round(RoundRecord),
    Final(FinalRecord),
}

/// Destination for history records. The file sink persists runs; the memory
/// sink backs tests and strategy comparisons; the null sink discards.
pub trait HistorySink {
    fn record(&mut self, record: &HistoryRecord) -> Result<()>;
}

pub struct NullSink;

impl HistorySink for NullSink {
    fn record(&mut self, _record: &HistoryRecord) -> Result<()> {
        Ok(())
    }
}

#[derive(Default)]
pub struct MemorySink {
    pub records: Vec<HistoryRecord>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tests(&self) -> impl Iterator<Item = &TestRecord> {
        self.records.iter().filter_map(|r| match r {
            HistoryRecord::Test(t) => Some(t),
            _ => None,
        })
    }
}

impl HistorySink for MemorySink {
    fn record(&mut self, record: &HistoryRecord) -> Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

pub struct FileSink {
    writer: BufWriter<std::fs::File>,
}

impl FileSink {
    /// Opens for append; a fresh file expects a header as its first record.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            writer: BufWriter::new(file),
        })
    }
}

impl HistorySink for FileSink {
    fn record(&mut self, record: &HistoryRecord) -> Result<()> {
        let line = serde_json::to_string(record).map_err(|e| Error::HistoryCorrupt {
            line: 0,
            detail: format!("serializing record: {e}"),
        })?;
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        // flushed per record so an interrupted run still resumes
        self.writer.flush()?;
        Ok(())
    }
}

/// Everything read back from a history file, in order.
#[derive(Debug)]
pub struct HistoryFile {
    pub header: HeaderRecord,
    pub tests: Vec<TestRecord>,
    pub rounds: Vec<RoundRecord>,
    pub final_record: Option<FinalRecord>,
}

pub fn read_history(path: &Path) -> Result<HistoryFile> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut header: Option<HeaderRecord> = None;
    let mut tests: Vec<TestRecord> = Vec::new();
    let mut rounds = Vec::new();
    let mut final_record = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: HistoryRecord =
            serde_json::from_str(&line).map_err(|e| Error::HistoryCorrupt {
                line: line_no,
                detail: e.to_string(),
            })?;
        match record {
            HistoryRecord::Header(h) => {
                if header.is_some() {
                    return Err(Error::HistoryCorrupt {
                        line: line_no,
                        detail: "second header record".into(),
                    });
                }
                if line_no != 1 {
                    return Err(Error::HistoryCorrupt {
                        line: line_no,
                        detail: "header is not the first record".into(),
                    });
                }
                header = Some(h);
            }
            HistoryRecord::Test(t) => {
                if t.test_index != tests.len() as u64 {
                    return Err(Error::HistoryCorrupt {
                        line: line_no,
                        detail: format!(
                            "test_index {} out of order, expected {}",
                            t.test_index,
                            tests.len()
                        ),
                    });
                }
                tests.push(t);
            }
            HistoryRecord::Round(r) => rounds.push(r),
            HistoryRecord::Final(f) => final_record = Some(f),
        }
    }
    let header = header.ok_or(Error::HistoryCorrupt {
        line: 1,
        detail: "missing header record".into(),
    })?;
    Ok(HistoryFile {
        header,
        tests,
        rounds,
        final_record,
    })
}

/// Hash pinning the run-defining inputs; any change invalidates a resume.
pub fn schema_hash(
    space: &str,
    target: &TargetSpec,
    utility: &str,
    goal: &str,
    budget: u64,
    set_size: usize,
    sampler: &str,
    optimizer: &str,
    seed: u64,
) -> String {
    let target_json = serde_json::to_string(target).expect("target serializes");
    let canonical = format!(
        "version={HISTORY_VERSION}\nspace={space}\ntarget={target_json}\nutility={utility}\ngoal={goal}\nbudget={budget}\nset_size={set_size}\nsampler={sampler}\noptimizer={optimizer}\nseed={seed}\n"
    );
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

pub fn unix_ms_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_header() -> HeaderRecord {
        HeaderRecord {
            version: HISTORY_VERSION,
            schema_hash: "abc".into(),
            seed: 7,
            budget: 48,
            set_size: 16,
            sampler: "dds".into(),
            optimizer: "rbs".into(),
            utility: "identity(throughput)".into(),
            goal: "maximize".into(),
            space: "x:float[0,1)".into(),
            target: TargetSpec::Synthetic {
                landscape: "bumpy".into(),
                noise: 0.0,
            },
            started_unix_ms: 0,
        }
    }

    fn sample_test(index: u64) -> TestRecord {
        TestRecord {
            test_index: index,
            round: 1,
            scope: ScopeKind::Whole,
            source: TestSource::Dds,
            cell: Some(vec![0, 3]),
            encoded: vec![0.25, 0.75],
            decoded: BTreeMap::from([
                ("x".to_string(), NativeValue::Float(0.25)),
                ("y".to_string(), NativeValue::Int(3)),
            ]),
            metrics: Some(MetricVector::from_pairs([("throughput", 120.0)]).unwrap()),
            utility: Some(120.0),
            status: SampleStatus::Ok,
            reason: None,
            duration_ms: 1.5,
            unix_ms: 1_700_000_000_000,
        }
    }

    #[test]
    fn file_round_trip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        {
            let mut sink = FileSink::open(&path).unwrap();
            sink.record(&HistoryRecord::Header(sample_header())).unwrap();
            sink.record(&HistoryRecord::Test(sample_test(0))).unwrap();
            sink.record(&HistoryRecord::Test(sample_test(1))).unwrap();
            sink.record(&HistoryRecord::Round(RoundRecord {
                round: 1,
                next_action: "bounded".into(),
                reason: RoundReason::Improved,
                bounds: Some(vec![(0.1, 0.9), (0.2, 0.8)]),
            }))
            .unwrap();
        }
        let read = read_history(&path).unwrap();
        assert_eq!(read.header, sample_header());
        assert_eq!(read.tests.len(), 2);
        assert_eq!(read.tests[1], sample_test(1));
        assert_eq!(read.rounds.len(), 1);
        assert!(read.final_record.is_none());
    }

    #[test]
    fn encoded_values_survive_json_exactly() {
        // replay compares encoded coordinates bit-for-bit, so the JSON
        // round trip must be lossless for arbitrary doubles
        let mut record = sample_test(0);
        record.encoded = vec![0.1 + 0.2, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300];
        let line = serde_json::to_string(&HistoryRecord::Test(record.clone())).unwrap();
        let back: HistoryRecord = serde_json::from_str(&line).unwrap();
        match back {
            HistoryRecord::Test(t) => assert_eq!(t.encoded, record.encoded),
            _ => panic!("wrong record type"),
        }
    }

    #[test]
    fn garbage_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        let header = serde_json::to_string(&HistoryRecord::Header(sample_header())).unwrap();
        std::fs::write(&path, format!("{header}\nnot json\n")).unwrap();
        match read_history(&path).unwrap_err() {
            Error::HistoryCorrupt { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        let test = serde_json::to_string(&HistoryRecord::Test(sample_test(0))).unwrap();
        std::fs::write(&path, format!("{test}\n")).unwrap();
        assert!(matches!(
            read_history(&path).unwrap_err(),
            Error::HistoryCorrupt { .. }
        ));
    }

    #[test]
    fn out_of_order_test_index_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        let header = serde_json::to_string(&HistoryRecord::Header(sample_header())).unwrap();
        let test = serde_json::to_string(&HistoryRecord::Test(sample_test(5))).unwrap();
        std::fs::write(&path, format!("{header}\n{test}\n")).unwrap();
        match read_history(&path).unwrap_err() {
            Error::HistoryCorrupt { line, detail } => {
                assert_eq!(line, 2);
                assert!(detail.contains("out of order"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn schema_hash_is_sensitive_to_each_input() {
        let target = TargetSpec::Synthetic {
            landscape: "bumpy".into(),
            noise: 0.0,
        };
        let base = schema_hash("s", &target, "u", "maximize", 48, 16, "dds", "rbs", 7);
        assert_eq!(
            base,
            schema_hash("s", &target, "u", "maximize", 48, 16, "dds", "rbs", 7)
        );
        assert_ne!(
            base,
            schema_hash("s2", &target, "u", "maximize", 48, 16, "dds", "rbs", 7)
        );
        assert_ne!(
            base,
            schema_hash("s", &target, "u", "maximize", 49, 16, "dds", "rbs", 7)
        );
        assert_ne!(
            base,
            schema_hash("s", &target, "u", "maximize", 48, 16, "dds", "rbs", 8)
        );
    }
}
