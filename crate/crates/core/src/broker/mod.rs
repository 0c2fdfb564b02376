//! File-based dual-end job broker.
//!
//! The client writes one request file per circuit into `dir1` and polls
//! `dir3` for results; the host, a separate process, discovers requests in
//! job-id order, keeps up to three executing, checks each histogram against
//! the expected distribution and records completions in an append-only
//! journal so that a restarted host resumes at the first unfinished job.
//!
//! Session layout:
//!
//! ```text
//! <session>/dir1/job_<id>.yaml        requests
//! <session>/dir3/result_<id>.yaml     results (status ok)
//! <session>/dir3/blocked_<id>.yaml    jobs halted by the return criteria
//! <session>/dir3/completed.log        journal, one `<id> ok <attempts>` per line
//! <session>/quarantine/               unreadable requests and their reasons
//! <session>/host_events.log           dispatch/completion audit trail
//! <session>/host_status.yaml          latest host snapshot
//! <session>/resume.request            operator resume command
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::backend::{BackendError, Histogram};
use crate::kv::{fmt_float, KvDoc, KvError};
use crate::pauli::Counts;

mod client;
mod host;

pub use client::{client_await, client_submit, next_job_id, SubmitAck};
pub use host::{
    host_run, host_status, parse_events, request_resume, session_status, HostEvent, HostOptions, HostState,
    HostSummary, JobState, StatusSnapshot,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_millis(200);
pub const DEFAULT_MAX_IN_FLIGHT: usize = 3;
pub const DEFAULT_RETRY_LIMIT: u32 = 3;
pub const DEFAULT_DEVIATION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Malformed {
        path: PathBuf,
        #[source]
        source: KvError,
    },
    #[error("job {0} already exists")]
    DuplicateJob(JobId),
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error("timed out with {} of {} results; missing {}", completed.len(), completed.len() + missing.len(), fmt_ids(missing))]
    Timeout {
        completed: Vec<ResultRecord>,
        missing: Vec<JobId>,
    },
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
}

fn fmt_ids(ids: &[JobId]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BrokerError + '_ {
    move |source| BrokerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Job identifier, rendered as eight zero-padded digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobId(pub u64);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08}", self.0)
    }
}

impl FromStr for JobId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("job id `{s}` is not a digit string"));
        }
        s.parse().map(JobId).map_err(|e| format!("job id `{s}`: {e}"))
    }
}

/// Paths of one broker session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLayout {
    pub root: PathBuf,
}

impl SessionLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn create(&self) -> Result<(), BrokerError> {
        for d in [self.dir1(), self.dir3(), self.quarantine()] {
            fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        Ok(())
    }

    pub fn dir1(&self) -> PathBuf {
        self.root.join("dir1")
    }

    pub fn dir3(&self) -> PathBuf {
        self.root.join("dir3")
    }

    pub fn quarantine(&self) -> PathBuf {
        self.root.join("quarantine")
    }

    pub fn journal(&self) -> PathBuf {
        self.dir3().join("completed.log")
    }

    pub fn events_log(&self) -> PathBuf {
        self.root.join("host_events.log")
    }

    pub fn status_file(&self) -> PathBuf {
        self.root.join("host_status.yaml")
    }

    pub fn resume_request(&self) -> PathBuf {
        self.root.join("resume.request")
    }

    pub fn job_path(&self, id: JobId) -> PathBuf {
        self.dir1().join(job_file_name(id))
    }

    pub fn result_path(&self, id: JobId) -> PathBuf {
        result_path(&self.dir3(), id)
    }

    pub fn blocked_path(&self, id: JobId) -> PathBuf {
        blocked_path(&self.dir3(), id)
    }

    /// Quarantined request files with their recorded reasons.
    pub fn quarantine_list(&self) -> Result<Vec<(String, String)>, BrokerError> {
        let dir = self.quarantine();
        let mut out = Vec::new();
        if !dir.exists() {
            return Ok(out);
        }
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let name = entry.map_err(io_err(&dir))?.file_name().to_string_lossy().into_owned();
            if name.ends_with(".reason") {
                continue;
            }
            let reason = fs::read_to_string(dir.join(format!("{name}.reason"))).unwrap_or_default();
            out.push((name, reason.trim().to_string()));
        }
        out.sort();
        Ok(out)
    }
}

pub(crate) fn job_file_name(id: JobId) -> String {
    format!("job_{id}.yaml")
}

pub(crate) fn result_path(dir3: &Path, id: JobId) -> PathBuf {
    dir3.join(format!("result_{id}.yaml"))
}

pub(crate) fn blocked_path(dir3: &Path, id: JobId) -> PathBuf {
    dir3.join(format!("blocked_{id}.yaml"))
}

/// Id embedded in a file name such as `job_00000042.yaml`.
pub(crate) fn id_from_file_name(name: &str, prefix: &str) -> Option<JobId> {
    name.strip_prefix(prefix)?.strip_suffix(".yaml")?.parse().ok()
}

/// One circuit execution request.
#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub job_id: JobId,
    pub circuit_qasm: String,
    pub shots: u64,
    pub expected_distribution: Option<BTreeMap<String, f64>>,
    pub metadata: BTreeMap<String, String>,
    pub schema_version: u32,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
}

impl JobRecord {
    pub fn new(job_id: JobId, circuit_qasm: impl Into<String>, shots: u64) -> Self {
        Self {
            job_id,
            circuit_qasm: circuit_qasm.into(),
            shots,
            expected_distribution: None,
            metadata: BTreeMap::new(),
            schema_version: SCHEMA_VERSION,
            created_at: 0,
        }
    }

    pub fn validate(&self) -> Result<(), BrokerError> {
        if self.shots == 0 {
            return Err(BrokerError::InvalidJob(format!("job {}: shots must be at least 1", self.job_id)));
        }
        if let Some(dist) = &self.expected_distribution {
            let total: f64 = dist.values().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(BrokerError::InvalidJob(format!(
                    "job {}: expected distribution sums to {total}",
                    self.job_id
                )));
            }
            if let Some(k) = dist.keys().find(|k| k.is_empty() || !k.bytes().all(|b| b == b'0' || b == b'1')) {
                return Err(BrokerError::InvalidJob(format!("job {}: bad outcome `{k}`", self.job_id)));
            }
        }
        if let Some(k) = self.metadata.keys().find(|k| k.is_empty() || k.contains(':')) {
            return Err(BrokerError::InvalidJob(format!("job {}: bad metadata key `{k}`", self.job_id)));
        }
        Ok(())
    }

    /// Seed requested through `metadata.seed`, if any.
    pub fn seed(&self) -> Option<u64> {
        self.metadata.get("seed").and_then(|s| s.parse().ok())
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.set("schema_version", self.schema_version)
            .set("job_id", self.job_id)
            .set("created_at", self.created_at)
            .set("shots", self.shots);
        for (k, v) in &self.metadata {
            d.set(&format!("metadata.{k}"), v);
        }
        if let Some(dist) = &self.expected_distribution {
            for (k, p) in dist {
                d.set(&format!("expected_distribution.{k}"), fmt_float(*p));
            }
        }
        d.set_block("circuit_qasm", &self.circuit_qasm);
        d
    }

    pub fn from_kv(d: &KvDoc) -> Result<Self, KvError> {
        let schema_version: u32 = d.parse_required("schema_version")?;
        if schema_version != SCHEMA_VERSION {
            return Err(KvError::Invalid {
                key: "schema_version".into(),
                message: format!("unsupported version {schema_version}"),
            });
        }
        let mut expected = BTreeMap::new();
        for (k, v) in d.with_prefix("expected_distribution") {
            let p: f64 = v.parse().map_err(|e| KvError::Invalid {
                key: format!("expected_distribution.{k}"),
                message: format!("{e}"),
            })?;
            expected.insert(k.to_string(), p);
        }
        Ok(Self {
            job_id: d.parse_required("job_id")?,
            circuit_qasm: d.require("circuit_qasm")?.to_string(),
            shots: d.parse_required("shots")?,
            expected_distribution: (!expected.is_empty()).then_some(expected),
            metadata: d
                .with_prefix("metadata")
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            schema_version,
            created_at: d.parse_value("created_at")?.unwrap_or(0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobStatus {
    Ok,
    FailedCriteria,
    Blocked,
}

impl fmt::Display for JobStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobStatus::Ok => "ok",
            JobStatus::FailedCriteria => "failed_criteria",
            JobStatus::Blocked => "blocked",
        })
    }
}

impl FromStr for JobStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ok" => Ok(JobStatus::Ok),
            "failed_criteria" => Ok(JobStatus::FailedCriteria),
            "blocked" => Ok(JobStatus::Blocked),
            _ => Err(format!("unknown status `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Timing {
    pub queued_ms: u64,
    pub exec_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub job_id: JobId,
    pub status: JobStatus,
    pub counts: Counts,
    pub attempts: u32,
    pub timing: Timing,
}

impl ResultRecord {
    pub fn histogram(&self) -> Histogram {
        Histogram::from_counts(self.counts.clone())
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.set("job_id", self.job_id)
            .set("status", self.status)
            .set("attempts", self.attempts);
        for (k, v) in &self.counts {
            d.set(&format!("counts.{k}"), v);
        }
        d.set("timing.queued_ms", self.timing.queued_ms)
            .set("timing.exec_ms", self.timing.exec_ms);
        d
    }

    pub fn from_kv(d: &KvDoc) -> Result<Self, KvError> {
        let mut counts = Counts::new();
        for (k, v) in d.with_prefix("counts") {
            let n: u64 = v.parse().map_err(|e| KvError::Invalid {
                key: format!("counts.{k}"),
                message: format!("{e}"),
            })?;
            counts.insert(k.to_string(), n);
        }
        let attempts: u32 = d.parse_required("attempts")?;
        if attempts == 0 {
            return Err(KvError::Invalid {
                key: "attempts".into(),
                message: "must be at least 1".into(),
            });
        }
        Ok(Self {
            job_id: d.parse_required("job_id")?,
            status: d.parse_required("status")?,
            counts,
            attempts,
            timing: Timing {
                queued_ms: d.parse_value("timing.queued_ms")?.unwrap_or(0),
                exec_ms: d.parse_value("timing.exec_ms")?.unwrap_or(0),
            },
        })
    }

    pub(crate) fn read(path: &Path) -> Result<Self, BrokerError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        KvDoc::parse(&text)
            .and_then(|d| Self::from_kv(&d))
            .map_err(|source| BrokerError::Malformed {
                path: path.to_path_buf(),
                source,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriteriaOutcome {
    pub passed: bool,
    /// Total variation distance; `None` when no expected distribution was given.
    pub deviation: Option<f64>,
}

/// `½ Σ |observed_freq − expected_prob|` over the union of outcomes.
pub fn total_variation(observed: &Histogram, expected: &BTreeMap<String, f64>) -> f64 {
    let freq = if observed.shots == 0 {
        BTreeMap::new()
    } else {
        observed.frequencies()
    };
    let mut sum = 0.0;
    for (k, p) in expected {
        sum += (freq.get(k).copied().unwrap_or(0.0) - p).abs();
    }
    for (k, f) in &freq {
        if !expected.contains_key(k) {
            sum += f;
        }
    }
    sum / 2.0
}

/// Job-return check: fails iff the TV distance exceeds `threshold`. Jobs
/// without an expected distribution always pass.
pub fn check_return_criteria(
    observed: &Histogram,
    expected: Option<&BTreeMap<String, f64>>,
    threshold: f64,
) -> CriteriaOutcome {
    match expected {
        None => CriteriaOutcome {
            passed: true,
            deviation: None,
        },
        Some(e) => {
            let tv = total_variation(observed, e);
            CriteriaOutcome {
                passed: tv <= threshold,
                deviation: Some(tv),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(pairs: &[(&str, u64)]) -> Histogram {
        Histogram::from_counts(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }

    #[test]
    fn job_id_format() {
        assert_eq!(JobId(42).to_string(), "00000042");
        assert_eq!("00000042".parse::<JobId>().unwrap(), JobId(42));
        assert!("4x".parse::<JobId>().is_err());
        assert!("".parse::<JobId>().is_err());
        assert_eq!(id_from_file_name("job_00000007.yaml", "job_"), Some(JobId(7)));
        assert_eq!(id_from_file_name(".tmp-job_00000007.yaml-1-0", "job_"), None);
    }

    #[test]
    fn job_record_round_trip() {
        let mut j = JobRecord::new(JobId(3), "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[1];\n", 300);
        j.metadata.insert("seed".into(), "99".into());
        j.metadata.insert("group".into(), "XZ".into());
        j.expected_distribution = Some([("0".to_string(), 0.1), ("1".to_string(), 0.9)].into());
        j.created_at = 1_700_000_000_000;
        let text = j.to_kv().to_text();
        let back = JobRecord::from_kv(&KvDoc::parse(&text).unwrap()).unwrap();
        assert_eq!(back, j);
        assert_eq!(back.seed(), Some(99));
    }

    #[test]
    fn job_validation() {
        let j = JobRecord::new(JobId(1), "", 0);
        assert!(j.validate().is_err());
        let mut j = JobRecord::new(JobId(1), "", 10);
        j.expected_distribution = Some([("0".to_string(), 0.7)].into());
        assert!(j.validate().is_err());
        j.expected_distribution = Some([("0".to_string(), 0.7), ("1".to_string(), 0.3)].into());
        assert!(j.validate().is_ok());
    }

    #[test]
    fn result_record_round_trip() {
        let r = ResultRecord {
            job_id: JobId(12),
            status: JobStatus::Ok,
            counts: [("00".to_string(), 120), ("11".to_string(), 180)].into(),
            attempts: 2,
            timing: Timing { queued_ms: 5, exec_ms: 17 },
        };
        let back = ResultRecord::from_kv(&KvDoc::parse(&r.to_kv().to_text()).unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.histogram().shots, 300);
    }

    #[test]
    fn criteria_examples() {
        let expected: BTreeMap<String, f64> = [("00".to_string(), 1.0)].into();
        let exact = check_return_criteria(&hist(&[("00", 100)]), Some(&expected), 0.5);
        assert_eq!(exact, CriteriaOutcome { passed: true, deviation: Some(0.0) });

        let uniform = hist(&[("00", 25), ("01", 25), ("10", 25), ("11", 25)]);
        let out = check_return_criteria(&uniform, Some(&expected), 0.5);
        assert!(!out.passed);
        assert!((out.deviation.unwrap() - 0.75).abs() < 1e-15);

        assert!(check_return_criteria(&uniform, Some(&expected), 1.0).passed);
        assert!(check_return_criteria(&uniform, None, 0.0).passed);
    }

    #[test]
    fn tv_counts_unexpected_outcomes() {
        let expected: BTreeMap<String, f64> = [("0".to_string(), 0.5), ("1".to_string(), 0.5)].into();
        let tv = total_variation(&hist(&[("0", 50), ("1", 50)]), &expected);
        assert_eq!(tv, 0.0);
        let tv = total_variation(&hist(&[("0", 100)]), &expected);
        assert!((tv - 0.5).abs() < 1e-15);
    }
}
