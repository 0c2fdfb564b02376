//! Host end: a supervisor loop that owns all state and every filesystem
//! write, plus up to `max_in_flight` worker threads that only run the
//! backend and report back over a channel.
//!
//! Ordering on completion is result file (atomic rename), then journal line,
//! then event line. Startup repairs whatever a crash interrupted: result
//! files missing from the journal are journaled, stale temp files are
//! removed, and every request without a result is queued again.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use log::{error, info, warn};

use super::{
    check_return_criteria, id_from_file_name, io_err, BrokerError, JobId, JobRecord, JobStatus, ResultRecord,
    SessionLayout, Timing, DEFAULT_DEVIATION_THRESHOLD, DEFAULT_MAX_IN_FLIGHT, DEFAULT_POLL_INTERVAL,
    DEFAULT_RETRY_LIMIT,
};
use crate::backend::{Backend, BackendError, Histogram};
use crate::circuit::Circuit;
use crate::kv::{remove_stale_temps, write_atomic, KvDoc};
use crate::qasm::parse_qasm;

#[derive(Debug, Clone, PartialEq)]
pub struct HostOptions {
    pub max_in_flight: usize,
    /// Re-executions after a failed return check before the job blocks.
    pub retry_limit: u32,
    /// TV distance above which a histogram fails the return check.
    pub deviation_threshold: f64,
    pub poll_interval: Duration,
    /// Sleep inserted before every execution.
    pub exec_delay: Duration,
    /// Return once nothing has been queued, running or blocked for this long.
    pub idle_exit: Option<Duration>,
}

impl Default for HostOptions {
    fn default() -> Self {
        Self {
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            retry_limit: DEFAULT_RETRY_LIMIT,
            deviation_threshold: DEFAULT_DEVIATION_THRESHOLD,
            poll_interval: DEFAULT_POLL_INTERVAL,
            exec_delay: Duration::ZERO,
            idle_exit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobState {
    Queued,
    InFlight,
    Ok,
    FailedCriteria,
    Blocked,
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobState::Queued => "queued",
            JobState::InFlight => "in_flight",
            JobState::Ok => "ok",
            JobState::FailedCriteria => "failed_criteria",
            JobState::Blocked => "blocked",
        })
    }
}

const ALL_STATES: [JobState; 5] = [
    JobState::Queued,
    JobState::InFlight,
    JobState::Ok,
    JobState::FailedCriteria,
    JobState::Blocked,
];

struct LoadedJob {
    record: JobRecord,
    circuit: Arc<Circuit>,
    discovered: Instant,
}

/// Supervisor-owned state. `queue`, `in_flight` and `completed` are
/// pairwise disjoint; the blocked job is in none of them.
pub struct HostState {
    /// Pending jobs, dispatched in id order.
    pub queue: BTreeSet<JobId>,
    /// Running jobs and their attempt number.
    pub in_flight: BTreeMap<JobId, u32>,
    /// Finished jobs and the attempts they took.
    pub completed: BTreeMap<JobId, u32>,
    pub blocked: Option<(JobId, u32)>,
    /// Queued jobs whose last attempt failed the check, with its TV distance.
    pub failed: BTreeMap<JobId, f64>,
    pub max_in_flight: usize,
    pub retry_limit: u32,
    pub deviation_threshold: f64,
    pub quarantined: usize,
    attempts: BTreeMap<JobId, u32>,
    skip_criteria: BTreeSet<JobId>,
    jobs: BTreeMap<JobId, LoadedJob>,
    started: Instant,
    completed_this_run: u64,
    stopped: bool,
}

impl HostState {
    pub fn new(opts: &HostOptions) -> Self {
        Self {
            queue: BTreeSet::new(),
            in_flight: BTreeMap::new(),
            completed: BTreeMap::new(),
            blocked: None,
            failed: BTreeMap::new(),
            max_in_flight: opts.max_in_flight.max(1),
            retry_limit: opts.retry_limit,
            deviation_threshold: opts.deviation_threshold,
            quarantined: 0,
            attempts: BTreeMap::new(),
            skip_criteria: BTreeSet::new(),
            jobs: BTreeMap::new(),
            started: Instant::now(),
            completed_this_run: 0,
            stopped: false,
        }
    }

    fn state_of(&self, id: JobId) -> Option<(JobState, u32)> {
        let attempts = self.attempts.get(&id).copied().unwrap_or(0);
        if let Some(&a) = self.completed.get(&id) {
            Some((JobState::Ok, a))
        } else if let Some(&a) = self.in_flight.get(&id) {
            Some((JobState::InFlight, a))
        } else if self.blocked.map(|b| b.0) == Some(id) {
            Some((JobState::Blocked, self.blocked.unwrap().1))
        } else if self.failed.contains_key(&id) {
            Some((JobState::FailedCriteria, attempts))
        } else if self.queue.contains(&id) {
            Some((JobState::Queued, attempts))
        } else {
            None
        }
    }
}

/// Point-in-time view of the host, ordered by job id.
#[derive(Debug, Clone, PartialEq)]
pub struct StatusSnapshot {
    /// `running`, `blocked` or `stopped`.
    pub host: String,
    pub jobs: Vec<(JobId, JobState, u32)>,
    pub blocked: Option<(JobId, u32)>,
    pub quarantined: usize,
    /// Completions per second since the host started.
    pub throughput: f64,
}

impl StatusSnapshot {
    pub fn count(&self, state: JobState) -> usize {
        self.jobs.iter().filter(|j| j.1 == state).count()
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.set("host", &self.host);
        for s in ALL_STATES {
            d.set(&format!("count.{s}"), self.count(s));
        }
        d.set("count.quarantined", self.quarantined)
            .set("throughput_per_s", format!("{:.3}", self.throughput));
        if let Some((id, attempts)) = self.blocked {
            d.set("blocked.job_id", id).set("blocked.attempts", attempts);
        }
        for (id, state, attempts) in &self.jobs {
            d.set(&format!("job.{id}"), format!("{state} attempts={attempts}"));
        }
        d
    }
}

pub fn host_status(state: &HostState) -> StatusSnapshot {
    let ids: BTreeSet<JobId> = state
        .queue
        .iter()
        .chain(state.in_flight.keys())
        .chain(state.completed.keys())
        .chain(state.blocked.iter().map(|b| &b.0))
        .copied()
        .collect();
    let elapsed = state.started.elapsed().as_secs_f64();
    StatusSnapshot {
        host: if state.stopped {
            "stopped"
        } else if state.blocked.is_some() {
            "blocked"
        } else {
            "running"
        }
        .to_string(),
        jobs: ids
            .into_iter()
            .filter_map(|id| state.state_of(id).map(|(s, a)| (id, s, a)))
            .collect(),
        blocked: state.blocked,
        quarantined: state.quarantined,
        throughput: if elapsed > 0.0 {
            state.completed_this_run as f64 / elapsed
        } else {
            0.0
        },
    }
}

/// Status text for a session: the host's last snapshot if it wrote one,
/// otherwise a view reconstructed from the session files.
pub fn session_status(layout: &SessionLayout) -> Result<String, BrokerError> {
    let path = layout.status_file();
    if path.exists() {
        return fs::read_to_string(&path).map_err(io_err(&path));
    }
    let completed = read_journal(&layout.journal())?;
    let mut jobs = Vec::new();
    let mut blocked = None;
    let dir1 = layout.dir1();
    if dir1.exists() {
        for id in list_ids(&dir1, "job_")? {
            if let Some(&a) = completed.get(&id) {
                jobs.push((id, JobState::Ok, a));
            } else if layout.blocked_path(id).exists() {
                let a = ResultRecord::read(&layout.blocked_path(id)).map(|r| r.attempts).unwrap_or(0);
                blocked = Some((id, a));
                jobs.push((id, JobState::Blocked, a));
            } else {
                jobs.push((id, JobState::Queued, 0));
            }
        }
    }
    let snap = StatusSnapshot {
        host: "offline".into(),
        jobs,
        blocked,
        quarantined: layout.quarantine_list()?.len(),
        throughput: 0.0,
    };
    Ok(snap.to_kv().to_text())
}

/// Operator command: clear the blocked job and retry it, optionally
/// accepting its next histogram without the return check.
pub fn request_resume(layout: &SessionLayout, skip_criteria: bool) -> Result<(), BrokerError> {
    let path = layout.resume_request();
    let mut d = KvDoc::new();
    d.set("skip_criteria", skip_criteria);
    write_atomic(&path, d.to_text().as_bytes()).map_err(io_err(&path))
}

#[derive(Debug, Clone, PartialEq)]
pub enum HostEvent {
    Start,
    Dispatch { id: JobId, attempt: u32 },
    Complete { id: JobId, attempts: u32 },
    Fail { id: JobId, attempt: u32, deviation: Option<f64> },
    Blocked { id: JobId, attempts: u32 },
    Resume { id: JobId, skip_criteria: bool },
    Recovered { id: JobId },
    Quarantine { file: String },
    Stop,
}

impl fmt::Display for HostEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HostEvent::Start => write!(f, "start"),
            HostEvent::Dispatch { id, attempt } => write!(f, "dispatch {id} {attempt}"),
            HostEvent::Complete { id, attempts } => write!(f, "complete {id} {attempts}"),
            HostEvent::Fail { id, attempt, deviation } => match deviation {
                Some(d) => write!(f, "fail {id} {attempt} {d}"),
                None => write!(f, "fail {id} {attempt} error"),
            },
            HostEvent::Blocked { id, attempts } => write!(f, "blocked {id} {attempts}"),
            HostEvent::Resume { id, skip_criteria } => write!(f, "resume {id} {skip_criteria}"),
            HostEvent::Recovered { id } => write!(f, "recovered {id}"),
            HostEvent::Quarantine { file } => write!(f, "quarantine {file}"),
            HostEvent::Stop => write!(f, "stop"),
        }
    }
}

impl FromStr for HostEvent {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, String> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let id = |i: usize| parts.get(i).ok_or("missing job id")?.parse::<JobId>();
        let num = |i: usize| -> Result<u32, String> {
            parts
                .get(i)
                .ok_or("missing count")?
                .parse()
                .map_err(|e| format!("{e}"))
        };
        let ev = match parts.first().copied() {
            Some("start") => HostEvent::Start,
            Some("stop") => HostEvent::Stop,
            Some("dispatch") => HostEvent::Dispatch { id: id(1)?, attempt: num(2)? },
            Some("complete") => HostEvent::Complete { id: id(1)?, attempts: num(2)? },
            Some("fail") => HostEvent::Fail {
                id: id(1)?,
                attempt: num(2)?,
                deviation: parts.get(3).and_then(|d| d.parse().ok()),
            },
            Some("blocked") => HostEvent::Blocked { id: id(1)?, attempts: num(2)? },
            Some("resume") => HostEvent::Resume {
                id: id(1)?,
                skip_criteria: parts.get(2) == Some(&"true"),
            },
            Some("recovered") => HostEvent::Recovered { id: id(1)? },
            Some("quarantine") => HostEvent::Quarantine {
                file: parts.get(1).ok_or("missing file")?.to_string(),
            },
            _ => return Err(format!("unknown event `{line}`")),
        };
        Ok(ev)
    }
}

/// Events in the log. A line cut short by a crash is skipped.
pub fn parse_events(path: &Path) -> Result<Vec<HostEvent>, BrokerError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().filter_map(|l| l.parse().ok()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HostSummary {
    /// Backend executions started by this run.
    pub executions: u64,
    pub completed: usize,
    pub blocked: Option<JobId>,
    pub quarantined: usize,
}

/// Appends a newline if a crash left the file without one, so the next
/// line starts clean.
fn terminate_last_line(path: &Path) -> io::Result<()> {
    let mut f = match OpenOptions::new().read(true).append(true).open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e),
    };
    let len = f.metadata()?.len();
    if len == 0 {
        return Ok(());
    }
    f.seek(SeekFrom::Start(len - 1))?;
    let mut last = [0u8];
    f.read_exact(&mut last)?;
    if last[0] != b'\n' {
        f.write_all(b"\n")?;
    }
    Ok(())
}

fn read_journal(path: &Path) -> Result<BTreeMap<JobId, u32>, BrokerError> {
    let mut out = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        if let (Some(id), Some("ok"), Some(a)) = (parts.next(), parts.next(), parts.next()) {
            if let (Ok(id), Ok(a)) = (id.parse(), a.parse()) {
                out.insert(id, a);
            }
        }
    }
    Ok(out)
}

fn list_ids(dir: &Path, prefix: &str) -> Result<Vec<JobId>, BrokerError> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let name = entry.map_err(io_err(dir))?.file_name();
        if let Some(id) = id_from_file_name(&name.to_string_lossy(), prefix) {
            ids.push(id);
        }
    }
    ids.sort();
    Ok(ids)
}

fn append_line(file: &mut File, path: &Path, line: &str, sync: bool) -> Result<(), BrokerError> {
    file.write_all(format!("{line}\n").as_bytes()).map_err(io_err(path))?;
    if sync {
        file.sync_data().map_err(io_err(path))?;
    }
    Ok(())
}

fn open_append(path: &Path) -> Result<File, BrokerError> {
    terminate_last_line(path).map_err(io_err(path))?;
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))
}

/// Seed for an attempt; the first attempt uses the requested seed as is.
fn attempt_seed(base: u64, attempt: u32) -> u64 {
    if attempt <= 1 {
        return base;
    }
    let mut z = base ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Completion {
    id: JobId,
    attempt: u32,
    result: Result<Histogram, BackendError>,
    queued_ms: u64,
    exec_ms: u64,
}

struct Host<'a> {
    layout: &'a SessionLayout,
    opts: &'a HostOptions,
    state: HostState,
    journal: File,
    events: File,
    executions: u64,
    dirty: bool,
}

impl<'a> Host<'a> {
    fn start(layout: &'a SessionLayout, opts: &'a HostOptions) -> Result<Self, BrokerError> {
        layout.create()?;
        // dir1 temps belong to clients that may be mid-write; scans skip them anyway
        for d in [layout.dir3(), layout.root.clone()] {
            remove_stale_temps(&d).map_err(io_err(&d))?;
        }
        let journal_path = layout.journal();
        let completed = read_journal(&journal_path)?;
        let mut host = Host {
            layout,
            opts,
            state: HostState::new(opts),
            journal: open_append(&journal_path)?,
            events: open_append(&layout.events_log())?,
            executions: 0,
            dirty: true,
        };
        host.state.completed = completed;
        host.state.quarantined = layout.quarantine_list()?.len();
        host.event(HostEvent::Start)?;

        let dir3 = layout.dir3();
        for id in list_ids(&dir3, "result_")? {
            if host.state.completed.contains_key(&id) {
                continue;
            }
            let record = ResultRecord::read(&layout.result_path(id))?;
            host.journal_ok(id, record.attempts)?;
            host.event(HostEvent::Recovered { id })?;
            info!("recovered result {id} missing from the journal");
        }
        for id in list_ids(&dir3, "blocked_")? {
            let path = layout.blocked_path(id);
            if host.state.completed.contains_key(&id) {
                fs::remove_file(&path).map_err(io_err(&path))?;
            } else if host.state.blocked.is_none() {
                let record = ResultRecord::read(&path)?;
                host.state.blocked = Some((id, record.attempts));
                warn!("job {id} is blocked; waiting for an operator resume");
            }
        }
        Ok(host)
    }

    fn event(&mut self, e: HostEvent) -> Result<(), BrokerError> {
        let path = self.layout.events_log();
        append_line(&mut self.events, &path, &e.to_string(), false)
    }

    fn journal_ok(&mut self, id: JobId, attempts: u32) -> Result<(), BrokerError> {
        let path = self.layout.journal();
        append_line(&mut self.journal, &path, &format!("{id} ok {attempts}"), true)?;
        self.state.completed.insert(id, attempts);
        self.dirty = true;
        Ok(())
    }

    fn quarantine(&mut self, path: &Path, reason: &str) -> Result<(), BrokerError> {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let dest = self.layout.quarantine().join(&name);
        let note = self.layout.quarantine().join(format!("{name}.reason"));
        write_atomic(&note, format!("{reason}\n").as_bytes()).map_err(io_err(&note))?;
        fs::rename(path, &dest).map_err(io_err(path))?;
        warn!("quarantined {name}: {reason}");
        self.state.quarantined += 1;
        self.dirty = true;
        self.event(HostEvent::Quarantine { file: name })
    }

    fn load(&self, path: &Path, id: JobId) -> Result<LoadedJob, String> {
        let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
        let record = KvDoc::parse(&text)
            .and_then(|d| JobRecord::from_kv(&d))
            .map_err(|e| e.to_string())?;
        if record.job_id != id {
            return Err(format!("file name says {id}, record says {}", record.job_id));
        }
        record.validate().map_err(|e| e.to_string())?;
        let circuit = parse_qasm(&record.circuit_qasm).map_err(|e| format!("circuit_qasm: {e}"))?;
        Ok(LoadedJob {
            record,
            circuit: Arc::new(circuit),
            discovered: Instant::now(),
        })
    }

    /// Picks up request files not seen before.
    fn scan(&mut self) -> Result<(), BrokerError> {
        let dir1 = self.layout.dir1();
        for id in list_ids(&dir1, "job_")? {
            if self.state.jobs.contains_key(&id) || self.state.completed.contains_key(&id) {
                continue;
            }
            let path = self.layout.job_path(id);
            match self.load(&path, id) {
                Ok(job) => {
                    self.state.jobs.insert(id, job);
                    if self.state.blocked.map(|b| b.0) != Some(id) {
                        self.state.queue.insert(id);
                    }
                    self.dirty = true;
                }
                Err(reason) => self.quarantine(&path, &reason)?,
            }
        }
        Ok(())
    }

    fn check_resume(&mut self) -> Result<(), BrokerError> {
        let path = self.layout.resume_request();
        if !path.exists() {
            return Ok(());
        }
        let skip = KvDoc::read(&path)
            .ok()
            .and_then(|d| d.parse_value::<bool>("skip_criteria").ok().flatten())
            .unwrap_or(false);
        fs::remove_file(&path).map_err(io_err(&path))?;
        let Some((id, _)) = self.state.blocked.take() else {
            info!("resume requested but no job is blocked");
            return Ok(());
        };
        warn!("resuming at job {id}{}", if skip { " with return criteria skipped" } else { "" });
        // clients treat the marker as "blocked now"
        let marker = self.layout.blocked_path(id);
        if marker.exists() {
            fs::remove_file(&marker).map_err(io_err(&marker))?;
        }
        self.state.attempts.remove(&id);
        for failed in self.state.failed.keys() {
            self.state.attempts.remove(failed);
        }
        if skip {
            self.state.skip_criteria.insert(id);
        }
        self.state.failed.insert(id, f64::NAN);
        self.state.queue.insert(id);
        self.dirty = true;
        self.event(HostEvent::Resume { id, skip_criteria: skip })
    }

    fn dispatch(&mut self, backend: &Arc<dyn Backend>, tx: &mpsc::Sender<Completion>) -> Result<(), BrokerError> {
        while self.state.blocked.is_none() && self.state.in_flight.len() < self.state.max_in_flight {
            let Some(id) = self.state.queue.pop_first() else { break };
            if self.layout.result_path(id).exists() {
                // finished by an earlier run that died before journaling
                let record = ResultRecord::read(&self.layout.result_path(id))?;
                self.journal_ok(id, record.attempts)?;
                self.event(HostEvent::Recovered { id })?;
                self.state.jobs.remove(&id);
                continue;
            }
            let attempt = self.state.attempts.get(&id).copied().unwrap_or(0) + 1;
            self.state.attempts.insert(id, attempt);
            self.state.in_flight.insert(id, attempt);
            self.event(HostEvent::Dispatch { id, attempt })?;
            self.executions += 1;
            self.dirty = true;

            let job = &self.state.jobs[&id];
            let circuit = Arc::clone(&job.circuit);
            let shots = job.record.shots;
            let seed = attempt_seed(job.record.seed().unwrap_or(id.0), attempt);
            let queued_ms = job.discovered.elapsed().as_millis() as u64;
            let backend = Arc::clone(backend);
            let tx = tx.clone();
            let delay = self.opts.exec_delay;
            thread::spawn(move || {
                if !delay.is_zero() {
                    thread::sleep(delay);
                }
                let t0 = Instant::now();
                let result = backend.run(&circuit, shots, seed);
                let _ = tx.send(Completion {
                    id,
                    attempt,
                    result,
                    queued_ms,
                    exec_ms: t0.elapsed().as_millis() as u64,
                });
            });
        }
        Ok(())
    }

    fn complete(&mut self, c: Completion) -> Result<(), BrokerError> {
        self.state.in_flight.remove(&c.id);
        self.dirty = true;
        let job = &self.state.jobs[&c.id];
        let (hist, outcome) = match c.result {
            Ok(hist) => {
                let mut outcome = check_return_criteria(
                    &hist,
                    job.record.expected_distribution.as_ref(),
                    self.state.deviation_threshold,
                );
                if hist.shots != job.record.shots {
                    outcome.passed = false;
                }
                if self.state.skip_criteria.contains(&c.id) {
                    outcome.passed = true;
                }
                (hist, Some(outcome))
            }
            Err(e) => {
                warn!("job {} attempt {} failed in the backend: {e}", c.id, c.attempt);
                (Histogram::default(), None)
            }
        };
        let timing = Timing {
            queued_ms: c.queued_ms,
            exec_ms: c.exec_ms,
        };
        if outcome.is_some_and(|o| o.passed) {
            let record = ResultRecord {
                job_id: c.id,
                status: JobStatus::Ok,
                counts: hist.counts,
                attempts: c.attempt,
                timing,
            };
            let path = self.layout.result_path(c.id);
            write_atomic(&path, record.to_kv().to_text().as_bytes()).map_err(io_err(&path))?;
            self.journal_ok(c.id, c.attempt)?;
            let blocked = self.layout.blocked_path(c.id);
            if blocked.exists() {
                fs::remove_file(&blocked).map_err(io_err(&blocked))?;
            }
            self.event(HostEvent::Complete {
                id: c.id,
                attempts: c.attempt,
            })?;
            self.state.jobs.remove(&c.id);
            self.state.failed.remove(&c.id);
            self.state.attempts.remove(&c.id);
            self.state.skip_criteria.remove(&c.id);
            self.state.completed_this_run += 1;
            return Ok(());
        }

        let deviation = outcome.and_then(|o| o.deviation);
        self.event(HostEvent::Fail {
            id: c.id,
            attempt: c.attempt,
            deviation,
        })?;
        if c.attempt <= self.state.retry_limit || self.state.blocked.is_some() {
            if c.attempt > self.state.retry_limit {
                // another job already holds the block; this one waits behind it
                self.state.attempts.insert(c.id, self.state.retry_limit + 1);
            }
            self.state.failed.insert(c.id, deviation.unwrap_or(f64::NAN));
            self.state.queue.insert(c.id);
            return Ok(());
        }
        let record = ResultRecord {
            job_id: c.id,
            status: JobStatus::Blocked,
            counts: hist.counts,
            attempts: c.attempt,
            timing,
        };
        let path = self.layout.blocked_path(c.id);
        write_atomic(&path, record.to_kv().to_text().as_bytes()).map_err(io_err(&path))?;
        self.state.failed.remove(&c.id);
        self.state.blocked = Some((c.id, c.attempt));
        self.event(HostEvent::Blocked {
            id: c.id,
            attempts: c.attempt,
        })?;
        error!(
            "job {} failed the return check {} times (last TV {}); dispatch halted until `resume`",
            c.id,
            c.attempt,
            deviation.map_or("n/a".to_string(), |d| format!("{d:.3}"))
        );
        Ok(())
    }

    fn write_status(&mut self) -> Result<(), BrokerError> {
        let path = self.layout.status_file();
        let mut doc = host_status(&self.state).to_kv();
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        doc.set("updated_at", now);
        write_atomic(&path, doc.to_text().as_bytes()).map_err(io_err(&path))?;
        self.dirty = false;
        Ok(())
    }
}

/// Runs the host until `shutdown` is set (or `idle_exit` elapses with
/// nothing running, which includes sitting blocked). On shutdown no new
/// work is dispatched and running jobs are finished.
pub fn host_run(
    layout: &SessionLayout,
    backend: Arc<dyn Backend>,
    opts: &HostOptions,
    shutdown: &AtomicBool,
) -> Result<HostSummary, BrokerError> {
    let mut host = Host::start(layout, opts)?;
    let (tx, rx) = mpsc::channel();
    let mut idle_since = Instant::now();
    let mut last_status = Instant::now();
    // a halted queue counts as idle: nothing runs until an operator acts
    let working = |s: &HostState| (!s.queue.is_empty() && s.blocked.is_none()) || !s.in_flight.is_empty();
    loop {
        let stopping = shutdown.load(Ordering::SeqCst);
        if !stopping {
            host.check_resume()?;
            host.scan()?;
            host.dispatch(&backend, &tx)?;
        }
        if stopping && host.state.in_flight.is_empty() {
            break;
        }
        if host.dirty || last_status.elapsed() >= Duration::from_secs(1) {
            host.write_status()?;
            last_status = Instant::now();
        }
        // sampled before the wait too, or a job dispatched and finished
        // within one pass would never register
        let mut busy = working(&host.state);
        match rx.recv_timeout(opts.poll_interval) {
            Ok(c) => {
                host.complete(c)?;
                while let Ok(c) = rx.try_recv() {
                    host.complete(c)?;
                }
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => unreachable!("supervisor holds a sender"),
        }
        busy |= working(&host.state);
        if busy {
            idle_since = Instant::now();
        } else if opts.idle_exit.is_some_and(|t| idle_since.elapsed() >= t) {
            break;
        }
    }
    host.state.stopped = true;
    host.event(HostEvent::Stop)?;
    host.write_status()?;
    Ok(HostSummary {
        executions: host.executions,
        completed: host.state.completed.len(),
        blocked: host.state.blocked.map(|b| b.0),
        quarantined: host.state.quarantined,
    })
}
