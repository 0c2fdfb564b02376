//! Client end: file writes into `dir1`, file reads from `dir3`, nothing else.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use super::{
    blocked_path, id_from_file_name, io_err, job_file_name, result_path, BrokerError, JobId, ResultRecord,
    SessionLayout,
};
use crate::kv::write_atomic;

use super::JobRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct SubmitAck {
    pub job_ids: Vec<JobId>,
}

/// Writes one request file per job. Every job is validated and checked for
/// duplicate ids before the first file is written.
pub fn client_submit(jobs: &[JobRecord], dir1: &Path) -> Result<SubmitAck, BrokerError> {
    let mut seen = BTreeSet::new();
    for j in jobs {
        j.validate()?;
        if !seen.insert(j.job_id) || dir1.join(job_file_name(j.job_id)).exists() {
            return Err(BrokerError::DuplicateJob(j.job_id));
        }
    }
    let mut ordered: Vec<&JobRecord> = jobs.iter().collect();
    ordered.sort_by_key(|j| j.job_id);
    for j in &ordered {
        let path = dir1.join(job_file_name(j.job_id));
        write_atomic(&path, j.to_kv().to_text().as_bytes()).map_err(io_err(&path))?;
    }
    Ok(SubmitAck {
        job_ids: ordered.iter().map(|j| j.job_id).collect(),
    })
}

/// One past the largest id present anywhere in the session.
pub fn next_job_id(layout: &SessionLayout) -> Result<JobId, BrokerError> {
    let mut max = 0;
    for (dir, prefixes) in [
        (layout.dir1(), &["job_"][..]),
        (layout.dir3(), &["result_", "blocked_"][..]),
        (layout.quarantine(), &["job_"][..]),
    ] {
        if !dir.exists() {
            continue;
        }
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let name = entry.map_err(io_err(&dir))?.file_name();
            let name = name.to_string_lossy();
            for p in prefixes {
                if let Some(id) = id_from_file_name(&name, p) {
                    max = max.max(id.0);
                }
            }
        }
    }
    Ok(JobId(max + 1))
}

/// Polls `dir3` until every id has a result, returning records in `ids`
/// order. If the host has halted on one of the jobs the call returns early
/// with that job's `blocked` record plus whatever results already exist, so
/// the list is shorter than `ids`. On timeout the error carries the results found so far
/// and the missing ids.
pub fn client_await(
    ids: &[JobId],
    dir3: &Path,
    poll_interval: Duration,
    timeout: Option<Duration>,
) -> Result<Vec<ResultRecord>, BrokerError> {
    let start = Instant::now();
    let mut found: Vec<Option<ResultRecord>> = vec![None; ids.len()];
    loop {
        for (slot, &id) in found.iter_mut().zip(ids) {
            if slot.is_some() {
                continue;
            }
            let ok = result_path(dir3, id);
            if ok.exists() {
                *slot = Some(ResultRecord::read(&ok)?);
                continue;
            }
            let blocked = blocked_path(dir3, id);
            if blocked.exists() {
                // the host may resume and replace it; report it without caching
                match ResultRecord::read(&blocked) {
                    Ok(r) => return finish_blocked(ids, dir3, found, id, r),
                    Err(BrokerError::Io { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
        }
        if found.iter().all(Option::is_some) {
            return Ok(found.into_iter().flatten().collect());
        }
        if let Some(t) = timeout {
            if start.elapsed() >= t {
                let missing = ids
                    .iter()
                    .zip(&found)
                    .filter(|(_, r)| r.is_none())
                    .map(|(id, _)| *id)
                    .collect();
                return Err(BrokerError::Timeout {
                    completed: found.into_iter().flatten().collect(),
                    missing,
                });
            }
        }
        thread::sleep(poll_interval);
    }
}

/// Returns as soon as a job is blocked: results present so far, the blocked
/// record, and nothing for jobs that cannot run while the host is halted.
fn finish_blocked(
    ids: &[JobId],
    dir3: &Path,
    mut found: Vec<Option<ResultRecord>>,
    blocked_id: JobId,
    blocked: ResultRecord,
) -> Result<Vec<ResultRecord>, BrokerError> {
    for (slot, &id) in found.iter_mut().zip(ids) {
        if id == blocked_id {
            *slot = Some(blocked.clone());
        } else if slot.is_none() {
            let ok = result_path(dir3, id);
            if ok.exists() {
                *slot = Some(ResultRecord::read(&ok)?);
            }
        }
    }
    Ok(found.into_iter().flatten().collect())
}
