//! VQE driver: per-evaluation measurement circuits, execution through a
//! backend or the broker, energy assembly and CSV output.
//!
//! For every energy evaluation and every measurement group the driver
//! builds ansatz, basis pre-rotations (`h` for X, `sdg; h` for Y) and a full
//! measurement, lowers it to native gates and executes it with a seed
//! derived from `(run seed, evaluation index, group index)`. Because seeds
//! do not depend on the execution path, a run through the broker reproduces
//! a direct run bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::ansatz::{AnsatzError, AnsatzSpec, ParamPoint};
use crate::backend::{exact_distribution, exact_expectation, Backend, BackendError, Histogram};
use crate::broker::{
    client_await, client_submit, next_job_id, BrokerError, JobId, JobRecord, JobStatus, SessionLayout,
    DEFAULT_POLL_INTERVAL,
};
use crate::circuit::{Circuit, Gate};
use crate::kv::fmt_float;
use crate::pauli::{energy_from_counts, group_qubitwise_commuting, MeasurementGroup, Pauli, PauliError, PauliHamiltonian};
use crate::qasm::serialize_qasm;
use crate::spsa::{run_observed, EvalRecord, SpsaAbort, SpsaConfig, SpsaTrace};
use crate::transpile::{transpile, NativeCircuit, TranspileError};

/// Unique circuits issued by a batch of runs:
/// `bases · inits · (2·calibration_pairs + 2·iterations)`.
pub fn circuit_count(bases: u64, calibration_pairs: u64, iterations: u64, inits: u64) -> u64 {
    bases * inits * (2 * calibration_pairs + 2 * iterations)
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error("job {0} is blocked by the return criteria; run `resume` on the host session")]
    Blocked(JobId),
    #[error(transparent)]
    Circuit(#[from] VqeCircuitError),
}

#[derive(Debug, Error)]
pub enum VqeCircuitError {
    #[error(transparent)]
    Ansatz(#[from] AnsatzError),
    #[error(transparent)]
    Transpile(#[from] TranspileError),
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// splitmix64 finalizer over the three indices.
pub fn circuit_seed(run_seed: u64, eval_index: usize, group_index: usize) -> u64 {
    let mut z = run_seed
        ^ (eval_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (group_index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Appends basis changes for `basis` and measures every qubit.
pub fn measurement_circuit(state_prep: &Circuit, basis: &[Pauli]) -> Circuit {
    let mut c = Circuit::new(state_prep.n_qubits, state_prep.n_qubits);
    c.gates = state_prep.gates.clone();
    for (q, p) in basis.iter().enumerate() {
        match p {
            Pauli::X => {
                c.push(Gate::H(q));
            }
            Pauli::Y => {
                c.push(Gate::Sdg(q)).push(Gate::H(q));
            }
            Pauli::Z | Pauli::I => {}
        }
    }
    c.measure_all();
    c
}

/// One group's circuit for one evaluation.
#[derive(Debug, Clone)]
pub struct GroupCircuit {
    pub group_index: usize,
    pub label: String,
    pub circuit: NativeCircuit,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct VqeProblem {
    pub hamiltonian: PauliHamiltonian<f64>,
    pub groups: Vec<MeasurementGroup>,
    pub ansatz: AnsatzSpec,
    pub shots: u64,
    pub seed: u64,
}

impl VqeProblem {
    pub fn new(hamiltonian: PauliHamiltonian<f64>, ansatz: AnsatzSpec, shots: u64, seed: u64) -> Result<Self, VqeError> {
        if hamiltonian.n_qubits() != ansatz.n_qubits {
            return Err(VqeError::Setup(format!(
                "hamiltonian has {} qubits, ansatz has {}",
                hamiltonian.n_qubits(),
                ansatz.n_qubits
            )));
        }
        if shots == 0 {
            return Err(VqeError::Setup("shots must be at least 1".into()));
        }
        let groups = group_qubitwise_commuting(&hamiltonian);
        Ok(Self {
            hamiltonian,
            groups,
            ansatz,
            shots,
            seed,
        })
    }

    pub fn group_circuits(&self, theta: &[f64], eval_index: usize) -> Result<Vec<GroupCircuit>, VqeCircuitError> {
        let prep = self.ansatz.build_from_angles(theta)?;
        self.groups
            .iter()
            .enumerate()
            .map(|(i, g)| {
                Ok(GroupCircuit {
                    group_index: i,
                    label: g.label(),
                    circuit: transpile(&measurement_circuit(&prep, &g.basis))?,
                    seed: circuit_seed(self.seed, eval_index, i),
                })
            })
            .collect()
    }

    pub fn energy(&self, histograms: &[Histogram]) -> Result<f64, VqeCircuitError> {
        let counts: Vec<_> = histograms.iter().map(|h| h.counts.clone()).collect();
        Ok(energy_from_counts(&self.hamiltonian, &self.groups, &counts)?)
    }

    /// Noiseless expectation of the ansatz state.
    pub fn exact_energy(&self, theta: &[f64]) -> Result<f64, VqeCircuitError> {
        let prep = self.ansatz.build_from_angles(theta)?;
        Ok(exact_expectation(&prep, &self.hamiltonian)?)
    }
}

/// Runs one evaluation's group circuits, returning histograms in group order.
pub trait CircuitExecutor {
    fn execute(&mut self, eval_index: usize, batch: &[GroupCircuit], shots: u64) -> Result<Vec<Histogram>, ExecError>;
}

pub struct DirectExecutor {
    backend: Arc<dyn Backend>,
}

impl DirectExecutor {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self { backend }
    }
}

impl CircuitExecutor for DirectExecutor {
    fn execute(&mut self, _eval_index: usize, batch: &[GroupCircuit], shots: u64) -> Result<Vec<Histogram>, ExecError> {
        batch
            .iter()
            .map(|g| Ok(self.backend.run(&g.circuit, shots, g.seed)?))
            .collect()
    }
}

/// Submits each evaluation's circuits to a broker session and waits for them.
pub struct BrokerExecutor {
    layout: SessionLayout,
    run_id: String,
    next_id: Option<JobId>,
    pub poll_interval: Duration,
    pub timeout: Option<Duration>,
    /// Attach noiseless expected distributions for the host's return check.
    pub send_expected: bool,
}

impl BrokerExecutor {
    pub fn new(session: impl Into<PathBuf>, run_id: impl Into<String>) -> Self {
        Self {
            layout: SessionLayout::new(session),
            run_id: run_id.into(),
            next_id: None,
            poll_interval: DEFAULT_POLL_INTERVAL,
            timeout: None,
            send_expected: true,
        }
    }
}

impl CircuitExecutor for BrokerExecutor {
    fn execute(&mut self, eval_index: usize, batch: &[GroupCircuit], shots: u64) -> Result<Vec<Histogram>, ExecError> {
        let mut id = match self.next_id {
            Some(id) => id,
            None => {
                self.layout.create()?;
                next_job_id(&self.layout)?
            }
        };
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        let mut jobs = Vec::with_capacity(batch.len());
        for g in batch {
            let mut job = JobRecord::new(id, serialize_qasm(&g.circuit), shots);
            job.created_at = now;
            job.metadata = BTreeMap::from([
                ("run_id".to_string(), self.run_id.clone()),
                ("eval_index".to_string(), eval_index.to_string()),
                ("group".to_string(), g.label.clone()),
                ("seed".to_string(), g.seed.to_string()),
            ]);
            if self.send_expected {
                job.expected_distribution = Some(normalized(exact_distribution(&g.circuit).map_err(VqeCircuitError::from)?));
            }
            jobs.push(job);
            id = JobId(id.0 + 1);
        }
        let ack = client_submit(&jobs, &self.layout.dir1())?;
        self.next_id = Some(id);
        let results = client_await(&ack.job_ids, &self.layout.dir3(), self.poll_interval, self.timeout)?;
        if let Some(r) = results.iter().find(|r| r.status != JobStatus::Ok) {
            return Err(ExecError::Blocked(r.job_id));
        }
        Ok(results.iter().map(|r| r.histogram()).collect())
    }
}

/// Drops zero entries and rescales so the probabilities sum to one.
fn normalized(mut dist: BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    dist.retain(|_, p| *p > 0.0);
    let total: f64 = dist.values().sum();
    for p in dist.values_mut() {
        *p /= total;
    }
    dist
}

#[derive(Debug, Error)]
pub enum VqeError {
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Circuit(#[from] VqeCircuitError),
    #[error("{error}")]
    Aborted {
        #[source]
        error: ExecError,
        partial: Box<SpsaTrace<f64>>,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct VqeRun {
    pub trace: SpsaTrace<f64>,
    pub final_point: ParamPoint<f64>,
    /// Noiseless energy at the final point.
    pub final_energy: f64,
    pub circuits_issued: usize,
}

/// Calibrates and runs SPSA from `init`; `observer` sees each evaluation.
pub fn run_vqe<X: CircuitExecutor + ?Sized>(
    problem: &VqeProblem,
    init: &ParamPoint<f64>,
    spsa: &SpsaConfig<f64>,
    executor: &mut X,
    observer: impl FnMut(&EvalRecord<f64>),
) -> Result<VqeRun, VqeError> {
    if init.len() != problem.ansatz.param_count() {
        return Err(VqeError::Setup(format!(
            "initial point has {} values, ansatz needs {}",
            init.len(),
            problem.ansatz.param_count()
        )));
    }
    let mut eval_index = 0;
    let mut circuits = 0;
    let evaluate = |theta: &[f64]| -> Result<f64, ExecError> {
        let batch = problem.group_circuits(theta, eval_index)?;
        let hists = executor.execute(eval_index, &batch, problem.shots)?;
        eval_index += 1;
        circuits += batch.len();
        Ok(problem.energy(&hists)?)
    };
    let trace = run_observed(init, evaluate, spsa, observer).map_err(|SpsaAbort { error, partial }| match error {
        crate::spsa::SpsaError::Config(msg) => VqeError::Setup(msg),
        crate::spsa::SpsaError::Evaluator { source, .. } => VqeError::Aborted {
            error: source,
            partial: Box::new(partial),
        },
    })?;
    let final_point = trace.final_point.clone().expect("complete run has a final point");
    let final_energy = problem.exact_energy(&final_point.values)?;
    Ok(VqeRun {
        trace,
        final_point,
        final_energy,
        circuits_issued: circuits,
    })
}

/// Convergence CSV: `eval_index,energy_hartree,theta_0..theta_{k-1},wallclock_ms`,
/// flushed after every row so an interrupted run leaves a valid prefix.
pub struct ConvergenceCsv {
    out: csv::Writer<File>,
    path: PathBuf,
    start: Instant,
    record_wallclock: bool,
}

fn csv_err(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

fn theta_header(first: &str, n_params: usize) -> Vec<String> {
    let mut header = vec![first.to_string()];
    header.extend((0..n_params).map(|i| format!("theta_{i}")));
    header
}

impl ConvergenceCsv {
    pub fn create(path: &Path, n_params: usize, record_wallclock: bool) -> io::Result<Self> {
        let mut out = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = theta_header("eval_index", n_params);
        header.insert(1, "energy_hartree".into());
        header.push("wallclock_ms".into());
        out.write_record(&header).map_err(csv_err)?;
        out.flush()?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
            start: Instant::now(),
            record_wallclock,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, r: &EvalRecord<f64>) -> io::Result<()> {
        let wall = if self.record_wallclock {
            self.start.elapsed().as_millis() as u64
        } else {
            0
        };
        let mut row = vec![r.index.to_string(), fmt_float(r.energy)];
        row.extend(r.theta.iter().map(|t| fmt_float(*t)));
        row.push(wall.to_string());
        self.out.write_record(&row).map_err(csv_err)?;
        self.out.flush()
    }
}

/// Iterate CSV: `iteration,theta_0..theta_{k-1}` from the start of every
/// SPSA iteration, followed by the final averaged point as `final`.
pub fn write_angles_csv(path: &Path, trace: &SpsaTrace<f64>, n_params: usize) -> io::Result<()> {
    let mut out = csv::Writer::from_path(path).map_err(csv_err)?;
    out.write_record(theta_header("iteration", n_params)).map_err(csv_err)?;
    let rows = trace
        .iterates
        .iter()
        .enumerate()
        .map(|(j, t)| (j.to_string(), t))
        .chain(trace.final_point.iter().map(|f| ("final".to_string(), &f.values)));
    for (label, theta) in rows {
        let mut row = vec![label];
        row.extend(theta.iter().map(|t| fmt_float(*t)));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()
}
