//! Circuit execution: a dense statevector simulator with optional
//! depolarizing gate noise and readout flips, sampled shot by shot.

pub mod statevector;

use std::collections::BTreeMap;
use std::marker::PhantomData;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError};
use crate::pauli::{Counts, Pauli, PauliHamiltonian};
use crate::scalar::Real;

pub use statevector::StateVector;

/// Dense simulation bound.
pub const MAX_SIM_QUBITS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("{0} qubits exceeds the simulator limit of {MAX_SIM_QUBITS}")]
    TooManyQubits(usize),
    #[error("invalid circuit: {0}")]
    InvalidCircuit(#[from] CircuitError),
    #[error("shot count must be at least 1")]
    NoShots,
    #[error("exact expectation needs a measurement-free circuit")]
    HasMeasurements,
    #[error("Hamiltonian acts on {found} qubits, circuit has {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("backend failure: {0}")]
    Failed(String),
}

/// Depolarizing noise per gate and symmetric readout flips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub p1: f64,
    pub p2: f64,
    pub p_spam: f64,
}

impl NoiseModel {
    pub fn new(p1: f64, p2: f64, p_spam: f64) -> Result<Self, BackendError> {
        for (name, p) in [("p1", p1), ("p2", p2), ("p_spam", p_spam)] {
            if !(0.0..1.0).contains(&p) {
                return Err(BackendError::InvalidNoise(format!("{name}={p} not in [0, 1)")));
            }
        }
        Ok(Self { p1, p2, p_spam })
    }

    /// Error rates of the trapped-ion device: 99.7% single-qubit fidelity,
    /// two-qubit fidelity between 99.3% and 98.9% (midpoint), 0.27% SPAM.
    pub fn trapped_ion() -> Self {
        Self {
            p1: 0.003,
            p2: 0.009,
            p_spam: 0.0027,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.p1 == 0.0 && self.p2 == 0.0 && self.p_spam == 0.0
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::trapped_ion()
    }
}

/// Sampled outcome counts over the classical register.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Histogram {
    pub counts: Counts,
    pub shots: u64,
}

impl Histogram {
    pub fn from_counts(counts: Counts) -> Self {
        let shots = counts.values().sum();
        Self { counts, shots }
    }

    pub fn frequencies(&self) -> BTreeMap<String, f64> {
        self.counts
            .iter()
            .map(|(k, v)| (k.clone(), *v as f64 / self.shots as f64))
            .collect()
    }
}

/// Anything that turns a circuit into a histogram.
pub trait Backend: Send + Sync {
    fn run(&self, circuit: &Circuit, shots: u64, seed: u64) -> Result<Histogram, BackendError>;
}

/// Backend selector string: `sim`, `sim-noisy` or `broker:<dir>`.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendKind {
    Sim,
    SimNoisy,
    Broker(std::path::PathBuf),
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sim" => Ok(Self::Sim),
            "sim-noisy" => Ok(Self::SimNoisy),
            other => match other.strip_prefix("broker:") {
                Some(dir) if !dir.is_empty() => Ok(Self::Broker(dir.into())),
                _ => Err(format!("unknown backend {other:?}; expected sim, sim-noisy or broker:<dir>")),
            },
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Sim => write!(f, "sim"),
            Self::SimNoisy => write!(f, "sim-noisy"),
            Self::Broker(dir) => write!(f, "broker:{}", dir.display()),
        }
    }
}

fn check_size(circuit: &Circuit) -> Result<(), BackendError> {
    if circuit.n_qubits > MAX_SIM_QUBITS {
        return Err(BackendError::TooManyQubits(circuit.n_qubits));
    }
    circuit.validate()?;
    Ok(())
}

/// Final state of the gate list applied to `|0…0⟩`.
pub fn simulate<T: Real>(circuit: &Circuit) -> Result<StateVector<T>, BackendError> {
    check_size(circuit)?;
    let mut state = StateVector::zero(circuit.n_qubits);
    for gate in &circuit.gates {
        state.apply(gate);
    }
    Ok(state)
}

fn clbit_key(index: usize, circuit: &Circuit) -> Vec<u8> {
    let mut bits = vec![b'0'; circuit.n_clbits];
    for &(q, c) in &circuit.measurements {
        bits[c] = if index >> q & 1 == 1 { b'1' } else { b'0' };
    }
    bits
}

/// Noiseless outcome distribution over the classical register.
pub fn exact_distribution(circuit: &Circuit) -> Result<BTreeMap<String, f64>, BackendError> {
    let state = simulate::<f64>(circuit)?;
    let mut dist = BTreeMap::new();
    for (i, p) in state.probabilities().into_iter().enumerate() {
        if p > 0.0 {
            let key = String::from_utf8(clbit_key(i, circuit)).expect("ascii bits");
            *dist.entry(key).or_insert(0.0) += p;
        }
    }
    Ok(dist)
}

/// `⟨ψ(c)|H|ψ(c)⟩` by dense linear algebra.
pub fn exact_expectation<T: Real>(
    circuit: &Circuit,
    h: &PauliHamiltonian<T>,
) -> Result<T, BackendError> {
    if !circuit.measurements.is_empty() {
        return Err(BackendError::HasMeasurements);
    }
    if h.n_qubits() != circuit.n_qubits {
        return Err(BackendError::SizeMismatch {
            expected: circuit.n_qubits,
            found: h.n_qubits(),
        });
    }
    let state = simulate::<T>(circuit)?;
    Ok(h.terms()
        .iter()
        .fold(h.identity_offset(), |acc, (coeff, p)| acc + *coeff * state.expect_pauli(p)))
}

/// Statevector sampler. With a noise model each shot follows its own
/// trajectory: after every gate a uniformly random non-identity Pauli hits the
/// gate's qubits with probability `p1` or `p2`, and each measured bit flips
/// with probability `p_spam`.
#[derive(Debug, Clone, Default)]
pub struct StatevectorBackend<T: Real = f64> {
    noise: Option<NoiseModel>,
    _scalar: PhantomData<T>,
}

impl<T: Real> StatevectorBackend<T> {
    pub fn noiseless() -> Self {
        Self {
            noise: None,
            _scalar: PhantomData,
        }
    }

    pub fn noisy(noise: NoiseModel) -> Self {
        Self {
            noise: Some(noise),
            _scalar: PhantomData,
        }
    }

    pub fn noise(&self) -> Option<&NoiseModel> {
        self.noise.as_ref()
    }
}

const PAULIS: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

struct Sampler {
    cumulative: Vec<f64>,
}

impl Sampler {
    fn new<T: Real>(probs: &[T]) -> Self {
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p.as_f64();
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty distribution");
        let u = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

impl<T: Real> Backend for StatevectorBackend<T> {
    fn run(&self, circuit: &Circuit, shots: u64, seed: u64) -> Result<Histogram, BackendError> {
        if shots == 0 {
            return Err(BackendError::NoShots);
        }
        check_size(circuit)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ideal = Sampler::new(&simulate::<T>(circuit)?.probabilities());
        let noise = self.noise.filter(|n| !n.is_noiseless());

        let mut counts = Counts::new();
        let mut events: Vec<(usize, Vec<(usize, Pauli)>)> = Vec::new();
        for _ in 0..shots {
            let index = match noise {
                None => ideal.draw(&mut rng),
                Some(noise) => {
                    events.clear();
                    for (i, gate) in circuit.gates.iter().enumerate() {
                        let qs = gate.qubits();
                        let p = if qs.len() == 2 { noise.p2 } else { noise.p1 };
                        if p > 0.0 && rng.gen::<f64>() < p {
                            let paulis = 4usize.pow(qs.len() as u32);
                            let pick = rng.gen_range(1..paulis);
                            let err = qs
                                .iter()
                                .enumerate()
                                .map(|(k, &q)| (q, PAULIS[pick >> (2 * k) & 3]))
                                .collect();
                            events.push((i, err));
                        }
                    }
                    if events.is_empty() {
                        ideal.draw(&mut rng)
                    } else {
                        let state = trajectory::<T>(circuit, &events);
                        Sampler::new(&state.probabilities()).draw(&mut rng)
                    }
                }
            };
            let mut key = clbit_key(index, circuit);
            if let Some(noise) = noise {
                if noise.p_spam > 0.0 {
                    let mut measured = vec![false; circuit.n_clbits];
                    for &(_, c) in &circuit.measurements {
                        measured[c] = true;
                    }
                    for (c, bit) in key.iter_mut().enumerate() {
                        if measured[c] && rng.gen::<f64>() < noise.p_spam {
                            *bit = if *bit == b'0' { b'1' } else { b'0' };
                        }
                    }
                }
            }
            *counts
                .entry(String::from_utf8(key).expect("ascii bits"))
                .or_insert(0) += 1;
        }
        Ok(Histogram { counts, shots })
    }
}

fn trajectory<T: Real>(circuit: &Circuit, events: &[(usize, Vec<(usize, Pauli)>)]) -> StateVector<T> {
    let mut state = StateVector::zero(circuit.n_qubits);
    let mut next = events.iter().peekable();
    for (i, gate) in circuit.gates.iter().enumerate() {
        state.apply(gate);
        while let Some((_, err)) = next.next_if(|(at, _)| *at == i) {
            for &(q, p) in err {
                state.apply_pauli(q, p);
            }
        }
    }
    state
}
