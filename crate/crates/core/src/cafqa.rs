//! Discrete search over Clifford grid points `{0,1,2,3}^k` (angle `k·π/2`)
//! of the ansatz, scored exactly with the stabilizer simulator.
//!
//! The all-zero point is always evaluated first, so the result is never worse
//! than the occupation-state energy. Energies are memoized; only distinct
//! points count against the budget. Ties go to the lexicographically smaller
//! index vector.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ansatz::{AnsatzError, AnsatzSpec, ParamPoint};
use crate::kv::{fmt_float, KvDoc};
use crate::pauli::PauliHamiltonian;
use crate::scalar::Real;
use crate::stabilizer::{clifford_energy, StabilizerError, StabilizerTableau};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CafqaError {
    #[error("Hamiltonian has {hamiltonian} qubits, ansatz has {ansatz}")]
    DimensionMismatch { hamiltonian: usize, ansatz: usize },
    #[error("ansatz has no parameters to search")]
    NoParameters,
    #[error("evaluation budget must be at least 1")]
    ZeroBudget,
    #[error(transparent)]
    Ansatz(#[from] AnsatzError),
    #[error(transparent)]
    Stabilizer(#[from] StabilizerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Exhaustive,
    MultistartHillclimb,
    Random,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exhaustive" => Ok(Self::Exhaustive),
            "multistart_hillclimb" => Ok(Self::MultistartHillclimb),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown search strategy {other:?}")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exhaustive => "exhaustive",
            Self::MultistartHillclimb => "multistart_hillclimb",
            Self::Random => "random",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    pub max_evaluations: usize,
    pub seed: u64,
    pub strategy: Strategy,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            max_evaluations: 1000,
            seed: 0,
            strategy: Strategy::MultistartHillclimb,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult<T: Real> {
    pub best_point: Vec<u8>,
    pub best_energy: T,
    pub evaluations_used: usize,
    /// `(evaluation index, best energy so far)` after every evaluation.
    pub trace: Vec<(usize, T)>,
}

/// Continuous starting point `index·π/2` for the optimizer.
pub fn to_vqe_init<T: Real>(r: &SearchResult<T>) -> ParamPoint<T> {
    ParamPoint::from_grid(&r.best_point)
}

/// Budgeted, memoized objective over grid points.
pub struct GridObjective<'a, T: Real> {
    spec: &'a AnsatzSpec,
    h: &'a PauliHamiltonian<T>,
    cache: HashMap<Vec<u8>, T>,
    max_evaluations: usize,
    best: Option<(T, Vec<u8>)>,
    trace: Vec<(usize, T)>,
}

fn better<T: Real>(a: (T, &[u8]), b: (T, &[u8])) -> bool {
    match a.0.partial_cmp(&b.0) {
        Some(Ordering::Less) => true,
        Some(Ordering::Equal) => a.1 < b.1,
        _ => false,
    }
}

impl<'a, T: Real> GridObjective<'a, T> {
    fn new(spec: &'a AnsatzSpec, h: &'a PauliHamiltonian<T>, max_evaluations: usize) -> Self {
        Self {
            spec,
            h,
            cache: HashMap::new(),
            max_evaluations,
            best: None,
            trace: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.spec.param_count()
    }

    pub fn used(&self) -> usize {
        self.cache.len()
    }

    pub fn exhausted(&self) -> bool {
        self.cache.len() >= self.max_evaluations
    }

    pub fn is_cached(&self, point: &[u8]) -> bool {
        self.cache.contains_key(point)
    }

    /// Energy at a grid point, or `None` once the budget is spent and the
    /// point has not been seen.
    pub fn evaluate(&mut self, point: &[u8]) -> Result<Option<T>, CafqaError> {
        if let Some(&e) = self.cache.get(point) {
            return Ok(Some(e));
        }
        if self.exhausted() {
            return Ok(None);
        }
        let energy = grid_energy(self.spec, self.h, point)?;
        self.cache.insert(point.to_vec(), energy);
        let replace = match &self.best {
            None => true,
            Some((e, p)) => better((energy, point), (*e, p)),
        };
        if replace {
            self.best = Some((energy, point.to_vec()));
        }
        let best = self.best.as_ref().expect("set above").0;
        self.trace.push((self.cache.len() - 1, best));
        Ok(Some(energy))
    }
}

/// Exact stabilizer energy of the ansatz at a grid point.
pub fn grid_energy<T: Real>(
    spec: &AnsatzSpec,
    h: &PauliHamiltonian<T>,
    point: &[u8],
) -> Result<T, CafqaError> {
    let circuit = spec.build_circuit(&ParamPoint::<f64>::from_grid(point))?;
    let mut t = StabilizerTableau::new_zero_state(spec.n_qubits)?;
    t.apply_circuit(&circuit)?;
    Ok(clifford_energy(&mut t, h)?)
}

/// A way of spending the remaining budget after the all-zero point.
pub trait SearchStrategy<T: Real> {
    fn explore(&self, objective: &mut GridObjective<'_, T>, rng: &mut ChaCha8Rng) -> Result<(), CafqaError>;
}

/// Lexicographic enumeration from the all-zero point.
pub struct Exhaustive;

impl<T: Real> SearchStrategy<T> for Exhaustive {
    fn explore(&self, objective: &mut GridObjective<'_, T>, _rng: &mut ChaCha8Rng) -> Result<(), CafqaError> {
        let k = objective.dimension();
        let mut point = vec![0u8; k];
        loop {
            if objective.evaluate(&point)?.is_none() {
                return Ok(());
            }
            // increment base-4 counter, last coordinate fastest
            let mut i = k;
            loop {
                if i == 0 {
                    return Ok(());
                }
                i -= 1;
                point[i] += 1;
                if point[i] < 4 {
                    break;
                }
                point[i] = 0;
            }
        }
    }
}

/// Consecutive restarts that land only on cached points before giving up.
const STALL_LIMIT: usize = 10_000;

fn space_size(k: usize) -> Option<usize> {
    4usize.checked_pow(k as u32)
}

fn random_point(k: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    (0..k).map(|_| rng.gen_range(0..4u8)).collect()
}

/// Steepest descent over single-coordinate ±1 moves, restarted from random
/// grid points until the budget runs out.
pub struct MultistartHillclimb;

impl MultistartHillclimb {
    /// Climbs from `start`; returns `false` when the budget ran out.
    fn climb<T: Real>(objective: &mut GridObjective<'_, T>, start: Vec<u8>) -> Result<bool, CafqaError> {
        let Some(mut energy) = objective.evaluate(&start)? else {
            return Ok(false);
        };
        let mut current = start;
        loop {
            let mut best: Option<(T, Vec<u8>)> = None;
            for i in 0..current.len() {
                for step in [1u8, 3] {
                    let mut n = current.clone();
                    n[i] = (n[i] + step) % 4;
                    let Some(e) = objective.evaluate(&n)? else {
                        return Ok(false);
                    };
                    let take = match &best {
                        None => true,
                        Some((be, bp)) => better((e, &n), (*be, bp)),
                    };
                    if take {
                        best = Some((e, n));
                    }
                }
            }
            match best {
                Some((e, n)) if e < energy => {
                    energy = e;
                    current = n;
                }
                _ => return Ok(true),
            }
        }
    }
}

impl<T: Real> SearchStrategy<T> for MultistartHillclimb {
    fn explore(&self, objective: &mut GridObjective<'_, T>, rng: &mut ChaCha8Rng) -> Result<(), CafqaError> {
        let k = objective.dimension();
        let total = space_size(k);
        let mut start = vec![0u8; k];
        let mut stalled = 0;
        loop {
            let before = objective.used();
            if !Self::climb(objective, start)? {
                return Ok(());
            }
            if total.is_some_and(|t| objective.used() >= t) {
                return Ok(());
            }
            stalled = if objective.used() == before { stalled + 1 } else { 0 };
            if stalled >= STALL_LIMIT {
                return Ok(());
            }
            start = random_point(k, rng);
        }
    }
}

/// Uniform random sampling of grid points.
pub struct RandomSearch;

impl<T: Real> SearchStrategy<T> for RandomSearch {
    fn explore(&self, objective: &mut GridObjective<'_, T>, rng: &mut ChaCha8Rng) -> Result<(), CafqaError> {
        let k = objective.dimension();
        let total = space_size(k);
        let mut stalled = 0;
        while !objective.exhausted() && stalled < STALL_LIMIT {
            if total.is_some_and(|t| objective.used() >= t) {
                break;
            }
            let p = random_point(k, rng);
            stalled = if objective.is_cached(&p) { stalled + 1 } else { 0 };
            objective.evaluate(&p)?;
        }
        Ok(())
    }
}

/// Runs the search with one of the built-in strategies.
pub fn cafqa_search<T: Real>(
    spec: &AnsatzSpec,
    h: &PauliHamiltonian<T>,
    budget: &SearchBudget,
) -> Result<SearchResult<T>, CafqaError> {
    match budget.strategy {
        Strategy::Exhaustive => cafqa_search_with(spec, h, budget, &Exhaustive),
        Strategy::MultistartHillclimb => cafqa_search_with(spec, h, budget, &MultistartHillclimb),
        Strategy::Random => cafqa_search_with(spec, h, budget, &RandomSearch),
    }
}

pub fn cafqa_search_with<T: Real, S: SearchStrategy<T>>(
    spec: &AnsatzSpec,
    h: &PauliHamiltonian<T>,
    budget: &SearchBudget,
    strategy: &S,
) -> Result<SearchResult<T>, CafqaError> {
    if h.n_qubits() != spec.n_qubits {
        return Err(CafqaError::DimensionMismatch {
            hamiltonian: h.n_qubits(),
            ansatz: spec.n_qubits,
        });
    }
    if spec.param_count() == 0 {
        return Err(CafqaError::NoParameters);
    }
    if budget.max_evaluations == 0 {
        return Err(CafqaError::ZeroBudget);
    }
    let mut objective = GridObjective::new(spec, h, budget.max_evaluations);
    objective.evaluate(&vec![0u8; spec.param_count()])?;
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    strategy.explore(&mut objective, &mut rng)?;
    let (best_energy, best_point) = objective.best.expect("hf point evaluated");
    Ok(SearchResult {
        best_point,
        best_energy,
        evaluations_used: objective.cache.len(),
        trace: objective.trace,
    })
}

/// Report of a search in the key-value format: budget, best point and
/// energy, and the best-so-far trace.
pub fn search_report<T: Real>(r: &SearchResult<T>, budget: &SearchBudget) -> KvDoc {
    let mut d = KvDoc::new();
    d.set("budget", budget.max_evaluations)
        .set("strategy", budget.strategy)
        .set("seed", budget.seed)
        .set("evaluations_used", r.evaluations_used)
        .set("best_energy", fmt_float(r.best_energy.as_f64()))
        .set(
            "best_point",
            r.best_point.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
        );
    for (i, e) in &r.trace {
        d.set(&format!("trace.{i}"), fmt_float(e.as_f64()));
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Axis;
    use crate::pauli::parse_hamiltonian;
    use std::f64::consts::FRAC_PI_2;

    fn one_qubit_ry() -> AnsatzSpec {
        AnsatzSpec::new(1, 0, 1).unwrap().with_axes(vec![Axis::Y]).unwrap()
    }

    fn budget(max: usize, strategy: Strategy) -> SearchBudget {
        SearchBudget {
            max_evaluations: max,
            seed: 5,
            strategy,
        }
    }

    #[test]
    fn z_ground_state_is_zero_index() {
        let h = parse_hamiltonian::<f64>("1\n-1 Z\n").unwrap();
        let r = cafqa_search(&one_qubit_ry(), &h, &budget(16, Strategy::Exhaustive)).unwrap();
        assert_eq!(r.best_point, vec![0]);
        assert_eq!(r.best_energy, -1.0);
        assert_eq!(r.evaluations_used, 4);
    }

    #[test]
    fn x_ground_state_is_quarter_turn() {
        // Enumeration oracle: Ry(kπ/2)|0> gives <X> = sin(kπ/2) = 0, 1, 0, -1.
        let oracle: Vec<f64> = (0..4).map(|k| -((k as f64) * FRAC_PI_2).sin()).collect();
        let h = parse_hamiltonian::<f64>("1\n-1 X\n").unwrap();
        for k in 0..4u8 {
            let e = grid_energy(&one_qubit_ry(), &h, &[k]).unwrap();
            assert!((e - oracle[k as usize]).abs() < 1e-12);
        }
        let r = cafqa_search(&one_qubit_ry(), &h, &budget(16, Strategy::Exhaustive)).unwrap();
        assert_eq!(r.best_point, vec![1]);
        assert_eq!(r.best_energy, -1.0);
    }

    #[test]
    fn budget_one_returns_hf() {
        let h = parse_hamiltonian::<f64>("2\n-1 XX\n0.5 ZI\n").unwrap();
        let spec = AnsatzSpec::new(2, 1, 2).unwrap();
        for strategy in [Strategy::Exhaustive, Strategy::MultistartHillclimb, Strategy::Random] {
            let r = cafqa_search(&spec, &h, &budget(1, strategy)).unwrap();
            assert_eq!(r.best_point, vec![0; spec.param_count()]);
            assert_eq!(r.evaluations_used, 1);
            assert_eq!(r.best_energy, grid_energy(&spec, &h, &r.best_point).unwrap());
        }
    }

    #[test]
    fn ties_pick_smallest_index() {
        // energy depends only on the first parameter, so many points tie
        let h = parse_hamiltonian::<f64>("1\n-1 X\n").unwrap();
        let spec = AnsatzSpec::new(1, 0, 1).unwrap(); // ry, rz
        let r = cafqa_search(&spec, &h, &budget(16, Strategy::Exhaustive)).unwrap();
        assert_eq!(r.best_energy, -1.0);
        assert_eq!(r.best_point, vec![1, 0]);
    }

    #[test]
    fn trace_is_monotone_and_reproducible() {
        let h = parse_hamiltonian::<f64>("3\n-0.5 XII\n0.8 ZZI\n-0.3 IYY\n0.2 XXX\n").unwrap();
        let spec = AnsatzSpec::new(3, 1, 1).unwrap();
        let b = budget(200, Strategy::MultistartHillclimb);
        let a = cafqa_search(&spec, &h, &b).unwrap();
        let again = cafqa_search(&spec, &h, &b).unwrap();
        assert_eq!(a, again);
        assert!(a.evaluations_used <= 200);
        assert_eq!(a.trace.len(), a.evaluations_used);
        assert!(a.trace.windows(2).all(|w| w[1].1 <= w[0].1));
        assert_eq!(a.best_energy, grid_energy(&spec, &h, &a.best_point).unwrap());
        let r = cafqa_search(&spec, &h, &budget(200, Strategy::Random)).unwrap();
        assert!(r.best_energy <= a.trace[0].1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = parse_hamiltonian::<f64>("2\n-1 ZZ\n").unwrap();
        assert!(matches!(
            cafqa_search(&one_qubit_ry(), &h, &SearchBudget::default()),
            Err(CafqaError::DimensionMismatch { .. })
        ));
        let spec = AnsatzSpec::new(2, 1, 0).unwrap();
        assert_eq!(cafqa_search(&spec, &h, &SearchBudget::default()), Err(CafqaError::NoParameters));
        let spec = AnsatzSpec::new(2, 1, 1).unwrap();
        assert_eq!(cafqa_search(&spec, &h, &budget(0, Strategy::Random)), Err(CafqaError::ZeroBudget));
    }

    #[test]
    fn vqe_init_mapping() {
        let r = SearchResult {
            best_point: vec![0, 1, 2, 3],
            best_energy: 0.0,
            evaluations_used: 1,
            trace: vec![],
        };
        let p = to_vqe_init(&r);
        let want = [0.0, FRAC_PI_2, 2.0 * FRAC_PI_2, 3.0 * FRAC_PI_2];
        assert!(p.values.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(p.snap_to_grid().unwrap(), r.best_point);
    }

    #[test]
    fn exhaustive_covers_full_space() {
        let h = parse_hamiltonian::<f64>("2\n0.4 XZ\n-0.7 YY\n0.1 ZI\n").unwrap();
        let spec = AnsatzSpec::new(2, 0, 1).unwrap().with_axes(vec![Axis::Y]).unwrap();
        let r = cafqa_search(&spec, &h, &budget(1000, Strategy::Exhaustive)).unwrap();
        assert_eq!(r.evaluations_used, 16);
        let min = (0..16u8)
            .map(|i| grid_energy(&spec, &h, &[i / 4, i % 4]).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_energy, min);
    }
}
