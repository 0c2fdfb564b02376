//! Hardware-efficient ansatz with an X-gate occupation prefix.
//!
//! Layout: an `x` prefix, then for each layer a rotation on every qubit for
//! every axis in the pattern (qubit-major), followed by the entangler CNOTs.
//! An optional trailing rotation layer can be enabled.
//!
//! At the all-zero point only the prefix and the CNOTs act, and CNOTs permute
//! basis states. The prefix is therefore the preimage of the occupation
//! string (qubits `0..n_occupied` set) under the CNOT network, so the
//! all-zero point prepares exactly that product state.

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::circuit::{Axis, Circuit, Gate};
use crate::scalar::{Real, GRID_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnsatzError {
    #[error("invalid ansatz: {0}")]
    InvalidSpec(String),
    #[error("parameter vector has length {found}, ansatz needs {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("parameter {index} = {value} is not a multiple of pi/2")]
    OffGrid { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub n_occupied: usize,
    pub n_layers: usize,
    pub rotation_axes: Vec<Axis>,
    pub entangler: Vec<(usize, usize)>,
    pub final_rotation_layer: bool,
}

impl AnsatzSpec {
    /// `(ry, rz)` rotations with a linear CNOT chain.
    pub fn new(n_qubits: usize, n_occupied: usize, n_layers: usize) -> Result<Self, AnsatzError> {
        Self {
            n_qubits,
            n_occupied,
            n_layers,
            rotation_axes: vec![Axis::Y, Axis::Z],
            entangler: linear_chain(n_qubits),
            final_rotation_layer: false,
        }
        .validated()
    }

    pub fn with_axes(mut self, axes: Vec<Axis>) -> Result<Self, AnsatzError> {
        self.rotation_axes = axes;
        self.validated()
    }

    pub fn with_entangler(mut self, pairs: Vec<(usize, usize)>) -> Result<Self, AnsatzError> {
        self.entangler = pairs;
        self.validated()
    }

    pub fn with_final_rotation_layer(mut self, on: bool) -> Self {
        self.final_rotation_layer = on;
        self
    }

    pub fn validated(self) -> Result<Self, AnsatzError> {
        if self.n_qubits == 0 {
            return Err(AnsatzError::InvalidSpec("n_qubits must be positive".into()));
        }
        if self.n_occupied > self.n_qubits {
            return Err(AnsatzError::InvalidSpec(format!(
                "n_occupied {} exceeds n_qubits {}",
                self.n_occupied, self.n_qubits
            )));
        }
        if self.rotation_axes.is_empty() && (self.n_layers > 0 || self.final_rotation_layer) {
            return Err(AnsatzError::InvalidSpec("rotation axis pattern is empty".into()));
        }
        for &(a, b) in &self.entangler {
            if a >= self.n_qubits || b >= self.n_qubits || a == b {
                return Err(AnsatzError::InvalidSpec(format!("bad entangler pair ({a},{b})")));
            }
        }
        Ok(self)
    }

    fn rotation_layers(&self) -> usize {
        self.n_layers + usize::from(self.final_rotation_layer)
    }

    pub fn param_count(&self) -> usize {
        self.rotation_layers() * self.n_qubits * self.rotation_axes.len()
    }

    /// Circuit at a parameter point; measurement-free.
    pub fn build_circuit<T: Real>(&self, p: &ParamPoint<T>) -> Result<Circuit, AnsatzError> {
        self.build_from_angles(&p.to_f64())
    }

    pub fn build_from_angles(&self, angles: &[f64]) -> Result<Circuit, AnsatzError> {
        if angles.len() != self.param_count() {
            return Err(AnsatzError::LengthMismatch {
                expected: self.param_count(),
                found: angles.len(),
            });
        }
        let mut c = Circuit::new(self.n_qubits, 0);
        for q in self.prefix_qubits() {
            c.push(Gate::X(q));
        }
        let mut next = angles.iter();
        for layer in 0..self.rotation_layers() {
            for q in 0..self.n_qubits {
                for &axis in &self.rotation_axes {
                    let theta = *next.next().expect("length checked");
                    c.push(Gate::Rot(axis, theta, q));
                }
            }
            if layer < self.n_layers {
                for &(a, b) in &self.entangler {
                    c.push(Gate::Cx(a, b));
                }
            }
        }
        Ok(c)
    }

    /// Qubits flipped before the first layer.
    pub fn prefix_qubits(&self) -> Vec<usize> {
        let mut bits: Vec<bool> = (0..self.n_qubits).map(|q| q < self.n_occupied).collect();
        for _ in 0..self.n_layers {
            for &(control, target) in self.entangler.iter().rev() {
                bits[target] ^= bits[control];
            }
        }
        (0..self.n_qubits).filter(|&q| bits[q]).collect()
    }

    /// The all-zero point, which prepares the occupation state.
    pub fn hf_point<T: Real>(&self) -> ParamPoint<T> {
        ParamPoint::new(vec![T::zero(); self.param_count()])
    }
}

pub fn linear_chain(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|q| (q - 1, q)).collect()
}

/// Parameter vector in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint<T: Real> {
    pub values: Vec<T>,
}

impl<T: Real> ParamPoint<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    /// Point with `values[i] = indices[i]·π/2`.
    pub fn from_grid(indices: &[u8]) -> Self {
        Self::new(
            indices
                .iter()
                .map(|&k| T::of(k as f64 * FRAC_PI_2))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.as_f64()).collect()
    }

    pub fn is_clifford(&self) -> bool {
        self.snap_to_grid().is_ok()
    }

    /// Grid index `round(v / (π/2)) mod 4` of every value.
    pub fn snap_to_grid(&self) -> Result<Vec<u8>, AnsatzError> {
        self.values
            .iter()
            .enumerate()
            .map(|(index, v)| {
                let v = v.as_f64();
                let k = (v / FRAC_PI_2).round();
                if (v - k * FRAC_PI_2).abs() <= GRID_TOLERANCE {
                    Ok(k.rem_euclid(4.0) as u8)
                } else {
                    Err(AnsatzError::OffGrid { index, value: v })
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{exact_expectation, simulate};
    use crate::pauli::PauliHamiltonian;
    use crate::stabilizer::{clifford_energy, StabilizerTableau};
    use std::f64::consts::PI;

    #[test]
    fn occupation_prefix_only() {
        let spec = AnsatzSpec::new(2, 2, 0).unwrap();
        let c = spec.build_circuit::<f64>(&ParamPoint::new(vec![])).unwrap();
        assert_eq!(c.gates, vec![Gate::X(0), Gate::X(1)]);
        let s = simulate::<f64>(&c).unwrap();
        assert!((s.probabilities()[0b11] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_point_prepares_occupation_state() {
        for (n, occ, layers) in [(2, 1, 1), (3, 2, 2), (4, 2, 3), (4, 1, 1), (5, 3, 2)] {
            let spec = AnsatzSpec::new(n, occ, layers).unwrap();
            let c = spec.build_circuit(&spec.hf_point::<f64>()).unwrap();
            let index: usize = (0..occ).map(|q| 1 << q).sum();
            let p = simulate::<f64>(&c).unwrap().probabilities()[index];
            assert!((p - 1.0).abs() < 1e-15, "n={n} occ={occ} layers={layers}");
        }
        let spec = AnsatzSpec::new(2, 1, 1).unwrap();
        // cx(0,1) maps |11> to |10>
        assert_eq!(spec.prefix_qubits(), vec![0, 1]);
        let spec = AnsatzSpec::new(2, 1, 1).unwrap().with_entangler(vec![]).unwrap();
        assert_eq!(spec.prefix_qubits(), vec![0]);
    }

    #[test]
    fn single_layer_ry_chain() {
        let spec = AnsatzSpec::new(2, 0, 1).unwrap().with_axes(vec![Axis::Y]).unwrap();
        let c = spec.build_circuit(&ParamPoint::new(vec![0.0, 0.0])).unwrap();
        assert_eq!(c.gates, vec![Gate::ry(0.0, 0), Gate::ry(0.0, 1), Gate::Cx(0, 1)]);
        assert!((simulate::<f64>(&c).unwrap().probabilities()[0] - 1.0).abs() < 1e-15);

        let c = spec.build_circuit(&ParamPoint::new(vec![PI / 2.0, 0.0])).unwrap();
        let h = PauliHamiltonian::<f64>::new(2, [(1.0, "XX".parse().unwrap())]).unwrap();
        assert!((exact_expectation(&c, &h).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn param_count_formula() {
        for (n, layers, axes, fin) in [(1, 1, 1, false), (3, 2, 2, false), (4, 3, 3, true), (2, 0, 2, false)] {
            let all = [Axis::Y, Axis::Z, Axis::X];
            let spec = AnsatzSpec::new(n, 0, layers)
                .unwrap()
                .with_axes(all[..axes].to_vec())
                .unwrap()
                .with_final_rotation_layer(fin);
            let expected = (layers + usize::from(fin)) * n * axes;
            assert_eq!(spec.param_count(), expected);
            let c = spec.build_circuit(&spec.hf_point::<f64>()).unwrap();
            let rotations = c.gates.iter().filter(|g| matches!(g, Gate::Rot(..))).count();
            assert_eq!(rotations, expected);
            assert_eq!(c.count("cx"), layers * n.saturating_sub(1));
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(AnsatzSpec::new(0, 0, 1).is_err());
        assert!(AnsatzSpec::new(2, 3, 1).is_err());
        assert!(AnsatzSpec::new(2, 0, 1).unwrap().with_entangler(vec![(0, 2)]).is_err());
        assert!(AnsatzSpec::new(2, 0, 1).unwrap().with_entangler(vec![(1, 1)]).is_err());
        assert!(AnsatzSpec::new(2, 0, 1).unwrap().with_axes(vec![]).is_err());
        let spec = AnsatzSpec::new(2, 0, 1).unwrap();
        assert_eq!(
            spec.build_circuit(&ParamPoint::new(vec![0.0])),
            Err(AnsatzError::LengthMismatch { expected: 4, found: 1 })
        );
    }

    #[test]
    fn hf_point_is_zero_and_clifford() {
        let spec = AnsatzSpec::new(3, 1, 1).unwrap();
        let p = spec.hf_point::<f64>();
        assert_eq!(p.values, vec![0.0; 6]);
        assert!(p.is_clifford());
        assert_eq!(p.snap_to_grid().unwrap(), vec![0; 6]);
    }

    #[test]
    fn hf_energy_agrees_across_backends() {
        let spec = AnsatzSpec::new(3, 2, 2).unwrap();
        let h: PauliHamiltonian<f64> =
            crate::pauli::parse_hamiltonian("3\n-0.8 ZII\n0.3 ZZI\n0.2 XXI\n-0.4 IIZ\n0.1 YIY\n").unwrap();
        let c = spec.build_circuit(&spec.hf_point::<f64>()).unwrap();
        let mut t = StabilizerTableau::new_zero_state(3).unwrap();
        t.apply_circuit(&c).unwrap();
        let a = clifford_energy(&mut t, &h).unwrap();
        let b = exact_expectation(&c, &h).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn grid_snapping() {
        let p = ParamPoint::new(vec![0.0, PI / 2.0, PI, 3.0 * PI / 2.0]);
        assert_eq!(p.snap_to_grid().unwrap(), vec![0, 1, 2, 3]);
        let p = ParamPoint::new(vec![2.0 * PI, -PI / 2.0]);
        assert_eq!(p.snap_to_grid().unwrap(), vec![0, 3]);
        let p = ParamPoint::new(vec![0.1]);
        assert!(matches!(p.snap_to_grid(), Err(AnsatzError::OffGrid { index: 0, .. })));
        assert!(!p.is_clifford());
        let back = ParamPoint::<f64>::from_grid(&[0, 1, 2, 3]);
        assert_eq!(back.snap_to_grid().unwrap(), vec![0, 1, 2, 3]);
    }
}
