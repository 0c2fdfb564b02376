//! Lowering to the trapped-ion native set `{rx, ry, rz, rxx}`.
//!
//! Every `cx` becomes one `rxx(π/2)` dressed with fixed single-qubit
//! rotations, Clifford single-qubit gates become rotations, and adjacent
//! same-axis rotations on a qubit are merged. Equality is up to global phase.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Deref;

use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Gate};
use crate::scalar::wrap_angle;

/// Merged angles closer than this to zero (mod 2π) are dropped.
pub const ZERO_ANGLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranspileError {
    #[error("invalid circuit: {0}")]
    Invalid(#[from] CircuitError),
    #[error("gate {0} is outside the native set")]
    NotNative(String),
}

/// A circuit whose gates are all `rx`, `ry`, `rz` or `rxx`, with every
/// `rxx` angle in `(-π, π]` and non-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NativeCircuit(Circuit);

impl NativeCircuit {
    pub fn try_from_circuit(c: Circuit) -> Result<Self, TranspileError> {
        c.validate()?;
        for g in &c.gates {
            match *g {
                Gate::Rot(..) => {}
                Gate::Rxx(t, _, _) if t != 0.0 && t > -PI && t <= PI => {}
                ref other => return Err(TranspileError::NotNative(other.to_string())),
            }
        }
        Ok(Self(c))
    }

    pub fn into_circuit(self) -> Circuit {
        self.0
    }
}

impl Deref for NativeCircuit {
    type Target = Circuit;

    fn deref(&self) -> &Circuit {
        &self.0
    }
}

/// `cx(control, target)` as `ry(π/2)·c; rxx(π/2); rx(-π/2)·t; ry(-π/2)·c; rz(-π/2)·c`.
pub fn decompose_cnot(control: usize, target: usize) -> Vec<Gate> {
    debug_assert_ne!(control, target);
    vec![
        Gate::ry(FRAC_PI_2, control),
        Gate::Rxx(FRAC_PI_2, control, target),
        Gate::rx(-FRAC_PI_2, target),
        Gate::ry(-FRAC_PI_2, control),
        Gate::rz(-FRAC_PI_2, control),
    ]
}

/// Rotation products for the single-qubit Cliffords, in time order.
fn lower(gate: &Gate) -> Vec<Gate> {
    match *gate {
        Gate::X(q) => vec![Gate::rx(PI, q)],
        Gate::Y(q) => vec![Gate::ry(PI, q)],
        Gate::Z(q) => vec![Gate::rz(PI, q)],
        Gate::S(q) => vec![Gate::rz(FRAC_PI_2, q)],
        Gate::Sdg(q) => vec![Gate::rz(-FRAC_PI_2, q)],
        Gate::H(q) => vec![Gate::ry(FRAC_PI_2, q), Gate::rx(PI, q)],
        Gate::Cx(c, t) => decompose_cnot(c, t),
        g => vec![g],
    }
}

/// Output buffer that merges each new rotation into the last gate on its
/// qubit when the axes agree.
struct Merger {
    gates: Vec<Option<Gate>>,
    // indices of live gates touching each qubit, in order
    per_qubit: Vec<Vec<usize>>,
}

impl Merger {
    fn new(n: usize) -> Self {
        Self {
            gates: Vec::new(),
            per_qubit: vec![Vec::new(); n],
        }
    }

    fn push(&mut self, gate: Gate) {
        match gate {
            Gate::Rot(axis, theta, q) => {
                if let Some(&last) = self.per_qubit[q].last() {
                    if let Some(Gate::Rot(prev_axis, prev, _)) = self.gates[last] {
                        if prev_axis == axis {
                            let merged = wrap_angle(prev + theta);
                            if merged.abs() <= ZERO_ANGLE_TOLERANCE {
                                self.gates[last] = None;
                                self.per_qubit[q].pop();
                            } else {
                                self.gates[last] = Some(Gate::Rot(axis, merged, q));
                            }
                            return;
                        }
                    }
                }
                let theta = wrap_angle(theta);
                if theta.abs() <= ZERO_ANGLE_TOLERANCE {
                    return;
                }
                self.per_qubit[q].push(self.gates.len());
                self.gates.push(Some(Gate::Rot(axis, theta, q)));
            }
            Gate::Rxx(theta, a, b) => {
                let theta = wrap_angle(theta);
                if theta.abs() <= ZERO_ANGLE_TOLERANCE {
                    return;
                }
                let i = self.gates.len();
                self.per_qubit[a].push(i);
                self.per_qubit[b].push(i);
                self.gates.push(Some(Gate::Rxx(theta, a, b)));
            }
            other => unreachable!("{other} reaches the merger only after lowering"),
        }
    }

    fn finish(self) -> Vec<Gate> {
        self.gates.into_iter().flatten().collect()
    }
}

/// Lowers a circuit to native gates; measurements are carried over unchanged.
pub fn transpile(c: &Circuit) -> Result<NativeCircuit, TranspileError> {
    c.validate()?;
    let mut merger = Merger::new(c.n_qubits);
    for gate in &c.gates {
        for g in lower(gate) {
            merger.push(g);
        }
    }
    Ok(NativeCircuit(Circuit {
        n_qubits: c.n_qubits,
        n_clbits: c.n_clbits,
        gates: merger.finish(),
        measurements: c.measurements.clone(),
    }))
}

/// Native gate counts: `(single-qubit rotations, rxx)`.
pub fn native_counts(c: &NativeCircuit) -> (usize, usize) {
    let rxx = c.count("rxx");
    (c.gates.len() - rxx, rxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{exact_distribution, simulate, StateVector};
    use crate::circuit::Axis;
    use num_complex::Complex64;

    /// Dense 4x4 unitary of a two-qubit gate list, columns = images of basis states.
    fn unitary(gates: &[Gate]) -> Vec<Vec<Complex64>> {
        (0..4)
            .map(|col| {
                let mut amps = vec![Complex64::new(0.0, 0.0); 4];
                amps[col] = Complex64::new(1.0, 0.0);
                let mut s = StateVector::from_amplitudes(amps);
                for g in gates {
                    s.apply(g);
                }
                s.amplitudes().to_vec()
            })
            .collect()
    }

    #[test]
    fn cnot_template_matches_unitary() {
        for (c, t) in [(0, 1), (1, 0)] {
            let got = unitary(&decompose_cnot(c, t));
            let want = unitary(&[Gate::Cx(c, t)]);
            // align global phase on the largest entry
            let (mut bi, mut bj) = (0, 0);
            for i in 0..4 {
                for j in 0..4 {
                    if want[i][j].norm() > want[bi][bj].norm() {
                        (bi, bj) = (i, j);
                    }
                }
            }
            let phase = got[bi][bj] / want[bi][bj];
            assert!((phase.norm() - 1.0).abs() < 1e-12);
            let dev = (0..4)
                .flat_map(|i| (0..4).map(move |j| (i, j)))
                .map(|(i, j)| (got[i][j] - phase * want[i][j]).norm())
                .fold(0.0, f64::max);
            assert!(dev <= 1e-12, "deviation {dev}");
        }
    }

    #[test]
    fn cnot_template_truth_table() {
        let gates = decompose_cnot(0, 1);
        assert_eq!(gates.iter().filter(|g| g.name() == "rxx").count(), 1);
        // |00> -> |00>, |10> (qubit 0 set) -> |11>
        let u = unitary(&gates);
        assert!((u[0][0].norm() - 1.0).abs() < 1e-12);
        assert!((u[0b01][0b11].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_qubit_lowerings_match() {
        for g in [Gate::X(0), Gate::Y(0), Gate::Z(0), Gate::H(0), Gate::S(0), Gate::Sdg(0)] {
            let mut a = Circuit::new(1, 0);
            a.push(Gate::ry(0.3, 0)).push(Gate::rz(0.7, 0)).push(g);
            let mut b = Circuit::new(1, 0);
            b.push(Gate::ry(0.3, 0)).push(Gate::rz(0.7, 0));
            b.gates.extend(lower(&g));
            let f = simulate::<f64>(&a).unwrap().fidelity(&simulate(&b).unwrap());
            assert!((f - 1.0).abs() < 1e-12, "{g}");
        }
    }

    #[test]
    fn merges_adjacent_rotations() {
        let mut c = Circuit::new(1, 0);
        c.push(Gate::rz(0.2, 0)).push(Gate::rz(0.3, 0));
        let t = transpile(&c).unwrap();
        assert_eq!(t.gates.len(), 1);
        match t.gates[0] {
            Gate::Rot(Axis::Z, a, 0) => assert!((a - 0.5).abs() < 1e-15),
            ref g => panic!("{g:?}"),
        }
    }

    #[test]
    fn x_twice_cancels() {
        let mut c = Circuit::new(1, 0);
        c.push(Gate::X(0)).push(Gate::X(0));
        assert!(transpile(&c).unwrap().gates.is_empty());
    }

    #[test]
    fn merge_cascades_through_cancellations() {
        let mut c = Circuit::new(2, 0);
        c.push(Gate::rz(0.4, 0))
            .push(Gate::rx(0.9, 1))
            .push(Gate::X(0))
            .push(Gate::X(0))
            .push(Gate::rz(0.1, 0));
        let t = transpile(&c).unwrap();
        assert_eq!(t.gates.len(), 2);
        assert!(t.gates.iter().any(|g| matches!(g, Gate::Rot(Axis::Z, a, 0) if (a - 0.5).abs() < 1e-15)));
    }

    #[test]
    fn does_not_merge_across_entangler() {
        let mut c = Circuit::new(2, 0);
        c.push(Gate::rx(0.2, 0)).push(Gate::Rxx(0.5, 0, 1)).push(Gate::rx(0.3, 0));
        assert_eq!(transpile(&c).unwrap().gates.len(), 3);
    }

    #[test]
    fn bell_transpiles_with_one_rxx() {
        let mut c = Circuit::new(2, 2);
        c.push(Gate::H(0)).push(Gate::Cx(0, 1));
        let t = transpile(&c).unwrap();
        assert_eq!(native_counts(&t).1, 1);
        let f = simulate::<f64>(&c).unwrap().fidelity(&simulate(&t).unwrap());
        assert!((f - 1.0).abs() < 1e-9);
        c.measure_all();
        let t = transpile(&c).unwrap();
        assert_eq!(t.measurements, c.measurements);
        let (a, b) = (exact_distribution(&c).unwrap(), exact_distribution(&t).unwrap());
        for k in ["00", "11"] {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn native_circuit_rejects_cliffords() {
        let mut c = Circuit::new(1, 0);
        c.push(Gate::H(0));
        assert!(NativeCircuit::try_from_circuit(c).is_err());
        let mut c = Circuit::new(2, 0);
        c.push(Gate::Rxx(0.0, 0, 1));
        assert!(NativeCircuit::try_from_circuit(c).is_err());
    }
}
