//! Gate-list circuit representation.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("qubit index {index} out of range for {size} qubits")]
    QubitOutOfRange { index: usize, size: usize },
    #[error("clbit index {index} out of range for {size} clbits")]
    ClbitOutOfRange { index: usize, size: usize },
    #[error("two-qubit gate {0} acts on the same qubit twice")]
    RepeatedQubit(String),
    #[error("gate {gate} on qubit {qubit} follows its measurement")]
    GateAfterMeasure { gate: String, qubit: usize },
    #[error("non-finite angle in gate {0}")]
    NonFiniteAngle(String),
}

/// Rotation axis of a parameterized single-qubit gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "rx",
            Axis::Y => "ry",
            Axis::Z => "rz",
        }
    }
}

/// Supported gate set. Angles are in radians; `Rxx(θ)` is `exp(-iθ X⊗X / 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    X(usize),
    Y(usize),
    Z(usize),
    H(usize),
    S(usize),
    Sdg(usize),
    Rot(Axis, f64, usize),
    Cx(usize, usize),
    Rxx(f64, usize, usize),
}

impl Gate {
    pub fn rx(theta: f64, q: usize) -> Self {
        Gate::Rot(Axis::X, theta, q)
    }

    pub fn ry(theta: f64, q: usize) -> Self {
        Gate::Rot(Axis::Y, theta, q)
    }

    pub fn rz(theta: f64, q: usize) -> Self {
        Gate::Rot(Axis::Z, theta, q)
    }

    /// OpenQASM name.
    pub fn name(&self) -> &'static str {
        match self {
            Gate::X(_) => "x",
            Gate::Y(_) => "y",
            Gate::Z(_) => "z",
            Gate::H(_) => "h",
            Gate::S(_) => "s",
            Gate::Sdg(_) => "sdg",
            Gate::Rot(axis, _, _) => axis.name(),
            Gate::Cx(_, _) => "cx",
            Gate::Rxx(_, _, _) => "rxx",
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::X(q) | Gate::Y(q) | Gate::Z(q) | Gate::H(q) | Gate::S(q) | Gate::Sdg(q) => {
                vec![q]
            }
            Gate::Rot(_, _, q) => vec![q],
            Gate::Cx(a, b) | Gate::Rxx(_, a, b) => vec![a, b],
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Gate::Rot(_, t, _) | Gate::Rxx(t, _, _) => vec![t],
            _ => Vec::new(),
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Gate::Cx(..) | Gate::Rxx(..))
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())?;
        let params = self.params();
        if !params.is_empty() {
            write!(f, "({})", params[0])?;
        }
        let qs: Vec<String> = self.qubits().iter().map(|q| format!("q{q}")).collect();
        write!(f, " {}", qs.join(","))
    }
}

/// Ordered gate list plus terminal measurements `(qubit, clbit)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    pub n_qubits: usize,
    pub n_clbits: usize,
    pub gates: Vec<Gate>,
    pub measurements: Vec<(usize, usize)>,
}

impl Circuit {
    pub fn new(n_qubits: usize, n_clbits: usize) -> Self {
        Self {
            n_qubits,
            n_clbits,
            gates: Vec::new(),
            measurements: Vec::new(),
        }
    }

    pub fn push(&mut self, gate: Gate) -> &mut Self {
        self.gates.push(gate);
        self
    }

    pub fn measure(&mut self, qubit: usize, clbit: usize) -> &mut Self {
        self.measurements.push((qubit, clbit));
        self
    }

    /// Measures qubit `i` into clbit `i` for every qubit, growing the classical register if needed.
    pub fn measure_all(&mut self) -> &mut Self {
        self.n_clbits = self.n_clbits.max(self.n_qubits);
        for q in 0..self.n_qubits {
            self.measurements.push((q, q));
        }
        self
    }

    pub fn count(&self, name: &str) -> usize {
        self.gates.iter().filter(|g| g.name() == name).count()
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        for gate in &self.gates {
            let qs = gate.qubits();
            for &q in &qs {
                if q >= self.n_qubits {
                    return Err(CircuitError::QubitOutOfRange {
                        index: q,
                        size: self.n_qubits,
                    });
                }
            }
            if qs.len() == 2 && qs[0] == qs[1] {
                return Err(CircuitError::RepeatedQubit(gate.to_string()));
            }
            if gate.params().iter().any(|p| !p.is_finite()) {
                return Err(CircuitError::NonFiniteAngle(gate.to_string()));
            }
        }
        for &(q, c) in &self.measurements {
            if q >= self.n_qubits {
                return Err(CircuitError::QubitOutOfRange {
                    index: q,
                    size: self.n_qubits,
                });
            }
            if c >= self.n_clbits {
                return Err(CircuitError::ClbitOutOfRange {
                    index: c,
                    size: self.n_clbits,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_catches_bad_indices() {
        let mut c = Circuit::new(2, 1);
        c.push(Gate::H(0)).push(Gate::Cx(0, 1)).measure(1, 0);
        assert!(c.validate().is_ok());
        c.push(Gate::Cx(1, 1));
        assert!(matches!(c.validate(), Err(CircuitError::RepeatedQubit(_))));
        let mut c = Circuit::new(2, 1);
        c.push(Gate::rx(0.1, 2));
        assert!(matches!(
            c.validate(),
            Err(CircuitError::QubitOutOfRange { index: 2, size: 2 })
        ));
        let mut c = Circuit::new(2, 1);
        c.measure(0, 1);
        assert!(matches!(c.validate(), Err(CircuitError::ClbitOutOfRange { .. })));
        let mut c = Circuit::new(1, 0);
        c.push(Gate::ry(f64::NAN, 0));
        assert!(matches!(c.validate(), Err(CircuitError::NonFiniteAngle(_))));
    }

    #[test]
    fn measure_all_grows_register() {
        let mut c = Circuit::new(3, 0);
        c.measure_all();
        assert_eq!(c.n_clbits, 3);
        assert_eq!(c.measurements, vec![(0, 0), (1, 1), (2, 2)]);
    }
}
