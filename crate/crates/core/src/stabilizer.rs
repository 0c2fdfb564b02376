//! Stabilizer tableau simulation of Clifford circuits (Aaronson–Gottesman
//! layout with destabilizers) and exact Pauli expectation values.
//!
//! Rows `0..n` are destabilizers and rows `n..2n` are stabilizers. Each row
//! is a Pauli string in (x, z) bit form, with `(1, 1)` meaning `Y`, and a
//! sign bit. Global phase is not tracked.
//!
//! Quarter-turn rotations map onto fixed gate sequences (time order, equal up
//! to global phase):
//!
//! | angle | `rz`  | `rx`        | `ry`    |
//! |-------|-------|-------------|---------|
//! | π/2   | S     | H, S, H     | Z, H    |
//! | π     | Z     | X           | Y       |
//! | 3π/2  | Sdg   | H, Sdg, H   | H, Z    |
//!
//! and `rxx(kπ/2)` on (a, b) is `H⊗H, CX(a,b), rz(kπ/2) on b, CX(a,b), H⊗H`.

use thiserror::Error;

use crate::circuit::{Axis, Circuit, Gate};
use crate::pauli::{PauliHamiltonian, PauliString};
use crate::scalar::Real;

/// Angles within this distance of a multiple of π/2 are treated as Clifford.
pub const CLIFFORD_ANGLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilizerError {
    #[error("a tableau needs at least one qubit")]
    NoQubits,
    #[error("qubit {index} out of range for {size} qubits")]
    QubitOutOfRange { index: usize, size: usize },
    #[error("angle {0} is not a multiple of pi/2; use the statevector backend")]
    NonClifford(f64),
    #[error("Pauli string has {found} qubits, tableau has {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

/// Quarter-turn count `k` with `theta ≈ k·π/2`, reduced mod 4.
pub fn quarter_turns(theta: f64) -> Option<u8> {
    let k = (theta / std::f64::consts::FRAC_PI_2).round();
    if (theta - k * std::f64::consts::FRAC_PI_2).abs() <= CLIFFORD_ANGLE_TOLERANCE {
        Some(k.rem_euclid(4.0) as u8)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilizerTableau {
    n: usize,
    words: usize,
    // row-major: row r occupies [r*words, (r+1)*words)
    x: Vec<u64>,
    z: Vec<u64>,
    sign: Vec<bool>,
    ops: u64,
}

impl StabilizerTableau {
    /// `|0…0⟩`: stabilizers `+Z_i`, destabilizers `+X_i`.
    pub fn new_zero_state(n: usize) -> Result<Self, StabilizerError> {
        if n == 0 {
            return Err(StabilizerError::NoQubits);
        }
        let words = n.div_ceil(64);
        let mut t = Self {
            n,
            words,
            x: vec![0; 2 * n * words],
            z: vec![0; 2 * n * words],
            sign: vec![false; 2 * n],
            ops: 0,
        };
        for i in 0..n {
            t.set_x(i, i, true);
            t.set_z(n + i, i, true);
        }
        Ok(t)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    /// Elementary row-column updates performed so far.
    pub fn op_count(&self) -> u64 {
        self.ops
    }

    #[inline]
    fn bit(v: &[u64], words: usize, row: usize, q: usize) -> bool {
        v[row * words + q / 64] >> (q % 64) & 1 == 1
    }

    fn get_x(&self, row: usize, q: usize) -> bool {
        Self::bit(&self.x, self.words, row, q)
    }

    fn get_z(&self, row: usize, q: usize) -> bool {
        Self::bit(&self.z, self.words, row, q)
    }

    fn set_x(&mut self, row: usize, q: usize, v: bool) {
        let w = &mut self.x[row * self.words + q / 64];
        let m = 1u64 << (q % 64);
        *w = if v { *w | m } else { *w & !m };
    }

    fn set_z(&mut self, row: usize, q: usize, v: bool) {
        let w = &mut self.z[row * self.words + q / 64];
        let m = 1u64 << (q % 64);
        *w = if v { *w | m } else { *w & !m };
    }

    /// Row `r` as a Pauli string (sign dropped). Only valid for `n ≤ 64`.
    pub fn row(&self, r: usize) -> (bool, PauliString) {
        let mut ops = Vec::with_capacity(self.n);
        for q in 0..self.n {
            ops.push(crate::pauli::Pauli::from_bits(self.get_x(r, q), self.get_z(r, q)));
        }
        (
            self.sign[r],
            PauliString::from_ops(&ops).expect("tableau width within Pauli string limit"),
        )
    }

    /// Stabilizer generators as `(negative, string)` pairs.
    pub fn stabilizers(&self) -> Vec<(bool, PauliString)> {
        (self.n..2 * self.n).map(|r| self.row(r)).collect()
    }

    fn check(&self, q: usize) -> Result<(), StabilizerError> {
        if q >= self.n {
            Err(StabilizerError::QubitOutOfRange {
                index: q,
                size: self.n,
            })
        } else {
            Ok(())
        }
    }

    fn each_row(&mut self, q: usize, f: impl Fn(bool, bool, bool) -> (bool, bool, bool)) {
        for r in 0..2 * self.n {
            let (x, z, s) = f(self.get_x(r, q), self.get_z(r, q), self.sign[r]);
            self.set_x(r, q, x);
            self.set_z(r, q, z);
            self.sign[r] = s;
        }
        self.ops += 2 * self.n as u64;
    }

    pub fn h(&mut self, q: usize) -> Result<(), StabilizerError> {
        self.check(q)?;
        self.each_row(q, |x, z, s| (z, x, s ^ (x & z)));
        Ok(())
    }

    pub fn s(&mut self, q: usize) -> Result<(), StabilizerError> {
        self.check(q)?;
        self.each_row(q, |x, z, s| (x, z ^ x, s ^ (x & z)));
        Ok(())
    }

    pub fn sdg(&mut self, q: usize) -> Result<(), StabilizerError> {
        self.check(q)?;
        self.each_row(q, |x, z, s| (x, z ^ x, s ^ (x & !z)));
        Ok(())
    }

    pub fn x(&mut self, q: usize) -> Result<(), StabilizerError> {
        self.check(q)?;
        self.each_row(q, |x, z, s| (x, z, s ^ z));
        Ok(())
    }

    pub fn y(&mut self, q: usize) -> Result<(), StabilizerError> {
        self.check(q)?;
        self.each_row(q, |x, z, s| (x, z, s ^ x ^ z));
        Ok(())
    }

    pub fn z(&mut self, q: usize) -> Result<(), StabilizerError> {
        self.check(q)?;
        self.each_row(q, |x, z, s| (x, z, s ^ x));
        Ok(())
    }

    pub fn cx(&mut self, control: usize, target: usize) -> Result<(), StabilizerError> {
        self.check(control)?;
        self.check(target)?;
        if control == target {
            return Err(StabilizerError::QubitOutOfRange {
                index: target,
                size: self.n,
            });
        }
        for r in 0..2 * self.n {
            let (xa, za) = (self.get_x(r, control), self.get_z(r, control));
            let (xb, zb) = (self.get_x(r, target), self.get_z(r, target));
            self.sign[r] ^= xa & zb & !(xb ^ za);
            self.set_x(r, target, xb ^ xa);
            self.set_z(r, control, za ^ zb);
        }
        self.ops += 2 * self.n as u64;
        Ok(())
    }

    fn rotate(&mut self, axis: Axis, theta: f64, q: usize) -> Result<(), StabilizerError> {
        let k = quarter_turns(theta).ok_or(StabilizerError::NonClifford(theta))?;
        match (axis, k) {
            (_, 0) => self.check(q),
            (Axis::Z, 1) => self.s(q),
            (Axis::Z, 2) => self.z(q),
            (Axis::Z, _) => self.sdg(q),
            (Axis::X, 1) => {
                self.h(q)?;
                self.s(q)?;
                self.h(q)
            }
            (Axis::X, 2) => self.x(q),
            (Axis::X, _) => {
                self.h(q)?;
                self.sdg(q)?;
                self.h(q)
            }
            (Axis::Y, 1) => {
                self.z(q)?;
                self.h(q)
            }
            (Axis::Y, 2) => self.y(q),
            (Axis::Y, _) => {
                self.h(q)?;
                self.z(q)
            }
        }
    }

    /// Conjugates the tableau by one Clifford gate. Rotations must be
    /// quarter turns.
    pub fn apply_clifford_gate(&mut self, gate: &Gate) -> Result<(), StabilizerError> {
        match *gate {
            Gate::X(q) => self.x(q),
            Gate::Y(q) => self.y(q),
            Gate::Z(q) => self.z(q),
            Gate::H(q) => self.h(q),
            Gate::S(q) => self.s(q),
            Gate::Sdg(q) => self.sdg(q),
            Gate::Rot(axis, theta, q) => self.rotate(axis, theta, q),
            Gate::Cx(a, b) => self.cx(a, b),
            Gate::Rxx(theta, a, b) => {
                quarter_turns(theta).ok_or(StabilizerError::NonClifford(theta))?;
                self.h(a)?;
                self.h(b)?;
                self.cx(a, b)?;
                self.rotate(Axis::Z, theta, b)?;
                self.cx(a, b)?;
                self.h(a)?;
                self.h(b)
            }
        }
    }

    /// Applies every gate of a circuit (measurements are ignored).
    pub fn apply_circuit(&mut self, circuit: &Circuit) -> Result<(), StabilizerError> {
        circuit
            .gates
            .iter()
            .try_for_each(|g| self.apply_clifford_gate(g))
    }

    fn anticommutes_with_row(&mut self, r: usize, p: &PauliString) -> bool {
        self.ops += self.n as u64;
        let mut parity = false;
        for q in 0..self.n {
            let (px, pz) = (p.x_mask() >> q & 1 == 1, p.z_mask() >> q & 1 == 1);
            parity ^= (self.get_x(r, q) & pz) ^ (self.get_z(r, q) & px);
        }
        parity
    }

    /// Exact `⟨ψ|p|ψ⟩`, always `-1`, `0` or `+1`.
    pub fn expect_pauli(&mut self, p: &PauliString) -> Result<i8, StabilizerError> {
        if p.len() != self.n {
            return Err(StabilizerError::LengthMismatch {
                expected: self.n,
                found: p.len(),
            });
        }
        for r in self.n..2 * self.n {
            if self.anticommutes_with_row(r, p) {
                return Ok(0);
            }
        }
        // p = ± product of stabilizers whose destabilizer partner anticommutes with p.
        let mut acc_x = vec![false; self.n];
        let mut acc_z = vec![false; self.n];
        let mut phase: i32 = 0; // power of i
        for i in 0..self.n {
            if !self.anticommutes_with_row(i, p) {
                continue;
            }
            let r = self.n + i;
            self.ops += self.n as u64;
            if self.sign[r] {
                phase += 2;
            }
            for q in 0..self.n {
                let (x1, z1) = (acc_x[q], acc_z[q]);
                let (x2, z2) = (self.get_x(r, q), self.get_z(r, q));
                phase += pauli_product_phase(x1, z1, x2, z2);
                acc_x[q] = x1 ^ x2;
                acc_z[q] = z1 ^ z2;
            }
        }
        debug_assert!((0..self.n)
            .all(|q| acc_x[q] == (p.x_mask() >> q & 1 == 1) && acc_z[q] == (p.z_mask() >> q & 1 == 1)));
        match phase.rem_euclid(4) {
            0 => Ok(1),
            2 => Ok(-1),
            other => unreachable!("Hermitian product has phase i^{other}"),
        }
    }

    /// Checks the commutation structure and GF(2) rank of the tableau.
    pub fn invariants_hold(&self) -> bool {
        let n = self.n;
        let anti = |a: usize, b: usize| -> bool {
            let mut parity = false;
            for q in 0..n {
                parity ^= (self.get_x(a, q) & self.get_z(b, q)) ^ (self.get_z(a, q) & self.get_x(b, q));
            }
            parity
        };
        for i in 0..n {
            for j in 0..n {
                if anti(n + i, n + j) || anti(i, j) {
                    return false;
                }
                if anti(i, n + j) != (i == j) {
                    return false;
                }
            }
        }
        // full rank over GF(2) on 2n rows of 2n columns
        let mut rows: Vec<Vec<bool>> = (0..2 * n)
            .map(|r| {
                (0..n)
                    .map(|q| self.get_x(r, q))
                    .chain((0..n).map(|q| self.get_z(r, q)))
                    .collect()
            })
            .collect();
        let mut rank = 0;
        for col in 0..2 * n {
            if let Some(pivot) = (rank..2 * n).find(|&r| rows[r][col]) {
                rows.swap(rank, pivot);
                for r in 0..2 * n {
                    if r != rank && rows[r][col] {
                        let src = rows[rank].clone();
                        rows[r].iter_mut().zip(src).for_each(|(a, b)| *a ^= b);
                    }
                }
                rank += 1;
            }
        }
        rank == 2 * n
    }
}

/// Exponent of `i` in the product of single-qubit Paulis `(x1,z1)·(x2,z2)`.
fn pauli_product_phase(x1: bool, z1: bool, x2: bool, z2: bool) -> i32 {
    let (x2i, z2i) = (x2 as i32, z2 as i32);
    match (x1, z1) {
        (false, false) => 0,
        (true, true) => z2i - x2i,
        (true, false) => z2i * (2 * x2i - 1),
        (false, true) => x2i * (1 - 2 * z2i),
    }
}

/// `offset + Σ coeff·⟨term⟩`, evaluated exactly on the tableau.
pub fn clifford_energy<T: Real>(
    t: &mut StabilizerTableau,
    h: &PauliHamiltonian<T>,
) -> Result<T, StabilizerError> {
    if h.n_qubits() != t.n_qubits() {
        return Err(StabilizerError::LengthMismatch {
            expected: t.n_qubits(),
            found: h.n_qubits(),
        });
    }
    let mut energy = h.identity_offset();
    for (coeff, term) in h.terms() {
        match t.expect_pauli(term)? {
            1 => energy = energy + *coeff,
            -1 => energy = energy - *coeff,
            _ => {}
        }
    }
    Ok(energy)
}
