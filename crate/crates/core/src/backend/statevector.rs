//! Dense statevector. Basis index bit `q` is the state of qubit `q`.

use num_complex::Complex;

use crate::circuit::{Axis, Gate};
use crate::pauli::{Pauli, PauliString};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T: Real> {
    n: usize,
    amps: Vec<Complex<T>>,
}

type Mat2<T> = [[Complex<T>; 2]; 2];

fn c<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(T::of(re), T::of(im))
}

fn gate_matrix<T: Real>(gate: &Gate) -> Option<Mat2<T>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Some(match *gate {
        Gate::X(_) => [[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]],
        Gate::Y(_) => [[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]],
        Gate::Z(_) => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]],
        Gate::H(_) => [[c(h, 0.), c(h, 0.)], [c(h, 0.), c(-h, 0.)]],
        Gate::S(_) => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(0., 1.)]],
        Gate::Sdg(_) => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(0., -1.)]],
        Gate::Rot(axis, theta, _) => {
            let (cos, sin) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            match axis {
                Axis::X => [[c(cos, 0.), c(0., -sin)], [c(0., -sin), c(cos, 0.)]],
                Axis::Y => [[c(cos, 0.), c(-sin, 0.)], [c(sin, 0.), c(cos, 0.)]],
                Axis::Z => [[c(cos, -sin), c(0., 0.)], [c(0., 0.), c(cos, sin)]],
            }
        }
        Gate::Cx(..) | Gate::Rxx(..) => return None,
    })
}

impl<T: Real> StateVector<T> {
    pub fn zero(n: usize) -> Self {
        let mut amps = vec![Complex::new(T::zero(), T::zero()); 1usize << n];
        amps[0] = Complex::new(T::one(), T::zero());
        Self { n, amps }
    }

    pub fn from_amplitudes(amps: Vec<Complex<T>>) -> Self {
        assert!(amps.len().is_power_of_two(), "amplitude count must be a power of two");
        let n = amps.len().trailing_zeros() as usize;
        Self { n, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    fn apply_single(&mut self, q: usize, m: &Mat2<T>) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | bit]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    /// Applies a gate; the caller has validated qubit indices.
    pub fn apply(&mut self, gate: &Gate) {
        match *gate {
            Gate::Cx(control, target) => {
                let (cb, tb) = (1usize << control, 1usize << target);
                for i in 0..self.amps.len() {
                    if i & cb != 0 && i & tb == 0 {
                        self.amps.swap(i, i | tb);
                    }
                }
            }
            Gate::Rxx(theta, a, b) => {
                let cos = T::of((theta / 2.0).cos());
                let msin = Complex::new(T::zero(), T::of(-(theta / 2.0).sin()));
                let mask = (1usize << a) | (1usize << b);
                for i in 0..self.amps.len() {
                    let j = i ^ mask;
                    if i < j {
                        let (ai, aj) = (self.amps[i], self.amps[j]);
                        self.amps[i] = ai * cos + aj * msin;
                        self.amps[j] = aj * cos + ai * msin;
                    }
                }
            }
            ref g => {
                let m = gate_matrix(g).expect("single-qubit gate");
                self.apply_single(g.qubits()[0], &m);
            }
        }
    }

    pub fn apply_pauli(&mut self, q: usize, p: Pauli) {
        match p {
            Pauli::I => {}
            Pauli::X => self.apply(&Gate::X(q)),
            Pauli::Y => self.apply(&Gate::Y(q)),
            Pauli::Z => self.apply(&Gate::Z(q)),
        }
    }

    pub fn probabilities(&self) -> Vec<T> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨ψ|P|ψ⟩` for a Hermitian Pauli string.
    pub fn expect_pauli(&self, p: &PauliString) -> T {
        let (x, z) = (p.x_mask() as usize, p.z_mask() as usize);
        let n_y = (x & z).count_ones();
        // i^{n_y}; Hermitian strings give a real result
        let base = match n_y % 4 {
            0 => c::<T>(1., 0.),
            1 => c(0., 1.),
            2 => c(-1., 0.),
            _ => c(0., -1.),
        };
        let mut acc = Complex::new(T::zero(), T::zero());
        for (i, amp) in self.amps.iter().enumerate() {
            let sign = if (i & z).count_ones() % 2 == 0 { T::one() } else { -T::one() };
            acc = acc + self.amps[i ^ x].conj() * *amp * base * sign;
        }
        acc.re
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &Self) -> T {
        self.amps
            .iter()
            .zip(&other.amps)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b)
            .norm_sqr()
    }
}
