//! Pauli strings, weighted Pauli Hamiltonians, qubit-wise commuting grouping
//! and energy estimation from measured bitstring counts.
//!
//! Conventions: character `i` of a Pauli string acts on qubit `i`, and
//! character `i` of a measured bitstring is the outcome of qubit `i`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::scalar::Real;

/// Largest register a [`PauliString`] can address.
pub const MAX_QUBITS: usize = 64;

/// Outcome histogram keyed by bitstring.
pub type Counts = BTreeMap<String, u64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PauliError {
    #[error("invalid Pauli character {0:?}")]
    InvalidChar(char),
    #[error("Pauli string has {0} qubits, at most {MAX_QUBITS} supported")]
    TooLong(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: string length {found} does not match declared qubit count {expected}")]
    LengthMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: coefficient is not finite")]
    NonFinite { line: usize },
    #[error("expected {expected} histograms, got {found}")]
    HistogramCount { expected: usize, found: usize },
    #[error("histogram for group {0} is empty")]
    EmptyHistogram(usize),
    #[error("bitstring {bits:?} in group {group} does not have {expected} bits")]
    BadBitstring {
        group: usize,
        bits: String,
        expected: usize,
    },
    #[error("term count {0} does not match the Hamiltonian")]
    TermMismatch(usize),
}

/// Single-qubit Pauli operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

impl TryFrom<char> for Pauli {
    type Error = PauliError;

    fn try_from(c: char) -> Result<Self, Self::Error> {
        match c {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(PauliError::InvalidChar(other)),
        }
    }
}

/// Tensor product of single-qubit Paulis stored as an (x, z) bitmask pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: u64,
    z: u64,
}

impl PauliString {
    pub fn identity(n: usize) -> Result<Self, PauliError> {
        if n > MAX_QUBITS {
            return Err(PauliError::TooLong(n));
        }
        Ok(Self { n, x: 0, z: 0 })
    }

    pub fn from_ops(ops: &[Pauli]) -> Result<Self, PauliError> {
        let mut p = Self::identity(ops.len())?;
        for (q, op) in ops.iter().enumerate() {
            p.set(q, *op);
        }
        Ok(p)
    }

    pub fn from_masks(n: usize, x: u64, z: u64) -> Result<Self, PauliError> {
        let mut p = Self::identity(n)?;
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        p.x = x & mask;
        p.z = z & mask;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    /// Qubits on which the string acts non-trivially.
    pub fn support(&self) -> u64 {
        self.x | self.z
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn get(&self, q: usize) -> Pauli {
        Pauli::from_bits(self.x >> q & 1 == 1, self.z >> q & 1 == 1)
    }

    pub fn set(&mut self, q: usize, op: Pauli) {
        let (xb, zb) = op.bits();
        let bit = 1u64 << q;
        self.x = if xb { self.x | bit } else { self.x & !bit };
        self.z = if zb { self.z | bit } else { self.z & !bit };
    }

    pub fn ops(&self) -> Vec<Pauli> {
        (0..self.n).map(|q| self.get(q)).collect()
    }

    /// True when the two strings commute as operators.
    pub fn commutes_with(&self, other: &PauliString) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()).is_multiple_of(2)
    }

    /// True when at every qubit the two strings agree or one of them is `I`.
    pub fn qubitwise_commutes_with(&self, other: &PauliString) -> bool {
        let both = self.support() & other.support();
        (self.x ^ other.x) & both == 0 && (self.z ^ other.z) & both == 0
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n {
            write!(f, "{}", self.get(q).as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = PauliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ops = s
            .chars()
            .map(Pauli::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_ops(&ops)
    }
}

/// Weighted sum of Pauli strings; the all-identity term is held as a scalar offset.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliHamiltonian<T: Real> {
    n_qubits: usize,
    terms: Vec<(T, PauliString)>,
    identity_offset: T,
}

impl<T: Real> PauliHamiltonian<T> {
    /// Builds a normalized Hamiltonian: duplicates are summed in first-seen
    /// order and identity terms fold into the offset.
    pub fn new(
        n_qubits: usize,
        terms: impl IntoIterator<Item = (T, PauliString)>,
    ) -> Result<Self, PauliError> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(PauliError::Parse {
                line: 0,
                message: format!("qubit count must be in 1..={MAX_QUBITS}"),
            });
        }
        let mut merged: Vec<(T, PauliString)> = Vec::new();
        let mut index: HashMap<PauliString, usize> = HashMap::new();
        let mut offset = T::zero();
        for (coeff, string) in terms {
            if string.len() != n_qubits {
                return Err(PauliError::LengthMismatch {
                    line: 0,
                    expected: n_qubits,
                    found: string.len(),
                });
            }
            if !coeff.is_finite() {
                return Err(PauliError::NonFinite { line: 0 });
            }
            if string.is_identity() {
                offset = offset + coeff;
            } else if let Some(&i) = index.get(&string) {
                merged[i].0 = merged[i].0 + coeff;
            } else {
                index.insert(string, merged.len());
                merged.push((coeff, string));
            }
        }
        Ok(Self {
            n_qubits,
            terms: merged,
            identity_offset: offset,
        })
    }

    pub fn with_offset(mut self, offset: T) -> Self {
        self.identity_offset = offset;
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Non-identity terms.
    pub fn terms(&self) -> &[(T, PauliString)] {
        &self.terms
    }

    pub fn identity_offset(&self) -> T {
        self.identity_offset
    }

    /// Plain-text form: qubit count, optional identity line, then one term per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n_qubits);
        if self.identity_offset != T::zero() {
            out.push_str(&format!(
                "{} {}\n",
                self.identity_offset,
                "I".repeat(self.n_qubits)
            ));
        }
        for (coeff, string) in &self.terms {
            out.push_str(&format!("{coeff} {string}\n"));
        }
        out
    }
}

/// Parses the plain-text Hamiltonian format.
pub fn parse_hamiltonian<T: Real>(text: &str) -> Result<PauliHamiltonian<T>, PauliError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (first_line, header) = lines.next().ok_or(PauliError::Parse {
        line: 1,
        message: "missing qubit count".into(),
    })?;
    let n_qubits: usize = header.parse().map_err(|_| PauliError::Parse {
        line: first_line,
        message: format!("expected qubit count, found {header:?}"),
    })?;
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(PauliError::Parse {
            line: first_line,
            message: format!("qubit count must be in 1..={MAX_QUBITS}"),
        });
    }

    let mut terms = Vec::new();
    for (line, content) in lines {
        let mut fields = content.split_whitespace();
        let (Some(coeff), Some(string), None) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(PauliError::Parse {
                line,
                message: "expected `<coefficient> <pauli-string>`".into(),
            });
        };
        let value: f64 = coeff.parse().map_err(|_| PauliError::Parse {
            line,
            message: format!("invalid coefficient {coeff:?}"),
        })?;
        if !value.is_finite() {
            return Err(PauliError::NonFinite { line });
        }
        let count = string.chars().count();
        if count != n_qubits {
            return Err(PauliError::LengthMismatch {
                line,
                expected: n_qubits,
                found: count,
            });
        }
        let pauli: PauliString = string.parse().map_err(|e| PauliError::Parse {
            line,
            message: format!("{e}"),
        })?;
        let value = T::of(value);
        if !value.is_finite() {
            return Err(PauliError::NonFinite { line });
        }
        terms.push((value, pauli));
    }
    PauliHamiltonian::new(n_qubits, terms)
}

/// A measurement setting shared by qubit-wise compatible terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementGroup {
    /// Per-qubit measurement basis, each `X`, `Y` or `Z`.
    pub basis: Vec<Pauli>,
    /// Indices into [`PauliHamiltonian::terms`].
    pub members: Vec<usize>,
}

impl MeasurementGroup {
    /// Basis as a string such as `XZY`.
    pub fn label(&self) -> String {
        self.basis.iter().map(|p| p.as_char()).collect()
    }
}

/// Greedy first-fit qubit-wise commuting grouping over terms sorted by
/// descending |coefficient|, ties broken by the lexicographic term string.
pub fn group_qubitwise_commuting<T: Real>(h: &PauliHamiltonian<T>) -> Vec<MeasurementGroup> {
    let mut order: Vec<usize> = (0..h.terms.len()).collect();
    let labels: Vec<String> = h.terms.iter().map(|(_, s)| s.to_string()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (h.terms[a].0.abs(), h.terms[b].0.abs());
        cb.partial_cmp(&ca)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| labels[a].cmp(&labels[b]))
    });

    // Running join of member strings per group; unset qubits stay I.
    let mut joins: Vec<PauliString> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for idx in order {
        let term = h.terms[idx].1;
        match joins.iter().position(|j| j.qubitwise_commutes_with(&term)) {
            Some(g) => {
                let j = &mut joins[g];
                j.x |= term.x;
                j.z |= term.z;
                members[g].push(idx);
            }
            None => {
                joins.push(term);
                members.push(vec![idx]);
            }
        }
    }

    joins
        .into_iter()
        .zip(members)
        .map(|(join, members)| MeasurementGroup {
            basis: join
                .ops()
                .into_iter()
                .map(|p| if p == Pauli::I { Pauli::Z } else { p })
                .collect(),
            members,
        })
        .collect()
}

fn parity_expectation<'a>(
    support: u64,
    outcomes: impl Iterator<Item = (&'a str, f64)>,
    group: usize,
    n: usize,
) -> Result<f64, PauliError> {
    let mut acc = 0.0;
    let mut total = 0.0;
    for (bits, weight) in outcomes {
        if bits.len() != n {
            return Err(PauliError::BadBitstring {
                group,
                bits: bits.to_string(),
                expected: n,
            });
        }
        let mut parity = 0u32;
        for (q, c) in bits.bytes().enumerate() {
            match c {
                b'0' => {}
                b'1' => parity ^= (support >> q & 1) as u32,
                _ => {
                    return Err(PauliError::BadBitstring {
                        group,
                        bits: bits.to_string(),
                        expected: n,
                    })
                }
            }
        }
        acc += if parity == 0 { weight } else { -weight };
        total += weight;
    }
    if total <= 0.0 {
        return Err(PauliError::EmptyHistogram(group));
    }
    Ok(acc / total)
}

fn energy_from_weights<'a, T, I>(
    h: &PauliHamiltonian<T>,
    groups: &[MeasurementGroup],
    per_group: &[I],
) -> Result<T, PauliError>
where
    T: Real,
    I: Fn() -> Box<dyn Iterator<Item = (&'a str, f64)> + 'a>,
{
    if per_group.len() != groups.len() {
        return Err(PauliError::HistogramCount {
            expected: groups.len(),
            found: per_group.len(),
        });
    }
    let mut energy = h.identity_offset.as_f64();
    for (g, (group, outcomes)) in groups.iter().zip(per_group).enumerate() {
        for &m in &group.members {
            let (coeff, term) = h.terms.get(m).ok_or(PauliError::TermMismatch(m))?;
            let value = parity_expectation(term.support(), outcomes(), g, h.n_qubits)?;
            energy += coeff.as_f64() * value;
        }
    }
    Ok(T::of(energy))
}

/// Energy estimate from one histogram per measurement group. Histograms must
/// already be in the group's basis (pre-rotations applied before measurement).
pub fn energy_from_counts<T: Real>(
    h: &PauliHamiltonian<T>,
    groups: &[MeasurementGroup],
    histograms: &[Counts],
) -> Result<T, PauliError> {
    let iters: Vec<_> = histograms
        .iter()
        .map(|hist| {
            move || {
                Box::new(hist.iter().map(|(k, v)| (k.as_str(), *v as f64)))
                    as Box<dyn Iterator<Item = (&str, f64)>>
            }
        })
        .collect();
    energy_from_weights(h, groups, &iters)
}

/// Same estimator with real-valued outcome weights (e.g. exact probabilities).
pub fn energy_from_probabilities<T: Real>(
    h: &PauliHamiltonian<T>,
    groups: &[MeasurementGroup],
    distributions: &[BTreeMap<String, f64>],
) -> Result<T, PauliError> {
    let iters: Vec<_> = distributions
        .iter()
        .map(|dist| {
            move || {
                Box::new(dist.iter().map(|(k, v)| (k.as_str(), *v)))
                    as Box<dyn Iterator<Item = (&str, f64)>>
            }
        })
        .collect();
    energy_from_weights(h, groups, &iters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn ham(n: usize, terms: &[(f64, &str)]) -> PauliHamiltonian<f64> {
        PauliHamiltonian::new(n, terms.iter().map(|(c, s)| (*c, ps(s)))).unwrap()
    }

    fn counts(pairs: &[(&str, u64)]) -> Counts {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn pauli_string_masks() {
        let p = ps("XYZI");
        assert_eq!(p.x_mask(), 0b0011);
        assert_eq!(p.z_mask(), 0b0110);
        assert_eq!(p.to_string(), "XYZI");
        assert!(ps("III").is_identity());
        assert!(ps("XX").commutes_with(&ps("ZZ")));
        assert!(!ps("XI").commutes_with(&ps("ZI")));
        assert!(ps("XI").qubitwise_commutes_with(&ps("IZ")));
        assert!(!ps("XX").qubitwise_commutes_with(&ps("ZZ")));
        assert!("XQ".parse::<PauliString>().is_err());
    }

    #[test]
    fn parse_readback() {
        let h: PauliHamiltonian<f64> = parse_hamiltonian("2\n-1.0 ZI\n0.5 XX\n").unwrap();
        assert_eq!(h.n_qubits(), 2);
        assert_eq!(h.terms(), &[(-1.0, ps("ZI")), (0.5, ps("XX"))]);
        assert_eq!(h.identity_offset(), 0.0);
    }

    #[test]
    fn parse_merges_duplicates() {
        let h: PauliHamiltonian<f64> = parse_hamiltonian("1\n0.3 Z\n0.2 Z\n").unwrap();
        assert_eq!(h.terms().len(), 1);
        assert!((h.terms()[0].0 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn parse_rejects_wrong_length() {
        let err = parse_hamiltonian::<f64>("2\n1.0 ZII\n").unwrap_err();
        assert_eq!(
            err,
            PauliError::LengthMismatch {
                line: 2,
                expected: 2,
                found: 3
            }
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_hamiltonian::<f64>("2\n# comment\n\n1.0 ZZ\nfoo\n").unwrap_err();
        assert!(matches!(err, PauliError::Parse { line: 5, .. }), "{err:?}");
        let err = parse_hamiltonian::<f64>("2\nnan ZZ\n").unwrap_err();
        assert_eq!(err, PauliError::NonFinite { line: 2 });
        let err = parse_hamiltonian::<f64>("2\n1.0 ZQ\n").unwrap_err();
        assert!(matches!(err, PauliError::Parse { line: 2, .. }));
        assert!(parse_hamiltonian::<f64>("").is_err());
        assert!(parse_hamiltonian::<f64>("0\n").is_err());
    }

    #[test]
    fn identity_goes_to_offset() {
        let h: PauliHamiltonian<f64> = parse_hamiltonian("2\n0.25 II\n1 ZZ\n-0.05 II\n").unwrap();
        assert!((h.identity_offset() - 0.2).abs() < 1e-15);
        assert_eq!(h.terms().len(), 1);
    }

    #[test]
    fn text_round_trip() {
        let h = ham(3, &[(0.7, "III"), (-1.25, "ZIZ"), (0.1, "XYZ")]);
        let back: PauliHamiltonian<f64> = parse_hamiltonian(&h.to_text()).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn grouping_all_z_is_one_group() {
        let groups = group_qubitwise_commuting(&ham(2, &[(1.0, "ZI"), (1.0, "IZ"), (1.0, "ZZ")]));
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].label(), "ZZ");
        assert_eq!(groups[0].members.len(), 3);
    }

    #[test]
    fn grouping_splits_incompatible_terms() {
        let groups = group_qubitwise_commuting(&ham(2, &[(1.0, "XI"), (1.0, "ZI")]));
        assert_eq!(groups.len(), 2);
        // equal magnitude: lexicographic order puts XI first
        assert_eq!(groups[0].label(), "XZ");
        assert_eq!(groups[1].label(), "ZZ");
    }

    #[test]
    fn grouping_is_sound_and_partitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let h = random_hamiltonian(&mut rng, 4, 20);
            let groups = group_qubitwise_commuting(&h);
            let mut seen: Vec<usize> = groups.iter().flat_map(|g| g.members.clone()).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..h.terms().len()).collect::<Vec<_>>());
            for g in &groups {
                for &m in &g.members {
                    for (q, op) in h.terms()[m].1.ops().into_iter().enumerate() {
                        assert!(op == Pauli::I || op == g.basis[q]);
                    }
                }
            }
            assert_eq!(group_qubitwise_commuting(&h), groups);
        }
    }

    fn random_hamiltonian(rng: &mut ChaCha8Rng, n: usize, terms: usize) -> PauliHamiltonian<f64> {
        let letters = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
        let raw: Vec<(f64, PauliString)> = (0..terms)
            .map(|_| {
                let ops: Vec<Pauli> = (0..n).map(|_| letters[rng.gen_range(0..4)]).collect();
                // coarse coefficients so ties occur
                let c = rng.gen_range(-4..=4) as f64 * 0.25;
                (c, PauliString::from_ops(&ops).unwrap())
            })
            .collect();
        PauliHamiltonian::new(n, raw).unwrap()
    }

    /// Character-level first-fit over the same sorted sequence.
    fn first_fit_oracle(h: &PauliHamiltonian<f64>) -> usize {
        let mut items: Vec<(f64, String)> =
            h.terms().iter().map(|(c, s)| (c.abs(), s.to_string())).collect();
        items.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut bases: Vec<Vec<char>> = Vec::new();
        'outer: for (_, s) in items {
            let chars: Vec<char> = s.chars().collect();
            for basis in bases.iter_mut() {
                let fits = chars
                    .iter()
                    .zip(basis.iter())
                    .all(|(t, b)| *t == 'I' || *b == 'I' || t == b);
                if fits {
                    for (b, t) in basis.iter_mut().zip(&chars) {
                        if *t != 'I' {
                            *b = *t;
                        }
                    }
                    continue 'outer;
                }
            }
            bases.push(chars);
        }
        bases.len()
    }

    #[test]
    fn grouping_matches_first_fit_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let h = random_hamiltonian(&mut rng, 4, 20);
            assert_eq!(group_qubitwise_commuting(&h).len(), first_fit_oracle(&h));
        }
    }

    #[test]
    fn energy_all_zero_outcome() {
        let h = ham(2, &[(-1.0, "ZI")]);
        let g = group_qubitwise_commuting(&h);
        let e = energy_from_counts(&h, &g, &[counts(&[("00", 300)])]).unwrap();
        assert_eq!(e, -1.0);
    }

    #[test]
    fn energy_odd_parity() {
        let h = ham(2, &[(1.0, "ZZ")]);
        let g = group_qubitwise_commuting(&h);
        let e = energy_from_counts(&h, &g, &[counts(&[("01", 150), ("10", 150)])]).unwrap();
        assert_eq!(e, -1.0);
    }

    #[test]
    fn energy_with_offset() {
        let h = ham(2, &[(-1.0, "ZI"), (0.5, "IZ")]).with_offset(0.2);
        let g = group_qubitwise_commuting(&h);
        let e = energy_from_counts(&h, &g, &[counts(&[("00", 100), ("11", 100)])]).unwrap();
        assert!((e - 0.2).abs() < 1e-15);
    }

    #[test]
    fn energy_uses_qubit_positions() {
        // "10": qubit 0 measured 1
        let h = ham(2, &[(1.0, "ZI"), (2.0, "IZ")]);
        let g = group_qubitwise_commuting(&h);
        let e = energy_from_counts(&h, &g, &[counts(&[("10", 10)])]).unwrap();
        assert_eq!(e, -1.0 + 2.0);
    }

    #[test]
    fn energy_errors() {
        let h = ham(2, &[(1.0, "ZZ"), (1.0, "XX")]);
        let g = group_qubitwise_commuting(&h);
        assert_eq!(g.len(), 2);
        let err = energy_from_counts(&h, &g, &[counts(&[("00", 1)])]).unwrap_err();
        assert!(matches!(err, PauliError::HistogramCount { .. }));
        let err = energy_from_counts(&h, &g, &[counts(&[("00", 1)]), Counts::new()]).unwrap_err();
        assert_eq!(err, PauliError::EmptyHistogram(1));
        let err =
            energy_from_counts(&h, &g, &[counts(&[("000", 1)]), counts(&[("00", 1)])]).unwrap_err();
        assert!(matches!(err, PauliError::BadBitstring { group: 0, .. }));
    }

    #[test]
    fn f32_hamiltonian() {
        let h: PauliHamiltonian<f32> = parse_hamiltonian("1\n-0.5 Z\n").unwrap();
        let g = group_qubitwise_commuting(&h);
        let e = energy_from_counts(&h, &g, &[counts(&[("0", 3), ("1", 1)])]).unwrap();
        assert!((e + 0.25).abs() < 1e-6);
    }
}
