//! Property tests tying the circuit layers together: tableau vs dense
//! statevector, transpiled vs original, and QASM text round-trips.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

use cafqa_core::backend::{exact_distribution, simulate};
use cafqa_core::circuit::{Axis, Circuit, Gate};
use cafqa_core::pauli::{Pauli, PauliString};
use cafqa_core::qasm::{parse_qasm, serialize_qasm};
use cafqa_core::stabilizer::StabilizerTableau;
use cafqa_core::transpile::{native_counts, transpile};
use proptest::prelude::*;

// (kind, qubit a, qubit b offset, angle)
type RawGate = (u8, usize, usize, f64);

fn build(n: usize, raw: &[RawGate], clifford: bool) -> Circuit {
    let mut c = Circuit::new(n, n);
    for &(kind, a, off, angle) in raw {
        let a = a % n;
        let b = (a + 1 + off % (n - 1)) % n;
        let theta = if clifford { (angle.abs() * 4.0).floor() * FRAC_PI_2 } else { angle };
        let g = match kind % 10 {
            0 => Gate::X(a),
            1 => Gate::Y(a),
            2 => Gate::Z(a),
            3 => Gate::H(a),
            4 => Gate::S(a),
            5 => Gate::Sdg(a),
            6 => Gate::Rot(Axis::X, theta, a),
            7 => Gate::Rot(Axis::Y, theta, a),
            8 => Gate::Rot(Axis::Z, theta, a),
            _ => Gate::Cx(a, b),
        };
        c.push(g);
    }
    c
}

fn raw_gates(max_len: usize) -> impl Strategy<Value = Vec<RawGate>> {
    prop::collection::vec((0u8..10, 0usize..8, 0usize..8, -3.2f64..3.2), 0..max_len)
}

fn pauli_string(n: usize) -> impl Strategy<Value = PauliString> {
    prop::collection::vec(0u8..4, n).prop_map(|v| {
        let ops: Vec<Pauli> = v
            .into_iter()
            .map(|k| [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][k as usize])
            .collect();
        PauliString::from_ops(&ops).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tableau_matches_statevector(
        (n, raw, paulis) in (2usize..6).prop_flat_map(|n| {
            (Just(n), raw_gates(40), prop::collection::vec(pauli_string(n), 1..6))
        })
    ) {
        let c = build(n, &raw, true);
        let mut t = StabilizerTableau::new_zero_state(n).unwrap();
        t.apply_circuit(&c).unwrap();
        prop_assert!(t.invariants_hold());
        let state = simulate::<f64>(&c).unwrap();
        for p in &paulis {
            let exact = state.expect_pauli(p);
            let tab = t.expect_pauli(p).unwrap();
            prop_assert!((exact - tab as f64).abs() < 1e-9, "{p}: {exact} vs {tab}");
        }
    }

    #[test]
    fn transpile_preserves_distribution(
        (n, raw) in (2usize..5).prop_flat_map(|n| (Just(n), raw_gates(30)))
    ) {
        let mut c = build(n, &raw, false);
        c.measure_all();
        let native = transpile(&c).unwrap();
        let (_, rxx) = native_counts(&native);
        prop_assert_eq!(rxx, c.count("cx"));
        let a = exact_distribution(&c).unwrap();
        let b = exact_distribution(&native).unwrap();
        let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
        let tv: f64 = keys
            .into_iter()
            .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
            .sum::<f64>()
            / 2.0;
        prop_assert!(tv < 1e-9, "tv {tv}");
    }

    #[test]
    fn qasm_round_trip(
        (n, raw, with_rxx) in (1usize..7).prop_flat_map(|n| (Just(n), raw_gates(25), any::<bool>()))
    ) {
        let mut c = if n == 1 {
            let mut c = Circuit::new(1, 1);
            for &(k, _, _, a) in &raw {
                c.push(if k % 2 == 0 { Gate::H(0) } else { Gate::ry(a, 0) });
            }
            c
        } else {
            build(n, &raw, false)
        };
        if with_rxx && n > 1 {
            c.push(Gate::Rxx(0.3, 0, n - 1));
        }
        c.measure_all();
        let text = serialize_qasm(&c);
        let back = parse_qasm(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(serialize_qasm(&back), text);
    }
}

#[test]
fn malformed_qasm_reports_location() {
    let bad = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\ncreg c[2];\nh q[5];\n";
    let err = parse_qasm(bad).unwrap_err();
    assert_eq!(err.line, 5);
    assert!(err.col > 0);
}
