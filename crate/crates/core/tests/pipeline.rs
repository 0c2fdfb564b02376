//! CAFQA search feeding SPSA, through both executors.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use cafqa_core::ansatz::AnsatzSpec;
use cafqa_core::backend::StatevectorBackend;
use cafqa_core::broker::{host_run, HostOptions, SessionLayout};
use cafqa_core::cafqa::{cafqa_search, grid_energy, to_vqe_init, SearchBudget, Strategy};
use cafqa_core::pauli::{parse_hamiltonian, Pauli, PauliHamiltonian, PauliString};
use cafqa_core::spsa::SpsaConfig;
use cafqa_core::vqe::{run_vqe, BrokerExecutor, DirectExecutor, VqeProblem};
use cafqa_core::Hamiltonian;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H3: &str = "3\n-0.5 XXI\n0.3 IZZ\n-0.2 ZIZ\n0.4 YYI\n0.1 IIX\n";

fn h3() -> Hamiltonian {
    parse_hamiltonian(H3).unwrap()
}

#[test]
fn every_strategy_starts_from_hf_and_exhaustive_is_optimal() {
    let h = h3();
    let spec = AnsatzSpec::new(3, 1, 1).unwrap();
    let hf = grid_energy(&spec, &h, &vec![0; spec.param_count()]).unwrap();
    let exhaustive = cafqa_search(
        &spec,
        &h,
        &SearchBudget {
            max_evaluations: usize::MAX,
            seed: 0,
            strategy: Strategy::Exhaustive,
        },
    )
    .unwrap();
    assert_eq!(exhaustive.evaluations_used, 4usize.pow(spec.param_count() as u32));
    for strategy in [Strategy::MultistartHillclimb, Strategy::Random] {
        let r = cafqa_search(
            &spec,
            &h,
            &SearchBudget {
                max_evaluations: 300,
                seed: 3,
                strategy,
            },
        )
        .unwrap();
        assert!(r.evaluations_used <= 300);
        assert_eq!(r.trace[0].1, hf, "{strategy}: first evaluation is the HF point");
        assert!(r.best_energy <= hf);
        assert!(exhaustive.best_energy <= r.best_energy);
        let check = grid_energy(&spec, &h, &r.best_point).unwrap();
        assert_eq!(check, r.best_energy);
    }
}

#[test]
fn hillclimb_matches_exhaustive_with_full_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut found = 0;
    for case in 0..100u64 {
        let n = rng.gen_range(2..=3);
        let terms: Vec<(f64, PauliString)> = (0..rng.gen_range(4..=10))
            .map(|_| {
                let ops: Vec<Pauli> = (0..n)
                    .map(|_| [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][rng.gen_range(0..4)])
                    .collect();
                (rng.gen_range(-1.0..1.0), PauliString::from_ops(&ops).unwrap())
            })
            .collect();
        let h = PauliHamiltonian::new(n, terms).unwrap();
        // k = 2n ≤ 6 parameters
        let spec = AnsatzSpec::new(n, rng.gen_range(0..=n), 1).unwrap();
        let full = 4usize.pow(spec.param_count() as u32);
        let search = |strategy| {
            cafqa_search(&spec, &h, &SearchBudget { max_evaluations: full, seed: case, strategy }).unwrap()
        };
        let exact = search(Strategy::Exhaustive).best_energy;
        if search(Strategy::MultistartHillclimb).best_energy <= exact + 1e-12 {
            found += 1;
        }
    }
    assert!(found >= 95, "hillclimb found the minimum on {found}/100");
}

#[test]
fn broker_and_direct_runs_agree() {
    let h = h3();
    let spec = AnsatzSpec::new(3, 1, 1).unwrap();
    let cafqa = cafqa_search(&spec, &h, &SearchBudget::default()).unwrap();
    let init = to_vqe_init(&cafqa);
    let problem = VqeProblem::new(h, spec, 100, 11).unwrap();
    let cfg = SpsaConfig {
        calibration_pairs: 3,
        run_budget: 30,
        seed: 11,
        ..SpsaConfig::default()
    };
    let backend = Arc::new(StatevectorBackend::<f64>::noiseless());

    let mut direct_energies = Vec::new();
    let direct = run_vqe(&problem, &init, &cfg, &mut DirectExecutor::new(backend.clone()), |r| {
        direct_energies.push(r.energy)
    })
    .unwrap();
    assert_eq!(direct_energies.len(), cfg.total_evaluations());
    assert_eq!(direct.circuits_issued, cfg.total_evaluations() * problem.groups.len());

    let dir = tempfile::tempdir().unwrap();
    let layout = SessionLayout::new(dir.path());
    layout.create().unwrap();
    let stop = Arc::new(AtomicBool::new(false));
    let host = {
        let (l, s) = (layout.clone(), Arc::clone(&stop));
        let opts = HostOptions {
            poll_interval: Duration::from_millis(2),
            ..HostOptions::default()
        };
        thread::spawn(move || host_run(&l, backend, &opts, &s))
    };
    let mut exec = BrokerExecutor::new(dir.path(), "test");
    exec.poll_interval = Duration::from_millis(2);
    exec.timeout = Some(Duration::from_secs(60));
    let mut broker_energies = Vec::new();
    let brokered = run_vqe(&problem, &init, &cfg, &mut exec, |r| broker_energies.push(r.energy)).unwrap();
    stop.store(true, Ordering::SeqCst);
    host.join().unwrap().unwrap();

    assert_eq!(broker_energies, direct_energies);
    assert_eq!(brokered.final_point, direct.final_point);
}
