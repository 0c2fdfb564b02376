use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use cafqa_core::ansatz::{AnsatzSpec, ParamPoint};
use cafqa_core::backend::{Backend, BackendKind, NoiseModel, StatevectorBackend};
use cafqa_core::broker::{host_run, request_resume, session_status, HostOptions, SessionLayout};
use cafqa_core::cafqa::{cafqa_search, search_report, to_vqe_init, SearchResult};
use cafqa_core::config::{InitKind, RunConfig};
use cafqa_core::kv::{fmt_float, write_atomic, KvDoc};
use cafqa_core::pauli::{parse_hamiltonian, PauliHamiltonian};
use cafqa_core::vqe::{
    circuit_count, run_vqe, write_angles_csv, BrokerExecutor, CircuitExecutor, ConvergenceCsv, DirectExecutor,
    ExecError, VqeError, VqeProblem,
};
use clap::{Args, Parser, Subcommand};
use log::{error, info};

#[derive(Parser)]
#[command(name = "cafqa-vqe", version, about = "Clifford-initialized VQE experiments and circuit broker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed and every seed derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// `sim`, `sim-noisy` or `broker:<session dir>`.
    #[arg(long)]
    backend: Option<BackendKind>,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    session: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Discrete Clifford-grid search for a starting point.
    Cafqa(RunArgs),
    /// Full VQE run: initialization, SPSA, CSV output.
    Vqe(RunArgs),
    /// Circuits issued by a batch of runs.
    Account {
        #[arg(long)]
        bases: u64,
        #[arg(long)]
        calibration_pairs: u64,
        #[arg(long)]
        iterations: u64,
        #[arg(long)]
        inits: u64,
    },
    /// Broker host: watch a session and execute its jobs.
    Host {
        #[arg(long)]
        session: PathBuf,
        /// `sim` or `sim-noisy`.
        #[arg(long, default_value = "sim")]
        backend: BackendKind,
        #[arg(long, default_value_t = 3)]
        max_in_flight: usize,
        #[arg(long, default_value_t = 3)]
        retry_limit: u32,
        /// TV distance that fails the return check; 1.0 disables it.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 200)]
        poll_ms: u64,
        /// Sleep before each execution.
        #[arg(long, default_value_t = 0)]
        exec_delay_ms: u64,
        /// Exit after this many idle seconds instead of running forever.
        #[arg(long)]
        idle_exit_s: Option<f64>,
        #[arg(long)]
        p1: Option<f64>,
        #[arg(long)]
        p2: Option<f64>,
        #[arg(long)]
        p_spam: Option<f64>,
    },
    /// Print the host's status snapshot for a session.
    Status(SessionArgs),
    /// Clear a blocked job so the host retries it.
    Resume {
        #[arg(long)]
        session: PathBuf,
        /// Accept the resumed job's next histogram without the return check.
        #[arg(long)]
        skip_criteria: bool,
    },
    /// List quarantined request files.
    QuarantineList(SessionArgs),
}

enum Failure {
    Usage(String),
    Config(String),
    Backend(String),
    Blocked(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Config(_) => 2,
            Failure::Backend(_) => 3,
            Failure::Blocked(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Config(m) | Failure::Backend(m) | Failure::Blocked(m) => m,
        }
    }
}

type Outcome = Result<(), Failure>;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn io_fail(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Backend(format!("{}: {e}", path.display()))
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&args.config).map_err(config_err)?;
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    if let Some(b) = &args.backend {
        cfg.backend = b.clone();
    }
    Ok(cfg)
}

fn load_hamiltonian(cfg: &RunConfig) -> Result<PauliHamiltonian<f64>, Failure> {
    let path = &cfg.hamiltonian_path;
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    parse_hamiltonian(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn grid_string(point: &[u8]) -> String {
    point.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
}

fn run_cafqa_search(
    cfg: &RunConfig,
    spec: &AnsatzSpec,
    h: &PauliHamiltonian<f64>,
) -> Result<SearchResult<f64>, Failure> {
    let result = cafqa_search(spec, h, &cfg.cafqa).map_err(config_err)?;
    fs::create_dir_all(&cfg.output).map_err(io_fail(&cfg.output))?;
    let report = cfg.output.join("cafqa_result.yaml");
    write_atomic(&report, search_report(&result, &cfg.cafqa).to_text().as_bytes()).map_err(io_fail(&report))?;
    println!("cafqa best energy: {:.12}", result.best_energy);
    println!("cafqa grid point: [{}]", grid_string(&result.best_point));
    println!("cafqa evaluations: {} of {}", result.evaluations_used, cfg.cafqa.max_evaluations);
    println!("report: {}", report.display());
    Ok(result)
}

fn cmd_cafqa(args: &RunArgs) -> Outcome {
    let cfg = load_config(args)?;
    let h = load_hamiltonian(&cfg)?;
    let spec = cfg.ansatz.build(h.n_qubits()).map_err(config_err)?;
    run_cafqa_search(&cfg, &spec, &h).map(|_| ())
}

fn make_backend(kind: &BackendKind, noise: NoiseModel) -> Result<Arc<dyn Backend>, Failure> {
    match kind {
        BackendKind::Sim => Ok(Arc::new(StatevectorBackend::<f64>::noiseless())),
        BackendKind::SimNoisy => Ok(Arc::new(StatevectorBackend::<f64>::noisy(noise))),
        BackendKind::Broker(_) => Err(Failure::Usage("the host needs a simulator backend, not a broker".into())),
    }
}

fn cmd_vqe(args: &RunArgs) -> Outcome {
    let cfg = load_config(args)?;
    let h = load_hamiltonian(&cfg)?;
    let spec = cfg.ansatz.build(h.n_qubits()).map_err(config_err)?;
    let (init, init_label, cafqa) = match &cfg.init {
        InitKind::Hf => (spec.hf_point::<f64>(), "hf", None),
        InitKind::Explicit(v) => {
            if v.len() != spec.param_count() {
                return Err(Failure::Config(format!(
                    "init.values has {} entries, ansatz needs {}",
                    v.len(),
                    spec.param_count()
                )));
            }
            (ParamPoint::new(v.clone()), "explicit", None)
        }
        InitKind::Cafqa => {
            let r = run_cafqa_search(&cfg, &spec, &h)?;
            (to_vqe_init(&r), "cafqa", Some(r))
        }
    };
    let problem = VqeProblem::new(h, spec, cfg.shots, cfg.seed).map_err(config_err)?;
    fs::create_dir_all(&cfg.output).map_err(io_fail(&cfg.output))?;
    let csv_path = cfg.output.join("convergence.csv");
    let mut csv =
        ConvergenceCsv::create(&csv_path, problem.ansatz.param_count(), cfg.record_wallclock).map_err(io_fail(&csv_path))?;

    let mut executor: Box<dyn CircuitExecutor> = match &cfg.backend {
        BackendKind::Broker(dir) => {
            let mut b = BrokerExecutor::new(dir, format!("{init_label}-seed{}", cfg.seed));
            b.poll_interval = cfg.broker_poll;
            b.timeout = cfg.broker_timeout;
            Box::new(b)
        }
        other => Box::new(DirectExecutor::new(make_backend(other, cfg.noise)?)),
    };
    info!(
        "{} measurement groups, {} parameters, {} evaluations planned",
        problem.groups.len(),
        problem.ansatz.param_count(),
        cfg.spsa.total_evaluations()
    );
    let mut csv_error = None;
    let result = run_vqe(&problem, &init, &cfg.spsa, executor.as_mut(), |r| {
        if csv_error.is_none() {
            csv_error = csv.write(r).err();
        }
    });
    if let Some(e) = csv_error {
        return Err(Failure::Backend(format!("{}: {e}", csv_path.display())));
    }

    let init_energy = problem.exact_energy(&init.values).map_err(config_err)?;
    let mut summary = KvDoc::new();
    summary
        .set("init", init_label)
        .set("init_energy", fmt_float(init_energy))
        .set("backend", &cfg.backend)
        .set("seed", cfg.seed)
        .set("shots", cfg.shots)
        .set("measurement_groups", problem.groups.len());
    if let Some(r) = &cafqa {
        summary.set("cafqa_energy", fmt_float(r.best_energy));
    }
    let summary_path = cfg.output.join("summary.yaml");
    let angles_path = cfg.output.join("angles.csv");
    let n_params = problem.ansatz.param_count();
    match result {
        Ok(run) => {
            write_angles_csv(&angles_path, &run.trace, n_params).map_err(io_fail(&angles_path))?;
            summary
                .set("status", "complete")
                .set("evaluations", run.trace.evaluations.len())
                .set("circuits_issued", run.circuits_issued)
                .set("learning_rate", fmt_float(run.trace.learning_rate.unwrap_or(f64::NAN)))
                .set("final_energy", fmt_float(run.final_energy));
            for (i, v) in run.final_point.values.iter().enumerate() {
                summary.set(&format!("final.theta_{i}"), fmt_float(*v));
            }
            write_atomic(&summary_path, summary.to_text().as_bytes()).map_err(io_fail(&summary_path))?;
            println!("init ({init_label}) energy: {init_energy:.12}");
            println!("final energy (exact at averaged point): {:.12}", run.final_energy);
            println!("evaluations: {}, circuits: {}", run.trace.evaluations.len(), run.circuits_issued);
            println!("convergence: {}", csv_path.display());
            Ok(())
        }
        Err(VqeError::Aborted { error, partial }) => {
            write_angles_csv(&angles_path, &partial, n_params).map_err(io_fail(&angles_path))?;
            summary
                .set("status", "aborted")
                .set("evaluations", partial.evaluations.len())
                .set("error", error.to_string().replace('\n', " "));
            write_atomic(&summary_path, summary.to_text().as_bytes()).map_err(io_fail(&summary_path))?;
            let msg = format!(
                "run aborted after {} evaluations: {error}; partial results in {}",
                partial.evaluations.len(),
                csv_path.display()
            );
            match error {
                ExecError::Blocked(_) => Err(Failure::Blocked(msg)),
                _ => Err(Failure::Backend(msg)),
            }
        }
        Err(VqeError::Setup(m)) => Err(Failure::Config(m)),
        Err(e) => Err(Failure::Backend(e.to_string())),
    }
}

fn cmd_host(
    session: &Path,
    backend: &BackendKind,
    noise: NoiseModel,
    opts: HostOptions,
) -> Outcome {
    let backend = make_backend(backend, noise)?;
    let layout = SessionLayout::new(session);
    info!("host watching {}", layout.dir1().display());
    let shutdown = AtomicBool::new(false);
    let summary = host_run(&layout, backend, &opts, &shutdown).map_err(|e| Failure::Backend(e.to_string()))?;
    println!(
        "host stopped: {} completed, {} executions this run, {} quarantined",
        summary.completed, summary.executions, summary.quarantined
    );
    match summary.blocked {
        Some(id) => Err(Failure::Blocked(format!("job {id} is blocked"))),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Cafqa(args) => cmd_cafqa(&args),
        Command::Vqe(args) => cmd_vqe(&args),
        Command::Account {
            bases,
            calibration_pairs,
            iterations,
            inits,
        } => {
            if bases == 0 || iterations == 0 || inits == 0 {
                return Err(Failure::Usage("bases, iterations and inits must be positive".into()));
            }
            println!("{}", circuit_count(bases, calibration_pairs, iterations, inits));
            Ok(())
        }
        Command::Host {
            session,
            backend,
            max_in_flight,
            retry_limit,
            threshold,
            poll_ms,
            exec_delay_ms,
            idle_exit_s,
            p1,
            p2,
            p_spam,
        } => {
            let d = NoiseModel::default();
            let noise = NoiseModel::new(p1.unwrap_or(d.p1), p2.unwrap_or(d.p2), p_spam.unwrap_or(d.p_spam))
                .map_err(|e| Failure::Usage(e.to_string()))?;
            if max_in_flight == 0 {
                return Err(Failure::Usage("--max-in-flight must be at least 1".into()));
            }
            let opts = HostOptions {
                max_in_flight,
                retry_limit,
                deviation_threshold: threshold,
                poll_interval: Duration::from_millis(poll_ms.max(1)),
                exec_delay: Duration::from_millis(exec_delay_ms),
                idle_exit: idle_exit_s.map(Duration::from_secs_f64),
            };
            cmd_host(&session, &backend, noise, opts)
        }
        Command::Status(s) => {
            let text = session_status(&SessionLayout::new(&s.session)).map_err(|e| Failure::Backend(e.to_string()))?;
            print!("{text}");
            Ok(())
        }
        Command::Resume { session, skip_criteria } => {
            let layout = SessionLayout::new(&session);
            if !layout.root.is_dir() {
                return Err(Failure::Usage(format!("{} is not a session directory", session.display())));
            }
            request_resume(&layout, skip_criteria).map_err(|e| Failure::Backend(e.to_string()))?;
            println!("resume requested{}", if skip_criteria { " (return criteria skipped)" } else { "" });
            Ok(())
        }
        Command::QuarantineList(s) => {
            let list = SessionLayout::new(&s.session)
                .quarantine_list()
                .map_err(|e| Failure::Backend(e.to_string()))?;
            for (name, reason) in list {
                println!("{name}: {reason}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            error!("{}", f.message());
            ExitCode::from(f.code())
        }
    }
}
