//! Run configuration in the flat key-value format.
//!
//! ```text
//! hamiltonian: h2.ham            # relative to the config file
//! ansatz.layers: 1
//! ansatz.occupied: 1
//! ansatz.axes: YZ
//! ansatz.entangler: linear       # or pairs such as 0-1,1-2
//! init: cafqa                    # hf | cafqa | explicit
//! init.values: 0.1,0.2           # explicit only, radians
//! cafqa.budget: 1000
//! cafqa.strategy: multistart_hillclimb
//! spsa.calibration_pairs: 25
//! spsa.budget: 400
//! backend: sim                   # sim | sim-noisy | broker:<session dir>
//! shots: 300
//! output: out
//! seed: 7
//! ```
//!
//! Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::ansatz::{linear_chain, AnsatzSpec};
use crate::backend::{BackendKind, NoiseModel};
use crate::cafqa::{SearchBudget, Strategy};
use crate::circuit::Axis;
use crate::kv::{KvDoc, KvError};
use crate::spsa::SpsaConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitKind {
    Hf,
    Cafqa,
    Explicit(Vec<f64>),
}

/// Ansatz settings; the qubit count comes from the Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzConfig {
    pub layers: usize,
    pub occupied: usize,
    pub axes: Vec<Axis>,
    /// `None` means a linear chain.
    pub entangler: Option<Vec<(usize, usize)>>,
    pub final_rotation_layer: bool,
}

impl AnsatzConfig {
    pub fn build(&self, n_qubits: usize) -> Result<AnsatzSpec, ConfigError> {
        let invalid = |e: crate::ansatz::AnsatzError| ConfigError::Invalid(e.to_string());
        AnsatzSpec::new(n_qubits, self.occupied, self.layers)
            .and_then(|s| s.with_axes(self.axes.clone()))
            .and_then(|s| s.with_entangler(self.entangler.clone().unwrap_or_else(|| linear_chain(n_qubits))))
            .map(|s| s.with_final_rotation_layer(self.final_rotation_layer))
            .map_err(invalid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hamiltonian_path: PathBuf,
    pub ansatz: AnsatzConfig,
    pub init: InitKind,
    pub cafqa: SearchBudget,
    pub spsa: SpsaConfig<f64>,
    pub backend: BackendKind,
    pub noise: NoiseModel,
    pub shots: u64,
    pub output: PathBuf,
    pub seed: u64,
    /// Write elapsed milliseconds in the CSV; off gives byte-reproducible files.
    pub record_wallclock: bool,
    pub broker_poll: Duration,
    pub broker_timeout: Option<Duration>,
}

const KNOWN_KEYS: &[&str] = &[
    "hamiltonian",
    "ansatz.layers",
    "ansatz.occupied",
    "ansatz.axes",
    "ansatz.entangler",
    "ansatz.final_rotation_layer",
    "init",
    "init.values",
    "cafqa.budget",
    "cafqa.strategy",
    "cafqa.seed",
    "spsa.calibration_pairs",
    "spsa.budget",
    "spsa.c0",
    "spsa.alpha",
    "spsa.gamma",
    "spsa.target_first_step",
    "spsa.seed",
    "backend",
    "noise.p1",
    "noise.p2",
    "noise.p_spam",
    "shots",
    "output",
    "seed",
    "record_wallclock",
    "broker.poll_ms",
    "broker.timeout_s",
];

fn parse_axes(s: &str) -> Result<Vec<Axis>, ConfigError> {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| match c.to_ascii_uppercase() {
            'X' => Ok(Axis::X),
            'Y' => Ok(Axis::Y),
            'Z' => Ok(Axis::Z),
            _ => Err(ConfigError::Invalid(format!("ansatz.axes: unknown axis `{c}`"))),
        })
        .collect()
}

fn parse_pairs(s: &str) -> Result<Vec<(usize, usize)>, ConfigError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (a, b) = p
                .split_once('-')
                .ok_or_else(|| ConfigError::Invalid(format!("ansatz.entangler: bad pair `{p}`")))?;
            let parse = |x: &str| {
                x.trim()
                    .parse::<usize>()
                    .map_err(|e| ConfigError::Invalid(format!("ansatz.entangler: {e}")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

fn parse_values(s: &str) -> Result<Vec<f64>, ConfigError> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .map_err(|e| ConfigError::Invalid(format!("init.values: `{v}`: {e}")))
        })
        .collect()
}

impl RunConfig {
    /// Reads a config; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_kv(&KvDoc::parse(&text)?, base)
    }

    pub fn from_kv(d: &KvDoc, base: &Path) -> Result<Self, ConfigError> {
        if let Some(k) = d.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(ConfigError::Invalid(format!("unknown key `{k}`")));
        }
        let seed: u64 = d.parse_value("seed")?.unwrap_or(0);
        let init = match d.get("init").unwrap_or("hf") {
            "hf" => InitKind::Hf,
            "cafqa" => InitKind::Cafqa,
            "explicit" => InitKind::Explicit(parse_values(d.require("init.values")?)?),
            other => return Err(ConfigError::Invalid(format!("init: expected hf, cafqa or explicit, got `{other}`"))),
        };
        let spsa_default = SpsaConfig::<f64>::default();
        let spsa = SpsaConfig {
            calibration_pairs: d.parse_value("spsa.calibration_pairs")?.unwrap_or(spsa_default.calibration_pairs),
            run_budget: d.parse_value("spsa.budget")?.unwrap_or(spsa_default.run_budget),
            c0: d.parse_value("spsa.c0")?.unwrap_or(spsa_default.c0),
            alpha: d.parse_value("spsa.alpha")?.unwrap_or(spsa_default.alpha),
            gamma: d.parse_value("spsa.gamma")?.unwrap_or(spsa_default.gamma),
            target_first_step: d.parse_value("spsa.target_first_step")?.unwrap_or(spsa_default.target_first_step),
            seed: d.parse_value("spsa.seed")?.unwrap_or(seed),
        };
        spsa.validate().map_err(ConfigError::Invalid)?;
        let cafqa_default = SearchBudget::default();
        let cafqa = SearchBudget {
            max_evaluations: d.parse_value("cafqa.budget")?.unwrap_or(cafqa_default.max_evaluations),
            seed: d.parse_value("cafqa.seed")?.unwrap_or(seed),
            strategy: d.parse_value::<Strategy>("cafqa.strategy")?.unwrap_or(cafqa_default.strategy),
        };
        let noise_default = NoiseModel::default();
        let noise = NoiseModel::new(
            d.parse_value("noise.p1")?.unwrap_or(noise_default.p1),
            d.parse_value("noise.p2")?.unwrap_or(noise_default.p2),
            d.parse_value("noise.p_spam")?.unwrap_or(noise_default.p_spam),
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let shots: u64 = d.parse_value("shots")?.unwrap_or(300);
        if shots == 0 {
            return Err(ConfigError::Invalid("shots must be at least 1".into()));
        }
        let hamiltonian_path = base.join(d.require("hamiltonian")?);
        if !hamiltonian_path.is_file() {
            return Err(ConfigError::Invalid(format!(
                "hamiltonian file {} does not exist",
                hamiltonian_path.display()
            )));
        }
        let mut backend: BackendKind = d.parse_value("backend")?.unwrap_or(BackendKind::Sim);
        if let BackendKind::Broker(dir) = &backend {
            backend = BackendKind::Broker(base.join(dir));
        }
        Ok(Self {
            hamiltonian_path,
            ansatz: AnsatzConfig {
                layers: d.parse_value("ansatz.layers")?.unwrap_or(1),
                occupied: d.parse_value("ansatz.occupied")?.unwrap_or(0),
                axes: d.get("ansatz.axes").map(parse_axes).transpose()?.unwrap_or(vec![Axis::Y, Axis::Z]),
                entangler: match d.get("ansatz.entangler") {
                    None | Some("linear") => None,
                    Some(p) => Some(parse_pairs(p)?),
                },
                final_rotation_layer: d.parse_value("ansatz.final_rotation_layer")?.unwrap_or(false),
            },
            init,
            cafqa,
            spsa,
            backend,
            noise,
            shots,
            output: base.join(d.get("output").unwrap_or("out")),
            seed,
            record_wallclock: d.parse_value("record_wallclock")?.unwrap_or(true),
            broker_poll: Duration::from_millis(d.parse_value("broker.poll_ms")?.unwrap_or(200)),
            broker_timeout: d.parse_value::<f64>("broker.timeout_s")?.map(Duration::from_secs_f64),
        })
    }

    /// Replaces the base seed and every seed derived from it.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.spsa.seed = seed;
        self.cafqa.seed = seed;
    }
}
