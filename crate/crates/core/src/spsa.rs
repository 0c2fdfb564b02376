//! Simultaneous perturbation stochastic approximation with a calibration
//! phase and trailing-average finalization.
//!
//! A run consumes exactly `2·calibration_pairs + 2·run_budget` evaluations:
//!
//! 1. Calibration: `calibration_pairs` Rademacher perturbations `±c0·Δ`
//!    around the start, evaluated `+` then `−`. The learning rate is
//!    `a0 = target_first_step · c0 / mean(|E+ − E−| / 2)`, or
//!    `target_first_step` if every difference is zero.
//! 2. Iteration `j`: `c_j = c0 / (j+1)^γ`, `a_j = a0 / (j+1+A)^α` with
//!    `A = 0.1·run_budget`; `θ± = θ ± c_j·Δ_j`;
//!    `θ ← θ − a_j · (E+ − E−) / (2c_j) · Δ_j`.
//! 3. Final point: the mean of the 60 vectors `θ+_j, θ−_j` from the last 30
//!    iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ansatz::ParamPoint;
use crate::scalar::Real;

/// Iterations averaged by [`finalize`].
pub const FINAL_WINDOW: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct SpsaConfig<T: Real> {
    pub calibration_pairs: usize,
    pub run_budget: usize,
    pub c0: T,
    pub alpha: T,
    pub gamma: T,
    pub target_first_step: T,
    pub seed: u64,
}

impl<T: Real> Default for SpsaConfig<T> {
    fn default() -> Self {
        Self {
            calibration_pairs: 25,
            run_budget: 400,
            c0: T::of(0.1),
            alpha: T::of(0.602),
            gamma: T::of(0.101),
            target_first_step: T::of(0.1),
            seed: 0,
        }
    }
}

impl<T: Real> SpsaConfig<T> {
    pub fn validate(&self) -> Result<(), String> {
        if self.calibration_pairs == 0 {
            return Err("calibration_pairs must be positive".into());
        }
        if self.run_budget < FINAL_WINDOW {
            return Err(format!("run_budget must be at least {FINAL_WINDOW}"));
        }
        for (name, v) in [
            ("c0", self.c0),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("target_first_step", self.target_first_step),
        ] {
            if v <= T::zero() || !v.is_finite() {
                return Err(format!("{name} must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Evaluations a full run performs.
    pub fn total_evaluations(&self) -> usize {
        2 * self.calibration_pairs + 2 * self.run_budget
    }
}

/// One energy evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord<T: Real> {
    pub index: usize,
    pub theta: Vec<T>,
    pub energy: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpsaTrace<T: Real> {
    pub evaluations: Vec<EvalRecord<T>>,
    /// `(θ+_j, θ−_j)` per completed iteration.
    pub iterate_pairs: Vec<(Vec<T>, Vec<T>)>,
    /// `θ_j` at the start of each completed iteration.
    pub iterates: Vec<Vec<T>>,
    pub learning_rate: Option<T>,
    pub final_point: Option<ParamPoint<T>>,
}

impl<T: Real> Default for SpsaTrace<T> {
    fn default() -> Self {
        Self {
            evaluations: Vec::new(),
            iterate_pairs: Vec::new(),
            iterates: Vec::new(),
            learning_rate: None,
            final_point: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SpsaError<E: std::error::Error + 'static> {
    #[error("invalid SPSA configuration: {0}")]
    Config(String),
    #[error("evaluation {index} failed: {source}")]
    Evaluator {
        index: usize,
        #[source]
        source: E,
    },
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct SpsaAbort<T: Real, E: std::error::Error + 'static> {
    #[source]
    pub error: SpsaError<E>,
    pub partial: SpsaTrace<T>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("finalization needs at least {FINAL_WINDOW} iterations, trace has {0}")]
pub struct InsufficientIterations(pub usize);

struct Runner<'a, T: Real, E, F, O> {
    evaluate: F,
    observer: O,
    trace: SpsaTrace<T>,
    rng: ChaCha8Rng,
    _err: std::marker::PhantomData<&'a E>,
}

impl<'a, T, E, F, O> Runner<'a, T, E, F, O>
where
    T: Real,
    E: std::error::Error + 'static,
    F: FnMut(&[T]) -> Result<T, E>,
    O: FnMut(&EvalRecord<T>),
{
    fn eval(&mut self, theta: Vec<T>) -> Result<T, SpsaError<E>> {
        let index = self.trace.evaluations.len();
        let energy = (self.evaluate)(&theta).map_err(|source| SpsaError::Evaluator { index, source })?;
        let record = EvalRecord { index, theta, energy };
        (self.observer)(&record);
        self.trace.evaluations.push(record);
        Ok(energy)
    }

    fn rademacher(&mut self, dim: usize) -> Vec<T> {
        (0..dim)
            .map(|_| if self.rng.gen::<bool>() { T::one() } else { -T::one() })
            .collect()
    }

    fn calibrate(&mut self, init: &[T], cfg: &SpsaConfig<T>) -> Result<T, SpsaError<E>> {
        let mut sum = T::zero();
        for _ in 0..cfg.calibration_pairs {
            let delta = self.rademacher(init.len());
            let plus: Vec<T> = init.iter().zip(&delta).map(|(t, d)| *t + cfg.c0 * *d).collect();
            let minus: Vec<T> = init.iter().zip(&delta).map(|(t, d)| *t - cfg.c0 * *d).collect();
            let e_plus = self.eval(plus)?;
            let e_minus = self.eval(minus)?;
            sum = sum + (e_plus - e_minus).abs() / T::of(2.0);
        }
        let mean = sum / T::of(cfg.calibration_pairs as f64);
        let a0 = if mean > T::zero() {
            cfg.target_first_step * cfg.c0 / mean
        } else {
            cfg.target_first_step
        };
        self.trace.learning_rate = Some(a0);
        Ok(a0)
    }

    fn iterate(&mut self, init: &[T], a0: T, cfg: &SpsaConfig<T>) -> Result<(), SpsaError<E>> {
        let big_a = T::of(0.1 * cfg.run_budget as f64);
        let two = T::of(2.0);
        let mut theta = init.to_vec();
        for j in 0..cfg.run_budget {
            let k = T::of((j + 1) as f64);
            let c_j = cfg.c0 / k.powf(cfg.gamma);
            let a_j = a0 / (k + big_a).powf(cfg.alpha);
            let delta = self.rademacher(theta.len());
            let plus: Vec<T> = theta.iter().zip(&delta).map(|(t, d)| *t + c_j * *d).collect();
            let minus: Vec<T> = theta.iter().zip(&delta).map(|(t, d)| *t - c_j * *d).collect();
            let e_plus = self.eval(plus.clone())?;
            let e_minus = self.eval(minus.clone())?;
            let scale = (e_plus - e_minus) / (two * c_j);
            self.trace.iterates.push(theta.clone());
            self.trace.iterate_pairs.push((plus, minus));
            for (t, d) in theta.iter_mut().zip(&delta) {
                *t = *t - a_j * scale * *d;
            }
        }
        Ok(())
    }
}

/// Learning-rate calibration alone; consumes `2·calibration_pairs` evaluations.
pub fn calibrate<T, E, F>(init: &ParamPoint<T>, evaluate: F, cfg: &SpsaConfig<T>) -> Result<T, SpsaError<E>>
where
    T: Real,
    E: std::error::Error + 'static,
    F: FnMut(&[T]) -> Result<T, E>,
{
    cfg.validate().map_err(SpsaError::Config)?;
    let mut runner = Runner {
        evaluate,
        observer: |_: &EvalRecord<T>| {},
        trace: SpsaTrace::default(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        _err: std::marker::PhantomData,
    };
    runner.calibrate(&init.values, cfg)
}

pub fn run<T, E, F>(init: &ParamPoint<T>, evaluate: F, cfg: &SpsaConfig<T>) -> Result<SpsaTrace<T>, SpsaAbort<T, E>>
where
    T: Real,
    E: std::error::Error + 'static,
    F: FnMut(&[T]) -> Result<T, E>,
{
    run_observed(init, evaluate, cfg, |_| {})
}

/// Full calibrate-iterate-finalize run; `observer` sees every evaluation as
/// it happens.
pub fn run_observed<T, E, F, O>(
    init: &ParamPoint<T>,
    evaluate: F,
    cfg: &SpsaConfig<T>,
    observer: O,
) -> Result<SpsaTrace<T>, SpsaAbort<T, E>>
where
    T: Real,
    E: std::error::Error + 'static,
    F: FnMut(&[T]) -> Result<T, E>,
    O: FnMut(&EvalRecord<T>),
{
    if let Err(msg) = cfg.validate() {
        return Err(SpsaAbort {
            error: SpsaError::Config(msg),
            partial: SpsaTrace::default(),
        });
    }
    let mut runner = Runner {
        evaluate,
        observer,
        trace: SpsaTrace::default(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        _err: std::marker::PhantomData,
    };
    let result = runner
        .calibrate(&init.values, cfg)
        .and_then(|a0| runner.iterate(&init.values, a0, cfg));
    let mut trace = runner.trace;
    match result {
        Ok(()) => {
            trace.final_point = Some(finalize(&trace).expect("run_budget validated"));
            Ok(trace)
        }
        Err(error) => Err(SpsaAbort { error, partial: trace }),
    }
}

/// Mean of `θ+_j` and `θ−_j` over the last 30 iterations.
pub fn finalize<T: Real>(trace: &SpsaTrace<T>) -> Result<ParamPoint<T>, InsufficientIterations> {
    let n = trace.iterate_pairs.len();
    if n < FINAL_WINDOW {
        return Err(InsufficientIterations(n));
    }
    let dim = trace.iterate_pairs[0].0.len();
    let mut sum = vec![T::zero(); dim];
    for (plus, minus) in &trace.iterate_pairs[n - FINAL_WINDOW..] {
        for i in 0..dim {
            sum[i] = sum[i] + plus[i] + minus[i];
        }
    }
    let count = T::of(2.0 * FINAL_WINDOW as f64);
    Ok(ParamPoint::new(sum.into_iter().map(|s| s / count).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[derive(Debug, Error)]
    #[error("device offline")]
    struct Offline;

    fn cfg(budget: usize, seed: u64) -> SpsaConfig<f64> {
        SpsaConfig {
            run_budget: budget,
            seed,
            ..SpsaConfig::default()
        }
    }

    #[test]
    fn calibration_uses_fifty_evaluations() {
        let mut calls = 0;
        let c = cfg(30, 1);
        calibrate(
            &ParamPoint::new(vec![0.3, 0.1]),
            |t: &[f64]| -> Result<f64, Infallible> {
                calls += 1;
                Ok(t[0].sin())
            },
            &c,
        )
        .unwrap();
        assert_eq!(calls, 50);
    }

    #[test]
    fn calibration_on_quadratic() {
        // E = θ², Δ = ±1: |E+ − E−|/2 = 2·c0·θ, so a0 = target/(2θ) at θ = 1.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..50 {
            let c = cfg(30, seed);
            let expected = c.target_first_step * c.c0 / (2.0 * c.c0 * 1.0);
            let mut noise = ChaCha8Rng::seed_from_u64(rng.gen());
            let a0 = calibrate(
                &ParamPoint::new(vec![1.0]),
                |t: &[f64]| -> Result<f64, Infallible> { Ok(t[0] * t[0] + noise.gen_range(-0.005..0.005)) },
                &c,
            )
            .unwrap();
            assert!((a0 - expected).abs() <= 0.2 * expected, "seed {seed}: {a0} vs {expected}");
        }
    }

    #[test]
    fn constant_energy_falls_back() {
        let c = cfg(30, 0);
        let a0 = calibrate(&ParamPoint::new(vec![0.0; 3]), |_: &[f64]| -> Result<f64, Infallible> { Ok(2.5) }, &c)
            .unwrap();
        assert_eq!(a0, c.target_first_step);
    }

    #[test]
    fn converges_on_convex_bowl() {
        let c = SpsaConfig {
            target_first_step: 0.5,
            ..cfg(200, 3)
        };
        let trace = run(
            &ParamPoint::new(vec![1.0, 1.0]),
            |t: &[f64]| -> Result<f64, Infallible> { Ok(t.iter().map(|x| x * x).sum()) },
            &c,
        )
        .unwrap();
        let f = trace.final_point.unwrap();
        let energy: f64 = f.values.iter().map(|x| x * x).sum();
        assert!(energy < 1e-2, "{energy}");
    }

    #[test]
    fn evaluation_accounting() {
        for budget in [30, 57, 400] {
            let c = cfg(budget, 9);
            let mut calls = 0;
            let trace = run(
                &ParamPoint::new(vec![0.2; 4]),
                |t: &[f64]| -> Result<f64, Infallible> {
                    calls += 1;
                    Ok(t.iter().map(|x| x.cos()).sum())
                },
                &c,
            )
            .unwrap();
            assert_eq!(calls, 50 + 2 * budget);
            assert_eq!(trace.evaluations.len(), c.total_evaluations());
            assert_eq!(trace.iterate_pairs.len(), budget);
        }
        assert_eq!(cfg(400, 0).total_evaluations(), 850);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let f = |t: &[f64]| -> Result<f64, Infallible> { Ok((t[0] - 0.4).powi(2) + t[1].sin()) };
        let a = run(&ParamPoint::new(vec![0.0, 0.0]), f, &cfg(40, 12)).unwrap();
        let b = run(&ParamPoint::new(vec![0.0, 0.0]), f, &cfg(40, 12)).unwrap();
        assert_eq!(a, b);
        let c = run(&ParamPoint::new(vec![0.0, 0.0]), f, &cfg(40, 13)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn finalize_constant_pairs() {
        let v = vec![0.25, -1.5];
        let trace = SpsaTrace {
            iterate_pairs: vec![(v.clone(), v.clone()); 45],
            ..SpsaTrace::default()
        };
        assert_eq!(finalize(&trace).unwrap().values, v);
    }

    #[test]
    fn finalize_cancels_perturbations() {
        let trace = run(
            &ParamPoint::new(vec![0.7, -0.2, 1.1]),
            |t: &[f64]| -> Result<f64, Infallible> { Ok(t[0].sin() * t[1].cos() + t[2]) },
            &cfg(64, 4),
        )
        .unwrap();
        let f = trace.final_point.unwrap();
        let n = trace.iterates.len();
        for i in 0..3 {
            let mean: f64 = trace.iterates[n - 30..].iter().map(|t| t[i]).sum::<f64>() / 30.0;
            assert!((f.values[i] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn finalize_needs_thirty_iterations() {
        let trace = SpsaTrace::<f64> {
            iterate_pairs: vec![(vec![0.0], vec![0.0]); 29],
            ..SpsaTrace::default()
        };
        assert_eq!(finalize(&trace), Err(InsufficientIterations(29)));
    }

    #[test]
    fn evaluator_failure_keeps_partial_trace() {
        let mut calls = 0;
        let abort = run(
            &ParamPoint::new(vec![0.0]),
            |_: &[f64]| {
                calls += 1;
                if calls > 60 {
                    Err(Offline)
                } else {
                    Ok(1.0)
                }
            },
            &cfg(30, 0),
        )
        .unwrap_err();
        assert!(matches!(abort.error, SpsaError::Evaluator { index: 60, .. }));
        assert_eq!(abort.partial.evaluations.len(), 60);
        assert_eq!(abort.partial.iterate_pairs.len(), 5);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = cfg(29, 0);
        let err = run(&ParamPoint::new(vec![0.0]), |_: &[f64]| -> Result<f64, Infallible> { Ok(0.0) }, &bad)
            .unwrap_err();
        assert!(matches!(err.error, SpsaError::Config(_)));
    }

    #[test]
    fn single_precision_run() {
        let c = SpsaConfig::<f32> {
            run_budget: 100,
            target_first_step: 0.5,
            ..SpsaConfig::default()
        };
        let trace = run(
            &ParamPoint::new(vec![1.0f32]),
            |t: &[f32]| -> Result<f32, Infallible> { Ok(t[0] * t[0]) },
            &c,
        )
        .unwrap();
        assert!(trace.final_point.unwrap().values[0].abs() < 0.2);
    }
}
