//! Configuration files and the commands behind the `shootfit` binary:
//! dataset generation, training, evaluation and hyperparameter sweeps.
//!
//! Everything is driven by one JSON config; CLI flags are overrides of
//! config keys. Each run echoes its fully resolved config into the
//! output directory so results can be reproduced bit-identically.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    load_checkpoint, mlp_new, save_checkpoint, MlpParams, RegKind, RegSpec,
};
use crate::ode::integrate_adaptive;
use crate::optim::{
    auglag_solve, lbfgs_minimize, AdamConfig, AdamState, AugLagOptions, ConstrainedProgram,
    ConstraintHandler, InnerSolver, LbfgsOptions, PenaltyKind, TrainingLog,
};
use crate::problems::{
    gen_spiral, gen_surrogate, load_tanks, ControlSignal, SpiralField, SpiralSpec,
    SurrogateSpec, TanksField, TanksSpec,
};
use crate::shooting::{
    init_decision, make_grid, rmse, write_defects_csv, write_trajectory_csv, InitStrategy,
    ParamField, ShootingProblem, TimeSeries,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemTag {
    Spiral,
    Tanks,
    TanksSurrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMethod {
    Single,
    Multiple,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConstraintCfg {
    Auglag,
    Penalty { kind: PenaltyKind, rho: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InnerCfg {
    Lbfgs {
        #[serde(default = "default_inner_iters")]
        max_iters: usize,
        #[serde(default = "default_grad_tol")]
        grad_tol: f64,
        #[serde(default = "default_memory")]
        memory: usize,
    },
    Adam {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_adam_iters")]
        iters: usize,
    },
    Nadam {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_adam_iters")]
        iters: usize,
    },
}

fn default_inner_iters() -> usize {
    200
}
fn default_grad_tol() -> f64 {
    1e-6
}
fn default_memory() -> usize {
    10
}
fn default_alpha() -> f64 {
    0.001
}
fn default_adam_iters() -> usize {
    2000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugLagCfg {
    pub rho_init: f64,
    pub gamma: f64,
    pub decrease_ratio: f64,
    pub constraint_tol: f64,
    pub max_outer: usize,
}

impl Default for AugLagCfg {
    fn default() -> Self {
        let o = AugLagOptions::default();
        AugLagCfg {
            rho_init: o.rho_init,
            gamma: o.gamma,
            decrease_ratio: o.decrease_ratio,
            constraint_tol: o.constraint_tol,
            max_outer: o.max_outer,
        }
    }
}

impl AugLagCfg {
    fn to_options(&self) -> AugLagOptions {
        AugLagOptions {
            rho_init: self.rho_init,
            gamma: self.gamma,
            decrease_ratio: self.decrease_ratio,
            constraint_tol: self.constraint_tol,
            max_outer: self.max_outer,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub problem: ProblemTag,
    /// None picks the per-problem default shape.
    pub layer_sizes: Option<Vec<usize>>,
    pub use_bias: bool,
    pub reg_kind: Option<RegKind>,
    pub reg_weight: Option<f64>,
    pub n_intervals: Option<usize>,
    pub init_strategy: Option<InitStrategy>,
    pub pin_s1: bool,
    pub method: TrainMethod,
    pub constraint: ConstraintCfg,
    pub inner: InnerCfg,
    pub auglag: AugLagCfg,
    pub step_h: Option<f64>,
    pub seed: u64,
    pub noise_sigma: f64,
    /// Spiral dataset CSV (to write in gen-spiral, to read in train)
    /// or the tanks benchmark CSV.
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub tau_d: Option<f64>,
    pub tau_i: Option<f64>,
    pub split: f64,
    pub surrogate_samples: usize,
    pub surrogate_noise_sigma: f64,
    /// Console echo cadence for the training log (records).
    pub echo_every: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let tanks = TanksSpec::default();
        ExperimentConfig {
            problem: ProblemTag::Spiral,
            layer_sizes: None,
            use_bias: false,
            reg_kind: None,
            reg_weight: None,
            n_intervals: None,
            init_strategy: None,
            pin_s1: false,
            method: TrainMethod::Multiple,
            constraint: ConstraintCfg::Auglag,
            inner: InnerCfg::Lbfgs {
                max_iters: default_inner_iters(),
                grad_tol: default_grad_tol(),
                memory: default_memory(),
            },
            auglag: AugLagCfg::default(),
            step_h: None,
            seed: 0,
            noise_sigma: 0.2,
            dataset: None,
            out_dir: PathBuf::from("out"),
            tau_d: None,
            tau_i: None,
            split: tanks.split,
            surrogate_samples: 64,
            surrogate_noise_sigma: 0.1,
            echo_every: Some(50),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Fill every per-problem default so the echoed config is complete.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let tanks = TanksSpec::default();
        let (sizes, reg_kind, reg_weight, n_iv, init, h, tau_d, tau_i) = match c.problem {
            ProblemTag::Spiral => (
                vec![2, 16, 2],
                RegKind::SpectralSum,
                1.0,
                20,
                InitStrategy::ReplicateX0,
                0.05,
                tanks.tau_d,
                tanks.tau_i,
            ),
            ProblemTag::Tanks => (
                vec![5, 64, 1],
                RegKind::L2,
                tanks.rho_l2,
                16,
                InitStrategy::DataAtBoundaries,
                1.0,
                tanks.tau_d,
                tanks.tau_i,
            ),
            // shorter lags and a narrower net: the surrogate span is
            // 252 s and its delayed response is only 8 s
            ProblemTag::TanksSurrogate => (
                vec![5, 16, 1],
                RegKind::L2,
                1e-4,
                16,
                InitStrategy::DataAtBoundaries,
                1.0,
                8.0,
                16.0,
            ),
        };
        c.layer_sizes.get_or_insert(sizes);
        c.reg_kind.get_or_insert(reg_kind);
        c.reg_weight.get_or_insert(reg_weight);
        c.n_intervals.get_or_insert(n_iv);
        c.init_strategy.get_or_insert(init);
        c.step_h.get_or_insert(h);
        c.tau_d.get_or_insert(tau_d);
        c.tau_i.get_or_insert(tau_i);
        c
    }

    fn reg_spec(&self) -> RegSpec {
        RegSpec {
            kind: self.reg_kind.unwrap(),
            weight: self.reg_weight.unwrap(),
        }
    }

    fn tanks_spec(&self) -> TanksSpec {
        TanksSpec {
            tau_d: self.tau_d.unwrap(),
            tau_i: self.tau_i.unwrap(),
            rho_l2: self.reg_weight.unwrap_or(TanksSpec::default().rho_l2),
            split: self.split,
        }
    }
}

/// Write the spiral dataset CSV plus a sidecar recording seed, σ and
/// solver tolerances.
pub fn cmd_gen_spiral(config: &ExperimentConfig) -> Result<PathBuf> {
    let config = config.resolved();
    std::fs::create_dir_all(&config.out_dir)?;
    let spec = SpiralSpec {
        noise_sigma: config.noise_sigma,
        seed: config.seed,
        ..Default::default()
    };
    let ts = gen_spiral(&spec)?;
    let path = config
        .dataset
        .clone()
        .unwrap_or_else(|| config.out_dir.join("spiral.csv"));
    ts.write_csv(&path)?;
    let sidecar = serde_json::json!({
        "seed": spec.seed,
        "noise_sigma": spec.noise_sigma,
        "rtol": 1e-8,
        "atol": 1e-10,
        "sample_interval": spec.sample_interval,
        "span": spec.span,
    });
    std::fs::write(
        path.with_extension("meta.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub converged: bool,
    pub cost: f64,
    pub data_sse: f64,
    pub max_defect: f64,
    pub n_intervals: usize,
    pub outer_iters: usize,
    pub wall_seconds: f64,
    pub checkpoint: PathBuf,
}

/// Training data plus the field for one problem instance.
enum Instance {
    Spiral {
        data: TimeSeries,
        problem: ShootingProblem<SpiralField>,
    },
    Tanks {
        data: TimeSeries,
        problem: ShootingProblem<TanksField>,
    },
}

fn build_instance(config: &ExperimentConfig, params: &MlpParams) -> Result<Instance> {
    let n_intervals = match config.method {
        TrainMethod::Single => 1,
        TrainMethod::Multiple => config.n_intervals.unwrap(),
    };
    match config.problem {
        ProblemTag::Spiral => {
            let path = config
                .dataset
                .clone()
                .ok_or_else(|| Error::Config("spiral training needs a dataset path".into()))?;
            let data = TimeSeries::read_csv(&path)?;
            let grid = make_grid(data.span(), n_intervals, &data.times)?;
            let field = SpiralField::new(params.spec.clone())?;
            let problem = ShootingProblem::new(
                field,
                grid,
                data.clone(),
                config.reg_spec(),
                config.step_h.unwrap(),
                None,
            )?;
            Ok(Instance::Spiral { data, problem })
        }
        ProblemTag::Tanks => {
            let path = config
                .dataset
                .clone()
                .ok_or_else(|| Error::Config("tanks training needs the benchmark CSV".into()))?;
            let ds = load_tanks(&path)?;
            let (train, _) = ds.split_train_val(config.split);
            let grid = make_grid(train.span(), n_intervals, &train.times)?;
            let field = TanksField::new(params.spec.clone(), ds.est_u, config.tanks_spec())?;
            let problem = ShootingProblem::new(
                field,
                grid,
                train.clone(),
                config.reg_spec(),
                config.step_h.unwrap(),
                None,
            )?;
            Ok(Instance::Tanks {
                data: train,
                problem,
            })
        }
        ProblemTag::TanksSurrogate => {
            let sur = gen_surrogate(&SurrogateSpec {
                n_samples: config.surrogate_samples,
                noise_sigma: config.surrogate_noise_sigma,
                seed: config.seed,
                ..Default::default()
            })?;
            let data = sur.noisy;
            let grid = make_grid(data.span(), n_intervals, &data.times)?;
            let field = TanksField::new(params.spec.clone(), sur.signal, config.tanks_spec())?;
            let problem = ShootingProblem::new(
                field,
                grid,
                data.clone(),
                config.reg_spec(),
                config.step_h.unwrap(),
                None,
            )?;
            Ok(Instance::Tanks { data, problem })
        }
    }
}

fn minimize_unconstrained<P: ConstrainedProgram>(
    problem: &P,
    z0: &[f64],
    handler: &ConstraintHandler,
    inner: &InnerCfg,
    log: &mut TrainingLog,
) -> Result<Vec<f64>> {
    match inner {
        InnerCfg::Lbfgs {
            max_iters,
            grad_tol,
            memory,
        } => {
            let opts = LbfgsOptions {
                max_iters: *max_iters,
                grad_tol: *grad_tol,
                memory: *memory,
                ..Default::default()
            };
            use std::cell::Cell;
            let last = Cell::new((f64::NAN, 0.0));
            let mut f = |z: &[f64]| {
                let pe = problem.value_grad(z, handler)?;
                let maxh = pe.defects.iter().fold(0.0_f64, |a, d| a.max(d.abs()));
                last.set((pe.cost, maxh));
                Ok((pe.phi, pe.grad))
            };
            let mut on_iter = |it: usize, _v: f64, g: f64| {
                let (cost, maxh) = last.get();
                log.push(crate::optim::LogRecord {
                    outer: 1,
                    inner: it,
                    cost,
                    max_defect: maxh,
                    rho: 0.0,
                    grad_norm: g,
                });
            };
            Ok(lbfgs_minimize(&mut f, z0, &opts, &mut on_iter)?.z)
        }
        InnerCfg::Adam { alpha, iters } | InnerCfg::Nadam { alpha, iters } => {
            let nesterov = matches!(inner, InnerCfg::Nadam { .. });
            let mut z = z0.to_vec();
            let mut st = AdamState::new(z.len(), *alpha, nesterov);
            for it in 0..*iters {
                let pe = problem.value_grad(&z, handler)?;
                let maxh = pe.defects.iter().fold(0.0_f64, |a, d| a.max(d.abs()));
                log.push(crate::optim::LogRecord {
                    outer: 1,
                    inner: it + 1,
                    cost: pe.cost,
                    max_defect: maxh,
                    rho: 0.0,
                    grad_norm: pe.grad.iter().fold(0.0_f64, |a, g| a.max(g.abs())),
                });
                st.step(&mut z, &pe.grad)?;
            }
            Ok(z)
        }
    }
}

fn inner_solver(inner: &InnerCfg) -> InnerSolver {
    match inner {
        InnerCfg::Lbfgs {
            max_iters,
            grad_tol,
            memory,
        } => InnerSolver::Lbfgs(LbfgsOptions {
            max_iters: *max_iters,
            grad_tol: *grad_tol,
            memory: *memory,
            ..Default::default()
        }),
        InnerCfg::Adam { alpha, iters } => InnerSolver::Adam(AdamConfig {
            alpha: *alpha,
            nesterov: false,
            iters: *iters,
        }),
        InnerCfg::Nadam { alpha, iters } => InnerSolver::Adam(AdamConfig {
            alpha: *alpha,
            nesterov: true,
            iters: *iters,
        }),
    }
}

fn train_problem<F: ParamField>(
    config: &ExperimentConfig,
    problem: &ShootingProblem<F>,
    data: &TimeSeries,
    params: &MlpParams,
    log: &mut TrainingLog,
) -> Result<(Vec<f64>, bool, usize)> {
    let (layout, z0) = init_decision(
        &problem.grid,
        data,
        config.init_strategy.unwrap(),
        &params.weights,
        problem.n_x(),
        problem.layout.pinned_s1.clone(),
    )?;
    debug_assert_eq!(layout.dim(), problem.dim());

    match (config.method, &config.constraint) {
        (TrainMethod::Single, _) => {
            let z = minimize_unconstrained(
                problem,
                &z0,
                &ConstraintHandler::Unconstrained,
                &config.inner,
                log,
            )?;
            Ok((z, true, 1))
        }
        (TrainMethod::Multiple, ConstraintCfg::Auglag) => {
            let res = auglag_solve(
                problem,
                &z0,
                &inner_solver(&config.inner),
                &config.auglag.to_options(),
                log,
            )?;
            Ok((res.z, res.converged, res.outer_iters))
        }
        (TrainMethod::Multiple, ConstraintCfg::Penalty { kind, rho }) => {
            let handler = ConstraintHandler::Penalty {
                rho: *rho,
                kind: *kind,
            };
            let z = minimize_unconstrained(problem, &z0, &handler, &config.inner, log)?;
            let (_, h) = problem.eval(&z)?;
            let maxh = h.iter().fold(0.0_f64, |a, d| a.max(d.abs()));
            Ok((z, maxh <= config.auglag.constraint_tol, 1))
        }
    }
}

fn finish_training<F: ParamField>(
    config: &ExperimentConfig,
    problem: &ShootingProblem<F>,
    params: &MlpParams,
    z: &[f64],
    converged: bool,
    outer_iters: usize,
    log: &TrainingLog,
    started: Instant,
) -> Result<TrainSummary> {
    let out = &config.out_dir;
    std::fs::create_dir_all(out)?;
    let ev = problem.evaluate(z)?;
    let trained = MlpParams {
        spec: params.spec.clone(),
        weights: problem.layout.params(z).to_vec(),
        seed: params.seed,
    };
    let states: Vec<Vec<f64>> = (0..problem.grid.n_intervals())
        .map(|i| problem.layout.state(z, i))
        .collect();
    let ckpt = out.join("checkpoint.json");
    save_checkpoint(&ckpt, &trained, &states)?;
    log.write_csv(&out.join("training_log.csv"))?;
    write_trajectory_csv(
        &out.join("trajectory.csv"),
        &ev.stitched,
        Some(&ev.interval_of_row),
    )?;
    write_defects_csv(&out.join("defects.csv"), &problem.grid, problem.n_x(), &ev.defects)?;
    let max_defect = ev.defects.iter().fold(0.0_f64, |a, d| a.max(d.abs()));
    let summary = TrainSummary {
        converged,
        cost: ev.cost,
        data_sse: ev.data_sse,
        max_defect,
        n_intervals: problem.grid.n_intervals(),
        outer_iters,
        wall_seconds: started.elapsed().as_secs_f64(),
        checkpoint: ckpt,
    };
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    std::fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(&config)?,
    )?;
    Ok(summary)
}

/// Run the configured training pipeline; writes checkpoint, logs,
/// trajectory/defect CSVs and a summary into the output directory.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainSummary> {
    let config = config.resolved();
    let started = Instant::now();
    let params = mlp_new(
        config.layer_sizes.clone().unwrap(),
        config.use_bias,
        config.seed,
    )?;
    let mut log = match config.echo_every {
        Some(n) => TrainingLog::with_echo(n),
        None => TrainingLog::silent(),
    };
    match build_instance(&config, &params)? {
        Instance::Spiral { data, problem } => {
            let (z, conv, outer) = train_problem(&config, &problem, &data, &params, &mut log)?;
            finish_training(&config, &problem, &params, &z, conv, outer, &log, started)
        }
        Instance::Tanks { data, problem } => {
            let (z, conv, outer) = train_problem(&config, &problem, &data, &params, &mut log)?;
            finish_training(&config, &problem, &params, &z, conv, outer, &log, started)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalMetrics {
    /// Shooting-objective cost recomputed from the checkpoint (matches
    /// the training summary on the training span).
    pub objective_cost: Option<f64>,
    pub sse: f64,
    pub rmse: f64,
    pub max_norm: f64,
    pub splits: Vec<(String, f64)>,
    pub trajectory: PathBuf,
}

/// Integrate the trained model with the adaptive solver and report
/// SSE/RMSE per split; optionally over an overridden span.
pub fn cmd_eval(
    config: &ExperimentConfig,
    checkpoint: &Path,
    span_override: Option<(f64, f64)>,
) -> Result<EvalMetrics> {
    let config = config.resolved();
    std::fs::create_dir_all(&config.out_dir)?;
    let (params, states) = load_checkpoint(checkpoint)?;
    if Some(&params.spec.layer_sizes) != config.layer_sizes.as_ref() {
        return Err(Error::Checkpoint(format!(
            "checkpoint shape {:?} does not match config {:?}",
            params.spec.layer_sizes, config.layer_sizes
        )));
    }
    let instance = build_instance(&config, &params)?;
    let traj_path = config.out_dir.join("trajectory_eval.csv");

    let (problem_cost, data, sse_v, rmse_v, max_norm, splits): (
        Option<f64>,
        TimeSeries,
        f64,
        f64,
        f64,
        Vec<(String, f64)>,
    );
    match instance {
        Instance::Spiral { data: d, problem } => {
            let z = rebuild_decision(&problem, &params, &states)?;
            let cost = z.as_ref().map(|z| problem.evaluate(z)).transpose()?.map(|e| e.cost);
            let x0 = states
                .first()
                .cloned()
                .unwrap_or_else(|| d.values[0].clone());
            let span = span_override.unwrap_or_else(|| d.span());
            let field = crate::shooting::field_adapter(&problem.field, &params.weights);
            // save at the data times plus a uniform grid so long-span
            // runs record the whole trajectory, not just the data span
            let mut save: Vec<f64> = d
                .times
                .iter()
                .copied()
                .filter(|&t| t >= span.0 && t <= span.1)
                .collect();
            let n_extra = 500usize;
            for i in 0..=n_extra {
                save.push(span.0 + (span.1 - span.0) * i as f64 / n_extra as f64);
            }
            save.sort_by(|a, b| a.partial_cmp(b).unwrap());
            save.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
            let traj = integrate_adaptive(&field, &x0, span, 1e-8, 1e-10, &save)?;
            write_trajectory_csv(&traj_path, &traj, None)?;
            let mut pred = Vec::new();
            let mut obs = Vec::new();
            for (t, row) in traj.times.iter().zip(&traj.states) {
                if let Some(i) = d.times.iter().position(|dt| (dt - t).abs() < 1e-9) {
                    pred.extend(row.iter().copied());
                    obs.extend(d.values[i].iter().copied());
                }
            }
            let s = if pred.is_empty() {
                0.0
            } else {
                pred.iter().zip(&obs).map(|(a, b)| (a - b) * (a - b)).sum()
            };
            let r = if pred.is_empty() { 0.0 } else { rmse(&pred, &obs)? };
            (problem_cost, data, sse_v, rmse_v, max_norm, splits) =
                (cost, d, s, r, traj.max_norm(), vec![("data".into(), r)]);
        }
        Instance::Tanks { data: d, problem } => {
            let z = rebuild_decision(&problem, &params, &states)?;
            let cost = z.as_ref().map(|z| problem.evaluate(z)).transpose()?.map(|e| e.cost);
            let x0 = states
                .first()
                .cloned()
                .unwrap_or_else(|| d.values[0].clone());
            let mut split_metrics = Vec::new();

            // training-signal run over the full estimation span
            let (full, test): (TimeSeries, Option<(ControlSignal, TimeSeries)>) =
                match config.problem {
                    ProblemTag::Tanks => {
                        let ds = load_tanks(config.dataset.as_ref().unwrap())?;
                        (ds.est_y.clone(), Some((ds.test_u, ds.test_y)))
                    }
                    _ => (d.clone(), None),
                };
            let span = span_override.unwrap_or_else(|| full.span());
            let save: Vec<f64> = full
                .times
                .iter()
                .copied()
                .filter(|&t| t >= span.0 && t <= span.1)
                .collect();
            let field = crate::shooting::field_adapter(&problem.field, &params.weights);
            let traj = integrate_adaptive(&field, &x0, span, 1e-6, 1e-8, &save)?;
            write_trajectory_csv(&traj_path, &traj, None)?;

            let series_rmse = |traj: &crate::ode::Trajectory, obs: &TimeSeries, lo: f64, hi: f64| {
                let mut p = Vec::new();
                let mut o = Vec::new();
                for (t, row) in traj.times.iter().zip(&traj.states) {
                    if *t < lo || *t >= hi {
                        continue;
                    }
                    if let Some(i) = obs.times.iter().position(|dt| (dt - t).abs() < 1e-9) {
                        p.push(row[0]);
                        o.push(obs.values[i][0]);
                    }
                }
                rmse(&p, &o)
            };
            let train_rmse = series_rmse(&traj, &full, span.0, config.split.min(span.1) + 1e-9)?;
            split_metrics.push(("train".into(), train_rmse));
            if full.span().1 > config.split {
                if let Ok(v) = series_rmse(&traj, &full, config.split, span.1 + 1e-9) {
                    split_metrics.push(("validation".into(), v));
                }
            }
            if let Some((test_u, test_y)) = test {
                let test_field = TanksField::new(
                    params.spec.clone(),
                    test_u,
                    config.tanks_spec(),
                )?;
                let tf_field = crate::shooting::field_adapter(&test_field, &params.weights);
                let ttraj = integrate_adaptive(
                    &tf_field,
                    &test_y.values[0],
                    test_y.span(),
                    1e-6,
                    1e-8,
                    &test_y.times,
                )?;
                let t_rmse = series_rmse(&ttraj, &test_y, test_y.span().0, test_y.span().1 + 1.0)?;
                split_metrics.push(("test".into(), t_rmse));
            }

            let mut p = Vec::new();
            let mut o = Vec::new();
            for (t, row) in traj.times.iter().zip(&traj.states) {
                if let Some(i) = full.times.iter().position(|dt| (dt - t).abs() < 1e-9) {
                    p.push(row[0]);
                    o.push(full.values[i][0]);
                }
            }
            let s: f64 = p.iter().zip(&o).map(|(a, b)| (a - b) * (a - b)).sum();
            let r = rmse(&p, &o)?;
            (problem_cost, data, sse_v, rmse_v, max_norm, splits) =
                (cost, d, s, r, traj.max_norm(), split_metrics);
        }
    }
    let _ = data;
    let metrics = EvalMetrics {
        objective_cost: problem_cost,
        sse: sse_v,
        rmse: rmse_v,
        max_norm,
        splits,
        trajectory: traj_path,
    };
    for (name, r) in &metrics.splits {
        println!("{name} rmse: {r:.6}");
    }
    println!("sse: {:.6}  rmse: {:.6}", metrics.sse, metrics.rmse);
    std::fs::write(
        config.out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)?,
    )?;
    Ok(metrics)
}

/// Reassemble `z = [θ; s]` from a checkpoint when its shooting states
/// match the configured grid.
fn rebuild_decision<F: ParamField>(
    problem: &ShootingProblem<F>,
    params: &MlpParams,
    states: &[Vec<f64>],
) -> Result<Option<Vec<f64>>> {
    if states.len() != problem.grid.n_intervals() {
        return Ok(None);
    }
    let mut z = params.weights.clone();
    for s in states {
        if s.len() != problem.n_x() {
            return Err(Error::Checkpoint("shooting state dimension mismatch".into()));
        }
        z.extend_from_slice(s);
    }
    Ok(Some(z))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepGrid {
    pub reg_weight: Vec<f64>,
    pub tau_d: Vec<f64>,
    pub tau_i: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub reg_weight: f64,
    pub tau_d: f64,
    pub tau_i: f64,
    pub validation_rmse: Option<f64>,
    pub error: Option<String>,
}

/// One train+eval per grid point; per-point failures are recorded and
/// the sweep continues. Returns rows plus the best index.
pub fn cmd_sweep(config: &ExperimentConfig, grid: &SweepGrid) -> Result<(Vec<SweepRow>, usize)> {
    if grid.reg_weight.is_empty() || grid.tau_d.is_empty() || grid.tau_i.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    let base = config.resolved();
    std::fs::create_dir_all(&base.out_dir)?;
    let mut rows = Vec::new();
    let mut idx = 0usize;
    for &rw in &grid.reg_weight {
        for &td in &grid.tau_d {
            for &ti in &grid.tau_i {
                let mut c = base.clone();
                c.reg_weight = Some(rw);
                c.tau_d = Some(td);
                c.tau_i = Some(ti);
                c.out_dir = base.out_dir.join(format!("point_{idx:03}"));
                let run = || -> Result<f64> {
                    let summary = cmd_train(&c)?;
                    let metrics = cmd_eval(&c, &summary.checkpoint, None)?;
                    let v = metrics
                        .splits
                        .iter()
                        .find(|(n, _)| n == "validation")
                        .or_else(|| metrics.splits.first())
                        .map(|(_, r)| *r)
                        .unwrap_or(f64::NAN);
                    Ok(v)
                };
                match run() {
                    Ok(v) => rows.push(SweepRow {
                        reg_weight: rw,
                        tau_d: td,
                        tau_i: ti,
                        validation_rmse: Some(v),
                        error: None,
                    }),
                    Err(e) => rows.push(SweepRow {
                        reg_weight: rw,
                        tau_d: td,
                        tau_i: ti,
                        validation_rmse: None,
                        error: Some(e.to_string()),
                    }),
                }
                idx += 1;
            }
        }
    }
    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.validation_rmse.map(|v| (i, v)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut w = csv::Writer::from_path(base.out_dir.join("sweep.csv"))?;
    w.write_record(["reg_weight", "tau_d", "tau_i", "validation_rmse", "error", "best"])?;
    for (i, r) in rows.iter().enumerate() {
        w.write_record(&[
            r.reg_weight.to_string(),
            r.tau_d.to_string(),
            r.tau_i.to_string(),
            r.validation_rmse.map_or(String::new(), |v| v.to_string()),
            r.error.clone().unwrap_or_default(),
            (i == best).to_string(),
        ])?;
    }
    w.flush()?;
    Ok((rows, best))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_and_defaults() {
        let c = ExperimentConfig::default().resolved();
        assert_eq!(c.layer_sizes.as_deref(), Some(&[2, 16, 2][..]));
        assert_eq!(c.n_intervals, Some(20));
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.n_intervals, Some(20));
    }

    #[test]
    fn gen_spiral_writes_61_rows_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig {
            out_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        let p1 = cmd_gen_spiral(&c).unwrap();
        let ts = TimeSeries::read_csv(&p1).unwrap();
        assert_eq!(ts.len(), 61);
        let bytes1 = std::fs::read(&p1).unwrap();
        c.out_dir = dir.path().join("again");
        c.dataset = Some(dir.path().join("again.csv"));
        let p2 = cmd_gen_spiral(&c).unwrap();
        assert_eq!(bytes1, std::fs::read(&p2).unwrap());
    }

    #[test]
    fn empty_sweep_grid_rejected() {
        let grid = SweepGrid {
            reg_weight: vec![],
            tau_d: vec![1.0],
            tau_i: vec![1.0],
        };
        assert!(cmd_sweep(&ExperimentConfig::default(), &grid).is_err());
    }

    #[test]
    fn train_missing_dataset_is_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = ExperimentConfig {
            dataset: Some(dir.path().join("nope.csv")),
            out_dir: dir.path().join("out"),
            ..Default::default()
        };
        assert!(cmd_train(&c).is_err());
        assert!(!dir.path().join("out").join("checkpoint.json").exists());
    }
}
