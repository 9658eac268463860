//! Constraint handling: penalty objectives, the augmented Lagrangian,
//! and the outer multiplier-update loop.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::Result;
use crate::optim::adam::AdamState;
use crate::optim::lbfgs::{lbfgs_minimize, LbfgsOptions, LbfgsStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    Quadratic,
    L1,
    L2,
    Linf,
}

fn penalty_term<S: Real>(h: &[S], rho: f64, kind: PenaltyKind) -> S {
    let rho = S::from_f64(rho);
    match kind {
        PenaltyKind::Quadratic => rho * h.iter().fold(S::zero(), |acc, &x| acc + x * x),
        PenaltyKind::L1 => rho * h.iter().fold(S::zero(), |acc, &x| acc + x.abs()),
        PenaltyKind::L2 => {
            let s = h.iter().fold(S::zero(), |acc, &x| acc + x * x);
            if s.value() == 0.0 {
                S::zero()
            } else {
                rho * s.sqrt_clamped()
            }
        }
        PenaltyKind::Linf => {
            let m = h
                .iter()
                .fold(S::zero(), |acc, &x| acc.maximum(x.abs()));
            rho * m
        }
    }
}

/// `φ = C + ρ·Q(h)` for the chosen penalty function.
pub fn penalty_objective(c: f64, h: &[f64], rho: f64, kind: PenaltyKind) -> f64 {
    assert!(rho >= 0.0);
    c + penalty_term(h, rho, kind)
}

/// `φ = C + hᵀv + ρ·hᵀh` (the ρ multiplies the full square, no ½).
pub fn auglag_objective(c: f64, h: &[f64], v: &[f64], rho: f64) -> f64 {
    assert_eq!(h.len(), v.len());
    let lin: f64 = h.iter().zip(v).map(|(hi, vi)| hi * vi).sum();
    let quad: f64 = h.iter().map(|hi| hi * hi).sum();
    c + lin + rho * quad
}

/// How shooting defects enter the unconstrained inner objective.
#[derive(Debug, Clone)]
pub enum ConstraintHandler {
    Unconstrained,
    Penalty { rho: f64, kind: PenaltyKind },
    AugLag { v: Vec<f64>, rho: f64 },
}

impl ConstraintHandler {
    /// Contribution of the defects to the objective value.
    pub fn term<S: Real>(&self, h: &[S]) -> S {
        match self {
            ConstraintHandler::Unconstrained => S::zero(),
            ConstraintHandler::Penalty { rho, kind } => penalty_term(h, *rho, *kind),
            ConstraintHandler::AugLag { v, rho } => {
                let mut acc = S::zero();
                for (hi, &vi) in h.iter().zip(v) {
                    acc = acc + *hi * S::from_f64(vi) + S::from_f64(*rho) * *hi * *hi;
                }
                acc
            }
        }
    }

    /// `∂term/∂h`, computed in plain arithmetic (subgradient at kinks).
    pub fn defect_weights(&self, h: &[f64]) -> Vec<f64> {
        match self {
            ConstraintHandler::Unconstrained => vec![0.0; h.len()],
            ConstraintHandler::Penalty { rho, kind } => match kind {
                PenaltyKind::Quadratic => h.iter().map(|hi| 2.0 * rho * hi).collect(),
                PenaltyKind::L1 => h.iter().map(|hi| rho * hi.signum()).collect(),
                PenaltyKind::L2 => {
                    let norm = h.iter().map(|hi| hi * hi).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        vec![0.0; h.len()]
                    } else {
                        h.iter().map(|hi| rho * hi / norm).collect()
                    }
                }
                PenaltyKind::Linf => {
                    let mut w = vec![0.0; h.len()];
                    if let Some(imax) = (0..h.len())
                        .max_by(|&a, &b| h[a].abs().partial_cmp(&h[b].abs()).unwrap())
                    {
                        if h[imax] != 0.0 {
                            w[imax] = rho * h[imax].signum();
                        }
                    }
                    w
                }
            },
            ConstraintHandler::AugLag { v, rho } => h
                .iter()
                .zip(v)
                .map(|(hi, vi)| vi + 2.0 * rho * hi)
                .collect(),
        }
    }
}

/// Penalized evaluation of a constrained objective.
#[derive(Debug, Clone)]
pub struct PenalizedEval {
    pub phi: f64,
    pub grad: Vec<f64>,
    pub cost: f64,
    pub defects: Vec<f64>,
}

/// A cost `C(z)` with equality constraints `h(z) = 0` and gradients of
/// any handler-augmented combination of the two.
pub trait ConstrainedProgram: Sync {
    fn dim(&self) -> usize;
    fn constraint_len(&self) -> usize;
    /// `(C, h)` at `z`.
    fn eval(&self, z: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// `φ = C + handler-term(h)` with its gradient, plus the raw parts.
    fn value_grad(&self, z: &[f64], handler: &ConstraintHandler) -> Result<PenalizedEval>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub nesterov: bool,
    pub iters: usize,
}

/// Inner solver choice for the outer augmented-Lagrangian loop.
#[derive(Debug, Clone)]
pub enum InnerSolver {
    Lbfgs(LbfgsOptions),
    Adam(AdamConfig),
}

#[derive(Debug, Clone)]
pub struct AugLagOptions {
    /// ρ installed after the first (ρ = 0, v = 0) inner solve.
    pub rho_init: f64,
    /// Multiplicative ρ growth when the constraint norm stalls.
    pub gamma: f64,
    /// Required shrink factor of max|h| per outer iteration.
    pub decrease_ratio: f64,
    pub constraint_tol: f64,
    pub max_outer: usize,
}

impl Default for AugLagOptions {
    fn default() -> Self {
        AugLagOptions {
            rho_init: 1.0,
            gamma: 10.0,
            decrease_ratio: 0.25,
            constraint_tol: 1e-3,
            max_outer: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LogRecord {
    pub outer: usize,
    pub inner: usize,
    pub cost: f64,
    pub max_defect: f64,
    pub rho: f64,
    pub grad_norm: f64,
}

/// Collects one record per (outer, inner) iteration; optionally echoes
/// to the console every `echo_every` records.
#[derive(Debug, Default)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
    pub echo_every: Option<usize>,
}

impl TrainingLog {
    pub fn silent() -> Self {
        TrainingLog::default()
    }

    pub fn with_echo(every: usize) -> Self {
        TrainingLog {
            records: Vec::new(),
            echo_every: Some(every),
        }
    }

    pub fn push(&mut self, rec: LogRecord) {
        if let Some(every) = self.echo_every {
            if self.records.len() % every == 0 {
                eprintln!(
                    "outer {:>3} inner {:>4}  cost {:>12.6e}  max|h| {:>10.4e}  rho {:>8.2e}  |g| {:>10.4e}",
                    rec.outer, rec.inner, rec.cost, rec.max_defect, rec.rho, rec.grad_norm
                );
            }
        }
        self.records.push(rec);
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["outer", "inner", "cost", "max_defect", "rho", "grad_norm"])?;
        for r in &self.records {
            w.write_record(&[
                r.outer.to_string(),
                r.inner.to_string(),
                format!("{:.17e}", r.cost),
                format!("{:.17e}", r.max_defect),
                format!("{:.17e}", r.rho),
                format!("{:.17e}", r.grad_norm),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub cost: f64,
    pub max_defect: f64,
    pub rho: f64,
    pub inner_status: String,
    pub inner_iters: usize,
}

#[derive(Debug, Clone)]
pub struct AugLagResult {
    pub z: Vec<f64>,
    pub converged: bool,
    pub cost: f64,
    pub max_defect: f64,
    pub outer_iters: usize,
    pub report: Vec<OuterRecord>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn inner_solve<P: ConstrainedProgram>(
    problem: &P,
    z0: &[f64],
    handler: &ConstraintHandler,
    inner: &InnerSolver,
    outer: usize,
    rho: f64,
    log: &mut TrainingLog,
) -> Result<(Vec<f64>, String, usize)> {
    use std::cell::Cell;
    match inner {
        InnerSolver::Lbfgs(opts) => {
            let last = Cell::new((f64::NAN, f64::NAN));
            let mut f = |z: &[f64]| {
                let pe = problem.value_grad(z, handler)?;
                last.set((pe.cost, inf_norm(&pe.defects)));
                Ok((pe.phi, pe.grad))
            };
            let mut on_iter = |it: usize, _phi: f64, gnorm: f64| {
                let (cost, maxh) = last.get();
                log.push(LogRecord {
                    outer,
                    inner: it,
                    cost,
                    max_defect: maxh,
                    rho,
                    grad_norm: gnorm,
                });
            };
            let res = lbfgs_minimize(&mut f, z0, opts, &mut on_iter)?;
            let status = format!("{:?}", res.status);
            let _ = LbfgsStatus::GradientTolerance; // status values surface as strings
            Ok((res.z, status, res.iters))
        }
        InnerSolver::Adam(cfg) => {
            let mut z = z0.to_vec();
            let mut state = AdamState::new(z.len(), cfg.alpha, cfg.nesterov);
            for it in 0..cfg.iters {
                let pe = problem.value_grad(&z, handler)?;
                log.push(LogRecord {
                    outer,
                    inner: it + 1,
                    cost: pe.cost,
                    max_defect: inf_norm(&pe.defects),
                    rho,
                    grad_norm: inf_norm(&pe.grad),
                });
                state.step(&mut z, &pe.grad)?;
            }
            Ok((z, "IterationBudget".into(), cfg.iters))
        }
    }
}

/// Outer augmented-Lagrangian loop: repeated unconstrained inner solves
/// with multiplier update `v ← v + 2ρh` and safeguarded ρ growth. The
/// first inner solve runs with ρ = 0 and v = 0 (plain cost).
pub fn auglag_solve<P: ConstrainedProgram>(
    problem: &P,
    z0: &[f64],
    inner: &InnerSolver,
    opts: &AugLagOptions,
    log: &mut TrainingLog,
) -> Result<AugLagResult> {
    let m = problem.constraint_len();
    let mut v = vec![0.0; m];
    let mut rho = 0.0;
    let mut z = z0.to_vec();
    let mut report = Vec::new();
    let mut prev_maxh = f64::INFINITY;
    let mut converged = false;
    let mut cost = f64::NAN;
    let mut max_defect = f64::NAN;
    let mut outer_iters = 0;

    for k in 1..=opts.max_outer {
        outer_iters = k;
        let handler = ConstraintHandler::AugLag {
            v: v.clone(),
            rho,
        };
        let (z_new, status, inner_iters) =
            inner_solve(problem, &z, &handler, inner, k, rho, log)?;
        z = z_new;
        let (c, h) = problem.eval(&z)?;
        cost = c;
        max_defect = inf_norm(&h);
        report.push(OuterRecord {
            outer: k,
            cost,
            max_defect,
            rho,
            inner_status: status,
            inner_iters,
        });
        if m == 0 || max_defect <= opts.constraint_tol {
            converged = true;
            break;
        }
        for (vi, hi) in v.iter_mut().zip(&h) {
            *vi += 2.0 * rho * hi;
        }
        if k == 1 {
            rho = opts.rho_init;
        } else if max_defect > opts.decrease_ratio * prev_maxh {
            rho *= opts.gamma;
        }
        prev_maxh = max_defect;
    }

    Ok(AugLagResult {
        z,
        converged,
        cost,
        max_defect,
        outer_iters,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad, ScalarProgram};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn penalty_arithmetic() {
        assert_eq!(
            penalty_objective(1.0, &[0.5], 2.0, PenaltyKind::Quadratic),
            1.5
        );
        for kind in [
            PenaltyKind::Quadratic,
            PenaltyKind::L1,
            PenaltyKind::L2,
            PenaltyKind::Linf,
        ] {
            assert_eq!(penalty_objective(3.0, &[0.0, 0.0], 5.0, kind), 3.0);
        }
        assert_abs_diff_eq!(
            penalty_objective(0.0, &[3.0, -4.0], 1.0, PenaltyKind::L2),
            5.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn auglag_arithmetic() {
        assert_eq!(auglag_objective(1.0, &[0.5], &[1.0], 2.0), 2.0);
        assert_eq!(auglag_objective(7.0, &[0.0, 0.0], &[3.0, -1.0], 10.0), 7.0);
        // v = 0 reduces to the quadratic penalty
        let h = [0.3, -0.7];
        assert_abs_diff_eq!(
            auglag_objective(2.0, &h, &[0.0, 0.0], 4.0),
            penalty_objective(2.0, &h, 4.0, PenaltyKind::Quadratic),
            epsilon = 1e-15
        );
    }

    #[test]
    fn auglag_termwise_partials() {
        // d(φ)/dρ = hᵀh and dφ/dv_i = h_i at fixed z
        let h = [0.4, -1.1, 0.05];
        let v = [1.0, -2.0, 0.5];
        let rho = 3.0;
        let base = auglag_objective(0.9, &h, &v, rho);
        let drho = (auglag_objective(0.9, &h, &v, rho + 1e-7) - base) / 1e-7;
        let hth: f64 = h.iter().map(|x| x * x).sum();
        assert_abs_diff_eq!(drho, hth, epsilon = 1e-6);
        for i in 0..3 {
            let mut vp = v;
            vp[i] += 1e-7;
            let dv = (auglag_objective(0.9, &h, &vp, rho) - base) / 1e-7;
            assert_abs_diff_eq!(dv, h[i], epsilon = 1e-6);
        }
    }

    /// min (z1−1)² + (z2−2.5)²  s.t. z1 = z2, solved analytically at (1.75, 1.75).
    struct ToyConstrained;

    struct ToyPenalized(ConstraintHandler);
    impl ScalarProgram for ToyPenalized {
        fn eval<S: Real>(&self, z: &[S]) -> S {
            let c = (z[0] - S::from_f64(1.0)) * (z[0] - S::from_f64(1.0))
                + (z[1] - S::from_f64(2.5)) * (z[1] - S::from_f64(2.5));
            let h = [z[0] - z[1]];
            c + self.0.term(&h)
        }
    }

    impl ConstrainedProgram for ToyConstrained {
        fn dim(&self) -> usize {
            2
        }
        fn constraint_len(&self) -> usize {
            1
        }
        fn eval(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
            let c = (z[0] - 1.0).powi(2) + (z[1] - 2.5).powi(2);
            Ok((c, vec![z[0] - z[1]]))
        }
        fn value_grad(&self, z: &[f64], handler: &ConstraintHandler) -> Result<PenalizedEval> {
            let (cost, defects) = self.eval(z)?;
            let prog = ToyPenalized(handler.clone());
            let (phi, g) = grad(&prog, z)?;
            Ok(PenalizedEval {
                phi,
                grad: g,
                cost,
                defects,
            })
        }
    }

    #[test]
    fn toy_constrained_quadratic() {
        let mut log = TrainingLog::silent();
        let opts = AugLagOptions {
            constraint_tol: 1e-6,
            max_outer: 10,
            ..Default::default()
        };
        let res = auglag_solve(
            &ToyConstrained,
            &[0.0, 0.0],
            &InnerSolver::Lbfgs(LbfgsOptions::default()),
            &opts,
            &mut log,
        )
        .unwrap();
        assert!(res.converged);
        assert!(res.outer_iters <= 10);
        assert_abs_diff_eq!(res.z[0], 1.75, epsilon = 1e-5);
        assert_abs_diff_eq!(res.z[1], 1.75, epsilon = 1e-5);
        assert!(res.max_defect <= 1e-6);
        assert!(!log.records.is_empty());
    }

    #[test]
    fn constraint_trend_nonincreasing_after_growth() {
        let mut log = TrainingLog::silent();
        let opts = AugLagOptions {
            constraint_tol: 1e-10,
            max_outer: 15,
            ..Default::default()
        };
        let res = auglag_solve(
            &ToyConstrained,
            &[5.0, -3.0],
            &InnerSolver::Lbfgs(LbfgsOptions::default()),
            &opts,
            &mut log,
        )
        .unwrap();
        // after the first ρ growth, max|h| must not increase outer-to-outer
        let grew_at = res
            .report
            .windows(2)
            .position(|w| w[1].rho > w[0].rho)
            .map(|i| i + 1)
            .unwrap_or(1);
        for w in res.report[grew_at..].windows(2) {
            assert!(
                w[1].max_defect <= w[0].max_defect * (1.0 + 1e-9),
                "max|h| increased: {} -> {}",
                w[0].max_defect,
                w[1].max_defect
            );
        }
    }

    struct Unconstrained2d;
    impl ConstrainedProgram for Unconstrained2d {
        fn dim(&self) -> usize {
            2
        }
        fn constraint_len(&self) -> usize {
            0
        }
        fn eval(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok(((z[0] - 3.0).powi(2) + z[1].powi(2), vec![]))
        }
        fn value_grad(&self, z: &[f64], _h: &ConstraintHandler) -> Result<PenalizedEval> {
            let (cost, defects) = self.eval(z)?;
            Ok(PenalizedEval {
                phi: cost,
                grad: vec![2.0 * (z[0] - 3.0), 2.0 * z[1]],
                cost,
                defects,
            })
        }
    }

    #[test]
    fn empty_constraints_single_inner_solve() {
        let mut log = TrainingLog::silent();
        let res = auglag_solve(
            &Unconstrained2d,
            &[0.0, 1.0],
            &InnerSolver::Lbfgs(LbfgsOptions::default()),
            &AugLagOptions::default(),
            &mut log,
        )
        .unwrap();
        assert!(res.converged);
        assert_eq!(res.outer_iters, 1);
        assert_abs_diff_eq!(res.z[0], 3.0, epsilon = 1e-7);
    }

    /// Constrained optimum coinciding with the unconstrained minimum:
    /// a feasible start converges in one outer iteration.
    struct AlignedConstrained;
    impl ConstrainedProgram for AlignedConstrained {
        fn dim(&self) -> usize {
            2
        }
        fn constraint_len(&self) -> usize {
            1
        }
        fn eval(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
            let c = (z[0] - 1.0).powi(2) + (z[1] - 1.0).powi(2);
            Ok((c, vec![z[0] - z[1]]))
        }
        fn value_grad(&self, z: &[f64], handler: &ConstraintHandler) -> Result<PenalizedEval> {
            let (cost, defects) = self.eval(z)?;
            let w = handler.defect_weights(&defects);
            let phi = cost + handler.term(&defects[..]);
            let grad = vec![
                2.0 * (z[0] - 1.0) + w[0],
                2.0 * (z[1] - 1.0) - w[0],
            ];
            Ok(PenalizedEval {
                phi,
                grad,
                cost,
                defects,
            })
        }
    }

    #[test]
    fn feasible_optimum_one_outer_iteration() {
        let mut log = TrainingLog::silent();
        let res = auglag_solve(
            &AlignedConstrained,
            &[1.0, 1.0],
            &InnerSolver::Lbfgs(LbfgsOptions::default()),
            &AugLagOptions::default(),
            &mut log,
        )
        .unwrap();
        assert!(res.converged);
        assert_eq!(res.outer_iters, 1);
    }

    #[test]
    fn adam_inner_solver_runs() {
        let mut log = TrainingLog::silent();
        let res = auglag_solve(
            &ToyConstrained,
            &[0.0, 0.0],
            &InnerSolver::Adam(AdamConfig {
                alpha: 0.05,
                nesterov: true,
                iters: 500,
            }),
            &AugLagOptions {
                constraint_tol: 1e-3,
                ..Default::default()
            },
            &mut log,
        )
        .unwrap();
        assert!(res.converged, "max|h| = {}", res.max_defect);
        assert_abs_diff_eq!(res.z[0], 1.75, epsilon = 1e-2);
    }

    proptest! {
        #[test]
        fn penalty_monotone_in_rho(
            h in proptest::collection::vec(-3.0f64..3.0, 1..6),
            rho1 in 0.1f64..5.0,
            bump in 0.1f64..5.0,
        ) {
            prop_assume!(h.iter().any(|&x| x.abs() > 1e-6));
            for kind in [PenaltyKind::Quadratic, PenaltyKind::L1, PenaltyKind::L2, PenaltyKind::Linf] {
                let lo = penalty_objective(0.7, &h, rho1, kind);
                let hi = penalty_objective(0.7, &h, rho1 + bump, kind);
                prop_assert!(hi > lo, "{kind:?}: {hi} !> {lo}");
            }
        }

        #[test]
        fn handler_weights_match_fd(
            h in proptest::collection::vec(-2.0f64..2.0, 1..5),
            rho in 0.1f64..3.0,
        ) {
            prop_assume!(h.iter().all(|&x| x.abs() > 1e-3));
            let v: Vec<f64> = h.iter().map(|x| 0.5 * x + 0.1).collect();
            let handlers = vec![
                ConstraintHandler::Penalty { rho, kind: PenaltyKind::Quadratic },
                ConstraintHandler::Penalty { rho, kind: PenaltyKind::L1 },
                ConstraintHandler::Penalty { rho, kind: PenaltyKind::L2 },
                ConstraintHandler::AugLag { v, rho },
            ];
            for handler in &handlers {
                let w = handler.defect_weights(&h);
                for i in 0..h.len() {
                    let mut hp = h.clone();
                    hp[i] += 1e-7;
                    let mut hm = h.clone();
                    hm[i] -= 1e-7;
                    let fd = (handler.term(&hp[..]) - handler.term(&hm[..])) / 2e-7;
                    prop_assert!((fd - w[i]).abs() <= 1e-5 * (1.0 + w[i].abs()));
                }
            }
        }
    }
}
