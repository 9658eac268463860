//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub max_ls_evals: usize,
    /// Record each accepted line-search step so tests can assert the
    /// Wolfe conditions.
    pub record_steps: bool,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-8,
            max_iters: 200,
            max_ls_evals: 25,
            record_steps: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    GradientTolerance,
    MaxIterations,
    LineSearchFailure,
}

/// One accepted step, kept only when `record_steps` is on.
#[derive(Debug, Clone, Copy)]
pub struct AcceptedStep {
    pub alpha: f64,
    pub f0: f64,
    pub dir_deriv0: f64,
    pub f1: f64,
    pub dir_deriv1: f64,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub z: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iters: usize,
    pub n_evals: usize,
    pub status: LbfgsStatus,
    pub steps: Vec<AcceptedStep>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct LineSearchOutcome {
    alpha: f64,
    z: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    evals: usize,
}

/// Strong-Wolfe line search (bracket + zoom with safeguarded quadratic
/// interpolation). Returns None when no acceptable step was found in
/// the evaluation budget.
fn strong_wolfe<F>(
    f: &mut F,
    z: &[f64],
    d: &[f64],
    f0: f64,
    dd0: f64,
    opts: &LbfgsOptions,
) -> Result<Option<LineSearchOutcome>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    debug_assert!(dd0 < 0.0);
    let probe = |f: &mut F, a: f64| -> Result<(Vec<f64>, f64, Vec<f64>, f64)> {
        let za: Vec<f64> = z.iter().zip(d).map(|(zi, di)| zi + a * di).collect();
        let (fa, ga) = f(&za)?;
        let dda = dot(&ga, d);
        Ok((za, fa, ga, dda))
    };

    let alpha_max = 1e4;
    let mut evals = 0usize;
    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut dd_prev = dd0;
    let mut a = 1.0;

    // bracket phase
    let mut bracket: Option<(f64, f64, f64, f64, f64)> = None; // (lo, f_lo, dd_lo, hi, f_hi)
    for i in 0..opts.max_ls_evals {
        let (za, fa, ga, dda) = probe(f, a)?;
        evals += 1;
        if !fa.is_finite() {
            // step too long; fall straight into zoom toward the origin
            bracket = Some((a_prev, f_prev, dd_prev, a, f64::INFINITY));
            break;
        }
        if fa > f0 + opts.c1 * a * dd0 || (i > 0 && fa >= f_prev) {
            bracket = Some((a_prev, f_prev, dd_prev, a, fa));
            break;
        }
        if dda.abs() <= -opts.c2 * dd0 {
            return Ok(Some(LineSearchOutcome {
                alpha: a,
                z: za,
                f: fa,
                g: ga,
                evals,
            }));
        }
        if dda >= 0.0 {
            bracket = Some((a, fa, dda, a_prev, f_prev));
            break;
        }
        a_prev = a;
        f_prev = fa;
        dd_prev = dda;
        a = (2.0 * a).min(alpha_max);
        if a >= alpha_max {
            return Ok(None);
        }
    }
    let Some((mut lo, mut f_lo, mut dd_lo, mut hi, mut f_hi)) = bracket else {
        return Ok(None);
    };

    // zoom phase
    while evals < opts.max_ls_evals {
        let delta = hi - lo;
        // quadratic model through (lo, f_lo, dd_lo) and (hi, f_hi)
        let mut aj = if f_hi.is_finite() {
            let denom = 2.0 * (f_hi - f_lo - dd_lo * delta);
            if denom.abs() > 1e-300 {
                lo - dd_lo * delta * delta / denom
            } else {
                lo + 0.5 * delta
            }
        } else {
            lo + 0.5 * delta
        };
        let (left, right) = if delta > 0.0 { (lo, hi) } else { (hi, lo) };
        let pad = 0.1 * (right - left);
        if !aj.is_finite() || aj <= left + pad || aj >= right - pad {
            aj = lo + 0.5 * delta;
        }
        let (za, fa, ga, dda) = probe(f, aj)?;
        evals += 1;
        if !fa.is_finite() || fa > f0 + opts.c1 * aj * dd0 || fa >= f_lo {
            hi = aj;
            f_hi = fa;
        } else {
            if dda.abs() <= -opts.c2 * dd0 {
                return Ok(Some(LineSearchOutcome {
                    alpha: aj,
                    z: za,
                    f: fa,
                    g: ga,
                    evals,
                }));
            }
            if dda * delta >= 0.0 {
                hi = lo;
                f_hi = f_lo;
            }
            lo = aj;
            f_lo = fa;
            dd_lo = dda;
        }
        if (hi - lo).abs() < 1e-14 * (1.0 + lo.abs()) {
            break;
        }
    }
    Ok(None)
}

/// Minimize via two-loop-recursion L-BFGS; `on_iter(iter, value, grad_inf_norm)`
/// fires after each accepted step.
pub fn lbfgs_minimize<F>(
    f: &mut F,
    z0: &[f64],
    opts: &LbfgsOptions,
    on_iter: &mut dyn FnMut(usize, f64, f64),
) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = z0.len();
    let mut z = z0.to_vec();
    let (mut fz, mut g) = f(&z)?;
    if !fz.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut n_evals = 1usize;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new(); // (s, y, sᵀy)
    let mut steps = Vec::new();

    let mut status = LbfgsStatus::MaxIterations;
    let mut iters = 0usize;
    for it in 0..opts.max_iters {
        let gnorm = inf_norm(&g);
        if gnorm <= opts.grad_tol {
            status = LbfgsStatus::GradientTolerance;
            break;
        }
        iters = it + 1;

        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, sy) in pairs.iter().rev() {
            let a = dot(s, &q) / sy;
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        let gamma = pairs
            .back()
            .map(|(_, y, sy)| sy / dot(y, y))
            .unwrap_or(1.0);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, sy), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = dot(y, &q) / sy;
            for i in 0..n {
                q[i] += (a - b) * s[i];
            }
        }
        let mut d: Vec<f64> = q.iter().map(|x| -x).collect();
        let mut dd0 = dot(&g, &d);
        if dd0 >= 0.0 {
            // curvature information unusable; fall back to steepest descent
            d = g.iter().map(|x| -x).collect();
            dd0 = dot(&g, &d);
            pairs.clear();
        }

        match strong_wolfe(f, &z, &d, fz, dd0, opts)? {
            Some(out) => {
                n_evals += out.evals;
                if opts.record_steps {
                    steps.push(AcceptedStep {
                        alpha: out.alpha,
                        f0: fz,
                        dir_deriv0: dd0,
                        f1: out.f,
                        dir_deriv1: dot(&out.g, &d),
                    });
                }
                let s: Vec<f64> = out.z.iter().zip(&z).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = out.g.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    if pairs.len() == opts.memory {
                        pairs.pop_front();
                    }
                    pairs.push_back((s, y, sy));
                }
                z = out.z;
                fz = out.f;
                g = out.g;
                on_iter(iters, fz, inf_norm(&g));
            }
            None => {
                status = LbfgsStatus::LineSearchFailure;
                break;
            }
        }
    }
    if inf_norm(&g) <= opts.grad_tol {
        status = LbfgsStatus::GradientTolerance;
    }
    Ok(LbfgsResult {
        grad_inf_norm: inf_norm(&g),
        z,
        value: fz,
        iters,
        n_evals,
        status,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quadratic(a: Vec<f64>) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |z: &[f64]| {
            let v = z.iter().zip(&a).map(|(x, ai)| (x - ai) * (x - ai)).sum();
            let g = z.iter().zip(&a).map(|(x, ai)| 2.0 * (x - ai)).collect();
            Ok((v, g))
        }
    }

    #[test]
    fn quadratic_in_few_iterations() {
        let a = vec![1.0, -2.0, 3.5];
        let mut f = quadratic(a.clone());
        let res =
            lbfgs_minimize(&mut f, &[10.0, 4.0, -7.0], &LbfgsOptions::default(), &mut |_, _, _| {})
                .unwrap();
        assert_eq!(res.status, LbfgsStatus::GradientTolerance);
        assert!(res.iters <= 5, "took {} iterations", res.iters);
        for (zi, ai) in res.z.iter().zip(&a) {
            assert_abs_diff_eq!(zi, ai, epsilon = 1e-8);
        }
    }

    #[test]
    fn rosenbrock() {
        let mut f = |z: &[f64]| {
            let (x, y) = (z[0], z[1]);
            let v = (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2);
            let g = vec![
                -2.0 * (1.0 - x) - 400.0 * x * (y - x * x),
                200.0 * (y - x * x),
            ];
            Ok((v, g))
        };
        let opts = LbfgsOptions {
            max_iters: 500,
            grad_tol: 1e-10,
            ..Default::default()
        };
        let res = lbfgs_minimize(&mut f, &[-1.2, 1.0], &opts, &mut |_, _, _| {}).unwrap();
        assert_abs_diff_eq!(res.z[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(res.z[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn already_optimal_returns_immediately() {
        let mut f = quadratic(vec![2.0, 2.0]);
        let res =
            lbfgs_minimize(&mut f, &[2.0, 2.0], &LbfgsOptions::default(), &mut |_, _, _| {})
                .unwrap();
        assert_eq!(res.status, LbfgsStatus::GradientTolerance);
        assert_eq!(res.iters, 0);
    }

    #[test]
    fn accepted_steps_satisfy_strong_wolfe() {
        let mut f = |z: &[f64]| {
            let v = z[0].powi(4) + (z[1] - 1.0).powi(2) + (z[0] * z[1]).powi(2);
            let g = vec![
                4.0 * z[0].powi(3) + 2.0 * z[0] * z[1] * z[1],
                2.0 * (z[1] - 1.0) + 2.0 * z[0] * z[0] * z[1],
            ];
            Ok((v, g))
        };
        let opts = LbfgsOptions {
            record_steps: true,
            ..Default::default()
        };
        let res = lbfgs_minimize(&mut f, &[2.0, -3.0], &opts, &mut |_, _, _| {}).unwrap();
        assert!(!res.steps.is_empty());
        for s in &res.steps {
            assert!(
                s.f1 <= s.f0 + 1e-4 * s.alpha * s.dir_deriv0 + 1e-12,
                "Armijo violated: {s:?}"
            );
            assert!(
                s.dir_deriv1.abs() <= 0.9 * s.dir_deriv0.abs() + 1e-12,
                "curvature violated: {s:?}"
            );
        }
    }

    #[test]
    fn nonfinite_start_rejected() {
        let mut f = |_: &[f64]| Ok((f64::NAN, vec![0.0]));
        assert!(
            lbfgs_minimize(&mut f, &[0.0], &LbfgsOptions::default(), &mut |_, _, _| {}).is_err()
        );
    }
}
