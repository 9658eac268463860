//! Explicit Runge–Kutta integration with dense save points.
//!
//! Two solvers are provided: a fixed-step classical RK4 whose step
//! sequence is deterministic and generic over [`Real`] (so training can
//! differentiate straight through the unrolled steps), and an adaptive
//! Dormand–Prince 5(4) pair with PI step control for evaluation runs.
//! Both land exactly on requested boundary times; discontinuous inputs
//! never change value inside a step as long as their sample times are
//! listed as boundaries.

use crate::autodiff::Real;
use crate::error::{Error, Result};

/// Right-hand side of a first-order ODE system.
pub trait OdeField<S: Real> {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[S], t: f64) -> Vec<S>;
}

/// Adapter turning a closure into an [`OdeField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<S: Real, F: Fn(&[S], f64) -> Vec<S>> OdeField<S> for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[S], t: f64) -> Vec<S> {
        (self.f)(x, t)
    }
}

/// States sampled at the requested save times.
#[derive(Debug, Clone)]
pub struct Trajectory<S = f64> {
    pub times: Vec<f64>,
    pub states: Vec<Vec<S>>,
}

impl Trajectory<f64> {
    pub fn max_norm(&self) -> f64 {
        self.states
            .iter()
            .flat_map(|row| row.iter().map(|x| x.abs()))
            .fold(0.0, f64::max)
    }
}

/// Fixed step size plus the times the stepper must land on exactly.
#[derive(Debug, Clone)]
pub struct StepPlan {
    pub h: f64,
    pub boundaries: Vec<f64>,
}

impl StepPlan {
    /// Sorts and dedups the boundary list.
    pub fn new(h: f64, mut boundaries: Vec<f64>) -> Self {
        assert!(h > 0.0, "step size must be positive");
        boundaries.sort_by(|a, b| a.partial_cmp(b).unwrap());
        boundaries.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        StepPlan { h, boundaries }
    }
}

fn time_tol(span: (f64, f64)) -> f64 {
    1e-9 * span.0.abs().max(span.1.abs()).max(1.0)
}

/// Time passed to stages that sit on the right endpoint of a step.
/// Nudged inside the step so that piecewise-constant inputs whose
/// switching times are step boundaries are sampled at their left limit,
/// keeping the quadrature exact across the switch. The relative nudge
/// is far below every tolerance used with smooth fields.
fn stage_end_time(t: f64, h: f64) -> f64 {
    t + h * (1.0 - 1e-9)
}

/// One classical 4-stage Runge–Kutta step from `t` to `t + h`.
pub fn rk4_step<S: Real, F: OdeField<S>>(field: &F, x: &[S], t: f64, h: f64) -> Result<Vec<S>> {
    debug_assert!(h > 0.0);
    let n = x.len();
    let hs = S::from_f64(h);
    let half = S::from_f64(0.5);
    let k1 = field.eval(x, t);
    let x2: Vec<S> = (0..n).map(|i| x[i] + half * hs * k1[i]).collect();
    let k2 = field.eval(&x2, t + 0.5 * h);
    let x3: Vec<S> = (0..n).map(|i| x[i] + half * hs * k2[i]).collect();
    let k3 = field.eval(&x3, t + 0.5 * h);
    let x4: Vec<S> = (0..n).map(|i| x[i] + hs * k3[i]).collect();
    let k4 = field.eval(&x4, stage_end_time(t, h));
    let sixth = S::from_f64(1.0 / 6.0);
    let two = S::from_f64(2.0);
    let out: Vec<S> = (0..n)
        .map(|i| x[i] + hs * sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
        .collect();
    for v in &out {
        if !v.value().is_finite() {
            return Err(Error::IntegrationFailure { t });
        }
    }
    Ok(out)
}

/// Repeated RK4 with steps shortened to land exactly on every plan
/// boundary; states are recorded at `save_times` (which must all be
/// plan boundaries or span endpoints).
pub fn integrate_fixed<S: Real, F: OdeField<S>>(
    field: &F,
    x0: &[S],
    span: (f64, f64),
    plan: &StepPlan,
    save_times: &[f64],
) -> Result<Trajectory<S>> {
    let (t0, tf) = span;
    let tol = time_tol(span);
    let mut boundaries: Vec<f64> = plan
        .boundaries
        .iter()
        .copied()
        .filter(|&b| b > t0 + tol && b < tf - tol)
        .collect();
    boundaries.push(tf);

    let mut traj = Trajectory {
        times: Vec::with_capacity(save_times.len()),
        states: Vec::with_capacity(save_times.len()),
    };
    let mut si = 0;
    if si < save_times.len() && (save_times[si] - t0).abs() <= tol {
        traj.times.push(save_times[si]);
        traj.states.push(x0.to_vec());
        si += 1;
    }

    let mut x = x0.to_vec();
    let mut t = t0;
    for &b in &boundaries {
        while t < b - tol {
            let h = plan.h.min(b - t);
            x = rk4_step(field, &x, t, h)?;
            t = if t + h >= b - tol { b } else { t + h };
            if si < save_times.len() && (t - save_times[si]).abs() <= tol {
                traj.times.push(save_times[si]);
                traj.states.push(x.clone());
                si += 1;
            }
        }
    }
    if si != save_times.len() {
        return Err(Error::InvalidInput(format!(
            "save time {} is not a step boundary",
            save_times[si]
        )));
    }
    Ok(traj)
}

// Dormand–Prince 5(4) coefficients.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FACTOR_MIN: f64 = 0.2;
const FACTOR_MAX: f64 = 5.0;

/// Embedded 5(4) pair with PI step-size control; save times are hit by
/// exact landing. The local error estimate per accepted step satisfies
/// the scaled-norm condition `err ≤ atol + rtol·|x|`.
pub fn integrate_adaptive<F: OdeField<f64>>(
    field: &F,
    x0: &[f64],
    span: (f64, f64),
    rtol: f64,
    atol: f64,
    save_times: &[f64],
) -> Result<Trajectory<f64>> {
    assert!(rtol > 0.0 && atol > 0.0);
    let (t0, tf) = span;
    let tol = time_tol(span);
    let n = x0.len();

    let mut traj = Trajectory {
        times: Vec::with_capacity(save_times.len()),
        states: Vec::with_capacity(save_times.len()),
    };
    let mut si = 0;
    if si < save_times.len() && (save_times[si] - t0).abs() <= tol {
        traj.times.push(save_times[si]);
        traj.states.push(x0.to_vec());
        si += 1;
    }

    let mut t = t0;
    let mut x = x0.to_vec();
    let mut h = (tf - t0) / 100.0;
    let mut err_prev: f64 = 1.0;
    let h_floor = 1e-12 * (tf - t0);

    while t < tf - tol {
        // next landing target: the next save time, else the final time
        let target = if si < save_times.len() {
            save_times[si].min(tf)
        } else {
            tf
        };
        let h_try = h.min(target - t);
        if h_try < h_floor {
            return Err(Error::StepUnderflow { t, h: h_try });
        }

        let mut k = [const { Vec::new() }; 7];
        k[0] = field.eval(&x, t);
        for s in 1..7 {
            let xs: Vec<f64> = (0..n)
                .map(|i| {
                    x[i] + h_try
                        * (0..s).map(|j| DP_A[s][j] * k[j][i]).sum::<f64>()
                })
                .collect();
            let ts = if DP_C[s] == 1.0 {
                stage_end_time(t, h_try)
            } else {
                t + DP_C[s] * h_try
            };
            k[s] = field.eval(&xs, ts);
        }
        let x5: Vec<f64> = (0..n)
            .map(|i| x[i] + h_try * (0..7).map(|j| DP_B5[j] * k[j][i]).sum::<f64>())
            .collect();
        if x5.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure { t });
        }
        let mut err_sq = 0.0;
        for i in 0..n {
            let e = h_try
                * (0..7)
                    .map(|j| (DP_B5[j] - DP_B4[j]) * k[j][i])
                    .sum::<f64>();
            let sc = atol + rtol * x[i].abs().max(x5[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (err_sq / n as f64).sqrt().max(1e-16);

        if err <= 1.0 {
            t = if t + h_try >= target - tol { target } else { t + h_try };
            x = x5;
            if si < save_times.len() && (t - save_times[si]).abs() <= tol {
                traj.times.push(save_times[si]);
                traj.states.push(x.clone());
                si += 1;
            }
            // PI controller
            let factor = SAFETY * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h = h_try * factor.clamp(FACTOR_MIN, FACTOR_MAX);
            err_prev = err;
        } else {
            h = h_try * (SAFETY * err.powf(-0.2)).clamp(FACTOR_MIN, 1.0);
        }
    }
    if si != save_times.len() {
        return Err(Error::InvalidInput(
            "save times outside the integration span".into(),
        ));
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn exp_field() -> FnField<impl Fn(&[f64], f64) -> Vec<f64>> {
        FnField::new(1, |x: &[f64], _t| vec![x[0]])
    }

    fn decay_field() -> FnField<impl Fn(&[f64], f64) -> Vec<f64>> {
        FnField::new(1, |x: &[f64], _t| vec![-x[0]])
    }

    #[test]
    fn rk4_exponential() {
        let x = rk4_step(&exp_field(), &[1.0], 0.0, 0.1).unwrap();
        assert_abs_diff_eq!(x[0], (0.1_f64).exp(), epsilon = 1e-7);
    }

    #[test]
    fn rk4_zero_field_fixed_point() {
        let f = FnField::new(2, |_: &[f64], _| vec![0.0, 0.0]);
        let x = rk4_step(&f, &[2.0, 0.0], 0.0, 0.7).unwrap();
        assert_eq!(x, vec![2.0, 0.0]);
    }

    #[test]
    fn rk4_constant_field_linear() {
        let f = FnField::new(1, |_: &[f64], _| vec![1.0]);
        let x = rk4_step(&f, &[0.0], 0.0, 0.5).unwrap();
        assert_abs_diff_eq!(x[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rk4_nonfinite_error() {
        let f = FnField::new(1, |x: &[f64], _| vec![x[0] * f64::NAN]);
        let err = rk4_step(&f, &[1.0], 3.0, 0.1).unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { t } if t == 3.0));
    }

    #[test]
    fn fixed_exponential_decay() {
        let plan = StepPlan::new(0.01, vec![0.0, 1.0]);
        let traj = integrate_fixed(&decay_field(), &[1.0], (0.0, 1.0), &plan, &[0.0, 1.0]).unwrap();
        assert_eq!(traj.times, vec![0.0, 1.0]);
        assert_abs_diff_eq!(traj.states[1][0], (-1.0_f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn fixed_initial_condition_verbatim() {
        let f = FnField::new(2, |x: &[f64], _t| vec![-x[0], -x[1]]);
        let plan = StepPlan::new(0.05, vec![]);
        let traj = integrate_fixed(&f, &[2.0, 0.0], (0.0, 6.0), &plan, &[0.0]).unwrap();
        assert_eq!(traj.states[0], vec![2.0, 0.0]);
    }

    #[test]
    fn fixed_cosine_integral() {
        let f = FnField::new(1, |_: &[f64], t: f64| vec![t.cos()]);
        let pi = std::f64::consts::PI;
        let plan = StepPlan::new(pi / 100.0, vec![]);
        let traj = integrate_fixed(&f, &[0.0], (0.0, pi), &plan, &[pi]).unwrap();
        assert_abs_diff_eq!(traj.states[0][0], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn observed_order_four() {
        // halving h cuts the endpoint error by ~2^4
        let endpoint = |h: f64| {
            let plan = StepPlan::new(h, vec![]);
            integrate_fixed(&decay_field(), &[1.0], (0.0, 1.0), &plan, &[1.0]).unwrap().states[0]
                [0]
        };
        let exact = (-1.0_f64).exp();
        let e1 = (endpoint(0.1) - exact).abs();
        let e2 = (endpoint(0.05) - exact).abs();
        let ratio = e1 / e2;
        assert!((14.0..=18.0).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn fixed_determinism() {
        let plan = StepPlan::new(0.013, vec![0.4, 0.8]);
        let run = || {
            integrate_fixed(&decay_field(), &[1.0], (0.0, 1.0), &plan, &[0.4, 0.8, 1.0]).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn landing_preserves_order_across_discontinuity() {
        // step input at t = 1; with a boundary there the quadrature is exact
        let f = FnField::new(1, |_: &[f64], t: f64| vec![if t >= 1.0 { 1.0 } else { 0.0 }]);
        let plan = StepPlan::new(0.3, vec![1.0]);
        let traj = integrate_fixed(&f, &[0.0], (0.0, 2.0), &plan, &[2.0]).unwrap();
        assert_abs_diff_eq!(traj.states[0][0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn adaptive_exponential_decay() {
        let traj =
            integrate_adaptive(&decay_field(), &[1.0], (0.0, 1.0), 1e-6, 1e-8, &[1.0]).unwrap();
        assert_abs_diff_eq!(traj.states[0][0], (-1.0_f64).exp(), epsilon = 1e-5);
    }

    #[test]
    fn adaptive_constant_trajectory() {
        let f = FnField::new(2, |_: &[f64], _| vec![0.0, 0.0]);
        let traj =
            integrate_adaptive(&f, &[3.0, -1.0], (0.0, 10.0), 1e-3, 1e-6, &[0.0, 5.0, 10.0])
                .unwrap();
        for row in &traj.states {
            assert_eq!(row, &vec![3.0, -1.0]);
        }
    }

    #[test]
    fn adaptive_stiffness_underflow() {
        // blows up in finite time; the controller collapses h
        let f = FnField::new(1, |x: &[f64], _| vec![x[0] * x[0]]);
        let res = integrate_adaptive(&f, &[1.0], (0.0, 2.0), 1e-8, 1e-10, &[2.0]);
        assert!(matches!(
            res,
            Err(Error::StepUnderflow { .. }) | Err(Error::IntegrationFailure { .. })
        ));
    }
}
