//! Single- and multiple-shooting objectives for fitting parametrized
//! ODE fields to time series.
//!
//! The span is partitioned by a grid; each interval gets a free initial
//! state (a shooting variable) and is integrated independently. The
//! data misfit is charged per interval, and continuity between
//! consecutive intervals becomes an equality constraint on the defect
//! `x_f^(i) − s_(i+1)`. With one interval this degenerates to plain
//! single shooting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, ScalarProgram, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::RegSpec;
use crate::ode::{integrate_fixed, OdeField, StepPlan, Trajectory};
use crate::optim::{ConstrainedProgram, ConstraintHandler, PenalizedEval};

/// Sampled observations: strictly increasing times plus a values matrix.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidInput("times/values length mismatch".into()));
        }
        if times.is_empty() {
            return Err(Error::InvalidInput("empty time series".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "times must be strictly increasing".into(),
            ));
        }
        let width = values[0].len();
        for (t, row) in times.iter().zip(&values) {
            if row.len() != width {
                return Err(Error::InvalidInput("ragged values matrix".into()));
            }
            if !t.is_finite() || row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite sample".into()));
            }
        }
        Ok(TimeSeries { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_obs(&self) -> usize {
        self.values[0].len()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((0..self.n_obs()).map(|i| format!("state_{i}")));
        w.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.values) {
            let mut rec = vec![format!("{t:.17e}")];
            rec.extend(row.iter().map(|v| format!("{v:.17e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut it = rec.iter();
            let t: f64 = it
                .next()
                .ok_or_else(|| Error::Format("empty row".into()))?
                .parse()
                .map_err(|e| Error::Format(format!("bad time: {e}")))?;
            let row: std::result::Result<Vec<f64>, _> = it.map(str::parse).collect();
            times.push(t);
            values.push(row.map_err(|e| Error::Format(format!("bad value: {e}")))?);
        }
        TimeSeries::new(times, values)
    }
}

/// Sum of squared errors over equal-shaped matrices.
pub fn sse(pred: &[Vec<f64>], obs: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != obs.len() || pred.iter().zip(obs).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::InvalidInput("shape mismatch in sse".into()));
    }
    Ok(pred
        .iter()
        .zip(obs)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
        .sum())
}

/// Root-mean-square error over equal-length vectors.
pub fn rmse(pred: &[f64], obs: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != obs.len() {
        return Err(Error::InvalidInput("rmse needs equal nonempty inputs".into()));
    }
    let ms: f64 = pred
        .iter()
        .zip(obs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(ms.sqrt())
}

/// Shooting grid boundaries `τ_0 < τ_1 < … < τ_N`.
#[derive(Debug, Clone)]
pub struct ShootingGrid {
    pub boundaries: Vec<f64>,
}

impl ShootingGrid {
    pub fn n_intervals(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn span(&self) -> (f64, f64) {
        (self.boundaries[0], *self.boundaries.last().unwrap())
    }
}

/// Uniform grid with boundaries snapped to the nearest data time.
pub fn make_grid(span: (f64, f64), n_intervals: usize, data_times: &[f64]) -> Result<ShootingGrid> {
    assert!(n_intervals >= 1);
    let (t0, tf) = span;
    let snap = |t: f64| -> f64 {
        data_times
            .iter()
            .copied()
            .min_by(|a, b| (a - t).abs().partial_cmp(&(b - t).abs()).unwrap())
            .unwrap_or(t)
    };
    let mut boundaries = Vec::with_capacity(n_intervals + 1);
    boundaries.push(t0);
    for j in 1..n_intervals {
        boundaries.push(snap(t0 + j as f64 * (tf - t0) / n_intervals as f64));
    }
    boundaries.push(tf);
    if boundaries.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "{n_intervals} intervals produce non-distinct snapped boundaries"
        )));
    }
    Ok(ShootingGrid { boundaries })
}

/// Layout of the decision vector `z = [θ; s_1; …; s_N]` (s_1 omitted
/// when pinned to a known initial state).
#[derive(Debug, Clone)]
pub struct DecisionLayout {
    pub n_params: usize,
    pub n_x: usize,
    pub n_intervals: usize,
    pub pinned_s1: Option<Vec<f64>>,
}

impl DecisionLayout {
    pub fn n_free_states(&self) -> usize {
        if self.pinned_s1.is_some() {
            self.n_intervals - 1
        } else {
            self.n_intervals
        }
    }

    pub fn dim(&self) -> usize {
        self.n_params + self.n_x * self.n_free_states()
    }

    pub fn params<'a, S>(&self, z: &'a [S]) -> &'a [S] {
        &z[..self.n_params]
    }

    /// Offset of shooting state `i` (0-based interval index) in `z`,
    /// or None when that state is pinned.
    pub fn state_offset(&self, i: usize) -> Option<usize> {
        match self.pinned_s1 {
            Some(_) if i == 0 => None,
            Some(_) => Some(self.n_params + (i - 1) * self.n_x),
            None => Some(self.n_params + i * self.n_x),
        }
    }

    pub fn state<S: Real>(&self, z: &[S], i: usize) -> Vec<S> {
        match self.state_offset(i) {
            Some(off) => z[off..off + self.n_x].to_vec(),
            None => self
                .pinned_s1
                .as_ref()
                .unwrap()
                .iter()
                .map(|&v| S::from_f64(v))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Every shooting state starts at the first observation.
    ReplicateX0,
    /// Shooting states start at the observed value at their boundary.
    DataAtBoundaries,
}

/// A parametrized right-hand side (the trainable field) plus its
/// regularization term.
pub trait ParamField: Sync {
    fn state_dim(&self) -> usize;
    fn param_count(&self) -> usize;
    fn eval<S: Real>(&self, params: &[S], x: &[S], t: f64) -> Vec<S>;
    fn reg_term<S: Real>(&self, params: &[S], reg: &RegSpec) -> S;
}

struct Bound<'a, F, S> {
    field: &'a F,
    params: &'a [S],
}

impl<'a, F: ParamField, S: Real> OdeField<S> for Bound<'a, F, S> {
    fn dim(&self) -> usize {
        self.field.state_dim()
    }
    fn eval(&self, x: &[S], t: f64) -> Vec<S> {
        self.field.eval(self.params, x, t)
    }
}

/// Bind a trainable field to fixed parameters, yielding a plain ODE
/// right-hand side for the integrators.
pub fn field_adapter<'a, F: ParamField>(
    field: &'a F,
    params: &'a [f64],
) -> impl OdeField<f64> + 'a {
    Bound { field, params }
}

/// Initial decision vector for a shooting problem.
pub fn init_decision(
    grid: &ShootingGrid,
    data: &TimeSeries,
    strategy: InitStrategy,
    theta: &[f64],
    n_x: usize,
    pinned_s1: Option<Vec<f64>>,
) -> Result<(DecisionLayout, Vec<f64>)> {
    let layout = DecisionLayout {
        n_params: theta.len(),
        n_x,
        n_intervals: grid.n_intervals(),
        pinned_s1,
    };
    let mut z = Vec::with_capacity(layout.dim());
    z.extend_from_slice(theta);
    // unobserved state components fall back to 0
    let pad = |row: &[f64]| -> Vec<f64> {
        (0..n_x).map(|k| row.get(k).copied().unwrap_or(0.0)).collect()
    };
    let first = layout.pinned_s1.is_some() as usize;
    for i in first..grid.n_intervals() {
        let s = match strategy {
            InitStrategy::ReplicateX0 => pad(&data.values[0]),
            InitStrategy::DataAtBoundaries => {
                let tau = grid.boundaries[i];
                let idx = data
                    .times
                    .iter()
                    .position(|&t| (t - tau).abs() <= 1e-9 * tau.abs().max(1.0))
                    .ok_or_else(|| {
                        Error::InitFailure(format!("no observation at boundary {tau}"))
                    })?;
                pad(&data.values[idx])
            }
        };
        z.extend(s);
    }
    Ok((layout, z))
}

/// Full evaluation of the shooting objective at a decision vector.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// `C = data SSE + reg_weight · R(θ)`
    pub cost: f64,
    pub data_sse: f64,
    pub reg_term: f64,
    /// Concatenated defects `x_f^(i) − s_(i+1)`, length `(N−1)·n_x`.
    pub defects: Vec<f64>,
    /// Per-interval solutions concatenated at the data times
    /// (discontinuous while defects are nonzero).
    pub stitched: Trajectory,
    pub interval_of_row: Vec<usize>,
}

pub struct ShootingProblem<F: ParamField> {
    pub field: F,
    pub grid: ShootingGrid,
    pub data: TimeSeries,
    pub reg: RegSpec,
    pub plan: StepPlan,
    pub layout: DecisionLayout,
    /// Data index range `[start, end)` owned by each interval:
    /// left boundary inclusive, right exclusive, final boundary
    /// charged to the last interval.
    owned: Vec<(usize, usize)>,
}

impl<F: ParamField> ShootingProblem<F> {
    pub fn new(
        field: F,
        grid: ShootingGrid,
        data: TimeSeries,
        reg: RegSpec,
        step_h: f64,
        pinned_s1: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n_x = field.state_dim();
        if data.n_obs() > n_x {
            return Err(Error::InvalidInput(format!(
                "data has {} observed components but the state dimension is {n_x}",
                data.n_obs()
            )));
        }
        if let Some(p) = &pinned_s1 {
            if p.len() != n_x {
                return Err(Error::InvalidInput("pinned s_1 has wrong length".into()));
            }
        }
        let n = grid.n_intervals();
        let tol = 1e-9 * grid.span().1.abs().max(1.0);
        let mut owned = Vec::with_capacity(n);
        let mut d = 0usize;
        for i in 0..n {
            let hi = grid.boundaries[i + 1];
            let start = d;
            while d < data.len()
                && (data.times[d] < hi - tol || (i == n - 1 && data.times[d] <= hi + tol))
            {
                d += 1;
            }
            owned.push((start, d));
        }
        if d != data.len() {
            return Err(Error::InvalidInput(
                "data points outside the shooting span".into(),
            ));
        }
        let mut boundaries = data.times.clone();
        boundaries.extend_from_slice(&grid.boundaries);
        let plan = StepPlan::new(step_h, boundaries);
        let layout = DecisionLayout {
            n_params: field.param_count(),
            n_x,
            n_intervals: n,
            pinned_s1,
        };
        Ok(ShootingProblem {
            field,
            grid,
            data,
            reg,
            plan,
            layout,
            owned,
        })
    }

    pub fn n_x(&self) -> usize {
        self.layout.n_x
    }

    /// Integrate interval `i` from its shooting state; returns the
    /// interval SSE, the final state, and the states at owned data times.
    fn eval_interval<S: Real>(
        &self,
        i: usize,
        params: &[S],
        s_i: &[S],
    ) -> Result<(S, Vec<S>, Vec<Vec<S>>)> {
        let (t_a, t_b) = (self.grid.boundaries[i], self.grid.boundaries[i + 1]);
        let tol = 1e-9 * t_b.abs().max(1.0);
        let (d0, d1) = self.owned[i];
        let mut save: Vec<f64> = self.data.times[d0..d1].to_vec();
        let endpoint_saved = save.last().is_some_and(|&t| (t - t_b).abs() <= tol);
        if !endpoint_saved {
            save.push(t_b);
        }
        let bound = Bound {
            field: &self.field,
            params,
        };
        let traj = integrate_fixed(&bound, s_i, (t_a, t_b), &self.plan, &save)
            .map_err(|e| Error::IntervalFailure {
                interval: i,
                source: Box::new(e),
            })?;
        let x_f = traj.states.last().unwrap().clone();
        let n_rows = d1 - d0;
        let mut sse_i = S::zero();
        for (r, row) in traj.states[..n_rows.min(traj.states.len())].iter().enumerate() {
            for (k, &obs) in self.data.values[d0 + r].iter().enumerate() {
                let e = row[k] - S::from_f64(obs);
                sse_i = sse_i + e * e;
            }
        }
        let owned_states = traj.states[..n_rows].to_vec();
        Ok((sse_i, x_f, owned_states))
    }

    /// Evaluate cost, defects and the stitched trajectory (plain `f64`;
    /// intervals run in parallel, merged in index order).
    pub fn evaluate(&self, z: &[f64]) -> Result<Evaluation> {
        let n = self.grid.n_intervals();
        let params = self.layout.params(z);
        let per: Vec<(f64, Vec<f64>, Vec<Vec<f64>>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let s_i = self.layout.state(z, i);
                self.eval_interval::<f64>(i, params, &s_i)
            })
            .collect::<Result<_>>()?;

        let data_sse: f64 = per.iter().map(|(s, _, _)| s).sum();
        let reg_term = self.field.reg_term(params, &self.reg).value();
        let mut defects = Vec::with_capacity((n - 1) * self.layout.n_x);
        for i in 0..n - 1 {
            let s_next = self.layout.state(z, i + 1);
            for (xf, sn) in per[i].1.iter().zip(&s_next) {
                defects.push(xf - sn);
            }
        }
        let mut stitched = Trajectory {
            times: Vec::with_capacity(self.data.len()),
            states: Vec::with_capacity(self.data.len()),
        };
        let mut interval_of_row = Vec::with_capacity(self.data.len());
        for (i, (_, _, states)) in per.iter().enumerate() {
            let (d0, _) = self.owned[i];
            for (r, row) in states.iter().enumerate() {
                stitched.times.push(self.data.times[d0 + r]);
                stitched.states.push(row.clone());
                interval_of_row.push(i);
            }
        }
        Ok(Evaluation {
            cost: data_sse + self.reg.weight * reg_term,
            data_sse,
            reg_term,
            defects,
            stitched,
            interval_of_row,
        })
    }
}

impl<F: ParamField> ConstrainedProgram for ShootingProblem<F> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn constraint_len(&self) -> usize {
        (self.grid.n_intervals() - 1) * self.layout.n_x
    }

    fn eval(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let ev = self.evaluate(z)?;
        Ok((ev.cost, ev.defects))
    }

    /// Gradient of `φ = C + handler-term(h)` via one tape per shooting
    /// interval (run in parallel, combined by ordered summation) plus
    /// an analytic term for the linear dependence of `h` on `s_(i+1)`.
    fn value_grad(&self, z: &[f64], handler: &ConstraintHandler) -> Result<PenalizedEval> {
        let n = self.grid.n_intervals();
        let n_x = self.layout.n_x;
        let params = self.layout.params(z);

        // primal pass: cost and defects
        let ev = self.evaluate(z)?;
        let phi = ev.cost + handler.term(&ev.defects[..]);
        let weights = handler.defect_weights(&ev.defects);

        // taped pass per interval, seeded with ∂φ/∂sse = 1 and
        // ∂φ/∂x_f = w for the interval's defect block
        let per: Vec<(Vec<f64>, Option<Vec<f64>>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let tape = Tape::new();
                let pvars = tape.vars(params);
                let s_offset = self.layout.state_offset(i);
                let svars: Vec<Var> = match s_offset {
                    Some(off) => tape.vars(&z[off..off + n_x]),
                    None => self
                        .layout
                        .pinned_s1
                        .as_ref()
                        .unwrap()
                        .iter()
                        .map(|&v| Var::from_f64(v))
                        .collect(),
                };
                let (sse_i, x_f, _) = self.eval_interval::<Var>(i, &pvars, &svars)?;
                let mut seeds = Vec::with_capacity(1 + n_x);
                if sse_i.index() != usize::MAX {
                    seeds.push((sse_i.index(), 1.0));
                }
                if i + 1 < n {
                    for (k, xf) in x_f.iter().enumerate() {
                        let w = weights[i * n_x + k];
                        if w != 0.0 && xf.index() != usize::MAX {
                            seeds.push((xf.index(), w));
                        }
                    }
                }
                let adj = tape.backward_seeded(&seeds);
                let d_theta: Vec<f64> = pvars.iter().map(|v| adj[v.index()]).collect();
                let d_s = s_offset
                    .map(|_| svars.iter().map(|v| adj[v.index()]).collect::<Vec<f64>>());
                Ok((d_theta, d_s))
            })
            .collect::<Result<_>>()?;

        let mut grad = vec![0.0; self.layout.dim()];
        for (i, (d_theta, d_s)) in per.iter().enumerate() {
            for (g, d) in grad[..self.layout.n_params].iter_mut().zip(d_theta) {
                *g += d;
            }
            if let (Some(ds), Some(off)) = (d_s, self.layout.state_offset(i)) {
                for (k, d) in ds.iter().enumerate() {
                    grad[off + k] += d;
                }
            }
            // h_i = x_f^(i) − s_(i+1): the −w part lands on s_(i+1)
            if i + 1 < n {
                let off = self.layout.state_offset(i + 1).unwrap();
                for k in 0..n_x {
                    grad[off + k] -= weights[i * n_x + k];
                }
            }
        }
        // regularizer on its own tape
        if self.reg.weight != 0.0 {
            let tape = Tape::new();
            let pvars = tape.vars(params);
            let r = self.field.reg_term(&pvars, &self.reg);
            if r.index() != usize::MAX {
                let adj = tape.backward_seeded(&[(r.index(), self.reg.weight)]);
                for (g, v) in grad[..self.layout.n_params].iter_mut().zip(&pvars) {
                    *g += adj[v.index()];
                }
            }
        }
        if let Some(node) = grad.iter().position(|x| !x.is_finite()) {
            return Err(Error::GradientFailure { node });
        }
        Ok(PenalizedEval {
            phi,
            grad,
            cost: ev.cost,
            defects: ev.defects,
        })
    }
}

/// The handler-augmented shooting objective as a single scalar program
/// (one tape, or plain `f64` for the finite-difference oracle).
pub struct PenalizedShooting<'a, F: ParamField> {
    pub problem: &'a ShootingProblem<F>,
    pub handler: ConstraintHandler,
}

impl<'a, F: ParamField> ScalarProgram for PenalizedShooting<'a, F> {
    fn eval<S: Real>(&self, z: &[S]) -> S {
        let p = self.problem;
        let n = p.grid.n_intervals();
        let params = p.layout.params(z);
        let mut cost = S::zero();
        let mut x_fs = Vec::with_capacity(n);
        for i in 0..n {
            let s_i = p.layout.state(z, i);
            let (sse_i, x_f, _) = p
                .eval_interval(i, params, &s_i)
                .expect("integration failure inside scalar program");
            cost = cost + sse_i;
            x_fs.push(x_f);
        }
        cost = cost + S::from_f64(p.reg.weight) * p.field.reg_term(params, &p.reg);
        let mut h = Vec::with_capacity((n - 1) * p.layout.n_x);
        for i in 0..n - 1 {
            let s_next = p.layout.state(z, i + 1);
            for (xf, sn) in x_fs[i].iter().zip(&s_next) {
                h.push(*xf - *sn);
            }
        }
        cost + self.handler.term(&h)
    }
}

/// CSV export `t,state_0,…,state_k,interval`.
pub fn write_trajectory_csv(
    path: &std::path::Path,
    traj: &Trajectory,
    intervals: Option<&[usize]>,
) -> Result<()> {
    let n_x = traj.states.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..n_x).map(|i| format!("state_{i}")));
    header.push("interval".into());
    w.write_record(&header)?;
    for (r, (t, row)) in traj.times.iter().zip(&traj.states).enumerate() {
        let mut rec = vec![format!("{t:.17e}")];
        rec.extend(row.iter().map(|v| format!("{v:.17e}")));
        rec.push(intervals.map_or(0, |iv| iv[r]).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV export `boundary_time,component,defect`.
pub fn write_defects_csv(
    path: &std::path::Path,
    grid: &ShootingGrid,
    n_x: usize,
    defects: &[f64],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["boundary_time", "component", "defect"])?;
    for (j, d) in defects.iter().enumerate() {
        let boundary = grid.boundaries[j / n_x + 1];
        w.write_record(&[
            format!("{boundary:.17e}"),
            (j % n_x).to_string(),
            format!("{d:.17e}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}
