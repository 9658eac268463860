//! Cascaded-tanks benchmark: dataset loading, the piecewise-constant
//! input signal with prefix-sum windowed integrals, and the five-input
//! neural field.

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::nn::{mlp_forward, regularizer, MlpSpec, RegSpec};
use crate::shooting::{ParamField, TimeSeries};

/// Benchmark sampling period in seconds.
pub const TANKS_PERIOD: f64 = 4.0;
/// Benchmark record count per column.
pub const TANKS_SAMPLES: usize = 1024;

/// Exogenous input samples with piecewise-constant semantics:
/// `u(t) = u_k` on `[kΔ, (k+1)Δ)`, held at `u_0` before zero and at the
/// last sample past the series. Prefix sums give O(1) windowed integrals.
#[derive(Debug, Clone)]
pub struct ControlSignal {
    pub samples: Vec<f64>,
    pub period: f64,
    prefix: Vec<f64>,
}

impl ControlSignal {
    pub fn new(samples: Vec<f64>, period: f64) -> Self {
        assert!(period > 0.0 && !samples.is_empty());
        let mut prefix = Vec::with_capacity(samples.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for &u in &samples {
            acc += period * u;
            prefix.push(acc);
        }
        ControlSignal {
            samples,
            period,
            prefix,
        }
    }

    /// `u(t)`, left-closed cells.
    pub fn value(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.samples[0];
        }
        let k = (t / self.period).floor() as usize;
        if k >= self.samples.len() {
            *self.samples.last().unwrap()
        } else {
            self.samples[k]
        }
    }

    /// Exact running integral `∫_0^t u`, valid for any real `t`
    /// (negative arguments use the pre-span constant `u_0`).
    fn running_integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.samples[0] * t;
        }
        let end = self.samples.len() as f64 * self.period;
        if t >= end {
            return self.prefix[self.samples.len()] + (t - end) * self.samples.last().unwrap();
        }
        let k = (t / self.period).floor() as usize;
        self.prefix[k] + (t - k as f64 * self.period) * self.samples[k]
    }

    /// Exact integral of the signal over `[t − τ, t]`.
    pub fn integral_window(&self, t: f64, tau: f64) -> f64 {
        assert!(tau >= 0.0);
        self.running_integral(t) - self.running_integral(t - tau)
    }
}

/// Tuned tanks hyperparameters; defaults are the reported values.
#[derive(Debug, Clone)]
pub struct TanksSpec {
    pub tau_d: f64,
    pub tau_i: f64,
    pub rho_l2: f64,
    /// Train/validation split time within the estimation half.
    pub split: f64,
}

impl Default for TanksSpec {
    fn default() -> Self {
        TanksSpec {
            tau_d: 79.0,
            tau_i: 164.0,
            rho_l2: 5.96e-2,
            split: 2048.0,
        }
    }
}

/// The benchmark's estimation and validation column pairs, both on the
/// 4 s grid `{0, 4, …, 4092}`.
#[derive(Debug, Clone)]
pub struct TanksDataset {
    pub est_u: ControlSignal,
    pub est_y: TimeSeries,
    pub test_u: ControlSignal,
    pub test_y: TimeSeries,
}

impl TanksDataset {
    /// Split the estimation series at `split` seconds into training and
    /// validation halves.
    pub fn split_train_val(&self, split: f64) -> (TimeSeries, TimeSeries) {
        let cut = self
            .est_y
            .times
            .iter()
            .position(|&t| t >= split)
            .unwrap_or(self.est_y.len());
        let train = TimeSeries::new(
            self.est_y.times[..cut].to_vec(),
            self.est_y.values[..cut].to_vec(),
        )
        .unwrap();
        let val = TimeSeries::new(
            self.est_y.times[cut..].to_vec(),
            self.est_y.values[cut..].to_vec(),
        )
        .unwrap();
        (train, val)
    }
}

/// Load the benchmark CSV (`uEst,yEst,uVal,yVal`, 1024 rows; an
/// optional leading time column is ignored — times are reconstructed
/// from the 4 s period).
pub fn load_tanks(path: &std::path::Path) -> Result<TanksDataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Format(format!("missing column '{name}'")))
    };
    let cols = [col("uEst")?, col("yEst")?, col("uVal")?, col("yVal")?];
    let mut data: [Vec<f64>; 4] = Default::default();
    for rec in rdr.records() {
        let rec = rec?;
        for (j, &c) in cols.iter().enumerate() {
            let raw = rec
                .get(c)
                .ok_or_else(|| Error::Format("short row".into()))?;
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("bad value '{raw}': {e}")))?;
            if !v.is_finite() {
                return Err(Error::Format("non-finite value".into()));
            }
            data[j].push(v);
        }
    }
    if data[0].len() != TANKS_SAMPLES {
        return Err(Error::Format(format!(
            "expected {TANKS_SAMPLES} rows, found {}",
            data[0].len()
        )));
    }
    let times: Vec<f64> = (0..TANKS_SAMPLES).map(|i| i as f64 * TANKS_PERIOD).collect();
    let series = |ys: &[f64]| {
        TimeSeries::new(times.clone(), ys.iter().map(|&y| vec![y]).collect()).unwrap()
    };
    Ok(TanksDataset {
        est_u: ControlSignal::new(data[0].clone(), TANKS_PERIOD),
        est_y: series(&data[1]),
        test_u: ControlSignal::new(data[2].clone(), TANKS_PERIOD),
        test_y: series(&data[3]),
    })
}

/// Scalar neural field dy/dt = NN(u, y, √y, u(t−τ_d), ∫u) with a
/// bias-free [5, 64, 1] network and l2 regularization.
pub struct TanksField {
    pub mlp: MlpSpec,
    pub signal: ControlSignal,
    pub spec: TanksSpec,
}

impl TanksField {
    pub fn new(mlp: MlpSpec, signal: ControlSignal, spec: TanksSpec) -> Result<Self> {
        if mlp.input_dim() != 5 || mlp.output_dim() != 1 {
            return Err(Error::InvalidArchitecture(
                "tanks field needs a 5-in 1-out network".into(),
            ));
        }
        Ok(TanksField { mlp, signal, spec })
    }

    pub fn features<S: Real>(&self, y: S, t: f64) -> [S; 5] {
        [
            S::from_f64(self.signal.value(t)),
            y,
            y.sqrt_clamped(),
            S::from_f64(self.signal.value(t - self.spec.tau_d)),
            S::from_f64(self.signal.integral_window(t, self.spec.tau_i)),
        ]
    }
}

impl ParamField for TanksField {
    fn state_dim(&self) -> usize {
        1
    }
    fn param_count(&self) -> usize {
        self.mlp.param_count()
    }
    fn eval<S: Real>(&self, params: &[S], x: &[S], t: f64) -> Vec<S> {
        let f = self.features(x[0], t);
        mlp_forward(&self.mlp, params, &f).expect("shape checked at construction")
    }
    fn reg_term<S: Real>(&self, params: &[S], reg: &RegSpec) -> S {
        regularizer(&self.mlp, params, reg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp_new;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn signal_lookup() {
        let sig = ControlSignal::new(vec![1.0, 2.0, 3.0], 4.0);
        assert_eq!(sig.value(5.0), 2.0);
        assert_eq!(sig.value(-10.0), 1.0);
        assert_eq!(sig.value(4.0), 2.0); // left-closed cells
        assert_eq!(sig.value(100.0), 3.0);
    }

    #[test]
    fn window_integral_values() {
        let sig = ControlSignal::new(vec![2.5; 8], 4.0);
        for t in [-3.0, 0.0, 5.0, 40.0] {
            assert_abs_diff_eq!(sig.integral_window(t, 6.0), 15.0, epsilon = 1e-12);
        }
        assert_eq!(sig.integral_window(10.0, 0.0), 0.0);
        let sig = ControlSignal::new(vec![0.0, 1.0], 4.0);
        assert_abs_diff_eq!(sig.integral_window(6.0, 4.0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn delay_shift_consistency() {
        let samples = vec![0.3, 1.0, -0.5, 2.0, 0.7];
        let sig = ControlSignal::new(samples.clone(), 4.0);
        // shifting by one whole cell equals indexing one cell earlier
        for t in [4.0, 6.0, 9.5, 19.0] {
            assert_eq!(sig.value(t - 4.0), ControlSignal::new(samples.clone(), 4.0).value(t - 4.0));
            let shifted = ControlSignal::new(samples[1..].to_vec(), 4.0);
            assert_eq!(sig.value(t), shifted.value(t - 4.0));
        }
    }

    fn write_benchmark_csv(rows: usize) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "uEst,yEst,uVal,yVal").unwrap();
        for i in 0..rows {
            let x = i as f64 * 0.01;
            writeln!(f, "{},{},{},{}", x.sin() + 2.0, x.cos() + 5.0, x.cos() + 2.0, x.sin() + 5.0)
                .unwrap();
        }
        f.flush().unwrap();
        f
    }

    #[test]
    fn load_wellformed_file() {
        let f = write_benchmark_csv(1024);
        let ds = load_tanks(f.path()).unwrap();
        assert_eq!(ds.est_y.len(), 1024);
        assert_eq!(ds.est_y.span(), (0.0, 4092.0));
        let (train, val) = ds.split_train_val(2048.0);
        assert_eq!(train.len(), 512);
        assert_eq!(val.len(), 512);
        assert_eq!(train.span().0, 0.0);
        assert_eq!(val.span().0, 2048.0);
    }

    #[test]
    fn load_wrong_row_count() {
        let f = write_benchmark_csv(1023);
        assert!(matches!(load_tanks(f.path()), Err(Error::Format(_))));
    }

    #[test]
    fn load_missing_column() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "uEst,yEst,uVal").unwrap();
        writeln!(f, "1,2,3").unwrap();
        f.flush().unwrap();
        match load_tanks(f.path()) {
            Err(Error::Format(msg)) => assert!(msg.contains("yVal")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    fn test_field() -> TanksField {
        let p = mlp_new(vec![5, 64, 1], false, 0).unwrap();
        let sig = ControlSignal::new(vec![1.0, 0.5, 2.0, 0.0, 1.5], 4.0);
        TanksField::new(p.spec, sig, TanksSpec { tau_d: 8.0, tau_i: 12.0, ..Default::default() })
            .unwrap()
    }

    #[test]
    fn zero_input_zero_state_gives_zero_derivative() {
        let p = mlp_new(vec![5, 64, 1], false, 3).unwrap();
        let sig = ControlSignal::new(vec![0.0; 4], 4.0);
        let field = TanksField::new(
            p.spec.clone(),
            sig,
            TanksSpec { tau_d: 4.0, tau_i: 8.0, ..Default::default() },
        )
        .unwrap();
        // √y clamps to a tiny constant, everything else is exactly zero
        let d = field.eval(&p.weights[..], &[0.0], 10.0);
        assert!(d[0].abs() < 1e-4, "derivative {}", d[0]);
    }

    #[test]
    fn delayed_feature_uses_prespan_constant() {
        let field = test_field();
        let f = field.features(1.0, 2.0); // t − τ_d = −6 < 0
        assert_eq!(f[3], field.signal.samples[0]);
        assert_eq!(f.len(), 5);
    }

    #[test]
    fn field_finite_for_negative_state() {
        let p = mlp_new(vec![5, 64, 1], false, 1).unwrap();
        let field = test_field();
        for y in [-5.0, -1e-3, 0.0, 1e-3, 7.0] {
            let d = field.eval(&p.weights[..], &[y], 3.0);
            assert!(d[0].is_finite());
        }
    }

    proptest! {
        #[test]
        fn integral_matches_quadrature(
            samples in proptest::collection::vec(-2.0f64..2.0, 2..10),
            t in -5.0f64..45.0,
            tau in 0.0f64..20.0,
        ) {
            let sig = ControlSignal::new(samples.clone(), 4.0);
            let got = sig.integral_window(t, tau);
            // oracle: sum u over exact cell overlaps, independent of prefix sums
            let (a, b) = (t - tau, t);
            let mut acc = 0.0;
            // pre-span extension
            acc += samples[0] * (b.min(0.0) - a.min(0.0));
            let end = samples.len() as f64 * 4.0;
            for (k, &u) in samples.iter().enumerate() {
                let (lo, hi) = (k as f64 * 4.0, (k + 1) as f64 * 4.0);
                acc += u * (b.min(hi) - a.max(lo)).max(0.0).min(hi - lo);
            }
            // post-span extension
            acc += samples.last().unwrap() * (b.max(end) - a.max(end));
            prop_assert!((got - acc).abs() <= 1e-9 * (1.0 + got.abs()) + 1e-9,
                "got {got}, oracle {acc}");
        }
    }
}
