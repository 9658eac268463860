//! The cubic spiral system and its neural-ODE counterpart.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::nn::{mlp_forward, regularizer, MlpSpec, RegSpec};
use crate::ode::{integrate_adaptive, FnField};
use crate::shooting::{ParamField, TimeSeries};

/// dx/dt = A·x³ (elementwise cube, then matrix multiply).
pub const SPIRAL_A: [[f64; 2]; 2] = [[-0.1, 2.0], [-2.0, -0.1]];

pub fn spiral_rhs(x: &[f64]) -> Vec<f64> {
    let c = [x[0].powi(3), x[1].powi(3)];
    vec![
        SPIRAL_A[0][0] * c[0] + SPIRAL_A[0][1] * c[1],
        SPIRAL_A[1][0] * c[0] + SPIRAL_A[1][1] * c[1],
    ]
}

#[derive(Debug, Clone)]
pub struct SpiralSpec {
    pub x0: [f64; 2],
    pub span: (f64, f64),
    pub sample_interval: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SpiralSpec {
    fn default() -> Self {
        SpiralSpec {
            x0: [2.0, 0.0],
            span: (0.0, 6.0),
            sample_interval: 0.1,
            noise_sigma: 0.2,
            seed: 0,
        }
    }
}

impl SpiralSpec {
    pub fn sample_times(&self) -> Vec<f64> {
        let n = ((self.span.1 - self.span.0) / self.sample_interval).round() as usize;
        (0..=n)
            .map(|i| self.span.0 + i as f64 * self.sample_interval)
            .collect()
    }
}

/// Solve the spiral system, sample on the interval grid and add seeded
/// Gaussian noise (`noise_sigma` is a standard deviation).
pub fn gen_spiral(spec: &SpiralSpec) -> Result<TimeSeries> {
    assert!(spec.sample_interval > 0.0 && spec.noise_sigma >= 0.0);
    let field = FnField::new(2, |x: &[f64], _t| spiral_rhs(x));
    let times = spec.sample_times();
    let traj = integrate_adaptive(&field, &spec.x0, spec.span, 1e-8, 1e-10, &times)?;
    let mut values = traj.states;
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma).unwrap();
        for row in values.iter_mut() {
            for v in row.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }
    TimeSeries::new(times, values)
}

/// Neural field dx/dt = NN(x³, θ) with a bias-free [2, 16, 2] network
/// and spectral-sum regularization.
pub struct SpiralField {
    pub mlp: MlpSpec,
}

impl SpiralField {
    pub fn new(mlp: MlpSpec) -> Result<Self> {
        if mlp.input_dim() != 2 || mlp.output_dim() != 2 {
            return Err(Error::InvalidArchitecture(
                "spiral field needs a 2-in 2-out network".into(),
            ));
        }
        Ok(SpiralField { mlp })
    }
}

impl ParamField for SpiralField {
    fn state_dim(&self) -> usize {
        2
    }
    fn param_count(&self) -> usize {
        self.mlp.param_count()
    }
    fn eval<S: Real>(&self, params: &[S], x: &[S], _t: f64) -> Vec<S> {
        let cubed = [x[0] * x[0] * x[0], x[1] * x[1] * x[1]];
        mlp_forward(&self.mlp, params, &cubed).expect("shape checked at construction")
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

    #[test]
    fn rhs_values() {
        let d = spiral_rhs(&[2.0, 0.0]);
        assert_abs_diff_eq!(d[0], -0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], -16.0, epsilon = 1e-12);
        assert_eq!(spiral_rhs(&[0.0, 0.0]), vec![0.0, 0.0]);
        let d = spiral_rhs(&[1.0, 1.0]);
        assert_abs_diff_eq!(d[0], 1.9, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], -2.1, epsilon = 1e-12);
    }

    #[test]
    fn clean_series_starts_at_x0() {
        let spec = SpiralSpec {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let ts = gen_spiral(&spec).unwrap();
        assert_eq!(ts.len(), 61);
        assert_eq!(ts.values[0], vec![2.0, 0.0]);
    }

    #[test]
    fn clean_endpoint_matches_tight_reference() {
        let spec = SpiralSpec {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let ts = gen_spiral(&spec).unwrap();
        let field = FnField::new(2, |x: &[f64], _t| spiral_rhs(x));
        let reference =
            integrate_adaptive(&field, &spec.x0, spec.span, 1e-10, 1e-12, &[6.0]).unwrap();
        for k in 0..2 {
            assert_abs_diff_eq!(
                ts.values.last().unwrap()[k],
                reference.states[0][k],
                epsilon = 1e-5
            );
        }
    }

    #[test]
    fn noise_floor_statistic() {
        // SSE between noisy and clean ≈ 61·2·σ², within 3 standard errors
        let clean = gen_spiral(&SpiralSpec {
            noise_sigma: 0.0,
            ..Default::default()
        })
        .unwrap();
        let noisy = gen_spiral(&SpiralSpec::default()).unwrap();
        let sse = crate::shooting::sse(&noisy.values, &clean.values).unwrap();
        let n: f64 = 61.0 * 2.0;
        let sigma2 = 0.04;
        let expected = n * sigma2;
        let stderr = sigma2 * (2.0 * n).sqrt();
        assert!(
            (sse - expected).abs() <= 3.0 * stderr,
            "sse = {sse}, expected {expected} ± {}",
            3.0 * stderr
        );
    }

    #[test]
    fn noise_deterministic_per_seed() {
        let a = gen_spiral(&SpiralSpec::default()).unwrap();
        let b = gen_spiral(&SpiralSpec::default()).unwrap();
        assert_eq!(a.values, b.values);
        let c = gen_spiral(&SpiralSpec {
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn field_zero_map_and_determinism() {
        let p = mlp_new(vec![2, 16, 2], false, 0).unwrap();
        let field = SpiralField::new(p.spec.clone()).unwrap();
        let out = field.eval(&p.weights[..], &[0.0, 0.0], 0.0);
        assert_eq!(out, vec![0.0, 0.0]);
        let a = field.eval(&p.weights[..], &[1.2, -0.7], 0.0);
        let b = field.eval(&p.weights[..], &[1.2, -0.7], 0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn near_linear_network_matches_rhs_to_first_order() {
        // network [2, 2] (single linear layer) with weights = A acts on x³
        let spec = MlpSpec::new(vec![2, 2], false).unwrap();
        let field = SpiralField::new(spec).unwrap();
        let params = [
            SPIRAL_A[0][0],
            SPIRAL_A[0][1],
            SPIRAL_A[1][0],
            SPIRAL_A[1][1],
        ];
        let x = [0.3, -0.2];
        let got = field.eval(&params[..], &x[..], 0.0);
        let want = spiral_rhs(&x);
        for k in 0..2 {
            assert_abs_diff_eq!(got[k], want[k], epsilon = 1e-12);
        }
    }
}
