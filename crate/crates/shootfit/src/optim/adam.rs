//! Adam and its Nesterov-momentum variant (Nadam).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: usize,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub nesterov: bool,
}

impl AdamState {
    pub fn new(dim: usize, alpha: f64, nesterov: bool) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            nesterov,
        }
    }

    /// One update of `z` in place. With `nesterov` set this is the Nadam
    /// look-ahead combination of the momentum terms.
    pub fn step(&mut self, z: &mut [f64], g: &[f64]) -> Result<()> {
        if z.len() != g.len() || z.len() != self.m.len() {
            return Err(Error::Optimizer("misaligned gradient length".into()));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Optimizer("non-finite gradient".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..z.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let v_hat = self.v[i] / bc2;
            let dir = if self.nesterov {
                self.beta1 * self.m[i] / (1.0 - self.beta1.powi(t + 1))
                    + (1.0 - self.beta1) * g[i] / bc1
            } else {
                self.m[i] / bc1
            };
            z[i] -= self.alpha * dir / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut st = AdamState::new(3, 0.001, false);
        let mut z = vec![1.0, -2.0, 0.5];
        let before = z.clone();
        st.step(&mut z, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(z, before);
    }

    #[test]
    fn first_step_magnitude_bounded() {
        for nesterov in [false, true] {
            let mut st = AdamState::new(2, 0.001, nesterov);
            let mut z = vec![0.0, 0.0];
            st.step(&mut z, &[10.0, -0.3]).unwrap();
            // bias-corrected first step is ~alpha per coordinate
            for &zi in &z {
                assert!(zi.abs() <= 2.0 * 0.001, "step {zi}");
            }
            assert!(z[0] < 0.0 && z[1] > 0.0);
        }
    }

    #[test]
    fn identical_runs_identical_iterates() {
        let g = |z: &[f64]| vec![2.0 * z[0], 2.0 * (z[1] - 1.0)];
        let run = || {
            let mut st = AdamState::new(2, 0.01, true);
            let mut z = vec![3.0, -2.0];
            for _ in 0..100 {
                let gr = g(&z);
                st.step(&mut z, &gr).unwrap();
            }
            z
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_nonfinite_gradient() {
        let mut st = AdamState::new(1, 0.001, false);
        let mut z = vec![0.0];
        assert!(st.step(&mut z, &[f64::NAN]).is_err());
    }
}
