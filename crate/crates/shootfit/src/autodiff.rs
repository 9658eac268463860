//! Reverse-mode automatic differentiation on a tape of scalar operations.
//!
//! Objectives are written once, generically over [`Real`], and can then be
//! evaluated either on plain `f64` (fast, no allocation) or on tape
//! variables ([`Var`]) to obtain exact gradients of the unrolled
//! computation. A central finite-difference oracle ([`fd_grad`]) is
//! provided for checking.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Floor applied to `sqrt` inputs so the derivative stays finite at 0.
pub const SQRT_CLAMP: f64 = 1e-12;

/// Scalar abstraction: implemented by `f64` and by tape variables.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(&self) -> f64;
    fn tanh(self) -> Self;
    /// `sqrt(max(x, SQRT_CLAMP))`, with zero derivative in the clamped region.
    fn sqrt_clamped(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn powi(self, n: i32) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn sqrt_clamped(self) -> Self {
        self.max(SQRT_CLAMP).sqrt()
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn maximum(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

#[derive(Clone, Copy)]
struct Node {
    parents: [usize; 2],
    partials: [f64; 2],
}

/// Records primal operations so adjoints can be propagated backwards.
///
/// A tape lives for one objective evaluation and is dropped after the
/// backward pass. Constants created with `Real::from_f64` are not recorded.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Create a leaf variable.
    pub fn var(&self, val: f64) -> Var<'_> {
        let idx = self.push(Node {
            parents: [0, 0],
            partials: [0.0, 0.0],
        });
        Var {
            tape: Some(self),
            idx,
            val,
        }
    }

    /// Leaf variables for a whole slice, in order.
    pub fn vars(&self, vals: &[f64]) -> Vec<Var<'_>> {
        vals.iter().map(|&v| self.var(v)).collect()
    }

    fn push(&self, node: Node) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// Propagate adjoints from the given seeds back to every node.
    /// Returns the adjoint vector indexed by node id.
    pub fn backward_seeded(&self, seeds: &[(usize, f64)]) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        for &(idx, w) in seeds {
            adj[idx] += w;
        }
        for i in (0..nodes.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = &nodes[i];
            for k in 0..2 {
                if n.partials[k] != 0.0 {
                    adj[n.parents[k]] += n.partials[k] * a;
                }
            }
        }
        adj
    }

    pub fn backward(&self, output: usize) -> Vec<f64> {
        self.backward_seeded(&[(output, 1.0)])
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// A scalar recorded on a [`Tape`]. Constants carry no tape reference.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: usize,
    val: f64,
}

impl<'t> Var<'t> {
    pub fn index(&self) -> usize {
        self.idx
    }

    pub fn val(&self) -> f64 {
        self.val
    }

    fn unary(self, val: f64, partial: f64) -> Var<'t> {
        match self.tape {
            None => Var {
                tape: None,
                idx: usize::MAX,
                val,
            },
            Some(t) => {
                let idx = t.push(Node {
                    parents: [self.idx, 0],
                    partials: [partial, 0.0],
                });
                Var {
                    tape: Some(t),
                    idx,
                    val,
                }
            }
        }
    }

    fn binary(self, rhs: Var<'t>, val: f64, pl: f64, pr: f64) -> Var<'t> {
        let tape = self.tape.or(rhs.tape);
        match tape {
            None => Var {
                tape: None,
                idx: usize::MAX,
                val,
            },
            Some(t) => {
                if let (Some(a), Some(b)) = (self.tape, rhs.tape) {
                    debug_assert!(std::ptr::eq(a, b), "variables from different tapes");
                }
                let (li, lp) = if self.tape.is_some() {
                    (self.idx, pl)
                } else {
                    (0, 0.0)
                };
                let (ri, rp) = if rhs.tape.is_some() {
                    (rhs.idx, pr)
                } else {
                    (0, 0.0)
                };
                let idx = t.push(Node {
                    parents: [li, ri],
                    partials: [lp, rp],
                });
                Var {
                    tape: Some(t),
                    idx,
                    val,
                }
            }
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(
            rhs,
            self.val / rhs.val,
            1.0 / rhs.val,
            -self.val / (rhs.val * rhs.val),
        )
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Real for Var<'t> {
    fn from_f64(v: f64) -> Self {
        Var {
            tape: None,
            idx: usize::MAX,
            val: v,
        }
    }
    fn value(&self) -> f64 {
        self.val
    }
    fn tanh(self) -> Self {
        let y = self.val.tanh();
        self.unary(y, 1.0 - y * y)
    }
    fn sqrt_clamped(self) -> Self {
        if self.val <= SQRT_CLAMP {
            self.unary(SQRT_CLAMP.sqrt(), 0.0)
        } else {
            let y = self.val.sqrt();
            self.unary(y, 0.5 / y)
        }
    }
    fn abs(self) -> Self {
        let s = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(self.val.abs(), s)
    }
    fn maximum(self, other: Self) -> Self {
        if self.val >= other.val {
            self.binary(other, self.val, 1.0, 0.0)
        } else {
            self.binary(other, other.val, 0.0, 1.0)
        }
    }
    fn powi(self, n: i32) -> Self {
        let y = self.val.powi(n);
        self.unary(y, f64::from(n) * self.val.powi(n - 1))
    }
}

/// A scalar objective written once over any [`Real`] type.
pub trait ScalarProgram {
    fn eval<S: Real>(&self, z: &[S]) -> S;
}

/// Value and exact gradient of `p` at `z` via one tape record/replay.
pub fn grad<P: ScalarProgram>(p: &P, z: &[f64]) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let vars = tape.vars(z);
    let out = p.eval(&vars);
    if !out.val().is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let adj = tape.backward(out.index());
    let g: Vec<f64> = vars.iter().map(|v| adj[v.index()]).collect();
    if let Some(node) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::GradientFailure { node });
    }
    Ok((out.val(), g))
}

/// Central finite differences, `(f(z+εeᵢ) − f(z−εeᵢ)) / 2ε` per coordinate.
pub fn fd_grad<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], eps: f64) -> Vec<f64> {
    assert!(eps > 0.0);
    let mut zp = z.to_vec();
    let mut g = vec![0.0; z.len()];
    for i in 0..z.len() {
        let zi = z[i];
        zp[i] = zi + eps;
        let fp = f(&zp);
        zp[i] = zi - eps;
        let fm = f(&zp);
        zp[i] = zi;
        g[i] = (fp - fm) / (2.0 * eps);
    }
    g
}

/// Relative max-norm discrepancy used by the gradient checks.
pub fn rel_maxnorm_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0_f64, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0_f64, f64::max);
    diff / (1.0 + scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Poly;
    impl ScalarProgram for Poly {
        fn eval<S: Real>(&self, z: &[S]) -> S {
            z[0] * z[0] + S::from_f64(3.0) * z[1]
        }
    }

    struct TanhSq;
    impl ScalarProgram for TanhSq {
        fn eval<S: Real>(&self, z: &[S]) -> S {
            z.iter()
                .fold(S::zero(), |acc, &x| acc + x.tanh() * x.tanh())
        }
    }

    struct DistSq(Vec<f64>);
    impl ScalarProgram for DistSq {
        fn eval<S: Real>(&self, z: &[S]) -> S {
            z.iter()
                .zip(&self.0)
                .fold(S::zero(), |acc, (&x, &a)| {
                    let d = x - S::from_f64(a);
                    acc + d * d
                })
        }
    }

    #[test]
    fn polynomial_grad() {
        let (v, g) = grad(&Poly, &[2.0, 1.0]).unwrap();
        assert_eq!(v, 7.0);
        assert_eq!(g, vec![4.0, 3.0]);
    }

    #[test]
    fn tanh_sum_at_origin() {
        let (v, g) = grad(&TanhSq, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_gradient_at_minimum() {
        let a = vec![1.0, -2.0, 0.5];
        let (_, g) = grad(&DistSq(a.clone()), &a).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fd_square() {
        let g = fd_grad(|z| z[0] * z[0], &[3.0], 1e-6);
        assert_abs_diff_eq!(g[0], 6.0, epsilon = 1e-6);
    }

    #[test]
    fn fd_constant() {
        let g = fd_grad(|_| 42.0, &[1.0, 2.0], 1e-6);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn taped_value_matches_plain_eval() {
        let z = [0.3, -1.2, 2.5];
        let (v, _) = grad(&TanhSq, &z).unwrap();
        let plain = TanhSq.eval(&z[..]);
        assert_eq!(v, plain);
    }

    #[test]
    fn grad_is_linear() {
        // grad(αf + βg) = α grad f + β grad g
        struct Combo(f64, f64, Vec<f64>);
        impl ScalarProgram for Combo {
            fn eval<S: Real>(&self, z: &[S]) -> S {
                S::from_f64(self.0) * Poly.eval(z)
                    + S::from_f64(self.1) * DistSq(self.2.clone()).eval(z)
            }
        }
        let z = [0.7, -0.4];
        let (alpha, beta) = (2.5, -1.5);
        let a = vec![1.0, 1.0];
        let (_, gf) = grad(&Poly, &z).unwrap();
        let (_, gg) = grad(&DistSq(a.clone()), &z).unwrap();
        let (_, gc) = grad(&Combo(alpha, beta, a), &z).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(gc[i], alpha * gf[i] + beta * gg[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn sqrt_clamped_zero_derivative_below_floor() {
        struct Sq;
        impl ScalarProgram for Sq {
            fn eval<S: Real>(&self, z: &[S]) -> S {
                z[0].sqrt_clamped()
            }
        }
        let (v, g) = grad(&Sq, &[-1.0]).unwrap();
        assert_eq!(v, SQRT_CLAMP.sqrt());
        assert_eq!(g[0], 0.0);
        let (v, g) = grad(&Sq, &[4.0]).unwrap();
        assert_eq!(v, 2.0);
        assert_abs_diff_eq!(g[0], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn division_and_powi() {
        struct P;
        impl ScalarProgram for P {
            fn eval<S: Real>(&self, z: &[S]) -> S {
                z[0].powi(3) / z[1]
            }
        }
        let z = [2.0, 4.0];
        let (v, g) = grad(&P, &z).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.5, epsilon = 1e-15);
        let fd = fd_grad(|z| z[0].powi(3) / z[1], &z, 1e-6);
        assert!(rel_maxnorm_err(&fd, &g) < 1e-8);
    }
}
