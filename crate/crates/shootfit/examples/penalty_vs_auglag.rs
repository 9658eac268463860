//! Penalty methods vs the augmented Lagrangian on an analytic toy:
//!
//!   minimize  (x - 1)^2 + 2 (y - 2)^2   subject to  x - y = 0
//!
//! whose exact solution is x = y = 5/3. A fixed quadratic penalty only
//! approaches the constraint as rho grows; the multiplier update lets
//! the augmented Lagrangian hit it without rho blowing up.
//!
//! Run with `cargo run --example penalty_vs_auglag`.

use shootfit::optim::{
    auglag_solve, lbfgs_minimize, AugLagOptions, ConstrainedProgram, ConstraintHandler,
    InnerSolver, LbfgsOptions, PenalizedEval, PenaltyKind, TrainingLog,
};

struct Toy;

impl Toy {
    fn cost_grad(z: &[f64]) -> (f64, [f64; 2]) {
        let c = (z[0] - 1.0).powi(2) + 2.0 * (z[1] - 2.0).powi(2);
        (c, [2.0 * (z[0] - 1.0), 4.0 * (z[1] - 2.0)])
    }
}

impl ConstrainedProgram for Toy {
    fn dim(&self) -> usize {
        2
    }
    fn constraint_len(&self) -> usize {
        1
    }
    fn eval(&self, z: &[f64]) -> shootfit::Result<(f64, Vec<f64>)> {
        Ok((Toy::cost_grad(z).0, vec![z[0] - z[1]]))
    }
    fn value_grad(
        &self,
        z: &[f64],
        handler: &ConstraintHandler,
    ) -> shootfit::Result<PenalizedEval> {
        let (cost, cg) = Toy::cost_grad(z);
        let h = vec![z[0] - z[1]];
        let w = handler.defect_weights(&h);
        Ok(PenalizedEval {
            phi: cost + handler.term(&h),
            grad: vec![cg[0] + w[0], cg[1] - w[0]],
            cost,
            defects: h,
        })
    }
}

fn main() -> shootfit::Result<()> {
    let z0 = [0.0, 0.0];
    let opts = LbfgsOptions {
        grad_tol: 1e-12,
        ..Default::default()
    };

    println!("fixed quadratic penalty, one L-BFGS solve per rho:");
    for rho in [1.0, 10.0, 100.0, 1000.0] {
        let handler = ConstraintHandler::Penalty {
            rho,
            kind: PenaltyKind::Quadratic,
        };
        let mut f = |z: &[f64]| {
            let pe = Toy.value_grad(z, &handler)?;
            Ok((pe.phi, pe.grad))
        };
        let res = lbfgs_minimize(&mut f, &z0, &opts, &mut |_, _, _| {})?;
        let h = res.z[0] - res.z[1];
        println!(
            "  rho = {rho:>6}  z = ({:+.6}, {:+.6})  |h| = {:.2e}",
            res.z[0],
            res.z[1],
            h.abs()
        );
    }
    println!("  the defect shrinks like 1/rho but never reaches zero.\n");

    println!("augmented Lagrangian, multiplier update v <- v + 2 rho h:");
    let mut log = TrainingLog::silent();
    let result = auglag_solve(
        &Toy,
        &z0,
        &InnerSolver::Lbfgs(opts),
        &AugLagOptions {
            constraint_tol: 1e-8,
            ..Default::default()
        },
        &mut log,
    )?;
    for rec in &result.report {
        println!(
            "  outer {:>2}  cost {:>10.6}  |h| = {:.2e}  rho = {:>5}",
            rec.outer, rec.cost, rec.max_defect, rec.rho
        );
    }
    println!(
        "\nfinal z = ({:.8}, {:.8}), exact optimum is (5/3, 5/3) = (1.66666667, 1.66666667)",
        result.z[0], result.z[1]
    );
    Ok(())
}
