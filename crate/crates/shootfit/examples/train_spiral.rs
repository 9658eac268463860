//! Full multiple-shooting training run on the noisy spiral, using the
//! library API directly: augmented-Lagrangian outer loop around L-BFGS
//! inner solves, 20 shooting intervals, spectral-sum regularization.
//!
//! Run with `cargo run --release --example train_spiral`.

use shootfit::nn::{mlp_new, RegSpec};
use shootfit::optim::{auglag_solve, AugLagOptions, InnerSolver, LbfgsOptions, TrainingLog};
use shootfit::problems::{gen_spiral, SpiralField, SpiralSpec};
use shootfit::shooting::{init_decision, make_grid, InitStrategy, ShootingProblem};

fn main() -> shootfit::Result<()> {
    let data = gen_spiral(&SpiralSpec::default())?;
    let params = mlp_new(vec![2, 16, 2], false, 0)?;
    let field = SpiralField::new(params.spec.clone())?;
    let grid = make_grid(data.span(), 20, &data.times)?;
    let problem = ShootingProblem::new(
        field,
        grid.clone(),
        data.clone(),
        RegSpec::spectral_sum(1.0),
        0.05,
        None,
    )?;
    let (_, z0) = init_decision(
        &grid,
        &data,
        InitStrategy::ReplicateX0,
        &params.weights,
        2,
        None,
    )?;

    let inner = InnerSolver::Lbfgs(LbfgsOptions {
        max_iters: 400,
        grad_tol: 1e-6,
        ..Default::default()
    });
    let mut log = TrainingLog::with_echo(100);
    let t0 = std::time::Instant::now();
    let result = auglag_solve(&problem, &z0, &inner, &AugLagOptions::default(), &mut log)?;
    let secs = t0.elapsed().as_secs_f64();

    println!("\nouter loop:");
    for rec in &result.report {
        println!(
            "  outer {:>2}  cost {:>11.5e}  max|h| {:>9.3e}  rho {:>8.2e}  inner {} ({})",
            rec.outer, rec.cost, rec.max_defect, rec.rho, rec.inner_iters, rec.inner_status
        );
    }
    println!(
        "\nconverged: {}  cost {:.5e}  max|h| {:.3e}  ({:.1} s, {} log records)",
        result.converged,
        result.cost,
        result.max_defect,
        secs,
        log.records.len()
    );

    // The noise floor for sigma = 0.2 over 61 samples x 2 components.
    let floor = 61.0 * 2.0 * 0.2f64.powi(2);
    let ev = problem.evaluate(&result.z)?;
    println!(
        "data SSE {:.3} vs expected noise floor {:.3} (ratio {:.2})",
        ev.data_sse,
        floor,
        ev.data_sse / floor
    );
    Ok(())
}
