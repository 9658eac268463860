//! Check the reverse-mode gradient of the shooting objective against
//! central finite differences on a small spiral problem.
//!
//! The per-interval tape gradient (what training uses) and the
//! single-tape scalar program should both agree with the
//! finite-difference oracle to roundoff-plus-truncation accuracy.
//!
//! Run with `cargo run --release --example gradient_check`.

use shootfit::autodiff::{fd_grad, grad, rel_maxnorm_err};
use shootfit::nn::{mlp_new, RegSpec};
use shootfit::optim::{ConstrainedProgram, ConstraintHandler};
use shootfit::problems::{gen_spiral, SpiralField, SpiralSpec};
use shootfit::shooting::{init_decision, make_grid, InitStrategy, PenalizedShooting, ShootingProblem};

fn main() -> shootfit::Result<()> {
    let data = gen_spiral(&SpiralSpec::default())?;
    let params = mlp_new(vec![2, 16, 2], false, 7)?;
    let field = SpiralField::new(params.spec.clone())?;
    let grid = make_grid(data.span(), 10, &data.times)?;
    let problem = ShootingProblem::new(
        field,
        grid.clone(),
        data.clone(),
        RegSpec::spectral_sum(1.0),
        0.05,
        None,
    )?;
    let (_, mut z) = init_decision(
        &grid,
        &data,
        InitStrategy::DataAtBoundaries,
        &params.weights,
        2,
        None,
    )?;
    // Nudge the shooting states off the data so defects are nonzero.
    for (k, zi) in z.iter_mut().enumerate().skip(params.weights.len()) {
        *zi += 0.05 * ((k % 5) as f64 - 2.0);
    }

    let handler = ConstraintHandler::AugLag {
        v: (0..problem.constraint_len())
            .map(|j| 0.3 * ((j % 7) as f64 - 3.0))
            .collect(),
        rho: 1.0,
    };

    // Production path: per-interval tapes run in parallel.
    let pe = problem.value_grad(&z, &handler)?;

    // Oracle 1: one tape over the whole objective.
    let scalar = PenalizedShooting {
        problem: &problem,
        handler: handler.clone(),
    };
    let (phi_tape, g_tape) = grad(&scalar, &z)?;

    // Oracle 2: central finite differences of the same scalar.
    use shootfit::autodiff::ScalarProgram;
    let g_fd = fd_grad(|x| scalar.eval(x), &z, 1e-6);

    println!("decision dim      : {}", z.len());
    println!("phi (per-interval): {:.12e}", pe.phi);
    println!("phi (single tape) : {:.12e}", phi_tape);
    println!(
        "per-interval vs single tape rel err : {:.3e}",
        rel_maxnorm_err(&pe.grad, &g_tape)
    );
    println!(
        "per-interval vs finite diff rel err : {:.3e}",
        rel_maxnorm_err(&pe.grad, &g_fd)
    );

    assert!(rel_maxnorm_err(&pe.grad, &g_fd) < 1e-4);
    println!("\ngradient check passed.");
    Ok(())
}
