//! The config-driven pipeline end to end, no dataset file needed: the
//! `tanks-surrogate` problem simulates a delayed square-root tank,
//! trains the level network with multiple shooting, and writes the full
//! artifact set (checkpoint, logs, trajectory, defects, summary).
//!
//! This is the same code path as `shootfit train --config ...`.
//!
//! Run with `cargo run --release --example train_tanks_surrogate`.

use shootfit::cli::{cmd_eval, cmd_train, ExperimentConfig, ProblemTag};

fn main() -> shootfit::Result<()> {
    let out = std::env::temp_dir().join(format!("shootfit-surrogate-{}", std::process::id()));
    let config = ExperimentConfig {
        problem: ProblemTag::TanksSurrogate,
        out_dir: out.clone(),
        echo_every: Some(200),
        ..Default::default()
    };

    println!("training (about a minute in release mode)...");
    let summary = cmd_train(&config)?;
    println!("\nconverged     : {}", summary.converged);
    println!("outer iters   : {}", summary.outer_iters);
    println!("cost          : {:.5e}", summary.cost);
    println!("max defect    : {:.3e}", summary.max_defect);
    println!("wall time     : {:.1} s", summary.wall_seconds);

    let rmse = (summary.data_sse / 64.0).sqrt();
    println!("train RMSE    : {rmse:.4} (observation noise sigma is 0.1)");

    let metrics = cmd_eval(&config, &summary.checkpoint, None)?;
    if let Some(cost) = metrics.objective_cost {
        println!("eval objective: {cost:.5e} (recomputed from checkpoint)");
    }

    println!("\nartifacts in {}:", out.display());
    for name in [
        "checkpoint.json",
        "training_log.csv",
        "trajectory.csv",
        "defects.csv",
        "summary.json",
        "config.json",
    ] {
        let p = out.join(name);
        println!("  {:>16}  {} bytes", name, std::fs::metadata(&p)?.len());
    }
    Ok(())
}
