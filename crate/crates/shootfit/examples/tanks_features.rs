//! The cascaded-tanks feature map: a piecewise-constant input signal
//! (left-closed cells, prefix-sum windowed integrals) feeding the
//! five-feature input of the level network.
//!
//! Run with `cargo run --example tanks_features`.

use shootfit::nn::mlp_new;
use shootfit::problems::{surrogate_input, ControlSignal, SurrogateSpec, TanksField, TanksSpec};
use shootfit::shooting::ParamField;

fn main() -> shootfit::Result<()> {
    // A toy staircase signal on a 4 s grid.
    let sig = ControlSignal::new(vec![0.0, 1.0, 1.0, 3.0, 2.0], 4.0);
    println!("staircase u(t), left-closed cells of width 4:");
    for t in [-2.0, 0.0, 3.9, 4.0, 9.0, 12.0, 100.0] {
        println!("  u({t:>6.1}) = {}", sig.value(t));
    }
    println!("\nwindowed integrals (exact, via prefix sums):");
    for (t, tau) in [(8.0, 8.0), (10.0, 8.0), (20.0, 16.0)] {
        println!(
            "  int over [{:>4.1}, {:>4.1}] u dt = {}",
            t - tau,
            t,
            sig.integral_window(t, tau)
        );
    }

    // The actual feature vector the tanks network sees.
    let spec = TanksSpec {
        tau_d: 8.0,
        tau_i: 16.0,
        ..Default::default()
    };
    let signal = surrogate_input(&SurrogateSpec::default());
    let params = mlp_new(vec![5, 16, 1], false, 0)?;
    let field = TanksField::new(params.spec.clone(), signal, spec)?;

    println!("\nfeatures [u(t), y, sqrt(y), u(t - tau_d), int u] along a trajectory:");
    let mut y = 1.0f64;
    for step in 0..6 {
        let t = step as f64 * 10.0;
        let f = field.features(y, t);
        let dy = field.eval(&params.weights[..], &[y], t)[0];
        println!(
            "  t = {t:>4.0}  y = {y:>6.3}  f = [{:.3}, {:.3}, {:.3}, {:.3}, {:.3}]  dy/dt = {dy:+.4}",
            f[0], f[1], f[2], f[3], f[4]
        );
        y = (y + 10.0 * dy).max(0.0);
    }
    println!("\nthe sqrt(y) feature is clamped at zero, so levels can't go complex.");
    Ok(())
}
