//! Training neural differential equations on time series via single
//! and multiple shooting.
//!
//! Fitting a neural ODE by plain single shooting tends to flatten out
//! on oscillatory data. This crate partitions the time span into
//! shooting intervals with free initial states, enforces continuity
//! through defect constraints, and satisfies those constraints with a
//! penalty or augmented-Lagrangian method wrapped around an inner
//! optimizer (L-BFGS, Adam, Nadam).
//!
//! Start with the runnable programs in `examples/`:
//! `cargo run --release --example train_spiral`.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod nn;
pub mod ode;
pub mod optim;
pub mod problems;
pub mod shooting;

pub use error::{Error, Result};
