//! Unconstrained optimizers (Adam/Nadam, L-BFGS with strong-Wolfe line
//! search) and constrained solvers (penalty and augmented Lagrangian).

mod adam;
mod constrained;
mod lbfgs;

pub use adam::AdamState;
pub use constrained::{
    auglag_objective, auglag_solve, penalty_objective, AdamConfig, AugLagOptions, AugLagResult,
    ConstraintHandler, ConstrainedProgram, InnerSolver, LogRecord, OuterRecord, PenalizedEval,
    PenaltyKind, TrainingLog,
};
pub use lbfgs::{lbfgs_minimize, AcceptedStep, LbfgsOptions, LbfgsResult, LbfgsStatus};
