//! Model identification from observed data by steepest descent.
//!
//! Three levels of model are supported:
//!
//! * a function `f(a, t)` fitted directly to samples ([`objective::FnFitObjective`]),
//! * an ODE right-hand side `x' = f(a, t, x)` fitted to forward difference
//!   quotients of a time series ([`objective::OdeObjective`]),
//! * a constant-coefficient linear PDE fitted to stencil approximations of
//!   gridded data ([`objective::PdeObjective`]).
//!
//! Fits are produced by [`descent::steepest_descent`] (optionally from many
//! starts with [`descent::shotgun`]). For ODE fits, [`certify`] turns the
//! achieved objective into a computable bound on the distance between the
//! data polygon and the fitted model's solution, compares two fitted models,
//! and propagates a measurement-error level through the whole procedure.

pub mod certify;
pub mod data;
pub mod descent;
pub mod expr;
pub mod integrate;
pub mod objective;

pub(crate) mod util;

pub use certify::{CertifyError, ErrorCertificate, NoiseEnvelope};
pub use data::{DataError, GridField, NoisePair, SeriesStats, TimeSeries};
pub use descent::{DescentError, DescentOptions, ExitReason, FitResult};
pub use expr::{parse_model, ExprError, ModelExpr};
pub use integrate::{IntegrateError, PiecewiseTrajectory, Trajectory};
pub use objective::{ConstraintMode, Objective, ObjectiveError};
