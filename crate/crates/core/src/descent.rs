//! Steepest descent with step backtracking, multi-start ("shotgun")
//! search, and basin-of-attraction mapping.
//!
//! One iteration tries `a' = Π(a − ε ∇F(a))`. If `F(a') ≤ F(a)` the step
//! is accepted and ε grows by `grow` (never beyond the initial step);
//! otherwise the iterate stays put and ε shrinks by `shrink`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objective::{ConstraintMode, Objective, ObjectiveError};
use crate::util::{dist2, fmt17, norm_inf, write_csv_row};

#[derive(Debug, Error, PartialEq)]
pub enum DescentError {
    #[error("start has {actual} coordinates, objective has {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("objective or gradient is not finite at the start point {start:?}")]
    NonFiniteStart { start: Vec<f64> },
    #[error("invalid descent options: {0}")]
    InvalidOptions(String),
    #[error("invalid parameter box: {0}")]
    InvalidBox(String),
    #[error("basin mapping needs a 2-parameter objective, this one has {0}")]
    NotTwoDimensional(usize),
    #[error(transparent)]
    Constraint(#[from] ObjectiveError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescentOptions {
    /// Initial (and maximum) step ε.
    pub step: f64,
    /// Factor applied to ε after a rejected step.
    pub shrink: f64,
    /// Factor applied to ε after an accepted step.
    pub grow: f64,
    /// Stop once `‖∇F‖_∞` falls below this.
    pub grad_tol: f64,
    /// Stop once an accepted step lowers F by less than this fraction.
    pub f_tol: f64,
    /// Maximum number of trial steps (accepted or rejected).
    pub max_iters: usize,
    /// Give up once ε drops below this.
    pub min_step: f64,
    pub record_trace: bool,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            step: 1e-2,
            shrink: 0.5,
            grow: 1.1,
            grad_tol: 1e-10,
            f_tol: 1e-16,
            max_iters: 100_000,
            min_step: 1e-300,
            record_trace: false,
        }
    }
}

impl DescentOptions {
    pub fn validate(&self) -> Result<(), DescentError> {
        let bad = |msg: &str| Err(DescentError::InvalidOptions(msg.to_string()));
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive and finite");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.grow >= 1.0 && self.grow.is_finite()) {
            return bad("grow must be at least 1");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.grad_tol >= 0.0 && self.f_tol >= 0.0 && self.min_step >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    Converged,
    Stagnated,
    IterationCapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: usize,
    pub objective: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Final `m = F(a)`.
    pub objective: f64,
    /// `‖∇F‖_∞` at exit, restricted to directions the constraint allows.
    pub grad_norm: f64,
    pub iters: usize,
    pub exit_reason: ExitReason,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TracePoint>,
}

impl FitResult {
    /// Writes the trace as `iter,F,step`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write_csv_row(&mut out, &["iter".into(), "F".into(), "step".into()])?;
        for p in &self.trace {
            write_csv_row(&mut out, &[p.iter.to_string(), fmt17(p.objective), fmt17(p.step)])?;
        }
        Ok(())
    }
}

fn usable(f: f64, g: &[f64]) -> bool {
    f.is_finite() && g.iter().all(|v| v.is_finite())
}

pub fn steepest_descent(
    obj: &dyn Objective,
    start: &[f64],
    opts: &DescentOptions,
    constraint: &ConstraintMode,
) -> Result<FitResult, DescentError> {
    opts.validate()?;
    if start.len() != obj.dim() {
        return Err(DescentError::DimensionMismatch {
            expected: obj.dim(),
            actual: start.len(),
        });
    }
    constraint.validate(obj.dim())?;

    let mut a = start.to_vec();
    constraint.project(&mut a);
    let (mut f, mut g) = obj.value_and_gradient(&a);
    if !usable(f, &g) {
        return Err(DescentError::NonFiniteStart { start: a });
    }

    let mut eps = opts.step;
    let mut iters = 0;
    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(TracePoint {
            iter: 0,
            objective: f,
            step: eps,
        });
    }
    let mut trial = vec![0.0; a.len()];

    let exit_reason = loop {
        let direction = constraint.tangent(&a, &g);
        if norm_inf(&direction) < opts.grad_tol {
            break ExitReason::Converged;
        }
        if iters >= opts.max_iters {
            break ExitReason::IterationCapped;
        }
        iters += 1;

        for ((t, x), d) in trial.iter_mut().zip(&a).zip(&g) {
            *t = x - eps * d;
        }
        constraint.project(&mut trial);
        let (f_trial, g_trial) = obj.value_and_gradient(&trial);

        if usable(f_trial, &g_trial) && f_trial <= f {
            let relative_drop = if f > 0.0 { (f - f_trial) / f } else { 0.0 };
            a.copy_from_slice(&trial);
            f = f_trial;
            g = g_trial;
            if opts.record_trace {
                trace.push(TracePoint {
                    iter: iters,
                    objective: f,
                    step: eps,
                });
            }
            eps = (eps * opts.grow).min(opts.step);
            if relative_drop < opts.f_tol {
                break ExitReason::Converged;
            }
        } else {
            eps *= opts.shrink;
            if eps < opts.min_step {
                break ExitReason::Stagnated;
            }
        }
    };

    let grad_norm = norm_inf(&constraint.tangent(&a, &g));
    Ok(FitResult {
        params: a,
        objective: f,
        grad_norm,
        iters,
        exit_reason,
        trace,
    })
}

/// Axis-aligned rectangle in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<ParamBox, DescentError> {
        let b = ParamBox { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), DescentError> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(DescentError::InvalidBox("bounds must be non-empty and of equal length".into()));
        }
        for (k, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(DescentError::InvalidBox(format!("axis {k}: [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn diagonal(&self) -> f64 {
        dist2(&self.lower, &self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotgunResult {
    pub best: FitResult,
    pub best_index: usize,
    pub starts: Vec<Vec<f64>>,
    pub all: Vec<FitResult>,
}

/// Uniform starts drawn from a ChaCha8 stream seeded with `seed`.
pub fn shotgun_starts(bounds: &ParamBox, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            bounds
                .lower
                .iter()
                .zip(&bounds.upper)
                .map(|(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                .collect()
        })
        .collect()
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Runs an unconstrained descent from each of `k` seeded random starts in
/// `bounds` and keeps the lowest objective (ties go to the lexicographically
/// smallest parameter vector).
///
/// Starts run in parallel on the current rayon pool; results are merged by
/// start index, so the outcome does not depend on scheduling.
pub fn shotgun(
    obj: &dyn Objective,
    bounds: &ParamBox,
    k: usize,
    opts: &DescentOptions,
    seed: u64,
) -> Result<ShotgunResult, DescentError> {
    bounds.validate()?;
    if k == 0 {
        return Err(DescentError::InvalidOptions("shotgun needs at least one start".into()));
    }
    if bounds.dim() != obj.dim() {
        return Err(DescentError::DimensionMismatch {
            expected: obj.dim(),
            actual: bounds.dim(),
        });
    }
    let starts = shotgun_starts(bounds, k, seed);
    let all = starts
        .par_iter()
        .map(|s| steepest_descent(obj, s, opts, &ConstraintMode::None))
        .collect::<Result<Vec<_>, _>>()?;
    let best_index = (0..all.len())
        .min_by(|&i, &j| {
            all[i]
                .objective
                .total_cmp(&all[j].objective)
                .then_with(|| lexicographic(&all[i].params, &all[j].params))
        })
        .expect("k >= 1");
    Ok(ShotgunResult {
        best: all[best_index].clone(),
        best_index,
        starts,
        all,
    })
}

/// Watershed map of a two-parameter objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinGrid {
    pub bounds: ParamBox,
    pub resolution: usize,
    /// `labels[i * resolution + j]` for the start `(a1_i, a2_j)`.
    pub labels: Vec<usize>,
    /// Representative converged point of each label.
    pub minima: Vec<Vec<f64>>,
    pub minima_objective: Vec<f64>,
    pub cluster_radius: f64,
}

impl BasinGrid {
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        basin_node(&self.bounds, self.resolution, i, j)
    }

    pub fn distinct_labels(&self) -> usize {
        self.minima.len()
    }

    /// Writes `a1,a2,label` for every start node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write_csv_row(&mut out, &["a1".into(), "a2".into(), "label".into()])?;
        for i in 0..self.resolution {
            for j in 0..self.resolution {
                let [a1, a2] = self.node(i, j);
                write_csv_row(
                    &mut out,
                    &[fmt17(a1), fmt17(a2), self.labels[i * self.resolution + j].to_string()],
                )?;
            }
        }
        Ok(())
    }
}

fn basin_node(bounds: &ParamBox, resolution: usize, i: usize, j: usize) -> [f64; 2] {
    let along = |axis: usize, k: usize| {
        let (lo, hi) = (bounds.lower[axis], bounds.upper[axis]);
        lo + (hi - lo) * k as f64 / (resolution - 1) as f64
    };
    [along(0, i), along(1, j)]
}

/// Fraction of the box diagonal within which converged points share a label.
pub const CLUSTER_RADIUS_FRACTION: f64 = 1e-3;

/// Runs descent from every node of a `resolution x resolution` grid over
/// `bounds` and labels each node by the cluster its end point falls in.
///
/// End points are clustered greedily in node order: a point joins the first
/// existing minimum within `1e-3 x diagonal`, otherwise it founds a new one.
pub fn basin_map(
    obj: &dyn Objective,
    bounds: &ParamBox,
    resolution: usize,
    opts: &DescentOptions,
) -> Result<BasinGrid, DescentError> {
    if obj.dim() != 2 {
        return Err(DescentError::NotTwoDimensional(obj.dim()));
    }
    bounds.validate()?;
    if bounds.dim() != 2 {
        return Err(DescentError::InvalidBox("basin box must be two-dimensional".into()));
    }
    if resolution < 2 {
        return Err(DescentError::InvalidOptions("basin resolution must be at least 2".into()));
    }
    let nodes: Vec<[f64; 2]> = (0..resolution)
        .flat_map(|i| (0..resolution).map(move |j| (i, j)))
        .map(|(i, j)| basin_node(bounds, resolution, i, j))
        .collect();
    let results = nodes
        .par_iter()
        .map(|n| steepest_descent(obj, n, opts, &ConstraintMode::None))
        .collect::<Result<Vec<_>, _>>()?;

    let cluster_radius = CLUSTER_RADIUS_FRACTION * bounds.diagonal();
    let mut minima: Vec<Vec<f64>> = Vec::new();
    let mut minima_objective = Vec::new();
    let mut labels = Vec::with_capacity(results.len());
    for r in &results {
        let label = match minima.iter().position(|m| dist2(m, &r.params) <= cluster_radius) {
            Some(label) => label,
            None => {
                minima.push(r.params.clone());
                minima_objective.push(r.objective);
                minima.len() - 1
            }
        };
        labels.push(label);
    }
    Ok(BasinGrid {
        bounds: bounds.clone(),
        resolution,
        labels,
        minima,
        minima_objective,
        cluster_radius,
    })
}
