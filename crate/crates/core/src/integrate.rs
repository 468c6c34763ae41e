//! Trajectories built from data and from a fitted model.
//!
//! * [`polygon_interpolant`]: the continuous piecewise-linear `P(t)` through
//!   the data points.
//! * [`euler_piecewise`]: `p(t) = x(t_i) + f(t_i, x(t_i)) (t - t_i)` on
//!   `[t_i, t_{i+1})`, restarting from the datum on every segment.
//! * [`rk4_solve`]: a fixed-step classical Runge-Kutta solution `y(t)` of the
//!   fitted ODE with cubic Hermite dense output.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{SeriesStats, TimeSeries};
use crate::expr::{ExprError, ModelExpr, Workspace};
use crate::util::{fmt17, write_csv_row};

/// States larger than this in magnitude end an RK4 run.
pub const TRUNCATION_LIMIT: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum IntegrateError {
    #[error("t = {t} lies outside [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("model is not finite at t = {t}, x = {x:?}")]
    NonFinite { t: f64, x: Vec<f64> },
    #[error("model maps {input} states to {output} outputs but the data has dimension {data}")]
    DimensionMismatch { input: usize, output: usize, data: usize },
    #[error("invalid integration interval or step: {0}")]
    InvalidStep(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiecewiseKind {
    Polygon,
    Euler,
}

/// A function that is affine on each data interval.
///
/// Segment `i` covers `[t_i, t_{i+1})` and reads `origin_i + slope_i (t - t_i)`.
/// Evaluation is right-continuous; at the last breakpoint the final segment
/// is extended to its right end.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseTrajectory {
    kind: PiecewiseKind,
    breakpoints: Vec<f64>,
    dim: usize,
    origins: Vec<f64>,
    slopes: Vec<f64>,
}

impl PiecewiseTrajectory {
    pub fn kind(&self) -> PiecewiseKind {
        self.kind
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segment_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn slope(&self, segment: usize) -> &[f64] {
        &self.slopes[segment * self.dim..(segment + 1) * self.dim]
    }

    fn segment_value(&self, segment: usize, t: f64) -> Vec<f64> {
        let dt = t - self.breakpoints[segment];
        let origin = &self.origins[segment * self.dim..(segment + 1) * self.dim];
        origin
            .iter()
            .zip(self.slope(segment))
            .map(|(x, s)| x + s * dt)
            .collect()
    }

    fn check_range(&self, t: f64) -> Result<(), IntegrateError> {
        let (start, end) = (self.breakpoints[0], *self.breakpoints.last().unwrap());
        if t >= start && t <= end {
            Ok(())
        } else {
            Err(IntegrateError::OutOfRange { t, start, end })
        }
    }

    /// Right-continuous value at `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, IntegrateError> {
        self.check_range(t)?;
        let segment = self
            .breakpoints
            .partition_point(|b| *b <= t)
            .saturating_sub(1)
            .min(self.segment_count() - 1);
        Ok(self.segment_value(segment, t))
    }

    /// Limit from the left at breakpoint `i >= 1`.
    pub fn left_limit(&self, i: usize) -> Vec<f64> {
        assert!(i >= 1 && i < self.breakpoints.len(), "breakpoint {i} has no left segment");
        self.segment_value(i - 1, self.breakpoints[i])
    }

    /// Writes `t,y1..yd` at the given times.
    pub fn write_csv<W: Write>(&self, times: &[f64], mut out: W) -> Result<(), IntegrateError> {
        write_trajectory_header(&mut out, self.dim).map_err(io_error)?;
        for &t in times {
            let y = self.eval(t)?;
            write_trajectory_row(&mut out, t, &y).map_err(io_error)?;
        }
        Ok(())
    }
}

fn io_error(e: std::io::Error) -> IntegrateError {
    IntegrateError::InvalidStep(format!("write failed: {e}"))
}

fn write_trajectory_header<W: Write>(out: &mut W, dim: usize) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|k| format!("y{k}")));
    write_csv_row(out, &header)
}

fn write_trajectory_row<W: Write>(out: &mut W, t: f64, y: &[f64]) -> std::io::Result<()> {
    let mut row = vec![fmt17(t)];
    row.extend(y.iter().map(|v| fmt17(*v)));
    write_csv_row(out, &row)
}

pub fn polygon_interpolant(ts: &TimeSeries) -> PiecewiseTrajectory {
    let n = ts.len() - 1;
    let mut origins = Vec::with_capacity(n * ts.dim());
    let mut slopes = Vec::with_capacity(n * ts.dim());
    for i in 0..n {
        origins.extend_from_slice(ts.value(i));
        slopes.extend(ts.difference_quotient(i));
    }
    PiecewiseTrajectory {
        kind: PiecewiseKind::Polygon,
        breakpoints: ts.times().to_vec(),
        dim: ts.dim(),
        origins,
        slopes,
    }
}

fn check_model_against(model: &ModelExpr, d: usize) -> Result<(), IntegrateError> {
    if model.state_dim() != d || model.output_dim() != d {
        return Err(IntegrateError::DimensionMismatch {
            input: model.state_dim(),
            output: model.output_dim(),
            data: d,
        });
    }
    Ok(())
}

pub fn euler_piecewise(model: &ModelExpr, a: &[f64], ts: &TimeSeries) -> Result<PiecewiseTrajectory, IntegrateError> {
    check_model_against(model, ts.dim())?;
    let n = ts.len() - 1;
    let mut origins = Vec::with_capacity(n * ts.dim());
    let mut slopes = Vec::with_capacity(n * ts.dim());
    for i in 0..n {
        let (t, x) = (ts.times()[i], ts.value(i));
        let f = model.eval(a, t, x)?;
        if f.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::NonFinite { t, x: x.to_vec() });
        }
        origins.extend_from_slice(x);
        slopes.extend(f);
    }
    Ok(PiecewiseTrajectory {
        kind: PiecewiseKind::Euler,
        breakpoints: ts.times().to_vec(),
        dim: ts.dim(),
        origins,
        slopes,
    })
}

/// Step used when none is given: a tenth of `min(A, 1e-3)`.
pub fn default_step(stats: &SeriesStats) -> f64 {
    stats.min_gap.min(1e-3) * 0.1
}

/// Dense RK4 solution. Nodes sit at `t0 + k h` plus a final node at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t0: f64,
    pub x0: Vec<f64>,
    /// End time that was requested.
    pub t_end: f64,
    pub h: f64,
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major node states.
    pub states: Vec<f64>,
    /// Model derivative at each node, used for Hermite interpolation.
    pub derivatives: Vec<f64>,
    /// Set when the run stopped early on a non-finite or huge state.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    fn derivative(&self, k: usize) -> &[f64] {
        &self.derivatives[k * self.dim..(k + 1) * self.dim]
    }

    /// Last time with a valid state; equals `t_end` unless truncated.
    pub fn covered_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Cubic Hermite interpolation between nodes.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, IntegrateError> {
        let end = self.covered_end();
        if !(t >= self.t0 && t <= end) {
            return Err(IntegrateError::OutOfRange {
                t,
                start: self.t0,
                end,
            });
        }
        if self.len() == 1 {
            return Ok(self.x0.clone());
        }
        let k = self.times.partition_point(|s| *s <= t).saturating_sub(1).min(self.len() - 2);
        let (ta, tb) = (self.times[k], self.times[k + 1]);
        let h = tb - ta;
        let s = (t - ta) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (ya, yb) = (self.state(k), self.state(k + 1));
        let (da, db) = (self.derivative(k), self.derivative(k + 1));
        Ok((0..self.dim)
            .map(|c| h00 * ya[c] + h10 * h * da[c] + h01 * yb[c] + h11 * h * db[c])
            .collect())
    }

    /// Writes `t,y1..yd` at every node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write_trajectory_header(&mut out, self.dim)?;
        for k in 0..self.len() {
            write_trajectory_row(&mut out, self.times[k], self.state(k))?;
        }
        Ok(())
    }
}

fn finite_and_bounded(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite() && v.abs() <= TRUNCATION_LIMIT)
}

pub fn rk4_solve(
    model: &ModelExpr,
    a: &[f64],
    t0: f64,
    x0: &[f64],
    t_end: f64,
    h: f64,
) -> Result<Trajectory, IntegrateError> {
    check_model_against(model, x0.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(IntegrateError::InvalidStep(format!("step {h} must be positive and finite")));
    }
    if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
        return Err(IntegrateError::InvalidStep(format!("interval [{t0}, {t_end}] is empty")));
    }
    let d = x0.len();
    let mut ws = Workspace::default();
    let mut f = |t: f64, x: &[f64], out: &mut [f64]| model.eval_into(&mut ws, a, t, x, out);

    let mut k1 = model.eval(a, t0, x0)?;
    if !finite_and_bounded(x0) || k1.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFinite { t: t0, x: x0.to_vec() });
    }

    let ratio = (t_end - t0) / h;
    let steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
        ratio.round().max(1.0) as usize
    } else {
        ratio.ceil() as usize
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity((steps + 1) * d);
    let mut derivatives = Vec::with_capacity((steps + 1) * d);
    times.push(t0);
    states.extend_from_slice(x0);
    derivatives.extend_from_slice(&k1);

    let mut x = x0.to_vec();
    let (mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut probe = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut truncated = false;
    let mut t = t0;

    for step in 1..=steps {
        let t_next = if step == steps { t_end } else { t0 + step as f64 * h };
        let dt = t_next - t;
        for c in 0..d {
            probe[c] = x[c] + 0.5 * dt * k1[c];
        }
        f(t + 0.5 * dt, &probe, &mut k2);
        for c in 0..d {
            probe[c] = x[c] + 0.5 * dt * k2[c];
        }
        f(t + 0.5 * dt, &probe, &mut k3);
        for c in 0..d {
            probe[c] = x[c] + dt * k3[c];
        }
        f(t_next, &probe, &mut k4);
        for c in 0..d {
            next[c] = x[c] + dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if !finite_and_bounded(&next) {
            truncated = true;
            break;
        }
        f(t_next, &next, &mut k1);
        if k1.iter().any(|v| !v.is_finite()) {
            truncated = true;
            break;
        }
        x.copy_from_slice(&next);
        t = t_next;
        times.push(t);
        states.extend_from_slice(&x);
        derivatives.extend_from_slice(&k1);
    }

    Ok(Trajectory {
        t0,
        x0: x0.to_vec(),
        t_end,
        h,
        dim: d,
        times,
        states,
        derivatives,
        truncated,
    })
}

/// `n` evenly spaced times covering `[start, end]` inclusively.
pub fn sample_times(start: f64, end: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "need at least two sample times");
    (0..n)
        .map(|k| if k == n - 1 { end } else { start + (end - start) * k as f64 / (n - 1) as f64 })
        .collect()
}
