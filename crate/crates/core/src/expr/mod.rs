//! Parametric model expressions `f(a, t, x)`.
//!
//! A model is written in a small infix language over the parameters
//! `a1..ap`, the state components `x1..xn` and the independent variable
//! `t`. Vector-valued models list one component per output, separated by
//! `;`:
//!
//! ```
//! use steepfit::expr::parse_model;
//!
//! let model = parse_model("a1*x1 - a2*x1*x2; -a3*x2 + a4*x1*x2", 4, 2).unwrap();
//! assert_eq!(model.output_dim(), 2);
//! let y = model.eval(&[1.0, 0.5, 1.0, 0.5], 0.0, &[2.0, 1.0]).unwrap();
//! assert_eq!(y, vec![1.0, 0.0]);
//! ```
//!
//! Parameter gradients are computed by forward-mode differentiation
//! through the compiled expression, so they are exact up to rounding.

mod ast;
mod parser;
mod tape;

use std::fmt;

use thiserror::Error;

pub use ast::{BinOp, Expr, Func};
pub(crate) use tape::{Seed, Workspace};
use tape::Tape;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("undeclared symbol `{name}` at byte {position}")]
    UndeclaredSymbol { name: String, position: usize },
    #[error("model component {index} is empty")]
    EmptyComponent { index: usize },
    #[error("{what} has length {actual}, model expects {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
}

/// A parsed, validated model. Immutable once built.
#[derive(Debug, Clone)]
pub struct ModelExpr {
    components: Vec<Expr>,
    tapes: Vec<Tape>,
    param_count: usize,
    state_dim: usize,
}

/// Row-major `output_dim x columns` derivative matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Jacobian {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Frobenius norm, an upper bound on the spectral norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Parses `text` into a model with `param_count` parameters and
/// `state_dim` state components.
///
/// A dimension of zero is allowed: `param_count = 0` gives a fixed model,
/// `state_dim = 0` a function of `t` alone.
pub fn parse_model(text: &str, param_count: usize, state_dim: usize) -> Result<ModelExpr, ExprError> {
    let mut components = Vec::new();
    let mut offset = 0;
    for (index, piece) in text.split(';').enumerate() {
        if piece.trim().is_empty() {
            return Err(ExprError::EmptyComponent { index });
        }
        components.push(parser::parse_component(piece, offset, param_count, state_dim)?);
        offset += piece.len() + 1;
    }
    Ok(ModelExpr::from_components(components, param_count, state_dim))
}

impl ModelExpr {
    /// Builds a model from already-validated trees.
    ///
    /// # Panics
    /// If a tree references a parameter or state index outside the declared
    /// dimensions, or `components` is empty.
    pub fn from_components(components: Vec<Expr>, param_count: usize, state_dim: usize) -> ModelExpr {
        assert!(!components.is_empty(), "a model needs at least one component");
        for c in &components {
            c.walk(&mut |e| match e {
                Expr::Param(k) => assert!(*k < param_count, "parameter index out of range"),
                Expr::State(k) => assert!(*k < state_dim, "state index out of range"),
                _ => {}
            });
        }
        let tapes = components.iter().map(Tape::compile).collect();
        ModelExpr {
            components,
            tapes,
            param_count,
            state_dim,
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn references_state(&self) -> bool {
        self.components.iter().any(Expr::references_state)
    }

    fn check_dims(&self, a: &[f64], x: &[f64]) -> Result<(), ExprError> {
        if a.len() != self.param_count {
            return Err(ExprError::DimensionMismatch {
                what: "parameter vector",
                expected: self.param_count,
                actual: a.len(),
            });
        }
        if x.len() != self.state_dim {
            return Err(ExprError::DimensionMismatch {
                what: "state vector",
                expected: self.state_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Evaluates every component. Domain violations (log of a negative
    /// number, overflow) show up as non-finite entries rather than errors.
    pub fn eval(&self, a: &[f64], t: f64, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.check_dims(a, x)?;
        let mut ws = Workspace::default();
        Ok(self.tapes.iter().map(|tape| tape.eval(&mut ws, a, t, x)).collect())
    }

    /// Values together with `∂f/∂a` (one row per output component).
    pub fn eval_with_param_gradient(
        &self,
        a: &[f64],
        t: f64,
        x: &[f64],
    ) -> Result<(Vec<f64>, Jacobian), ExprError> {
        self.check_dims(a, x)?;
        let mut ws = Workspace::default();
        let mut values = vec![0.0; self.output_dim()];
        let mut jac = vec![0.0; self.output_dim() * self.param_count];
        self.eval_dual_into(&mut ws, Seed::Params, a, t, x, &mut values, &mut jac);
        Ok((
            values,
            Jacobian {
                rows: self.output_dim(),
                cols: self.param_count,
                data: jac,
            },
        ))
    }

    /// Values together with `∂f/∂(t, x)`; column 0 is the time derivative.
    pub fn eval_with_time_state_jacobian(
        &self,
        a: &[f64],
        t: f64,
        x: &[f64],
    ) -> Result<(Vec<f64>, Jacobian), ExprError> {
        self.check_dims(a, x)?;
        let mut ws = Workspace::default();
        let cols = self.state_dim + 1;
        let mut values = vec![0.0; self.output_dim()];
        let mut jac = vec![0.0; self.output_dim() * cols];
        self.eval_dual_into(&mut ws, Seed::TimeState, a, t, x, &mut values, &mut jac);
        Ok((
            values,
            Jacobian {
                rows: self.output_dim(),
                cols,
                data: jac,
            },
        ))
    }

    /// Unchecked evaluation for inner loops; dimensions must already match.
    pub(crate) fn eval_into(&self, ws: &mut Workspace, a: &[f64], t: f64, x: &[f64], out: &mut [f64]) {
        for (tape, slot) in self.tapes.iter().zip(out.iter_mut()) {
            *slot = tape.eval(ws, a, t, x);
        }
    }

    /// Unchecked forward-mode evaluation; `jac` is row-major with one row per
    /// output and one column per seeded symbol.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn eval_dual_into(
        &self,
        ws: &mut Workspace,
        seed: Seed,
        a: &[f64],
        t: f64,
        x: &[f64],
        values: &mut [f64],
        jac: &mut [f64],
    ) {
        let cols = match seed {
            Seed::Params => self.param_count,
            Seed::TimeState => self.state_dim + 1,
        };
        for (i, tape) in self.tapes.iter().enumerate() {
            values[i] = tape.eval_dual(ws, seed, a, t, x, &mut jac[i * cols..(i + 1) * cols]);
        }
    }
}

impl fmt::Display for ModelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}
