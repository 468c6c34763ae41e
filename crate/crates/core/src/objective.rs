//! Least-squares objectives `F(a)` and their exact gradients.
//!
//! * [`FnFitObjective`]: `F(a) = Σ_i ‖f(a, t_i) − x(t_i)‖²`
//! * [`OdeObjective`]: `F(a) = Σ_i ‖f(a, t_i, x(t_i)) − (x(t_{i+1}) − x(t_i)) / (t_{i+1} − t_i)‖²`
//! * [`PdeObjective`]: `F(a) = Σ_nodes (Σ_k a_k · stencil_k + c)²`
//!
//! Sums always run in index order so results are reproducible bit-for-bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{GridField, TimeSeries};
use crate::expr::{ExprError, ModelExpr, Seed, Workspace};

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("function models are f(a, t); `x` symbols are not allowed here")]
    StateInFunctionModel,
    #[error("{what}: expected {expected}, found {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("PDE objective needs at least one term")]
    EmptyTerms,
    #[error("derivative order {order} is not supported (0, 1 or 2)")]
    UnsupportedOrder { order: usize },
    #[error("coefficient {index} is not used by any term")]
    UnusedCoefficient { index: usize },
    #[error("grid has {available} nodes along {axis}, too few for order {order}")]
    GridTooSmall {
        axis: &'static str,
        order: usize,
        available: usize,
    },
    #[error("stencil {stencil:?} out of range at node ({i}, {j})")]
    StencilOutOfRange { stencil: Stencil, i: usize, j: usize },
    #[error("constraint pins coordinate {index} but the objective has {dim} parameters")]
    PinOutOfRange { index: usize, dim: usize },
}

/// A smooth least-squares objective of `dim()` parameters.
///
/// Non-finite values are returned as-is; callers decide how to react.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, a: &[f64]) -> f64;

    fn value_and_gradient(&self, a: &[f64]) -> (f64, Vec<f64>);
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, a: &[f64]) -> f64 {
        (**self).value(a)
    }

    fn value_and_gradient(&self, a: &[f64]) -> (f64, Vec<f64>) {
        (**self).value_and_gradient(a)
    }
}

/// Wraps a closure returning `(F, ∇F)`.
pub struct ClosureObjective<G> {
    dim: usize,
    eval: G,
}

impl<G> ClosureObjective<G>
where
    G: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    pub fn new(dim: usize, eval: G) -> Self {
        ClosureObjective { dim, eval }
    }
}

impl<G> Objective for ClosureObjective<G>
where
    G: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, a: &[f64]) -> f64 {
        (self.eval)(a).0
    }

    fn value_and_gradient(&self, a: &[f64]) -> (f64, Vec<f64>) {
        (self.eval)(a)
    }
}

/// Feasible set for the descent iterates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ConstraintMode {
    #[default]
    None,
    /// `‖a‖₂ = 1`.
    UnitNorm,
    /// `a[index] = value` (zero-based index).
    Pin { index: usize, value: f64 },
}

impl ConstraintMode {
    pub fn validate(&self, dim: usize) -> Result<(), ObjectiveError> {
        match *self {
            ConstraintMode::Pin { index, .. } if index >= dim => Err(ObjectiveError::PinOutOfRange { index, dim }),
            _ => Ok(()),
        }
    }

    /// Maps `a` onto the feasible set in place.
    pub fn project(&self, a: &mut [f64]) {
        match *self {
            ConstraintMode::None => {}
            ConstraintMode::UnitNorm => {
                let norm = crate::util::norm2(a);
                if norm > 0.0 {
                    a.iter_mut().for_each(|v| *v /= norm);
                }
            }
            ConstraintMode::Pin { index, value } => a[index] = value,
        }
    }

    /// Component of `grad` that moves within the feasible set.
    pub fn tangent(&self, a: &[f64], grad: &[f64]) -> Vec<f64> {
        match *self {
            ConstraintMode::None => grad.to_vec(),
            ConstraintMode::UnitNorm => {
                let radial: f64 = a.iter().zip(grad).map(|(x, g)| x * g).sum();
                grad.iter().zip(a).map(|(g, x)| g - radial * x).collect()
            }
            ConstraintMode::Pin { index, .. } => {
                let mut g = grad.to_vec();
                g[index] = 0.0;
                g
            }
        }
    }
}

/// Direct function fit of `f(a, t)` to the samples.
#[derive(Debug, Clone)]
pub struct FnFitObjective {
    model: ModelExpr,
    series: TimeSeries,
}

impl FnFitObjective {
    pub fn new(model: ModelExpr, series: TimeSeries) -> Result<Self, ObjectiveError> {
        if model.references_state() {
            return Err(ObjectiveError::StateInFunctionModel);
        }
        if model.output_dim() != series.dim() {
            return Err(ObjectiveError::DimensionMismatch {
                what: "model outputs vs data columns",
                expected: series.dim(),
                actual: model.output_dim(),
            });
        }
        Ok(FnFitObjective { model, series })
    }

    pub fn model(&self) -> &ModelExpr {
        &self.model
    }
}

impl Objective for FnFitObjective {
    fn dim(&self) -> usize {
        self.model.param_count()
    }

    fn value(&self, a: &[f64]) -> f64 {
        assert_eq!(a.len(), self.dim());
        let mut ws = Workspace::default();
        let mut out = vec![0.0; self.model.output_dim()];
        let zeros = vec![0.0; self.model.state_dim()];
        let mut total = 0.0;
        for (i, &t) in self.series.times().iter().enumerate() {
            self.model.eval_into(&mut ws, a, t, &zeros, &mut out);
            total += squared_residual(&out, self.series.value(i));
        }
        total
    }

    fn value_and_gradient(&self, a: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(a.len(), self.dim());
        let zeros = vec![0.0; self.model.state_dim()];
        let mut acc = GradientAccumulator::new(&self.model);
        for (i, &t) in self.series.times().iter().enumerate() {
            acc.add(&self.model, a, t, &zeros, self.series.value(i));
        }
        acc.finish()
    }
}

/// ODE right-hand-side fit against forward difference quotients.
#[derive(Debug, Clone)]
pub struct OdeObjective {
    model: ModelExpr,
    series: TimeSeries,
    /// Row-major `(len - 1) x dim`.
    quotients: Vec<f64>,
}

impl OdeObjective {
    pub fn new(model: ModelExpr, series: TimeSeries) -> Result<Self, ObjectiveError> {
        let d = series.dim();
        if model.state_dim() != d {
            return Err(ObjectiveError::DimensionMismatch {
                what: "model state dimension vs data columns",
                expected: d,
                actual: model.state_dim(),
            });
        }
        if model.output_dim() != d {
            return Err(ObjectiveError::DimensionMismatch {
                what: "model outputs vs data columns",
                expected: d,
                actual: model.output_dim(),
            });
        }
        let quotients = (0..series.len() - 1).flat_map(|i| series.difference_quotient(i)).collect();
        Ok(OdeObjective {
            model,
            series,
            quotients,
        })
    }

    pub fn model(&self) -> &ModelExpr {
        &self.model
    }

    pub fn series(&self) -> &TimeSeries {
        &self.series
    }

    fn quotient(&self, i: usize) -> &[f64] {
        let d = self.series.dim();
        &self.quotients[i * d..(i + 1) * d]
    }
}

impl Objective for OdeObjective {
    fn dim(&self) -> usize {
        self.model.param_count()
    }

    fn value(&self, a: &[f64]) -> f64 {
        assert_eq!(a.len(), self.dim());
        let mut ws = Workspace::default();
        let mut out = vec![0.0; self.model.output_dim()];
        let times = self.series.times();
        let mut total = 0.0;
        for (i, &t) in times[..times.len() - 1].iter().enumerate() {
            self.model.eval_into(&mut ws, a, t, self.series.value(i), &mut out);
            total += squared_residual(&out, self.quotient(i));
        }
        total
    }

    fn value_and_gradient(&self, a: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(a.len(), self.dim());
        let mut acc = GradientAccumulator::new(&self.model);
        let times = self.series.times();
        for (i, &t) in times[..times.len() - 1].iter().enumerate() {
            acc.add(&self.model, a, t, self.series.value(i), self.quotient(i));
        }
        acc.finish()
    }
}

fn squared_residual(model: &[f64], target: &[f64]) -> f64 {
    model.iter().zip(target).map(|(m, y)| (m - y) * (m - y)).sum()
}

/// Accumulates `Σ ‖f − y‖²` and `2 Σ Jᵀ (f − y)` one sample at a time.
struct GradientAccumulator {
    ws: Workspace,
    values: Vec<f64>,
    jac: Vec<f64>,
    total: f64,
    grad: Vec<f64>,
}

impl GradientAccumulator {
    fn new(model: &ModelExpr) -> Self {
        GradientAccumulator {
            ws: Workspace::default(),
            values: vec![0.0; model.output_dim()],
            jac: vec![0.0; model.output_dim() * model.param_count()],
            total: 0.0,
            grad: vec![0.0; model.param_count()],
        }
    }

    fn add(&mut self, model: &ModelExpr, a: &[f64], t: f64, x: &[f64], target: &[f64]) {
        model.eval_dual_into(&mut self.ws, Seed::Params, a, t, x, &mut self.values, &mut self.jac);
        let p = self.grad.len();
        for (row, (v, y)) in self.values.iter().zip(target).enumerate() {
            let r = v - y;
            self.total += r * r;
            for (g, dj) in self.grad.iter_mut().zip(&self.jac[row * p..(row + 1) * p]) {
                *g += 2.0 * r * dj;
            }
        }
    }

    fn finish(self) -> (f64, Vec<f64>) {
        (self.total, self.grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    X,
    T,
}

/// A difference quotient: which variable and which order (0 = the value).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stencil {
    pub variable: Variable,
    pub order: usize,
}

impl Stencil {
    pub const U: Stencil = Stencil {
        variable: Variable::X,
        order: 0,
    };
    pub const UX: Stencil = Stencil {
        variable: Variable::X,
        order: 1,
    };
    pub const UXX: Stencil = Stencil {
        variable: Variable::X,
        order: 2,
    };
    pub const UT: Stencil = Stencil {
        variable: Variable::T,
        order: 1,
    };
    pub const UTT: Stencil = Stencil {
        variable: Variable::T,
        order: 2,
    };

    /// Parses `u`, `ux`, `uxx`, `ut`, `utt`.
    pub fn from_name(name: &str) -> Option<Stencil> {
        Some(match name {
            "u" => Self::U,
            "ux" => Self::UX,
            "uxx" => Self::UXX,
            "ut" => Self::UT,
            "utt" => Self::UTT,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match (self.variable, self.order) {
            (_, 0) => "u",
            (Variable::X, 1) => "ux",
            (Variable::X, 2) => "uxx",
            (Variable::T, 1) => "ut",
            (Variable::T, 2) => "utt",
            _ => "u?",
        }
    }
}

/// Difference quotient of the grid data.
///
/// Indices are zero-based. For the chosen variable the quotient reads:
///
/// * order 1 at `i`: `(u_{i+1} − u_i) / (x_{i+1} − x_i)`, for `0 ≤ i ≤ len − 2`;
/// * order 2 at `i`: `(u_{i+1} − 2u_i + u_{i−1}) / ((x_{i+1} − x_i)(x_i − x_{i−1}))`,
///   for `1 ≤ i ≤ len − 2`;
/// * order 0: `u(i, j)`.
///
/// The other index selects the line the stencil runs along. The
/// second-order denominator is the product of the two adjacent gaps, which
/// equals `h²` on a uniform grid.
pub fn approx_partial(grid: &GridField, stencil: Stencil, i: usize, j: usize) -> Result<f64, ObjectiveError> {
    let out_of_range = || ObjectiveError::StencilOutOfRange { stencil, i, j };
    let (nx, nt) = (grid.xs().len(), grid.ts().len());
    if i >= nx || j >= nt {
        return Err(out_of_range());
    }
    type Line<'g> = Box<dyn Fn(usize) -> f64 + 'g>;
    let (axis, k, at): (&[f64], usize, Line<'_>) = match stencil.variable {
        Variable::X => (grid.xs(), i, Box::new(move |m| grid.u(m, j))),
        Variable::T => (grid.ts(), j, Box::new(move |m| grid.u(i, m))),
    };
    match stencil.order {
        0 => Ok(grid.u(i, j)),
        1 => {
            if k + 1 >= axis.len() {
                return Err(out_of_range());
            }
            Ok((at(k + 1) - at(k)) / (axis[k + 1] - axis[k]))
        }
        2 => {
            if k == 0 || k + 1 >= axis.len() {
                return Err(out_of_range());
            }
            Ok((at(k + 1) - 2.0 * at(k) + at(k - 1)) / ((axis[k + 1] - axis[k]) * (axis[k] - axis[k - 1])))
        }
        order => Err(ObjectiveError::UnsupportedOrder { order }),
    }
}

/// One term `a_k · D u` of the conjectured PDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdeTerm {
    /// Zero-based coefficient index.
    pub coefficient: usize,
    pub stencil: Stencil,
}

/// Residual of `Σ_k a_k D_k u + c = 0` over the grid.
///
/// Every term is anchored at node `(p, q)`: x-stencils use the nodes
/// `p − order..=p` on line `q`, t-stencils use `q − order..=q` on column `p`.
/// Only anchors where every requested stencil fits are summed. With
/// `include_constant` the constant `c` is appended as the last parameter.
#[derive(Debug, Clone)]
pub struct PdeObjective {
    terms: Vec<PdeTerm>,
    include_constant: bool,
    constraint: ConstraintMode,
    dim: usize,
    /// Row-major `nodes x dim`: the stencil values multiplying each parameter.
    rows: Vec<f64>,
    nodes: usize,
}

impl PdeObjective {
    pub fn new(
        terms: Vec<PdeTerm>,
        grid: &GridField,
        constraint: ConstraintMode,
        include_constant: bool,
    ) -> Result<Self, ObjectiveError> {
        if terms.is_empty() {
            return Err(ObjectiveError::EmptyTerms);
        }
        let mut max_order = [0usize; 2];
        for term in &terms {
            if term.stencil.order > 2 {
                return Err(ObjectiveError::UnsupportedOrder {
                    order: term.stencil.order,
                });
            }
            let slot = &mut max_order[term.stencil.variable as usize];
            *slot = (*slot).max(term.stencil.order);
        }
        let coefficients = terms.iter().map(|t| t.coefficient).max().unwrap_or(0) + 1;
        if let Some(index) = (0..coefficients).find(|k| !terms.iter().any(|t| t.coefficient == *k)) {
            return Err(ObjectiveError::UnusedCoefficient { index });
        }
        let dim = coefficients + usize::from(include_constant);
        constraint.validate(dim)?;

        let (nx, nt) = (grid.xs().len(), grid.ts().len());
        for (axis, available, order) in [("x", nx, max_order[0]), ("t", nt, max_order[1])] {
            if available <= order {
                return Err(ObjectiveError::GridTooSmall { axis, order, available });
            }
        }

        let mut rows = Vec::new();
        let mut nodes = 0;
        for p in max_order[0]..nx {
            for q in max_order[1]..nt {
                let start = rows.len();
                rows.resize(start + dim, 0.0);
                for term in &terms {
                    let value = match (term.stencil.variable, term.stencil.order) {
                        (_, 0) => grid.u(p, q),
                        (Variable::X, _) => approx_partial(grid, term.stencil, p - 1, q)?,
                        (Variable::T, _) => approx_partial(grid, term.stencil, p, q - 1)?,
                    };
                    rows[start + term.coefficient] += value;
                }
                if include_constant {
                    rows[start + dim - 1] = 1.0;
                }
                nodes += 1;
            }
        }
        Ok(PdeObjective {
            terms,
            include_constant,
            constraint,
            dim,
            rows,
            nodes,
        })
    }

    pub fn terms(&self) -> &[PdeTerm] {
        &self.terms
    }

    pub fn include_constant(&self) -> bool {
        self.include_constant
    }

    pub fn constraint(&self) -> ConstraintMode {
        self.constraint
    }

    /// Number of grid anchors contributing to the sum.
    pub fn node_count(&self) -> usize {
        self.nodes
    }

    fn residual(&self, node: usize, a: &[f64]) -> f64 {
        self.rows[node * self.dim..(node + 1) * self.dim]
            .iter()
            .zip(a)
            .map(|(s, c)| s * c)
            .sum()
    }
}

impl Objective for PdeObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, a: &[f64]) -> f64 {
        assert_eq!(a.len(), self.dim);
        (0..self.nodes).map(|n| self.residual(n, a).powi(2)).sum()
    }

    // F = ‖S a‖², so ∇F = 2 Sᵀ S a.
    fn value_and_gradient(&self, a: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(a.len(), self.dim);
        let mut total = 0.0;
        let mut grad = vec![0.0; self.dim];
        for n in 0..self.nodes {
            let r = self.residual(n, a);
            total += r * r;
            for (g, s) in grad.iter_mut().zip(&self.rows[n * self.dim..(n + 1) * self.dim]) {
                *g += 2.0 * r * s;
            }
        }
        (total, grad)
    }
}
