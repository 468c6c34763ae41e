//! Flattened postfix form of an expression tree.
//!
//! Evaluation runs on a value stack; the forward-mode variant carries a
//! gradient row per stack slot, seeded by whichever symbols are active.

use super::ast::{BinOp, Expr, Func};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Param(usize),
    State(usize),
    Time,
    Neg,
    Bin(BinOp),
    Call(Func),
}

/// Which symbols the forward-mode pass differentiates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Seed {
    /// Columns are `a1..ap`.
    Params,
    /// Column 0 is `t`, columns `1..=n` are `x1..xn`.
    TimeState,
}

#[derive(Debug, Clone)]
pub(crate) struct Tape {
    ops: Vec<Op>,
    depth: usize,
}

fn emit(expr: &Expr, ops: &mut Vec<Op>) {
    match expr {
        Expr::Num(v) => ops.push(Op::Const(*v)),
        Expr::Param(k) => ops.push(Op::Param(*k)),
        Expr::State(k) => ops.push(Op::State(*k)),
        Expr::Time => ops.push(Op::Time),
        Expr::Neg(inner) => {
            emit(inner, ops);
            ops.push(Op::Neg);
        }
        Expr::Call(func, arg) => {
            emit(arg, ops);
            ops.push(Op::Call(*func));
        }
        Expr::Binary(op, lhs, rhs) => {
            emit(lhs, ops);
            emit(rhs, ops);
            ops.push(Op::Bin(*op));
        }
    }
}

/// Reusable stacks so the hot loops do not allocate per evaluation.
#[derive(Debug, Default, Clone)]
pub(crate) struct Workspace {
    values: Vec<f64>,
    grads: Vec<f64>,
}

impl Tape {
    pub(crate) fn compile(expr: &Expr) -> Tape {
        let mut ops = Vec::new();
        emit(expr, &mut ops);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Param(_) | Op::State(_) | Op::Time => depth += 1,
                Op::Bin(_) => depth -= 1,
                Op::Neg | Op::Call(_) => {}
            }
            max_depth = max_depth.max(depth);
        }
        Tape { ops, depth: max_depth }
    }

    pub(crate) fn eval(&self, ws: &mut Workspace, a: &[f64], t: f64, x: &[f64]) -> f64 {
        let stack = &mut ws.values;
        stack.clear();
        for op in &self.ops {
            match *op {
                Op::Const(v) => stack.push(v),
                Op::Param(k) => stack.push(a[k]),
                Op::State(k) => stack.push(x[k]),
                Op::Time => stack.push(t),
                Op::Neg => {
                    let top = stack.last_mut().expect("tape underflow");
                    *top = -*top;
                }
                Op::Call(func) => {
                    let top = stack.last_mut().expect("tape underflow");
                    *top = apply_func(func, *top);
                }
                Op::Bin(op) => {
                    let rhs = stack.pop().expect("tape underflow");
                    let lhs = stack.last_mut().expect("tape underflow");
                    *lhs = match op {
                        BinOp::Add => *lhs + rhs,
                        BinOp::Sub => *lhs - rhs,
                        BinOp::Mul => *lhs * rhs,
                        BinOp::Div => *lhs / rhs,
                        BinOp::Pow => lhs.powf(rhs),
                    };
                }
            }
        }
        stack[0]
    }

    /// Evaluates the value and writes its gradient over the seeded symbols
    /// into `grad_out` (length = number of seeded columns).
    pub(crate) fn eval_dual(
        &self,
        ws: &mut Workspace,
        seed: Seed,
        a: &[f64],
        t: f64,
        x: &[f64],
        grad_out: &mut [f64],
    ) -> f64 {
        let width = grad_out.len();
        let values = &mut ws.values;
        let grads = &mut ws.grads;
        values.clear();
        grads.clear();
        grads.resize(self.depth * width, 0.0);

        for op in &self.ops {
            match *op {
                Op::Const(_) | Op::Param(_) | Op::State(_) | Op::Time => {
                    let slot = values.len();
                    let row = &mut grads[slot * width..(slot + 1) * width];
                    row.fill(0.0);
                    let (value, column) = match *op {
                        Op::Const(v) => (v, None),
                        Op::Param(k) => (a[k], (seed == Seed::Params).then_some(k)),
                        Op::State(k) => (x[k], (seed == Seed::TimeState).then_some(k + 1)),
                        Op::Time => (t, (seed == Seed::TimeState).then_some(0)),
                        _ => unreachable!(),
                    };
                    if let Some(c) = column {
                        row[c] = 1.0;
                    }
                    values.push(value);
                }
                Op::Neg => {
                    let slot = values.len() - 1;
                    values[slot] = -values[slot];
                    grads[slot * width..(slot + 1) * width]
                        .iter_mut()
                        .for_each(|g| *g = -*g);
                }
                Op::Call(func) => {
                    let slot = values.len() - 1;
                    let u = values[slot];
                    let value = apply_func(func, u);
                    let scale = match func {
                        Func::Exp => value,
                        Func::Log => 1.0 / u,
                        Func::Sin => u.cos(),
                        Func::Cos => -u.sin(),
                        Func::Sqrt => 0.5 / value,
                        Func::Abs => {
                            if u > 0.0 {
                                1.0
                            } else if u < 0.0 {
                                -1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    values[slot] = value;
                    grads[slot * width..(slot + 1) * width]
                        .iter_mut()
                        .for_each(|g| *g *= scale);
                }
                Op::Bin(op) => {
                    let rhs_slot = values.len() - 1;
                    let lhs_slot = rhs_slot - 1;
                    let v = values.pop().expect("tape underflow");
                    let u = values[lhs_slot];
                    let (head, tail) = grads.split_at_mut(rhs_slot * width);
                    let du = &mut head[lhs_slot * width..];
                    let dv = &tail[..width];
                    let value = match op {
                        BinOp::Add => {
                            du.iter_mut().zip(dv).for_each(|(g, h)| *g += h);
                            u + v
                        }
                        BinOp::Sub => {
                            du.iter_mut().zip(dv).for_each(|(g, h)| *g -= h);
                            u - v
                        }
                        BinOp::Mul => {
                            du.iter_mut().zip(dv).for_each(|(g, h)| *g = *g * v + u * h);
                            u * v
                        }
                        BinOp::Div => {
                            let inv = 1.0 / v;
                            let q = u * inv;
                            du.iter_mut().zip(dv).for_each(|(g, h)| *g = (*g - q * h) * inv);
                            q
                        }
                        BinOp::Pow => {
                            let p = u.powf(v);
                            if dv.iter().all(|h| *h == 0.0) {
                                // Constant exponent: power rule, valid for negative bases.
                                let scale = if v == 0.0 { 0.0 } else { v * u.powf(v - 1.0) };
                                du.iter_mut().for_each(|g| *g *= scale);
                            } else {
                                let ln_u = u.ln();
                                du.iter_mut()
                                    .zip(dv)
                                    .for_each(|(g, h)| *g = p * (h * ln_u + v * *g / u));
                            }
                            p
                        }
                    };
                    values[lhs_slot] = value;
                }
            }
        }
        grad_out.copy_from_slice(&grads[..width]);
        values[0]
    }
}

fn apply_func(func: Func, u: f64) -> f64 {
    match func {
        Func::Exp => u.exp(),
        Func::Log => u.ln(),
        Func::Sin => u.sin(),
        Func::Cos => u.cos(),
        Func::Sqrt => u.sqrt(),
        Func::Abs => u.abs(),
    }
}
