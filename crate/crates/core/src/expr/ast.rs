use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

/// Expression tree for one scalar output component.
///
/// Parameter and state indices are stored zero-based; they print as the
/// one-based `a<k>` / `x<k>` names accepted by the parser.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Param(usize),
    State(usize),
    Time,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

// Binding strength, loosest first.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
            Expr::Neg(_) => PREC_NEG,
            Expr::Binary(BinOp::Pow, ..) => PREC_POW,
            _ => PREC_ATOM,
        }
    }

    /// Visits every node in pre-order.
    pub fn walk(&self, visit: &mut impl FnMut(&Expr)) {
        visit(self);
        match self {
            Expr::Neg(inner) | Expr::Call(_, inner) => inner.walk(visit),
            Expr::Binary(_, lhs, rhs) => {
                lhs.walk(visit);
                rhs.walk(visit);
            }
            Expr::Num(_) | Expr::Param(_) | Expr::State(_) | Expr::Time => {}
        }
    }

    pub fn references_state(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::State(_)));
        found
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parenthesize: bool) -> fmt::Result {
        if parenthesize {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

fn fmt_number(value: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let magnitude = value.abs();
    if magnitude != 0.0 && !(1e-4..1e16).contains(&magnitude) {
        write!(f, "{value:e}")
    } else {
        write!(f, "{value}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.is_sign_negative() => {
                // Not produced by the parser; keep the output parseable.
                write!(f, "(0-")?;
                fmt_number(-v, f)?;
                write!(f, ")")
            }
            Expr::Num(v) => fmt_number(*v, f),
            Expr::Param(k) => write!(f, "a{}", k + 1),
            Expr::State(k) => write!(f, "x{}", k + 1),
            Expr::Time => write!(f, "t"),
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
            Expr::Neg(inner) => {
                write!(f, "-")?;
                inner.fmt_child(f, inner.precedence() < PREC_NEG)
            }
            Expr::Binary(op, lhs, rhs) => {
                let prec = self.precedence();
                let symbol = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                if *op == BinOp::Pow {
                    // Right-associative: the base needs parentheses at equal
                    // precedence, the exponent does not. A negated base must
                    // be wrapped since unary minus binds looser than `^`.
                    lhs.fmt_child(f, lhs.precedence() <= PREC_POW)?;
                    write!(f, "^")?;
                    rhs.fmt_child(f, rhs.precedence() < PREC_NEG)
                } else {
                    lhs.fmt_child(f, lhs.precedence() < prec)?;
                    write!(f, "{symbol}")?;
                    rhs.fmt_child(f, rhs.precedence() <= prec)
                }
            }
        }
    }
}
