//! Arithmetic expressions over robot states and time.
//!
//! Values are either scalars or vectors. A vector of length one coerces to a
//! scalar wherever a scalar is expected, and `norm` of a scalar is `abs`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// 1-based robot identifier, written `x<i>` in formulas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RobotId(pub usize);

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Norm,
    Abs,
    Exp,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Norm => "norm",
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "norm" => Func::Norm,
            "abs" => Func::Abs,
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    State(RobotId),
    Component(RobotId, usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no state available for robot {0}")]
    MissingState(RobotId),
    #[error("component {component} out of range for robot {robot} (dimension {dim})")]
    ComponentOutOfRange { robot: RobotId, component: usize, dim: usize },
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("non-finite result in {0}")]
    NonFinite(String),
}

/// Read access to robot states during evaluation.
pub trait StateLookup {
    fn state(&self, robot: RobotId) -> Option<&[f64]>;
}

impl StateLookup for BTreeMap<RobotId, Vec<f64>> {
    fn state(&self, robot: RobotId) -> Option<&[f64]> {
        self.get(&robot).map(Vec::as_slice)
    }
}

impl StateLookup for [(RobotId, &[f64])] {
    fn state(&self, robot: RobotId) -> Option<&[f64]> {
        self.iter().find(|(r, _)| *r == robot).map(|(_, x)| *x)
    }
}

impl<const N: usize> StateLookup for [(RobotId, &[f64]); N] {
    fn state(&self, robot: RobotId) -> Option<&[f64]> {
        self.as_slice().state(robot)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Value {
    fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            Value::Vector(v) if v.len() == 1 => Some(v[0]),
            Value::Vector(_) => None,
        }
    }

    fn len(&self) -> usize {
        match self {
            Value::Scalar(_) => 1,
            Value::Vector(v) => v.len(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Value::Scalar(v) => v.is_finite(),
            Value::Vector(v) => v.iter().all(|x| x.is_finite()),
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Value {
        match self {
            Value::Scalar(v) => Value::Scalar(f(*v)),
            Value::Vector(v) => Value::Vector(v.iter().map(|x| f(*x)).collect()),
        }
    }
}

/// Component-wise combination with scalar broadcasting.
fn zip(a: &Value, b: &Value, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Value, EvalError> {
    match (a, b) {
        (Value::Scalar(x), Value::Scalar(y)) => Ok(Value::Scalar(f(*x, *y))),
        (Value::Vector(x), Value::Vector(y)) if x.len() == y.len() => Ok(Value::Vector(x.iter().zip(y).map(|(p, q)| f(*p, *q)).collect())),
        (Value::Vector(x), Value::Vector(y)) if x.len() == 1 || y.len() == 1 => {
            if x.len() == 1 {
                Ok(Value::Vector(y.iter().map(|q| f(x[0], *q)).collect()))
            } else {
                Ok(Value::Vector(x.iter().map(|p| f(*p, y[0])).collect()))
            }
        }
        (Value::Scalar(x), Value::Vector(y)) => Ok(Value::Vector(y.iter().map(|q| f(*x, *q)).collect())),
        (Value::Vector(x), Value::Scalar(y)) => Ok(Value::Vector(x.iter().map(|p| f(*p, *y)).collect())),
        _ => Err(EvalError::Shape(format!(
            "{what} of vectors with lengths {} and {}",
            a.len(),
            b.len()
        ))),
    }
}

fn scalar_of(v: &Value, what: &str) -> Result<f64, EvalError> {
    v.as_scalar()
        .ok_or_else(|| EvalError::Shape(format!("{what} expects a scalar, got a vector of length {}", v.len())))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Direction of differentiation: d/d x_robot[component].
#[derive(Clone, Copy, Debug)]
struct Seed {
    robot: RobotId,
    component: usize,
}

struct Evaluator<'a, S: StateLookup + ?Sized> {
    states: &'a S,
    t: f64,
}

impl<S: StateLookup + ?Sized> Evaluator<'_, S> {
    fn lookup(&self, robot: RobotId) -> Result<&[f64], EvalError> {
        self.states.state(robot).ok_or(EvalError::MissingState(robot))
    }

    /// Value only; same semantics as [`Self::dual`] without tangents.
    fn value(&self, e: &Expr) -> Result<Value, EvalError> {
        let out = match e {
            Expr::Const(c) => Value::Scalar(*c),
            Expr::Time => Value::Scalar(self.t),
            Expr::State(r) => Value::Vector(self.lookup(*r)?.to_vec()),
            Expr::Component(r, k) => {
                let x = self.lookup(*r)?;
                Value::Scalar(*x.get(*k).ok_or(EvalError::ComponentOutOfRange {
                    robot: *r,
                    component: *k,
                    dim: x.len(),
                })?)
            }
            Expr::Neg(a) => self.value(a)?.map(|x| -x),
            Expr::Binary(op, a, b) => {
                let va = self.value(a)?;
                let vb = self.value(b)?;
                match op {
                    BinOp::Add => zip(&va, &vb, "sum", |x, y| x + y)?,
                    BinOp::Sub => zip(&va, &vb, "difference", |x, y| x - y)?,
                    BinOp::Mul => {
                        if va.as_scalar().is_none() && vb.as_scalar().is_none() {
                            return Err(EvalError::Shape("product of two vectors".into()));
                        }
                        zip(&va, &vb, "product", |x, y| x * y)?
                    }
                    BinOp::Div => {
                        let y = scalar_of(&vb, "division")?;
                        if y == 0.0 {
                            return Err(EvalError::NonFinite("division by zero".into()));
                        }
                        va.map(|x| x / y)
                    }
                }
            }
            Expr::Call(func, a) => {
                let v = self.value(a)?;
                match (func, &v) {
                    (Func::Norm, Value::Vector(x)) if x.len() != 1 => Value::Scalar(x.iter().map(|p| p * p).sum::<f64>().sqrt()),
                    (Func::Norm | Func::Abs, _) => Value::Scalar(scalar_of(&v, func.name())?.abs()),
                    (Func::Exp, _) => Value::Scalar(scalar_of(&v, "exp")?.exp()),
                    (Func::Sin, _) => Value::Scalar(scalar_of(&v, "sin")?.sin()),
                    (Func::Cos, _) => Value::Scalar(scalar_of(&v, "cos")?.cos()),
                    (Func::Sqrt, _) => {
                        let x = scalar_of(&v, "sqrt")?;
                        if x < 0.0 {
                            return Err(EvalError::NonFinite(format!("sqrt of negative value {x}")));
                        }
                        Value::Scalar(x.sqrt())
                    }
                }
            }
        };
        if !out.is_finite() {
            return Err(EvalError::NonFinite(e.to_string()));
        }
        Ok(out)
    }

    /// Value and (optionally) its tangent along `seed`.
    fn dual(&self, e: &Expr, seed: Option<Seed>) -> Result<(Value, Value), EvalError> {
        let out = match e {
            Expr::Const(c) => (Value::Scalar(*c), Value::Scalar(0.0)),
            Expr::Time => (Value::Scalar(self.t), Value::Scalar(0.0)),
            Expr::State(r) => {
                let x = self.lookup(*r)?;
                let mut dx = vec![0.0; x.len()];
                if let Some(s) = seed {
                    if s.robot == *r && s.component < x.len() {
                        dx[s.component] = 1.0;
                    }
                }
                (Value::Vector(x.to_vec()), Value::Vector(dx))
            }
            Expr::Component(r, k) => {
                let x = self.lookup(*r)?;
                let v = *x.get(*k).ok_or(EvalError::ComponentOutOfRange {
                    robot: *r,
                    component: *k,
                    dim: x.len(),
                })?;
                let d = match seed {
                    Some(s) if s.robot == *r && s.component == *k => 1.0,
                    _ => 0.0,
                };
                (Value::Scalar(v), Value::Scalar(d))
            }
            Expr::Neg(a) => {
                let (v, d) = self.dual(a, seed)?;
                (v.map(|x| -x), d.map(|x| -x))
            }
            Expr::Binary(op, a, b) => {
                let (va, da) = self.dual(a, seed)?;
                let (vb, db) = self.dual(b, seed)?;
                match op {
                    BinOp::Add => (zip(&va, &vb, "sum", |x, y| x + y)?, zip(&da, &db, "sum", |x, y| x + y)?),
                    BinOp::Sub => (
                        zip(&va, &vb, "difference", |x, y| x - y)?,
                        zip(&da, &db, "difference", |x, y| x - y)?,
                    ),
                    BinOp::Mul => {
                        if va.as_scalar().is_none() && vb.as_scalar().is_none() {
                            return Err(EvalError::Shape("product of two vectors".into()));
                        }
                        let v = zip(&va, &vb, "product", |x, y| x * y)?;
                        let l = zip(&da, &vb, "product", |x, y| x * y)?;
                        let r = zip(&va, &db, "product", |x, y| x * y)?;
                        (v, zip(&l, &r, "product", |x, y| x + y)?)
                    }
                    BinOp::Div => {
                        let y = scalar_of(&vb, "division")?;
                        let dy = scalar_of(&db, "division")?;
                        if y == 0.0 {
                            return Err(EvalError::NonFinite("division by zero".into()));
                        }
                        let v = va.map(|x| x / y);
                        let d = zip(&da, &va, "quotient", |dx, x| (dx * y - x * dy) / (y * y))?;
                        (v, d)
                    }
                }
            }
            Expr::Call(func, a) => {
                let (v, d) = self.dual(a, seed)?;
                match func {
                    Func::Norm => match (&v, &d) {
                        (Value::Vector(x), Value::Vector(dx)) if x.len() != 1 => {
                            let n = x.iter().map(|p| p * p).sum::<f64>().sqrt();
                            let dn = if n == 0.0 {
                                0.0
                            } else {
                                x.iter().zip(dx).map(|(p, q)| p * q).sum::<f64>() / n
                            };
                            (Value::Scalar(n), Value::Scalar(dn))
                        }
                        _ => {
                            let x = scalar_of(&v, "norm")?;
                            let dx = scalar_of(&d, "norm")?;
                            (Value::Scalar(x.abs()), Value::Scalar(sign(x) * dx))
                        }
                    },
                    Func::Abs => {
                        let x = scalar_of(&v, "abs")?;
                        let dx = scalar_of(&d, "abs")?;
                        (Value::Scalar(x.abs()), Value::Scalar(sign(x) * dx))
                    }
                    Func::Exp => {
                        let x = scalar_of(&v, "exp")?;
                        let dx = scalar_of(&d, "exp")?;
                        (Value::Scalar(x.exp()), Value::Scalar(x.exp() * dx))
                    }
                    Func::Sin => {
                        let x = scalar_of(&v, "sin")?;
                        let dx = scalar_of(&d, "sin")?;
                        (Value::Scalar(x.sin()), Value::Scalar(x.cos() * dx))
                    }
                    Func::Cos => {
                        let x = scalar_of(&v, "cos")?;
                        let dx = scalar_of(&d, "cos")?;
                        (Value::Scalar(x.cos()), Value::Scalar(-x.sin() * dx))
                    }
                    Func::Sqrt => {
                        let x = scalar_of(&v, "sqrt")?;
                        let dx = scalar_of(&d, "sqrt")?;
                        if x < 0.0 {
                            return Err(EvalError::NonFinite(format!("sqrt of negative value {x}")));
                        }
                        let s = x.sqrt();
                        let ds = if s == 0.0 { 0.0 } else { dx / (2.0 * s) };
                        (Value::Scalar(s), Value::Scalar(ds))
                    }
                }
            }
        };
        if !out.0.is_finite() {
            return Err(EvalError::NonFinite(e.to_string()));
        }
        Ok(out)
    }
}

impl Expr {
    pub fn neg(e: Expr) -> Expr {
        match e {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    /// Evaluate to a value of either shape.
    pub fn eval_value<S: StateLookup + ?Sized>(&self, states: &S, t: f64) -> Result<Value, EvalError> {
        Evaluator { states, t }.value(self)
    }

    /// Evaluate an expression that must be scalar.
    pub fn eval<S: StateLookup + ?Sized>(&self, states: &S, t: f64) -> Result<f64, EvalError> {
        scalar_of(&self.eval_value(states, t)?, "predicate")
    }

    /// Value and gradient with respect to the state of `robot` (forward mode,
    /// one pass per component).
    pub fn eval_grad<S: StateLookup + ?Sized>(&self, states: &S, t: f64, robot: RobotId) -> Result<(f64, Vec<f64>), EvalError> {
        let dim = states.state(robot).ok_or(EvalError::MissingState(robot))?.len();
        let ev = Evaluator { states, t };
        let mut value = None;
        let mut grad = Vec::with_capacity(dim);
        for component in 0..dim {
            let (v, d) = ev.dual(self, Some(Seed { robot, component }))?;
            value.get_or_insert(scalar_of(&v, "predicate")?);
            let g = scalar_of(&d, "predicate")?;
            if !g.is_finite() {
                return Err(EvalError::NonFinite(format!("gradient of {self}")));
            }
            grad.push(g);
        }
        let value = match value {
            Some(v) => v,
            None => self.eval(states, t)?,
        };
        Ok((value, grad))
    }

    /// Robots whose state appears in the expression, sorted and deduplicated.
    pub fn robots(&self) -> Vec<RobotId> {
        let mut out = Vec::new();
        self.visit(&mut |e| match e {
            Expr::State(r) | Expr::Component(r, _) => out.push(*r),
            _ => {}
        });
        out.sort();
        out.dedup();
        out
    }

    /// Largest component index referenced per robot (for dimension checks).
    pub fn component_uses(&self) -> Vec<(RobotId, usize)> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Component(r, k) = e {
                out.push((*r, *k));
            }
        });
        out
    }

    pub fn mentions_time(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Time));
        found
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Neg(a) | Expr::Call(_, a) => a.visit(f),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// Static shape check against robot dimensions; returns the result length
    /// (1 for scalars).
    pub fn check_shape(&self, dims: &BTreeMap<RobotId, usize>) -> Result<usize, EvalError> {
        let states: BTreeMap<RobotId, Vec<f64>> = dims.iter().map(|(r, d)| (*r, vec![0.5; *d])).collect();
        // Probe with a benign state; only shape errors matter here.
        match self.eval_value(&states, 0.5) {
            Ok(v) => Ok(v.len()),
            Err(EvalError::NonFinite(_)) => Ok(1),
            Err(e) => Err(e),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            _ => 4,
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if e.precedence() < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Time => write!(f, "t"),
            Expr::State(r) => write!(f, "{r}"),
            Expr::Component(r, k) => write!(f, "{r}[{k}]"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                write_operand(f, a, 4)
            }
            Expr::Binary(op, a, b) => {
                let (sym, p) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                };
                write_operand(f, a, p)?;
                write!(f, " {sym} ")?;
                write_operand(f, b, p + 1)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::State(RobotId(i))
    }

    #[test]
    fn separation_value_and_gradient() {
        // 5 - norm(x1 - x2)
        let h = Expr::binary(
            BinOp::Sub,
            Expr::Const(5.0),
            Expr::call(Func::Norm, Expr::binary(BinOp::Sub, x(1), x(2))),
        );
        let s = [(RobotId(1), &[0.0, 0.0][..]), (RobotId(2), &[10.0, 0.0][..])];
        assert_eq!(h.eval(&s, 0.0).unwrap(), -5.0);
        let s = [(RobotId(1), &[3.0, 0.0][..]), (RobotId(2), &[0.0, 0.0][..])];
        let (v, g) = h.eval_grad(&s, 0.0, RobotId(1)).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(g, vec![-1.0, 0.0]);
    }

    #[test]
    fn norm_gradient_is_zero_at_origin() {
        let h = Expr::call(Func::Norm, Expr::binary(BinOp::Sub, x(1), x(2)));
        let s = [(RobotId(1), &[1.0, 1.0][..]), (RobotId(2), &[1.0, 1.0][..])];
        assert_eq!(h.eval_grad(&s, 0.0, RobotId(1)).unwrap(), (0.0, vec![0.0, 0.0]));
    }

    #[test]
    fn scalar_vector_coercion() {
        let s = [(RobotId(3), &[50.0][..])];
        let h = Expr::binary(
            BinOp::Sub,
            Expr::call(
                Func::Norm,
                Expr::binary(
                    BinOp::Sub,
                    x(3),
                    Expr::binary(
                        BinOp::Mul,
                        Expr::Const(50.0),
                        Expr::call(Func::Exp, Expr::binary(BinOp::Mul, Expr::Const(-0.1), Expr::Time)),
                    ),
                ),
            ),
            Expr::Const(0.05),
        );
        assert!((h.eval(&s, 0.0).unwrap() + 0.05).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let s = [(RobotId(1), &[1.0, 2.0][..])];
        assert_eq!(x(2).eval(&s, 0.0), Err(EvalError::MissingState(RobotId(2))));
        assert!(matches!(x(1).eval(&s, 0.0), Err(EvalError::Shape(_))));
        let d = Expr::binary(BinOp::Div, Expr::Const(1.0), Expr::Const(0.0));
        assert!(matches!(d.eval(&s, 0.0), Err(EvalError::NonFinite(_))));
        let q = Expr::call(Func::Sqrt, Expr::Const(-1.0));
        assert!(matches!(q.eval(&s, 0.0), Err(EvalError::NonFinite(_))));
    }

    #[test]
    fn display_parenthesizes_minimally() {
        let e = Expr::binary(
            BinOp::Sub,
            x(1),
            Expr::binary(BinOp::Sub, Expr::Component(RobotId(2), 1), Expr::Const(-3.0)),
        );
        assert_eq!(e.to_string(), "x1 - (x2[1] - -3)");
        let e = Expr::binary(BinOp::Mul, Expr::binary(BinOp::Add, x(1), Expr::Time), Expr::neg(x(2)));
        assert_eq!(e.to_string(), "(x1 + t) * -x2");
    }
}
