//! Closed-form real expressions with exact symbolic differentiation.
//!
//! A [`ScalarExpr`] is a small expression tree over coordinate variables built from
//! constants, sums, products, non-negative integer powers, `sin`, `cos` and `exp`.
//! Warping functions, Schrödinger potentials and metric components are all stored
//! this way so that every derivative the engine needs is exact.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub enum ScalarExpr {
    Const(f64),
    /// Coordinate variable by index; single-variable expressions use index 0.
    Var(usize),
    Add(Vec<ScalarExpr>),
    Mul(Vec<ScalarExpr>),
    Pow(Box<ScalarExpr>, u32),
    Sin(Box<ScalarExpr>),
    Cos(Box<ScalarExpr>),
    Exp(Box<ScalarExpr>),
}

impl Default for ScalarExpr {
    fn default() -> Self {
        ScalarExpr::Const(0.0)
    }
}

impl ScalarExpr {
    pub fn constant(c: f64) -> Self {
        ScalarExpr::Const(c)
    }

    pub fn zero() -> Self {
        ScalarExpr::Const(0.0)
    }

    pub fn one() -> Self {
        ScalarExpr::Const(1.0)
    }

    /// The single variable `x` (index 0).
    pub fn x() -> Self {
        ScalarExpr::Var(0)
    }

    pub fn var(index: usize) -> Self {
        ScalarExpr::Var(index)
    }

    pub fn sum<I: IntoIterator<Item = ScalarExpr>>(terms: I) -> Self {
        let mut flat = Vec::new();
        let mut constant = 0.0;
        for t in terms {
            match t {
                ScalarExpr::Const(c) => constant += c,
                ScalarExpr::Add(inner) => {
                    for u in inner {
                        match u {
                            ScalarExpr::Const(c) => constant += c,
                            other => flat.push(other),
                        }
                    }
                }
                other => flat.push(other),
            }
        }
        if constant != 0.0 {
            flat.push(ScalarExpr::Const(constant));
        }
        match flat.len() {
            0 => ScalarExpr::Const(0.0),
            1 => flat.pop().unwrap(),
            _ => ScalarExpr::Add(flat),
        }
    }

    pub fn product<I: IntoIterator<Item = ScalarExpr>>(factors: I) -> Self {
        let mut flat = Vec::new();
        let mut constant = 1.0;
        for f in factors {
            match f {
                ScalarExpr::Const(c) => constant *= c,
                ScalarExpr::Mul(inner) => {
                    for u in inner {
                        match u {
                            ScalarExpr::Const(c) => constant *= c,
                            other => flat.push(other),
                        }
                    }
                }
                other => flat.push(other),
            }
        }
        if constant == 0.0 {
            return ScalarExpr::Const(0.0);
        }
        if flat.is_empty() {
            return ScalarExpr::Const(constant);
        }
        if constant != 1.0 {
            flat.insert(0, ScalarExpr::Const(constant));
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            ScalarExpr::Mul(flat)
        }
    }

    pub fn powi(self, n: u32) -> Self {
        match (self, n) {
            (_, 0) => ScalarExpr::Const(1.0),
            (e, 1) => e,
            (ScalarExpr::Const(c), n) => ScalarExpr::Const(c.powi(n as i32)),
            (ScalarExpr::Pow(base, k), n) => ScalarExpr::Pow(base, k * n),
            (e, n) => ScalarExpr::Pow(Box::new(e), n),
        }
    }

    pub fn sin(self) -> Self {
        match self {
            ScalarExpr::Const(c) => ScalarExpr::Const(c.sin()),
            e => ScalarExpr::Sin(Box::new(e)),
        }
    }

    pub fn cos(self) -> Self {
        match self {
            ScalarExpr::Const(c) => ScalarExpr::Const(c.cos()),
            e => ScalarExpr::Cos(Box::new(e)),
        }
    }

    pub fn exp(self) -> Self {
        match self {
            ScalarExpr::Const(c) => ScalarExpr::Const(c.exp()),
            e => ScalarExpr::Exp(Box::new(e)),
        }
    }

    pub fn scale(self, c: f64) -> Self {
        ScalarExpr::product([ScalarExpr::Const(c), self])
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ScalarExpr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            ScalarExpr::Const(_) => None,
            ScalarExpr::Var(i) => Some(*i),
            ScalarExpr::Add(v) | ScalarExpr::Mul(v) => v.iter().filter_map(|e| e.max_var()).max(),
            ScalarExpr::Pow(e, _)
            | ScalarExpr::Sin(e)
            | ScalarExpr::Cos(e)
            | ScalarExpr::Exp(e) => e.max_var(),
        }
    }

    /// Partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> ScalarExpr {
        match self {
            ScalarExpr::Const(_) => ScalarExpr::zero(),
            ScalarExpr::Var(i) => {
                if *i == var {
                    ScalarExpr::one()
                } else {
                    ScalarExpr::zero()
                }
            }
            ScalarExpr::Add(terms) => ScalarExpr::sum(terms.iter().map(|t| t.derivative(var))),
            ScalarExpr::Mul(factors) => {
                let mut terms = Vec::with_capacity(factors.len());
                for (j, fj) in factors.iter().enumerate() {
                    let dj = fj.derivative(var);
                    if dj.as_constant() == Some(0.0) {
                        continue;
                    }
                    let rest = factors
                        .iter()
                        .enumerate()
                        .filter(|(l, _)| *l != j)
                        .map(|(_, f)| f.clone());
                    terms.push(ScalarExpr::product(std::iter::once(dj).chain(rest)));
                }
                ScalarExpr::sum(terms)
            }
            ScalarExpr::Pow(base, n) => {
                let db = base.derivative(var);
                if db.as_constant() == Some(0.0) {
                    return ScalarExpr::zero();
                }
                ScalarExpr::product([
                    ScalarExpr::Const(*n as f64),
                    (**base).clone().powi(n - 1),
                    db,
                ])
            }
            ScalarExpr::Sin(arg) => {
                let da = arg.derivative(var);
                ScalarExpr::product([(**arg).clone().cos(), da])
            }
            ScalarExpr::Cos(arg) => {
                let da = arg.derivative(var);
                ScalarExpr::product([ScalarExpr::Const(-1.0), (**arg).clone().sin(), da])
            }
            ScalarExpr::Exp(arg) => {
                let da = arg.derivative(var);
                ScalarExpr::product([self.clone(), da])
            }
        }
    }

    /// `order`-th derivative with respect to variable 0.
    pub fn nth_derivative(&self, order: usize) -> ScalarExpr {
        let mut e = self.clone();
        for _ in 0..order {
            e = e.derivative(0);
        }
        e
    }

    /// Replaces every `Var(i)` by `replacements[i]`.
    pub fn substitute(&self, replacements: &[ScalarExpr]) -> ScalarExpr {
        match self {
            ScalarExpr::Const(c) => ScalarExpr::Const(*c),
            ScalarExpr::Var(i) => replacements
                .get(*i)
                .cloned()
                .unwrap_or(ScalarExpr::Var(*i)),
            ScalarExpr::Add(v) => ScalarExpr::sum(v.iter().map(|e| e.substitute(replacements))),
            ScalarExpr::Mul(v) => {
                ScalarExpr::product(v.iter().map(|e| e.substitute(replacements)))
            }
            ScalarExpr::Pow(e, n) => e.substitute(replacements).powi(*n),
            ScalarExpr::Sin(e) => e.substitute(replacements).sin(),
            ScalarExpr::Cos(e) => e.substitute(replacements).cos(),
            ScalarExpr::Exp(e) => e.substitute(replacements).exp(),
        }
    }

    /// Evaluates at the coordinate point `x`. Missing coordinates read as zero.
    pub fn eval<T: Real>(&self, x: &[T]) -> T {
        match self {
            ScalarExpr::Const(c) => T::lit(*c),
            ScalarExpr::Var(i) => x.get(*i).copied().unwrap_or_else(T::zero),
            ScalarExpr::Add(v) => v.iter().fold(T::zero(), |acc, e| acc + e.eval(x)),
            ScalarExpr::Mul(v) => v.iter().fold(T::one(), |acc, e| acc * e.eval(x)),
            ScalarExpr::Pow(e, n) => e.eval(x).powi(*n as i32),
            ScalarExpr::Sin(e) => e.eval(x).sin(),
            ScalarExpr::Cos(e) => e.eval(x).cos(),
            ScalarExpr::Exp(e) => e.eval(x).exp(),
        }
    }

    /// Evaluates a single-variable expression.
    #[inline]
    pub fn eval1<T: Real>(&self, x: T) -> T {
        self.eval(std::slice::from_ref(&x))
    }

    fn node_count(&self) -> usize {
        match self {
            ScalarExpr::Const(_) | ScalarExpr::Var(_) => 1,
            ScalarExpr::Add(v) | ScalarExpr::Mul(v) => {
                1 + v.iter().map(|e| e.node_count()).sum::<usize>()
            }
            ScalarExpr::Pow(e, _)
            | ScalarExpr::Sin(e)
            | ScalarExpr::Cos(e)
            | ScalarExpr::Exp(e) => 1 + e.node_count(),
        }
    }

    /// Number of tree nodes; a rough cost measure.
    pub fn size(&self) -> usize {
        self.node_count()
    }
}

impl Add for ScalarExpr {
    type Output = ScalarExpr;
    fn add(self, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::sum([self, rhs])
    }
}

impl Sub for ScalarExpr {
    type Output = ScalarExpr;
    fn sub(self, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::sum([self, rhs.scale(-1.0)])
    }
}

impl Mul for ScalarExpr {
    type Output = ScalarExpr;
    fn mul(self, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::product([self, rhs])
    }
}

impl Neg for ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        self.scale(-1.0)
    }
}

impl From<f64> for ScalarExpr {
    fn from(c: f64) -> Self {
        ScalarExpr::Const(c)
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarExpr::Const(c) => write!(f, "{c}"),
            ScalarExpr::Var(0) => write!(f, "x"),
            ScalarExpr::Var(i) => write!(f, "x{i}"),
            ScalarExpr::Add(v) => {
                write!(f, "(")?;
                for (k, e) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
            ScalarExpr::Mul(v) => {
                for (k, e) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, "*")?;
                    }
                    write!(f, "{e}")?;
                }
                Ok(())
            }
            ScalarExpr::Pow(e, n) => write!(f, "({e})^{n}"),
            ScalarExpr::Sin(e) => write!(f, "sin({e})"),
            ScalarExpr::Cos(e) => write!(f, "cos({e})"),
            ScalarExpr::Exp(e) => write!(f, "exp({e})"),
        }
    }
}

/// Parses a real literal: a decimal number, or a multiple/fraction of `pi`
/// such as `"pi"`, `"-2*pi"`, `"pi/2"`, `"0.5*pi"`.
pub fn parse_real_literal(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim().parse::<f64>().ok()?),
        None => (s, 1.0),
    };
    let (sign, body) = match num.strip_prefix('-') {
        Some(rest) => (-1.0, rest.trim()),
        None => (1.0, num),
    };
    let coeff = if body == "pi" {
        1.0
    } else if let Some(c) = body.strip_suffix("*pi") {
        c.trim().parse::<f64>().ok()?
    } else if let Some(c) = body.strip_suffix("pi") {
        c.trim().parse::<f64>().ok()?
    } else {
        return None;
    };
    Some(sign * coeff * std::f64::consts::PI / den)
}

#[derive(Deserialize)]
#[serde(untagged)]
pub(crate) enum RealRepr {
    Number(f64),
    Text(String),
}

impl RealRepr {
    pub(crate) fn resolve<E: serde::de::Error>(self) -> Result<f64, E> {
        match self {
            RealRepr::Number(v) => Ok(v),
            RealRepr::Text(s) => {
                parse_real_literal(&s).ok_or_else(|| E::custom(format!("bad real literal {s:?}")))
            }
        }
    }
}

/// Serde helper accepting either a JSON number or a `pi`-literal string.
pub fn deserialize_real<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    RealRepr::deserialize(d)?.resolve()
}

pub(crate) fn deserialize_reals<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    let raw = Vec::<RealRepr>::deserialize(d)?;
    raw.into_iter().map(|r| r.resolve()).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExprRepr {
    Const {
        #[serde(rename = "const", deserialize_with = "deserialize_real")]
        value: f64,
    },
    Var {
        var: String,
    },
    Op {
        op: String,
        args: Vec<ScalarExpr>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u32>,
    },
}

fn var_index(name: &str) -> Option<usize> {
    match name {
        "x" => Some(0),
        _ => name.strip_prefix('x')?.parse().ok(),
    }
}

impl Serialize for ScalarExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let op = |name: &str, args: Vec<ScalarExpr>, n: Option<u32>| ExprRepr::Op {
            op: name.to_string(),
            args,
            n,
        };
        let repr = match self {
            ScalarExpr::Const(c) => ExprRepr::Const { value: *c },
            ScalarExpr::Var(0) => ExprRepr::Var { var: "x".into() },
            ScalarExpr::Var(i) => ExprRepr::Var { var: format!("x{i}") },
            ScalarExpr::Add(v) => op("add", v.clone(), None),
            ScalarExpr::Mul(v) => op("mul", v.clone(), None),
            ScalarExpr::Pow(e, n) => op("pow", vec![(**e).clone()], Some(*n)),
            ScalarExpr::Sin(e) => op("sin", vec![(**e).clone()], None),
            ScalarExpr::Cos(e) => op("cos", vec![(**e).clone()], None),
            ScalarExpr::Exp(e) => op("exp", vec![(**e).clone()], None),
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScalarExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        match ExprRepr::deserialize(d)? {
            ExprRepr::Const { value } => Ok(ScalarExpr::Const(value)),
            ExprRepr::Var { var } => var_index(&var)
                .map(ScalarExpr::Var)
                .ok_or_else(|| D::Error::custom(format!("unknown variable {var:?}"))),
            ExprRepr::Op { op, args, n } => {
                let unary = |args: Vec<ScalarExpr>| -> Result<ScalarExpr, D::Error> {
                    let mut args = args;
                    if args.len() != 1 {
                        return Err(D::Error::custom(format!(
                            "operator {op:?} takes exactly one argument"
                        )));
                    }
                    Ok(args.pop().unwrap())
                };
                match op.as_str() {
                    "add" => Ok(ScalarExpr::sum(args)),
                    "mul" => Ok(ScalarExpr::product(args)),
                    "sub" => {
                        if args.len() != 2 {
                            return Err(D::Error::custom("sub takes two arguments"));
                        }
                        let mut it = args.into_iter();
                        Ok(it.next().unwrap() - it.next().unwrap())
                    }
                    "neg" => Ok(-unary(args)?),
                    "pow" => {
                        let n = n.ok_or_else(|| D::Error::custom("pow needs an integer \"n\""))?;
                        Ok(unary(args)?.powi(n))
                    }
                    "sin" => Ok(unary(args)?.sin()),
                    "cos" => Ok(unary(args)?.cos()),
                    "exp" => Ok(unary(args)?.exp()),
                    other => Err(D::Error::custom(format!("unknown operator {other:?}"))),
                }
            }
        }
    }
}

/// `c * x * (L - x)`, the bump used throughout the experiments.
pub fn bump(c: f64, length: f64) -> ScalarExpr {
    let x = ScalarExpr::x();
    ScalarExpr::product([
        ScalarExpr::Const(c),
        x.clone(),
        ScalarExpr::sum([ScalarExpr::Const(length), x.scale(-1.0)]),
    ])
}
