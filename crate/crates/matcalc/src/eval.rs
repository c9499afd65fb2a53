//! Numeric evaluation, the central finite-difference oracle, and gradient
//! checking.
//!
//! All arithmetic is `f64`. The oracle uses central differences with a step
//! scaled per input component, `h_j = h · max(1, |v_j|)`, giving
//! second-order accuracy; halving `h` cuts the truncation error by about
//! four on smooth functions. Probes that land within `10·h_j` of a
//! `max0` kink are flagged and excluded from the check verdict — the
//! derivative does not exist there, it is only assigned by convention.

use std::collections::BTreeMap;
use std::fmt;

use crate::diff::{jacobian, DiffError, Jacobian};
use crate::expr::{Expr, ExprKind, Shape};

/// A runtime value: scalar or column vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Value {
    pub fn shape(&self) -> Shape {
        match self {
            Value::Scalar(_) => Shape::Scalar,
            Value::Vector(v) => Shape::Vector(v.len()),
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            Value::Vector(_) => None,
        }
    }

    /// Components in order; a scalar has one.
    pub fn components(&self) -> Vec<f64> {
        match self {
            Value::Scalar(v) => vec![*v],
            Value::Vector(v) => v.clone(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Scalar(v) => f.write_str(&format_sig12(*v)),
            Value::Vector(vs) => {
                f.write_str("[")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_str(&format_sig12(*v))?;
                }
                f.write_str("]")
            }
        }
    }
}

/// Bindings from variable names to values.
///
/// Looking up a scalar named `x_3` falls back to component 3 of a bound
/// vector `x`, matching the component variables that Jacobian entries are
/// written over.
#[derive(Debug, Clone, Default)]
pub struct Env {
    bindings: BTreeMap<String, Value>,
}

impl Env {
    pub fn new() -> Env {
        Env::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, value: Value) -> &mut Env {
        self.bindings.insert(name.into(), value);
        self
    }

    pub fn bind_scalar(&mut self, name: impl Into<String>, v: f64) -> &mut Env {
        self.bind(name, Value::Scalar(v))
    }

    pub fn bind_vector(&mut self, name: impl Into<String>, v: Vec<f64>) -> &mut Env {
        self.bind(name, Value::Vector(v))
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings.get(name)
    }

    fn component_fallback(&self, name: &str) -> Option<f64> {
        let (base, idx) = name.rsplit_once('_')?;
        let i: usize = idx.parse().ok()?;
        match self.bindings.get(base)? {
            Value::Vector(vs) if i >= 1 && i <= vs.len() => Some(vs[i - 1]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    UnboundVariable(String),
    ShapeMismatch {
        name: String,
        declared: Shape,
        bound: Shape,
    },
    DivisionByZero,
    DomainError(String),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::UnboundVariable(name) => write!(f, "unbound variable `{name}`"),
            EvalError::ShapeMismatch {
                name,
                declared,
                bound,
            } => write!(f, "variable `{name}` declared {declared} but bound {bound}"),
            EvalError::DivisionByZero => write!(f, "division by zero"),
            EvalError::DomainError(msg) => write!(f, "domain error: {msg}"),
        }
    }
}

impl std::error::Error for EvalError {}

fn zip_components(
    a: Value,
    b: Value,
    f: impl Fn(f64, f64) -> Result<f64, EvalError>,
) -> Result<Value, EvalError> {
    match (a, b) {
        (Value::Scalar(x), Value::Scalar(y)) => Ok(Value::Scalar(f(x, y)?)),
        (Value::Vector(xs), Value::Vector(ys)) => {
            debug_assert_eq!(xs.len(), ys.len());
            let mut out = Vec::with_capacity(xs.len());
            for (x, y) in xs.iter().zip(&ys) {
                out.push(f(*x, *y)?);
            }
            Ok(Value::Vector(out))
        }
        _ => unreachable!("operand shapes are checked at build time"),
    }
}

fn map_components(v: Value, f: impl Fn(f64) -> Result<f64, EvalError>) -> Result<Value, EvalError> {
    match v {
        Value::Scalar(x) => Ok(Value::Scalar(f(x)?)),
        Value::Vector(xs) => {
            let mut out = Vec::with_capacity(xs.len());
            for x in xs {
                out.push(f(x)?);
            }
            Ok(Value::Vector(out))
        }
    }
}

fn eval_inner(e: &Expr, env: &Env, kink_min: &mut f64) -> Result<Value, EvalError> {
    match e.kind() {
        ExprKind::Var(name, shape) => match env.get(name) {
            Some(v) => {
                if v.shape() != *shape {
                    return Err(EvalError::ShapeMismatch {
                        name: name.clone(),
                        declared: *shape,
                        bound: v.shape(),
                    });
                }
                Ok(v.clone())
            }
            None => match (shape, env.component_fallback(name)) {
                (Shape::Scalar, Some(v)) => Ok(Value::Scalar(v)),
                _ => Err(EvalError::UnboundVariable(name.clone())),
            },
        },
        ExprKind::Const(c) => Ok(Value::Scalar(*c)),
        ExprKind::ConstVec(vs) => Ok(Value::Vector(vs.clone())),
        ExprKind::Add(a, b) => zip_components(
            eval_inner(a, env, kink_min)?,
            eval_inner(b, env, kink_min)?,
            |x, y| Ok(x + y),
        ),
        ExprKind::Sub(a, b) => zip_components(
            eval_inner(a, env, kink_min)?,
            eval_inner(b, env, kink_min)?,
            |x, y| Ok(x - y),
        ),
        ExprKind::MulScalar(a, b) | ExprKind::Hadamard(a, b) => zip_components(
            eval_inner(a, env, kink_min)?,
            eval_inner(b, env, kink_min)?,
            |x, y| Ok(x * y),
        ),
        ExprKind::HadamardDiv(a, b) => zip_components(
            eval_inner(a, env, kink_min)?,
            eval_inner(b, env, kink_min)?,
            |x, y| {
                if y == 0.0 {
                    Err(EvalError::DivisionByZero)
                } else {
                    Ok(x / y)
                }
            },
        ),
        ExprKind::Pow(u, k) => {
            let base = eval_inner(u, env, kink_min)?
                .as_scalar()
                .expect("pow base is scalar");
            if base == 0.0 && *k < 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            let v = base.powf(*k);
            if v.is_nan() {
                return Err(EvalError::DomainError(format!(
                    "{base} cannot be raised to {k}"
                )));
            }
            Ok(Value::Scalar(v))
        }
        ExprKind::ScalarExpand(s, n) => {
            let v = eval_inner(s, env, kink_min)?
                .as_scalar()
                .expect("expand child is scalar");
            Ok(Value::Vector(vec![v; *n]))
        }
        ExprKind::Dot(a, b) => {
            let av = eval_inner(a, env, kink_min)?.components();
            let bv = eval_inner(b, env, kink_min)?.components();
            Ok(Value::Scalar(av.iter().zip(&bv).map(|(x, y)| x * y).sum()))
        }
        ExprKind::Sum(u) => {
            let v = eval_inner(u, env, kink_min)?.components();
            Ok(Value::Scalar(v.iter().sum()))
        }
        ExprKind::Max0(u) | ExprKind::Step(u) => {
            let arg = eval_inner(u, env, kink_min)?;
            for z in arg.components() {
                *kink_min = kink_min.min(z.abs());
            }
            let step = matches!(e.kind(), ExprKind::Step(_));
            map_components(arg, |z| {
                Ok(if step {
                    if z > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    z.max(0.0)
                })
            })
        }
        ExprKind::Sin(u) => map_components(eval_inner(u, env, kink_min)?, |x| Ok(x.sin())),
        ExprKind::Cos(u) => map_components(eval_inner(u, env, kink_min)?, |x| Ok(x.cos())),
        ExprKind::Ln(u) => map_components(eval_inner(u, env, kink_min)?, |x| {
            if x <= 0.0 {
                Err(EvalError::DomainError(format!("ln of non-positive {x}")))
            } else {
                Ok(x.ln())
            }
        }),
        ExprKind::Exp(u) => map_components(eval_inner(u, env, kink_min)?, |x| Ok(x.exp())),
        ExprKind::Neg(u) => map_components(eval_inner(u, env, kink_min)?, |x| Ok(-x)),
    }
}

/// Evaluate an expression under an environment binding every free variable.
pub fn eval(e: &Expr, env: &Env) -> Result<Value, EvalError> {
    let mut kink = f64::INFINITY;
    eval_inner(e, env, &mut kink)
}

/// Evaluate and also report the smallest |argument| seen at any `max0` or
/// `step` node — the distance to the nearest activation kink.
pub fn eval_tracking_kinks(e: &Expr, env: &Env) -> Result<(Value, f64), EvalError> {
    let mut kink = f64::INFINITY;
    let v = eval_inner(e, env, &mut kink)?;
    Ok((v, kink))
}

/// Evaluate every entry of a Jacobian, materializing diagonal zeros.
pub fn eval_jacobian(j: &Jacobian, env: &Env) -> Result<Vec<Vec<f64>>, EvalError> {
    (0..j.rows())
        .map(|i| {
            (0..j.cols())
                .map(|c| {
                    eval(&j.entry(i, c), env)
                        .map(|v| v.as_scalar().expect("jacobian entries are scalar"))
                })
                .collect()
        })
        .collect()
}

/// Default base step for the finite-difference oracle.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Central-difference estimate of an m×n Jacobian.
#[derive(Debug, Clone)]
pub struct FiniteDiff {
    /// grid[i][j] ≈ ∂(output i)/∂(input component j).
    pub grid: Vec<Vec<f64>>,
    /// Column j had a probe within 10·h_j of a `max0` kink.
    pub kink_cols: Vec<bool>,
}

/// Estimate the Jacobian of `e` with respect to variable `wrt` by central
/// differences: (e(v + h_j·e_j) − e(v − h_j·e_j)) / 2h_j with
/// h_j = h·max(1, |v_j|).
pub fn finite_diff(e: &Expr, wrt: &Expr, env: &Env, h: f64) -> Result<FiniteDiff, EvalError> {
    let (name, shape) = match wrt.kind() {
        ExprKind::Var(name, shape) => (name.clone(), *shape),
        _ => {
            return Err(EvalError::DomainError(
                "finite differences need a variable to perturb".into(),
            ))
        }
    };
    let bound = env
        .get(&name)
        .ok_or_else(|| EvalError::UnboundVariable(name.clone()))?
        .clone();
    if bound.shape() != shape {
        return Err(EvalError::ShapeMismatch {
            name,
            declared: shape,
            bound: bound.shape(),
        });
    }
    let base = bound.components();
    let n = base.len();
    let m = e.shape().len();
    let mut grid = vec![vec![0.0; n]; m];
    let mut kink_cols = vec![false; n];

    for j in 0..n {
        let hj = h * base[j].abs().max(1.0);
        let probe = |offset: f64| -> Result<(Vec<f64>, f64), EvalError> {
            let mut nudged = base.clone();
            nudged[j] += offset;
            let mut probe_env = env.clone();
            let value = match shape {
                Shape::Scalar => Value::Scalar(nudged[0]),
                Shape::Vector(_) => Value::Vector(nudged),
            };
            probe_env.bind(name.clone(), value);
            let (v, kink) = eval_tracking_kinks(e, &probe_env)?;
            Ok((v.components(), kink))
        };
        let (plus, kink_plus) = probe(hj)?;
        let (minus, kink_minus) = probe(-hj)?;
        kink_cols[j] = kink_plus.min(kink_minus) <= 10.0 * hj;
        for i in 0..m {
            grid[i][j] = (plus[i] - minus[i]) / (2.0 * hj);
        }
    }
    Ok(FiniteDiff { grid, kink_cols })
}

/// Tolerances for [`check`]: an entry passes when its absolute error is at
/// most `abs` or its relative error at most `rel`.
#[derive(Debug, Clone, Copy)]
pub struct CheckTolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        CheckTolerances {
            abs: 1e-7,
            rel: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckEntry {
    pub row: usize,
    pub col: usize,
    pub symbolic: f64,
    pub estimate: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    /// Entry excluded from the verdict because a probe straddled a kink.
    pub skipped: bool,
}

/// Comparison of a symbolic Jacobian against the finite-difference oracle.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub entries: Vec<CheckEntry>,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub tolerances: CheckTolerances,
    pub pass: bool,
}

impl CheckReport {
    /// Entries excluded from the verdict (probes near a kink).
    pub fn skipped(&self) -> Vec<&CheckEntry> {
        self.entries.iter().filter(|e| e.skipped).collect()
    }

    pub fn skipped_count(&self) -> usize {
        self.entries.iter().filter(|e| e.skipped).count()
    }

    /// Aligned text table plus a verdict line.
    pub fn render(&self) -> String {
        let mut rows: Vec<[String; 6]> = vec![[
            "entry".into(),
            "symbolic".into(),
            "estimate".into(),
            "abs err".into(),
            "rel err".into(),
            "status".into(),
        ]];
        for e in &self.entries {
            let status = if e.skipped {
                "skipped (near kink)".to_string()
            } else if e.abs_err <= self.tolerances.abs || e.rel_err <= self.tolerances.rel {
                "ok".to_string()
            } else {
                "FAIL".to_string()
            };
            rows.push([
                format!("({}, {})", e.row, e.col),
                format_sig12(e.symbolic),
                format_sig12(e.estimate),
                format!("{:.3e}", e.abs_err),
                format!("{:.3e}", e.rel_err),
                status,
            ]);
        }
        let mut widths = [0usize; 6];
        for row in &rows {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.chars().count());
            }
        }
        let mut out = String::new();
        for row in &rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push_str("  ");
                }
                out.push_str(cell);
                if i + 1 < row.len() {
                    for _ in cell.chars().count()..widths[i] {
                        out.push(' ');
                    }
                }
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "max abs err {:.3e}  max rel err {:.3e}\n",
            self.max_abs_err, self.max_rel_err
        ));
        let skipped = self.skipped_count();
        let verdict = match (self.pass, skipped) {
            (true, 0) => "pass".to_string(),
            (true, k) => format!("pass ({k} entries skipped near kinks)"),
            (false, _) => "fail".to_string(),
        };
        out.push_str(&format!("verdict: {verdict}\n"));
        out
    }
}

/// Errors from [`check`]: a differentiation failure, a symbolic entry that
/// would not evaluate (with its index), or a failed oracle probe.
#[derive(Debug)]
pub enum CheckError {
    Diff(DiffError),
    Entry {
        row: usize,
        col: usize,
        source: EvalError,
    },
    Oracle(EvalError),
}

impl fmt::Display for CheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckError::Diff(e) => write!(f, "{e}"),
            CheckError::Entry { row, col, source } => {
                write!(f, "entry ({row}, {col}): {source}")
            }
            CheckError::Oracle(e) => write!(f, "finite-difference probe: {e}"),
        }
    }
}

impl std::error::Error for CheckError {}

impl From<DiffError> for CheckError {
    fn from(e: DiffError) -> Self {
        CheckError::Diff(e)
    }
}

/// Differentiate symbolically, estimate numerically, and compare. Entries
/// whose probes straddle a `max0` kink are reported but excluded from the
/// pass/fail verdict.
pub fn check(
    e: &Expr,
    wrt: &Expr,
    env: &Env,
    h: f64,
    tolerances: CheckTolerances,
) -> Result<CheckReport, CheckError> {
    let sym = jacobian(e, wrt)?;
    let oracle = finite_diff(e, wrt, env, h).map_err(CheckError::Oracle)?;
    let mut entries = Vec::with_capacity(sym.rows() * sym.cols());
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut pass = true;
    for i in 0..sym.rows() {
        for j in 0..sym.cols() {
            let symbolic = eval(&sym.entry(i, j), env)
                .map_err(|source| CheckError::Entry {
                    row: i,
                    col: j,
                    source,
                })?
                .as_scalar()
                .expect("jacobian entries are scalar");
            let estimate = oracle.grid[i][j];
            let abs_err = (symbolic - estimate).abs();
            let denom = symbolic.abs().max(estimate.abs());
            let rel_err = if denom == 0.0 { 0.0 } else { abs_err / denom };
            let skipped = oracle.kink_cols[j];
            if !skipped {
                max_abs = max_abs.max(abs_err);
                max_rel = max_rel.max(rel_err);
                if abs_err > tolerances.abs && rel_err > tolerances.rel {
                    pass = false;
                }
            }
            entries.push(CheckEntry {
                row: i,
                col: j,
                symbolic,
                estimate,
                abs_err,
                rel_err,
                skipped,
            });
        }
    }
    Ok(CheckReport {
        entries,
        max_abs_err: max_abs,
        max_rel_err: max_rel,
        tolerances,
        pass,
    })
}

/// Format with 12 significant digits, trimming trailing zeros.
pub fn format_sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("round-trip");
    format!("{rounded}")
}
