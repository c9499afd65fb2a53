//! Tape lowering and automatic differentiation.
//!
//! [`lower`] normalizes an expression into a sequence of intermediate
//! variables `u1, u2, …` in innermost-first order, one single operation per
//! entry — the register form a compiler would produce. Operands refer to
//! earlier entries, leaf variables, or constants; leaves used several times
//! keep one name, so multi-path dependence is visible in the tape (and in
//! its Graphviz rendering).
//!
//! Three consumers share the tape:
//!
//! - [`forward_mode`]: one value-and-tangent sweep in tape order per seeded
//!   input component;
//! - [`reverse_mode`]: a value sweep plus one adjoint sweep against tape
//!   order, yielding the partials for every leaf component at once, with
//!   adjoints accumulating additively across fan-out;
//! - [`symbolic_backsub`]: the same propagation done symbolically, with
//!   intermediate variables substituted back, recovering the closed-form
//!   derivative.
//!
//! Vector-shaped entries stay whole: their local partials are applied as
//! element-wise (diagonal) or reduction rules rather than exploding the
//! vector into scalar entries.

use std::collections::BTreeMap;
use std::fmt;

use crate::canon::canonical;
use crate::eval::{Env, EvalError, Value};
use crate::expr::{simplify, Expr, ExprKind, Shape};
use crate::parse::pretty_print;

/// Reference to an input of a tape entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    /// An earlier entry (0-based; printed 1-based as `u1…`).
    Entry(usize),
    /// A named leaf variable.
    Leaf(String),
    ConstScalar(f64),
    ConstVec(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TapeOp {
    /// Bare leaf or constant lowered on its own (`u1 = x`).
    Alias(Operand),
    Add(Operand, Operand),
    Sub(Operand, Operand),
    MulScalar(Operand, Operand),
    Hadamard(Operand, Operand),
    HadamardDiv(Operand, Operand),
    Dot(Operand, Operand),
    Pow(Operand, f64),
    ScalarExpand(Operand, usize),
    Sum(Operand),
    Max0(Operand),
    Step(Operand),
    Sin(Operand),
    Cos(Operand),
    Ln(Operand),
    Exp(Operand),
    Neg(Operand),
}

impl TapeOp {
    fn operands(&self) -> Vec<&Operand> {
        match self {
            TapeOp::Alias(a)
            | TapeOp::Pow(a, _)
            | TapeOp::ScalarExpand(a, _)
            | TapeOp::Sum(a)
            | TapeOp::Max0(a)
            | TapeOp::Step(a)
            | TapeOp::Sin(a)
            | TapeOp::Cos(a)
            | TapeOp::Ln(a)
            | TapeOp::Exp(a)
            | TapeOp::Neg(a) => vec![a],
            TapeOp::Add(a, b)
            | TapeOp::Sub(a, b)
            | TapeOp::MulScalar(a, b)
            | TapeOp::Hadamard(a, b)
            | TapeOp::HadamardDiv(a, b)
            | TapeOp::Dot(a, b) => vec![a, b],
        }
    }
}

#[derive(Debug, Clone)]
pub struct TapeEntry {
    pub op: TapeOp,
    pub shape: Shape,
}

/// Ordered single-operation bindings; the last entry is the result.
#[derive(Debug, Clone)]
pub struct Tape {
    entries: Vec<TapeEntry>,
    leaves: BTreeMap<String, Shape>,
}

#[derive(Debug)]
pub enum TapeError {
    Eval(EvalError),
    /// Seeded variable does not occur in the tape.
    UnknownSeed(String),
    /// Seeded component index is out of range for the variable.
    SeedComponent {
        name: String,
        index: usize,
        len: usize,
    },
    /// Reverse mode and back-substitution need a scalar result.
    NonScalarResult,
    /// Back-substitution differentiates with respect to a scalar variable.
    NotScalarVar(String),
}

impl fmt::Display for TapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TapeError::Eval(e) => write!(f, "{e}"),
            TapeError::UnknownSeed(name) => write!(f, "variable `{name}` is not a tape leaf"),
            TapeError::SeedComponent { name, index, len } => {
                write!(
                    f,
                    "component {index} out of range for `{name}` (length {len})"
                )
            }
            TapeError::NonScalarResult => write!(f, "tape result is not a scalar"),
            TapeError::NotScalarVar(name) => {
                write!(f, "`{name}` is not a scalar variable")
            }
        }
    }
}

impl std::error::Error for TapeError {}

impl From<EvalError> for TapeError {
    fn from(e: EvalError) -> Self {
        TapeError::Eval(e)
    }
}

/// Lower an expression to a tape. The input is simplified first; rebuilding
/// the expression from the tape ([`Tape::reconstruct`]) returns exactly that
/// simplified tree. Repeated subtrees lower once per occurrence (no common
/// subexpression elimination), matching the worked-by-hand process.
pub fn lower(e: &Expr) -> Tape {
    fn go(e: &Expr, tape: &mut Tape) -> Operand {
        let shape = e.shape();
        let push = |op: TapeOp, tape: &mut Tape| -> Operand {
            tape.entries.push(TapeEntry { op, shape });
            Operand::Entry(tape.entries.len() - 1)
        };
        match e.kind() {
            ExprKind::Var(name, shape) => {
                tape.leaves.insert(name.clone(), *shape);
                Operand::Leaf(name.clone())
            }
            ExprKind::Const(c) => Operand::ConstScalar(*c),
            ExprKind::ConstVec(vs) => Operand::ConstVec(vs.clone()),
            ExprKind::Add(a, b) => {
                let (a, b) = (go(a, tape), go(b, tape));
                push(TapeOp::Add(a, b), tape)
            }
            ExprKind::Sub(a, b) => {
                let (a, b) = (go(a, tape), go(b, tape));
                push(TapeOp::Sub(a, b), tape)
            }
            ExprKind::MulScalar(a, b) => {
                let (a, b) = (go(a, tape), go(b, tape));
                push(TapeOp::MulScalar(a, b), tape)
            }
            ExprKind::Hadamard(a, b) => {
                let (a, b) = (go(a, tape), go(b, tape));
                push(TapeOp::Hadamard(a, b), tape)
            }
            ExprKind::HadamardDiv(a, b) => {
                let (a, b) = (go(a, tape), go(b, tape));
                push(TapeOp::HadamardDiv(a, b), tape)
            }
            ExprKind::Dot(a, b) => {
                let (a, b) = (go(a, tape), go(b, tape));
                push(TapeOp::Dot(a, b), tape)
            }
            ExprKind::Pow(u, k) => {
                let u = go(u, tape);
                push(TapeOp::Pow(u, *k), tape)
            }
            ExprKind::ScalarExpand(u, n) => {
                let u = go(u, tape);
                push(TapeOp::ScalarExpand(u, *n), tape)
            }
            ExprKind::Sum(u) => {
                let u = go(u, tape);
                push(TapeOp::Sum(u), tape)
            }
            ExprKind::Max0(u) => {
                let u = go(u, tape);
                push(TapeOp::Max0(u), tape)
            }
            ExprKind::Step(u) => {
                let u = go(u, tape);
                push(TapeOp::Step(u), tape)
            }
            ExprKind::Sin(u) => {
                let u = go(u, tape);
                push(TapeOp::Sin(u), tape)
            }
            ExprKind::Cos(u) => {
                let u = go(u, tape);
                push(TapeOp::Cos(u), tape)
            }
            ExprKind::Ln(u) => {
                let u = go(u, tape);
                push(TapeOp::Ln(u), tape)
            }
            ExprKind::Exp(u) => {
                let u = go(u, tape);
                push(TapeOp::Exp(u), tape)
            }
            ExprKind::Neg(u) => {
                let u = go(u, tape);
                push(TapeOp::Neg(u), tape)
            }
        }
    }

    let simplified = simplify(e);
    let mut tape = Tape {
        entries: Vec::new(),
        leaves: BTreeMap::new(),
    };
    let root = go(&simplified, &mut tape);
    if tape.entries.is_empty() {
        let shape = simplified.shape();
        tape.entries.push(TapeEntry {
            op: TapeOp::Alias(root),
            shape,
        });
    }
    tape
}

fn entry_name(i: usize) -> String {
    format!("u{}", i + 1)
}

impl Tape {
    pub fn entries(&self) -> &[TapeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Leaf variables referenced by the tape, with shapes.
    pub fn leaves(&self) -> &BTreeMap<String, Shape> {
        &self.leaves
    }

    pub fn result_shape(&self) -> Shape {
        self.entries.last().expect("tape is never empty").shape
    }

    fn operand_expr(&self, op: &Operand, memo: &[Expr]) -> Expr {
        match op {
            Operand::Entry(i) => memo[*i].clone(),
            Operand::Leaf(name) => {
                Expr::var(name.clone(), self.leaves[name]).expect("leaf shape recorded")
            }
            Operand::ConstScalar(c) => Expr::constant(*c),
            Operand::ConstVec(vs) => Expr::const_vec(vs.clone()).expect("nonempty"),
        }
    }

    /// Rebuild the expression the tape was lowered from (the simplified
    /// input, structurally).
    pub fn reconstruct(&self) -> Expr {
        let mut memo: Vec<Expr> = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            let e = |op: &Operand| self.operand_expr(op, &memo);
            let built = match &entry.op {
                TapeOp::Alias(a) => e(a),
                TapeOp::Add(a, b) => Expr::add(e(a), e(b)).expect("lowered from valid expr"),
                TapeOp::Sub(a, b) => Expr::sub(e(a), e(b)).expect("lowered from valid expr"),
                TapeOp::MulScalar(a, b) => Expr::mul(e(a), e(b)).expect("lowered from valid expr"),
                TapeOp::Hadamard(a, b) => {
                    Expr::hadamard(e(a), e(b)).expect("lowered from valid expr")
                }
                TapeOp::HadamardDiv(a, b) => {
                    Expr::hadamard_div(e(a), e(b)).expect("lowered from valid expr")
                }
                TapeOp::Dot(a, b) => Expr::dot(e(a), e(b)).expect("lowered from valid expr"),
                TapeOp::Pow(a, k) => Expr::pow(e(a), *k).expect("lowered from valid expr"),
                TapeOp::ScalarExpand(a, n) => {
                    Expr::scalar_expand(e(a), *n).expect("lowered from valid expr")
                }
                TapeOp::Sum(a) => Expr::sum(e(a)).expect("lowered from valid expr"),
                TapeOp::Max0(a) => Expr::max0(e(a)),
                TapeOp::Step(a) => Expr::step(e(a)),
                TapeOp::Sin(a) => Expr::sin(e(a)),
                TapeOp::Cos(a) => Expr::cos(e(a)),
                TapeOp::Ln(a) => Expr::ln(e(a)),
                TapeOp::Exp(a) => Expr::exp(e(a)),
                TapeOp::Neg(a) => Expr::neg(e(a)),
            };
            memo.push(built);
        }
        memo.pop().expect("tape is never empty")
    }

    fn operand_display(&self, op: &Operand) -> String {
        match op {
            Operand::Entry(i) => entry_name(*i),
            Operand::Leaf(name) => name.clone(),
            Operand::ConstScalar(c) => format!("{c}"),
            Operand::ConstVec(vs) => format!(
                "[{}]",
                vs.iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        }
    }

    /// Right-hand side of an entry for display, e.g. `sin(u1)` or `x + u1`.
    pub fn rhs_text(&self, i: usize) -> String {
        let d = |op: &Operand| self.operand_display(op);
        match &self.entries[i].op {
            TapeOp::Alias(a) => d(a),
            TapeOp::Add(a, b) => format!("{} + {}", d(a), d(b)),
            TapeOp::Sub(a, b) => format!("{} - {}", d(a), d(b)),
            TapeOp::MulScalar(a, b) => format!("{} * {}", d(a), d(b)),
            TapeOp::Hadamard(a, b) => format!("{} (*) {}", d(a), d(b)),
            TapeOp::HadamardDiv(a, b) => format!("{} (/) {}", d(a), d(b)),
            TapeOp::Dot(a, b) => format!("dot({}, {})", d(a), d(b)),
            TapeOp::Pow(a, k) => format!("{}^{}", d(a), k),
            TapeOp::ScalarExpand(a, n) => format!("expand({}, {})", d(a), n),
            TapeOp::Sum(a) => format!("sum({})", d(a)),
            TapeOp::Max0(a) => format!("max0({})", d(a)),
            TapeOp::Step(a) => format!("step({})", d(a)),
            TapeOp::Sin(a) => format!("sin({})", d(a)),
            TapeOp::Cos(a) => format!("cos({})", d(a)),
            TapeOp::Ln(a) => format!("ln({})", d(a)),
            TapeOp::Exp(a) => format!("exp({})", d(a)),
            TapeOp::Neg(a) => format!("-{}", d(a)),
        }
    }

    /// Local partial of entry `i` with respect to its `which`-th operand,
    /// rendered for display. Scalar entries show the derivative expression
    /// over operand names; vector entries show the structured form (`I`,
    /// `diag(…)`, `1^T`, transposes).
    fn local_partial_text(&self, i: usize, which: usize) -> String {
        let entry = &self.entries[i];
        let ops = entry.op.operands();
        let name = |op: &Operand| self.operand_display(op);
        let placeholder = |op: &Operand| -> Expr {
            let shape = match op {
                Operand::Entry(k) => self.entries[*k].shape,
                Operand::Leaf(n) => self.leaves[n],
                Operand::ConstScalar(_) => Shape::Scalar,
                Operand::ConstVec(vs) => Shape::Vector(vs.len()),
            };
            Expr::var(name(op), shape).expect("display placeholder")
        };
        let show = |e: Expr| pretty_print(&canonical(&e));
        let is_vector = entry.shape.is_vector()
            || ops
                .get(which)
                .map(|op| placeholder(op).shape().is_vector())
                .unwrap_or(false);
        if is_vector {
            return match (&entry.op, which) {
                (TapeOp::Add(..), _) => "I".into(),
                (TapeOp::Sub(..), 0) => "I".into(),
                (TapeOp::Sub(..), 1) => "-I".into(),
                (TapeOp::Hadamard(_, b), 0) => format!("diag({})", name(b)),
                (TapeOp::Hadamard(a, _), 1) => format!("diag({})", name(a)),
                (TapeOp::HadamardDiv(_, b), 0) => format!("diag(1/{}_i)", name(b)),
                (TapeOp::HadamardDiv(a, b), 1) => {
                    format!("diag(-{}_i/{}_i^2)", name(a), name(b))
                }
                (TapeOp::Dot(_, b), 0) => format!("{}^T", name(b)),
                (TapeOp::Dot(a, _), 1) => format!("{}^T", name(a)),
                (TapeOp::Sum(_), _) => "1^T".into(),
                (TapeOp::ScalarExpand(..), _) => "1".into(),
                (TapeOp::Max0(a), _) => format!("diag(step({}))", name(a)),
                (TapeOp::Step(_), _) => "0".into(),
                (TapeOp::Sin(a), _) => format!("diag(cos({}))", name(a)),
                (TapeOp::Cos(a), _) => format!("diag(-sin({}))", name(a)),
                (TapeOp::Ln(a), _) => format!("diag(1/{}_i)", name(a)),
                (TapeOp::Exp(a), _) => format!("diag(exp({}))", name(a)),
                (TapeOp::Neg(_), _) => "-I".into(),
                (TapeOp::Alias(_), _) => "I".into(),
                _ => unreachable!("vector entry ops covered"),
            };
        }
        let scalar_partial = match (&entry.op, which) {
            (TapeOp::Alias(_), _) => Expr::constant(1.0),
            (TapeOp::Add(..), _) => Expr::constant(1.0),
            (TapeOp::Sub(..), 0) => Expr::constant(1.0),
            (TapeOp::Sub(..), 1) => Expr::constant(-1.0),
            (TapeOp::MulScalar(_, b), 0) => placeholder(b),
            (TapeOp::MulScalar(a, _), 1) => placeholder(a),
            (TapeOp::Pow(a, k), _) => Expr::mul(
                Expr::constant(*k),
                Expr::pow(placeholder(a), k - 1.0).expect("scalar"),
            )
            .expect("scalar"),
            (TapeOp::Sin(a), _) => Expr::cos(placeholder(a)),
            (TapeOp::Cos(a), _) => Expr::neg(Expr::sin(placeholder(a))),
            (TapeOp::Ln(a), _) => Expr::pow(placeholder(a), -1.0).expect("scalar"),
            (TapeOp::Exp(a), _) => Expr::exp(placeholder(a)),
            (TapeOp::Max0(a), _) => Expr::step(placeholder(a)),
            (TapeOp::Step(_), _) => Expr::constant(0.0),
            (TapeOp::Neg(_), _) => Expr::constant(-1.0),
            (TapeOp::Dot(..), _) | (TapeOp::Sum(_), _) => {
                unreachable!("scalar-result reductions have vector operands")
            }
            _ => unreachable!("operand index checked by caller"),
        };
        show(scalar_partial)
    }

    /// One line per entry: the binding and the local partial for each
    /// non-constant operand, e.g. `u3 = u2^2   ∂u3/∂u2 = 2 * u2`.
    pub fn render_lines(&self) -> Vec<String> {
        (0..self.entries.len())
            .map(|i| {
                let mut line = format!("{} = {}", entry_name(i), self.rhs_text(i));
                for (which, op) in self.entries[i].op.operands().iter().enumerate() {
                    if matches!(op, Operand::ConstScalar(_) | Operand::ConstVec(_)) {
                        continue;
                    }
                    line.push_str(&format!(
                        "   ∂{}/∂{} = {}",
                        entry_name(i),
                        self.operand_display(op),
                        self.local_partial_text(i, which)
                    ));
                }
                line
            })
            .collect()
    }

    /// Graphviz rendering of the dataflow: one box per entry, one ellipse
    /// per leaf variable, edges from operand to user.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph tape {\n");
        for name in self.leaves.keys() {
            out.push_str(&format!("  \"{name}\" [shape=ellipse];\n"));
        }
        let mut const_id = 0usize;
        for (i, entry) in self.entries.iter().enumerate() {
            out.push_str(&format!(
                "  \"{}\" [shape=box, label=\"{} = {}\"];\n",
                entry_name(i),
                entry_name(i),
                self.rhs_text(i)
            ));
            for op in entry.op.operands() {
                let from = match op {
                    Operand::Entry(k) => entry_name(*k),
                    Operand::Leaf(name) => name.clone(),
                    Operand::ConstScalar(_) | Operand::ConstVec(_) => {
                        let id = format!("c{const_id}");
                        const_id += 1;
                        out.push_str(&format!(
                            "  \"{id}\" [shape=plaintext, label=\"{}\"];\n",
                            self.operand_display(op)
                        ));
                        id
                    }
                };
                out.push_str(&format!("  \"{from}\" -> \"{}\";\n", entry_name(i)));
            }
        }
        out.push_str("}\n");
        out
    }
}

fn zeros_like(shape: Shape) -> Value {
    match shape {
        Shape::Scalar => Value::Scalar(0.0),
        Shape::Vector(n) => Value::Vector(vec![0.0; n]),
    }
}

fn v_zip(a: &Value, b: &Value, f: impl Fn(f64, f64) -> f64) -> Value {
    match (a, b) {
        (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(f(*x, *y)),
        (Value::Vector(xs), Value::Vector(ys)) => {
            Value::Vector(xs.iter().zip(ys).map(|(x, y)| f(*x, *y)).collect())
        }
        _ => unreachable!("tape shapes agree"),
    }
}

fn v_map(a: &Value, f: impl Fn(f64) -> f64) -> Value {
    match a {
        Value::Scalar(x) => Value::Scalar(f(*x)),
        Value::Vector(xs) => Value::Vector(xs.iter().map(|x| f(*x)).collect()),
    }
}

fn v_add_assign(acc: &mut Value, delta: &Value) {
    *acc = v_zip(acc, delta, |a, b| a + b);
}

struct SweepContext<'t> {
    tape: &'t Tape,
    values: Vec<Value>,
    leaf_values: BTreeMap<String, Value>,
}

impl<'t> SweepContext<'t> {
    fn new(tape: &'t Tape, env: &Env) -> Result<Self, TapeError> {
        let mut leaf_values = BTreeMap::new();
        for (name, shape) in &tape.leaves {
            let v = env
                .get(name)
                .ok_or_else(|| EvalError::UnboundVariable(name.clone()))?;
            if v.shape() != *shape {
                return Err(EvalError::ShapeMismatch {
                    name: name.clone(),
                    declared: *shape,
                    bound: v.shape(),
                }
                .into());
            }
            leaf_values.insert(name.clone(), v.clone());
        }
        let mut ctx = SweepContext {
            tape,
            values: Vec::with_capacity(tape.len()),
            leaf_values,
        };
        ctx.run_values()?;
        Ok(ctx)
    }

    fn operand_value(&self, op: &Operand) -> Value {
        match op {
            Operand::Entry(i) => self.values[*i].clone(),
            Operand::Leaf(name) => self.leaf_values[name].clone(),
            Operand::ConstScalar(c) => Value::Scalar(*c),
            Operand::ConstVec(vs) => Value::Vector(vs.clone()),
        }
    }

    fn run_values(&mut self) -> Result<(), TapeError> {
        for entry in &self.tape.entries {
            let value = match &entry.op {
                TapeOp::Alias(a) => self.operand_value(a),
                TapeOp::Add(a, b) => {
                    v_zip(&self.operand_value(a), &self.operand_value(b), |x, y| x + y)
                }
                TapeOp::Sub(a, b) => {
                    v_zip(&self.operand_value(a), &self.operand_value(b), |x, y| x - y)
                }
                TapeOp::MulScalar(a, b) | TapeOp::Hadamard(a, b) => {
                    v_zip(&self.operand_value(a), &self.operand_value(b), |x, y| x * y)
                }
                TapeOp::HadamardDiv(a, b) => {
                    let bv = self.operand_value(b);
                    if bv.components().contains(&0.0) {
                        return Err(EvalError::DivisionByZero.into());
                    }
                    v_zip(&self.operand_value(a), &bv, |x, y| x / y)
                }
                TapeOp::Dot(a, b) => {
                    let av = self.operand_value(a).components();
                    let bv = self.operand_value(b).components();
                    Value::Scalar(av.iter().zip(&bv).map(|(x, y)| x * y).sum())
                }
                TapeOp::Pow(a, k) => {
                    let base = self.operand_value(a).as_scalar().expect("scalar base");
                    if base == 0.0 && *k < 0.0 {
                        return Err(EvalError::DivisionByZero.into());
                    }
                    let v = base.powf(*k);
                    if v.is_nan() {
                        return Err(EvalError::DomainError(format!(
                            "{base} cannot be raised to {k}"
                        ))
                        .into());
                    }
                    Value::Scalar(v)
                }
                TapeOp::ScalarExpand(a, n) => {
                    let v = self.operand_value(a).as_scalar().expect("scalar child");
                    Value::Vector(vec![v; *n])
                }
                TapeOp::Sum(a) => Value::Scalar(self.operand_value(a).components().iter().sum()),
                TapeOp::Max0(a) => v_map(&self.operand_value(a), |z| z.max(0.0)),
                TapeOp::Step(a) => {
                    v_map(&self.operand_value(a), |z| if z > 0.0 { 1.0 } else { 0.0 })
                }
                TapeOp::Sin(a) => v_map(&self.operand_value(a), f64::sin),
                TapeOp::Cos(a) => v_map(&self.operand_value(a), f64::cos),
                TapeOp::Ln(a) => {
                    let av = self.operand_value(a);
                    if av.components().iter().any(|x| *x <= 0.0) {
                        return Err(
                            EvalError::DomainError("ln of non-positive value".into()).into()
                        );
                    }
                    v_map(&av, f64::ln)
                }
                TapeOp::Exp(a) => v_map(&self.operand_value(a), f64::exp),
                TapeOp::Neg(a) => v_map(&self.operand_value(a), |x| -x),
            };
            self.values.push(value);
        }
        Ok(())
    }
}

/// Forward-mode sweep: evaluate the tape once, propagating the tangent of a
/// single seeded input component (`seed_component` is 0-based; pass 0 for a
/// scalar variable). Returns the result value and its tangent ∂result/∂seed.
pub fn forward_mode(
    tape: &Tape,
    env: &Env,
    seed_var: &str,
    seed_component: usize,
) -> Result<(Value, Value), TapeError> {
    let seed_shape = *tape
        .leaves
        .get(seed_var)
        .ok_or_else(|| TapeError::UnknownSeed(seed_var.to_string()))?;
    if seed_component >= seed_shape.len() {
        return Err(TapeError::SeedComponent {
            name: seed_var.to_string(),
            index: seed_component,
            len: seed_shape.len(),
        });
    }
    let ctx = SweepContext::new(tape, env)?;

    let leaf_tangent = |name: &str, shape: Shape| -> Value {
        if name != seed_var {
            return zeros_like(shape);
        }
        match shape {
            Shape::Scalar => Value::Scalar(1.0),
            Shape::Vector(n) => {
                let mut v = vec![0.0; n];
                v[seed_component] = 1.0;
                Value::Vector(v)
            }
        }
    };

    let mut tangents: Vec<Value> = Vec::with_capacity(tape.len());
    {
        let operand_tangent = |op: &Operand, tangents: &[Value]| -> Value {
            match op {
                Operand::Entry(i) => tangents[*i].clone(),
                Operand::Leaf(name) => leaf_tangent(name, tape.leaves[name]),
                Operand::ConstScalar(_) => Value::Scalar(0.0),
                Operand::ConstVec(vs) => Value::Vector(vec![0.0; vs.len()]),
            }
        };
        for entry in &tape.entries {
            let dt = |op: &Operand| operand_tangent(op, &tangents);
            let val = |op: &Operand| ctx.operand_value(op);
            let tangent = match &entry.op {
                TapeOp::Alias(a) => dt(a),
                TapeOp::Add(a, b) => v_zip(&dt(a), &dt(b), |x, y| x + y),
                TapeOp::Sub(a, b) => v_zip(&dt(a), &dt(b), |x, y| x - y),
                TapeOp::MulScalar(a, b) | TapeOp::Hadamard(a, b) => {
                    // a·db + da·b, the product rule per component
                    let t1 = v_zip(&val(a), &dt(b), |x, y| x * y);
                    let t2 = v_zip(&dt(a), &val(b), |x, y| x * y);
                    v_zip(&t1, &t2, |x, y| x + y)
                }
                TapeOp::HadamardDiv(a, b) => {
                    // (da·b − a·db) / b²
                    let bv = val(b);
                    let num = v_zip(
                        &v_zip(&dt(a), &bv, |x, y| x * y),
                        &v_zip(&val(a), &dt(b), |x, y| x * y),
                        |x, y| x - y,
                    );
                    v_zip(&num, &v_zip(&bv, &bv, |x, y| x * y), |x, y| x / y)
                }
                TapeOp::Dot(a, b) => {
                    let t1: f64 = dt(a)
                        .components()
                        .iter()
                        .zip(&val(b).components())
                        .map(|(x, y)| x * y)
                        .sum();
                    let t2: f64 = val(a)
                        .components()
                        .iter()
                        .zip(&dt(b).components())
                        .map(|(x, y)| x * y)
                        .sum();
                    Value::Scalar(t1 + t2)
                }
                TapeOp::Pow(a, k) => {
                    let base = val(a).as_scalar().expect("scalar");
                    let da = dt(a).as_scalar().expect("scalar");
                    Value::Scalar(k * base.powf(k - 1.0) * da)
                }
                TapeOp::ScalarExpand(a, n) => {
                    let da = dt(a).as_scalar().expect("scalar");
                    Value::Vector(vec![da; *n])
                }
                TapeOp::Sum(a) => Value::Scalar(dt(a).components().iter().sum()),
                TapeOp::Max0(a) => v_zip(&val(a), &dt(a), |z, dz| if z > 0.0 { dz } else { 0.0 }),
                TapeOp::Step(a) => zeros_like(dt(a).shape()),
                TapeOp::Sin(a) => v_zip(&val(a), &dt(a), |z, dz| z.cos() * dz),
                TapeOp::Cos(a) => v_zip(&val(a), &dt(a), |z, dz| -z.sin() * dz),
                TapeOp::Ln(a) => v_zip(&val(a), &dt(a), |z, dz| dz / z),
                TapeOp::Exp(a) => v_zip(&val(a), &dt(a), |z, dz| z.exp() * dz),
                TapeOp::Neg(a) => v_map(&dt(a), |x| -x),
            };
            tangents.push(tangent);
        }
    }
    Ok((
        ctx.values.last().expect("tape is never empty").clone(),
        tangents.pop().expect("tape is never empty"),
    ))
}

/// Result of a reverse sweep: the scalar value and the adjoint (partial
/// derivative of the result) for every leaf.
#[derive(Debug, Clone)]
pub struct ReverseSweep {
    pub value: f64,
    pub adjoints: BTreeMap<String, Value>,
}

/// Reverse-mode sweep over a scalar-valued tape: one value sweep forward,
/// one adjoint sweep backward. Adjoints accumulate additively where a value
/// fans out into several uses, which is exactly the total-derivative sum.
pub fn reverse_mode(tape: &Tape, env: &Env) -> Result<ReverseSweep, TapeError> {
    if !tape.result_shape().is_scalar() {
        return Err(TapeError::NonScalarResult);
    }
    let ctx = SweepContext::new(tape, env)?;

    let mut entry_adjoints: Vec<Value> = tape.entries.iter().map(|e| zeros_like(e.shape)).collect();
    let mut leaf_adjoints: BTreeMap<String, Value> = tape
        .leaves
        .iter()
        .map(|(name, shape)| (name.clone(), zeros_like(*shape)))
        .collect();
    let last = tape.len() - 1;
    entry_adjoints[last] = Value::Scalar(1.0);

    for i in (0..tape.len()).rev() {
        let adj = entry_adjoints[i].clone();
        let val = |op: &Operand| ctx.operand_value(op);
        let mut send = |op: &Operand, delta: Value, entry_adjoints: &mut Vec<Value>| match op {
            Operand::Entry(k) => v_add_assign(&mut entry_adjoints[*k], &delta),
            Operand::Leaf(name) => {
                v_add_assign(leaf_adjoints.get_mut(name).expect("leaf known"), &delta)
            }
            Operand::ConstScalar(_) | Operand::ConstVec(_) => {}
        };
        match &tape.entries[i].op {
            TapeOp::Alias(a) => send(a, adj, &mut entry_adjoints),
            TapeOp::Add(a, b) => {
                send(a, adj.clone(), &mut entry_adjoints);
                send(b, adj, &mut entry_adjoints);
            }
            TapeOp::Sub(a, b) => {
                send(a, adj.clone(), &mut entry_adjoints);
                send(b, v_map(&adj, |x| -x), &mut entry_adjoints);
            }
            TapeOp::MulScalar(a, b) | TapeOp::Hadamard(a, b) => {
                send(a, v_zip(&adj, &val(b), |g, y| g * y), &mut entry_adjoints);
                send(b, v_zip(&adj, &val(a), |g, x| g * x), &mut entry_adjoints);
            }
            TapeOp::HadamardDiv(a, b) => {
                let bv = val(b);
                send(a, v_zip(&adj, &bv, |g, y| g / y), &mut entry_adjoints);
                let av = val(a);
                let d_b = v_zip(&v_zip(&adj, &av, |g, x| g * x), &bv, |gx, y| -gx / (y * y));
                send(b, d_b, &mut entry_adjoints);
            }
            TapeOp::Dot(a, b) => {
                let g = adj.as_scalar().expect("dot is scalar");
                send(a, v_map(&val(b), |y| g * y), &mut entry_adjoints);
                send(b, v_map(&val(a), |x| g * x), &mut entry_adjoints);
            }
            TapeOp::Pow(a, k) => {
                let g = adj.as_scalar().expect("pow is scalar");
                let base = val(a).as_scalar().expect("scalar");
                send(
                    a,
                    Value::Scalar(g * k * base.powf(k - 1.0)),
                    &mut entry_adjoints,
                );
            }
            TapeOp::ScalarExpand(a, _) => {
                let total: f64 = adj.components().iter().sum();
                send(a, Value::Scalar(total), &mut entry_adjoints);
            }
            TapeOp::Sum(a) => {
                let g = adj.as_scalar().expect("sum is scalar");
                let n = val(a).components().len();
                send(a, Value::Vector(vec![g; n]), &mut entry_adjoints);
            }
            TapeOp::Max0(a) => {
                let d = v_zip(&adj, &val(a), |g, z| if z > 0.0 { g } else { 0.0 });
                send(a, d, &mut entry_adjoints);
            }
            TapeOp::Step(a) => {
                let d = zeros_like(val(a).shape());
                send(a, d, &mut entry_adjoints);
            }
            TapeOp::Sin(a) => {
                let d = v_zip(&adj, &val(a), |g, z| g * z.cos());
                send(a, d, &mut entry_adjoints);
            }
            TapeOp::Cos(a) => {
                let d = v_zip(&adj, &val(a), |g, z| -g * z.sin());
                send(a, d, &mut entry_adjoints);
            }
            TapeOp::Ln(a) => {
                let d = v_zip(&adj, &val(a), |g, z| g / z);
                send(a, d, &mut entry_adjoints);
            }
            TapeOp::Exp(a) => {
                let d = v_zip(&adj, &val(a), |g, z| g * z.exp());
                send(a, d, &mut entry_adjoints);
            }
            TapeOp::Neg(a) => send(a, v_map(&adj, |x| -x), &mut entry_adjoints),
        }
    }

    Ok(ReverseSweep {
        value: ctx.values[last].as_scalar().expect("scalar result"),
        adjoints: leaf_adjoints,
    })
}

/// Symbolic derivative through the tape with respect to a scalar variable:
/// local partials are combined along every path and intermediate variables
/// are replaced by their defining expressions. Numerically this equals the
/// direct symbolic derivative of the reconstructed expression.
pub fn symbolic_backsub(tape: &Tape, wrt: &Expr) -> Result<Expr, TapeError> {
    let var_name = match wrt.kind() {
        ExprKind::Var(name, Shape::Scalar) => name.clone(),
        ExprKind::Var(name, _) => return Err(TapeError::NotScalarVar(name.clone())),
        _ => return Err(TapeError::NotScalarVar(pretty_print(wrt))),
    };
    if let Some(shape) = tape.leaves.get(&var_name) {
        if !shape.is_scalar() {
            return Err(TapeError::NotScalarVar(var_name));
        }
    }
    backsub_seeded(tape, &var_name, 0)
}

/// [`symbolic_backsub`] for one component of a (possibly vector) leaf: the
/// returned expression is ∂result/∂(leaf component), 0-based.
pub fn symbolic_backsub_component(
    tape: &Tape,
    leaf: &str,
    component: usize,
) -> Result<Expr, TapeError> {
    let shape = *tape
        .leaves
        .get(leaf)
        .ok_or_else(|| TapeError::UnknownSeed(leaf.to_string()))?;
    if component >= shape.len() {
        return Err(TapeError::SeedComponent {
            name: leaf.to_string(),
            index: component,
            len: shape.len(),
        });
    }
    backsub_seeded(tape, leaf, component)
}

fn backsub_seeded(tape: &Tape, var_name: &str, component: usize) -> Result<Expr, TapeError> {
    if !tape.result_shape().is_scalar() {
        return Err(TapeError::NonScalarResult);
    }

    // Same-shape product: scalars multiply, vectors combine element-wise.
    fn mul_same(a: Expr, b: Expr) -> Expr {
        if a.shape().is_vector() {
            Expr::hadamard(a, b).expect("same shape")
        } else {
            Expr::mul(a, b).expect("same shape")
        }
    }

    let mut exprs: Vec<Expr> = Vec::with_capacity(tape.len());
    let mut dexprs: Vec<Expr> = Vec::with_capacity(tape.len());
    let zero_expr = |shape: Shape| -> Expr {
        match shape {
            Shape::Scalar => Expr::constant(0.0),
            Shape::Vector(n) => Expr::scalar_expand(Expr::constant(0.0), n).expect("n >= 1"),
        }
    };

    for entry in &tape.entries {
        let x = |op: &Operand| tape.operand_expr(op, &exprs);
        let dx = |op: &Operand, dexprs: &[Expr]| -> Expr {
            match op {
                Operand::Entry(i) => dexprs[*i].clone(),
                Operand::Leaf(name) => {
                    let shape = tape.leaves[name];
                    if name != var_name {
                        return zero_expr(shape);
                    }
                    match shape {
                        Shape::Scalar => Expr::constant(1.0),
                        Shape::Vector(n) => {
                            // Seeding one component: the basis vector e_j.
                            let mut basis = vec![0.0; n];
                            basis[component] = 1.0;
                            Expr::const_vec(basis).expect("n >= 1")
                        }
                    }
                }
                Operand::ConstScalar(_) => Expr::constant(0.0),
                Operand::ConstVec(vs) => zero_expr(Shape::Vector(vs.len())),
            }
        };
        let d = |op: &Operand| dx(op, &dexprs);
        let derivative = match &entry.op {
            TapeOp::Alias(a) => d(a),
            TapeOp::Add(a, b) => Expr::add(d(a), d(b)).expect("same shape"),
            TapeOp::Sub(a, b) => Expr::sub(d(a), d(b)).expect("same shape"),
            TapeOp::MulScalar(a, b) | TapeOp::Hadamard(a, b) => {
                Expr::add(mul_same(x(a), d(b)), mul_same(d(a), x(b))).expect("same shape")
            }
            TapeOp::HadamardDiv(a, b) => {
                let left = Expr::hadamard_div(d(a), x(b)).expect("same shape");
                let right = Expr::hadamard_div(mul_same(x(a), d(b)), mul_same(x(b), x(b)))
                    .expect("same shape");
                Expr::sub(left, right).expect("same shape")
            }
            TapeOp::Dot(a, b) => Expr::add(
                Expr::dot(d(a), x(b)).expect("same length"),
                Expr::dot(x(a), d(b)).expect("same length"),
            )
            .expect("scalar"),
            TapeOp::Pow(a, k) => {
                let factor = Expr::mul(
                    Expr::constant(*k),
                    Expr::pow(x(a), k - 1.0).expect("scalar"),
                )
                .expect("scalar");
                Expr::mul(factor, d(a)).expect("scalar")
            }
            TapeOp::ScalarExpand(a, n) => Expr::scalar_expand(d(a), *n).expect("scalar child"),
            TapeOp::Sum(a) => Expr::sum(d(a)).expect("vector child"),
            TapeOp::Max0(a) => mul_same(Expr::step(x(a)), d(a)),
            TapeOp::Step(a) => zero_expr(x(a).shape()),
            TapeOp::Sin(a) => mul_same(Expr::cos(x(a)), d(a)),
            TapeOp::Cos(a) => Expr::neg(mul_same(Expr::sin(x(a)), d(a))),
            TapeOp::Ln(a) => {
                if x(a).shape().is_vector() {
                    Expr::hadamard_div(d(a), x(a)).expect("same shape")
                } else {
                    Expr::mul(Expr::pow(x(a), -1.0).expect("scalar"), d(a)).expect("scalar")
                }
            }
            TapeOp::Exp(a) => mul_same(Expr::exp(x(a)), d(a)),
            TapeOp::Neg(a) => Expr::neg(d(a)),
        };
        dexprs.push(simplify(&derivative));
        // Rebuild the defining expression for use by later local partials.
        let rebuilt = {
            let e = |op: &Operand| tape.operand_expr(op, &exprs);
            match &entry.op {
                TapeOp::Alias(a) => e(a),
                TapeOp::Add(a, b) => Expr::add(e(a), e(b)).expect("valid"),
                TapeOp::Sub(a, b) => Expr::sub(e(a), e(b)).expect("valid"),
                TapeOp::MulScalar(a, b) => Expr::mul(e(a), e(b)).expect("valid"),
                TapeOp::Hadamard(a, b) => Expr::hadamard(e(a), e(b)).expect("valid"),
                TapeOp::HadamardDiv(a, b) => Expr::hadamard_div(e(a), e(b)).expect("valid"),
                TapeOp::Dot(a, b) => Expr::dot(e(a), e(b)).expect("valid"),
                TapeOp::Pow(a, k) => Expr::pow(e(a), *k).expect("valid"),
                TapeOp::ScalarExpand(a, n) => Expr::scalar_expand(e(a), *n).expect("valid"),
                TapeOp::Sum(a) => Expr::sum(e(a)).expect("valid"),
                TapeOp::Max0(a) => Expr::max0(e(a)),
                TapeOp::Step(a) => Expr::step(e(a)),
                TapeOp::Sin(a) => Expr::sin(e(a)),
                TapeOp::Cos(a) => Expr::cos(e(a)),
                TapeOp::Ln(a) => Expr::ln(e(a)),
                TapeOp::Exp(a) => Expr::exp(e(a)),
                TapeOp::Neg(a) => Expr::neg(e(a)),
            }
        };
        exprs.push(rebuilt);
    }
    Ok(simplify(dexprs.last().expect("tape is never empty")))
}
