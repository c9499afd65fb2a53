//! Immutable expression trees over scalar and vector values.
//!
//! An [`Expr`] is a shape-checked, immutable tree. Vectors are column
//! vectors; a scalar meeting a vector in an element-wise operation is
//! broadcast through an explicit [`ExprKind::ScalarExpand`] node, which the
//! builder inserts automatically. Every node caches its [`Shape`], computed
//! once at construction, so shape queries never re-traverse the tree.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Shape of an expression value: a scalar or a column vector of fixed length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Scalar,
    Vector(usize),
}

// A shape always has at least one component, so there is no is_empty.
#[allow(clippy::len_without_is_empty)]
impl Shape {
    pub fn is_scalar(&self) -> bool {
        matches!(self, Shape::Scalar)
    }

    pub fn is_vector(&self) -> bool {
        matches!(self, Shape::Vector(_))
    }

    /// Number of scalar components: 1 for scalars, n for vectors.
    pub fn len(&self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Vector(n) => *n,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Scalar => write!(f, "scalar"),
            Shape::Vector(n) => write!(f, "vector({n})"),
        }
    }
}

/// Errors raised while constructing expressions.
#[derive(Debug, Clone, PartialEq)]
pub enum BuildError {
    /// Operand shapes do not satisfy the operator's shape rule.
    ShapeMismatch(String),
    /// Wrong number of children for a node kind.
    ArityError(String),
    /// The same variable name occurs with two different shapes.
    ConflictingShape(String),
}

impl fmt::Display for BuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            BuildError::ArityError(msg) => write!(f, "arity error: {msg}"),
            BuildError::ConflictingShape(name) => {
                write!(f, "variable `{name}` used with conflicting shapes")
            }
        }
    }
}

impl std::error::Error for BuildError {}

/// Node kinds. Binary element-wise operators require equal-length vector
/// operands; `MulScalar` and `Pow` are scalar-only; the unary functions
/// broadcast over vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Var(String, Shape),
    Const(f64),
    ConstVec(Vec<f64>),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    MulScalar(Expr, Expr),
    /// Scalar base raised to a real constant exponent.
    Pow(Expr, f64),
    /// Element-wise product of two equal-length vectors.
    Hadamard(Expr, Expr),
    /// Element-wise quotient of two equal-length vectors.
    HadamardDiv(Expr, Expr),
    /// Broadcast of a scalar to a vector of the given length.
    ScalarExpand(Expr, usize),
    Dot(Expr, Expr),
    Sum(Expr),
    /// max(0, z), element-wise on vectors.
    Max0(Expr),
    /// Indicator of z > 0 (the derivative of `Max0`); 0 at and below zero.
    Step(Expr),
    Sin(Expr),
    Cos(Expr),
    Ln(Expr),
    Exp(Expr),
    Neg(Expr),
}

#[derive(Debug)]
struct Node {
    kind: ExprKind,
    shape: Shape,
}

/// Handle to an immutable expression node. Cloning is cheap (reference
/// counted), equality is structural, and values are safe to share across
/// threads — nothing mutates after construction.
#[derive(Debug, Clone)]
pub struct Expr {
    node: Arc<Node>,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.node, &other.node) || self.kind() == other.kind()
    }
}

fn mismatch(msg: impl Into<String>) -> BuildError {
    BuildError::ShapeMismatch(msg.into())
}

// The constructors are associated functions named after the operators they
// build (Expr::add, Expr::mul, ...), not operator overloads.
#[allow(clippy::should_implement_trait)]
impl Expr {
    fn new(kind: ExprKind, shape: Shape) -> Expr {
        Expr {
            node: Arc::new(Node { kind, shape }),
        }
    }

    pub fn kind(&self) -> &ExprKind {
        &self.node.kind
    }

    pub fn shape(&self) -> Shape {
        self.node.shape
    }

    pub fn is_const(&self, c: f64) -> bool {
        matches!(self.kind(), ExprKind::Const(v) if *v == c)
    }

    /// Scalar variable reference.
    pub fn scalar_var(name: impl Into<String>) -> Expr {
        Expr::new(ExprKind::Var(name.into(), Shape::Scalar), Shape::Scalar)
    }

    /// Vector variable reference of length `n` (n ≥ 1).
    pub fn vector_var(name: impl Into<String>, n: usize) -> Result<Expr, BuildError> {
        if n == 0 {
            return Err(mismatch("vector length must be at least 1"));
        }
        Ok(Expr::new(
            ExprKind::Var(name.into(), Shape::Vector(n)),
            Shape::Vector(n),
        ))
    }

    /// Variable reference with an explicit shape.
    pub fn var(name: impl Into<String>, shape: Shape) -> Result<Expr, BuildError> {
        match shape {
            Shape::Scalar => Ok(Expr::scalar_var(name)),
            Shape::Vector(n) => Expr::vector_var(name, n),
        }
    }

    pub fn constant(c: f64) -> Expr {
        Expr::new(ExprKind::Const(c), Shape::Scalar)
    }

    pub fn const_vec(values: Vec<f64>) -> Result<Expr, BuildError> {
        if values.is_empty() {
            return Err(mismatch("vector length must be at least 1"));
        }
        let n = values.len();
        Ok(Expr::new(ExprKind::ConstVec(values), Shape::Vector(n)))
    }

    /// Broadcast a scalar expression to a vector of length `n`.
    pub fn scalar_expand(scalar: Expr, n: usize) -> Result<Expr, BuildError> {
        if !scalar.shape().is_scalar() {
            return Err(mismatch("only a scalar can be expanded to a vector"));
        }
        if n == 0 {
            return Err(mismatch("vector length must be at least 1"));
        }
        Ok(Expr::new(
            ExprKind::ScalarExpand(scalar, n),
            Shape::Vector(n),
        ))
    }

    /// Align two operands of an element-wise operator, expanding a scalar
    /// side to match a vector side. Errors when two vectors disagree in
    /// length.
    fn align_elementwise(op: &str, a: Expr, b: Expr) -> Result<(Expr, Expr, Shape), BuildError> {
        match (a.shape(), b.shape()) {
            (Shape::Scalar, Shape::Scalar) => Ok((a, b, Shape::Scalar)),
            (Shape::Vector(n), Shape::Vector(m)) => {
                if n == m {
                    Ok((a, b, Shape::Vector(n)))
                } else {
                    Err(mismatch(format!(
                        "`{op}` needs equal lengths, got vector({n}) and vector({m})"
                    )))
                }
            }
            (Shape::Scalar, Shape::Vector(n)) => {
                let a = Expr::scalar_expand(a, n)?;
                Ok((a, b, Shape::Vector(n)))
            }
            (Shape::Vector(n), Shape::Scalar) => {
                let b = Expr::scalar_expand(b, n)?;
                Ok((a, b, Shape::Vector(n)))
            }
        }
    }

    pub fn add(a: Expr, b: Expr) -> Result<Expr, BuildError> {
        let (a, b, shape) = Expr::align_elementwise("+", a, b)?;
        Ok(Expr::new(ExprKind::Add(a, b), shape))
    }

    pub fn sub(a: Expr, b: Expr) -> Result<Expr, BuildError> {
        let (a, b, shape) = Expr::align_elementwise("-", a, b)?;
        Ok(Expr::new(ExprKind::Sub(a, b), shape))
    }

    /// Multiplication written `*`: scalar times scalar, or a scalar scaling
    /// a vector (which becomes a Hadamard product against the broadcast
    /// scalar). Two vector operands are rejected; use [`Expr::hadamard`].
    pub fn mul(a: Expr, b: Expr) -> Result<Expr, BuildError> {
        match (a.shape(), b.shape()) {
            (Shape::Scalar, Shape::Scalar) => {
                Ok(Expr::new(ExprKind::MulScalar(a, b), Shape::Scalar))
            }
            (Shape::Scalar, Shape::Vector(n)) => {
                let a = Expr::scalar_expand(a, n)?;
                Ok(Expr::new(ExprKind::Hadamard(a, b), Shape::Vector(n)))
            }
            (Shape::Vector(n), Shape::Scalar) => {
                let b = Expr::scalar_expand(b, n)?;
                Ok(Expr::new(ExprKind::Hadamard(a, b), Shape::Vector(n)))
            }
            (Shape::Vector(_), Shape::Vector(_)) => Err(mismatch(
                "`*` does not apply to two vectors; use `(*)` for the element-wise product",
            )),
        }
    }

    /// Element-wise product `(*)`. At least one operand must be a vector; a
    /// scalar side is broadcast.
    pub fn hadamard(a: Expr, b: Expr) -> Result<Expr, BuildError> {
        if a.shape().is_scalar() && b.shape().is_scalar() {
            return Err(mismatch(
                "`(*)` needs a vector operand; use `*` for scalars",
            ));
        }
        let (a, b, shape) = Expr::align_elementwise("(*)", a, b)?;
        Ok(Expr::new(ExprKind::Hadamard(a, b), shape))
    }

    /// Element-wise quotient `(/)`. At least one operand must be a vector; a
    /// scalar side is broadcast.
    pub fn hadamard_div(a: Expr, b: Expr) -> Result<Expr, BuildError> {
        if a.shape().is_scalar() && b.shape().is_scalar() {
            return Err(mismatch("`(/)` needs a vector operand"));
        }
        let (a, b, shape) = Expr::align_elementwise("(/)", a, b)?;
        Ok(Expr::new(ExprKind::HadamardDiv(a, b), shape))
    }

    /// Scalar base raised to a real constant exponent.
    pub fn pow(base: Expr, exponent: f64) -> Result<Expr, BuildError> {
        if !base.shape().is_scalar() {
            return Err(mismatch("`^` applies to scalars only"));
        }
        Ok(Expr::new(ExprKind::Pow(base, exponent), Shape::Scalar))
    }

    pub fn dot(a: Expr, b: Expr) -> Result<Expr, BuildError> {
        match (a.shape(), b.shape()) {
            (Shape::Vector(n), Shape::Vector(m)) if n == m => {
                Ok(Expr::new(ExprKind::Dot(a, b), Shape::Scalar))
            }
            (Shape::Vector(n), Shape::Vector(m)) => Err(mismatch(format!(
                "dot needs equal lengths, got vector({n}) and vector({m})"
            ))),
            _ => Err(mismatch("dot needs two vector operands")),
        }
    }

    pub fn sum(v: Expr) -> Result<Expr, BuildError> {
        if !v.shape().is_vector() {
            return Err(mismatch("sum needs a vector operand"));
        }
        Ok(Expr::new(ExprKind::Sum(v), Shape::Scalar))
    }

    pub fn neg(e: Expr) -> Expr {
        let shape = e.shape();
        Expr::new(ExprKind::Neg(e), shape)
    }

    pub fn max0(e: Expr) -> Expr {
        let shape = e.shape();
        Expr::new(ExprKind::Max0(e), shape)
    }

    pub fn step(e: Expr) -> Expr {
        let shape = e.shape();
        Expr::new(ExprKind::Step(e), shape)
    }

    pub fn sin(e: Expr) -> Expr {
        let shape = e.shape();
        Expr::new(ExprKind::Sin(e), shape)
    }

    pub fn cos(e: Expr) -> Expr {
        let shape = e.shape();
        Expr::new(ExprKind::Cos(e), shape)
    }

    pub fn ln(e: Expr) -> Expr {
        let shape = e.shape();
        Expr::new(ExprKind::Ln(e), shape)
    }

    pub fn exp(e: Expr) -> Expr {
        let shape = e.shape();
        Expr::new(ExprKind::Exp(e), shape)
    }

    /// Free variables of the expression, deduplicated by name.
    ///
    /// Errors with [`BuildError::ConflictingShape`] when the same name is
    /// used with two different shapes anywhere in the tree.
    pub fn free_vars(&self) -> Result<BTreeMap<String, Shape>, BuildError> {
        fn walk(e: &Expr, out: &mut BTreeMap<String, Shape>) -> Result<(), BuildError> {
            match e.kind() {
                ExprKind::Var(name, shape) => {
                    if let Some(prev) = out.insert(name.clone(), *shape) {
                        if prev != *shape {
                            return Err(BuildError::ConflictingShape(name.clone()));
                        }
                    }
                    Ok(())
                }
                ExprKind::Const(_) | ExprKind::ConstVec(_) => Ok(()),
                ExprKind::Add(a, b)
                | ExprKind::Sub(a, b)
                | ExprKind::MulScalar(a, b)
                | ExprKind::Hadamard(a, b)
                | ExprKind::HadamardDiv(a, b)
                | ExprKind::Dot(a, b) => {
                    walk(a, out)?;
                    walk(b, out)
                }
                ExprKind::Pow(u, _)
                | ExprKind::ScalarExpand(u, _)
                | ExprKind::Sum(u)
                | ExprKind::Max0(u)
                | ExprKind::Step(u)
                | ExprKind::Sin(u)
                | ExprKind::Cos(u)
                | ExprKind::Ln(u)
                | ExprKind::Exp(u)
                | ExprKind::Neg(u) => walk(u, out),
            }
        }
        let mut out = BTreeMap::new();
        walk(self, &mut out)?;
        Ok(out)
    }

    /// True when the expression does not reference the given variable.
    pub fn is_free_of(&self, name: &str) -> bool {
        match self.kind() {
            ExprKind::Var(n, _) => n != name,
            ExprKind::Const(_) | ExprKind::ConstVec(_) => true,
            ExprKind::Add(a, b)
            | ExprKind::Sub(a, b)
            | ExprKind::MulScalar(a, b)
            | ExprKind::Hadamard(a, b)
            | ExprKind::HadamardDiv(a, b)
            | ExprKind::Dot(a, b) => a.is_free_of(name) && b.is_free_of(name),
            ExprKind::Pow(u, _)
            | ExprKind::ScalarExpand(u, _)
            | ExprKind::Sum(u)
            | ExprKind::Max0(u)
            | ExprKind::Step(u)
            | ExprKind::Sin(u)
            | ExprKind::Cos(u)
            | ExprKind::Ln(u)
            | ExprKind::Exp(u)
            | ExprKind::Neg(u) => u.is_free_of(name),
        }
    }

    /// Replace every occurrence of the named variable by `replacement`,
    /// which must have the variable's shape.
    pub fn substitute(&self, name: &str, replacement: &Expr) -> Result<Expr, BuildError> {
        match self.kind() {
            ExprKind::Var(n, shape) if n == name => {
                if replacement.shape() != *shape {
                    return Err(mismatch(format!(
                        "substituting {} for `{name}` declared {}",
                        replacement.shape(),
                        shape
                    )));
                }
                Ok(replacement.clone())
            }
            ExprKind::Var(..) | ExprKind::Const(_) | ExprKind::ConstVec(_) => Ok(self.clone()),
            ExprKind::Add(a, b) => Expr::add(
                a.substitute(name, replacement)?,
                b.substitute(name, replacement)?,
            ),
            ExprKind::Sub(a, b) => Expr::sub(
                a.substitute(name, replacement)?,
                b.substitute(name, replacement)?,
            ),
            ExprKind::MulScalar(a, b) => Expr::mul(
                a.substitute(name, replacement)?,
                b.substitute(name, replacement)?,
            ),
            ExprKind::Hadamard(a, b) => Expr::hadamard(
                a.substitute(name, replacement)?,
                b.substitute(name, replacement)?,
            ),
            ExprKind::HadamardDiv(a, b) => Expr::hadamard_div(
                a.substitute(name, replacement)?,
                b.substitute(name, replacement)?,
            ),
            ExprKind::Dot(a, b) => Expr::dot(
                a.substitute(name, replacement)?,
                b.substitute(name, replacement)?,
            ),
            ExprKind::Pow(u, k) => Expr::pow(u.substitute(name, replacement)?, *k),
            ExprKind::ScalarExpand(u, n) => {
                Expr::scalar_expand(u.substitute(name, replacement)?, *n)
            }
            ExprKind::Sum(u) => Expr::sum(u.substitute(name, replacement)?),
            ExprKind::Max0(u) => Ok(Expr::max0(u.substitute(name, replacement)?)),
            ExprKind::Step(u) => Ok(Expr::step(u.substitute(name, replacement)?)),
            ExprKind::Sin(u) => Ok(Expr::sin(u.substitute(name, replacement)?)),
            ExprKind::Cos(u) => Ok(Expr::cos(u.substitute(name, replacement)?)),
            ExprKind::Ln(u) => Ok(Expr::ln(u.substitute(name, replacement)?)),
            ExprKind::Exp(u) => Ok(Expr::exp(u.substitute(name, replacement)?)),
            ExprKind::Neg(u) => Ok(Expr::neg(u.substitute(name, replacement)?)),
        }
    }
}

fn is_zero(e: &Expr) -> bool {
    match e.kind() {
        ExprKind::Const(c) => *c == 0.0,
        ExprKind::ConstVec(vs) => vs.iter().all(|v| *v == 0.0),
        ExprKind::ScalarExpand(s, _) => is_zero(s),
        _ => false,
    }
}

fn is_one(e: &Expr) -> bool {
    match e.kind() {
        ExprKind::Const(c) => *c == 1.0,
        ExprKind::ConstVec(vs) => vs.iter().all(|v| *v == 1.0),
        ExprKind::ScalarExpand(s, _) => is_one(s),
        _ => false,
    }
}

fn zero_of(shape: Shape) -> Expr {
    match shape {
        Shape::Scalar => Expr::constant(0.0),
        Shape::Vector(n) => Expr::scalar_expand(Expr::constant(0.0), n).expect("n >= 1"),
    }
}

fn fold2(a: &Expr, b: &Expr, f: impl Fn(f64, f64) -> f64) -> Option<Expr> {
    if let (ExprKind::Const(x), ExprKind::Const(y)) = (a.kind(), b.kind()) {
        let v = f(*x, *y);
        if v.is_finite() {
            return Some(Expr::constant(v));
        }
    }
    None
}

fn fold1(u: &Expr, f: impl Fn(f64) -> f64) -> Option<Expr> {
    if let ExprKind::Const(x) = u.kind() {
        let v = f(*x);
        if v.is_finite() {
            return Some(Expr::constant(v));
        }
    }
    None
}

/// Shallow, semantics-preserving simplification: constant folding, the 0/1
/// identities (u+0, u·1, u·0, u⁰, u¹), double negation, and `sum` of a
/// constant vector. Folds are skipped when they would produce a non-finite
/// constant so domain errors still surface at evaluation.
pub fn simplify(e: &Expr) -> Expr {
    match e.kind() {
        ExprKind::Var(..) | ExprKind::Const(_) | ExprKind::ConstVec(_) => e.clone(),
        ExprKind::Add(a, b) => {
            let a = simplify(a);
            let b = simplify(b);
            if is_zero(&a) {
                return b;
            }
            if is_zero(&b) {
                return a;
            }
            if let Some(c) = fold2(&a, &b, |x, y| x + y) {
                return c;
            }
            Expr::add(a, b).expect("children already shape-checked")
        }
        ExprKind::Sub(a, b) => {
            let a = simplify(a);
            let b = simplify(b);
            if is_zero(&b) {
                return a;
            }
            if is_zero(&a) {
                return Expr::neg(b);
            }
            if let Some(c) = fold2(&a, &b, |x, y| x - y) {
                return c;
            }
            Expr::sub(a, b).expect("children already shape-checked")
        }
        ExprKind::MulScalar(a, b) => {
            let a = simplify(a);
            let b = simplify(b);
            if is_zero(&a) || is_zero(&b) {
                return Expr::constant(0.0);
            }
            if is_one(&a) {
                return b;
            }
            if is_one(&b) {
                return a;
            }
            if let Some(c) = fold2(&a, &b, |x, y| x * y) {
                return c;
            }
            Expr::mul(a, b).expect("children already shape-checked")
        }
        ExprKind::Hadamard(a, b) => {
            let shape = e.shape();
            let a = simplify(a);
            let b = simplify(b);
            if is_zero(&a) || is_zero(&b) {
                return zero_of(shape);
            }
            if is_one(&a) {
                return b;
            }
            if is_one(&b) {
                return a;
            }
            Expr::hadamard(a, b).expect("children already shape-checked")
        }
        ExprKind::HadamardDiv(a, b) => {
            let a = simplify(a);
            let b = simplify(b);
            if is_one(&b) {
                return a;
            }
            Expr::hadamard_div(a, b).expect("children already shape-checked")
        }
        ExprKind::Pow(u, k) => {
            let u = simplify(u);
            if *k == 0.0 {
                return Expr::constant(1.0);
            }
            if *k == 1.0 {
                return u;
            }
            if let Some(c) = fold1(&u, |x| x.powf(*k)) {
                return c;
            }
            Expr::pow(u, *k).expect("child already shape-checked")
        }
        ExprKind::ScalarExpand(s, n) => {
            let s = simplify(s);
            Expr::scalar_expand(s, *n).expect("child already shape-checked")
        }
        ExprKind::Dot(a, b) => {
            let a = simplify(a);
            let b = simplify(b);
            Expr::dot(a, b).expect("children already shape-checked")
        }
        ExprKind::Sum(u) => {
            let u = simplify(u);
            if let ExprKind::ConstVec(vs) = u.kind() {
                return Expr::constant(vs.iter().sum());
            }
            Expr::sum(u).expect("child already shape-checked")
        }
        ExprKind::Max0(u) => {
            let u = simplify(u);
            if let Some(c) = fold1(&u, |x| x.max(0.0)) {
                return c;
            }
            Expr::max0(u)
        }
        ExprKind::Step(u) => {
            let u = simplify(u);
            if let Some(c) = fold1(&u, |x| if x > 0.0 { 1.0 } else { 0.0 }) {
                return c;
            }
            Expr::step(u)
        }
        ExprKind::Sin(u) => {
            let u = simplify(u);
            if let Some(c) = fold1(&u, f64::sin) {
                return c;
            }
            Expr::sin(u)
        }
        ExprKind::Cos(u) => {
            let u = simplify(u);
            if let Some(c) = fold1(&u, f64::cos) {
                return c;
            }
            Expr::cos(u)
        }
        ExprKind::Ln(u) => {
            let u = simplify(u);
            if let Some(c) = fold1(&u, f64::ln) {
                return c;
            }
            Expr::ln(u)
        }
        ExprKind::Exp(u) => {
            let u = simplify(u);
            if let Some(c) = fold1(&u, f64::exp) {
                return c;
            }
            Expr::exp(u)
        }
        ExprKind::Neg(u) => {
            let u = simplify(u);
            if let ExprKind::Neg(inner) = u.kind() {
                return inner.clone();
            }
            if let Some(c) = fold1(&u, |x| -x) {
                return c;
            }
            Expr::neg(u)
        }
    }
}
