//! Symbolic differentiation: scalar rules, gradients, and Jacobians in
//! numerator layout.
//!
//! Everything reduces to scalar component expressions: a vector variable `x`
//! of length n is split into scalar component variables `x_1 … x_n`, vector
//! operators are rewritten componentwise, and the scalar derivative rules do
//! the rest. The Jacobian of an element-wise expression takes a diagonal
//! fast path when a structural analysis ([`detect_diagonal`]) shows the i-th
//! output depends on at most the i-th input component; the dense path
//! ([`dense_jacobian`]) is always available and is kept independent so the
//! two can be checked against each other.
//!
//! Derivatives are differentiated with respect to a *variable expression*
//! (an [`ExprKind::Var`] node), which carries both the name and the shape.

use std::fmt;

use crate::canon::canonical;
use crate::expr::{simplify, Expr, ExprKind, Shape};
use crate::parse::pretty_print;

#[derive(Debug, Clone, PartialEq)]
pub enum DiffError {
    /// The `wrt` argument was not a plain variable node.
    NotAVariable,
    /// A scalar expression or variable was required.
    ExpectedScalar(String),
    /// A vector expression or variable was required.
    ExpectedVector(String),
    /// The expression uses the variable with a different shape.
    VariableShapeConflict(String),
    /// `sum_reduction_grad` needs a `sum(...)` root.
    ExpectedSum,
    /// Inner dimensions of a chain-rule product disagree.
    DimensionMismatch(usize, usize),
    /// Chained Jacobians must both be in numerator layout.
    LayoutMismatch,
    /// An intermediate variable refers to itself or a later definition.
    CyclicDefinition(String),
}

impl fmt::Display for DiffError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffError::NotAVariable => write!(f, "differentiation target must be a variable"),
            DiffError::ExpectedScalar(what) => write!(f, "expected a scalar {what}"),
            DiffError::ExpectedVector(what) => write!(f, "expected a vector {what}"),
            DiffError::VariableShapeConflict(name) => {
                write!(
                    f,
                    "variable `{name}` has a different shape in the expression"
                )
            }
            DiffError::ExpectedSum => write!(f, "expected a sum(...) expression"),
            DiffError::DimensionMismatch(a, b) => {
                write!(f, "inner dimensions disagree: {a} vs {b}")
            }
            DiffError::LayoutMismatch => write!(f, "both Jacobians must use numerator layout"),
            DiffError::CyclicDefinition(name) => {
                write!(f, "intermediate `{name}` is not topologically ordered")
            }
        }
    }
}

impl std::error::Error for DiffError {}

/// Orientation of a Jacobian: numerator layout indexes functions by row and
/// input components by column; denominator layout is its transpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Numerator,
    Denominator,
}

/// Storage for a symbolic Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub enum JacRepr {
    /// Full m×n grid.
    Dense(Vec<Vec<Expr>>),
    /// Square matrix with the given diagonal and zeros elsewhere.
    Diagonal(Vec<Expr>),
    /// 1×n.
    RowVector(Vec<Expr>),
    /// m×1.
    ColVector(Vec<Expr>),
    /// 1×1.
    ScalarD(Expr),
}

/// An m×n matrix of scalar partial-derivative expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    rows: usize,
    cols: usize,
    layout: Layout,
    repr: JacRepr,
}

impl Jacobian {
    pub fn dense(grid: Vec<Vec<Expr>>) -> Jacobian {
        let rows = grid.len();
        let cols = grid.first().map_or(0, Vec::len);
        debug_assert!(rows > 0 && cols > 0);
        debug_assert!(grid.iter().all(|r| r.len() == cols));
        Jacobian {
            rows,
            cols,
            layout: Layout::Numerator,
            repr: JacRepr::Dense(grid),
        }
    }

    pub fn diagonal(entries: Vec<Expr>) -> Jacobian {
        let n = entries.len();
        Jacobian {
            rows: n,
            cols: n,
            layout: Layout::Numerator,
            repr: JacRepr::Diagonal(entries),
        }
    }

    pub fn row_vector(entries: Vec<Expr>) -> Jacobian {
        let n = entries.len();
        Jacobian {
            rows: 1,
            cols: n,
            layout: Layout::Numerator,
            repr: JacRepr::RowVector(entries),
        }
    }

    pub fn col_vector(entries: Vec<Expr>) -> Jacobian {
        let m = entries.len();
        Jacobian {
            rows: m,
            cols: 1,
            layout: Layout::Numerator,
            repr: JacRepr::ColVector(entries),
        }
    }

    pub fn scalar(entry: Expr) -> Jacobian {
        Jacobian {
            rows: 1,
            cols: 1,
            layout: Layout::Numerator,
            repr: JacRepr::ScalarD(entry),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn repr(&self) -> &JacRepr {
        &self.repr
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.repr, JacRepr::Diagonal(_))
    }

    /// Entry (i, j), materializing structural zeros of the diagonal form.
    pub fn entry(&self, i: usize, j: usize) -> Expr {
        assert!(i < self.rows && j < self.cols, "entry out of range");
        match &self.repr {
            JacRepr::Dense(g) => g[i][j].clone(),
            JacRepr::Diagonal(d) => {
                if i == j {
                    d[i].clone()
                } else {
                    Expr::constant(0.0)
                }
            }
            JacRepr::RowVector(r) => r[j].clone(),
            JacRepr::ColVector(c) => c[i].clone(),
            JacRepr::ScalarD(e) => e.clone(),
        }
    }

    /// Full dense grid with explicit zeros.
    pub fn materialize(&self) -> Vec<Vec<Expr>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    /// Render for display: `diag(...)` for diagonals, bracketed rows
    /// otherwise, entries in canonical form. Dense grids align columns.
    pub fn render(&self) -> String {
        let show = |e: &Expr| pretty_print(&canonical(e));
        match &self.repr {
            JacRepr::ScalarD(e) => show(e),
            JacRepr::Diagonal(d) => {
                let parts: Vec<String> = d.iter().map(show).collect();
                format!("diag({})", parts.join(", "))
            }
            JacRepr::RowVector(r) => {
                let parts: Vec<String> = r.iter().map(show).collect();
                format!("[{}]", parts.join(", "))
            }
            JacRepr::ColVector(c) => {
                let parts: Vec<String> = c.iter().map(show).collect();
                format!("[{}]", parts.join("; "))
            }
            JacRepr::Dense(g) => {
                let cells: Vec<Vec<String>> =
                    g.iter().map(|row| row.iter().map(show).collect()).collect();
                let mut widths = vec![0usize; self.cols];
                for row in &cells {
                    for (j, cell) in row.iter().enumerate() {
                        widths[j] = widths[j].max(cell.chars().count());
                    }
                }
                let mut out = String::new();
                for (i, row) in cells.iter().enumerate() {
                    if i > 0 {
                        out.push('\n');
                    }
                    out.push('[');
                    for (j, cell) in row.iter().enumerate() {
                        if j > 0 {
                            out.push_str("  ");
                        }
                        out.push_str(cell);
                        if j + 1 < self.cols {
                            for _ in cell.chars().count()..widths[j] {
                                out.push(' ');
                            }
                        }
                    }
                    out.push(']');
                }
                out
            }
        }
    }
}

impl fmt::Display for Jacobian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Flip between numerator and denominator layout; involutive.
pub fn transpose_layout(j: &Jacobian) -> Jacobian {
    let layout = match j.layout {
        Layout::Numerator => Layout::Denominator,
        Layout::Denominator => Layout::Numerator,
    };
    let repr = match &j.repr {
        JacRepr::Dense(g) => {
            let grid: Vec<Vec<Expr>> = (0..j.cols)
                .map(|c| (0..j.rows).map(|r| g[r][c].clone()).collect())
                .collect();
            JacRepr::Dense(grid)
        }
        JacRepr::Diagonal(d) => JacRepr::Diagonal(d.clone()),
        JacRepr::RowVector(r) => JacRepr::ColVector(r.clone()),
        JacRepr::ColVector(c) => JacRepr::RowVector(c.clone()),
        JacRepr::ScalarD(e) => JacRepr::ScalarD(e.clone()),
    };
    Jacobian {
        rows: j.cols,
        cols: j.rows,
        layout,
        repr,
    }
}

/// Name of the 1-based i-th scalar component of vector variable `base`.
///
/// Component names use `base_i`; a pre-existing scalar variable spelled the
/// same way would alias that component.
pub fn component_var_name(base: &str, i: usize) -> String {
    format!("{base}_{i}")
}

fn component_var(base: &str, i: usize) -> Expr {
    Expr::scalar_var(component_var_name(base, i))
}

/// Rewrite an expression into scalar component expressions, splitting every
/// vector variable into its component variables.
pub fn scalarize(e: &Expr) -> Vec<Expr> {
    fn zip2(a: &Expr, b: &Expr, f: impl Fn(Expr, Expr) -> Expr) -> Vec<Expr> {
        scalarize(a)
            .into_iter()
            .zip(scalarize(b))
            .map(|(x, y)| f(x, y))
            .collect()
    }
    let add = |x: Expr, y: Expr| Expr::add(x, y).expect("scalar components");
    let mul = |x: Expr, y: Expr| Expr::mul(x, y).expect("scalar components");
    match e.kind() {
        ExprKind::Var(_, Shape::Scalar) => vec![e.clone()],
        ExprKind::Var(name, Shape::Vector(n)) => (1..=*n).map(|i| component_var(name, i)).collect(),
        ExprKind::Const(_) => vec![e.clone()],
        ExprKind::ConstVec(vs) => vs.iter().map(|v| Expr::constant(*v)).collect(),
        ExprKind::Add(a, b) => zip2(a, b, add),
        ExprKind::Sub(a, b) => zip2(a, b, |x, y| Expr::sub(x, y).expect("scalar components")),
        ExprKind::MulScalar(a, b) | ExprKind::Hadamard(a, b) => zip2(a, b, mul),
        ExprKind::HadamardDiv(a, b) => zip2(a, b, |x, y| {
            mul(x, Expr::pow(y, -1.0).expect("scalar component"))
        }),
        ExprKind::Pow(u, k) => vec![Expr::pow(scalarize(u).remove(0), *k).expect("scalar")],
        ExprKind::ScalarExpand(s, n) => {
            let s = scalarize(s).remove(0);
            (0..*n).map(|_| s.clone()).collect()
        }
        ExprKind::Dot(a, b) => {
            let terms = zip2(a, b, mul);
            vec![terms.into_iter().reduce(add).expect("n >= 1")]
        }
        ExprKind::Sum(u) => vec![scalarize(u).into_iter().reduce(add).expect("n >= 1")],
        ExprKind::Max0(u) => scalarize(u).into_iter().map(Expr::max0).collect(),
        ExprKind::Step(u) => scalarize(u).into_iter().map(Expr::step).collect(),
        ExprKind::Sin(u) => scalarize(u).into_iter().map(Expr::sin).collect(),
        ExprKind::Cos(u) => scalarize(u).into_iter().map(Expr::cos).collect(),
        ExprKind::Ln(u) => scalarize(u).into_iter().map(Expr::ln).collect(),
        ExprKind::Exp(u) => scalarize(u).into_iter().map(Expr::exp).collect(),
        ExprKind::Neg(u) => scalarize(u).into_iter().map(Expr::neg).collect(),
    }
}

/// Scalar derivative rules on a component expression (no vector nodes).
fn derive_component(e: &Expr, var: &str) -> Expr {
    let c = Expr::constant;
    let mul = |a: Expr, b: Expr| Expr::mul(a, b).expect("scalar");
    let add = |a: Expr, b: Expr| Expr::add(a, b).expect("scalar");
    match e.kind() {
        ExprKind::Var(name, _) => c(if name == var { 1.0 } else { 0.0 }),
        ExprKind::Const(_) => c(0.0),
        ExprKind::Add(a, b) => add(derive_component(a, var), derive_component(b, var)),
        ExprKind::Sub(a, b) => {
            Expr::sub(derive_component(a, var), derive_component(b, var)).expect("scalar")
        }
        // Product rule, written f·dg + df·g.
        ExprKind::MulScalar(a, b) => add(
            mul(a.clone(), derive_component(b, var)),
            mul(derive_component(a, var), b.clone()),
        ),
        // Power rule with the chain factor: k·u^(k-1)·u'.
        ExprKind::Pow(u, k) => mul(
            mul(c(*k), Expr::pow(u.clone(), k - 1.0).expect("scalar")),
            derive_component(u, var),
        ),
        ExprKind::Sin(u) => mul(Expr::cos(u.clone()), derive_component(u, var)),
        ExprKind::Cos(u) => Expr::neg(mul(Expr::sin(u.clone()), derive_component(u, var))),
        ExprKind::Ln(u) => mul(
            Expr::pow(u.clone(), -1.0).expect("scalar"),
            derive_component(u, var),
        ),
        ExprKind::Exp(u) => mul(Expr::exp(u.clone()), derive_component(u, var)),
        // The boundary belongs to the inactive branch: step(0) = 0.
        ExprKind::Max0(u) => mul(Expr::step(u.clone()), derive_component(u, var)),
        ExprKind::Step(_) => c(0.0),
        ExprKind::Neg(u) => Expr::neg(derive_component(u, var)),
        ExprKind::ConstVec(_)
        | ExprKind::Hadamard(..)
        | ExprKind::HadamardDiv(..)
        | ExprKind::ScalarExpand(..)
        | ExprKind::Dot(..)
        | ExprKind::Sum(_) => unreachable!("scalarized expressions have no vector nodes"),
    }
}

fn var_parts(wrt: &Expr) -> Result<(&str, Shape), DiffError> {
    match wrt.kind() {
        ExprKind::Var(name, shape) => Ok((name, *shape)),
        _ => Err(DiffError::NotAVariable),
    }
}

fn check_var_shape(e: &Expr, name: &str, shape: Shape) -> Result<(), DiffError> {
    if let Ok(fv) = e.free_vars() {
        if let Some(s) = fv.get(name) {
            if *s != shape {
                return Err(DiffError::VariableShapeConflict(name.to_string()));
            }
        }
        Ok(())
    } else {
        Err(DiffError::VariableShapeConflict(name.to_string()))
    }
}

/// Derivative of a scalar expression with respect to a scalar variable,
/// simplified.
pub fn derive_scalar(e: &Expr, wrt: &Expr) -> Result<Expr, DiffError> {
    let (name, shape) = var_parts(wrt)?;
    if !shape.is_scalar() {
        return Err(DiffError::ExpectedScalar(format!("variable `{name}`")));
    }
    if !e.shape().is_scalar() {
        return Err(DiffError::ExpectedScalar("expression".into()));
    }
    check_var_shape(e, name, shape)?;
    let component = scalarize(e).remove(0);
    Ok(simplify(&derive_component(&component, name)))
}

/// Gradient (1×n Jacobian) of a scalar expression with respect to a vector
/// variable.
pub fn gradient(e: &Expr, wrt: &Expr) -> Result<Jacobian, DiffError> {
    let (name, shape) = var_parts(wrt)?;
    let n = match shape {
        Shape::Vector(n) => n,
        Shape::Scalar => return Err(DiffError::ExpectedVector(format!("variable `{name}`"))),
    };
    if !e.shape().is_scalar() {
        return Err(DiffError::ExpectedScalar("expression".into()));
    }
    check_var_shape(e, name, shape)?;
    let component = scalarize(e).remove(0);
    let entries = (1..=n)
        .map(|j| simplify(&derive_component(&component, &component_var_name(name, j))))
        .collect();
    Ok(Jacobian::row_vector(entries))
}

/// Gradient of a scalar expression over an ordered list of scalar variables,
/// treated as their implicit concatenation.
pub fn gradient_scalars(e: &Expr, vars: &[&str]) -> Result<Jacobian, DiffError> {
    if !e.shape().is_scalar() {
        return Err(DiffError::ExpectedScalar("expression".into()));
    }
    for name in vars {
        check_var_shape(e, name, Shape::Scalar)?;
    }
    let component = scalarize(e).remove(0);
    let entries = vars
        .iter()
        .map(|name| simplify(&derive_component(&component, name)))
        .collect();
    Ok(Jacobian::row_vector(entries))
}

/// True when the i-th component of the vector expression can depend on at
/// most the i-th component of `var` (the element-wise diagonal condition).
/// Structural and sound but incomplete; a `false` only forces the dense path.
fn componentwise(e: &Expr, var: &str) -> bool {
    match e.kind() {
        ExprKind::Var(..) | ExprKind::ConstVec(_) => true,
        ExprKind::ScalarExpand(s, _) => s.is_free_of(var),
        ExprKind::Add(a, b)
        | ExprKind::Sub(a, b)
        | ExprKind::Hadamard(a, b)
        | ExprKind::HadamardDiv(a, b) => componentwise(a, var) && componentwise(b, var),
        ExprKind::Max0(u)
        | ExprKind::Step(u)
        | ExprKind::Sin(u)
        | ExprKind::Cos(u)
        | ExprKind::Ln(u)
        | ExprKind::Exp(u)
        | ExprKind::Neg(u) => componentwise(u, var),
        _ => false,
    }
}

/// Diagonal Jacobian of a vector expression when the element-wise diagonal
/// condition holds structurally; `None` otherwise.
pub fn detect_diagonal(e: &Expr, wrt: &Expr) -> Result<Option<Jacobian>, DiffError> {
    let (name, shape) = var_parts(wrt)?;
    let n = match shape {
        Shape::Vector(n) => n,
        Shape::Scalar => return Err(DiffError::ExpectedVector(format!("variable `{name}`"))),
    };
    let m = match e.shape() {
        Shape::Vector(m) => m,
        Shape::Scalar => return Err(DiffError::ExpectedVector("expression".into())),
    };
    check_var_shape(e, name, shape)?;
    if m != n || !componentwise(e, name) {
        return Ok(None);
    }
    let components = scalarize(e);
    let entries = components
        .iter()
        .enumerate()
        .map(|(i, comp)| simplify(&derive_component(comp, &component_var_name(name, i + 1))))
        .collect();
    Ok(Some(Jacobian::diagonal(entries)))
}

/// Always-dense Jacobian, independent of the diagonal analysis. Kept as a
/// separate path so the two can be cross-checked.
pub fn dense_jacobian(e: &Expr, wrt: &Expr) -> Result<Jacobian, DiffError> {
    let (name, shape) = var_parts(wrt)?;
    check_var_shape(e, name, shape)?;
    let components = scalarize(e);
    let col_vars: Vec<String> = match shape {
        Shape::Scalar => vec![name.to_string()],
        Shape::Vector(n) => (1..=n).map(|j| component_var_name(name, j)).collect(),
    };
    let grid = components
        .iter()
        .map(|comp| {
            col_vars
                .iter()
                .map(|v| simplify(&derive_component(comp, v)))
                .collect()
        })
        .collect();
    Ok(Jacobian::dense(grid))
}

/// Numerator-layout Jacobian of any expression with respect to any variable,
/// dispatching on the shapes: scalar/scalar, gradient row, column of
/// partials, or full matrix (diagonal when the element-wise condition holds).
pub fn jacobian(e: &Expr, wrt: &Expr) -> Result<Jacobian, DiffError> {
    let (_, shape) = var_parts(wrt)?;
    let j = match (e.shape(), shape) {
        (Shape::Scalar, Shape::Scalar) => Jacobian::scalar(derive_scalar(e, wrt)?),
        (Shape::Scalar, Shape::Vector(_)) => gradient(e, wrt)?,
        (Shape::Vector(_), Shape::Scalar) => scalar_expansion_partials(e, wrt)?,
        (Shape::Vector(_), Shape::Vector(_)) => match detect_diagonal(e, wrt)? {
            Some(diag) => diag,
            None => dense_jacobian(e, wrt)?,
        },
    };
    debug_assert_eq!(j.rows(), e.shape().len());
    debug_assert_eq!(j.cols(), shape.len());
    Ok(j)
}

/// Stack the gradients of several scalar expressions over a shared scalar
/// variable list into one m×n Jacobian (functions index rows).
pub fn jacobian_stack(exprs: &[Expr], vars: &[&str]) -> Result<Jacobian, DiffError> {
    if exprs.is_empty() {
        return Err(DiffError::ExpectedScalar("expression list".into()));
    }
    let grid = exprs
        .iter()
        .map(|e| {
            let g = gradient_scalars(e, vars)?;
            Ok((0..g.cols()).map(|j| g.entry(0, j)).collect())
        })
        .collect::<Result<Vec<Vec<Expr>>, DiffError>>()?;
    Ok(Jacobian::dense(grid))
}

/// Column (n×1 Jacobian) of partials of a vector expression with respect to
/// a scalar variable, e.g. the scalar being expanded.
pub fn scalar_expansion_partials(e: &Expr, wrt: &Expr) -> Result<Jacobian, DiffError> {
    let (name, shape) = var_parts(wrt)?;
    if !shape.is_scalar() {
        return Err(DiffError::ExpectedScalar(format!("variable `{name}`")));
    }
    if !e.shape().is_vector() {
        return Err(DiffError::ExpectedVector("expression".into()));
    }
    check_var_shape(e, name, shape)?;
    let entries = scalarize(e)
        .iter()
        .map(|comp| simplify(&derive_component(comp, name)))
        .collect();
    Ok(Jacobian::col_vector(entries))
}

/// Derivative of a `sum(...)` reduction: a gradient row for a vector
/// variable, a 1×1 Jacobian for a scalar variable.
pub fn sum_reduction_grad(e: &Expr, wrt: &Expr) -> Result<Jacobian, DiffError> {
    if !matches!(e.kind(), ExprKind::Sum(_)) {
        return Err(DiffError::ExpectedSum);
    }
    let (_, shape) = var_parts(wrt)?;
    match shape {
        Shape::Vector(_) => gradient(e, wrt),
        Shape::Scalar => Ok(Jacobian::scalar(derive_scalar(e, wrt)?)),
    }
}

/// Vector chain rule: the symbolic matrix product (∂f/∂g)·(∂g/∂x). A product
/// of diagonals stays diagonal (the single-variable chain rule per entry).
pub fn vector_chain(f_of_g: &Jacobian, g_of_x: &Jacobian) -> Result<Jacobian, DiffError> {
    if f_of_g.layout() != Layout::Numerator || g_of_x.layout() != Layout::Numerator {
        return Err(DiffError::LayoutMismatch);
    }
    if f_of_g.cols() != g_of_x.rows() {
        return Err(DiffError::DimensionMismatch(f_of_g.cols(), g_of_x.rows()));
    }
    let (m, k, n) = (f_of_g.rows(), f_of_g.cols(), g_of_x.cols());
    if let (JacRepr::Diagonal(a), JacRepr::Diagonal(b)) = (f_of_g.repr(), g_of_x.repr()) {
        let entries = a
            .iter()
            .zip(b)
            .map(|(x, y)| simplify(&Expr::mul(x.clone(), y.clone()).expect("scalar")))
            .collect();
        return Ok(Jacobian::diagonal(entries));
    }
    let entry = |i: usize, j: usize| -> Expr {
        let terms: Vec<Expr> = (0..k)
            .map(|l| Expr::mul(f_of_g.entry(i, l), g_of_x.entry(l, j)).expect("scalar"))
            .collect();
        let sum = terms
            .into_iter()
            .reduce(|a, b| Expr::add(a, b).expect("scalar"))
            .expect("k >= 1");
        simplify(&sum)
    };
    let jac = match (m, n) {
        (1, 1) => Jacobian::scalar(entry(0, 0)),
        (1, _) => Jacobian::row_vector((0..n).map(|j| entry(0, j)).collect()),
        (_, 1) => Jacobian::col_vector((0..m).map(|i| entry(i, 0)).collect()),
        _ => Jacobian::dense(
            (0..m)
                .map(|i| (0..n).map(|j| entry(i, j)).collect())
                .collect(),
        ),
    };
    Ok(jac)
}

/// Total derivative df/dx of a scalar expression written over `x` and
/// topologically ordered scalar intermediates `(uᵢ, defining expression)`:
/// duᵢ/dx is accumulated over every path, the chain is summed into
/// ∂f/∂x + Σ (∂f/∂uᵢ)(duᵢ/dx), and the intermediates are substituted back.
pub fn total_derivative(
    f: &Expr,
    wrt: &Expr,
    intermediates: &[(String, Expr)],
) -> Result<Expr, DiffError> {
    let (x, shape) = var_parts(wrt)?;
    if !shape.is_scalar() {
        return Err(DiffError::ExpectedScalar(format!("variable `{x}`")));
    }
    if !f.shape().is_scalar() {
        return Err(DiffError::ExpectedScalar("expression".into()));
    }
    for (i, (name, def)) in intermediates.iter().enumerate() {
        if !def.shape().is_scalar() {
            return Err(DiffError::ExpectedScalar(format!("definition of `{name}`")));
        }
        // A definition may reference x and strictly earlier intermediates.
        for (later, _) in &intermediates[i..] {
            if !def.is_free_of(later) {
                return Err(DiffError::CyclicDefinition(name.clone()));
            }
        }
    }

    // du_i/dx in order, each a total derivative over the earlier ones.
    let mut dudx: Vec<Expr> = Vec::with_capacity(intermediates.len());
    for (i, (_, def)) in intermediates.iter().enumerate() {
        let mut total = derive_component(def, x);
        for (j, (uj, _)) in intermediates[..i].iter().enumerate() {
            let partial = derive_component(def, uj);
            let contribution = Expr::mul(partial, dudx[j].clone()).expect("scalar");
            total = Expr::add(total, contribution).expect("scalar");
        }
        dudx.push(simplify(&total));
    }

    let mut result = derive_component(f, x);
    for (i, (ui, _)) in intermediates.iter().enumerate() {
        let partial = derive_component(f, ui);
        let contribution = Expr::mul(partial, dudx[i].clone()).expect("scalar");
        result = Expr::add(result, contribution).expect("scalar");
    }
    // Substitute definitions back, innermost references last.
    for (name, def) in intermediates.iter().rev() {
        result = result
            .substitute(name, def)
            .map_err(|_| DiffError::VariableShapeConflict(name.clone()))?;
    }
    Ok(simplify(&result))
}
