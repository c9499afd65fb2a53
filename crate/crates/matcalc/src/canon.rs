//! Canonical form for symbolic comparison and stable printing.
//!
//! Two expressions that differ only in the order or grouping of commutative
//! operands, in like terms (`x^2 + 2x^2` vs `3x^2`), or in mergeable powers
//! (`x * x^-2` vs `x^-1`) canonicalize to the same tree. This is stronger
//! than [`crate::expr::simplify`], which stays shallow and purely local;
//! canonical form is what derivative output is compared (and printed) in.
//!
//! Scalar sums are flattened into coefficient-keyed term lists and scalar
//! products into base/exponent factor lists. A power of a power collapses
//! only when the outer exponent is an integer, so `(u^a)^c == u^(a*c)`
//! holds pointwise in 64-bit arithmetic.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::expr::{Expr, ExprKind, Shape};

/// Total structural order over expressions; drives all canonical sorting.
fn cmp_expr(a: &Expr, b: &Expr) -> Ordering {
    fn rank(k: &ExprKind) -> u8 {
        match k {
            ExprKind::Const(_) => 0,
            ExprKind::Var(..) => 1,
            ExprKind::Pow(..) => 2,
            ExprKind::Sin(_) => 3,
            ExprKind::Cos(_) => 4,
            ExprKind::Ln(_) => 5,
            ExprKind::Exp(_) => 6,
            ExprKind::Max0(_) => 7,
            ExprKind::Step(_) => 8,
            ExprKind::Sum(_) => 9,
            ExprKind::Dot(..) => 10,
            ExprKind::ScalarExpand(..) => 11,
            ExprKind::Neg(_) => 12,
            ExprKind::MulScalar(..) => 13,
            ExprKind::Add(..) => 14,
            ExprKind::Sub(..) => 15,
            ExprKind::Hadamard(..) => 16,
            ExprKind::HadamardDiv(..) => 17,
            ExprKind::ConstVec(_) => 18,
        }
    }
    fn cmp_shape(a: Shape, b: Shape) -> Ordering {
        match (a, b) {
            (Shape::Scalar, Shape::Scalar) => Ordering::Equal,
            (Shape::Scalar, Shape::Vector(_)) => Ordering::Less,
            (Shape::Vector(_), Shape::Scalar) => Ordering::Greater,
            (Shape::Vector(n), Shape::Vector(m)) => n.cmp(&m),
        }
    }
    let (ka, kb) = (a.kind(), b.kind());
    rank(ka).cmp(&rank(kb)).then_with(|| match (ka, kb) {
        (ExprKind::Const(x), ExprKind::Const(y)) => x.total_cmp(y),
        (ExprKind::Var(n1, s1), ExprKind::Var(n2, s2)) => {
            n1.cmp(n2).then_with(|| cmp_shape(*s1, *s2))
        }
        (ExprKind::Pow(u1, k1), ExprKind::Pow(u2, k2)) => {
            cmp_expr(u1, u2).then_with(|| k1.total_cmp(k2))
        }
        (ExprKind::ScalarExpand(u1, n1), ExprKind::ScalarExpand(u2, n2)) => {
            cmp_expr(u1, u2).then_with(|| n1.cmp(n2))
        }
        (ExprKind::ConstVec(v1), ExprKind::ConstVec(v2)) => {
            v1.len().cmp(&v2.len()).then_with(|| {
                v1.iter()
                    .zip(v2)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
        }
        (ExprKind::Sin(u1), ExprKind::Sin(u2))
        | (ExprKind::Cos(u1), ExprKind::Cos(u2))
        | (ExprKind::Ln(u1), ExprKind::Ln(u2))
        | (ExprKind::Exp(u1), ExprKind::Exp(u2))
        | (ExprKind::Max0(u1), ExprKind::Max0(u2))
        | (ExprKind::Step(u1), ExprKind::Step(u2))
        | (ExprKind::Sum(u1), ExprKind::Sum(u2))
        | (ExprKind::Neg(u1), ExprKind::Neg(u2)) => cmp_expr(u1, u2),
        (ExprKind::Add(a1, b1), ExprKind::Add(a2, b2))
        | (ExprKind::Sub(a1, b1), ExprKind::Sub(a2, b2))
        | (ExprKind::MulScalar(a1, b1), ExprKind::MulScalar(a2, b2))
        | (ExprKind::Hadamard(a1, b1), ExprKind::Hadamard(a2, b2))
        | (ExprKind::HadamardDiv(a1, b1), ExprKind::HadamardDiv(a2, b2))
        | (ExprKind::Dot(a1, b1), ExprKind::Dot(a2, b2)) => {
            cmp_expr(a1, a2).then_with(|| cmp_expr(b1, b2))
        }
        _ => Ordering::Equal,
    })
}

/// Ordered wrapper so canonical Exprs can key a `BTreeMap`.
#[derive(Clone)]
struct OrdExpr(Expr);

impl PartialEq for OrdExpr {
    fn eq(&self, other: &Self) -> bool {
        cmp_expr(&self.0, &other.0) == Ordering::Equal
    }
}
impl Eq for OrdExpr {}
impl PartialOrd for OrdExpr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdExpr {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_expr(&self.0, &other.0)
    }
}

fn is_integer(x: f64) -> bool {
    x.fract() == 0.0 && x.is_finite()
}

/// Fold one canonical factor `inner^k` into a product accumulation.
fn push_pow(inner: Expr, k: f64, coeff: &mut f64, factors: &mut BTreeMap<OrdExpr, f64>) {
    match inner.kind() {
        ExprKind::Const(c) => {
            let v = c.powf(k);
            if v.is_finite() {
                *coeff *= v;
                return;
            }
        }
        // (u^a)^k == u^(a*k) requires an integer outer exponent.
        ExprKind::Pow(base, a) if is_integer(k) => {
            push_pow(base.clone(), a * k, coeff, factors);
            return;
        }
        ExprKind::Neg(v) if is_integer(k) => {
            if (k as i64) % 2 != 0 {
                *coeff = -*coeff;
            }
            push_pow(v.clone(), k, coeff, factors);
            return;
        }
        _ => {}
    }
    *factors.entry(OrdExpr(inner)).or_insert(0.0) += k;
}

/// Flatten a scalar expression into `coeff * prod(base^exp)`.
fn flatten_product(e: &Expr, coeff: &mut f64, factors: &mut BTreeMap<OrdExpr, f64>) {
    match e.kind() {
        ExprKind::MulScalar(a, b) => {
            flatten_product(a, coeff, factors);
            flatten_product(b, coeff, factors);
        }
        ExprKind::Neg(u) => {
            *coeff = -*coeff;
            flatten_product(u, coeff, factors);
        }
        ExprKind::Const(c) => *coeff *= c,
        ExprKind::Pow(u, k) => push_pow(canonical(u), *k, coeff, factors),
        _ => push_pow(canonical(e), 1.0, coeff, factors),
    }
}

fn rebuild_factors(factors: BTreeMap<OrdExpr, f64>) -> (f64, Option<Expr>) {
    let mut coeff = 1.0;
    let mut product: Option<Expr> = None;
    for (OrdExpr(base), exp) in factors {
        if exp == 0.0 {
            continue;
        }
        if let ExprKind::Const(c) = base.kind() {
            let v = c.powf(exp);
            if v.is_finite() {
                coeff *= v;
                continue;
            }
        }
        let piece = if exp == 1.0 {
            base
        } else {
            Expr::pow(base, exp).expect("product factors are scalar")
        };
        product = Some(match product {
            None => piece,
            Some(p) => Expr::mul(p, piece).expect("scalar product"),
        });
    }
    (coeff, product)
}

/// Canonicalize a scalar product; returns the signed coefficient and the
/// coefficient-free factor chain (None when the product is purely constant).
fn canonical_product(e: &Expr) -> (f64, Option<Expr>) {
    let mut coeff = 1.0;
    let mut factors = BTreeMap::new();
    flatten_product(e, &mut coeff, &mut factors);
    let (extra, product) = rebuild_factors(factors);
    (coeff * extra, product)
}

fn flatten_sum(e: &Expr, sign: f64, constant: &mut f64, terms: &mut BTreeMap<OrdExpr, f64>) {
    match e.kind() {
        ExprKind::Add(a, b) => {
            flatten_sum(a, sign, constant, terms);
            flatten_sum(b, sign, constant, terms);
        }
        ExprKind::Sub(a, b) => {
            flatten_sum(a, sign, constant, terms);
            flatten_sum(b, -sign, constant, terms);
        }
        ExprKind::Neg(u) => flatten_sum(u, -sign, constant, terms),
        ExprKind::Const(c) => *constant += sign * c,
        _ => {
            let (coeff, product) = canonical_product(e);
            match product {
                None => *constant += sign * coeff,
                // A coefficient times a lone sum distributes into the
                // enclosing sum (9·(1 + 2x) == 9 + 18x); products with more
                // than one factor stay factored.
                Some(core) if matches!(core.kind(), ExprKind::Add(..) | ExprKind::Sub(..)) => {
                    flatten_sum(&core, sign * coeff, constant, terms);
                }
                Some(core) => *terms.entry(OrdExpr(core)).or_insert(0.0) += sign * coeff,
            }
        }
    }
}

fn with_coeff(coeff: f64, core: Expr) -> Expr {
    debug_assert!(coeff > 0.0);
    if coeff == 1.0 {
        return core;
    }
    // Fold the coefficient in as the leftmost factor so the product prints
    // flat: 2 * x * cos(x^2), not 2 * (x * cos(x^2)).
    fn prepend(c: Expr, e: &Expr) -> Expr {
        match e.kind() {
            ExprKind::MulScalar(a, b) => {
                Expr::mul(prepend(c, a), b.clone()).expect("scalar product")
            }
            _ => Expr::mul(c, e.clone()).expect("scalar product"),
        }
    }
    prepend(Expr::constant(coeff), &core)
}

fn rebuild_sum(constant: f64, terms: BTreeMap<OrdExpr, f64>) -> Expr {
    let mut acc: Option<Expr> = if constant != 0.0 {
        Some(Expr::constant(constant))
    } else {
        None
    };
    for (OrdExpr(core), coeff) in terms {
        if coeff == 0.0 {
            continue;
        }
        let piece = with_coeff(coeff.abs(), core);
        acc = Some(match acc {
            None => {
                if coeff < 0.0 {
                    Expr::neg(piece)
                } else {
                    piece
                }
            }
            Some(a) => {
                if coeff < 0.0 {
                    Expr::sub(a, piece).expect("scalar sum")
                } else {
                    Expr::add(a, piece).expect("scalar sum")
                }
            }
        });
    }
    acc.unwrap_or_else(|| Expr::constant(0.0))
}

fn canonical_scalar_sum(e: &Expr) -> Expr {
    let mut constant = 0.0;
    let mut terms = BTreeMap::new();
    flatten_sum(e, 1.0, &mut constant, &mut terms);
    rebuild_sum(constant, terms)
}

fn sort_pair(a: Expr, b: Expr) -> (Expr, Expr) {
    if cmp_expr(&a, &b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    }
}

/// Deterministic canonical form. Numerically equal to the input wherever the
/// input is defined (power merging may extend the domain at isolated zeros,
/// e.g. `x * x^-2` → `x^-1`).
pub fn canonical(e: &Expr) -> Expr {
    if e.shape().is_scalar() {
        match e.kind() {
            ExprKind::Add(..)
            | ExprKind::Sub(..)
            | ExprKind::Neg(_)
            | ExprKind::MulScalar(..)
            | ExprKind::Pow(..)
            | ExprKind::Const(_) => return canonical_scalar_sum(e),
            _ => {}
        }
    }
    match e.kind() {
        ExprKind::Var(..) | ExprKind::Const(_) | ExprKind::ConstVec(_) => e.clone(),
        ExprKind::Sin(u) => Expr::sin(canonical(u)),
        ExprKind::Cos(u) => Expr::cos(canonical(u)),
        ExprKind::Ln(u) => Expr::ln(canonical(u)),
        ExprKind::Exp(u) => Expr::exp(canonical(u)),
        ExprKind::Max0(u) => Expr::max0(canonical(u)),
        ExprKind::Step(u) => Expr::step(canonical(u)),
        ExprKind::Sum(u) => Expr::sum(canonical(u)).expect("shape preserved"),
        ExprKind::ScalarExpand(u, n) => {
            Expr::scalar_expand(canonical(u), *n).expect("shape preserved")
        }
        ExprKind::Dot(a, b) => {
            let (a, b) = sort_pair(canonical(a), canonical(b));
            Expr::dot(a, b).expect("shape preserved")
        }
        // Vector-shaped arithmetic: canonicalize children, sort the
        // commutative ones. Scalar arithmetic never reaches here.
        ExprKind::Add(a, b) => {
            let (a, b) = sort_pair(canonical(a), canonical(b));
            Expr::add(a, b).expect("shape preserved")
        }
        ExprKind::Hadamard(a, b) => {
            let (a, b) = sort_pair(canonical(a), canonical(b));
            Expr::hadamard(a, b).expect("shape preserved")
        }
        ExprKind::Sub(a, b) => Expr::sub(canonical(a), canonical(b)).expect("shape preserved"),
        ExprKind::HadamardDiv(a, b) => {
            Expr::hadamard_div(canonical(a), canonical(b)).expect("shape preserved")
        }
        ExprKind::Neg(u) => Expr::neg(canonical(u)),
        ExprKind::MulScalar(..) | ExprKind::Pow(..) => unreachable!("scalar-only kinds"),
    }
}

/// Structural equality up to canonical form.
pub fn canonical_eq(a: &Expr, b: &Expr) -> bool {
    canonical(a) == canonical(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::scalar_var("x")
    }
    fn y() -> Expr {
        Expr::scalar_var("y")
    }

    #[test]
    fn commutative_orders_agree() {
        // 6yx == 6xy
        let a = Expr::mul(Expr::mul(Expr::constant(6.0), y()).unwrap(), x()).unwrap();
        let b = Expr::mul(Expr::mul(Expr::constant(6.0), x()).unwrap(), y()).unwrap();
        assert!(canonical_eq(&a, &b));
    }

    #[test]
    fn like_terms_merge() {
        // x^2 + 2x^2 == 3x^2
        let x2 = || Expr::pow(x(), 2.0).unwrap();
        let lhs = Expr::add(x2(), Expr::mul(Expr::constant(2.0), x2()).unwrap()).unwrap();
        let rhs = Expr::mul(Expr::constant(3.0), x2()).unwrap();
        assert!(canonical_eq(&lhs, &rhs));
    }

    #[test]
    fn powers_merge() {
        // x * x^-2 == x^-1, and (u^2)^-1 == u^-2
        let lhs = Expr::mul(x(), Expr::pow(x(), -2.0).unwrap()).unwrap();
        let rhs = Expr::pow(x(), -1.0).unwrap();
        assert!(canonical_eq(&lhs, &rhs));

        let sin = Expr::sin(x());
        let nested = Expr::pow(Expr::pow(sin.clone(), 2.0).unwrap(), -1.0).unwrap();
        let flat = Expr::pow(sin, -2.0).unwrap();
        assert!(canonical_eq(&nested, &flat));
    }

    #[test]
    fn fractional_outer_exponent_does_not_collapse() {
        // ((x)^2)^0.5 is |x|, not x; must stay nested.
        let nested = Expr::pow(Expr::pow(x(), 2.0).unwrap(), 0.5).unwrap();
        let c = canonical(&nested);
        assert!(matches!(c.kind(), ExprKind::Pow(inner, k)
            if *k == 0.5 && matches!(inner.kind(), ExprKind::Pow(..))));
    }

    #[test]
    fn idempotent() {
        let e = Expr::sub(
            Expr::mul(Expr::constant(2.0), Expr::pow(x(), 3.0).unwrap()).unwrap(),
            Expr::add(x(), Expr::constant(3.0)).unwrap(),
        )
        .unwrap();
        let once = canonical(&e);
        let twice = canonical(&once);
        assert_eq!(once, twice);
    }

    #[test]
    fn sign_hoists_to_neg() {
        // -1 * (w * x^-2) keeps a Neg wrapper, not a -1 coefficient.
        let w = Expr::scalar_var("w");
        let prod = Expr::mul(w, Expr::pow(x(), -2.0).unwrap()).unwrap();
        let neg = Expr::neg(prod.clone());
        let c = canonical(&neg);
        assert!(matches!(c.kind(), ExprKind::Neg(_)));
        assert!(canonical_eq(&c, &Expr::neg(canonical(&prod))));
    }
}
