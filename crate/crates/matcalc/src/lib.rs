//! Symbolic vector calculus with numeric cross-checks.
//!
//! The crate has three layers that share one expression type:
//!
//! - [`expr`] / [`parse`] / [`canon`]: shape-checked immutable expression
//!   trees, a small text format, and a canonical form for comparing and
//!   printing symbolic results.
//! - [`diff`]: symbolic derivatives — scalar rules, gradients, Jacobians in
//!   numerator layout with a diagonal fast path, scalar expansion, sum
//!   reduction, the vector chain rule, and total derivatives over
//!   intermediate variables.
//! - [`eval`] / [`tape`]: numeric evaluation, a central finite-difference
//!   oracle with a gradient-check report, and a tape (intermediate-variable)
//!   lowering with forward-mode, reverse-mode, and symbolic back-substitution.
//!
//! [`neuron`] applies the machinery to a single rectified linear unit: the
//! closed-form activation and loss gradients, a gradient-descent trainer,
//! and bias folding.
//!
//! Start with the runnable examples (`cargo run --example <name>`); each one
//! demonstrates a capability end to end. The `matcalc` binary exposes the
//! same operations on the command line.

pub mod canon;
pub mod cli;
pub mod diff;
pub mod eval;
pub mod expr;
pub mod neuron;
pub mod parse;
pub mod tape;

pub use canon::{canonical, canonical_eq};
pub use diff::{
    derive_scalar, detect_diagonal, gradient, gradient_scalars, jacobian, sum_reduction_grad,
    total_derivative, transpose_layout, vector_chain, DiffError, JacRepr, Jacobian, Layout,
};
pub use eval::{check, eval, eval_jacobian, finite_diff, CheckReport, Env, EvalError, Value};
pub use expr::{simplify, BuildError, Expr, ExprKind, Shape};
pub use neuron::{Dataset, NeuronModel, TrainConfig};
pub use parse::{parse, pretty_print, ParseError, ParseErrorKind, VarDecls};
pub use tape::{forward_mode, lower, reverse_mode, symbolic_backsub, Tape, TapeError};
