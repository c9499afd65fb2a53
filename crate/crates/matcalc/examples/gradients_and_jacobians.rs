//! Gradients of scalar functions and Jacobians of stacked functions, in
//! numerator layout.
//!
//! ```bash
//! cargo run --example gradients_and_jacobians
//! ```

use matcalc::diff::{gradient_scalars, jacobian, jacobian_stack, transpose_layout};
use matcalc::parse::{parse, VarDecls};
use matcalc::Expr;

fn main() {
    let decls = VarDecls::new();

    // A gradient organizes all partials of one scalar function into a row.
    let f = parse("3*x^2*y", &decls).unwrap();
    let g = parse("2*x + y^8", &decls).unwrap();
    println!("grad f = {}", gradient_scalars(&f, &["x", "y"]).unwrap());
    println!("grad g = {}", gradient_scalars(&g, &["x", "y"]).unwrap());

    // Stacking the gradients of several functions gives the Jacobian:
    // functions index rows, inputs index columns.
    let j = jacobian_stack(&[f, g], &["x", "y"]).unwrap();
    println!("\nJacobian of (f, g) over (x, y):\n{j}");

    // The denominator-layout convention is the transpose.
    let t = transpose_layout(&j);
    println!("\nSame Jacobian in denominator layout:\n{t}");

    // The Jacobian of the identity function is the identity matrix.
    let x = Expr::vector_var("x", 4).unwrap();
    println!(
        "\nJacobian of the identity on a 4-vector: {}",
        jacobian(&x, &x).unwrap()
    );
}
