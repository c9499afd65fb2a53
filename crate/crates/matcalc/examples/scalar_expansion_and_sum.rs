//! Broadcasting a scalar into a vector expression, and differentiating
//! through a sum reduction.
//!
//! ```bash
//! cargo run --example scalar_expansion_and_sum
//! ```

use matcalc::diff::{jacobian, scalar_expansion_partials, sum_reduction_grad};
use matcalc::parse::{parse, VarDecls};
use matcalc::Expr;

fn main() {
    let mut decls = VarDecls::new();
    decls.declare_vector("x", 4);
    let x = Expr::vector_var("x", 4).unwrap();
    let z = Expr::scalar_var("z");

    // x + z and x * z broadcast the scalar z across the vector.
    for src in ["x + z", "x * z"] {
        let e = parse(src, &decls).unwrap();
        println!("{src}:");
        println!("  d/dx = {}", jacobian(&e, &x).unwrap());
        println!("  d/dz = {}", scalar_expansion_partials(&e, &z).unwrap());
    }

    // The gradient of a sum moves the derivative inside the reduction.
    println!("\nsum reductions:");
    let e = parse("sum(x)", &decls).unwrap();
    println!(
        "  d sum(x)/dx     = {}",
        sum_reduction_grad(&e, &x).unwrap()
    );
    let e = parse("sum(x * z)", &decls).unwrap();
    println!(
        "  d sum(x*z)/dx   = {}",
        sum_reduction_grad(&e, &x).unwrap()
    );
    println!(
        "  d sum(x*z)/dz   = {}",
        sum_reduction_grad(&e, &z).unwrap()
    );
}
