//! The three chain rules: single-variable, total-derivative, and vector.
//!
//! ```bash
//! cargo run --example chain_rules
//! ```

use matcalc::canon::canonical;
use matcalc::diff::{derive_scalar, total_derivative, vector_chain, Jacobian};
use matcalc::parse::{parse, pretty_print, VarDecls};
use matcalc::Expr;

fn main() {
    let decls = VarDecls::new();
    let x = Expr::scalar_var("x");
    let show = |e: &Expr| pretty_print(&canonical(e));

    // Single-variable chain rule on nested functions.
    for src in ["sin(x^2)", "ln(sin(x^3)^2)"] {
        let e = parse(src, &decls).unwrap();
        println!("d/dx {src} = {}", show(&derive_scalar(&e, &x).unwrap()));
    }

    // Total derivative over explicit intermediate variables: every path
    // from x to the result contributes one summand.
    println!();
    let u1 = ("u1".to_string(), parse("x^2", &decls).unwrap());
    for (label, f) in [("x + u1", "x + u1"), ("x * u1", "x * u1")] {
        let e = parse(f, &decls).unwrap();
        let d = total_derivative(&e, &x, std::slice::from_ref(&u1)).unwrap();
        println!("d/dx [{label} with u1 = x^2] = {}", show(&d));
    }
    let u2 = ("u2".to_string(), parse("x + u1", &decls).unwrap());
    let f = parse("sin(u2)", &decls).unwrap();
    let d = total_derivative(&f, &x, &[u1, u2]).unwrap();
    println!("d/dx [sin(u2), u2 = x + u1, u1 = x^2] = {}", show(&d));

    // Vector chain rule: compose Jacobians by symbolic matrix product.
    // f = (ln g1, sin g2) over g = (x^2, 3x).
    println!();
    let j_f = Jacobian::diagonal(vec![
        Expr::pow(Expr::scalar_var("g1"), -1.0).unwrap(),
        Expr::cos(Expr::scalar_var("g2")),
    ]);
    let j_g = Jacobian::col_vector(vec![parse("2*x", &decls).unwrap(), Expr::constant(3.0)]);
    let chained = vector_chain(&j_f, &j_g).unwrap();
    println!("df/dg · dg/dx before substitution = {chained}");
    let top = chained
        .entry(0, 0)
        .substitute("g1", &parse("x^2", &decls).unwrap())
        .unwrap();
    let bottom = chained
        .entry(1, 0)
        .substitute("g2", &parse("3*x", &decls).unwrap())
        .unwrap();
    println!(
        "after substituting g = (x^2, 3x): [{}; {}]",
        show(&top),
        show(&bottom)
    );
}
