//! Lowering to intermediate variables and differentiating three ways:
//! forward sweep, reverse sweep, and symbolic back-substitution.
//!
//! ```bash
//! cargo run --example tape_autodiff
//! ```

use matcalc::canon::canonical;
use matcalc::eval::Env;
use matcalc::parse::{parse, pretty_print, VarDecls};
use matcalc::tape::{forward_mode, lower, reverse_mode, symbolic_backsub};
use matcalc::Expr;

fn main() {
    let decls = VarDecls::new();
    let e = parse("ln(sin(x^3)^2)", &decls).unwrap();
    let tape = lower(&e);

    println!("tape for {}:", pretty_print(&e));
    for line in tape.render_lines() {
        println!("  {line}");
    }

    let mut env = Env::new();
    env.bind_scalar("x", 0.5);
    let (value, tangent) = forward_mode(&tape, &env, "x", 0).unwrap();
    println!("\nforward sweep at x = 0.5: value {value}, dy/dx {tangent}");

    let sweep = reverse_mode(&tape, &env).unwrap();
    println!("reverse sweep adjoint of x: {}", sweep.adjoints["x"]);

    let x = Expr::scalar_var("x");
    let sym = symbolic_backsub(&tape, &x).unwrap();
    println!(
        "back-substituted derivative: {}",
        pretty_print(&canonical(&sym))
    );

    // Reverse mode shines with many inputs: one sweep yields every partial.
    let mut decls = VarDecls::new();
    decls.declare_vector("w", 3).declare_vector("x", 3);
    let affine = parse("sum(w (*) x) + b", &decls).unwrap();
    let tape = lower(&affine);
    let mut env = Env::new();
    env.bind_vector("w", vec![0.2, -0.4, 0.9])
        .bind_vector("x", vec![1.5, 2.5, -3.0])
        .bind_scalar("b", 0.7);
    let sweep = reverse_mode(&tape, &env).unwrap();
    println!("\nadjoints of sum(w (*) x) + b:");
    for (name, adjoint) in &sweep.adjoints {
        println!("  d/d{name} = {adjoint}");
    }
}
