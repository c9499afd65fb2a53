//! Parsing, shapes, simplification, and evaluation of expressions.
//!
//! ```bash
//! cargo run --example expression_basics
//! ```

use matcalc::eval::{eval, Env};
use matcalc::expr::simplify;
use matcalc::parse::{parse, pretty_print, VarDecls};

fn main() {
    // Identifiers are scalars unless declared as vectors.
    let mut decls = VarDecls::new();
    decls.declare_vector("w", 3).declare_vector("x", 3);

    let e = parse("sum(w (*) x) + b", &decls).unwrap();
    println!("expression: {}", pretty_print(&e));
    println!("shape: {}", e.shape());
    println!("free variables:");
    for (name, shape) in e.free_vars().unwrap() {
        println!("  {name}: {shape}");
    }

    let mut env = Env::new();
    env.bind_vector("w", vec![1.0, 2.0, -0.5])
        .bind_vector("x", vec![3.0, 4.0, 2.0])
        .bind_scalar("b", 0.25);
    println!("value: {}", eval(&e, &env).unwrap());

    // Simplification folds constants and strips 0/1 identities without
    // changing values anywhere.
    for src in [
        "x_s + 0",
        "1 * x_s",
        "x_s^1 + 2^3",
        "-(-x_s)",
        "sum(w (*) x) * 1",
    ] {
        let e = parse(src, &decls).unwrap();
        println!("simplify({src}) = {}", pretty_print(&simplify(&e)));
    }

    // Shape errors are caught at parse time, with a position.
    let err = parse("w (*) y", &VarDecls::new()).unwrap_err();
    println!("\nparsing `w (*) y` with scalars only fails: {err}");
}
