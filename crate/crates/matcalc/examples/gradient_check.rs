//! Checking symbolic derivatives against the central finite-difference
//! oracle, including the kink-skipping policy at max0's corner.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use matcalc::eval::{check, CheckTolerances, Env, DEFAULT_FD_STEP};
use matcalc::parse::{parse, VarDecls};
use matcalc::Expr;

fn main() {
    let decls = VarDecls::new();
    let x = Expr::scalar_var("x");

    let e = parse("ln(sin(x^3)^2)", &decls).unwrap();
    let mut env = Env::new();
    env.bind_scalar("x", 0.5);
    let report = check(&e, &x, &env, DEFAULT_FD_STEP, CheckTolerances::default()).unwrap();
    println!("check d/dx ln(sin(x^3)^2) at x = 0.5:");
    print!("{}", report.render());

    // A vector case rides the diagonal fast path.
    let mut vdecls = VarDecls::new();
    vdecls.declare_vector("w", 3).declare_vector("x", 3);
    let e = parse("w (/) x", &vdecls).unwrap();
    let w = Expr::vector_var("w", 3).unwrap();
    let mut env = Env::new();
    env.bind_vector("w", vec![0.8, -1.1, 0.4])
        .bind_vector("x", vec![1.3, 0.7, 1.9]);
    let report = check(&e, &w, &env, DEFAULT_FD_STEP, CheckTolerances::default()).unwrap();
    println!("\ncheck d(w (/) x)/dw:");
    print!("{}", report.render());

    // Probing straight at the relu kink: the entry is reported but the
    // verdict ignores it, because no derivative exists there.
    let e = parse("max0(z)", &decls).unwrap();
    let z = Expr::scalar_var("z");
    let mut env = Env::new();
    env.bind_scalar("z", 0.0);
    let report = check(&e, &z, &env, DEFAULT_FD_STEP, CheckTolerances::default()).unwrap();
    println!("\ncheck d max0(z)/dz at the kink z = 0:");
    print!("{}", report.render());
}
