//! Jacobians of element-wise vector operators and the diagonal condition.
//!
//! When the i-th output component depends on at most the i-th component of
//! the differentiation variable, the n×n Jacobian is diagonal and the
//! engine detects that structurally. Expressions that mix components fall
//! back to the dense form.
//!
//! ```bash
//! cargo run --example elementwise_jacobians
//! ```

use matcalc::diff::{detect_diagonal, jacobian};
use matcalc::parse::{parse, VarDecls};
use matcalc::Expr;

fn main() {
    let mut decls = VarDecls::new();
    decls.declare_vector("w", 3).declare_vector("x", 3);
    let w = Expr::vector_var("w", 3).unwrap();
    let x = Expr::vector_var("x", 3).unwrap();

    println!("op       d/dw                          d/dx");
    for src in ["w + x", "w - x", "w (*) x", "w (/) x"] {
        let e = parse(src, &decls).unwrap();
        let jw = jacobian(&e, &w).unwrap();
        let jx = jacobian(&e, &x).unwrap();
        println!("{:<8} {:<29} {}", src, jw.render(), jx.render());
    }

    // Broadcast unaries keep the diagonal structure.
    let e = parse("max0(w)", &decls).unwrap();
    println!("\nd max0(w)/dw = {}", jacobian(&e, &w).unwrap());

    // sum(w) * x breaks the diagonal condition: every output depends on
    // every w_j, so the detector declines and the dense path runs.
    let e = parse("sum(w) * x", &decls).unwrap();
    assert!(detect_diagonal(&e, &w).unwrap().is_none());
    println!(
        "\nd (sum(w) * x)/dw is dense:\n{}",
        jacobian(&e, &w).unwrap()
    );
}
