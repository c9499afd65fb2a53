//! The scalar derivative rules, applied symbolically.
//!
//! ```bash
//! cargo run --example scalar_rules
//! ```

use matcalc::canon::canonical;
use matcalc::diff::derive_scalar;
use matcalc::parse::{parse, pretty_print, VarDecls};
use matcalc::Expr;

fn main() {
    let decls = VarDecls::new();
    let x = Expr::scalar_var("x");

    let rules = [
        ("constant", "99"),
        ("constant multiple", "3*x"),
        ("power", "x^3"),
        ("sum", "x^2 + 3*x"),
        ("difference", "x^2 - 3*x"),
        ("product", "x^2*x"),
        ("chain", "ln(x^2)"),
        ("distribute a constant", "9*(x + x^2)"),
    ];

    println!("{:<24} {:<14} d/dx", "rule", "f(x)");
    for (rule, src) in rules {
        let f = parse(src, &decls).unwrap();
        let df = derive_scalar(&f, &x).unwrap();
        println!("{:<24} {:<14} {}", rule, src, pretty_print(&canonical(&df)));
    }

    // Partial derivatives treat every other variable as a constant.
    let f = parse("3*x^2*y", &decls).unwrap();
    let y = Expr::scalar_var("y");
    println!();
    println!("f(x, y)     = {}", pretty_print(&f));
    println!(
        "df/dx       = {}",
        pretty_print(&canonical(&derive_scalar(&f, &x).unwrap()))
    );
    println!(
        "df/dy       = {}",
        pretty_print(&canonical(&derive_scalar(&f, &y).unwrap()))
    );
}
