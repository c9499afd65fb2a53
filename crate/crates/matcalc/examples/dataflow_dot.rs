//! Exporting an expression's dataflow graph as Graphviz DOT.
//!
//! ```bash
//! cargo run --example dataflow_dot > graph.dot
//! dot -Tpng graph.dot -o graph.png   # with graphviz installed
//! ```

use matcalc::parse::{parse, VarDecls};
use matcalc::tape::lower;

fn main() {
    // x + x^2 has two paths from x to the result; both edges show up.
    let decls = VarDecls::new();
    let e = parse("x + x^2", &decls).unwrap();
    print!("{}", lower(&e).to_dot());
}
