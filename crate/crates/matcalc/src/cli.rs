//! Command-line front end.
//!
//! Exit status contract: 0 on success (including a passing check), 1 when a
//! gradient check fails or training diverges, 2 on usage, parse, or I/O
//! errors.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::canon::canonical;
use crate::diff::{derive_scalar, gradient, gradient_scalars, jacobian};
use crate::eval::{check, eval, format_sig12, CheckTolerances, Env, Value, DEFAULT_FD_STEP};
use crate::expr::Expr;
use crate::neuron::{synthetic_fixture, train, Dataset, TrainConfig, TrainError};
use crate::parse::{parse, pretty_print, VarDecls};
use crate::tape::{lower, symbolic_backsub};

#[derive(Parser)]
#[command(
    name = "matcalc",
    about = "Symbolic vector calculus with numeric cross-checks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the expression-taking commands.
#[derive(Args)]
struct ExprArgs {
    /// Expression text, e.g. "sum(w (*) x) + b"
    expr: String,
    /// Declare a vector variable as NAME:LEN (repeatable)
    #[arg(long = "vec", value_name = "NAME:LEN")]
    vecs: Vec<String>,
}

#[derive(Args)]
struct BindArgs {
    /// Bind a variable as NAME=VALUE or NAME=[v1,v2,…] (repeatable)
    #[arg(long = "bind", value_name = "NAME=VALUE")]
    binds: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Symbolic derivative with respect to one scalar variable
    Diff {
        #[command(flatten)]
        expr: ExprArgs,
        /// Variable to differentiate by
        #[arg(long)]
        wrt: String,
    },
    /// Gradient over a vector variable or a comma-separated scalar list
    Grad {
        #[command(flatten)]
        expr: ExprArgs,
        /// Vector variable, or scalars like "x,y"
        #[arg(long)]
        wrt: String,
    },
    /// Jacobian with respect to one variable
    Jacobian {
        #[command(flatten)]
        expr: ExprArgs,
        #[arg(long)]
        wrt: String,
    },
    /// Evaluate an expression under bindings
    Eval {
        #[command(flatten)]
        expr: ExprArgs,
        #[command(flatten)]
        bind: BindArgs,
    },
    /// Compare the symbolic Jacobian against central finite differences
    Check {
        #[command(flatten)]
        expr: ExprArgs,
        #[arg(long)]
        wrt: String,
        #[command(flatten)]
        bind: BindArgs,
        /// Base finite-difference step (scaled per component)
        #[arg(long, default_value_t = DEFAULT_FD_STEP)]
        h: f64,
        #[arg(long = "tol-abs", default_value_t = 1e-7)]
        tol_abs: f64,
        #[arg(long = "tol-rel", default_value_t = 1e-4)]
        tol_rel: f64,
    },
    /// Lower to intermediate variables and print each binding with its
    /// local partials
    Tape {
        #[command(flatten)]
        expr: ExprArgs,
        /// Also print the back-substituted symbolic derivative
        #[arg(long)]
        wrt: Option<String>,
    },
    /// Export the dataflow graph as Graphviz DOT
    Dot {
        #[command(flatten)]
        expr: ExprArgs,
        /// Output path (stdout when omitted)
        #[arg(short = 'o', value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Train the single-neuron model and print the loss trace
    Train {
        /// Dataset CSV with header x1,…,xn,y
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        /// Generate the synthetic fixture with this seed instead of --data
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        /// Train the folded weight vector [w, b] on augmented inputs
        #[arg(long = "fold-bias")]
        fold_bias: bool,
    },
}

#[derive(Debug)]
struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

fn parse_decls(flags: &[String]) -> Result<VarDecls, Usage> {
    let mut decls = VarDecls::new();
    for flag in flags {
        let (name, len) = flag
            .split_once(':')
            .ok_or_else(|| Usage(format!("--vec takes NAME:LEN, got `{flag}`")))?;
        let len: usize = len
            .parse()
            .map_err(|_| Usage(format!("bad vector length in `{flag}`")))?;
        if name.is_empty() || len == 0 {
            return Err(Usage(format!("bad vector declaration `{flag}`")));
        }
        decls.declare_vector(name, len);
    }
    Ok(decls)
}

fn parse_bindings(flags: &[String], decls: &VarDecls) -> Result<Env, Usage> {
    let mut env = Env::new();
    for flag in flags {
        let (name, value) = flag
            .split_once('=')
            .ok_or_else(|| Usage(format!("--bind takes NAME=VALUE, got `{flag}`")))?;
        let value = value.trim();
        let bound = if let Some(inner) = value.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| Usage(format!("unterminated vector in `{flag}`")))?;
            let parts: Result<Vec<f64>, _> =
                inner.split(',').map(|p| p.trim().parse::<f64>()).collect();
            Value::Vector(parts.map_err(|_| Usage(format!("bad vector literal in `{flag}`")))?)
        } else {
            Value::Scalar(
                value
                    .parse()
                    .map_err(|_| Usage(format!("bad number in `{flag}`")))?,
            )
        };
        let declared = decls.shape_of(name);
        if bound.shape() != declared {
            return Err(Usage(format!(
                "binding for `{name}` is {} but the variable is {}",
                bound.shape(),
                declared
            )));
        }
        env.bind(name, bound);
    }
    Ok(env)
}

fn wrt_var(name: &str, decls: &VarDecls) -> Result<Expr, Usage> {
    Ok(Expr::var(name.trim(), decls.shape_of(name.trim()))?)
}

fn show_canonical(e: &Expr) -> String {
    pretty_print(&canonical(e))
}

fn cmd_diff(args: &ExprArgs, wrt: &str) -> Result<i32, Usage> {
    let decls = parse_decls(&args.vecs)?;
    let e = parse(&args.expr, &decls)?;
    let v = wrt_var(wrt, &decls)?;
    let de = derive_scalar(&e, &v)?;
    println!("{}", show_canonical(&de));
    Ok(0)
}

fn cmd_grad(args: &ExprArgs, wrt: &str) -> Result<i32, Usage> {
    let decls = parse_decls(&args.vecs)?;
    let e = parse(&args.expr, &decls)?;
    let names: Vec<&str> = wrt.split(',').map(str::trim).collect();
    let j = if names.len() == 1 && decls.shape_of(names[0]).is_vector() {
        gradient(&e, &wrt_var(names[0], &decls)?)?
    } else {
        for name in &names {
            if decls.shape_of(name).is_vector() {
                return Err(Usage(format!(
                    "`{name}` is a vector; a scalar list cannot mix vectors"
                )));
            }
        }
        gradient_scalars(&e, &names)?
    };
    println!("{}", j.render());
    Ok(0)
}

fn cmd_jacobian(args: &ExprArgs, wrt: &str) -> Result<i32, Usage> {
    let decls = parse_decls(&args.vecs)?;
    let e = parse(&args.expr, &decls)?;
    let v = wrt_var(wrt, &decls)?;
    let j = jacobian(&e, &v)?;
    println!("{}", j.render());
    Ok(0)
}

fn cmd_eval(args: &ExprArgs, bind: &BindArgs) -> Result<i32, Usage> {
    let decls = parse_decls(&args.vecs)?;
    let e = parse(&args.expr, &decls)?;
    let env = parse_bindings(&bind.binds, &decls)?;
    let v = eval(&e, &env)?;
    println!("{v}");
    Ok(0)
}

fn cmd_check(
    args: &ExprArgs,
    wrt: &str,
    bind: &BindArgs,
    h: f64,
    tol_abs: f64,
    tol_rel: f64,
) -> Result<i32, Usage> {
    let decls = parse_decls(&args.vecs)?;
    let e = parse(&args.expr, &decls)?;
    let v = wrt_var(wrt, &decls)?;
    let env = parse_bindings(&bind.binds, &decls)?;
    let report = check(
        &e,
        &v,
        &env,
        h,
        CheckTolerances {
            abs: tol_abs,
            rel: tol_rel,
        },
    )?;
    print!("{}", report.render());
    Ok(if report.pass { 0 } else { 1 })
}

fn cmd_tape(args: &ExprArgs, wrt: &Option<String>) -> Result<i32, Usage> {
    let decls = parse_decls(&args.vecs)?;
    let e = parse(&args.expr, &decls)?;
    let tape = lower(&e);
    for line in tape.render_lines() {
        println!("{line}");
    }
    if let Some(name) = wrt {
        let v = wrt_var(name, &decls)?;
        let de = symbolic_backsub(&tape, &v)?;
        println!("d/d{} = {}", name.trim(), show_canonical(&de));
    }
    Ok(0)
}

fn cmd_dot(args: &ExprArgs, output: &Option<PathBuf>) -> Result<i32, Usage> {
    let decls = parse_decls(&args.vecs)?;
    let e = parse(&args.expr, &decls)?;
    let dot = lower(&e).to_dot();
    match output {
        Some(path) => fs::write(path, dot)
            .map_err(|err| Usage(format!("cannot write {}: {err}", path.display())))?,
        None => print!("{dot}"),
    }
    Ok(0)
}

fn cmd_train(
    data: &Option<PathBuf>,
    seed: Option<u64>,
    eta: f64,
    epochs: usize,
    fold_bias: bool,
) -> Result<i32, Usage> {
    let dataset = match (data, seed) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|err| Usage(format!("cannot read {}: {err}", path.display())))?;
            Dataset::from_csv_str(&text)?
        }
        (None, Some(seed)) => synthetic_fixture(seed),
        (None, None) => return Err(Usage("give --data PATH or --seed N".into())),
        (Some(_), Some(_)) => return Err(Usage("give only one of --data and --seed".into())),
    };
    let cfg = TrainConfig {
        eta,
        epochs,
        seed: seed.unwrap_or(0),
        fold_bias,
    };
    match train(&dataset, &cfg) {
        Ok(run) => {
            for (k, l) in run.losses.iter().enumerate() {
                println!("epoch {} loss {}", k + 1, format_sig12(*l));
            }
            let w = run
                .model
                .w
                .iter()
                .map(|v| format_sig12(*v))
                .collect::<Vec<_>>()
                .join(", ");
            println!("w = [{w}] b = {}", format_sig12(run.model.b));
            Ok(0)
        }
        Err(TrainError::Diverged { epoch }) => {
            eprintln!("error: loss diverged at epoch {epoch}");
            Ok(1)
        }
        Err(TrainError::Neuron(e)) => Err(e.into()),
    }
}

/// Parse arguments and dispatch; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Diff { expr, wrt } => cmd_diff(expr, wrt),
        Command::Grad { expr, wrt } => cmd_grad(expr, wrt),
        Command::Jacobian { expr, wrt } => cmd_jacobian(expr, wrt),
        Command::Eval { expr, bind } => cmd_eval(expr, bind),
        Command::Check {
            expr,
            wrt,
            bind,
            h,
            tol_abs,
            tol_rel,
        } => cmd_check(expr, wrt, bind, *h, *tol_abs, *tol_rel),
        Command::Tape { expr, wrt } => cmd_tape(expr, wrt),
        Command::Dot { expr, output } => cmd_dot(expr, output),
        Command::Train {
            data,
            seed,
            eta,
            epochs,
            fold_bias,
        } => cmd_train(data, *seed, *eta, *epochs, *fold_bias),
    };
    match result {
        Ok(code) => code,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
