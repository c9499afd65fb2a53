//! A single rectified linear unit: closed-form gradients and training.
//!
//! The model computes `max(0, w·x + b)`; the loss is mean squared error over
//! a dataset. `loss_gradients` is the closed form with the case split
//! applied per sample inside the sum — sample i contributes
//! `(2/N)·eᵢ·xᵢᵀ` and `(2/N)·eᵢ` with `eᵢ = w·xᵢ + b − yᵢ` when its
//! pre-activation is positive, and nothing when it is non-positive (the
//! boundary sits in the inactive branch, like the activation derivative).
//!
//! [`train`] runs gradient descent from `w = 0, b = 0`, updating one sample
//! at a time in index order (the plain stochastic-gradient recurrence), and
//! treats a pre-activation of exactly zero as active in its update rule.
//! Starting from the all-zero model every sample sits exactly on the kink;
//! under the inactive-boundary convention the update would vanish
//! identically and training could never leave the origin.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq)]
pub enum NeuronError {
    ShapeMismatch { expected: usize, got: usize },
    EmptyModel,
    EmptyDataset,
    NonFinite(String),
    InvalidEta(f64),
}

impl fmt::Display for NeuronError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeuronError::ShapeMismatch { expected, got } => {
                write!(f, "expected input of length {expected}, got {got}")
            }
            NeuronError::EmptyModel => write!(f, "weight vector must have at least one entry"),
            NeuronError::EmptyDataset => write!(f, "dataset must have at least one sample"),
            NeuronError::NonFinite(what) => write!(f, "{what} must be finite"),
            NeuronError::InvalidEta(eta) => write!(f, "learning rate must be positive, got {eta}"),
        }
    }
}

impl std::error::Error for NeuronError {}

/// Weights and bias of one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl NeuronModel {
    pub fn new(w: Vec<f64>, b: f64) -> Result<NeuronModel, NeuronError> {
        if w.is_empty() {
            return Err(NeuronError::EmptyModel);
        }
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(NeuronError::NonFinite("model parameter".into()));
        }
        Ok(NeuronModel { w, b })
    }

    pub fn zeros(n: usize) -> NeuronModel {
        NeuronModel {
            w: vec![0.0; n],
            b: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Training data: N input vectors of equal length with scalar targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Dataset, NeuronError> {
        if inputs.is_empty() || targets.is_empty() {
            return Err(NeuronError::EmptyDataset);
        }
        let n = inputs[0].len();
        if n == 0 {
            return Err(NeuronError::EmptyModel);
        }
        if inputs.len() != targets.len() {
            return Err(NeuronError::ShapeMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        for x in &inputs {
            if x.len() != n {
                return Err(NeuronError::ShapeMismatch {
                    expected: n,
                    got: x.len(),
                });
            }
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Input dimension n.
    pub fn input_len(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

/// Trainer settings. `seed` drives synthetic-fixture generation only.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub eta: f64,
    pub epochs: usize,
    pub seed: u64,
    pub fold_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 0.05,
            epochs: 200,
            seed: 42,
            fold_bias: false,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(m: &NeuronModel, x: &[f64]) -> Result<(), NeuronError> {
    if m.len() != x.len() {
        return Err(NeuronError::ShapeMismatch {
            expected: m.len(),
            got: x.len(),
        });
    }
    Ok(())
}

/// `max(0, w·x + b)`.
pub fn activation(m: &NeuronModel, x: &[f64]) -> Result<f64, NeuronError> {
    check_len(m, x)?;
    Ok((dot(&m.w, x) + m.b).max(0.0))
}

/// Gradient of the activation: `(xᵀ, 1)` when `w·x + b > 0`, zeros when
/// `w·x + b ≤ 0` (the boundary is assigned to the inactive branch).
pub fn activation_grad(m: &NeuronModel, x: &[f64]) -> Result<(Vec<f64>, f64), NeuronError> {
    check_len(m, x)?;
    if dot(&m.w, x) + m.b > 0.0 {
        Ok((x.to_vec(), 1.0))
    } else {
        Ok((vec![0.0; x.len()], 0.0))
    }
}

/// Mean squared error `(1/N) Σ (yᵢ − max(0, w·xᵢ + b))²`.
pub fn loss(m: &NeuronModel, d: &Dataset) -> Result<f64, NeuronError> {
    let mut total = 0.0;
    for (x, y) in d.inputs.iter().zip(&d.targets) {
        let r = y - activation(m, x)?;
        total += r * r;
    }
    Ok(total / d.len() as f64)
}

/// Closed-form loss gradient `(∂C/∂w, ∂C/∂b)`. Sample i contributes
/// `(2/N)·eᵢ·xᵢᵀ` and `(2/N)·eᵢ` when `w·xᵢ + b > 0`, zero otherwise.
pub fn loss_gradients(m: &NeuronModel, d: &Dataset) -> Result<(Vec<f64>, f64), NeuronError> {
    let n = m.len();
    let mut gw = vec![0.0; n];
    let mut gb = 0.0;
    for (x, y) in d.inputs.iter().zip(&d.targets) {
        check_len(m, x)?;
        let z = dot(&m.w, x) + m.b;
        if z > 0.0 {
            let e = z - y;
            for (g, xj) in gw.iter_mut().zip(x) {
                *g += e * xj;
            }
            gb += e;
        }
    }
    let scale = 2.0 / d.len() as f64;
    for g in &mut gw {
        *g *= scale;
    }
    Ok((gw, gb * scale))
}

/// One full-batch descent step `w − η·∂C/∂w`, `b − η·∂C/∂b`.
pub fn sgd_step(m: &NeuronModel, d: &Dataset, eta: f64) -> Result<NeuronModel, NeuronError> {
    if eta <= 0.0 {
        return Err(NeuronError::InvalidEta(eta));
    }
    let (gw, gb) = loss_gradients(m, d)?;
    let w = m.w.iter().zip(&gw).map(|(w, g)| w - eta * g).collect();
    Ok(NeuronModel {
        w,
        b: m.b - eta * gb,
    })
}

/// Fold the bias into the weights: `ŵ = [wᵀ, b]ᵀ`.
pub fn fold_bias(m: &NeuronModel) -> Vec<f64> {
    let mut folded = m.w.clone();
    folded.push(m.b);
    folded
}

/// Augment an input to match a folded weight vector: `x̂ = [xᵀ, 1]`.
pub fn augment_input(x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    a.push(1.0);
    a
}

/// Split a folded weight vector back into `(w, b)`.
pub fn unfold_bias(folded: &[f64]) -> Result<NeuronModel, NeuronError> {
    if folded.len() < 2 {
        return Err(NeuronError::EmptyModel);
    }
    let (w, b) = folded.split_at(folded.len() - 1);
    NeuronModel::new(w.to_vec(), b[0])
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    Neuron(NeuronError),
    /// Loss became non-finite at the given epoch (1-based).
    Diverged {
        epoch: usize,
    },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Neuron(e) => write!(f, "{e}"),
            TrainError::Diverged { epoch } => write!(f, "loss diverged at epoch {epoch}"),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<NeuronError> for TrainError {
    fn from(e: NeuronError) -> Self {
        TrainError::Neuron(e)
    }
}

/// Final model and the loss after each epoch.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub model: NeuronModel,
    pub losses: Vec<f64>,
}

/// Gradient-descent training from the all-zero model, one update per sample
/// in index order per epoch. A pre-activation of exactly zero counts as
/// active here so the first update can leave the origin; see the module
/// docs. With `fold_bias` the folded vector ŵ is trained on augmented
/// inputs and unfolded for reporting — the arithmetic is identical, so the
/// loss trace matches the unfolded run exactly.
pub fn train(d: &Dataset, cfg: &TrainConfig) -> Result<TrainRun, TrainError> {
    if cfg.eta <= 0.0 {
        return Err(NeuronError::InvalidEta(cfg.eta).into());
    }
    let n = d.input_len();
    let mut losses = Vec::with_capacity(cfg.epochs);

    if cfg.fold_bias {
        let mut folded = vec![0.0; n + 1];
        let augmented: Vec<Vec<f64>> = d.inputs.iter().map(|x| augment_input(x)).collect();
        for epoch in 1..=cfg.epochs {
            for (xh, y) in augmented.iter().zip(&d.targets) {
                let z = dot(&folded, xh);
                if z >= 0.0 {
                    let e = z - y;
                    for (wj, xj) in folded.iter_mut().zip(xh) {
                        *wj -= cfg.eta * 2.0 * e * xj;
                    }
                }
            }
            let model = unfold_bias(&folded)?;
            let l = loss(&model, d)?;
            if !l.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            losses.push(l);
        }
        Ok(TrainRun {
            model: unfold_bias(&folded)?,
            losses,
        })
    } else {
        let mut model = NeuronModel::zeros(n);
        for epoch in 1..=cfg.epochs {
            for (x, y) in d.inputs.iter().zip(&d.targets) {
                let z = dot(&model.w, x) + model.b;
                if z >= 0.0 {
                    let e = z - y;
                    for (wj, xj) in model.w.iter_mut().zip(x) {
                        *wj -= cfg.eta * 2.0 * e * xj;
                    }
                    model.b -= cfg.eta * 2.0 * e;
                }
            }
            let l = loss(&model, d)?;
            if !l.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            losses.push(l);
        }
        Ok(TrainRun { model, losses })
    }
}

/// Reference parameters used to label the synthetic fixture.
pub const FIXTURE_W: [f64; 3] = [1.0, -0.5, 2.0];
pub const FIXTURE_B: f64 = 0.5;

/// Synthetic training fixture: 32 inputs drawn uniformly from [0.5, 1.5)³
/// with the given seed, targets exactly `w*·x + b*` with
/// `w* = [1, −0.5, 2]`, `b* = 0.5`. Every target's pre-activation is
/// positive, so the exact model is reachable by descent.
pub fn synthetic_fixture(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = FIXTURE_W.len();
    let mut inputs = Vec::with_capacity(32);
    let mut targets = Vec::with_capacity(32);
    for _ in 0..32 {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let y = dot(&FIXTURE_W, &x) + FIXTURE_B;
        inputs.push(x);
        targets.push(y);
    }
    Dataset::new(inputs, targets).expect("fixture is well-formed")
}

/// CSV parse failure with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for CsvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for CsvError {}

impl Dataset {
    /// Parse the dataset format: a header `x1,…,xn,y` followed by one row
    /// of 64-bit decimal literals per sample.
    pub fn from_csv_str(text: &str) -> Result<Dataset, CsvError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(CsvError {
            line: 1,
            message: "missing header".into(),
        })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[cols.len() - 1] != "y" {
            return Err(CsvError {
                line: 1,
                message: "header must be x1,…,xn,y".into(),
            });
        }
        let n = cols.len() - 1;
        for (i, col) in cols[..n].iter().enumerate() {
            if *col != format!("x{}", i + 1) {
                return Err(CsvError {
                    line: 1,
                    message: format!("column {} must be named x{}", i + 1, i + 1),
                });
            }
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != n + 1 {
                return Err(CsvError {
                    line: lineno,
                    message: format!("expected {} fields, got {}", n + 1, fields.len()),
                });
            }
            let mut row = Vec::with_capacity(n + 1);
            for field in &fields {
                let v: f64 = field.parse().map_err(|_| CsvError {
                    line: lineno,
                    message: format!("non-numeric field `{field}`"),
                })?;
                row.push(v);
            }
            let y = row.pop().expect("n + 1 fields");
            inputs.push(row);
            targets.push(y);
        }
        Dataset::new(inputs, targets).map_err(|e| CsvError {
            line: 1,
            message: e.to_string(),
        })
    }

    /// Serialize in the same format `from_csv_str` reads.
    pub fn to_csv(&self) -> String {
        let n = self.input_len();
        let mut out = String::new();
        for i in 1..=n {
            out.push_str(&format!("x{i},"));
        }
        out.push_str("y\n");
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            for v in x {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{y}\n"));
        }
        out
    }

    /// The loss as an expression over vector variable `w` and scalar `b`,
    /// for cross-checking the closed-form gradients against autodiff.
    pub fn loss_expr(&self) -> Expr {
        let n = self.input_len();
        let w = Expr::vector_var("w", n).expect("n >= 1");
        let b = Expr::scalar_var("b");
        let mut total: Option<Expr> = None;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            let xv = Expr::const_vec(x.clone()).expect("n >= 1");
            let z = Expr::add(Expr::dot(w.clone(), xv).expect("lengths match"), b.clone())
                .expect("scalar");
            let residual = Expr::sub(Expr::constant(*y), Expr::max0(z)).expect("scalar");
            let sq = Expr::pow(residual, 2.0).expect("scalar");
            total = Some(match total {
                None => sq,
                Some(t) => Expr::add(t, sq).expect("scalar"),
            });
        }
        Expr::mul(
            Expr::constant(1.0 / self.len() as f64),
            total.expect("dataset is nonempty"),
        )
        .expect("scalar")
    }
}
