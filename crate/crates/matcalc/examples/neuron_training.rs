//! The rectified linear unit end to end: closed-form gradients, their
//! agreement with reverse-mode autodiff, bias folding, and training.
//!
//! ```bash
//! cargo run --example neuron_training
//! ```

use matcalc::eval::Env;
use matcalc::neuron::{
    activation, activation_grad, augment_input, fold_bias, loss, loss_gradients, synthetic_fixture,
    train, NeuronModel, TrainConfig,
};
use matcalc::tape::{lower, reverse_mode};

fn main() {
    let model = NeuronModel::new(vec![1.0, -1.0], 0.0).unwrap();
    let active = [2.0, 1.0];
    let inactive = [1.0, 2.0];
    println!(
        "activation(w=[1,-1], b=0, x=[2,1]) = {}",
        activation(&model, &active).unwrap()
    );
    println!(
        "activation(w=[1,-1], b=0, x=[1,2]) = {}",
        activation(&model, &inactive).unwrap()
    );
    println!(
        "gradient in the active case:   {:?}",
        activation_grad(&model, &active).unwrap()
    );
    println!(
        "gradient in the inactive case: {:?}",
        activation_grad(&model, &inactive).unwrap()
    );

    // Closed-form loss gradients match reverse-mode autodiff over the loss
    // expression built from the same dataset.
    let data = synthetic_fixture(42);
    let model = NeuronModel::new(vec![0.3, -0.2, 0.8], 0.1).unwrap();
    let (gw, gb) = loss_gradients(&model, &data).unwrap();
    let tape = lower(&data.loss_expr());
    let mut env = Env::new();
    env.bind_vector("w", model.w.clone());
    env.bind_scalar("b", model.b);
    let sweep = reverse_mode(&tape, &env).unwrap();
    println!("\nclosed-form dC/dw = {gw:?}");
    println!("reverse-mode dC/dw = {}", sweep.adjoints["w"]);
    println!(
        "closed-form dC/db = {gb}, reverse-mode {}",
        sweep.adjoints["b"]
    );

    // Folding the bias into the weights leaves the affine value unchanged.
    let folded = fold_bias(&model);
    let x = &data.inputs()[0];
    let xh = augment_input(x);
    let z_folded: f64 = folded.iter().zip(&xh).map(|(a, b)| a * b).sum();
    let z_plain: f64 = model.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + model.b;
    println!("\nfolded vs plain pre-activation: {z_folded} vs {z_plain}");

    // Train on the synthetic fixture; the targets are exactly linear in the
    // inputs, so the loss walks down to (numerically) zero.
    let cfg = TrainConfig::default();
    let run = train(&data, &cfg).unwrap();
    println!(
        "\ntraining on the seed-42 fixture ({} epochs, eta {}):",
        cfg.epochs, cfg.eta
    );
    for k in [0usize, 9, 49, 99, 199] {
        println!("  epoch {:>3}: loss {:.6e}", k + 1, run.losses[k]);
    }
    println!("final model: w = {:?}, b = {}", run.model.w, run.model.b);
    println!("final loss: {:.3e}", loss(&run.model, &data).unwrap());
}
