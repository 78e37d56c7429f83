//! Central-difference check of a dilated conv layer's input gradient.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mirrornet::nn::{Activation, Conv1dLayer};
use mirrornet::tensor::{GradCheck, Tensor};

fn main() -> mirrornet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layer = Conv1dLayer::<f64>::new("c", 4, 3, 3, 4, Activation::Relu, &mut rng);
    let x = Tensor::from_vec(vec![1, 4, 20], (0..80).map(|i| ((i * 37 % 17) as f64 - 8.0) / 8.0).collect())?;
    let (w, b) = (layer.weight.clone(), layer.bias.clone());
    let report = GradCheck::new(1e-6, 1e-4).run(&x, |t, v| layer.forward(v, t.constant(&w), t.constant(&b))?.mean())?;
    println!(
        "checked {} coordinates: max rel err {:.2e}, max abs err {:.2e}, pass {}",
        report.checked, report.max_rel_err, report.max_abs_err, report.pass
    );
    Ok(())
}
