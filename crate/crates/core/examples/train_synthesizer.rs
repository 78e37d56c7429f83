//! Trains a small articulatory synthesizer on oracle data and reports dev MSE.

use mirrornet::config::{ModelConfig, TrainSynthConfig};
use mirrornet::data::gen_synthetic;
use mirrornet::synth::{eval_synthesizer, train_synthesizer, SynthTrainOptions};

fn main() -> mirrornet::Result<()> {
    let items = gen_synthetic(12, 2.0, 5)?;
    let (train, dev) = items.split_at(9);
    let model = ModelConfig::default().scaled(4);
    let cfg = TrainSynthConfig {
        epochs: 30,
        ..Default::default()
    };
    let (synth, report) = train_synthesizer(
        train,
        dev,
        &model,
        &cfg,
        SynthTrainOptions {
            seed: 5,
            ..Default::default()
        },
    )?;
    println!(
        "{} steps, train mse {:.4} at start, best dev mse {:.4} at epoch {}",
        report.steps, report.initial_train_mse, report.best_dev_mse, report.best_epoch
    );
    println!("dev mse after reload of best weights: {:.4}", eval_synthesizer(&synth, dev)?.mean_mse);
    Ok(())
}
