//! MirrorNet against the oracle plant, with and without the init phase.

use mirrornet::config::{InitConfig, LearnConfig, ModelConfig};
use mirrornet::data::{Item, Split};
use mirrornet::mirrornet::OraclePlant;
use mirrornet::study::{train_and_score, StudyData};

fn main() -> mirrornet::Result<()> {
    let data = StudyData {
        n_train: 16,
        n_init: 8,
        n_dev: 0,
        n_test: 8,
        duration_s: 2.0,
    };
    let items = data.generate(1)?;
    let of = |s: Split| -> Vec<Item> { items.iter().filter(|i| i.split == s).cloned().collect() };
    let train: Vec<Item> = of(Split::Train)
        .into_iter()
        .map(|mut i| {
            i.trajectory = None;
            i
        })
        .collect();
    let (init_set, test) = (of(Split::Init), of(Split::Test));

    let plant = OraclePlant::default();
    let model = ModelConfig::default().scaled(4);
    let init = InitConfig {
        lr: 1e-3,
        epochs: 60,
        batch: 4,
    };
    let learn = LearnConfig {
        iterations: 2,
        stage_epochs: [2, 2],
        ..Default::default()
    };
    for (name, init_cfg) in [("init + learning", Some(&init)), ("learning only", None)] {
        let (_, out) = train_and_score(&model, init_cfg, &learn, &plant, &train, &init_set, &test, 1, 200)?;
        println!(
            "{name}: avg PPMC {:.3} (6 TVs {:.3}), e_c {:.3} -> {:.3}",
            out.ppmc.avg_all,
            out.ppmc.avg_6tvs.unwrap_or(f64::NAN),
            out.learn.initial.0,
            out.learn.final_.0
        );
    }
    Ok(())
}
