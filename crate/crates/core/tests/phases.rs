use mirrornet::config::{InitConfig, LearnConfig, ModelConfig};
use mirrornet::data::{gen_synthetic, Item};
use mirrornet::mirrornet::{init_phase, learning_phase, LearnOptions, MirrorNet, OraclePlant, PhaseOptions, Plant, StageRecord};

fn median3(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            if i == 0 || i + 1 == v.len() {
                return v[i];
            }
            let mut w = [v[i - 1], v[i], v[i + 1]];
            w.sort_by(f64::total_cmp);
            w[1]
        })
        .collect()
}

fn audio_only(mut items: Vec<Item>) -> Vec<Item> {
    for it in &mut items {
        it.trajectory = None;
    }
    items
}

#[test]
fn init_phase_cuts_encoder_loss_by_80_percent() {
    let plant = OraclePlant::default();
    let items = gen_synthetic(8, 2.0, 17).unwrap();
    let mut m = MirrorNet::new(&ModelConfig::default().scaled(2), plant.stats().clone(), 17).unwrap();
    let cfg = InitConfig {
        lr: 1e-3,
        epochs: 150,
        batch: 4,
    };
    let r = init_phase(&mut m, &items, &cfg, PhaseOptions { seed: 17, crop_frames: 200 }).unwrap();
    let first = r.epochs[0].e_c_init;
    let last = r.epochs.last().unwrap().e_c_init;
    assert!(last <= 0.2 * first, "e_c_init {first} -> {last}");
}

fn toy_run() -> (Vec<f64>, Vec<f64>, (f64, f64), (f64, f64)) {
    let plant = OraclePlant::default();
    let items = audio_only(gen_synthetic(8, 0.4, 23).unwrap());
    let mut m = MirrorNet::new(&ModelConfig::default().scaled(16), plant.stats().clone(), 23).unwrap();
    let cfg = LearnConfig {
        lr_enc: 3e-3,
        lr_dec: 1e-2,
        iterations: 20,
        stage_epochs: [5, 5],
        batch: 4,
        patience: 5,
        ..Default::default()
    };
    let r = learning_phase(
        &mut m,
        &items,
        &plant,
        &cfg,
        LearnOptions {
            seed: 23,
            crop_frames: 40,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(r.iterations, 20);
    assert!(r.records.iter().all(|x| x.e_c >= 0.0 && x.e_d >= 0.0));
    let last_of = |it: usize| -> &StageRecord { r.records.iter().filter(|x| x.iteration == it).last().unwrap() };
    let e_c = (0..20).map(|i| last_of(i).e_c).collect();
    let e_d = (0..20).map(|i| last_of(i).e_d).collect();
    (e_c, e_d, r.initial, r.final_)
}

#[test]
fn toy_learning_run_halves_both_losses() {
    let (_, _, initial, fin) = toy_run();
    assert!(fin.0 <= 0.5 * initial.0, "e_c {initial:?} -> {fin:?}");
    assert!(fin.1 <= 0.5 * initial.1, "e_d {initial:?} -> {fin:?}");
}

#[test]
fn toy_learning_curves_non_increasing_after_median3() {
    let (e_c, e_d, _, _) = toy_run();
    for (name, curve) in [("e_c", &e_c), ("e_d", &e_d)] {
        let s = median3(curve);
        for w in s.windows(2) {
            assert!(w[1] <= w[0], "{name} rises after smoothing: {curve:?}");
        }
    }
}
