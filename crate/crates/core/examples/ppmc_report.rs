//! PPMC between oracle trajectories and noisy copies of them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mirrornet::data::{gen_synthetic, ArticTrajectory};
use mirrornet::eval::{ppmc, ppmc_report};

fn main() -> mirrornet::Result<()> {
    println!("ppmc([1,2,3], [1,3,2]) = {}", ppmc(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0])?);

    let items = gen_synthetic(4, 2.0, 9)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ids = Vec::new();
    let (mut est, mut truth) = (Vec::new(), Vec::new());
    for it in &items {
        let t = it.traj()?.clone();
        let noisy: Vec<f32> = t.values().iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
        est.push(ArticTrajectory::new(t.channels(), t.frames(), noisy)?);
        truth.push(t);
        ids.push(it.id.clone());
    }
    let report = ppmc_report(&ids, &est, &truth)?;
    for (name, r) in report.channels.iter().zip(&report.per_channel) {
        println!("{name:>6} {r:.3}");
    }
    println!("average {:.3}", report.avg_all);
    Ok(())
}
