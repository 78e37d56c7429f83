//! Generates a small oracle-rendered corpus and writes it to disk.

use mirrornet::data::{gen_synthetic, write_dataset};

fn main() -> mirrornet::Result<()> {
    let items = gen_synthetic(6, 2.0, 0)?;
    for it in &items {
        let traj = it.traj()?;
        println!(
            "{} speaker {} split {:?}: {}x{} trajectory, {} spectrogram frames",
            it.id,
            it.speaker,
            it.split,
            traj.channels(),
            traj.frames(),
            it.spec()?.frames()
        );
    }
    let dir = std::env::temp_dir().join("mirrornet-example-data");
    let manifest = write_dataset(&dir, &items)?;
    println!("manifest at {}", manifest.display());
    Ok(())
}
