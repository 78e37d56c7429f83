//! Auditory spectrogram of a two-tone signal, then back to audio.

use mirrornet::audfront::{auditory_spectrogram, invert_spectrogram, Filterbank};

fn main() -> mirrornet::Result<()> {
    let fs = 16_000;
    let wav: Vec<f32> = (0..fs)
        .map(|i| {
            let t = i as f32 / fs as f32;
            0.3 * (2.0 * std::f32::consts::PI * 500.0 * t).sin() + 0.1 * (2.0 * std::f32::consts::PI * 2000.0 * t).sin()
        })
        .collect();
    let spec = auditory_spectrogram(&wav, fs as u32)?;
    let fb = Filterbank::new();
    let peak = spec.argmax_channel(spec.frames() / 2);
    println!("{} frames, peak channel {peak} ({:.0} Hz)", spec.frames(), fb.freqs()[peak]);

    let inv = invert_spectrogram(&spec, 50, 0);
    let first = inv.consistency[0];
    let last = *inv.consistency.last().unwrap();
    println!("inversion consistency {first:.4} -> {last:.4} over {} iterations", inv.consistency.len());
    println!("reconstructed {} samples", inv.wav.len());
    Ok(())
}
