//! Audio front-end: the 128-channel log-frequency auditory spectrogram,
//! its iterative inversion back to a waveform, and autocorrelation-based
//! source features (periodicity, aperiodicity, pitch).

mod filterbank;
mod invert;
mod source;
mod spectrogram;
pub mod wav;

pub use filterbank::{channel_freqs, Filterbank};
pub use invert::{invert_spectrogram, Inversion};
pub use source::{estimate_source_features, SourceFeatures, PITCH_SCALE_HZ, VOICING_THRESHOLD};
pub use spectrogram::{auditory_spectrogram, AuditorySpectrogram};

/// Number of auditory channels.
pub const CHANNELS: usize = 128;
/// Only supported input sample rate.
pub const SAMPLE_RATE: u32 = 16_000;
/// Spectrogram frames per second (8 ms hop).
pub const FRAME_RATE: f64 = 125.0;
pub const HOP: usize = 128;
pub const F_MIN: f64 = 180.0;
pub const F_MAX: f64 = 7000.0;
/// Compression constant of `log(1 + x / EPS_C)`.
pub const EPS_C: f64 = 1e-3;

/// `log(1 + x / EPS_C)`
pub fn compress(x: f64) -> f64 {
    (x / EPS_C).ln_1p()
}

/// Inverse of [`compress`].
pub fn decompress(v: f64) -> f64 {
    v.exp_m1() * EPS_C
}

/// Spectrogram frames covering `n` samples at 16 kHz.
pub fn frames_for_samples(n: usize) -> usize {
    (n as f64 / HOP as f64).round() as usize
}
