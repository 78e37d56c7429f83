use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::filterbank::{channel_freqs, Filterbank};
use super::{compress, frames_for_samples, CHANNELS, FRAME_RATE, HOP, SAMPLE_RATE};
use crate::error::{Error, Result};

pub(crate) const WIN_LEN: usize = 512;
pub(crate) const FFT_LEN: usize = 1024;
pub(crate) const N_BINS: usize = FFT_LEN / 2 + 1;

/// 128-channel log-frequency magnitude spectrogram, compressed with
/// `log(1 + x / EPS_C)`. Stored channel-major as `[128, frames]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditorySpectrogram {
    values: Vec<f32>,
    frames: usize,
}

impl AuditorySpectrogram {
    pub fn new(values: Vec<f32>, frames: usize) -> Result<Self> {
        if frames == 0 || values.len() != CHANNELS * frames {
            return Err(Error::ShapeMismatch {
                op: "auditory spectrogram",
                left: vec![CHANNELS, frames],
                right: vec![values.len()],
            });
        }
        Ok(Self { values, frames })
    }

    pub fn zeros(frames: usize) -> Self {
        Self {
            values: vec![0.0; CHANNELS * frames],
            frames,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame_rate(&self) -> f64 {
        FRAME_RATE
    }

    pub fn channel_freqs(&self) -> Vec<f64> {
        channel_freqs()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, channel: usize, frame: usize) -> f32 {
        self.values[channel * self.frames + frame]
    }

    pub fn frame(&self, t: usize) -> Vec<f32> {
        (0..CHANNELS).map(|c| self.get(c, t)).collect()
    }

    /// Channel with the largest value in frame `t`.
    pub fn argmax_channel(&self, t: usize) -> usize {
        (0..CHANNELS)
            .max_by(|&a, &b| self.get(a, t).total_cmp(&self.get(b, t)))
            .unwrap()
    }

    /// Frames `start..start + len`.
    pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames || len == 0 {
            return Err(Error::InvalidLength {
                op: "crop",
                len: self.frames,
                reason: format!("cannot take {len} frames from {start}"),
            });
        }
        let mut values = Vec::with_capacity(CHANNELS * len);
        for c in 0..CHANNELS {
            values.extend_from_slice(&self.values[c * self.frames + start..c * self.frames + start + len]);
        }
        Self::new(values, len)
    }

    /// Writes one row per frame with 128 columns at 6 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.values.len() * 10);
        for t in 0..self.frames {
            for c in 0..CHANNELS {
                if c > 0 {
                    out.push(',');
                }
                out.push_str(&crate::fmt::sig6(self.get(c, t) as f64));
            }
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let malformed = |reason: String| Error::Malformed {
            what: "spectrogram CSV",
            path: path.to_path_buf(),
            reason,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| malformed(e.to_string()))?;
        let mut rows: Vec<Vec<f32>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| malformed(e.to_string()))?;
            if rec.len() != CHANNELS {
                return Err(malformed(format!("row {i} has {} columns", rec.len())));
            }
            let row = rec
                .iter()
                .map(|v| v.trim().parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| malformed(format!("row {i}: {e}")))?;
            rows.push(row);
        }
        let frames = rows.len();
        if frames == 0 {
            return Err(malformed("no frames".into()));
        }
        let mut values = vec![0.0; CHANNELS * frames];
        for (t, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                values[c * frames + t] = v;
            }
        }
        Self::new(values, frames)
    }
}

/// Hann-windowed STFT with an 8 ms hop. Frame `j` is centred on sample
/// `j·HOP + HOP/2`; the window is zero-padded to `FFT_LEN`.
pub(crate) struct Stft {
    window: Vec<f64>,
    norm: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new() -> Self {
        let window: Vec<f64> = (0..WIN_LEN)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / WIN_LEN as f64).cos())
            .collect();
        let norm = window.iter().sum::<f64>();
        let mut planner = FftPlanner::new();
        Self {
            window,
            norm,
            fwd: planner.plan_fft_forward(FFT_LEN),
            inv: planner.plan_fft_inverse(FFT_LEN),
        }
    }

    fn frame_start(j: usize) -> isize {
        (j * HOP + HOP / 2) as isize - (WIN_LEN / 2) as isize
    }

    /// Positive-frequency bins of each frame, scaled so a unit sinusoid has
    /// a peak magnitude near 0.5.
    pub fn analyze(&self, x: &[f64], frames: usize) -> Vec<Vec<Complex<f64>>> {
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
        (0..frames)
            .map(|j| {
                buf.iter_mut().for_each(|v| *v = Complex::new(0.0, 0.0));
                let s = Self::frame_start(j);
                for n in 0..WIN_LEN {
                    let i = s + n as isize;
                    if i >= 0 && (i as usize) < x.len() {
                        buf[n].re = x[i as usize] * self.window[n] / self.norm;
                    }
                }
                self.fwd.process(&mut buf);
                buf[..N_BINS].to_vec()
            })
            .collect()
    }

    /// Least-squares signal whose STFT is closest to `spec`.
    pub fn synthesize(&self, spec: &[Vec<Complex<f64>>], n_samples: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_samples];
        let mut wsum = vec![0.0; n_samples];
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_LEN];
        for (j, frame) in spec.iter().enumerate() {
            buf[..N_BINS].copy_from_slice(frame);
            for k in 1..FFT_LEN - N_BINS + 1 {
                buf[FFT_LEN - k] = frame[k].conj();
            }
            // Hermitian spectrum; the DC and Nyquist bins must be real
            buf[0].im = 0.0;
            buf[N_BINS - 1].im = 0.0;
            self.inv.process(&mut buf);
            let s = Self::frame_start(j);
            for n in 0..WIN_LEN {
                let i = s + n as isize;
                if i >= 0 && (i as usize) < n_samples {
                    let w = self.window[n];
                    // analysis applied w/norm and the inverse FFT is unnormalized
                    out[i as usize] += w * buf[n].re * self.norm / FFT_LEN as f64;
                    wsum[i as usize] += w * w;
                }
            }
        }
        for (o, w) in out.iter_mut().zip(&wsum) {
            if *w > 1e-12 {
                *o /= w;
            }
        }
        out
    }
}

/// Maps STFT magnitudes of one frame onto the 128 channels (uncompressed).
pub(crate) fn channel_energies(weights: &[Vec<(usize, f64)>], mags: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .map(|w| w.iter().map(|&(k, wt)| wt * mags[k]).sum())
        .collect()
}

pub(crate) fn bin_weights() -> Vec<Vec<(usize, f64)>> {
    Filterbank::new().bin_weights(SAMPLE_RATE as f64 / FFT_LEN as f64, N_BINS)
}

/// Auditory spectrogram of a mono 16 kHz signal. Produces
/// `round(len / 128)` frames (125 per second).
pub fn auditory_spectrogram(wav: &[f32], fs: u32) -> Result<AuditorySpectrogram> {
    if fs != SAMPLE_RATE {
        return Err(Error::UnsupportedSampleRate(fs));
    }
    let frames = frames_for_samples(wav.len());
    if wav.is_empty() || frames == 0 {
        return Err(Error::EmptySignal);
    }
    let x: Vec<f64> = wav.iter().map(|&v| v as f64).collect();
    let stft = Stft::new();
    let weights = bin_weights();
    let spec = stft.analyze(&x, frames);
    let mut values = vec![0.0f32; CHANNELS * frames];
    for (t, frame) in spec.iter().enumerate() {
        let mags: Vec<f64> = frame.iter().map(|c| c.norm()).collect();
        for (c, e) in channel_energies(&weights, &mags).into_iter().enumerate() {
            values[c * frames + t] = compress(e) as f32;
        }
    }
    AuditorySpectrogram::new(values, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tone(f: f64, amp: f64, secs: f64) -> Vec<f32> {
        let n = (secs * 16000.0) as usize;
        (0..n)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * f * i as f64 / 16000.0).sin()) as f32)
            .collect()
    }

    #[test]
    fn silence_is_zero() {
        let s = auditory_spectrogram(&vec![0.0; 16000], 16000).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_seconds_is_250_frames() {
        let s = auditory_spectrogram(&vec![0.0; 32000], 16000).unwrap();
        assert_eq!(s.frames(), 250);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(auditory_spectrogram(&[0.0; 100], 8000), Err(Error::UnsupportedSampleRate(8000))));
        assert!(matches!(auditory_spectrogram(&[], 16000), Err(Error::EmptySignal)));
    }

    #[test]
    fn tone_peaks_at_nearest_channel() {
        let fb = Filterbank::new();
        let s = auditory_spectrogram(&tone(1000.0, 0.5, 0.5), 16000).unwrap();
        let mid = s.frames() / 2;
        assert_eq!(s.argmax_channel(mid), fb.nearest_channel(1000.0));
    }

    #[test]
    fn peak_channel_monotone_in_frequency() {
        let mut last = 0;
        for f in [200.0, 350.0, 500.0, 900.0, 1500.0, 2500.0, 4000.0, 6500.0] {
            let s = auditory_spectrogram(&tone(f, 0.3, 0.25), 16000).unwrap();
            let c = s.argmax_channel(s.frames() / 2);
            assert!(c >= last, "{f} Hz -> channel {c} < {last}");
            last = c;
        }
    }

    #[test]
    fn peak_channel_amplitude_invariant() {
        let base = auditory_spectrogram(&tone(1000.0, 1.0, 0.25), 16000).unwrap();
        let c = base.argmax_channel(base.frames() / 2);
        for a in [1e-4, 0.01, 0.3, 0.9] {
            let s = auditory_spectrogram(&tone(1000.0, a, 0.25), 16000).unwrap();
            assert_eq!(s.argmax_channel(s.frames() / 2), c, "amplitude {a}");
        }
    }

    #[test]
    fn frame_count_arithmetic() {
        for secs in [0.5, 0.75, 1.3, 2.0, 3.99, 4.0] {
            let n = (secs * 16000.0) as usize;
            let s = auditory_spectrogram(&vec![0.01; n], 16000).unwrap();
            assert_eq!(s.frames(), (secs * 125.0_f64).round() as usize, "{secs}s");
        }
    }

    #[test]
    fn stft_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let stft = Stft::new();
        let frames = frames_for_samples(x.len());
        let y = stft.synthesize(&stft.analyze(&x, frames), x.len());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = auditory_spectrogram(&tone(440.0, 0.3, 0.2), 16000).unwrap();
        let p = dir.path().join("s.csv");
        s.write_csv(&p).unwrap();
        let back = AuditorySpectrogram::read_csv(&p).unwrap();
        assert_eq!(back.frames(), s.frames());
        for (a, b) in s.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= a.abs() * 1e-5 + 1e-6);
        }
    }
}
