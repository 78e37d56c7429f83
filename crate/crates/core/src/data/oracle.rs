use serde::{Deserialize, Serialize};

use super::trajectory::{channel_range, ArticTrajectory};
use crate::audfront::{compress, AuditorySpectrogram, Filterbank, CHANNELS, F_MAX};
use crate::error::{Error, Result};

/// Parameters of the closed-form source-filter plant that maps 9-channel
/// trajectories to auditory spectrograms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleParams {
    /// Formant centre ranges in Hz, swept by LA, TBCD and TTCD.
    pub formant_ranges: [[f64; 2]; 3],
    /// Formant widths as standard deviations in ln f.
    pub formant_widths: [f64; 3],
    pub formant_gains: [f64; 3],
    /// Gains scale by `exp(gain_mod · m)` for modulators LP, TBCL, TTCL.
    pub gain_mod: f64,
    /// Widths scale by `1 + width_mod · m`.
    pub width_mod: f64,
    /// Envelope floor `tilt_level · (f / 180)^-tilt` between formants.
    pub tilt_level: f64,
    pub tilt: f64,
    pub voice_level: f64,
    /// Harmonic `n` has amplitude `n^-rolloff`.
    pub rolloff: f64,
    pub noise_level: f64,
    pub floor: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            formant_ranges: [[250.0, 800.0], [900.0, 2200.0], [2400.0, 4000.0]],
            formant_widths: [0.18, 0.14, 0.12],
            formant_gains: [1.0, 0.6, 0.35],
            gain_mod: 2.0,
            width_mod: 0.1,
            tilt_level: 0.05,
            tilt: 1.0,
            voice_level: 1.0,
            rolloff: 0.5,
            noise_level: 0.3,
            floor: 1e-4,
        }
    }
}

/// Trajectory frames contributing to each spectrogram frame, with weights.
/// Repeating every trajectory frame 5 times and averaging groups of 4
/// turns `k` frames at 100 Hz into `5k/4` at 125 Hz.
pub(crate) fn frame_mixing(k: usize) -> Vec<Vec<(usize, f64)>> {
    (0..k * 5 / 4)
        .map(|j| {
            let mut w: Vec<(usize, f64)> = Vec::with_capacity(2);
            for i in 4 * j..4 * j + 4 {
                let src = i / 5;
                match w.last_mut() {
                    Some((s, v)) if *s == src => *v += 0.25,
                    _ => w.push((src, 0.25)),
                }
            }
            w
        })
        .collect()
}

pub struct Oracle {
    params: OracleParams,
    fb: Filterbank,
    ln_freqs: Vec<f64>,
}

impl Oracle {
    pub fn new(params: OracleParams) -> Self {
        let fb = Filterbank::new();
        let ln_freqs = fb.freqs().iter().map(|f| f.ln()).collect();
        Self { params, fb, ln_freqs }
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }

    /// Formant centres in Hz for TV values (LA, TBCD, TTCD) in [-1, 1].
    pub fn formant_centres(&self, drivers: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..3 {
            let [lo, hi] = self.params.formant_ranges[i];
            let u = (drivers[i] + 1.0) / 2.0;
            out[i] = lo * (hi / lo).powf(u);
        }
        out
    }

    /// Spectral envelope at `ln f` for the given formant set.
    fn envelope(&self, ln_f: f64, formants: &[(f64, f64, f64); 3]) -> f64 {
        let p = &self.params;
        let mut e = p.tilt_level * (-p.tilt * (ln_f - self.ln_freqs[0])).exp();
        for &(lc, g, w) in formants {
            let z = (ln_f - lc) / w;
            e += g * (-0.5 * z * z).exp();
        }
        e
    }

    /// Uncompressed channel energies of a single frame given clamped
    /// values in physical units. Each harmonic is weighted by the envelope
    /// at its own frequency; the noise part by the envelope at the
    /// channel centre.
    fn frame_energies(&self, v: &[f64; 9]) -> [f64; CHANNELS] {
        let p = &self.params;
        let centres = self.formant_centres([v[0], v[3], v[5]]);
        let mods = [v[1], v[2], v[4]];
        let mut formants = [(0.0, 0.0, 0.0); 3];
        for i in 0..3 {
            formants[i] = (
                centres[i].ln(),
                p.formant_gains[i] * (p.gain_mod * mods[i]).exp(),
                p.formant_widths[i] * (1.0 + p.width_mod * mods[i]),
            );
        }
        let (ap, per, pitch) = (v[6], v[7], v[8]);
        let mut out = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            out[c] = p.floor + ap * p.noise_level * self.envelope(self.ln_freqs[c], &formants);
        }
        if per > 0.0 && pitch > 0.0 {
            let span = 6;
            let mut n = 1;
            loop {
                let f = n as f64 * pitch;
                if f > F_MAX * 1.3 {
                    break;
                }
                let a = per * p.voice_level * (n as f64).powf(-p.rolloff) * self.envelope(f.ln(), &formants);
                let near = self.fb.nearest_channel(f);
                for c in near.saturating_sub(span)..(near + span + 1).min(CHANNELS) {
                    out[c] += a * self.fb.response(c, f);
                }
                n += 1;
            }
        }
        out
    }

    /// Renders a 9×k trajectory (k divisible by 4) as a 128×(5k/4)
    /// spectrogram. Out-of-range values are clamped with a warning.
    pub fn synth(&self, l: &ArticTrajectory) -> Result<AuditorySpectrogram> {
        let (spec, clamped) = self.synth_counting(l)?;
        if clamped > 0 {
            log::warn!("oracle_synth: clamped {clamped} out-of-range trajectory values");
        }
        Ok(spec)
    }

    /// [`Oracle::synth`] without logging; also returns how many values
    /// were clamped.
    pub fn synth_counting(&self, l: &ArticTrajectory) -> Result<(AuditorySpectrogram, usize)> {
        if l.channels() != 9 {
            return Err(Error::ShapeMismatch {
                op: "oracle_synth",
                left: vec![9],
                right: vec![l.channels()],
            });
        }
        let k = l.frames();
        if k % 4 != 0 {
            return Err(Error::InvalidLength {
                op: "oracle_synth",
                len: k,
                reason: "trajectory frames must be divisible by 4".into(),
            });
        }
        let mut clamped = 0usize;
        let energies: Vec<[f64; CHANNELS]> = (0..k)
            .map(|t| {
                let mut v = [0.0; 9];
                for c in 0..9 {
                    let (lo, hi) = channel_range(c);
                    let x = l.get(c, t) as f64;
                    let y = if x.is_nan() { lo } else { x.clamp(lo, hi) };
                    if y != x {
                        clamped += 1;
                    }
                    v[c] = y;
                }
                self.frame_energies(&v)
            })
            .collect();
        let mix = frame_mixing(k);
        let frames = mix.len();
        let mut values = vec![0.0f32; CHANNELS * frames];
        for (j, w) in mix.iter().enumerate() {
            for c in 0..CHANNELS {
                let e: f64 = w.iter().map(|&(t, wt)| wt * energies[t][c]).sum();
                values[c * frames + j] = compress(e) as f32;
            }
        }
        Ok((AuditorySpectrogram::new(values, frames)?, clamped))
    }
}

/// Closed-form plant: renders `l` with `params`.
pub fn oracle_synth(params: &OracleParams, l: &ArticTrajectory) -> Result<AuditorySpectrogram> {
    Oracle::new(params.clone()).synth(l)
}
