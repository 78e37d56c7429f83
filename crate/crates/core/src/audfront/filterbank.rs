use super::{CHANNELS, F_MAX, F_MIN};

/// Log-spaced centre frequencies, `F_MIN` to `F_MAX` inclusive.
pub fn channel_freqs() -> Vec<f64> {
    let ratio = F_MAX / F_MIN;
    (0..CHANNELS)
        .map(|c| F_MIN * ratio.powf(c as f64 / (CHANNELS - 1) as f64))
        .collect()
}

/// Constant-Q gaussian magnitude filters on a log-frequency axis. Each
/// filter's standard deviation in `ln f` equals the channel spacing.
#[derive(Clone, Debug)]
pub struct Filterbank {
    freqs: Vec<f64>,
    log_freqs: Vec<f64>,
    sigma: f64,
}

impl Default for Filterbank {
    fn default() -> Self {
        Self::new()
    }
}

impl Filterbank {
    pub fn new() -> Self {
        let freqs = channel_freqs();
        let log_freqs = freqs.iter().map(|f| f.ln()).collect();
        Self {
            freqs,
            log_freqs,
            sigma: (F_MAX / F_MIN).ln() / (CHANNELS - 1) as f64,
        }
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    /// Standard deviation of each filter in natural-log frequency units.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Magnitude response of `channel` at frequency `f` (Hz).
    pub fn response(&self, channel: usize, f: f64) -> f64 {
        if f <= 0.0 {
            return 0.0;
        }
        let z = (f.ln() - self.log_freqs[channel]) / self.sigma;
        (-0.5 * z * z).exp()
    }

    /// Channel whose centre frequency is closest to `f` on the log axis.
    pub fn nearest_channel(&self, f: f64) -> usize {
        let lf = f.ln();
        self.log_freqs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - lf).abs().total_cmp(&(b.1 - lf).abs()))
            .map(|(i, _)| i)
            .unwrap()
    }

    /// Frequency range outside which a channel's response is below `floor`.
    pub fn support(&self, channel: usize, floor: f64) -> (f64, f64) {
        let half = self.sigma * (-2.0 * floor.ln()).sqrt();
        ((self.log_freqs[channel] - half).exp(), (self.log_freqs[channel] + half).exp())
    }

    /// Sparse weights of every channel against DFT bins spaced `bin_hz`
    /// apart, for bins `0..n_bins`.
    pub fn bin_weights(&self, bin_hz: f64, n_bins: usize) -> Vec<Vec<(usize, f64)>> {
        (0..CHANNELS)
            .map(|c| {
                let (lo, hi) = self.support(c, 1e-4);
                let k0 = (lo / bin_hz).floor().max(1.0) as usize;
                let k1 = ((hi / bin_hz).ceil() as usize).min(n_bins - 1);
                (k0..=k1)
                    .map(|k| (k, self.response(c, k as f64 * bin_hz)))
                    .filter(|&(_, w)| w > 1e-4)
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn freqs_are_log_spaced() {
        let f = channel_freqs();
        assert_eq!(f.len(), 128);
        assert!((f[0] - 180.0).abs() < 1e-9);
        assert!((f[127] - 7000.0).abs() < 1e-6);
        let r0 = f[1] / f[0];
        for w in f.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] / w[0] - r0).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_channel_brute_force() {
        let fb = Filterbank::new();
        for f in [200.0, 999.0, 1000.0, 3333.0, 6999.0] {
            let best = (0..128)
                .min_by(|&a, &b| {
                    let da = (fb.freqs()[a].ln() - f64::ln(f)).abs();
                    let db = (fb.freqs()[b].ln() - f64::ln(f)).abs();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(fb.nearest_channel(f), best);
        }
    }

    #[test]
    fn response_peaks_at_centre() {
        let fb = Filterbank::new();
        let fc = fb.freqs()[40];
        assert_eq!(fb.response(40, fc), 1.0);
        assert!(fb.response(40, fc * 1.01) < 1.0);
        assert_eq!(fb.response(40, 0.0), 0.0);
    }
}
