use crate::{Error, Result};

/// HTK mel scale, `2595 log10(1 + f / 700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `M` triangular filters with corner frequencies equally spaced in mel,
/// sampled at FFT bin centers `k * sample_rate / fft_size`.
///
/// Filter `m` (0-based) rises from `boundaries[m]` to a unit peak at
/// `boundaries[m + 1]` and falls back to zero at `boundaries[m + 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterBank {
    pub n_filters: usize,
    pub sample_rate: u32,
    pub fft_size: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    /// `n_filters + 2` corner frequencies in Hz, strictly increasing.
    pub boundaries: Vec<f64>,
    /// Row-major `n_filters x (fft_size / 2 + 1)`.
    pub weights: Vec<f64>,
}

impl MelFilterBank {
    pub fn new(
        n_filters: usize,
        sample_rate: u32,
        fft_size: usize,
        f_lo: f64,
        f_hi: f64,
    ) -> Result<Self> {
        if n_filters < 2 {
            return Err(Error::Config(format!("need at least 2 filters, got {n_filters}")));
        }
        if sample_rate == 0 || fft_size < 2 {
            return Err(Error::Config("sample rate and fft size must be positive".into()));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(0.0 <= f_lo && f_lo < f_hi && f_hi <= nyquist) {
            return Err(Error::Config(format!(
                "need 0 <= f_lo < f_hi <= {nyquist}, got {f_lo}..{f_hi}"
            )));
        }

        let (mel_lo, mel_hi) = (hz_to_mel(f_lo), hz_to_mel(f_hi));
        let step = (mel_hi - mel_lo) / (n_filters + 1) as f64;
        let mut boundaries: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(mel_lo + step * i as f64))
            .collect();
        // pin the endpoints against round-off in the mel round trip
        boundaries[0] = f_lo;
        boundaries[n_filters + 1] = f_hi;

        let n_bins = fft_size / 2 + 1;
        let mut bank = Self {
            n_filters,
            sample_rate,
            fft_size,
            f_lo,
            f_hi,
            boundaries,
            weights: vec![0.0; n_filters * n_bins],
        };
        for m in 0..n_filters {
            for k in 0..n_bins {
                bank.weights[m * n_bins + k] = bank.response(m, bank.bin_hz(k));
            }
            if bank.row(m).iter().all(|&w| w == 0.0) {
                return Err(Error::DegenerateFilterBank { filter: m });
            }
        }
        Ok(bank)
    }

    /// Filter bank spanning `0 .. sample_rate / 2`.
    pub fn full_band(n_filters: usize, sample_rate: u32, fft_size: usize) -> Result<Self> {
        Self::new(n_filters, sample_rate, fft_size, 0.0, sample_rate as f64 / 2.0)
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_size as f64
    }

    /// Continuous triangular response of filter `m` at `hz`.
    pub fn response(&self, m: usize, hz: f64) -> f64 {
        let (lo, mid, hi) = (
            self.boundaries[m],
            self.boundaries[m + 1],
            self.boundaries[m + 2],
        );
        if hz <= lo || hz >= hi {
            0.0
        } else if hz <= mid {
            (hz - lo) / (mid - lo)
        } else {
            (hi - hz) / (hi - mid)
        }
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let n = self.num_bins();
        &self.weights[m * n..(m + 1) * n]
    }

    /// `weights . spectrum` for one frame.
    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        (0..self.n_filters)
            .map(|m| self.row(m).iter().zip(spectrum).map(|(w, p)| w * p).sum())
            .collect()
    }

    /// Number of filter centers strictly inside `(lo_hz, hi_hz)`.
    pub fn centers_within(&self, lo_hz: f64, hi_hz: f64) -> usize {
        self.boundaries[1..=self.n_filters]
            .iter()
            .filter(|&&f| f > lo_hz && f < hi_hz)
            .count()
    }
}
