//! Window extraction, radix-2 FFT, Welch PSD and band powers.
//!
//! All spectral arithmetic is done in f64. The Welch estimator follows the
//! usual density convention: mean-detrended, Hamming-tapered overlapping
//! segments, periodogram `|FFT|^2 / (fs * sum(taper^2))`, averaged and
//! folded to one side, so units are uV^2/Hz and Parseval holds.

use num_complex::Complex64;

use crate::eeg::EegRecording;
use crate::error::{Error, Result};

/// Band-center frequencies (Hz) used by the synthetic generator,
/// ordered as [theta1, theta2, alpha1, alpha2].
pub const BAND_CENTER_HZ: [f64; 4] = [5.5, 7.5, 9.5, 11.5];

/// The four analysis bands, inclusive integer edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BandName {
    Theta1,
    Theta2,
    Alpha1,
    Alpha2,
}

impl BandName {
    pub const ALL: [BandName; 4] = [
        BandName::Theta1,
        BandName::Theta2,
        BandName::Alpha1,
        BandName::Alpha2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BandName::Theta1 => "theta1",
            BandName::Theta2 => "theta2",
            BandName::Alpha1 => "alpha1",
            BandName::Alpha2 => "alpha2",
        }
    }

    pub fn parse(s: &str) -> Option<BandName> {
        BandName::ALL.into_iter().find(|b| b.as_str() == s)
    }

    pub fn band(self) -> Band {
        let (lo, hi) = match self {
            BandName::Theta1 => (5.0, 6.0),
            BandName::Theta2 => (7.0, 8.0),
            BandName::Alpha1 => (9.0, 10.0),
            BandName::Alpha2 => (11.0, 12.0),
        };
        Band {
            name: self,
            lo_hz: lo,
            hi_hz: hi,
        }
    }
}

impl std::fmt::Display for BandName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A frequency band with inclusive edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub name: BandName,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

/// A fixed-length contiguous slice of a recording, `[n_channels][n_samples]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub data: Vec<Vec<f64>>,
    pub start_sample: usize,
    pub length_s: f64,
    pub subject_id: String,
    pub condition: crate::eeg::Condition,
}

impl Window {
    pub fn n_channels(&self) -> usize {
        self.data.len()
    }

    pub fn n_samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }
}

/// Tiles a recording into non-overlapping windows starting at sample 0;
/// the trailing remainder is discarded.
pub fn extract_windows(rec: &EegRecording, length_s: f64) -> Result<Vec<Window>> {
    if !(length_s > 0.0) {
        return Err(Error::validation("window length must be positive"));
    }
    let exact = length_s * rec.sampling_rate_hz;
    let window_samples = exact.round() as usize;
    if (exact - window_samples as f64).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "window length {length_s} s is not a whole number of samples at {} Hz",
            rec.sampling_rate_hz
        )));
    }
    let n_windows = rec.n_samples() / window_samples;
    let mut windows = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let start = w * window_samples;
        let data = rec
            .data
            .iter()
            .map(|row| row[start..start + window_samples].to_vec())
            .collect();
        windows.push(Window {
            data,
            start_sample: start,
            length_s,
            subject_id: rec.subject_id.clone(),
            condition: rec.condition,
        });
    }
    Ok(windows)
}

/// Iterative radix-2 FFT. Forward: `X[k] = sum_n x[n] e^(-2*pi*i*k*n/N)`;
/// inverse applies the conjugate transform scaled by `1/N`.
pub fn fft(x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    let n = x.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::validation(format!("fft length {n} is not a power of two")));
    }
    let mut a = x.to_vec();

    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            a.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * std::f64::consts::TAU / len as f64;
        let wlen = Complex64::new(ang.cos(), ang.sin());
        for chunk in a.chunks_mut(len) {
            let mut w = Complex64::new(1.0, 0.0);
            let (lo, hi) = chunk.split_at_mut(len / 2);
            for (u, v) in lo.iter_mut().zip(hi.iter_mut()) {
                let t = *v * w;
                *v = *u - t;
                *u += t;
                w *= wlen;
            }
        }
        len <<= 1;
    }

    if inverse {
        let scale = 1.0 / n as f64;
        for v in &mut a {
            *v *= scale;
        }
    }
    Ok(a)
}

/// Welch estimator settings. Defaults give df = 1 Hz at fs = 256.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchParams {
    pub seg_len: usize,
    pub overlap: f64,
}

impl Default for WelchParams {
    fn default() -> Self {
        WelchParams {
            seg_len: 256,
            overlap: 0.5,
        }
    }
}

impl WelchParams {
    pub fn validate(&self) -> Result<()> {
        if !self.seg_len.is_power_of_two() {
            return Err(Error::validation(format!(
                "welch seg_len {} must be a power of two",
                self.seg_len
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::validation(format!(
                "welch overlap {} must be in [0, 1)",
                self.overlap
            )));
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        let hop = (self.seg_len as f64 * (1.0 - self.overlap)).round() as usize;
        hop.max(1)
    }
}

/// One-sided PSD in uV^2/Hz on an equally spaced frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub freqs_hz: Vec<f64>,
    /// `[n_channels][n_freqs]`
    pub power: Vec<Vec<f64>>,
    pub df: f64,
}

fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Welch PSD of a window, per channel.
pub fn welch_psd(window: &Window, fs: f64, params: &WelchParams) -> Result<PsdEstimate> {
    params.validate()?;
    let seg_len = params.seg_len;
    let n = window.n_samples();
    if seg_len > n {
        return Err(Error::validation(format!(
            "welch seg_len {seg_len} exceeds window length {n}"
        )));
    }
    let hop = params.hop();
    let taper = hamming(seg_len);
    let taper_power: f64 = taper.iter().map(|w| w * w).sum();
    let norm = 1.0 / (fs * taper_power);
    let n_freqs = seg_len / 2 + 1;
    let n_segments = (n - seg_len) / hop + 1;

    let mut power = Vec::with_capacity(window.n_channels());
    for row in &window.data {
        let mut acc = vec![0.0; n_freqs];
        for seg in 0..n_segments {
            let start = seg * hop;
            let samples = &row[start..start + seg_len];
            let mean = samples.iter().sum::<f64>() / seg_len as f64;
            let tapered: Vec<Complex64> = samples
                .iter()
                .zip(&taper)
                .map(|(&v, &w)| Complex64::new((v - mean) * w, 0.0))
                .collect();
            let spectrum = fft(&tapered, false)?;
            for (k, bin) in acc.iter_mut().enumerate() {
                *bin += spectrum[k].norm_sqr() * norm;
            }
        }
        for bin in &mut acc {
            *bin /= n_segments as f64;
        }
        // fold to one-sided: double everything except DC and Nyquist
        for bin in acc.iter_mut().take(n_freqs - 1).skip(1) {
            *bin *= 2.0;
        }
        power.push(acc);
    }

    let df = fs / seg_len as f64;
    let freqs_hz = (0..n_freqs).map(|k| k as f64 * df).collect();
    Ok(PsdEstimate {
        freqs_hz,
        power,
        df,
    })
}

/// Mean spectral density over the band's inclusive frequency range,
/// one value per channel.
pub fn band_power(psd: &PsdEstimate, band: &Band) -> Result<Vec<f64>> {
    let eps = psd.df * 1e-9;
    let bins: Vec<usize> = psd
        .freqs_hz
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= band.lo_hz - eps && f <= band.hi_hz + eps)
        .map(|(k, _)| k)
        .collect();
    if bins.is_empty() {
        return Err(Error::validation(format!(
            "band {} ({}-{} Hz) has no bins on the PSD grid (max {} Hz)",
            band.name,
            band.lo_hz,
            band.hi_hz,
            psd.freqs_hz.last().copied().unwrap_or(0.0)
        )));
    }
    Ok(psd
        .power
        .iter()
        .map(|row| bins.iter().map(|&k| row[k]).sum::<f64>() / bins.len() as f64)
        .collect())
}
