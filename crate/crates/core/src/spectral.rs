//! Welch power-spectral-density estimation and the signal/noise frequency
//! separation diagnostic.
//!
//! Frequencies are normalized to cycles per update (sampling rate 1), so the
//! one-sided grid runs from 0 to 0.5. Power is a density per unit of
//! normalized frequency: summing `power * df` over the bins recovers the mean
//! square of the (detrended, windowed and compensated) input.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("segment length must be at least 1")]
    ZeroSegment,
    #[error("overlap {overlap} must be smaller than segment length {segment_len}")]
    OverlapTooLarge { overlap: usize, segment_len: usize },
    #[error("sequence of length {len} is shorter than one segment; need at least {required} values")]
    TooShort { len: usize, required: usize },
    #[error("no sequences to average")]
    NoSequences,
    #[error("none of the {dropped} sequences reaches the segment length {segment_len}")]
    NoUsableSequences { dropped: usize, segment_len: usize },
    #[error("frequency grids differ ({left} vs {right} bins)")]
    GridMismatch { left: usize, right: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    /// Periodic Hann window.
    Hann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Detrend {
    None,
    /// Subtract each segment's mean before windowing.
    MeanRemoval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WelchConfig {
    pub segment_len: usize,
    pub overlap: usize,
    pub window: Window,
    pub detrend: Detrend,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            segment_len: 64,
            overlap: 32,
            window: Window::Hann,
            detrend: Detrend::MeanRemoval,
        }
    }
}

impl WelchConfig {
    pub fn new(segment_len: usize, overlap: usize, window: Window, detrend: Detrend) -> Result<Self, SpectralError> {
        let cfg = Self {
            segment_len,
            overlap,
            window,
            detrend,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A single rectangular segment with no detrending: the raw periodogram.
    pub fn periodogram(len: usize) -> Self {
        Self {
            segment_len: len,
            overlap: 0,
            window: Window::Rectangular,
            detrend: Detrend::None,
        }
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        if self.segment_len == 0 {
            return Err(SpectralError::ZeroSegment);
        }
        if self.overlap >= self.segment_len {
            return Err(SpectralError::OverlapTooLarge {
                overlap: self.overlap,
                segment_len: self.segment_len,
            });
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        self.segment_len - self.overlap
    }

    /// Number of full segments in a sequence of length `len`.
    pub fn n_segments(&self, len: usize) -> usize {
        if len < self.segment_len {
            0
        } else {
            (len - self.segment_len) / self.hop() + 1
        }
    }

    /// Longest prefix of a `len`-long sequence that the segmentation uses.
    pub fn usable_len(&self, len: usize) -> usize {
        match self.n_segments(len) {
            0 => 0,
            n => self.segment_len + (n - 1) * self.hop(),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.segment_len / 2 + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsdEstimate {
    /// Cycles per update, `k / segment_len`.
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub n_segments: usize,
    pub segment_len: usize,
}

impl PsdEstimate {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    /// Bin width in normalized frequency.
    pub fn df(&self) -> f64 {
        1.0 / self.segment_len as f64
    }

    /// `sum(power) * df`; equals the mean square for a rectangular,
    /// undetrended estimate.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.df()
    }
}

fn window_coefficients(window: Window, n: usize) -> Vec<f64> {
    match window {
        Window::Rectangular => vec![1.0; n],
        Window::Hann if n == 1 => vec![1.0],
        Window::Hann => (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
            .collect(),
    }
}

/// Squared DFT magnitudes for bins `0..=n/2`, by direct summation against a
/// precomputed twiddle table.
struct HalfSpectrum {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl HalfSpectrum {
    fn new(n: usize) -> Self {
        let (cos, sin) = (0..n)
            .map(|m| {
                let phase = 2.0 * PI * m as f64 / n as f64;
                (phase.cos(), phase.sin())
            })
            .unzip();
        Self { cos, sin }
    }

    fn accumulate(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for (k, slot) in out.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            let mut m = 0usize;
            for &v in x {
                re += v * self.cos[m];
                im -= v * self.sin[m];
                m += k;
                if m >= n {
                    m -= n;
                }
            }
            *slot += re * re + im * im;
        }
    }
}

/// Welch PSD: overlapping segments, optional per-segment mean removal,
/// windowing, averaged squared spectra scaled by `1 / sum(w^2)` and folded to
/// one side.
pub fn welch_psd(sequence: &[f64], cfg: &WelchConfig) -> Result<PsdEstimate, SpectralError> {
    cfg.validate()?;
    let n = cfg.segment_len;
    if sequence.len() < n {
        return Err(SpectralError::TooShort {
            len: sequence.len(),
            required: n,
        });
    }
    let window = window_coefficients(cfg.window, n);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let dft = HalfSpectrum::new(n);
    let n_bins = cfg.n_bins();
    let n_segments = cfg.n_segments(sequence.len());

    let mut acc = vec![0.0; n_bins];
    let mut seg = vec![0.0; n];
    for s in 0..n_segments {
        let start = s * cfg.hop();
        let raw = &sequence[start..start + n];
        let offset = match cfg.detrend {
            Detrend::None => 0.0,
            Detrend::MeanRemoval => raw.iter().sum::<f64>() / n as f64,
        };
        for ((dst, &v), &w) in seg.iter_mut().zip(raw).zip(&window) {
            *dst = (v - offset) * w;
        }
        dft.accumulate(&seg, &mut acc);
    }

    let scale = 1.0 / (window_power * n_segments as f64);
    let nyquist = if n.is_multiple_of(2) { Some(n / 2) } else { None };
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || Some(k) == nyquist { 1.0 } else { 2.0 };
            p * scale * one_sided
        })
        .collect();
    let freqs = (0..n_bins).map(|k| k as f64 / n as f64).collect();
    Ok(PsdEstimate {
        freqs,
        power,
        n_segments,
        segment_len: n,
    })
}

/// Bin-wise mean of per-sequence Welch estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanPsd {
    pub psd: PsdEstimate,
    /// Sequences that contributed.
    pub used: usize,
    /// Sequences shorter than one segment, left out.
    pub dropped: usize,
}

/// Averages Welch estimates over many sequences. Sequences shorter than one
/// segment are dropped and counted; longer ones contribute every full
/// segment they contain (a trailing partial segment is ignored).
pub fn mean_psd<S: AsRef<[f64]>>(sequences: &[S], cfg: &WelchConfig) -> Result<MeanPsd, SpectralError> {
    cfg.validate()?;
    if sequences.is_empty() {
        return Err(SpectralError::NoSequences);
    }
    let mut sum = vec![0.0; cfg.n_bins()];
    let mut used = 0usize;
    let mut dropped = 0usize;
    let mut n_segments = 0usize;
    for seq in sequences {
        let seq = seq.as_ref();
        if seq.len() < cfg.segment_len {
            dropped += 1;
            continue;
        }
        let est = welch_psd(&seq[..cfg.usable_len(seq.len())], cfg)?;
        for (s, p) in sum.iter_mut().zip(&est.power) {
            *s += p;
        }
        n_segments += est.n_segments;
        used += 1;
    }
    if used == 0 {
        return Err(SpectralError::NoUsableSequences {
            dropped,
            segment_len: cfg.segment_len,
        });
    }
    let power = sum.into_iter().map(|s| s / used as f64).collect();
    let freqs = (0..cfg.n_bins())
        .map(|k| k as f64 / cfg.segment_len as f64)
        .collect();
    Ok(MeanPsd {
        psd: PsdEstimate {
            freqs,
            power,
            n_segments,
            segment_len: cfg.segment_len,
        },
        used,
        dropped,
    })
}

/// Noise-to-signal spectral comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport {
    pub freqs: Vec<f64>,
    /// `noise / signal` per bin.
    pub ratios: Vec<f64>,
    /// Noise power strictly exceeds signal power in every bin.
    pub all_bins_noise_dominant: bool,
    /// Mean ratio over the highest quarter of the bins.
    pub high_freq_ratio: f64,
    /// Mean ratio over the lowest quarter of the bins.
    pub low_freq_ratio: f64,
}

pub fn separation_report(signal: &PsdEstimate, noise: &PsdEstimate) -> Result<SeparationReport, SpectralError> {
    if signal.freqs != noise.freqs || signal.power.len() != noise.power.len() {
        return Err(SpectralError::GridMismatch {
            left: signal.freqs.len(),
            right: noise.freqs.len(),
        });
    }
    let ratios: Vec<f64> = signal
        .power
        .iter()
        .zip(&noise.power)
        .map(|(&s, &n)| match (s == 0.0, n == 0.0) {
            (true, true) => 1.0,
            (true, false) => f64::INFINITY,
            _ => n / s,
        })
        .collect();
    let all_bins_noise_dominant = signal
        .power
        .iter()
        .zip(&noise.power)
        .all(|(s, n)| n > s);
    let quarter = (ratios.len() / 4).max(1);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(SeparationReport {
        freqs: signal.freqs.clone(),
        high_freq_ratio: mean(&ratios[ratios.len() - quarter..]),
        low_freq_ratio: mean(&ratios[..quarter]),
        ratios,
        all_bins_noise_dominant,
    })
}
