//! The score update viewed as a signal-processing system.
//!
//! From one sample's point of view the mean batch loss splits into its own
//! scaled loss (`L_i / B`) plus the average contribution of its co-sampled
//! batch mates. The EMA over a sample's observed batch losses is a
//! first-order IIR low-pass filter with impulse response
//! `h[n] = (1 - alpha) * alpha^n` for `n >= 0`, so its output can be written
//! either recursively or as a convolution plus a decaying initial condition.

use thiserror::Error;

use crate::log::LogRecord;
use crate::score::SampleId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("batch has no losses")]
    EmptyBatch,
    #[error("target position {index} out of range for batch of size {size}")]
    TargetOutOfRange { index: usize, size: usize },
    #[error("filter decay factor {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("update index {k} out of range 1..={len}")]
    IndexOutOfRange { k: usize, len: usize },
    #[error("step {step} has no per-sample losses; decomposition needs an instrumented log")]
    NotInstrumented { step: u64 },
    #[error("step {step}: {losses} per-sample losses for {indices} indices")]
    LengthMismatch {
        step: u64,
        indices: usize,
        losses: usize,
    },
}

/// One batch loss split from a target sample's point of view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decomposition {
    /// The target's own loss divided by the batch size.
    pub signal: f64,
    /// Sum of the other members' losses divided by the batch size.
    pub noise: f64,
    pub batch_size: usize,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.signal + self.noise
    }
}

pub fn decompose_batch(per_sample_losses: &[f64], target: usize) -> Result<Decomposition, SignalError> {
    let b = per_sample_losses.len();
    if b == 0 {
        return Err(SignalError::EmptyBatch);
    }
    if target >= b {
        return Err(SignalError::TargetOutOfRange {
            index: target,
            size: b,
        });
    }
    let bf = b as f64;
    let others: f64 = per_sample_losses
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(_, &l)| l)
        .sum();
    Ok(Decomposition {
        signal: per_sample_losses[target] / bf,
        noise: others / bf,
        batch_size: b,
    })
}

/// First-order low-pass filter `y[k] = alpha * y[k-1] + (1 - alpha) * x[k]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterSpec {
    alpha: f64,
}

impl FilterSpec {
    pub fn new(alpha: f64) -> Result<Self, SignalError> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self { alpha })
        } else {
            Err(SignalError::InvalidAlpha(alpha))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `h[n] = (1 - alpha) * alpha^n`.
    pub fn impulse_response(&self, n: usize) -> f64 {
        (1.0 - self.alpha) * pow_usize(self.alpha, n)
    }

    /// `|H(e^{jw})| = (1 - alpha) / sqrt(1 - 2 alpha cos w + alpha^2)`,
    /// for `w` in `[0, pi]`.
    ///
    /// The denominator is evaluated as `(1 - alpha)^2 + 4 alpha sin^2(w / 2)`,
    /// the same quantity without the cancellation near `w = 0`.
    pub fn magnitude(&self, omega: f64) -> f64 {
        let a = self.alpha;
        let one_minus = 1.0 - a;
        let half = (0.5 * omega).sin();
        let denom = one_minus * one_minus + 4.0 * a * half * half;
        one_minus / denom.sqrt()
    }

    /// `(omega, |H|)` on `points` uniformly spaced frequencies covering
    /// `[0, pi]` with both endpoints.
    pub fn magnitude_grid(&self, points: usize) -> Vec<(f64, f64)> {
        omega_grid(points)
            .into_iter()
            .map(|w| (w, self.magnitude(w)))
            .collect()
    }
}

fn pow_usize(x: f64, n: usize) -> f64 {
    match i32::try_from(n) {
        Ok(n) => x.powi(n),
        Err(_) => x.powf(n as f64),
    }
}

/// Uniform grid over `[0, pi]`, endpoints included. One point yields `[0]`.
pub fn omega_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let step = std::f64::consts::PI / (points - 1) as f64;
            (0..points)
                .map(|i| {
                    if i == points - 1 {
                        std::f64::consts::PI
                    } else {
                        i as f64 * step
                    }
                })
                .collect()
        }
    }
}

pub fn impulse_response(spec: &FilterSpec, n: usize) -> f64 {
    spec.impulse_response(n)
}

pub fn frequency_response_mag(spec: &FilterSpec, omega: f64) -> f64 {
    spec.magnitude(omega)
}

/// The batch losses one sample observed, in participation order, plus its
/// score before the first of them. `values[0]` is the observation at `k = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSequence {
    pub values: Vec<f64>,
    pub s0: f64,
}

impl ObservationSequence {
    pub fn new(values: Vec<f64>, s0: f64) -> Self {
        Self { values, s0 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Score after the `k`-th update in convolution form:
/// `sum_{j=0}^{k-1} h[j] * L[k-j] + alpha^k * s0`, summed directly.
pub fn convolution_score(seq: &ObservationSequence, spec: &FilterSpec, k: usize) -> Result<f64, SignalError> {
    if k == 0 || k > seq.values.len() {
        return Err(SignalError::IndexOutOfRange {
            k,
            len: seq.values.len(),
        });
    }
    let a = spec.alpha;
    let mut acc = 0.0;
    let mut weight = 1.0 - a;
    // values[k - 1 - j] is L[k - j]
    for j in 0..k {
        acc += weight * seq.values[k - 1 - j];
        weight *= a;
    }
    Ok(acc + pow_usize(a, k) * seq.s0)
}

/// `convolution_score` for every `k` in `1..=len`.
pub fn convolution_scores(seq: &ObservationSequence, spec: &FilterSpec) -> Vec<f64> {
    (1..=seq.values.len())
        .map(|k| convolution_score(seq, spec, k).expect("k within 1..=len"))
        .collect()
}

/// Per-sample signal and noise sequences, one entry per participation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SignalNoise {
    pub signal: Vec<f64>,
    pub noise: Vec<f64>,
}

impl SignalNoise {
    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }
}

/// Splits every batch loss `sample` observed into its signal and noise parts.
/// A sample that never appears yields empty sequences.
pub fn decompose_run(log: &[LogRecord], sample: SampleId) -> Result<SignalNoise, SignalError> {
    let mut out = SignalNoise::default();
    for rec in log {
        let Some(pos) = rec.indices.iter().position(|&id| id == sample) else {
            continue;
        };
        let per = rec
            .per_sample_losses
            .as_deref()
            .ok_or(SignalError::NotInstrumented { step: rec.step })?;
        let d = decompose_batch(per, pos)?;
        out.signal.push(d.signal);
        out.noise.push(d.noise);
    }
    Ok(out)
}

/// `decompose_run` for every sample `0..n_samples` in a single pass over the
/// log. Indices at or beyond `n_samples` are ignored.
pub fn decompose_all(log: &[LogRecord], n_samples: usize) -> Result<Vec<SignalNoise>, SignalError> {
    let mut out = vec![SignalNoise::default(); n_samples];
    for rec in log {
        let per = rec
            .per_sample_losses
            .as_deref()
            .ok_or(SignalError::NotInstrumented { step: rec.step })?;
        if per.len() != rec.indices.len() {
            return Err(SignalError::LengthMismatch {
                step: rec.step,
                indices: rec.indices.len(),
                losses: per.len(),
            });
        }
        for (pos, id) in rec.indices.iter().enumerate() {
            let Some(slot) = out.get_mut(id.index()) else {
                continue;
            };
            let d = decompose_batch(per, pos)?;
            slot.signal.push(d.signal);
            slot.noise.push(d.noise);
        }
    }
    Ok(out)
}
