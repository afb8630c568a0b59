//! Small supervised trainer used to exercise the scorer end to end.
//!
//! Softmax regression or a one-hidden-layer tanh MLP, trained with plain
//! minibatch SGD on Gaussian-cluster data. Gradients are analytic.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::log::LogRecord;
use crate::pruning::{BatchSampler, CycleSchedule, PruneError, PrunePolicy};
use crate::score::{EmaConfig, SampleId, ScoreError, ScoreSnapshot};
use crate::session::{BlsSession, SessionError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}, step {step}: {what}")]
    Diverged {
        epoch: usize,
        step: u64,
        what: String,
    },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Prune(#[from] PruneError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetSpec {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    /// Standard deviation of each cluster around its centre. Centres are
    /// drawn from a standard normal.
    pub cluster_spread: f64,
    /// Fraction of training labels replaced by a different class.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            n_features: 20,
            n_classes: 5,
            cluster_spread: 2.0,
            label_noise: 0.1,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidDataset(m.to_string()));
        if self.n_classes > self.n_samples {
            return bad("more classes than samples");
        }
        if self.n_samples < 2 {
            return bad("need at least two samples for a train/test split");
        }
        if self.n_features == 0 {
            return bad("n_features must be positive");
        }
        if self.n_classes < 2 {
            return bad("need at least two classes");
        }
        if !(self.cluster_spread.is_finite() && self.cluster_spread > 0.0) {
            return bad("cluster_spread must be positive");
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return bad("label_noise must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Row-major feature matrix with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub x: Vec<f64>,
    pub y: Vec<usize>,
    /// Labels before noise was injected.
    pub clean_y: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize, d: usize) -> &[f64] {
        &self.x[i * d..(i + 1) * d]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n_features: usize,
    pub n_classes: usize,
    pub train: Split,
    pub test: Split,
}

impl Dataset {
    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn train_row(&self, id: SampleId) -> &[f64] {
        self.train.row(id.0, self.n_features)
    }
}

/// `k` Gaussian clusters, shuffled into a fixed 80/20 split. Label noise only
/// touches the training split.
pub fn make_synthetic_dataset(spec: &DatasetSpec) -> Result<Dataset, TrainError> {
    spec.validate()?;
    let (n, d, k) = (spec.n_samples, spec.n_features, spec.n_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let centres: Vec<f64> = (0..k * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        y.push(c);
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            x.push(centres[c * d + j] + spec.cluster_spread * z);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = ((n * 4) / 5).clamp(1, n - 1);

    let take = |rows: &[usize]| Split {
        x: rows.iter().flat_map(|&r| x[r * d..(r + 1) * d].iter().copied()).collect(),
        y: rows.iter().map(|&r| y[r]).collect(),
        clean_y: rows.iter().map(|&r| y[r]).collect(),
    };
    let mut train = take(&order[..n_train]);
    let mut test = take(&order[n_train..]);
    standardize(&mut train, &mut test, d);

    for label in train.y.iter_mut() {
        if rng.random::<f64>() < spec.label_noise {
            let shift = rng.random_range(1..k);
            *label = (*label + shift) % k;
        }
    }
    Ok(Dataset {
        n_features: d,
        n_classes: k,
        train,
        test,
    })
}

/// Z-scores every feature with training-split statistics.
fn standardize(train: &mut Split, test: &mut Split, d: usize) {
    let n = train.len() as f64;
    for j in 0..d {
        let col = |s: &Split| (0..s.len()).map(move |i| i * d + j);
        let mu = col(train).map(|i| train.x[i]).sum::<f64>() / n;
        let var = col(train).map(|i| (train.x[i] - mu).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for s in [&mut *train, &mut *test] {
            for i in col(s) {
                s.x[i] = (s.x[i] - mu) / sd;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    Softmax,
    Mlp { hidden: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub arch: Arch,
    pub init_seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            arch: Arch::Softmax,
            init_seed: 0,
        }
    }
}

/// Parameters live in one flat vector.
/// Softmax: `[W (k x d), b (k)]`. MLP: `[W1 (h x d), b1 (h), W2 (k x h), b2 (k)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    arch: Arch,
    d: usize,
    k: usize,
    pub params: Vec<f64>,
}

impl Model {
    pub fn new(spec: &ModelSpec, n_features: usize, n_classes: usize) -> Result<Self, TrainError> {
        if let Arch::Mlp { hidden: 0 } = spec.arch {
            return Err(TrainError::InvalidConfig("hidden width must be positive".into()));
        }
        let (d, k) = (n_features, n_classes);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let mut gauss = |n: usize, scale: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect::<Vec<f64>>()
        };
        let params = match spec.arch {
            Arch::Softmax => {
                let mut p = gauss(k * d, 0.01);
                p.extend(std::iter::repeat_n(0.0, k));
                p
            }
            Arch::Mlp { hidden: h } => {
                let mut p = gauss(h * d, 1.0 / (d as f64).sqrt());
                p.extend(std::iter::repeat_n(0.0, h));
                p.extend(gauss(k * h, 1.0 / (h as f64).sqrt()));
                p.extend(std::iter::repeat_n(0.0, k));
                p
            }
        };
        Ok(Self { arch: spec.arch, d, k, params })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Logits for one input. `h_buf` receives the hidden activations.
    fn logits(&self, x: &[f64], h_buf: &mut Vec<f64>, out: &mut Vec<f64>) {
        let (d, k) = (self.d, self.k);
        out.clear();
        match self.arch {
            Arch::Softmax => {
                let (w, b) = self.params.split_at(k * d);
                for c in 0..k {
                    out.push(b[c] + dot(&w[c * d..(c + 1) * d], x));
                }
            }
            Arch::Mlp { hidden: h } => {
                let (w1, rest) = self.params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(k * h);
                h_buf.clear();
                for u in 0..h {
                    h_buf.push((b1[u] + dot(&w1[u * d..(u + 1) * d], x)).tanh());
                }
                for c in 0..k {
                    out.push(b2[c] + dot(&w2[c * h..(c + 1) * h], h_buf));
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut h = Vec::new();
        let mut z = Vec::new();
        self.logits(x, &mut h, &mut z);
        argmax(&z)
    }

    /// Cross-entropy of one sample. When `grad` is given, adds `weight` times
    /// the sample's gradient into it.
    fn sample_loss(&self, x: &[f64], y: usize, grad: Option<(&mut [f64], f64)>, s: &mut Scratch) -> f64 {
        self.logits(x, &mut s.h, &mut s.z);
        let lse = log_sum_exp(&s.z);
        let loss = lse - s.z[y];
        if let Some((g, weight)) = grad {
            let (d, k) = (self.d, self.k);
            s.dz.clear();
            s.dz.extend(s.z.iter().map(|&zc| (zc - lse).exp() * weight));
            s.dz[y] -= weight;
            match self.arch {
                Arch::Softmax => {
                    let (gw, gb) = g.split_at_mut(k * d);
                    for c in 0..k {
                        axpy(s.dz[c], x, &mut gw[c * d..(c + 1) * d]);
                        gb[c] += s.dz[c];
                    }
                }
                Arch::Mlp { hidden: h } => {
                    let w2 = &self.params[h * d + h..h * d + h + k * h];
                    let (gw1, rest) = g.split_at_mut(h * d);
                    let (gb1, rest) = rest.split_at_mut(h);
                    let (gw2, gb2) = rest.split_at_mut(k * h);
                    s.dh.clear();
                    s.dh.resize(h, 0.0);
                    for c in 0..k {
                        axpy(s.dz[c], &s.h, &mut gw2[c * h..(c + 1) * h]);
                        gb2[c] += s.dz[c];
                        axpy(s.dz[c], &w2[c * h..(c + 1) * h], &mut s.dh);
                    }
                    for u in 0..h {
                        let pre = s.dh[u] * (1.0 - s.h[u] * s.h[u]);
                        axpy(pre, x, &mut gw1[u * d..(u + 1) * d]);
                        gb1[u] += pre;
                    }
                }
            }
        }
        loss
    }
}

#[derive(Default)]
struct Scratch {
    h: Vec<f64>,
    z: Vec<f64>,
    dz: Vec<f64>,
    dh: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

fn check_batch(batch: &[SampleId]) -> Result<(), TrainError> {
    if batch.is_empty() {
        Err(TrainError::EmptyBatch)
    } else {
        Ok(())
    }
}

/// Cross-entropy of every batch member, in batch order.
pub fn per_sample_losses(model: &Model, data: &Dataset, batch: &[SampleId]) -> Result<Vec<f64>, TrainError> {
    check_batch(batch)?;
    let mut s = Scratch::default();
    let losses: Vec<f64> = batch
        .iter()
        .map(|&id| model.sample_loss(data.train_row(id), data.train.y[id.0], None, &mut s))
        .collect();
    if losses.iter().all(|l| l.is_finite()) {
        Ok(losses)
    } else {
        Err(TrainError::NonFinite("logits"))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean cross-entropy over the batch.
pub fn mean_batch_loss(model: &Model, data: &Dataset, batch: &[SampleId]) -> Result<f64, TrainError> {
    Ok(mean(&per_sample_losses(model, data, batch)?))
}

/// Forward and backward pass over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPass {
    pub per_sample: Vec<f64>,
    pub mean_loss: f64,
    /// Gradient of the mean loss.
    pub grad: Vec<f64>,
}

pub fn forward_backward(model: &Model, data: &Dataset, batch: &[SampleId]) -> Result<BatchPass, TrainError> {
    check_batch(batch)?;
    let mut s = Scratch::default();
    let mut grad = vec![0.0; model.n_params()];
    let w = 1.0 / batch.len() as f64;
    let per_sample: Vec<f64> = batch
        .iter()
        .map(|&id| {
            model.sample_loss(
                data.train_row(id),
                data.train.y[id.0],
                Some((&mut grad, w)),
                &mut s,
            )
        })
        .collect();
    let mean_loss = mean(&per_sample);
    if !mean_loss.is_finite() {
        return Err(TrainError::NonFinite("logits"));
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(TrainError::NonFinite("gradient"));
    }
    Ok(BatchPass {
        per_sample,
        mean_loss,
        grad,
    })
}

/// `theta -= lr * scale * grad`.
pub fn sgd_step(model: &mut Model, grad: &[f64], lr: f64, scale: f64) -> Result<(), TrainError> {
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(TrainError::NonFinite("gradient"));
    }
    let step = lr * scale;
    for (p, g) in model.params.iter_mut().zip(grad) {
        *p -= step * g;
    }
    if model.params.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(TrainError::NonFinite("parameters"))
    }
}

pub fn accuracy(model: &Model, split: &Split, d: usize) -> f64 {
    if split.is_empty() {
        return 0.0;
    }
    let hits = (0..split.len())
        .filter(|&i| model.predict(split.row(i, d)) == split.y[i])
        .count();
    hits as f64 / split.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub ema: EmaConfig,
    pub policy: PrunePolicy,
    pub cycle_len_epochs: usize,
    /// Attach per-sample losses to the emitted step records.
    pub instrument_per_sample: bool,
    /// Drives pruning draws and batch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.1,
            ema: EmaConfig::default(),
            policy: PrunePolicy::threshold(DESK_PRUNE_PROB),
            cycle_len_epochs: 1,
            instrument_per_sample: false,
            seed: 0,
        }
    }
}

/// Prune probability that lands the desk task near 30% pruned.
pub const DESK_PRUNE_PROB: f64 = 0.6;

impl TrainConfig {
    /// Full-data baseline: same wiring, nothing pruned.
    pub fn full(self) -> Self {
        Self {
            policy: PrunePolicy::Full,
            ..self
        }
    }

    /// Scores are the last observed batch loss instead of an average.
    pub fn without_ema(self) -> Self {
        Self {
            ema: EmaConfig::last_loss(),
            ..self
        }
    }

    pub fn schedule(&self) -> Result<CycleSchedule, TrainError> {
        Ok(CycleSchedule::new(self.cycle_len_epochs, self.epochs)?)
    }

    pub fn validate(&self, n_train: usize) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 || self.batch_size > n_train {
            return bad(format!(
                "batch size {} must lie in [1, {}]",
                self.batch_size, n_train
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        self.policy.validate()?;
        self.schedule()?;
        Ok(())
    }
}

/// Salt separating batch order from pruning draws.
const SAMPLER_SEED_SALT: u64 = 0xb5ad_4ece_da1c_e2a9;

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub final_train_acc: f64,
    pub final_test_acc: f64,
    pub pruned_percent: f64,
    /// Sample visits actually trained on.
    pub sample_visits: u64,
    pub steps: u64,
    pub wall_time: f64,
    /// Mean of the per-step mean losses, one entry per epoch.
    pub loss_curve: Vec<f64>,
    pub score_table_final: ScoreSnapshot,
    pub final_params: Vec<f64>,
}

impl RunMetrics {
    /// Equality on everything except wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self {
            wall_time: 0.0,
            ..self.clone()
        } == Self {
            wall_time: 0.0,
            ..other.clone()
        }
    }
}

/// What the loop reports after each step.
pub struct StepEvent<'a> {
    pub epoch: usize,
    pub record: &'a LogRecord,
    /// Loss multiplier applied to this step's gradient.
    pub scale: f64,
    pub params: &'a [f64],
}

pub trait Observer {
    fn on_step(&mut self, _ev: &StepEvent<'_>) {}
}

impl Observer for () {}

/// Collects every step record; the result is a replayable log.
#[derive(Default, Debug)]
pub struct LogRecorder {
    pub records: Vec<LogRecord>,
}

impl Observer for LogRecorder {
    fn on_step(&mut self, ev: &StepEvent<'_>) {
        self.records.push(ev.record.clone());
    }
}

/// Keeps a copy of the parameters after every step.
#[derive(Default, Debug)]
pub struct TrajectoryRecorder {
    pub params: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
}

impl Observer for TrajectoryRecorder {
    fn on_step(&mut self, ev: &StepEvent<'_>) {
        self.params.push(ev.params.to_vec());
        self.losses.push(ev.record.mean_loss);
    }
}

pub fn run_experiment(data: &Dataset, model: &ModelSpec, cfg: &TrainConfig) -> Result<RunMetrics, TrainError> {
    run_experiment_with(data, model, cfg, &mut ())
}

/// The scored training loop: per cycle select the active set, per step
/// compute the mean batch loss, hand it to the scorer, and take an SGD step
/// with the returned loss scale.
pub fn run_experiment_with(
    data: &Dataset,
    model_spec: &ModelSpec,
    cfg: &TrainConfig,
    observer: &mut dyn Observer,
) -> Result<RunMetrics, TrainError> {
    let n = data.n_train();
    cfg.validate(n)?;
    let start = Instant::now();
    let mut model = Model::new(model_spec, data.n_features, data.n_classes)?;
    let mut session = BlsSession::new(n, cfg.ema, cfg.policy, cfg.schedule()?, cfg.seed)?;
    let sampler_seed = cfg.seed ^ SAMPLER_SEED_SALT;

    let mut step = 0u64;
    let mut visits = 0u64;
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = session.next_epoch_indices(cfg.batch_size, sampler_seed)?;
        let mut epoch_loss = 0.0;
        let n_batches = batches.len();
        for batch in batches {
            let diverged = |what: String| TrainError::Diverged { epoch, step, what };
            let pass = forward_backward(&model, data, &batch).map_err(|e| diverged(e.to_string()))?;
            let scale = session.begin_batch(batch.clone())?;
            session.update(pass.mean_loss).map_err(|e| match e {
                SessionError::Score(ScoreError::NonFinite { .. }) => diverged(e.to_string()),
                other => other.into(),
            })?;
            sgd_step(&mut model, &pass.grad, cfg.learning_rate, scale)
                .map_err(|e| diverged(e.to_string()))?;

            visits += batch.len() as u64;
            epoch_loss += pass.mean_loss;
            let mut record = LogRecord::new(step, batch, pass.mean_loss);
            if cfg.instrument_per_sample {
                record = record.with_per_sample(pass.per_sample);
            }
            observer.on_step(&StepEvent {
                epoch,
                record: &record,
                scale,
                params: &model.params,
            });
            step += 1;
        }
        loss_curve.push(epoch_loss / n_batches as f64);
    }

    Ok(RunMetrics {
        final_train_acc: accuracy(&model, &data.train, data.n_features),
        final_test_acc: accuracy(&model, &data.test, data.n_features),
        pruned_percent: session.pruned_percent(),
        sample_visits: visits,
        steps: step,
        wall_time: start.elapsed().as_secs_f64(),
        loss_curve,
        score_table_final: session.scores_snapshot(),
        final_params: model.params,
    })
}

/// Minibatch SGD with no scorer at all: same batch order and update rule as
/// [`run_experiment`] under a no-op policy.
pub fn run_plain_sgd(
    data: &Dataset,
    model_spec: &ModelSpec,
    cfg: &TrainConfig,
    observer: &mut dyn Observer,
) -> Result<(Model, Vec<f64>), TrainError> {
    let n = data.n_train();
    cfg.validate(n)?;
    let mut model = Model::new(model_spec, data.n_features, data.n_classes)?;
    let sampler = BatchSampler::new((0..n).map(SampleId).collect(), cfg.batch_size, cfg.seed ^ SAMPLER_SEED_SALT)?;
    let mut step = 0u64;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = sampler.epoch(epoch);
        let n_batches = batches.len();
        let mut total = 0.0;
        for batch in batches {
            let diverged = |what: String| TrainError::Diverged { epoch, step, what };
            let pass = forward_backward(&model, data, &batch).map_err(|e| diverged(e.to_string()))?;
            for (p, g) in model.params.iter_mut().zip(&pass.grad) {
                *p -= cfg.learning_rate * g;
            }
            total += pass.mean_loss;
            let record = LogRecord::new(step, batch, pass.mean_loss);
            observer.on_step(&StepEvent {
                epoch,
                record: &record,
                scale: 1.0,
                params: &model.params,
            });
            step += 1;
        }
        curve.push(total / n_batches as f64);
    }
    Ok((model, curve))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub pruned_percent: f64,
}

/// One run per decay factor, everything else fixed.
pub fn alpha_sweep(
    data: &Dataset,
    model: &ModelSpec,
    base: &TrainConfig,
    alphas: &[f64],
) -> Result<Vec<SweepRow>, TrainError> {
    alphas
        .iter()
        .map(|&alpha| {
            let ema = EmaConfig::new(alpha, base.ema.init()).map_err(|e: ScoreError| {
                TrainError::InvalidConfig(e.to_string())
            })?;
            let m = run_experiment(data, model, &TrainConfig { ema, ..*base })?;
            Ok(SweepRow {
                alpha,
                train_acc: m.final_train_acc,
                test_acc: m.final_test_acc,
                pruned_percent: m.pruned_percent,
            })
        })
        .collect()
}

/// Decay factors swept by default; includes 0.7.
pub const DEFAULT_SWEEP_ALPHAS: [f64; 6] = [0.3, 0.5, 0.7, 0.8, 0.9, 1.0];

/// Named experiment setups.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Desk-scale BLS run with threshold soft pruning.
    Desk,
    /// Same task, full data.
    DeskFull,
    /// Same task, scores are the last batch loss.
    DeskNoEma,
    /// Same task, difficulty window sliding easy to hard.
    DeskWindow,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Preset::Desk),
            "desk-full" => Some(Preset::DeskFull),
            "desk-no-ema" => Some(Preset::DeskNoEma),
            "desk-window" => Some(Preset::DeskWindow),
            _ => None,
        }
    }

    pub fn build(self) -> (DatasetSpec, ModelSpec, TrainConfig) {
        let base = TrainConfig::default();
        let cfg = match self {
            Preset::Desk => base,
            Preset::DeskFull => base.full(),
            Preset::DeskNoEma => base.without_ema(),
            Preset::DeskWindow => TrainConfig {
                policy: PrunePolicy::WindowSelect {
                    keep_fraction: 0.7,
                    progress: crate::pruning::WindowProgress::EasyToHard,
                },
                ..base
            },
        };
        (DatasetSpec::default(), ModelSpec::default(), cfg)
    }
}
