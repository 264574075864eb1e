//! Training: RMSProp with a cosine-decayed learning rate, softmax
//! cross-entropy, the per-step weight domain-transfer cycle, and evaluation.

use std::io::Write;

use rand::Rng;

use crate::data::{to_frequency_input, BatchIterator, Dataset};
use crate::error::{Error, Result};
use crate::layers::{NoiseCtx, SpectralWeight};
use crate::models::{Mode, Network};

/// He-normal initialization of a multiply layer: time kernels drawn from
/// N(0, sqrt(2 / (K^2 Cin))), then transferred to the frequency domain.
pub fn he_normal_spectral_init<R: Rng>(weight: &mut SpectralWeight, rng: &mut R) {
    weight.init_he_normal(rng);
}

/// Run configuration. Defaults follow the reference training setup: batch
/// 100, 800 epochs, RMSProp, cosine decay from 4e-3 to 1e-7, drop rate 0.5.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_init: f64,
    pub lr_min: f64,
    pub drop_rate: f64,
    pub seed: u64,
    /// RMSProp squared-gradient decay.
    pub rho: f64,
    /// RMSProp denominator stabilizer.
    pub eps_opt: f64,
    /// Cap on test samples used for the per-epoch evaluation.
    pub eval_limit: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            epochs: 800,
            lr_init: 0.004,
            lr_min: 1e-7,
            drop_rate: 0.5,
            seed: 0,
            rho: 0.9,
            eps_opt: 1e-7,
            eval_limit: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_min > self.lr_init {
            return Err(Error::Config("lr_min must be <= lr_init".into()));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::Config("drop_rate must be in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rho) || self.eps_opt <= 0.0 {
            return Err(Error::Config("invalid optimizer constants".into()));
        }
        Ok(())
    }
}

/// Cosine-decayed learning rate:
/// lr(step) = lr_min + 0.5 (lr_init - lr_min) (1 + cos(pi step / total)).
pub fn cosine_decay_lr(step: usize, total_steps: usize, cfg: &TrainConfig) -> Result<f64> {
    if step > total_steps {
        return Err(Error::StepOutOfRange {
            step,
            total: total_steps,
        });
    }
    if total_steps == 0 {
        return Ok(cfg.lr_init);
    }
    let t = step as f64 / total_steps as f64;
    Ok(cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min) * (1.0 + (std::f64::consts::PI * t).cos()))
}

/// One RMSProp update over an aligned (values, grads, accumulator) triple:
/// acc <- rho acc + (1 - rho) g^2; v <- v - lr g / (sqrt(acc) + eps).
pub fn rmsprop_update(
    values: &mut [f64],
    grads: &[f64],
    sq_avg: &mut [f64],
    lr: f64,
    rho: f64,
    eps: f64,
) {
    for ((v, &g), acc) in values.iter_mut().zip(grads).zip(sq_avg.iter_mut()) {
        *acc = rho * *acc + (1.0 - rho) * g * g;
        *v -= lr * g / (acc.sqrt() + eps);
    }
}

/// Softmax cross-entropy over row-major logits. Returns the mean loss, the
/// logit gradient (already scaled by 1/batch), and the correct-argmax count.
pub fn softmax_cross_entropy(
    logits: &[f64],
    labels: &[u8],
    classes: usize,
) -> (f64, Vec<f64>, usize) {
    let batch = labels.len();
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    let mut correct = 0;
    let inv_s = 1.0 / batch as f64;
    for (s, &label) in labels.iter().enumerate() {
        let row = &logits[s * classes..(s + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &z in row {
            denom += (z - max).exp();
        }
        let log_denom = denom.ln();
        loss += -(row[label as usize] - max - log_denom) * inv_s;

        let mut argmax = 0;
        let mut best = row[0];
        for (j, &z) in row.iter().enumerate().skip(1) {
            if z > best {
                best = z;
                argmax = j;
            }
        }
        if argmax == label as usize {
            correct += 1;
        }

        let g = &mut grad[s * classes..(s + 1) * classes];
        for (j, gj) in g.iter_mut().enumerate() {
            let p = (row[j] - max).exp() / denom;
            *gj = (p - if j == label as usize { 1.0 } else { 0.0 }) * inv_s;
        }
    }
    (loss, grad, correct)
}

/// Per-step result.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f64,
}

/// A raw training mini-batch (normalized pixels plus labels).
pub struct BatchView<'a> {
    pub images: &'a [f64],
    pub labels: &'a [u8],
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
}

/// One training step, executing the full cycle: refresh spectral weights
/// from the canonical kernels, forward, softmax cross-entropy, backward,
/// RMSProp on the spectral weights, then Weight Fixation.
pub fn train_step(
    network: &mut Network,
    batch: &BatchView,
    step: usize,
    total_steps: usize,
    cfg: &TrainConfig,
) -> Result<StepStats> {
    network.set_mode(Mode::Training);
    network.refresh_weights();
    let s = batch.labels.len();
    let fb = to_frequency_input(batch.images, s, batch.channels, batch.rows, batch.cols);
    let ctx = NoiseCtx {
        seed: cfg.seed,
        step: step as u64,
    };
    let logits = network.forward(fb, &ctx)?;
    let (loss, grad, correct) = softmax_cross_entropy(&logits, batch.labels, network.spec.classes);
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    network.backward(&grad, &ctx)?;
    let lr = cosine_decay_lr(step, total_steps, cfg)?;
    let (rho, eps) = (cfg.rho, cfg.eps_opt);
    network.visit_params(&mut |_, p| {
        let (values, grads, sq) = (&mut p.values, &p.grad, &mut p.sq_avg);
        rmsprop_update(values, grads, sq, lr, rho, eps);
    });
    network.apply_fixation();
    network.zero_grads();
    Ok(StepStats {
        loss,
        accuracy: correct as f64 / s as f64,
        lr,
    })
}

/// Argmax accuracy over a dataset in inference mode (noise layers off, batch
/// norm on running statistics). Ties break to the first class. Parameters
/// are untouched.
pub fn evaluate(network: &mut Network, dataset: &Dataset, limit: Option<usize>) -> Result<f64> {
    if dataset.len() == 0 {
        return Err(Error::EmptyDataset);
    }
    let n = limit.map_or(dataset.len(), |l| l.min(dataset.len()));
    let prev_mode = network.mode();
    network.set_mode(Mode::Inference);
    network.refresh_weights();
    let ctx = NoiseCtx { seed: 0, step: 0 };
    let chunk = 100usize;
    let mut correct = 0usize;
    let mut start = 0usize;
    while start < n {
        let end = (start + chunk).min(n);
        let images = dataset.images_slice(start, end);
        let fb = to_frequency_input(
            images,
            end - start,
            dataset.channels,
            dataset.rows,
            dataset.cols,
        );
        let logits = network.forward(fb, &ctx)?;
        let classes = network.spec.classes;
        for (s, &label) in dataset.labels[start..end].iter().enumerate() {
            let row = &logits[s * classes..(s + 1) * classes];
            let mut argmax = 0;
            let mut best = row[0];
            for (j, &z) in row.iter().enumerate().skip(1) {
                if z > best {
                    best = z;
                    argmax = j;
                }
            }
            if argmax == label as usize {
                correct += 1;
            }
        }
        start = end;
    }
    network.set_mode(prev_mode);
    Ok(correct as f64 / n as f64)
}

/// One CSV row per epoch.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub lr: f64,
    pub wall_secs: f64,
}

pub const METRICS_CSV_HEADER: &str = "epoch,step,train_loss,train_acc,test_acc,lr,wall_secs";

pub fn format_metrics_row(r: &MetricsRecord) -> String {
    format!(
        "{},{},{:.6},{:.4},{:.4},{:.8e},{:.3}",
        r.epoch, r.step, r.train_loss, r.train_acc, r.test_acc, r.lr, r.wall_secs
    )
}

/// Append-only CSV sink with a stable schema.
pub struct MetricsCsvWriter<W: Write> {
    writer: W,
    wrote_header: bool,
}

impl<W: Write> MetricsCsvWriter<W> {
    pub fn new(writer: W) -> Self {
        MetricsCsvWriter {
            writer,
            wrote_header: false,
        }
    }

    pub fn write_record(&mut self, record: &MetricsRecord) -> std::io::Result<()> {
        if !self.wrote_header {
            writeln!(self.writer, "{}", METRICS_CSV_HEADER)?;
            self.wrote_header = true;
        }
        writeln!(self.writer, "{}", format_metrics_row(record))?;
        self.writer.flush()
    }
}

/// Epoch-level progress callback: (record just written).
pub type EpochHook<'a> = dyn FnMut(&MetricsRecord) + 'a;

/// Full training loop over `cfg.epochs`. Shuffles per (seed, epoch), drops
/// any partial trailing batch, evaluates on `test` after each epoch, and
/// reports wall time through `clock` (seconds since an arbitrary origin) so
/// deterministic harnesses can inject a fixed clock.
pub fn train_loop<W: Write>(
    network: &mut Network,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    sink: Option<&mut MetricsCsvWriter<W>>,
    clock: &mut dyn FnMut() -> f64,
    mut epoch_hook: Option<&mut EpochHook<'_>>,
) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let steps_per_epoch = train.len() / cfg.batch_size;
    if steps_per_epoch == 0 {
        return Err(Error::Config(format!(
            "training set of {} samples is smaller than one batch of {}",
            train.len(),
            cfg.batch_size
        )));
    }
    let total_steps = steps_per_epoch * cfg.epochs;
    let t0 = clock();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut sink = sink;
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut iter = BatchIterator::new(train.len(), cfg.batch_size, cfg.seed, epoch as u64);
        let mut loss_sum = 0.0;
        let mut acc_sum = 0.0;
        let mut last_lr = cfg.lr_init;
        while let Some(indices) = iter.next_batch() {
            let (images, labels) = train.gather(indices);
            let stats = train_step(
                network,
                &BatchView {
                    images: &images,
                    labels: &labels,
                    rows: train.rows,
                    cols: train.cols,
                    channels: train.channels,
                },
                step,
                total_steps,
                cfg,
            )?;
            loss_sum += stats.loss;
            acc_sum += stats.accuracy;
            last_lr = stats.lr;
            step += 1;
        }
        let test_acc = evaluate(network, test, cfg.eval_limit)?;
        network.set_mode(Mode::Training);
        let record = MetricsRecord {
            epoch: epoch + 1,
            step,
            train_loss: loss_sum / steps_per_epoch as f64,
            train_acc: acc_sum / steps_per_epoch as f64,
            test_acc,
            lr: last_lr,
            wall_secs: clock() - t0,
        };
        if let Some(sink) = sink.as_deref_mut() {
            sink.write_record(&record)?;
        }
        if let Some(hook) = epoch_hook.as_deref_mut() {
            hook(&record);
        }
        records.push(record);
    }
    Ok(records)
}
