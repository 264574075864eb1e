//! Batch normalization. One core handles both uses: frequency-domain BN
//! (statistics per frequency bin, learnable scale/shift per channel, applied
//! to each branch independently) and head-vector BN (per-feature).

use crate::error::{Error, Result};
use crate::layers::eml::ParamBuf;
use crate::plane::FeatureBlock;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Normalizes data laid out as (sample, group, bin): statistics are computed
/// per (group, bin) position over the batch; gamma/beta are per group.
#[derive(Debug)]
pub struct BnCore {
    pub groups: usize,
    pub bins: usize,
    pub gamma: ParamBuf,
    pub beta: ParamBuf,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BnCache>,
}

#[derive(Debug)]
struct BnCache {
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
    batch: usize,
}

impl BnCore {
    pub fn new(groups: usize, bins: usize) -> Self {
        let mut gamma = ParamBuf::zeros(groups);
        gamma.values.iter_mut().for_each(|g| *g = 1.0);
        BnCore {
            groups,
            bins,
            gamma,
            beta: ParamBuf::zeros(groups),
            running_mean: vec![0.0; groups * bins],
            running_var: vec![1.0; groups * bins],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    fn stat_len(&self) -> usize {
        self.groups * self.bins
    }

    /// Forward over `x` of length batch * groups * bins.
    pub fn forward(&mut self, x: &[f64], batch: usize, training: bool, keep_cache: bool) -> Result<Vec<f64>> {
        let stride = self.stat_len();
        if x.len() != batch * stride {
            return Err(Error::dims("batchnorm input", batch * stride, x.len()));
        }
        let mut out = vec![0.0; x.len()];

        if !training {
            for g in 0..self.groups {
                let gamma = self.gamma.values[g];
                let beta = self.beta.values[g];
                for e in 0..self.bins {
                    let p = g * self.bins + e;
                    let inv = 1.0 / (self.running_var[p] + self.eps).sqrt();
                    let mean = self.running_mean[p];
                    for s in 0..batch {
                        let idx = s * stride + p;
                        out[idx] = gamma * (x[idx] - mean) * inv + beta;
                    }
                }
            }
            return Ok(out);
        }

        if batch < 2 {
            return Err(Error::BatchTooSmall(batch));
        }

        let mut x_hat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; stride];
        let inv_s = 1.0 / batch as f64;
        for g in 0..self.groups {
            let gamma = self.gamma.values[g];
            let beta = self.beta.values[g];
            for e in 0..self.bins {
                let p = g * self.bins + e;
                let mut mean = 0.0;
                for s in 0..batch {
                    mean += x[s * stride + p];
                }
                mean *= inv_s;
                let mut var = 0.0;
                for s in 0..batch {
                    let d = x[s * stride + p] - mean;
                    var += d * d;
                }
                var *= inv_s;
                let inv = 1.0 / (var + self.eps).sqrt();
                inv_std[p] = inv;
                for s in 0..batch {
                    let idx = s * stride + p;
                    let xh = (x[idx] - mean) * inv;
                    x_hat[idx] = xh;
                    out[idx] = gamma * xh + beta;
                }
                self.running_mean[p] = self.momentum * self.running_mean[p] + (1.0 - self.momentum) * mean;
                self.running_var[p] = self.momentum * self.running_var[p] + (1.0 - self.momentum) * var;
            }
        }

        if keep_cache {
            self.cache = Some(BnCache { x_hat, inv_std, batch });
        }
        Ok(out)
    }

    /// Training-mode backward; accumulates gamma/beta gradients and returns
    /// the input gradient. Uses the fused batch-coupled formula for biased
    /// batch variance.
    pub fn backward(&mut self, grad_out: &[f64]) -> Result<Vec<f64>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Config("batchnorm backward without cached forward".into()))?;
        let batch = cache.batch;
        let stride = self.stat_len();
        if grad_out.len() != batch * stride {
            return Err(Error::dims("batchnorm grad", batch * stride, grad_out.len()));
        }
        let mut grad_in = vec![0.0; grad_out.len()];
        let inv_s = 1.0 / batch as f64;
        for g in 0..self.groups {
            let gamma = self.gamma.values[g];
            let mut d_gamma = 0.0;
            let mut d_beta = 0.0;
            for e in 0..self.bins {
                let p = g * self.bins + e;
                let inv = cache.inv_std[p];
                let mut sum_g = 0.0;
                let mut sum_gx = 0.0;
                for s in 0..batch {
                    let idx = s * stride + p;
                    sum_g += grad_out[idx];
                    sum_gx += grad_out[idx] * cache.x_hat[idx];
                }
                d_beta += sum_g;
                d_gamma += sum_gx;
                let k = gamma * inv;
                for s in 0..batch {
                    let idx = s * stride + p;
                    grad_in[idx] =
                        k * (grad_out[idx] - inv_s * sum_g - cache.x_hat[idx] * inv_s * sum_gx);
                }
            }
            self.gamma.grad[g] += d_gamma;
            self.beta.grad[g] += d_beta;
        }
        Ok(grad_in)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Frequency-domain batch normalization: the real and imaginary branches are
/// normalized independently, never mixed.
#[derive(Debug)]
pub struct FreqBatchNorm {
    pub re: BnCore,
    pub im: BnCore,
}

impl FreqBatchNorm {
    pub fn new(channels: usize, rows: usize, cols: usize) -> Self {
        FreqBatchNorm {
            re: BnCore::new(channels, rows * cols),
            im: BnCore::new(channels, rows * cols),
        }
    }

    pub fn forward(&mut self, block: &FeatureBlock, training: bool, keep_cache: bool) -> Result<FeatureBlock> {
        let batch = block.batch();
        let mut out = FeatureBlock::zeros(batch, block.channels(), block.rows(), block.cols());
        out.re = self.re.forward(&block.re, batch, training, keep_cache)?;
        out.im = self.im.forward(&block.im, batch, training, keep_cache)?;
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &FeatureBlock) -> Result<FeatureBlock> {
        let mut grad_in = FeatureBlock::zeros(
            grad_out.batch(),
            grad_out.channels(),
            grad_out.rows(),
            grad_out.cols(),
        );
        grad_in.re = self.re.backward(&grad_out.re)?;
        grad_in.im = self.im.backward(&grad_out.im)?;
        Ok(grad_in)
    }
}
