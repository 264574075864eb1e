//! Approximated Dropout and Leaky ReLU: multiplicative Gaussian noise on
//! every spectral element, independently per branch. Dropout uses
//! N(1, p/2), the Leaky ReLU surrogate N(1, p/4). Both are identities at
//! inference time.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::plane::FeatureBlock;
use crate::rng::{rng_for, TAG_NOISE};

/// Hyperparameters for the two noise layers of a block.
#[derive(Debug, Clone, Copy)]
pub struct NoiseLayerConfig {
    pub drop_rate: f64,
}

impl NoiseLayerConfig {
    pub fn new(drop_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&drop_rate) {
            return Err(Error::Config(format!(
                "drop_rate must be in [0, 1), got {drop_rate}"
            )));
        }
        Ok(NoiseLayerConfig { drop_rate })
    }

    /// Standard deviation of the dropout multiplier.
    pub fn dropout_sigma(&self) -> f64 {
        self.drop_rate / 2.0
    }

    /// Standard deviation of the Leaky ReLU multiplier.
    pub fn leaky_sigma(&self) -> f64 {
        self.drop_rate / 4.0
    }
}

/// Per-step noise coordinates; multipliers are a pure function of
/// (master seed, step, layer id, sample index), so batch elements can be
/// processed in any order and backward can regenerate them.
#[derive(Debug, Clone, Copy)]
pub struct NoiseCtx {
    pub seed: u64,
    pub step: u64,
}

#[derive(Debug)]
pub struct GaussianNoise {
    pub sigma: f64,
    pub layer_id: u64,
    /// Explicit multipliers for frozen-noise gradient checks; when set they
    /// override sampling in both passes.
    pub frozen: Option<Vec<f64>>,
}

impl GaussianNoise {
    pub fn new(sigma: f64, layer_id: u64) -> Self {
        assert!(sigma >= 0.0);
        GaussianNoise {
            sigma,
            layer_id,
            frozen: None,
        }
    }

    /// Draw this sample's multiplier stream: `count` values for its slice of
    /// the data, in slice order.
    fn sample_multipliers(&self, ctx: &NoiseCtx, sample: usize, count: usize) -> Vec<f64> {
        let normal = Normal::new(1.0, self.sigma).unwrap();
        let mut rng = rng_for(&[ctx.seed, TAG_NOISE, ctx.step, self.layer_id, sample as u64]);
        (0..count).map(|_| normal.sample(&mut rng)).collect()
    }

    /// Training forward on a feature block: every element of both branches
    /// is multiplied by an independent N(1, sigma) draw. Identity when
    /// sigma == 0.
    pub fn forward_block(&self, block: &FeatureBlock, ctx: &NoiseCtx) -> FeatureBlock {
        if self.sigma == 0.0 && self.frozen.is_none() {
            return block.clone();
        }
        let mut out = block.clone();
        self.apply(&mut out.re, &mut out.im, block.batch(), ctx);
        out
    }

    /// Backward: gradients pick up the same multipliers.
    pub fn backward_block(&self, grad: &FeatureBlock, ctx: &NoiseCtx) -> FeatureBlock {
        self.forward_block(grad, ctx)
    }

    /// Training forward on a (batch x features) real matrix.
    pub fn forward_matrix(&self, x: &[f64], batch: usize, ctx: &NoiseCtx) -> Vec<f64> {
        let mut out = x.to_vec();
        if self.sigma == 0.0 && self.frozen.is_none() {
            return out;
        }
        let features = x.len() / batch;
        if let Some(frozen) = &self.frozen {
            assert_eq!(frozen.len(), x.len(), "frozen multiplier shape mismatch");
            for (v, m) in out.iter_mut().zip(frozen) {
                *v *= m;
            }
            return out;
        }
        for s in 0..batch {
            let m = self.sample_multipliers(ctx, s, features);
            for (v, mi) in out[s * features..(s + 1) * features].iter_mut().zip(&m) {
                *v *= mi;
            }
        }
        out
    }

    pub fn backward_matrix(&self, grad: &[f64], batch: usize, ctx: &NoiseCtx) -> Vec<f64> {
        self.forward_matrix(grad, batch, ctx)
    }

    fn apply(&self, re: &mut [f64], im: &mut [f64], batch: usize, ctx: &NoiseCtx) {
        let per_sample = re.len() / batch;
        if let Some(frozen) = &self.frozen {
            assert_eq!(frozen.len(), 2 * re.len(), "frozen multiplier shape mismatch");
            let (m_re, m_im) = frozen.split_at(re.len());
            for (v, m) in re.iter_mut().zip(m_re) {
                *v *= m;
            }
            for (v, m) in im.iter_mut().zip(m_im) {
                *v *= m;
            }
            return;
        }
        // Per sample: multipliers for its real slice, then its imaginary slice.
        for s in 0..batch {
            let m = self.sample_multipliers(ctx, s, 2 * per_sample);
            let (m_re, m_im) = m.split_at(per_sample);
            for (v, mi) in re[s * per_sample..(s + 1) * per_sample].iter_mut().zip(m_re) {
                *v *= mi;
            }
            for (v, mi) in im[s * per_sample..(s + 1) * per_sample].iter_mut().zip(m_im) {
                *v *= mi;
            }
        }
    }

    /// Freeze the multipliers that the given shape would sample, so repeated
    /// forwards see identical noise (gradient checks).
    pub fn freeze_for_block(&mut self, block_len: usize, batch: usize, ctx: &NoiseCtx) {
        let per_sample = block_len / batch;
        let mut all = vec![1.0; 2 * block_len];
        let (re_half, im_half) = all.split_at_mut(block_len);
        for s in 0..batch {
            let m = self.sample_multipliers(ctx, s, 2 * per_sample);
            let (m_re, m_im) = m.split_at(per_sample);
            re_half[s * per_sample..(s + 1) * per_sample].copy_from_slice(m_re);
            im_half[s * per_sample..(s + 1) * per_sample].copy_from_slice(m_im);
        }
        self.frozen = Some(all);
    }

    pub fn freeze_for_matrix(&mut self, len: usize, batch: usize, ctx: &NoiseCtx) {
        let features = len / batch;
        let mut all = vec![1.0; len];
        for s in 0..batch {
            let m = self.sample_multipliers(ctx, s, features);
            all[s * features..(s + 1) * features].copy_from_slice(&m);
        }
        self.frozen = Some(all);
    }
}

/// Approximated Dropout on a feature block.
pub fn approx_dropout(
    block: &FeatureBlock,
    cfg: &NoiseLayerConfig,
    ctx: &NoiseCtx,
    layer_id: u64,
) -> FeatureBlock {
    GaussianNoise::new(cfg.dropout_sigma(), layer_id).forward_block(block, ctx)
}

/// Approximated Leaky ReLU on a feature block.
pub fn approx_leaky_relu(
    block: &FeatureBlock,
    cfg: &NoiseLayerConfig,
    ctx: &NoiseCtx,
    layer_id: u64,
) -> FeatureBlock {
    GaussianNoise::new(cfg.leaky_sigma(), layer_id).forward_block(block, ctx)
}
