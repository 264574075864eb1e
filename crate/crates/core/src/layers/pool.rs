//! Max-pooling domain bridge: inverse-transform each channel to the time
//! domain, 2x2/stride-2 max-pool the real part (any imaginary residue is
//! discarded), transform the pooled plane back to the frequency domain.

use crate::error::{Error, Result};
use crate::fft::fft2_slices;
use crate::plane::FeatureBlock;

/// Fixed 2x2 window, stride 2.
#[derive(Debug, Clone, Copy)]
pub struct PoolConfig {
    pub window: usize,
    pub stride: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig { window: 2, stride: 2 }
    }
}

#[derive(Debug)]
pub struct PoolBridge {
    cache: Option<PoolCache>,
}

#[derive(Debug)]
struct PoolCache {
    /// Winning offset (dy*2 + dx) per pooled element, per (sample, channel).
    argmax: Vec<u8>,
    batch: usize,
    channels: usize,
    rows: usize,
    cols: usize,
}

impl PoolBridge {
    pub fn new() -> Self {
        PoolBridge { cache: None }
    }

    pub fn forward(&mut self, block: &FeatureBlock, keep_cache: bool) -> Result<FeatureBlock> {
        let rows = block.rows();
        let cols = block.cols();
        if rows % 2 != 0 || cols % 2 != 0 {
            return Err(Error::OddPoolInput { rows, cols });
        }
        let (out_rows, out_cols) = (rows / 2, cols / 2);
        let batch = block.batch();
        let channels = block.channels();
        let plen = rows * cols;
        let out_plen = out_rows * out_cols;

        let mut out = FeatureBlock::zeros(batch, channels, out_rows, out_cols);
        let mut argmax = vec![0u8; batch * channels * out_plen];
        let mut t_re = vec![0.0; plen];
        let mut t_im = vec![0.0; plen];
        let mut pooled = vec![0.0; out_plen];
        let zeros = vec![0.0; out_plen];

        for s in 0..batch {
            for c in 0..channels {
                let off = block.plane_offset(s, c);
                fft2_slices(
                    &block.re[off..off + plen],
                    &block.im[off..off + plen],
                    rows,
                    cols,
                    true,
                    &mut t_re,
                    &mut t_im,
                );
                // Pool the real part; the imaginary residue is dropped.
                let amax_off = (s * channels + c) * out_plen;
                for pr in 0..out_rows {
                    for pc in 0..out_cols {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0u8;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let v = t_re[(pr * 2 + dy) * cols + pc * 2 + dx];
                                if v > best {
                                    best = v;
                                    best_idx = (dy * 2 + dx) as u8;
                                }
                            }
                        }
                        pooled[pr * out_cols + pc] = best;
                        argmax[amax_off + pr * out_cols + pc] = best_idx;
                    }
                }
                let out_off = out.plane_offset(s, c);
                fft2_slices(
                    &pooled,
                    &zeros,
                    out_rows,
                    out_cols,
                    false,
                    &mut out.re[out_off..out_off + out_plen],
                    &mut out.im[out_off..out_off + out_plen],
                );
            }
        }
        if keep_cache {
            self.cache = Some(PoolCache {
                argmax,
                batch,
                channels,
                rows,
                cols,
            });
        }
        Ok(out)
    }

    /// Backward through forward-DFT, max-pool scatter, and inverse-DFT.
    /// Both transforms are linear, so only the argmax routing is cached.
    pub fn backward(&mut self, grad_out: &FeatureBlock) -> Result<FeatureBlock> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Config("pool backward without cached forward".into()))?;
        let (rows, cols) = (cache.rows, cache.cols);
        let (out_rows, out_cols) = (rows / 2, cols / 2);
        if grad_out.rows() != out_rows
            || grad_out.cols() != out_cols
            || grad_out.batch() != cache.batch
            || grad_out.channels() != cache.channels
        {
            return Err(Error::dims(
                "pool backward",
                format!("{}x{}x{}", cache.channels, out_rows, out_cols),
                format!("{}x{}x{}", grad_out.channels(), grad_out.rows(), grad_out.cols()),
            ));
        }
        let plen = rows * cols;
        let out_plen = out_rows * out_cols;
        let out_n = (out_plen) as f64;
        let n = plen as f64;

        let mut grad_in = FeatureBlock::zeros(cache.batch, cache.channels, rows, cols);
        let mut gp_re = vec![0.0; out_plen];
        let mut gp_im = vec![0.0; out_plen];
        let mut scattered = vec![0.0; plen];
        let zeros = vec![0.0; plen];

        for s in 0..cache.batch {
            for c in 0..cache.channels {
                let g_off = grad_out.plane_offset(s, c);
                // Adjoint of the unnormalized forward DFT on a real input:
                // out_plen * idft2(G), real component.
                fft2_slices(
                    &grad_out.re[g_off..g_off + out_plen],
                    &grad_out.im[g_off..g_off + out_plen],
                    out_rows,
                    out_cols,
                    true,
                    &mut gp_re,
                    &mut gp_im,
                );
                // Scatter pooled gradients to the winning positions.
                scattered.iter_mut().for_each(|v| *v = 0.0);
                let amax_off = (s * cache.channels + c) * out_plen;
                for pr in 0..out_rows {
                    for pc in 0..out_cols {
                        let a = cache.argmax[amax_off + pr * out_cols + pc] as usize;
                        let (dy, dx) = (a / 2, a % 2);
                        scattered[(pr * 2 + dy) * cols + pc * 2 + dx] =
                            gp_re[pr * out_cols + pc] * out_n;
                    }
                }
                // Adjoint of the 1/(MN)-normalized inverse DFT: (1/n) * dft2.
                let gi_off = grad_in.plane_offset(s, c);
                fft2_slices(
                    &scattered,
                    &zeros,
                    rows,
                    cols,
                    false,
                    &mut grad_in.re[gi_off..gi_off + plen],
                    &mut grad_in.im[gi_off..gi_off + plen],
                );
                for v in grad_in.re[gi_off..gi_off + plen].iter_mut() {
                    *v /= n;
                }
                for v in grad_in.im[gi_off..gi_off + plen].iter_mut() {
                    *v /= n;
                }
            }
        }
        Ok(grad_in)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl Default for PoolBridge {
    fn default() -> Self {
        Self::new()
    }
}

/// Convenience wrapper matching the operation-level API.
pub fn maxpool_bridge(block: &FeatureBlock, _cfg: &PoolConfig) -> Result<FeatureBlock> {
    PoolBridge::new().forward(block, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::{dft2_real, idft2};
    use crate::plane::RealPlane;
    use crate::rng::rng_for;
    use rand::Rng;

    #[test]
    fn constant_field_pools_to_dc_only() {
        let c = 2.5;
        let (rows, cols) = (6, 4);
        // Time-domain constant plane, carried to the frequency domain.
        let plane = RealPlane::from_vec(rows, cols, vec![c; rows * cols]).unwrap();
        let spec = dft2_real(&plane);
        let mut block = FeatureBlock::zeros(1, 1, rows, cols);
        block.set_plane(0, 0, &spec);
        let out = maxpool_bridge(&block, &PoolConfig::default()).unwrap();
        assert_eq!(out.rows(), 3);
        assert_eq!(out.cols(), 2);
        let (dc_re, dc_im) = (out.re[0], out.im[0]);
        assert!((dc_re - c * 3.0 * 2.0).abs() < 1e-9);
        assert!(dc_im.abs() < 1e-9);
        for k in 1..6 {
            assert!(out.re[k].abs() < 1e-9 && out.im[k].abs() < 1e-9);
        }
    }

    #[test]
    fn single_spike_per_cell_survives_pooling() {
        let (rows, cols) = (4, 4);
        let mut time = RealPlane::zeros(rows, cols);
        // One positive spike per 2x2 cell, zeros elsewhere.
        let spikes = [(0usize, 1usize, 3.0), (1, 2, 2.0), (2, 0, 5.0), (3, 3, 1.5)];
        for &(r, c, v) in &spikes {
            time.set(r, c, v);
        }
        let mut block = FeatureBlock::zeros(1, 1, rows, cols);
        block.set_plane(0, 0, &dft2_real(&time));
        let out = maxpool_bridge(&block, &PoolConfig::default()).unwrap();
        let pooled = idft2(&out.plane(0, 0));
        let expect = [[3.0, 2.0], [5.0, 1.5]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((pooled.re.get(r, c) - expect[r][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn matches_plain_time_domain_pooling() {
        let mut rng = rng_for(&[41]);
        let (rows, cols) = (8, 8);
        let mut time = RealPlane::zeros(rows, cols);
        for v in time.as_mut_slice() {
            *v = rng.random::<f64>() * 4.0 - 2.0;
        }
        let mut block = FeatureBlock::zeros(1, 1, rows, cols);
        block.set_plane(0, 0, &dft2_real(&time));
        let out = maxpool_bridge(&block, &PoolConfig::default()).unwrap();

        // Direct 2x2 max pooling of the original plane.
        let mut direct = RealPlane::zeros(4, 4);
        for pr in 0..4 {
            for pc in 0..4 {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        best = best.max(time.get(pr * 2 + dy, pc * 2 + dx));
                    }
                }
                direct.set(pr, pc, best);
            }
        }
        let expect = dft2_real(&direct);
        assert!(out.plane(0, 0).max_abs_diff(&expect) < 1e-8);
    }

    #[test]
    fn odd_dims_rejected() {
        let block = FeatureBlock::zeros(1, 1, 5, 4);
        assert!(maxpool_bridge(&block, &PoolConfig::default()).is_err());
    }
}
