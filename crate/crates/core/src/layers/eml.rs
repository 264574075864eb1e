//! The element-wise multiplication layer: per-frequency-bin complex products
//! between already-conjugated input spectra and padded-kernel spectra, summed
//! over input channels, with the Weight Fixation update cycle.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fft::{
    fft2_slices, hadamard_acc_block, hadamard_conj_acc_block_many_a,
    hadamard_conj_acc_block_reduce, zero_pad_slice,
};
use crate::plane::FeatureBlock;

/// A parameter array with its gradient and optimizer accumulator.
#[derive(Debug, Clone)]
pub struct ParamBuf {
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub sq_avg: Vec<f64>,
}

impl ParamBuf {
    pub fn zeros(len: usize) -> Self {
        ParamBuf {
            values: vec![0.0; len],
            grad: vec![0.0; len],
            sq_avg: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Spectral convolution weights. The canonical stored form depends on the
/// fixation flag: fixated layers keep only the KxK time-domain kernels and
/// re-derive their spectra every step; free layers keep the full spectrum as
/// the trainable state.
#[derive(Debug)]
pub struct SpectralWeight {
    pub rows: usize,
    pub cols: usize,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub fixation_enabled: bool,
    /// KxK time kernels per (cin, cout) pair; canonical iff fixation.
    pub time_kernel: Vec<f64>,
    /// Frequency weights, laid out [re planes | im planes] with plane
    /// (ci, co) at (ci*cout + co) * rows * cols. Optimizer state is aligned.
    pub spectral: ParamBuf,
    spectral_valid: bool,
}

impl SpectralWeight {
    pub fn new(
        rows: usize,
        cols: usize,
        cin: usize,
        cout: usize,
        kernel: usize,
        fixation_enabled: bool,
    ) -> Result<Self> {
        if kernel > rows || kernel > cols {
            return Err(Error::KernelTooLarge {
                k: kernel,
                rows,
                cols,
            });
        }
        if kernel == 0 || cin == 0 || cout == 0 {
            return Err(Error::Config(
                "kernel size and channel counts must be positive".into(),
            ));
        }
        let pairs = cin * cout;
        Ok(SpectralWeight {
            rows,
            cols,
            cin,
            cout,
            kernel,
            fixation_enabled,
            time_kernel: vec![0.0; pairs * kernel * kernel],
            spectral: ParamBuf::zeros(2 * pairs * rows * cols),
            spectral_valid: false,
        })
    }

    /// He-normal initialization of the time kernels, then transfer to the
    /// frequency domain: N(0, sqrt(2 / fan_in)) with fan_in = K^2 * Cin.
    pub fn init_he_normal<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = (self.kernel * self.kernel * self.cin) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).unwrap();
        for v in self.time_kernel.iter_mut() {
            *v = normal.sample(rng);
        }
        self.refresh_spectral();
    }

    pub fn plane_len(&self) -> usize {
        self.rows * self.cols
    }

    /// Offset of the (ci, co) re plane; the im plane sits half a buffer later.
    pub fn half(&self) -> usize {
        self.cin * self.cout * self.plane_len()
    }

    pub fn spectral_plane(&self, ci: usize, co: usize) -> (&[f64], &[f64]) {
        let plen = self.plane_len();
        let off = (ci * self.cout + co) * plen;
        let half = self.half();
        (
            &self.spectral.values[off..off + plen],
            &self.spectral.values[half + off..half + off + plen],
        )
    }

    /// Rebuild the frequency weights from the padded time kernels.
    pub fn refresh_spectral(&mut self) {
        let plen = self.plane_len();
        let k = self.kernel;
        let half = self.half();
        for pair in 0..self.cin * self.cout {
            let kern = &self.time_kernel[pair * k * k..(pair + 1) * k * k];
            let padded = zero_pad_slice(kern, k, self.rows, self.cols);
            let zeros = vec![0.0; plen];
            let off = pair * plen;
            let (re_half, im_half) = self.spectral.values.split_at_mut(half);
            fft2_slices(
                &padded,
                &zeros,
                self.rows,
                self.cols,
                false,
                &mut re_half[off..off + plen],
                &mut im_half[off..off + plen],
            );
        }
        self.spectral_valid = true;
    }

    /// Refresh only when a fixation pass invalidated the spectrum.
    pub fn ensure_fresh(&mut self) {
        if self.fixation_enabled && !self.spectral_valid {
            self.refresh_spectral();
        }
        if !self.fixation_enabled {
            self.spectral_valid = true;
        }
    }

    /// Weight Fixation: inverse-transform the (post-update) spectra, keep the
    /// real upper-left KxK block as the new time kernels, discard the rest.
    /// The spectrum is invalid until the next refresh. No-op for free layers.
    pub fn apply_fixation(&mut self) {
        if !self.fixation_enabled {
            return;
        }
        let plen = self.plane_len();
        let k = self.kernel;
        let half = self.half();
        let mut t_re = vec![0.0; plen];
        let mut t_im = vec![0.0; plen];
        for pair in 0..self.cin * self.cout {
            let off = pair * plen;
            fft2_slices(
                &self.spectral.values[off..off + plen],
                &self.spectral.values[half + off..half + off + plen],
                self.rows,
                self.cols,
                true,
                &mut t_re,
                &mut t_im,
            );
            let kern = &mut self.time_kernel[pair * k * k..(pair + 1) * k * k];
            for r in 0..k {
                for c in 0..k {
                    kern[r * k + c] = t_re[r * self.cols + c];
                }
            }
        }
        self.spectral_valid = false;
    }

    /// Free real parameters in the canonical stored form.
    pub fn free_parameter_count(&self) -> usize {
        if self.fixation_enabled {
            self.kernel * self.kernel * self.cin * self.cout
        } else {
            2 * self.rows * self.cols * self.cin * self.cout
        }
    }

    /// The padded time-domain kernel implied by the canonical storage,
    /// per (ci, co) pair. For fixated layers this is exact zeros outside the
    /// KxK corner by construction.
    pub fn implied_padded_kernel(&self, ci: usize, co: usize) -> Vec<f64> {
        let k = self.kernel;
        let pair = ci * self.cout + co;
        zero_pad_slice(
            &self.time_kernel[pair * k * k..(pair + 1) * k * k],
            k,
            self.rows,
            self.cols,
        )
    }
}

/// Samples processed per weight-block pass; sized so a (ci, :) weight block
/// stays in L2 while the tile streams over it.
const SAMPLE_TILE: usize = 10;

/// Element-wise multiplication layer instance: weights plus the input cache
/// the backward pass needs.
#[derive(Debug)]
pub struct EmlLayer {
    pub weight: SpectralWeight,
    input_cache: Option<FeatureBlock>,
}

impl EmlLayer {
    pub fn new(weight: SpectralWeight) -> Self {
        EmlLayer {
            weight,
            input_cache: None,
        }
    }

    pub fn cin(&self) -> usize {
        self.weight.cin
    }

    pub fn cout(&self) -> usize {
        self.weight.cout
    }

    /// Forward pass. Inputs are already-conjugated spectra (conjugation
    /// happens once at network entry); each output channel is the
    /// channel-summed element-wise complex product with the weight spectra.
    pub fn forward(&mut self, input: &FeatureBlock, keep_cache: bool) -> Result<FeatureBlock> {
        let w = &mut self.weight;
        if input.channels() != w.cin {
            return Err(Error::dims("eml_forward channels", w.cin, input.channels()));
        }
        if input.rows() != w.rows || input.cols() != w.cols {
            return Err(Error::dims(
                "eml_forward dims",
                format!("{}x{}", w.rows, w.cols),
                format!("{}x{}", input.rows(), input.cols()),
            ));
        }
        w.ensure_fresh();

        let batch = input.batch();
        let plen = w.plane_len();
        let half = w.half();
        let mut out = FeatureBlock::zeros(batch, w.cout, w.rows, w.cols);
        // Sample tiling keeps each (ci, :) weight block cache-resident while
        // a handful of samples stream over it.
        for tile in (0..batch).step_by(SAMPLE_TILE) {
            let tile_end = (tile + SAMPLE_TILE).min(batch);
            for ci in 0..w.cin {
                let w_base = ci * w.cout * plen;
                let w_re = &w.spectral.values[w_base..w_base + w.cout * plen];
                let w_im = &w.spectral.values[half + w_base..half + w_base + w.cout * plen];
                for s in tile..tile_end {
                    let in_off = input.plane_offset(s, ci);
                    let out_base = out.plane_offset(s, 0);
                    let (out_re, out_im) = {
                        let (re, im) = (&mut out.re, &mut out.im);
                        (
                            &mut re[out_base..out_base + w.cout * plen],
                            &mut im[out_base..out_base + w.cout * plen],
                        )
                    };
                    hadamard_acc_block(
                        &input.re[in_off..in_off + plen],
                        &input.im[in_off..in_off + plen],
                        w_re,
                        w_im,
                        out_re,
                        out_im,
                        plen,
                    );
                }
            }
        }
        if keep_cache {
            self.input_cache = Some(input.clone());
        }
        Ok(out)
    }

    /// Backward pass under the real-parameter convention: every complex
    /// value is a pair of independent reals and the upstream gradient is
    /// multiplied by the conjugate of the other factor.
    ///
    /// Accumulates the weight gradient into the spectral ParamBuf and
    /// returns the input gradient when requested.
    pub fn backward(
        &mut self,
        grad_out: &FeatureBlock,
        need_input_grad: bool,
    ) -> Result<Option<FeatureBlock>> {
        let input = self
            .input_cache
            .as_ref()
            .ok_or_else(|| Error::Config("eml_backward called without cached forward".into()))?;
        let w = &mut self.weight;
        if grad_out.channels() != w.cout
            || grad_out.rows() != w.rows
            || grad_out.cols() != w.cols
            || grad_out.batch() != input.batch()
        {
            return Err(Error::dims(
                "eml_backward",
                format!("{}ch {}x{}", w.cout, w.rows, w.cols),
                format!(
                    "{}ch {}x{}",
                    grad_out.channels(),
                    grad_out.rows(),
                    grad_out.cols()
                ),
            ));
        }
        let batch = input.batch();
        let plen = w.plane_len();
        let half = w.half();

        // Weight gradient: gW[ci,co] += sum_s G[s,co] (*) conj(I[s,ci]).
        let (gw_re_half, gw_im_half) = w.spectral.grad.split_at_mut(half);
        for tile in (0..batch).step_by(SAMPLE_TILE) {
            let tile_end = (tile + SAMPLE_TILE).min(batch);
            for ci in 0..w.cin {
                let w_base = ci * w.cout * plen;
                let gw_re = &mut gw_re_half[w_base..w_base + w.cout * plen];
                let gw_im = &mut gw_im_half[w_base..w_base + w.cout * plen];
                for s in tile..tile_end {
                    let g_base = grad_out.plane_offset(s, 0);
                    let i_off = input.plane_offset(s, ci);
                    hadamard_conj_acc_block_many_a(
                        &grad_out.re[g_base..g_base + w.cout * plen],
                        &grad_out.im[g_base..g_base + w.cout * plen],
                        &input.re[i_off..i_off + plen],
                        &input.im[i_off..i_off + plen],
                        gw_re,
                        gw_im,
                        plen,
                    );
                }
            }
        }

        if !need_input_grad {
            return Ok(None);
        }

        // Input gradient: gI[s,ci] = sum_co G[s,co] (*) conj(W[ci,co]).
        let mut grad_in = FeatureBlock::zeros(batch, w.cin, w.rows, w.cols);
        for tile in (0..batch).step_by(SAMPLE_TILE) {
            let tile_end = (tile + SAMPLE_TILE).min(batch);
            for ci in 0..w.cin {
                let w_base = ci * w.cout * plen;
                let w_re = &w.spectral.values[w_base..w_base + w.cout * plen];
                let w_im = &w.spectral.values[half + w_base..half + w_base + w.cout * plen];
                for s in tile..tile_end {
                    let g_base = grad_out.plane_offset(s, 0);
                    let gi_off = grad_in.plane_offset(s, ci);
                    let (gi_re, gi_im) = {
                        let (re, im) = (&mut grad_in.re, &mut grad_in.im);
                        (&mut re[gi_off..gi_off + plen], &mut im[gi_off..gi_off + plen])
                    };
                    hadamard_conj_acc_block_reduce(
                        &grad_out.re[g_base..g_base + w.cout * plen],
                        &grad_out.im[g_base..g_base + w.cout * plen],
                        w_re,
                        w_im,
                        gi_re,
                        gi_im,
                        plen,
                    );
                }
            }
        }
        Ok(Some(grad_in))
    }

    pub fn clear_cache(&mut self) {
        self.input_cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::{dft2_real, idft2};
    use crate::plane::{ComplexPlane, RealPlane};
    use crate::rng::rng_for;

    fn random_block<R: Rng>(batch: usize, ch: usize, rows: usize, cols: usize, rng: &mut R) -> FeatureBlock {
        let mut fb = FeatureBlock::zeros(batch, ch, rows, cols);
        for v in fb.re.iter_mut().chain(fb.im.iter_mut()) {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        fb
    }

    #[test]
    fn delta_kernel_is_identity_filter() {
        let mut w = SpectralWeight::new(5, 5, 1, 1, 1, true).unwrap();
        w.time_kernel[0] = 1.0;
        w.refresh_spectral();
        let mut layer = EmlLayer::new(w);
        let mut rng = rng_for(&[21]);
        let input = random_block(2, 1, 5, 5, &mut rng);
        let out = layer.forward(&input, false).unwrap();
        assert!(crate::plane::max_abs_diff(&out.re, &input.re) < 1e-12);
        assert!(crate::plane::max_abs_diff(&out.im, &input.im) < 1e-12);
    }

    #[test]
    fn zero_weight_gives_zero_output() {
        let w = SpectralWeight::new(4, 4, 2, 3, 2, false).unwrap();
        let mut layer = EmlLayer::new(w);
        let mut rng = rng_for(&[22]);
        let input = random_block(1, 2, 4, 4, &mut rng);
        let out = layer.forward(&input, false).unwrap();
        assert!(out.re.iter().chain(out.im.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_channel_mismatch() {
        let w = SpectralWeight::new(4, 4, 2, 1, 2, true).unwrap();
        let mut layer = EmlLayer::new(w);
        let input = FeatureBlock::zeros(1, 3, 4, 4);
        assert!(layer.forward(&input, false).is_err());
        let input = FeatureBlock::zeros(1, 2, 4, 6);
        assert!(layer.forward(&input, false).is_err());
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let mut w = SpectralWeight::new(4, 4, 1, 2, 2, true).unwrap();
        let mut rng = rng_for(&[23]);
        w.init_he_normal(&mut rng);
        let mut layer = EmlLayer::new(w);
        let input = random_block(2, 1, 4, 4, &mut rng);
        layer.forward(&input, true).unwrap();
        let zeros = FeatureBlock::zeros(2, 2, 4, 4);
        let gin = layer.backward(&zeros, true).unwrap().unwrap();
        assert!(layer.weight.spectral.grad.iter().all(|&g| g == 0.0));
        assert!(gin.re.iter().chain(gin.im.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_case_reduces_to_product_rule() {
        // M = N = 1, Cin = Cout = 1: out = in * w (complex product of scalars).
        let mut w = SpectralWeight::new(1, 1, 1, 1, 1, false).unwrap();
        w.spectral.values = vec![2.0, -0.5]; // w = 2 - 0.5i
        let mut layer = EmlLayer::new(w);
        let mut input = FeatureBlock::zeros(1, 1, 1, 1);
        input.re[0] = 3.0;
        input.im[0] = 1.0; // a = 3 + i
        let out = layer.forward(&input, true).unwrap();
        assert!((out.re[0] - 6.5).abs() < 1e-15); // 3*2 - 1*(-0.5)
        assert!((out.im[0] - 0.5).abs() < 1e-15); // 3*(-0.5) + 1*2

        let mut g = FeatureBlock::zeros(1, 1, 1, 1);
        g.re[0] = 1.0; // d loss / d out_re = 1
        let gin = layer.backward(&g, true).unwrap().unwrap();
        // d out_re / d a_re = w_re, d out_re / d a_im = -w_im
        assert!((gin.re[0] - 2.0).abs() < 1e-15);
        assert!((gin.im[0] - 0.5).abs() < 1e-15);
        // d out_re / d w_re = a_re, d out_re / d w_im = -a_im
        assert!((layer.weight.spectral.grad[0] - 3.0).abs() < 1e-15);
        assert!((layer.weight.spectral.grad[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixation_is_noop_on_already_fixed_weights() {
        let mut w = SpectralWeight::new(6, 6, 2, 2, 3, true).unwrap();
        let mut rng = rng_for(&[24]);
        w.init_he_normal(&mut rng);
        let before = w.time_kernel.clone();
        w.apply_fixation();
        w.ensure_fresh();
        let diff = crate::plane::max_abs_diff(&before, &w.time_kernel);
        assert!(diff < 1e-12, "round-trip drift {}", diff);
    }

    #[test]
    fn fixation_zeroes_outside_kernel_block() {
        // Start from a dense spectral plane (DFT of a dense 4x4 plane).
        let mut w = SpectralWeight::new(4, 4, 1, 1, 2, true).unwrap();
        let mut rng = rng_for(&[25]);
        let mut dense = RealPlane::zeros(4, 4);
        for v in dense.as_mut_slice() {
            *v = rng.random::<f64>();
        }
        let spec = dft2_real(&dense);
        w.spectral.values[..16].copy_from_slice(spec.re.as_slice());
        w.spectral.values[16..].copy_from_slice(spec.im.as_slice());
        w.apply_fixation();
        let padded = w.implied_padded_kernel(0, 0);
        for r in 0..4 {
            for c in 0..4 {
                if r >= 2 || c >= 2 {
                    assert_eq!(padded[r * 4 + c], 0.0);
                }
            }
        }
        // And the re-derived spectrum inverse-transforms to zero outside KxK.
        w.ensure_fresh();
        let (re, im) = w.spectral_plane(0, 0);
        let plane = ComplexPlane::new(
            RealPlane::from_vec(4, 4, re.to_vec()).unwrap(),
            RealPlane::from_vec(4, 4, im.to_vec()).unwrap(),
        )
        .unwrap();
        let t = idft2(&plane);
        for r in 0..4 {
            for c in 0..4 {
                if r >= 2 || c >= 2 {
                    assert!(t.re.get(r, c).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn free_parameter_counts() {
        let fixed = SpectralWeight::new(32, 32, 3, 64, 3, true).unwrap();
        assert_eq!(fixed.free_parameter_count(), 1728);
        let free = SpectralWeight::new(32, 32, 3, 64, 3, false).unwrap();
        assert_eq!(free.free_parameter_count(), 2 * 32 * 32 * 3 * 64);
    }
}
