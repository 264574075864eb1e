//! Fully connected layers for the network head.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::layers::eml::ParamBuf;

/// Affine map y = xW + b over row-major (batch x in_dim) inputs.
/// Weights are stored in_dim-major: w[i * out_dim + j].
#[derive(Debug)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: ParamBuf,
    pub b: ParamBuf,
    input_cache: Option<Vec<f64>>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            w: ParamBuf::zeros(in_dim * out_dim),
            b: ParamBuf::zeros(out_dim),
            input_cache: None,
        }
    }

    pub fn init_he_normal<R: Rng>(&mut self, rng: &mut R) {
        let normal = Normal::new(0.0, (2.0 / self.in_dim as f64).sqrt()).unwrap();
        for v in self.w.values.iter_mut() {
            *v = normal.sample(rng);
        }
        self.b.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn forward(&mut self, x: &[f64], batch: usize, keep_cache: bool) -> Result<Vec<f64>> {
        if x.len() != batch * self.in_dim {
            return Err(Error::dims("dense forward", batch * self.in_dim, x.len()));
        }
        let mut y = vec![0.0; batch * self.out_dim];
        for s in 0..batch {
            let row = &x[s * self.in_dim..(s + 1) * self.in_dim];
            let out = &mut y[s * self.out_dim..(s + 1) * self.out_dim];
            out.copy_from_slice(&self.b.values);
            for (i, &xi) in row.iter().enumerate() {
                let wrow = &self.w.values[i * self.out_dim..(i + 1) * self.out_dim];
                for (o, wij) in out.iter_mut().zip(wrow) {
                    *o += xi * wij;
                }
            }
        }
        if keep_cache {
            self.input_cache = Some(x.to_vec());
        }
        Ok(y)
    }

    /// Accumulates weight/bias gradients; returns the input gradient when
    /// requested.
    pub fn backward(
        &mut self,
        grad_out: &[f64],
        batch: usize,
        need_input_grad: bool,
    ) -> Result<Option<Vec<f64>>> {
        let x = self
            .input_cache
            .as_ref()
            .ok_or_else(|| Error::Config("dense backward without cached forward".into()))?;
        if grad_out.len() != batch * self.out_dim {
            return Err(Error::dims(
                "dense backward",
                batch * self.out_dim,
                grad_out.len(),
            ));
        }
        for s in 0..batch {
            let row = &x[s * self.in_dim..(s + 1) * self.in_dim];
            let g = &grad_out[s * self.out_dim..(s + 1) * self.out_dim];
            for (gb, gj) in self.b.grad.iter_mut().zip(g) {
                *gb += gj;
            }
            for (i, &xi) in row.iter().enumerate() {
                let gw = &mut self.w.grad[i * self.out_dim..(i + 1) * self.out_dim];
                for (gwij, gj) in gw.iter_mut().zip(g) {
                    *gwij += xi * gj;
                }
            }
        }
        if !need_input_grad {
            return Ok(None);
        }
        let mut gx = vec![0.0; batch * self.in_dim];
        for s in 0..batch {
            let g = &grad_out[s * self.out_dim..(s + 1) * self.out_dim];
            let gxr = &mut gx[s * self.in_dim..(s + 1) * self.in_dim];
            for (i, gxi) in gxr.iter_mut().enumerate() {
                let wrow = &self.w.values[i * self.out_dim..(i + 1) * self.out_dim];
                let mut acc = 0.0;
                for (wij, gj) in wrow.iter().zip(g) {
                    acc += wij * gj;
                }
                *gxi = acc;
            }
        }
        Ok(Some(gx))
    }

    pub fn clear_cache(&mut self) {
        self.input_cache = None;
    }
}
