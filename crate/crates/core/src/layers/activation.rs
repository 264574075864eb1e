//! Real-valued activations for the network head. The spectral stack uses
//! the multiplicative-noise surrogates instead; flattened head features are
//! ordinary real vectors, so the regular piecewise activation applies.

/// Leaky ReLU slope used throughout the head.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug)]
pub struct LeakyRelu {
    pub slope: f64,
    cache: Option<Vec<f64>>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        LeakyRelu { slope, cache: None }
    }

    pub fn forward(&mut self, x: &[f64], keep_cache: bool) -> Vec<f64> {
        let y: Vec<f64> = x
            .iter()
            .map(|&v| if v >= 0.0 { v } else { self.slope * v })
            .collect();
        if keep_cache {
            self.cache = Some(x.to_vec());
        }
        y
    }

    pub fn backward(&mut self, grad_out: &[f64]) -> Vec<f64> {
        let x = self
            .cache
            .as_ref()
            .expect("leaky relu backward without cached forward");
        grad_out
            .iter()
            .zip(x)
            .map(|(&g, &v)| if v >= 0.0 { g } else { self.slope * g })
            .collect()
    }
}
