//! Per-layer operation counting. Counts real multiplications per sample with
//! unit constants on the transform log terms.
//!
//! Counting rules (forward / backward, per layer):
//! - spectral multiply:     4 H W Cin Cout  /  8 H W Cin Cout when the layer
//!   is weight-fixated, 4 H W Cin Cout otherwise
//! - reference convolution: K^2 H W Cin Cout  /  same as forward
//! - pooling bridge:        H W C log2(H W) + H' W' C log2(H' W')  /  same
//!   (reference CNN pooling costs nothing)
//! - dense:                 in x out per branch  /  same as forward
//! - input transform:       H W C log2(H W)  /  0
//! - batch norm and the noise layers are excluded from the totals
//!
//! The per-step spectral refresh + fixation transforms of fixated layers are
//! reported separately as DFT overhead: 2 H W Cin Cout log2(H W).

use crate::error::Result;
use crate::models::{Domain, LayerSpec, NetworkSpec};

#[derive(Debug, Clone)]
pub struct LayerOps {
    pub name: String,
    pub forward: f64,
    pub backward: f64,
    pub dft_overhead: f64,
}

#[derive(Debug, Clone)]
pub struct OpsReport {
    pub arch: String,
    pub layers: Vec<LayerOps>,
    pub forward_total: f64,
    pub backward_total: f64,
    pub dft_overhead_total: f64,
}

impl OpsReport {
    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("ops report: {}\n", self.arch));
        out.push_str(&format!(
            "{:<24} {:>16} {:>16} {:>16}\n",
            "layer", "forward", "backward", "dft-overhead"
        ));
        for l in &self.layers {
            out.push_str(&format!(
                "{:<24} {:>16.0} {:>16.0} {:>16.0}\n",
                l.name, l.forward, l.backward, l.dft_overhead
            ));
        }
        out.push_str(&format!(
            "{:<24} {:>16.0} {:>16.0} {:>16.0}\n",
            "total", self.forward_total, self.backward_total, self.dft_overhead_total
        ));
        out
    }

    /// Machine-readable CSV (same columns as the table).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,forward,backward,dft_overhead\n");
        for l in &self.layers {
            out.push_str(&format!(
                "{},{:.0},{:.0},{:.0}\n",
                l.name, l.forward, l.backward, l.dft_overhead
            ));
        }
        out.push_str(&format!(
            "total,{:.0},{:.0},{:.0}\n",
            self.forward_total, self.backward_total, self.dft_overhead_total
        ));
        out
    }
}

fn log2(n: usize) -> f64 {
    (n as f64).log2()
}

/// Pure function of the spec: per-layer and total multiply counts per sample.
pub fn profile_ops(spec: &NetworkSpec) -> Result<OpsReport> {
    let trace = spec.shape_trace()?;
    let freq = spec.domain() == Domain::Frequency;
    let mut layers = Vec::new();

    if freq {
        let (h, w, c) = (spec.input_rows, spec.input_cols, spec.input_channels);
        layers.push(LayerOps {
            name: "input-dft".into(),
            forward: (h * w * c) as f64 * log2(h * w),
            backward: 0.0,
            dft_overhead: 0.0,
        });
    }

    let mut rows = spec.input_rows;
    let mut cols = spec.input_cols;
    let mut ch = spec.input_channels;
    for (i, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::Eml { out_channels, kernel, fixation } => {
                let hw = rows * cols;
                let products = (hw * ch * out_channels) as f64;
                let forward = 4.0 * products;
                let backward = if *fixation { 8.0 * products } else { 4.0 * products };
                let dft_overhead = if *fixation { 2.0 * products * log2(hw) } else { 0.0 };
                layers.push(LayerOps {
                    name: format!("eml{i} {rows}x{cols}x{ch}->{out_channels} k{kernel}"),
                    forward,
                    backward,
                    dft_overhead,
                });
            }
            LayerSpec::Conv { out_channels, kernel } => {
                let forward = (kernel * kernel * rows * cols * ch * out_channels) as f64;
                layers.push(LayerOps {
                    name: format!("conv{i} {rows}x{cols}x{ch}->{out_channels} k{kernel}"),
                    forward,
                    backward: forward,
                    dft_overhead: 0.0,
                });
            }
            LayerSpec::MaxPool => {
                let cost = if freq {
                    let hw = rows * cols;
                    let hw_out = hw / 4;
                    (hw * ch) as f64 * log2(hw) + (hw_out * ch) as f64 * log2(hw_out)
                } else {
                    0.0
                };
                layers.push(LayerOps {
                    name: format!("pool{i} {rows}x{cols}x{ch}"),
                    forward: cost,
                    backward: cost,
                    dft_overhead: 0.0,
                });
            }
        }
        let (r, c, nch) = trace[i];
        rows = r;
        cols = c;
        ch = nch;
    }

    let flat = rows * cols * ch;
    let branches = if freq { 2.0 } else { 1.0 };
    let mut in_dim = flat;
    for (i, &out_dim) in spec.head_branch_dims.iter().enumerate() {
        let cost = branches * (in_dim * out_dim) as f64;
        layers.push(LayerOps {
            name: format!("dense{i} {in_dim}->{out_dim}"),
            forward: cost,
            backward: cost,
            dft_overhead: 0.0,
        });
        in_dim = out_dim;
    }
    if spec.classes > 0 {
        let concat = branches as usize * in_dim;
        let cost = (concat * spec.classes) as f64;
        layers.push(LayerOps {
            name: format!("dense-out {concat}->{}", spec.classes),
            forward: cost,
            backward: cost,
            dft_overhead: 0.0,
        });
    }

    let forward_total = layers.iter().map(|l| l.forward).sum();
    let backward_total = layers.iter().map(|l| l.backward).sum();
    let dft_overhead_total = layers.iter().map(|l| l.dft_overhead).sum();
    Ok(OpsReport {
        arch: spec.name.clone(),
        layers,
        forward_total,
        backward_total,
        dft_overhead_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{mnist_cemnet, spec_by_name};

    #[test]
    fn single_eml_layer_forward_count_is_exact() {
        let spec = NetworkSpec {
            name: "one-layer".into(),
            input_rows: 28,
            input_cols: 28,
            input_channels: 1,
            layers: vec![LayerSpec::Eml {
                out_channels: 6,
                kernel: 5,
                fixation: false,
            }],
            head_branch_dims: vec![],
            classes: 0,
            drop_rate: 0.5,
        };
        let report = profile_ops(&spec).unwrap();
        let eml = report
            .layers
            .iter()
            .find(|l| l.name.starts_with("eml"))
            .unwrap();
        assert_eq!(eml.forward, 18816.0);
        assert_eq!(eml.backward, 18816.0);
        assert_eq!(eml.dft_overhead, 0.0);
    }

    #[test]
    fn report_is_a_pure_function_of_the_spec() {
        let a = profile_ops(&mnist_cemnet()).unwrap();
        let b = profile_ops(&mnist_cemnet()).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.forward_total, a.layers.iter().map(|l| l.forward).sum::<f64>());
    }

    #[test]
    fn baseline_backward_equals_forward() {
        let report = profile_ops(&spec_by_name("modified-lenet5").unwrap()).unwrap();
        assert_eq!(report.forward_total, report.backward_total);
        assert_eq!(report.dft_overhead_total, 0.0);
    }
}
