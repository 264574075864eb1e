//! Declarative architecture descriptions and the two-branch network they
//! instantiate: spectral multiply blocks (with batch norm and the two noise
//! layers), pooling bridges, and the per-branch dense head joined by a final
//! classification layer.

use crate::error::{Error, Result};
use crate::layers::{
    BnCore, Dense, EmlLayer, FreqBatchNorm, GaussianNoise, LeakyRelu, NoiseCtx, NoiseLayerConfig,
    ParamBuf, PoolBridge, SpectralWeight, LEAKY_SLOPE,
};
use crate::plane::FeatureBlock;
use crate::rng::{rng_for, TAG_INIT};

/// One entry of the layer stack.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Spectral multiply block; batch norm and both noise layers follow it.
    Eml {
        out_channels: usize,
        kernel: usize,
        fixation: bool,
    },
    /// Time-domain convolution block for the reference CNNs. Profiling only;
    /// these specs cannot be instantiated as trainable networks.
    Conv { out_channels: usize, kernel: usize },
    /// 2x2 stride-2 max pooling (domain bridge in the frequency networks).
    MaxPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Frequency,
    Time,
}

/// Declarative network description; the builders below produce the
/// architectures used in the experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub input_rows: usize,
    pub input_cols: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    /// Hidden dense sizes applied to each branch separately.
    pub head_branch_dims: Vec<usize>,
    pub classes: usize,
    pub drop_rate: f64,
}

impl NetworkSpec {
    pub fn domain(&self) -> Domain {
        if self.layers.iter().any(|l| matches!(l, LayerSpec::Conv { .. })) {
            Domain::Time
        } else {
            Domain::Frequency
        }
    }

    /// (rows, cols, channels) after every layer, validating composition.
    pub fn shape_trace(&self) -> Result<Vec<(usize, usize, usize)>> {
        let mut rows = self.input_rows;
        let mut cols = self.input_cols;
        let mut ch = self.input_channels;
        let mut trace = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            match layer {
                LayerSpec::Eml { out_channels, kernel, .. } => {
                    // The spectral form zero-pads the kernel up to the plane size.
                    if *kernel > rows || *kernel > cols {
                        return Err(Error::KernelTooLarge {
                            k: *kernel,
                            rows,
                            cols,
                        });
                    }
                    ch = *out_channels;
                }
                // Spatial convolution with same-padding has no such bound.
                LayerSpec::Conv { out_channels, .. } => ch = *out_channels,
                LayerSpec::MaxPool => {
                    if rows % 2 != 0 || cols % 2 != 0 {
                        return Err(Error::OddPoolInput { rows, cols });
                    }
                    rows /= 2;
                    cols /= 2;
                }
            }
            trace.push((rows, cols, ch));
        }
        Ok(trace)
    }

    /// Flattened feature count per branch at the head.
    pub fn flat_dim(&self) -> Result<usize> {
        let trace = self.shape_trace()?;
        let (r, c, ch) = *trace.last().unwrap_or(&(
            self.input_rows,
            self.input_cols,
            self.input_channels,
        ));
        Ok(r * c * ch)
    }

    /// Stable textual form; hashed into checkpoints.
    pub fn canonical_string(&self) -> String {
        let mut s = format!(
            "{} in={}x{}x{} classes={} p={} head={:?} layers=",
            self.name,
            self.input_rows,
            self.input_cols,
            self.input_channels,
            self.classes,
            self.drop_rate,
            self.head_branch_dims
        );
        for l in &self.layers {
            match l {
                LayerSpec::Eml { out_channels, kernel, fixation } => {
                    s.push_str(&format!("eml({out_channels},{kernel},{fixation});"))
                }
                LayerSpec::Conv { out_channels, kernel } => {
                    s.push_str(&format!("conv({out_channels},{kernel});"))
                }
                LayerSpec::MaxPool => s.push_str("pool;"),
            }
        }
        s
    }
}

/// LeNet-style frequency network for 28x28 grayscale digits. The second
/// multiply block keeps the 14x14 feature size (spectral layers are
/// inherently same-size), so two pools land on 7x7. Weight Fixation is
/// enabled on every multiply layer.
pub fn mnist_cemnet() -> NetworkSpec {
    NetworkSpec {
        name: "mnist-cemnet".into(),
        input_rows: 28,
        input_cols: 28,
        input_channels: 1,
        layers: vec![
            LayerSpec::Eml { out_channels: 6, kernel: 5, fixation: true },
            LayerSpec::MaxPool,
            LayerSpec::Eml { out_channels: 16, kernel: 5, fixation: true },
            LayerSpec::MaxPool,
        ],
        head_branch_dims: vec![120, 84],
        classes: 10,
        drop_rate: 0.5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarScale {
    Small,
    Large,
}

/// VGG-style frequency network for 32x32 RGB images: five blocks with
/// 64/128/256/512/512 maps, each ending in a pool, fixation on the first
/// three blocks, and a 512-unit dense layer per branch.
pub fn cifar_cemnet(scale: CifarScale) -> NetworkSpec {
    let widths = [64usize, 128, 256, 512, 512];
    let convs_per_block: [usize; 5] = match scale {
        CifarScale::Small => [1, 1, 1, 1, 1],
        CifarScale::Large => [2, 2, 2, 3, 3],
    };
    let mut layers = Vec::new();
    let mut dim = 32usize;
    for (block, (&width, &reps)) in widths.iter().zip(&convs_per_block).enumerate() {
        for _ in 0..reps {
            layers.push(LayerSpec::Eml {
                out_channels: width,
                // Spectral kernels cannot exceed the plane size; the 2x2
                // block-5 layers are free (no fixation), so the kernel only
                // shapes their initialization.
                kernel: 3.min(dim),
                fixation: block < 3,
            });
        }
        layers.push(LayerSpec::MaxPool);
        dim /= 2;
    }
    NetworkSpec {
        name: match scale {
            CifarScale::Small => "cifar-small".into(),
            CifarScale::Large => "cifar-large".into(),
        },
        input_rows: 32,
        input_cols: 32,
        input_channels: 3,
        layers,
        head_branch_dims: vec![512],
        classes: 10,
        drop_rate: 0.5,
    }
}

/// Time-domain reference CNN matching the MNIST frequency network
/// (profiling only).
pub fn modified_lenet5() -> NetworkSpec {
    NetworkSpec {
        name: "modified-lenet5".into(),
        input_rows: 28,
        input_cols: 28,
        input_channels: 1,
        layers: vec![
            LayerSpec::Conv { out_channels: 6, kernel: 5 },
            LayerSpec::MaxPool,
            LayerSpec::Conv { out_channels: 16, kernel: 5 },
            LayerSpec::MaxPool,
        ],
        head_branch_dims: vec![120, 84],
        classes: 10,
        drop_rate: 0.5,
    }
}

/// Time-domain reference CNNs matching the CIFAR-10 frequency networks
/// (profiling only).
pub fn cifar_cnn(scale: CifarScale) -> NetworkSpec {
    let mut spec = cifar_cemnet(scale);
    spec.name = match scale {
        CifarScale::Small => "cifar-small-cnn".into(),
        CifarScale::Large => "cifar-large-cnn".into(),
    };
    for layer in spec.layers.iter_mut() {
        if let LayerSpec::Eml { out_channels, .. } = *layer {
            // Spatial convolution keeps 3x3 kernels at every block; padding
            // covers the small late-stage feature maps.
            *layer = LayerSpec::Conv { out_channels, kernel: 3 };
        }
    }
    spec
}

pub const ARCH_NAMES: [&str; 6] = [
    "mnist-cemnet",
    "cifar-small",
    "cifar-large",
    "modified-lenet5",
    "cifar-small-cnn",
    "cifar-large-cnn",
];

pub fn spec_by_name(name: &str) -> Result<NetworkSpec> {
    match name {
        "mnist-cemnet" => Ok(mnist_cemnet()),
        "cifar-small" => Ok(cifar_cemnet(CifarScale::Small)),
        "cifar-large" => Ok(cifar_cemnet(CifarScale::Large)),
        "modified-lenet5" => Ok(modified_lenet5()),
        "cifar-small-cnn" => Ok(cifar_cnn(CifarScale::Small)),
        "cifar-large-cnn" => Ok(cifar_cnn(CifarScale::Large)),
        other => Err(Error::UnknownArch(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

#[derive(Debug)]
enum Node {
    Eml(EmlLayer),
    Bn(FreqBatchNorm),
    Act(BranchLeakyRelu),
    Leaky(GaussianNoise),
    Drop(GaussianNoise),
    Pool(PoolBridge),
}

/// Branch-wise Leaky ReLU on a feature block (applied to the real and
/// imaginary planes independently).
#[derive(Debug)]
struct BranchLeakyRelu {
    re: LeakyRelu,
    im: LeakyRelu,
}

impl BranchLeakyRelu {
    fn new() -> Self {
        BranchLeakyRelu {
            re: LeakyRelu::new(LEAKY_SLOPE),
            im: LeakyRelu::new(LEAKY_SLOPE),
        }
    }

    fn forward(&mut self, block: &FeatureBlock, keep_cache: bool) -> FeatureBlock {
        let mut out = block.clone();
        out.re = self.re.forward(&block.re, keep_cache);
        out.im = self.im.forward(&block.im, keep_cache);
        out
    }

    fn backward(&mut self, grad: &FeatureBlock) -> FeatureBlock {
        let mut out = grad.clone();
        out.re = self.re.backward(&grad.re);
        out.im = self.im.backward(&grad.im);
        out
    }
}

/// One per-branch head stage: affine map, per-feature batch norm, the
/// regular Leaky ReLU (head features are real vectors, so the activation
/// applies directly), then the dropout surrogate.
#[derive(Debug)]
struct HeadUnit {
    dense: Dense,
    bn: BnCore,
    act: LeakyRelu,
    drop: GaussianNoise,
}

/// Instantiated two-branch network with parameters and optimizer slots.
#[derive(Debug)]
pub struct Network {
    pub spec: NetworkSpec,
    nodes: Vec<Node>,
    head_real: Vec<HeadUnit>,
    head_imag: Vec<HeadUnit>,
    final_dense: Dense,
    flat_dim: usize,
    mode: Mode,
    freeze_pending: bool,
}

/// Builds and initializes a trainable network from its spec: He-normal time
/// kernels transferred to the frequency domain, He-normal dense weights,
/// unit-gamma batch norms.
pub fn build_network(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    if spec.domain() != Domain::Frequency {
        return Err(Error::Config(format!(
            "'{}' is a time-domain reference spec; it can be profiled but not trained",
            spec.name
        )));
    }
    if spec.classes < 2 {
        return Err(Error::Config("network needs at least 2 classes".into()));
    }
    let noise_cfg = NoiseLayerConfig::new(spec.drop_rate)?;
    let trace = spec.shape_trace()?;

    let mut nodes = Vec::new();
    let mut rows = spec.input_rows;
    let mut cols = spec.input_cols;
    let mut ch = spec.input_channels;
    let mut layer_id: u64 = 0;
    let mut init_idx: u64 = 0;
    for (i, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::Eml { out_channels, kernel, fixation } => {
                let mut w = SpectralWeight::new(rows, cols, ch, *out_channels, *kernel, *fixation)?;
                let mut rng = rng_for(&[seed, TAG_INIT, init_idx]);
                init_idx += 1;
                w.init_he_normal(&mut rng);
                nodes.push(Node::Eml(EmlLayer::new(w)));
                nodes.push(Node::Bn(FreqBatchNorm::new(*out_channels, rows, cols)));
                let variant = std::env::var("FREQNET_SPECTRAL_ACT").unwrap_or_default();
                if variant == "v1" || variant == "v2" {
                    nodes.push(Node::Act(BranchLeakyRelu::new()));
                }
                if variant != "v1" {
                    nodes.push(Node::Leaky(GaussianNoise::new(noise_cfg.leaky_sigma(), layer_id)));
                }
                layer_id += 1;
                nodes.push(Node::Drop(GaussianNoise::new(noise_cfg.dropout_sigma(), layer_id)));
                layer_id += 1;
            }
            LayerSpec::Conv { .. } => unreachable!("guarded by domain check"),
            LayerSpec::MaxPool => {
                nodes.push(Node::Pool(PoolBridge::new()));
            }
        }
        let (r, c, nch) = trace[i];
        rows = r;
        cols = c;
        ch = nch;
    }

    let flat_dim = rows * cols * ch;
    let make_head = |dims: &[usize], init_idx: &mut u64, layer_id: &mut u64| -> Vec<HeadUnit> {
        let mut units = Vec::new();
        let mut in_dim = flat_dim;
        for &out_dim in dims {
            let mut dense = Dense::new(in_dim, out_dim);
            let mut rng = rng_for(&[seed, TAG_INIT, *init_idx]);
            *init_idx += 1;
            dense.init_he_normal(&mut rng);
            let drop = GaussianNoise::new(noise_cfg.dropout_sigma(), *layer_id);
            *layer_id += 1;
            units.push(HeadUnit {
                dense,
                bn: BnCore::new(out_dim, 1),
                act: LeakyRelu::new(LEAKY_SLOPE),
                drop,
            });
            in_dim = out_dim;
        }
        units
    };
    let head_real = make_head(&spec.head_branch_dims, &mut init_idx, &mut layer_id);
    let head_imag = make_head(&spec.head_branch_dims, &mut init_idx, &mut layer_id);
    let branch_out = *spec.head_branch_dims.last().unwrap_or(&flat_dim);

    let mut final_dense = Dense::new(2 * branch_out, spec.classes);
    let mut rng = rng_for(&[seed, TAG_INIT, init_idx]);
    final_dense.init_he_normal(&mut rng);

    Ok(Network {
        spec: spec.clone(),
        nodes,
        head_real,
        head_imag,
        final_dense,
        flat_dim,
        mode: Mode::Training,
        freeze_pending: false,
    })
}

impl Network {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn flat_dim(&self) -> usize {
        self.flat_dim
    }

    /// Refresh the spectral weights of every fixation layer whose cache was
    /// invalidated by the previous update cycle.
    pub fn refresh_weights(&mut self) {
        for node in self.nodes.iter_mut() {
            if let Node::Eml(eml) = node {
                eml.weight.ensure_fresh();
            }
        }
    }

    /// Weight Fixation pass over every multiply layer (no-op on free layers).
    pub fn apply_fixation(&mut self) {
        for node in self.nodes.iter_mut() {
            if let Node::Eml(eml) = node {
                eml.weight.apply_fixation();
            }
        }
    }

    /// Freeze the noise of the next training forward so repeated forwards
    /// (gradient checks) see identical multipliers.
    pub fn freeze_noise(&mut self) {
        self.freeze_pending = true;
    }

    pub fn unfreeze_noise(&mut self) {
        self.freeze_pending = false;
        for node in self.nodes.iter_mut() {
            match node {
                Node::Leaky(n) | Node::Drop(n) => n.frozen = None,
                _ => {}
            }
        }
        for unit in self.head_real.iter_mut().chain(self.head_imag.iter_mut()) {
            unit.drop.frozen = None;
        }
    }

    /// Forward pass to class logits (batch x classes, row-major).
    pub fn forward(&mut self, input: FeatureBlock, ctx: &NoiseCtx) -> Result<Vec<f64>> {
        let training = self.mode == Mode::Training;
        let freeze = std::mem::take(&mut self.freeze_pending);
        let batch = input.batch();
        let mut cur = input;
        for node in self.nodes.iter_mut() {
            cur = match node {
                Node::Eml(eml) => eml.forward(&cur, training)?,
                Node::Bn(bn) => bn.forward(&cur, training, training)?,
                Node::Act(act) => act.forward(&cur, training),
                Node::Leaky(noise) | Node::Drop(noise) => {
                    if training {
                        if freeze && noise.frozen.is_none() {
                            noise.freeze_for_block(cur.re.len(), batch, ctx);
                        }
                        noise.forward_block(&cur, ctx)
                    } else {
                        cur
                    }
                }
                Node::Pool(pool) => pool.forward(&cur, training)?,
            };
        }
        if cur.plane_len() * cur.channels() != self.flat_dim {
            return Err(Error::dims(
                "network head",
                self.flat_dim,
                cur.plane_len() * cur.channels(),
            ));
        }

        // Flatten: within a sample the (channel, row, col) order is already
        // contiguous, so each branch is reinterpreted as (batch, flat).
        let mut real = cur.re;
        let mut imag = cur.im;
        for (units, x) in [
            (&mut self.head_real, &mut real),
            (&mut self.head_imag, &mut imag),
        ] {
            for unit in units.iter_mut() {
                let mut y = unit.dense.forward(x, batch, training)?;
                y = unit.bn.forward(&y, batch, training, training)?;
                y = unit.act.forward(&y, training);
                if training {
                    if freeze && unit.drop.frozen.is_none() {
                        unit.drop.freeze_for_matrix(y.len(), batch, ctx);
                    }
                    y = unit.drop.forward_matrix(&y, batch, ctx);
                }
                *x = y;
            }
        }

        let branch_out = real.len() / batch;
        let mut concat = vec![0.0; batch * 2 * branch_out];
        for s in 0..batch {
            concat[s * 2 * branch_out..s * 2 * branch_out + branch_out]
                .copy_from_slice(&real[s * branch_out..(s + 1) * branch_out]);
            concat[s * 2 * branch_out + branch_out..(s + 1) * 2 * branch_out]
                .copy_from_slice(&imag[s * branch_out..(s + 1) * branch_out]);
        }
        self.final_dense.forward(&concat, batch, training)
    }

    /// Backward pass from logit gradients; accumulates every parameter
    /// gradient. Training-mode forward must precede it.
    pub fn backward(&mut self, grad_logits: &[f64], ctx: &NoiseCtx) -> Result<()> {
        let batch = grad_logits.len() / self.spec.classes;
        let g_concat = self
            .final_dense
            .backward(grad_logits, batch, true)?
            .expect("input grad requested");
        let branch_out = g_concat.len() / (2 * batch);

        let mut g_real = vec![0.0; batch * branch_out];
        let mut g_imag = vec![0.0; batch * branch_out];
        for s in 0..batch {
            g_real[s * branch_out..(s + 1) * branch_out]
                .copy_from_slice(&g_concat[s * 2 * branch_out..s * 2 * branch_out + branch_out]);
            g_imag[s * branch_out..(s + 1) * branch_out].copy_from_slice(
                &g_concat[s * 2 * branch_out + branch_out..(s + 1) * 2 * branch_out],
            );
        }

        for (units, g) in [
            (&mut self.head_real, &mut g_real),
            (&mut self.head_imag, &mut g_imag),
        ] {
            for unit in units.iter_mut().rev() {
                let mut cur = unit.drop.backward_matrix(g, batch, ctx);
                cur = unit.act.backward(&cur);
                cur = unit.bn.backward(&cur)?;
                *g = unit
                    .dense
                    .backward(&cur, batch, true)?
                    .expect("input grad requested");
            }
        }

        // Unflatten back into a feature block gradient.
        let last_shape = self.spec.shape_trace()?;
        let (rows, cols, ch) = *last_shape.last().unwrap();
        let mut grad = FeatureBlock::zeros(batch, ch, rows, cols);
        grad.re = g_real;
        grad.im = g_imag;

        for idx in (0..self.nodes.len()).rev() {
            let need_input = idx > 0;
            grad = match &mut self.nodes[idx] {
                Node::Eml(eml) => match eml.backward(&grad, need_input)? {
                    Some(g) => g,
                    None => break,
                },
                Node::Bn(bn) => bn.backward(&grad)?,
                Node::Act(act) => act.backward(&grad),
                Node::Leaky(noise) | Node::Drop(noise) => noise.backward_block(&grad, ctx),
                Node::Pool(pool) => pool.backward(&grad)?,
            };
        }
        Ok(())
    }

    /// Visit every parameter buffer in a stable order.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut ParamBuf)) {
        for (i, node) in self.nodes.iter_mut().enumerate() {
            match node {
                Node::Eml(eml) => f(&format!("eml{i}.spectral"), &mut eml.weight.spectral),
                Node::Bn(bn) => {
                    f(&format!("bn{i}.re.gamma"), &mut bn.re.gamma);
                    f(&format!("bn{i}.re.beta"), &mut bn.re.beta);
                    f(&format!("bn{i}.im.gamma"), &mut bn.im.gamma);
                    f(&format!("bn{i}.im.beta"), &mut bn.im.beta);
                }
                _ => {}
            }
        }
        for (branch, units) in [("real", &mut self.head_real), ("imag", &mut self.head_imag)] {
            for (i, unit) in units.iter_mut().enumerate() {
                f(&format!("head.{branch}{i}.w"), &mut unit.dense.w);
                f(&format!("head.{branch}{i}.b"), &mut unit.dense.b);
                f(&format!("head.{branch}{i}.gamma"), &mut unit.bn.gamma);
                f(&format!("head.{branch}{i}.beta"), &mut unit.bn.beta);
            }
        }
        f("head.final.w", &mut self.final_dense.w);
        f("head.final.b", &mut self.final_dense.b);
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    /// Trainable parameters concatenated in visit order. Fixation layers
    /// contribute their (refreshed) spectral values, which is the space the
    /// optimizer works in.
    pub fn param_vector(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, p| out.extend_from_slice(&p.values));
        out
    }

    pub fn set_param_vector(&mut self, values: &[f64]) {
        let mut off = 0;
        self.visit_params(&mut |_, p| {
            let len = p.len();
            p.values.copy_from_slice(&values[off..off + len]);
            off += len;
        });
        assert_eq!(off, values.len(), "param vector length mismatch");
    }

    pub fn grad_vector(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, p| out.extend_from_slice(&p.grad));
        out
    }

    /// Free parameters in the canonical stored forms (KxK kernels for
    /// fixation layers, full spectra otherwise, plus head and norm params).
    pub fn free_parameter_count(&self) -> usize {
        let mut count = 0;
        for node in &self.nodes {
            match node {
                Node::Eml(eml) => count += eml.weight.free_parameter_count(),
                Node::Bn(bn) => {
                    count += bn.re.gamma.len() + bn.re.beta.len();
                    count += bn.im.gamma.len() + bn.im.beta.len();
                }
                _ => {}
            }
        }
        for unit in self.head_real.iter().chain(self.head_imag.iter()) {
            count += unit.dense.w.len() + unit.dense.b.len();
            count += unit.bn.gamma.len() + unit.bn.beta.len();
        }
        count + self.final_dense.w.len() + self.final_dense.b.len()
    }

    /// Multiply-layer views for invariants and tests.
    pub fn eml_weights(&self) -> Vec<&SpectralWeight> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Eml(e) => Some(&e.weight),
                _ => None,
            })
            .collect()
    }

    pub fn noise_sigmas(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node {
                Node::Leaky(n) | Node::Drop(n) => out.push(n.sigma),
                _ => {}
            }
        }
        out
    }

    /// Full engine state for checkpointing: canonical weights, norm state,
    /// and optimizer accumulators. Derived spectral caches of fixation
    /// layers are excluded.
    pub fn export_state(&mut self) -> Vec<(String, Vec<f64>)> {
        let mut out: Vec<(String, Vec<f64>)> = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Eml(eml) => {
                    let w = &eml.weight;
                    if w.fixation_enabled {
                        out.push((format!("eml{i}.time_kernel"), w.time_kernel.clone()));
                    } else {
                        out.push((format!("eml{i}.spectral"), w.spectral.values.clone()));
                    }
                    out.push((format!("eml{i}.sq_avg"), w.spectral.sq_avg.clone()));
                }
                Node::Bn(bn) => {
                    for (tag, core) in [("re", &bn.re), ("im", &bn.im)] {
                        out.push((format!("bn{i}.{tag}.gamma"), core.gamma.values.clone()));
                        out.push((format!("bn{i}.{tag}.gamma_sq"), core.gamma.sq_avg.clone()));
                        out.push((format!("bn{i}.{tag}.beta"), core.beta.values.clone()));
                        out.push((format!("bn{i}.{tag}.beta_sq"), core.beta.sq_avg.clone()));
                        out.push((format!("bn{i}.{tag}.running_mean"), core.running_mean.clone()));
                        out.push((format!("bn{i}.{tag}.running_var"), core.running_var.clone()));
                    }
                }
                _ => {}
            }
        }
        for (branch, units) in [("real", &self.head_real), ("imag", &self.head_imag)] {
            for (i, unit) in units.iter().enumerate() {
                let p = format!("head.{branch}{i}");
                out.push((format!("{p}.w"), unit.dense.w.values.clone()));
                out.push((format!("{p}.w_sq"), unit.dense.w.sq_avg.clone()));
                out.push((format!("{p}.b"), unit.dense.b.values.clone()));
                out.push((format!("{p}.b_sq"), unit.dense.b.sq_avg.clone()));
                out.push((format!("{p}.gamma"), unit.bn.gamma.values.clone()));
                out.push((format!("{p}.gamma_sq"), unit.bn.gamma.sq_avg.clone()));
                out.push((format!("{p}.beta"), unit.bn.beta.values.clone()));
                out.push((format!("{p}.beta_sq"), unit.bn.beta.sq_avg.clone()));
                out.push((format!("{p}.running_mean"), unit.bn.running_mean.clone()));
                out.push((format!("{p}.running_var"), unit.bn.running_var.clone()));
            }
        }
        out.push(("head.final.w".into(), self.final_dense.w.values.clone()));
        out.push(("head.final.w_sq".into(), self.final_dense.w.sq_avg.clone()));
        out.push(("head.final.b".into(), self.final_dense.b.values.clone()));
        out.push(("head.final.b_sq".into(), self.final_dense.b.sq_avg.clone()));
        out
    }

    pub fn import_state(&mut self, state: &[(String, Vec<f64>)]) -> Result<()> {
        let expected = self.export_state();
        if expected.len() != state.len() {
            return Err(Error::Checkpoint(format!(
                "state tensor count mismatch: expected {}, got {}",
                expected.len(),
                state.len()
            )));
        }
        for ((want_name, want), (name, values)) in expected.iter().zip(state) {
            if want_name != name || want.len() != values.len() {
                return Err(Error::Checkpoint(format!(
                    "state tensor mismatch at '{name}' (expected '{want_name}' len {})",
                    want.len()
                )));
            }
        }
        let map: std::collections::HashMap<&str, &Vec<f64>> =
            state.iter().map(|(n, v)| (n.as_str(), v)).collect();
        for (i, node) in self.nodes.iter_mut().enumerate() {
            match node {
                Node::Eml(eml) => {
                    let w = &mut eml.weight;
                    if w.fixation_enabled {
                        w.time_kernel.copy_from_slice(map[format!("eml{i}.time_kernel").as_str()]);
                        w.refresh_spectral();
                    } else {
                        w.spectral
                            .values
                            .copy_from_slice(map[format!("eml{i}.spectral").as_str()]);
                    }
                    w.spectral
                        .sq_avg
                        .copy_from_slice(map[format!("eml{i}.sq_avg").as_str()]);
                }
                Node::Bn(bn) => {
                    for (tag, core) in [("re", &mut bn.re), ("im", &mut bn.im)] {
                        core.gamma
                            .values
                            .copy_from_slice(map[format!("bn{i}.{tag}.gamma").as_str()]);
                        core.gamma
                            .sq_avg
                            .copy_from_slice(map[format!("bn{i}.{tag}.gamma_sq").as_str()]);
                        core.beta
                            .values
                            .copy_from_slice(map[format!("bn{i}.{tag}.beta").as_str()]);
                        core.beta
                            .sq_avg
                            .copy_from_slice(map[format!("bn{i}.{tag}.beta_sq").as_str()]);
                        core.running_mean
                            .copy_from_slice(map[format!("bn{i}.{tag}.running_mean").as_str()]);
                        core.running_var
                            .copy_from_slice(map[format!("bn{i}.{tag}.running_var").as_str()]);
                    }
                }
                _ => {}
            }
        }
        for (branch, units) in [
            ("real", &mut self.head_real),
            ("imag", &mut self.head_imag),
        ] {
            for (i, unit) in units.iter_mut().enumerate() {
                let p = format!("head.{branch}{i}");
                unit.dense.w.values.copy_from_slice(map[format!("{p}.w").as_str()]);
                unit.dense.w.sq_avg.copy_from_slice(map[format!("{p}.w_sq").as_str()]);
                unit.dense.b.values.copy_from_slice(map[format!("{p}.b").as_str()]);
                unit.dense.b.sq_avg.copy_from_slice(map[format!("{p}.b_sq").as_str()]);
                unit.bn.gamma.values.copy_from_slice(map[format!("{p}.gamma").as_str()]);
                unit.bn.gamma.sq_avg.copy_from_slice(map[format!("{p}.gamma_sq").as_str()]);
                unit.bn.beta.values.copy_from_slice(map[format!("{p}.beta").as_str()]);
                unit.bn.beta.sq_avg.copy_from_slice(map[format!("{p}.beta_sq").as_str()]);
                unit.bn.running_mean.copy_from_slice(map[format!("{p}.running_mean").as_str()]);
                unit.bn.running_var.copy_from_slice(map[format!("{p}.running_var").as_str()]);
            }
        }
        self.final_dense.w.values.copy_from_slice(map["head.final.w"]);
        self.final_dense.w.sq_avg.copy_from_slice(map["head.final.w_sq"]);
        self.final_dense.b.values.copy_from_slice(map["head.final.b"]);
        self.final_dense.b.sq_avg.copy_from_slice(map["head.final.b_sq"]);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnist_shape_trace() {
        let spec = mnist_cemnet();
        let trace = spec.shape_trace().unwrap();
        assert_eq!(
            trace,
            vec![(28, 28, 6), (14, 14, 6), (14, 14, 16), (7, 7, 16)]
        );
        assert_eq!(spec.flat_dim().unwrap(), 784);
    }

    #[test]
    fn cifar_shape_trace_and_fixation_flags() {
        let spec = cifar_cemnet(CifarScale::Small);
        let trace = spec.shape_trace().unwrap();
        assert_eq!(trace.last(), Some(&(1, 1, 512)));
        let fixations: Vec<bool> = spec
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Eml { fixation, .. } => Some(*fixation),
                _ => None,
            })
            .collect();
        assert_eq!(fixations, vec![true, true, true, false, false]);

        let large = cifar_cemnet(CifarScale::Large);
        let emls = large
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Eml { .. }))
            .count();
        assert_eq!(emls, 12);
        let fixed = large
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Eml { fixation: true, .. }))
            .count();
        assert_eq!(fixed, 6);
    }

    #[test]
    fn baseline_specs_cannot_be_built() {
        let err = build_network(&modified_lenet5(), 0).unwrap_err();
        assert!(err.to_string().contains("time-domain"));
    }

    #[test]
    fn unknown_arch_rejected() {
        assert!(spec_by_name("mnist-cemnet").is_ok());
        assert!(spec_by_name("nope").is_err());
    }

    #[test]
    fn mnist_parameter_counts_under_fixation() {
        let net = build_network(&mnist_cemnet(), 1).unwrap();
        let emls = net.eml_weights();
        assert_eq!(emls[0].free_parameter_count(), 5 * 5 * 1 * 6);
        assert_eq!(emls[1].free_parameter_count(), 5 * 5 * 6 * 16);
    }

    #[test]
    fn forward_produces_finite_logits_and_expected_shape() {
        let mut net = build_network(&mnist_cemnet(), 7).unwrap();
        let mut input = FeatureBlock::zeros(2, 1, 28, 28);
        let mut rng = rng_for(&[71]);
        for v in input.re.iter_mut().chain(input.im.iter_mut()) {
            *v = rand::Rng::random::<f64>(&mut rng) - 0.5;
        }
        let ctx = NoiseCtx { seed: 7, step: 0 };
        let logits = net.forward(input, &ctx).unwrap();
        assert_eq!(logits.len(), 2 * 10);
        assert!(logits.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn doubling_final_weights_doubles_logits() {
        let spec = mnist_cemnet();
        let mut net = build_network(&spec, 3).unwrap();
        net.set_mode(Mode::Inference);
        net.final_dense.b.values.iter_mut().for_each(|b| *b = 0.0);
        let mut input = FeatureBlock::zeros(1, 1, 28, 28);
        let mut rng = rng_for(&[72]);
        for v in input.re.iter_mut() {
            *v = rand::Rng::random::<f64>(&mut rng);
        }
        let ctx = NoiseCtx { seed: 3, step: 0 };
        let logits = net.forward(input.clone(), &ctx).unwrap();
        net.final_dense.w.values.iter_mut().for_each(|w| *w *= 2.0);
        let doubled = net.forward(input, &ctx).unwrap();
        for (a, b) in logits.iter().zip(&doubled) {
            assert!((2.0 * a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn inference_forward_is_deterministic() {
        let mut net = build_network(&mnist_cemnet(), 11).unwrap();
        net.set_mode(Mode::Inference);
        let input = {
            let mut fb = FeatureBlock::zeros(2, 1, 28, 28);
            let mut rng = rng_for(&[73]);
            for v in fb.re.iter_mut() {
                *v = rand::Rng::random::<f64>(&mut rng);
            }
            fb
        };
        let ctx = NoiseCtx { seed: 11, step: 0 };
        let a = net.forward(input.clone(), &ctx).unwrap();
        let b = net.forward(input, &NoiseCtx { seed: 99, step: 42 }).unwrap();
        assert_eq!(a, b);
    }
}
