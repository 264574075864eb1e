//! Brute-force reference implementations used to validate the fast paths.
//!
//! Everything in here is transform-free or plain-loop based and shares no
//! code with what it checks: the naive double-sum DFT, the reflected
//! circular cross-correlation, a standard spatial cross-correlation, real
//! time-domain reference layers, and a central finite-difference gradient
//! checker.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::plane::{ComplexPlane, RealPlane};

/// Reference convolution filter plus the Leaky ReLU slope used by the
/// time-domain reference stack.
#[derive(Debug, Clone)]
pub struct ReferenceKernel {
    pub weights: Vec<RealPlane>, // cin * cout planes, kernel-sized
    pub cin: usize,
    pub cout: usize,
    pub slope: f64,
}

impl ReferenceKernel {
    pub fn new(weights: Vec<RealPlane>, cin: usize, cout: usize) -> Self {
        assert_eq!(weights.len(), cin * cout);
        ReferenceKernel {
            weights,
            cin,
            cout,
            slope: 0.2,
        }
    }
}

/// Literal O(M^2 N^2) evaluation of the forward DFT double sum:
/// re(u,v) =  sum f(x,y) cos(2 pi (ux/M + vy/N))
/// im(u,v) = -sum f(x,y) sin(2 pi (ux/M + vy/N))
pub fn naive_dft2(plane: &RealPlane) -> ComplexPlane {
    naive_dft2_with_sign(plane, -1.0)
}

/// Same double sum with the exponent sign flipped; equals the conjugate of
/// the forward transform for real input.
pub fn naive_dft2_positive(plane: &RealPlane) -> ComplexPlane {
    naive_dft2_with_sign(plane, 1.0)
}

fn naive_dft2_with_sign(plane: &RealPlane, sign: f64) -> ComplexPlane {
    let m = plane.rows();
    let n = plane.cols();
    let mut out = ComplexPlane::zeros(m, n);
    for u in 0..m {
        for v in 0..n {
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for x in 0..m {
                for y in 0..n {
                    let angle =
                        2.0 * PI * (u as f64 * x as f64 / m as f64 + v as f64 * y as f64 / n as f64);
                    let f = plane.get(x, y);
                    acc_re += f * angle.cos();
                    acc_im += sign * f * angle.sin();
                }
            }
            out.re.set(u, v, acc_re);
            out.im.set(u, v, acc_im);
        }
    }
    out
}

/// Complex-input variant of the naive forward DFT (used to cross-check the
/// fast path on complex planes).
pub fn naive_dft2_complex(plane: &ComplexPlane) -> ComplexPlane {
    let m = plane.rows();
    let n = plane.cols();
    let mut out = ComplexPlane::zeros(m, n);
    for u in 0..m {
        for v in 0..n {
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for x in 0..m {
                for y in 0..n {
                    let angle =
                        2.0 * PI * (u as f64 * x as f64 / m as f64 + v as f64 * y as f64 / n as f64);
                    let (c, s) = (angle.cos(), angle.sin());
                    let (fr, fi) = plane.get(x, y);
                    // (fr + i fi) * (cos - i sin)
                    acc_re += fr * c + fi * s;
                    acc_im += fi * c - fr * s;
                }
            }
            out.re.set(u, v, acc_re);
            out.im.set(u, v, acc_im);
        }
    }
    out
}

/// The exact spatial operation computed by idft2(conj(F(I)) . F(W_p)):
/// out[t1, t2, c] = sum_{m,n,k} W_p[m,n,k,c] * I[(m - t1) mod M, (n - t2) mod N, k].
///
/// `image` holds `cin` planes; `kernel_padded` holds `cin * cout` planes
/// (input-channel major), all M x N.
pub fn reflected_circular_xcorr(
    image: &[RealPlane],
    kernel_padded: &[RealPlane],
    cin: usize,
    cout: usize,
) -> Result<Vec<RealPlane>> {
    if image.len() != cin || kernel_padded.len() != cin * cout {
        return Err(Error::dims(
            "reflected_circular_xcorr",
            format!("{} image planes, {} kernel planes", cin, cin * cout),
            format!("{}, {}", image.len(), kernel_padded.len()),
        ));
    }
    let m = image[0].rows();
    let n = image[0].cols();
    for p in image.iter().chain(kernel_padded.iter()) {
        if p.rows() != m || p.cols() != n {
            return Err(Error::dims(
                "reflected_circular_xcorr",
                format!("{}x{}", m, n),
                format!("{}x{}", p.rows(), p.cols()),
            ));
        }
    }

    let mut out = vec![RealPlane::zeros(m, n); cout];
    for c in 0..cout {
        for t1 in 0..m {
            for t2 in 0..n {
                let mut acc = 0.0;
                for k in 0..cin {
                    let w = &kernel_padded[k * cout + c];
                    let img = &image[k];
                    for wm in 0..m {
                        let xi = (wm + m - t1) % m;
                        for wn in 0..n {
                            let yi = (wn + n - t2) % n;
                            acc += w.get(wm, wn) * img.get(xi, yi);
                        }
                    }
                }
                out[c].set(t1, t2, acc);
            }
        }
    }
    Ok(out)
}

/// Standard zero-padded "same" cross-correlation with a centered KxK kernel
/// (odd K), as a CNN convolution layer computes it.
pub fn spatial_cross_correlation_same(image: &RealPlane, kernel: &RealPlane) -> Result<RealPlane> {
    let k = kernel.rows();
    if kernel.cols() != k || k % 2 == 0 {
        return Err(Error::dims(
            "spatial_cross_correlation_same",
            "odd square kernel",
            format!("{}x{}", kernel.rows(), kernel.cols()),
        ));
    }
    let m = image.rows();
    let n = image.cols();
    let off = (k / 2) as isize;
    let mut out = RealPlane::zeros(m, n);
    for y1 in 0..m as isize {
        for y2 in 0..n as isize {
            let mut acc = 0.0;
            for a in 0..k as isize {
                for b in 0..k as isize {
                    let x1 = y1 + a - off;
                    let x2 = y2 + b - off;
                    if x1 >= 0 && x1 < m as isize && x2 >= 0 && x2 < n as isize {
                        acc += kernel.get(a as usize, b as usize) * image.get(x1 as usize, x2 as usize);
                    }
                }
            }
            out.set(y1 as usize, y2 as usize, acc);
        }
    }
    Ok(out)
}

/// Time-domain reference Batch Normalization: per-pixel batch mean, one
/// pooled standard deviation across batch and pixels (the scalar the
/// per-bin frequency form is proportional to), then gamma/beta.
pub fn ref_batchnorm(batch: &[RealPlane], gamma: f64, beta: f64, eps: f64) -> Vec<RealPlane> {
    let s = batch.len();
    assert!(s >= 2);
    let m = batch[0].rows();
    let n = batch[0].cols();
    let mut mean = RealPlane::zeros(m, n);
    for img in batch {
        for r in 0..m {
            for c in 0..n {
                mean.set(r, c, mean.get(r, c) + img.get(r, c) / s as f64);
            }
        }
    }
    let mut var = 0.0;
    for img in batch {
        for r in 0..m {
            for c in 0..n {
                let d = img.get(r, c) - mean.get(r, c);
                var += d * d;
            }
        }
    }
    var /= (s * m * n) as f64;
    let inv = 1.0 / (var + eps).sqrt();
    batch
        .iter()
        .map(|img| {
            let mut out = RealPlane::zeros(m, n);
            for r in 0..m {
                for c in 0..n {
                    out.set(r, c, gamma * (img.get(r, c) - mean.get(r, c)) * inv + beta);
                }
            }
            out
        })
        .collect()
}

/// Bernoulli dropout: each value kept with probability 1-p, dropped to zero
/// with probability p.
pub fn ref_dropout<R: Rng>(plane: &RealPlane, p: f64, rng: &mut R) -> RealPlane {
    let mut out = plane.clone();
    for v in out.as_mut_slice() {
        if rng.random::<f64>() < p {
            *v = 0.0;
        }
    }
    out
}

/// Leaky ReLU with the reference slope.
pub fn ref_leaky_relu(plane: &RealPlane, slope: f64) -> RealPlane {
    let mut out = plane.clone();
    for v in out.as_mut_slice() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    out
}

/// Reference stack: BN, then Bernoulli dropout, then Leaky ReLU, all in the
/// time domain. Grounds the frequency-domain approximations empirically.
pub fn time_domain_reference_stack<R: Rng>(
    batch: &[RealPlane],
    kernel: &ReferenceKernel,
    drop_p: f64,
    rng: &mut R,
) -> Vec<RealPlane> {
    let normed = ref_batchnorm(batch, 1.0, 0.0, 1e-5);
    normed
        .iter()
        .map(|img| ref_leaky_relu(&ref_dropout(img, drop_p, rng), kernel.slope))
        .collect()
}

/// Empirical statistics of the per-bin spectral ratio
/// dft2(dropout(f)) / dft2(f), measured over `trials` random planes.
/// Reported, not asserted: the multiplicative-noise model is an
/// approximation by construction.
pub struct SpectralRatioStats {
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
}

pub fn measure_dropout_spectral_ratio<R: Rng>(
    rows: usize,
    cols: usize,
    p: f64,
    trials: usize,
    rng: &mut R,
) -> SpectralRatioStats {
    let mut ratios = Vec::new();
    for _ in 0..trials {
        let mut plane = RealPlane::zeros(rows, cols);
        for v in plane.as_mut_slice() {
            *v = rng.random::<f64>();
        }
        let dropped = ref_dropout(&plane, p, rng);
        let base = naive_dft2(&plane);
        let after = naive_dft2(&dropped);
        for r in 0..rows {
            for c in 0..cols {
                let (br, bi) = base.get(r, c);
                let mag = (br * br + bi * bi).sqrt();
                if mag > 1e-6 {
                    let (ar, ai) = after.get(r, c);
                    // Ratio of the projection onto the original phase.
                    ratios.push((ar * br + ai * bi) / (mag * mag));
                }
            }
        }
    }
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    SpectralRatioStats {
        mean,
        std: var.sqrt(),
        samples: ratios.len(),
    }
}

/// End-to-end gradient check on a tiny network (one 4x4 multiply layer with
/// K=2, batch norm, frozen noise, pooling bridge, small dense head): every
/// trainable parameter's analytic gradient against central finite
/// differences of the scalar loss. Returns the worst relative error.
pub fn tiny_network_gradient_check(seed: u64) -> Result<f64> {
    use crate::data::to_frequency_input;
    use crate::layers::NoiseCtx;
    use crate::models::{build_network, LayerSpec, Mode, NetworkSpec};
    use crate::train::softmax_cross_entropy;

    let spec = NetworkSpec {
        name: "tiny-gradcheck".into(),
        input_rows: 4,
        input_cols: 4,
        input_channels: 1,
        layers: vec![
            LayerSpec::Eml {
                out_channels: 2,
                kernel: 2,
                fixation: true,
            },
            LayerSpec::MaxPool,
        ],
        head_branch_dims: vec![3],
        classes: 2,
        drop_rate: 0.5,
    };
    let mut net = build_network(&spec, seed).map_err(|e| Error::Config(e.to_string()))?;
    net.set_mode(Mode::Training);

    let batch = 3usize;
    let mut rng = crate::rng::rng_for(&[seed, 0x7e57]);
    // Move every parameter (scale/shift included) to a generic point: the
    // default zero shifts would park dead features exactly on activation
    // kinks, where no gradient is defined and finite differences straddle
    // both slopes.
    let mut start = net.param_vector();
    for v in start.iter_mut() {
        *v += rng.random::<f64>() * 0.2 - 0.1;
    }
    net.set_param_vector(&start);

    let mut images = vec![0.0; batch * 16];
    for v in images.iter_mut() {
        *v = rng.random::<f64>();
    }
    let labels: Vec<u8> = (0..batch).map(|s| (s % 2) as u8).collect();
    let input = to_frequency_input(&images, batch, 1, 4, 4);
    let ctx = NoiseCtx { seed, step: 0 };

    // Freeze the noise drawn on the first forward so the loss is a pure
    // function of the parameters.
    net.freeze_noise();
    let logits = net.forward(input.clone(), &ctx)?;
    let (_, grad, _) = softmax_cross_entropy(&logits, &labels, 2);
    net.zero_grads();
    net.backward(&grad, &ctx)?;
    let analytic = net.grad_vector();
    let mut params = net.param_vector();
    net.zero_grads();

    let loss = |net: &mut crate::models::Network, p: &[f64]| -> f64 {
        net.set_param_vector(p);
        let logits = net.forward(input.clone(), &ctx).expect("forward");
        softmax_cross_entropy(&logits, &labels, 2).0
    };
    let mut worst = 0.0f64;
    let step = 1e-5;
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + step;
        let hi = loss(&mut net, &params);
        params[i] = orig - step;
        let lo = loss(&mut net, &params);
        params[i] = orig;
        let fd = (hi - lo) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], fd));
    }
    Ok(worst)
}

/// Central finite-difference gradient of `loss` at `params`.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(
    mut loss: F,
    params: &mut Vec<f64>,
    step: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + step;
        let hi = loss(params);
        params[i] = orig - step;
        let lo = loss(params);
        params[i] = orig;
        grad[i] = (hi - lo) / (2.0 * step);
    }
    grad
}

/// Guarded relative error between an analytic and a finite-difference value.
/// Deviations below the central-difference noise floor (loss roundoff over a
/// 1e-5 step) count as agreement; both values are numerically zero there.
pub fn relative_error(analytic: f64, fd: f64) -> f64 {
    let diff = (analytic - fd).abs();
    if diff < 1e-8 {
        return 0.0;
    }
    diff / analytic.abs().max(fd.abs()).max(1e-6)
}

/// Worst relative deviation between analytic gradients and central finite
/// differences of `loss`. The loss must be pure and deterministic (noise
/// frozen) while parameters vary.
pub fn finite_difference_check<F: FnMut(&[f64]) -> f64>(
    mut loss: F,
    params: &mut Vec<f64>,
    analytic: &[f64],
    step: f64,
) -> Result<f64> {
    assert_eq!(params.len(), analytic.len());
    let probe = loss(params);
    if !probe.is_finite() {
        return Err(Error::NonFinite("finite_difference_check loss"));
    }
    let fd = fd_gradient(&mut loss, params, step);
    let mut worst = 0.0f64;
    for (a, f) in analytic.iter().zip(&fd) {
        worst = worst.max(relative_error(*a, *f));
    }
    Ok(worst)
}
