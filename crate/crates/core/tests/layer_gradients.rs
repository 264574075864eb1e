//! Every backward pass against central finite differences. Losses are
//! quadratic functionals of the layer outputs, so the analytic chain is
//! exercised end to end through each layer in isolation, and once through
//! the full tiny network.

mod common;

use common::random_block;
use freqnet_core::layers::{
    EmlLayer, FreqBatchNorm, GaussianNoise, NoiseCtx, PoolBridge, SpectralWeight,
};
use freqnet_core::oracle::{fd_gradient, relative_error, tiny_network_gradient_check};
use freqnet_core::plane::FeatureBlock;
use freqnet_core::rng::rng_for;
use rand::Rng;

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

/// loss = 0.5 sum (out - target)^2 over both branches.
fn block_loss(out: &FeatureBlock, target: &FeatureBlock) -> f64 {
    let re: f64 = out
        .re
        .iter()
        .zip(&target.re)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let im: f64 = out
        .im
        .iter()
        .zip(&target.im)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    0.5 * (re + im)
}

fn block_loss_grad(out: &FeatureBlock, target: &FeatureBlock) -> FeatureBlock {
    let mut g = out.clone();
    for (v, t) in g.re.iter_mut().zip(&target.re) {
        *v -= t;
    }
    for (v, t) in g.im.iter_mut().zip(&target.im) {
        *v -= t;
    }
    g
}

#[test]
fn eml_weight_and_input_gradients_match_finite_differences() {
    let (m, n, cin, cout, k) = (4usize, 4usize, 2usize, 2usize, 2usize);
    let mut w = SpectralWeight::new(m, n, cin, cout, k, false).unwrap();
    let mut rng = rng_for(&[601]);
    w.init_he_normal(&mut rng);
    let input = random_block(3, cin, m, n, 602);
    let target = random_block(3, cout, m, n, 603);

    let mut layer = EmlLayer::new(w);
    let out = layer.forward(&input, true).unwrap();
    let grad_out = block_loss_grad(&out, &target);
    let grad_in = layer.backward(&grad_out, true).unwrap().unwrap();

    // Weight gradients: every real parameter of the spectrum.
    let mut params = layer.weight.spectral.values.clone();
    let analytic = layer.weight.spectral.grad.clone();
    let fd = fd_gradient(
        |p| {
            let mut probe = SpectralWeight::new(m, n, cin, cout, k, false).unwrap();
            probe.spectral.values.copy_from_slice(p);
            let mut probe_layer = EmlLayer::new(probe);
            let out = probe_layer.forward(&input, false).unwrap();
            block_loss(&out, &target)
        },
        &mut params,
        FD_STEP,
    );
    let mut worst = 0.0f64;
    for (a, f) in analytic.iter().zip(&fd) {
        worst = worst.max(relative_error(*a, *f));
    }
    assert!(worst < FD_TOL, "weight gradient: worst rel error {worst}");

    // Input gradients: perturb every real scalar of both branches.
    let weight_values = layer.weight.spectral.values.clone();
    let n_inputs = input.re.len();
    let mut flat: Vec<f64> = input.re.iter().chain(input.im.iter()).cloned().collect();
    let fd = fd_gradient(
        |p| {
            let mut probe_in = input.clone();
            probe_in.re.copy_from_slice(&p[..n_inputs]);
            probe_in.im.copy_from_slice(&p[n_inputs..]);
            let mut probe = SpectralWeight::new(m, n, cin, cout, k, false).unwrap();
            probe.spectral.values.copy_from_slice(&weight_values);
            let mut probe_layer = EmlLayer::new(probe);
            let out = probe_layer.forward(&probe_in, false).unwrap();
            block_loss(&out, &target)
        },
        &mut flat,
        FD_STEP,
    );
    let analytic_in: Vec<f64> = grad_in.re.iter().chain(grad_in.im.iter()).cloned().collect();
    let mut worst = 0.0f64;
    for (a, f) in analytic_in.iter().zip(&fd) {
        worst = worst.max(relative_error(*a, *f));
    }
    assert!(worst < FD_TOL, "input gradient: worst rel error {worst}");
}

#[test]
fn batchnorm_gradients_match_finite_differences() {
    let (s, ch, m, n) = (5usize, 2usize, 3usize, 3usize);
    let input = random_block(s, ch, m, n, 611);
    let target = random_block(s, ch, m, n, 612);

    let mut bn = FreqBatchNorm::new(ch, m, n);
    let mut rng = rng_for(&[613]);
    for g in bn.re.gamma.values.iter_mut().chain(bn.im.gamma.values.iter_mut()) {
        *g = 0.5 + rng.random::<f64>();
    }
    let out = bn.forward(&input, true, true).unwrap();
    let grad_out = block_loss_grad(&out, &target);
    let grad_in = bn.backward(&grad_out).unwrap();

    let gamma_re = bn.re.gamma.values.clone();
    let gamma_im = bn.im.gamma.values.clone();
    let make_bn = |gr: &[f64], gi: &[f64], beta_r: &[f64], beta_i: &[f64]| {
        let mut probe = FreqBatchNorm::new(ch, m, n);
        probe.re.gamma.values.copy_from_slice(gr);
        probe.im.gamma.values.copy_from_slice(gi);
        probe.re.beta.values.copy_from_slice(beta_r);
        probe.im.beta.values.copy_from_slice(beta_i);
        probe
    };

    // Gamma and beta of the real branch.
    let mut params: Vec<f64> = gamma_re.iter().chain(bn.re.beta.values.iter()).cloned().collect();
    let analytic: Vec<f64> = bn.re.gamma.grad.iter().chain(bn.re.beta.grad.iter()).cloned().collect();
    let fd = fd_gradient(
        |p| {
            let mut probe = make_bn(&p[..ch], &gamma_im, &p[ch..], &vec![0.0; ch]);
            let out = probe.forward(&input, true, false).unwrap();
            block_loss(&out, &target)
        },
        &mut params,
        FD_STEP,
    );
    for (a, f) in analytic.iter().zip(&fd) {
        assert!(relative_error(*a, *f) < FD_TOL, "gamma/beta rel error {a} vs {f}");
    }

    // Input gradient, real branch only (branches are independent).
    let mut flat = input.re.clone();
    let beta_r = bn.re.beta.values.clone();
    let beta_i = bn.im.beta.values.clone();
    let fd = fd_gradient(
        |p| {
            let mut probe_in = input.clone();
            probe_in.re.copy_from_slice(p);
            let mut probe = make_bn(&gamma_re, &gamma_im, &beta_r, &beta_i);
            let out = probe.forward(&probe_in, true, false).unwrap();
            block_loss(&out, &target)
        },
        &mut flat,
        FD_STEP,
    );
    let mut worst = 0.0f64;
    for (a, f) in grad_in.re.iter().zip(&fd) {
        worst = worst.max(relative_error(*a, *f));
    }
    assert!(worst < FD_TOL, "bn input gradient: worst rel error {worst}");
}

#[test]
fn pool_bridge_gradient_matches_finite_differences() {
    let (s, ch, m, n) = (2usize, 2usize, 4usize, 4usize);
    let input = random_block(s, ch, m, n, 621);
    let target = random_block(s, ch, m / 2, n / 2, 622);

    let mut pool = PoolBridge::new();
    let out = pool.forward(&input, true).unwrap();
    let grad_out = block_loss_grad(&out, &target);
    let grad_in = pool.backward(&grad_out).unwrap();

    let n_inputs = input.re.len();
    let mut flat: Vec<f64> = input.re.iter().chain(input.im.iter()).cloned().collect();
    let fd = fd_gradient(
        |p| {
            let mut probe_in = input.clone();
            probe_in.re.copy_from_slice(&p[..n_inputs]);
            probe_in.im.copy_from_slice(&p[n_inputs..]);
            let mut probe = PoolBridge::new();
            let out = probe.forward(&probe_in, false).unwrap();
            block_loss(&out, &target)
        },
        &mut flat,
        FD_STEP,
    );
    let analytic: Vec<f64> = grad_in.re.iter().chain(grad_in.im.iter()).cloned().collect();
    let mut worst = 0.0f64;
    for (a, f) in analytic.iter().zip(&fd) {
        worst = worst.max(relative_error(*a, *f));
    }
    assert!(worst < FD_TOL, "pool gradient: worst rel error {worst}");
}

#[test]
fn frozen_noise_gradient_matches_finite_differences() {
    let (s, ch, m, n) = (2usize, 1usize, 3usize, 3usize);
    let input = random_block(s, ch, m, n, 631);
    let target = random_block(s, ch, m, n, 632);
    let ctx = NoiseCtx { seed: 5, step: 3 };

    let mut noise = GaussianNoise::new(0.25, 0);
    noise.freeze_for_block(input.re.len(), s, &ctx);
    let out = noise.forward_block(&input, &ctx);
    let grad_out = block_loss_grad(&out, &target);
    let grad_in = noise.backward_block(&grad_out, &ctx);

    let n_inputs = input.re.len();
    let mut flat: Vec<f64> = input.re.iter().chain(input.im.iter()).cloned().collect();
    let frozen = noise.frozen.clone();
    let fd = fd_gradient(
        |p| {
            let mut probe_in = input.clone();
            probe_in.re.copy_from_slice(&p[..n_inputs]);
            probe_in.im.copy_from_slice(&p[n_inputs..]);
            let mut probe = GaussianNoise::new(0.25, 0);
            probe.frozen = frozen.clone();
            let out = probe.forward_block(&probe_in, &ctx);
            block_loss(&out, &target)
        },
        &mut flat,
        FD_STEP,
    );
    let analytic: Vec<f64> = grad_in.re.iter().chain(grad_in.im.iter()).cloned().collect();
    for (a, f) in analytic.iter().zip(&fd) {
        assert!(relative_error(*a, *f) < FD_TOL);
    }
}

/// Scalar 1x1 case: the chain rule reduces to the complex product rule.
#[test]
fn eml_scalar_case_product_rule() {
    let mut w = SpectralWeight::new(1, 1, 1, 1, 1, false).unwrap();
    w.spectral.values = vec![0.7, -1.1];
    let mut layer = EmlLayer::new(w);
    let mut input = FeatureBlock::zeros(1, 1, 1, 1);
    input.re[0] = -0.4;
    input.im[0] = 0.9;
    let out = layer.forward(&input, true).unwrap();
    let target = FeatureBlock::zeros(1, 1, 1, 1);
    let grad_out = block_loss_grad(&out, &target);
    let grad_in = layer.backward(&grad_out, true).unwrap().unwrap();

    // d loss / d a = (out) * conj(w) under the real-pair convention.
    let (or, oi) = (out.re[0], out.im[0]);
    let (wr, wi) = (0.7, -1.1);
    assert!((grad_in.re[0] - (or * wr + oi * wi)).abs() < 1e-12);
    assert!((grad_in.im[0] - (oi * wr - or * wi)).abs() < 1e-12);
}

#[test]
fn tiny_network_end_to_end_gradient_check() {
    let worst = tiny_network_gradient_check(11).unwrap();
    assert!(worst < FD_TOL, "worst relative error {worst}");
}
