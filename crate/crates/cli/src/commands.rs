//! The four CLI commands: train, eval, verify, profile-ops.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::Rng;

use freqnet_core::checkpoint::{self, CheckpointMeta};
use freqnet_core::data::{load_cifar10, load_mnist, Dataset};
use freqnet_core::fft::{conjugate, dft2_real, idft2, zero_pad_kernel};
use freqnet_core::layers::{FreqBatchNorm, GaussianNoise, NoiseCtx, SpectralWeight};
use freqnet_core::models::{build_network, spec_by_name};
use freqnet_core::oracle;
use freqnet_core::plane::{ComplexPlane, FeatureBlock, RealPlane};
use freqnet_core::profile::profile_ops;
use freqnet_core::rng::rng_for;
use freqnet_core::train::{evaluate, rmsprop_update, train_loop, MetricsCsvWriter};

use crate::config::RunConfig;

fn is_mnist_arch(arch: &str) -> bool {
    arch.starts_with("mnist") || arch.contains("lenet")
}

/// Load (train, test) datasets for the given architecture from `data_dir`.
pub fn load_datasets(arch: &str, data_dir: &Path) -> Result<(Dataset, Dataset)> {
    if is_mnist_arch(arch) {
        let train = load_mnist(
            &data_dir.join("train-images-idx3-ubyte"),
            &data_dir.join("train-labels-idx1-ubyte"),
        )
        .with_context(|| format!("loading MNIST train set from {}", data_dir.display()))?;
        let test = load_mnist(
            &data_dir.join("t10k-images-idx3-ubyte"),
            &data_dir.join("t10k-labels-idx1-ubyte"),
        )?;
        Ok((train, test))
    } else {
        let batches: Vec<PathBuf> = (1..=5)
            .map(|i| data_dir.join(format!("data_batch_{i}.bin")))
            .collect();
        let train = load_cifar10(&batches)
            .with_context(|| format!("loading CIFAR-10 train batches from {}", data_dir.display()))?;
        let test = load_cifar10(&[data_dir.join("test_batch.bin")])?;
        Ok((train, test))
    }
}

pub fn run_train(cfg: &RunConfig) -> Result<()> {
    let arch = cfg.require_arch()?;
    let mut spec = spec_by_name(arch)?;
    let train_cfg = cfg.train_config();
    spec.drop_rate = train_cfg.drop_rate;
    let data_dir = cfg.require_data_dir()?;
    let (mut train, test) = load_datasets(arch, data_dir)?;
    if let Some(n) = cfg.subset {
        train = train.subset(n);
    }
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("runs/default"));
    fs::create_dir_all(&out_dir)?;

    println!(
        "training {} on {} samples (batch {}, {} epochs, seed {})",
        arch,
        train.len(),
        train_cfg.batch_size,
        train_cfg.epochs,
        train_cfg.seed
    );
    let mut network = build_network(&spec, train_cfg.seed)?;
    let csv_path = out_dir.join("metrics.csv");
    let mut sink = MetricsCsvWriter::new(fs::File::create(&csv_path)?);
    let start = Instant::now();
    let mut clock = move || start.elapsed().as_secs_f64();
    let mut hook = |r: &freqnet_core::train::MetricsRecord| {
        println!(
            "epoch {:>3} | step {:>6} | loss {:.4} | train acc {:.4} | test acc {:.4} | lr {:.3e} | {:.1}s",
            r.epoch, r.step, r.train_loss, r.train_acc, r.test_acc, r.lr, r.wall_secs
        );
    };
    let records = train_loop(
        &mut network,
        &train,
        &test,
        &train_cfg,
        Some(&mut sink),
        &mut clock,
        Some(&mut hook),
    )?;

    let ckpt_path = out_dir.join("checkpoint.bin");
    checkpoint::save(
        &mut network,
        &CheckpointMeta {
            arch: arch.to_string(),
            seed: train_cfg.seed,
            epochs: records.len() as u64,
            step: records.last().map_or(0, |r| r.step as u64),
        },
        &ckpt_path,
    )?;
    println!("metrics: {}", csv_path.display());
    println!("checkpoint: {}", ckpt_path.display());
    if let Some(last) = records.last() {
        println!("final test accuracy: {:.4}", last.test_acc);
    }
    Ok(())
}

pub fn run_eval(cfg: &RunConfig) -> Result<()> {
    let ckpt_path = match (&cfg.checkpoint, &cfg.out) {
        (Some(path), _) => path.clone(),
        (None, Some(out)) => out.join("checkpoint.bin"),
        (None, None) => bail!("--checkpoint (or --out pointing at a run directory) is required"),
    };
    let meta = checkpoint::read_meta(&ckpt_path)?;
    let mut spec = spec_by_name(&meta.arch)?;
    if let Some(p) = cfg.drop_rate {
        spec.drop_rate = p;
    }
    let mut network = build_network(&spec, meta.seed)?;
    checkpoint::load(&mut network, &ckpt_path)?;
    let data_dir = cfg.require_data_dir()?;
    let (_, test) = load_datasets(&meta.arch, data_dir)?;
    let acc = evaluate(&mut network, &test, cfg.eval_subset)?;
    println!(
        "{}: test accuracy {:.4} ({} samples)",
        meta.arch,
        acc,
        cfg.eval_subset.map_or(test.len(), |l| l.min(test.len()))
    );
    Ok(())
}

pub fn run_profile(cfg: &RunConfig, csv_out: Option<&Path>) -> Result<()> {
    let arch = cfg.require_arch()?;
    let spec = spec_by_name(arch)?;
    let report = profile_ops(&spec)?;
    print!("{}", report.to_table());
    if let Some(path) = csv_out {
        fs::write(path, report.to_csv())?;
        println!("csv written to {}", path.display());
    }
    Ok(())
}

struct Check {
    name: &'static str,
    outcome: std::result::Result<String, String>,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String>) -> Check {
    Check {
        name,
        outcome: f().map_err(|e| format!("{e:#}")),
    }
}

/// Full oracle suite; prints one pass/fail row per check and returns an
/// error if any failed.
pub fn run_verify(seed: u64) -> Result<()> {
    let checks = vec![
        check("dft2 vs naive double sum", move || {
            let mut worst = 0.0f64;
            for (i, (m, n)) in [(8, 8), (28, 28), (7, 5), (32, 32), (6, 9)].iter().enumerate() {
                let mut rng = rng_for(&[seed, 1000, i as u64]);
                let mut plane = RealPlane::zeros(*m, *n);
                for v in plane.as_mut_slice() {
                    *v = rng.random::<f64>() * 2.0 - 1.0;
                }
                let fast = dft2_real(&plane);
                let naive = oracle::naive_dft2(&plane);
                let scale = naive
                    .re
                    .as_slice()
                    .iter()
                    .chain(naive.im.as_slice())
                    .fold(0.0f64, |a, v| a.max(v.abs()));
                worst = worst.max(fast.max_abs_diff(&naive) / scale.max(1.0));
            }
            if worst < 1e-8 {
                Ok(format!("max relative deviation {worst:.2e}"))
            } else {
                bail!("relative deviation {worst:.2e} exceeds 1e-8")
            }
        }),
        check("dft2/idft2 round trip", move || {
            let mut worst = 0.0f64;
            for (i, (m, n)) in [(7, 7), (28, 28), (32, 32), (14, 6)].iter().enumerate() {
                let mut rng = rng_for(&[seed, 1001, i as u64]);
                let mut plane = ComplexPlane::zeros(*m, *n);
                for v in plane
                    .re
                    .as_mut_slice()
                    .iter_mut()
                    .chain(plane.im.as_mut_slice())
                {
                    *v = rng.random::<f64>() * 2.0 - 1.0;
                }
                let back = idft2(&dft2_real(&plane.re));
                let mut real_only = plane.clone();
                real_only.im.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
                worst = worst.max(back.max_abs_diff(&real_only));
            }
            if worst < 1e-9 {
                Ok(format!("max round-trip error {worst:.2e}"))
            } else {
                bail!("round-trip error {worst:.2e} exceeds 1e-9")
            }
        }),
        check("conjugate equals positive-exponent transform", move || {
            let mut rng = rng_for(&[seed, 1002]);
            let mut plane = RealPlane::zeros(3, 3);
            for v in plane.as_mut_slice() {
                *v = rng.random::<f64>();
            }
            let lhs = conjugate(&dft2_real(&plane));
            let rhs = oracle::naive_dft2_positive(&plane);
            let err = lhs.max_abs_diff(&rhs);
            if err < 1e-9 {
                Ok(format!("max deviation {err:.2e}"))
            } else {
                bail!("deviation {err:.2e}")
            }
        }),
        check("spectral multiply equals reflected circular xcorr", move || {
            let mut worst = 0.0f64;
            for case in 0..5u64 {
                let mut rng = rng_for(&[seed, 1003, case]);
                let (m, n, k, cin, cout) = (6usize, 6usize, 3usize, 2usize, 2usize);
                let mut images = Vec::new();
                let mut block = FeatureBlock::zeros(1, cin, m, n);
                for c in 0..cin {
                    let mut img = RealPlane::zeros(m, n);
                    for v in img.as_mut_slice() {
                        *v = rng.random::<f64>() - 0.5;
                    }
                    block.set_plane(0, c, &conjugate(&dft2_real(&img)));
                    images.push(img);
                }
                let mut weight = SpectralWeight::new(m, n, cin, cout, k, true).unwrap();
                for v in weight.time_kernel.iter_mut() {
                    *v = rng.random::<f64>() - 0.5;
                }
                weight.refresh_spectral();
                let padded: Vec<RealPlane> = (0..cin * cout)
                    .map(|p| {
                        let kern = RealPlane::from_vec(
                            k,
                            k,
                            weight.time_kernel[p * k * k..(p + 1) * k * k].to_vec(),
                        )
                        .unwrap();
                        zero_pad_kernel(&kern, m, n).unwrap()
                    })
                    .collect();
                let mut layer = freqnet_core::layers::EmlLayer::new(weight);
                let out = layer.forward(&block, false).unwrap();
                let expect = oracle::reflected_circular_xcorr(&images, &padded, cin, cout).unwrap();
                for (c, exp) in expect.iter().enumerate() {
                    let spatial = idft2(&out.plane(0, c));
                    let diff = freqnet_core::plane::max_abs_diff(spatial.re.as_slice(), exp.as_slice());
                    worst = worst.max(diff);
                }
            }
            if worst < 1e-8 {
                Ok(format!("max abs deviation {worst:.2e}"))
            } else {
                bail!("deviation {worst:.2e} exceeds 1e-8")
            }
        }),
        check("weight fixation closure after an optimizer step", move || {
            let mut rng = rng_for(&[seed, 1004]);
            let mut w = SpectralWeight::new(8, 8, 2, 3, 3, true).unwrap();
            w.init_he_normal(&mut rng);
            for g in w.spectral.grad.iter_mut() {
                *g = rng.random::<f64>() - 0.5;
            }
            let (values, grads, sq) = (&mut w.spectral.values, &w.spectral.grad, &mut w.spectral.sq_avg);
            rmsprop_update(values, grads, sq, 0.004, 0.9, 1e-7);
            w.apply_fixation();
            w.ensure_fresh();
            let mut worst = 0.0f64;
            for ci in 0..2 {
                for co in 0..3 {
                    let (re, im) = w.spectral_plane(ci, co);
                    let plane = ComplexPlane::new(
                        RealPlane::from_vec(8, 8, re.to_vec()).unwrap(),
                        RealPlane::from_vec(8, 8, im.to_vec()).unwrap(),
                    )
                    .unwrap();
                    let t = idft2(&plane);
                    for r in 0..8 {
                        for c in 0..8 {
                            if r >= 3 || c >= 3 {
                                worst = worst.max(t.re.get(r, c).abs()).max(t.im.get(r, c).abs());
                            }
                        }
                    }
                }
            }
            if worst < 1e-10 {
                Ok(format!("max out-of-support magnitude {worst:.2e}"))
            } else {
                bail!("out-of-support magnitude {worst:.2e} exceeds 1e-10")
            }
        }),
        check("frequency batch norm per-bin statistics", move || {
            let mut rng = rng_for(&[seed, 1005]);
            let mut block = FeatureBlock::zeros(32, 2, 4, 4);
            for v in block.re.iter_mut().chain(block.im.iter_mut()) {
                *v = (rng.random::<f64>() - 0.5) * 20.0;
            }
            let mut bn = FreqBatchNorm::new(2, 4, 4);
            let out = bn.forward(&block, true, false).unwrap();
            let stride = 2 * 16;
            let mut worst_mean = 0.0f64;
            let mut worst_var = 0.0f64;
            for p in 0..stride {
                let vals: Vec<f64> = (0..32).map(|s| out.re[s * stride + p]).collect();
                let mean = vals.iter().sum::<f64>() / 32.0;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 32.0;
                worst_mean = worst_mean.max(mean.abs());
                worst_var = worst_var.max((var - 1.0).abs());
            }
            if worst_mean < 1e-9 && worst_var < 1e-6 {
                Ok(format!("mean {worst_mean:.1e}, |var-1| {worst_var:.1e}"))
            } else {
                bail!("mean {worst_mean:.1e}, |var-1| {worst_var:.1e}")
            }
        }),
        check("noise sampler statistics", move || {
            let ctx = NoiseCtx { seed, step: 0 };
            let layer = GaussianNoise::new(0.25, 0);
            let block = {
                let mut b = FeatureBlock::zeros(4, 1, 125, 100);
                for v in b.re.iter_mut().chain(b.im.iter_mut()) {
                    *v = 1.0;
                }
                b
            };
            let out = layer.forward_block(&block, &ctx);
            let samples: Vec<f64> = out.re.iter().chain(out.im.iter()).cloned().collect();
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let std = (samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / samples.len() as f64)
                .sqrt();
            if (mean - 1.0).abs() < 0.01 && (std - 0.25).abs() < 0.01 {
                Ok(format!("mean {mean:.4}, std {std:.4} (target 1, 0.25)"))
            } else {
                bail!("mean {mean:.4}, std {std:.4}")
            }
        }),
        check("pooling bridge vs direct time-domain pooling", move || {
            let mut rng = rng_for(&[seed, 1006]);
            let mut time = RealPlane::zeros(8, 8);
            for v in time.as_mut_slice() {
                *v = rng.random::<f64>() * 2.0 - 1.0;
            }
            let mut block = FeatureBlock::zeros(1, 1, 8, 8);
            block.set_plane(0, 0, &dft2_real(&time));
            let out = freqnet_core::layers::maxpool_bridge(
                &block,
                &freqnet_core::layers::PoolConfig::default(),
            )
            .unwrap();
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
            let err = out.plane(0, 0).max_abs_diff(&dft2_real(&direct));
            if err < 1e-8 {
                Ok(format!("max deviation {err:.2e}"))
            } else {
                bail!("deviation {err:.2e}")
            }
        }),
        check("end-to-end gradients vs finite differences", move || {
            let worst = oracle::tiny_network_gradient_check(seed)?;
            if worst < 1e-4 {
                Ok(format!("max relative error {worst:.2e}"))
            } else {
                bail!("max relative error {worst:.2e} exceeds 1e-4")
            }
        }),
        check("dropout spectral ratio (reported, not gated)", move || {
            let mut rng = rng_for(&[seed, 1007]);
            let stats = oracle::measure_dropout_spectral_ratio(8, 8, 0.5, 40, &mut rng);
            if stats.mean.is_finite() && stats.std.is_finite() {
                Ok(format!(
                    "per-bin ratio mean {:.3} (1-p = 0.5), std {:.3}, {} samples",
                    stats.mean, stats.std, stats.samples
                ))
            } else {
                bail!("non-finite ratio statistics")
            }
        }),
    ];

    let mut failed = 0;
    for c in &checks {
        match &c.outcome {
            Ok(detail) => println!("[PASS] {:<48} {detail}", c.name),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {:<48} {detail}", c.name);
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

