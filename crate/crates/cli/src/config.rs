//! Run configuration: defaults, overridden by a `key = value` config file,
//! overridden by CLI flags. Flag names mirror the file keys.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use freqnet_core::train::TrainConfig;

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub arch: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub subset: Option<usize>,
    pub eval_subset: Option<usize>,
    pub lr_init: Option<f64>,
    pub lr_min: Option<f64>,
    pub drop_rate: Option<f64>,
}

impl RunConfig {
    /// Parse a config file of `key = value` lines; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut map = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected 'key = value'", path.display(), lineno + 1);
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let mut cfg = RunConfig::default();
        for (key, value) in map {
            cfg.set(&key, &value)
                .with_context(|| format!("in config {}", path.display()))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "arch" => self.arch = Some(value.to_string()),
            "data-dir" => self.data_dir = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "epochs" => self.epochs = Some(value.parse().context("epochs")?),
            "batch-size" => self.batch_size = Some(value.parse().context("batch-size")?),
            "seed" => self.seed = Some(value.parse().context("seed")?),
            "subset" => self.subset = Some(value.parse().context("subset")?),
            "eval-subset" => self.eval_subset = Some(value.parse().context("eval-subset")?),
            "lr-init" => self.lr_init = Some(value.parse().context("lr-init")?),
            "lr-min" => self.lr_min = Some(value.parse().context("lr-min")?),
            "drop-rate" => self.drop_rate = Some(value.parse().context("drop-rate")?),
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }

    /// Overlay `other` (CLI flags) on top of `self` (file values).
    pub fn merged_with(mut self, other: RunConfig) -> RunConfig {
        macro_rules! take {
            ($field:ident) => {
                if other.$field.is_some() {
                    self.$field = other.$field;
                }
            };
        }
        take!(arch);
        take!(data_dir);
        take!(out);
        take!(checkpoint);
        take!(epochs);
        take!(batch_size);
        take!(seed);
        take!(subset);
        take!(eval_subset);
        take!(lr_init);
        take!(lr_min);
        take!(drop_rate);
        self
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.lr_init {
            cfg.lr_init = v;
        }
        if let Some(v) = self.lr_min {
            cfg.lr_min = v;
        }
        if let Some(v) = self.drop_rate {
            cfg.drop_rate = v;
        }
        cfg.eval_limit = self.eval_subset;
        cfg
    }

    pub fn require_arch(&self) -> Result<&str> {
        self.arch.as_deref().context("--arch (or 'arch' in the config file) is required")
    }

    pub fn require_data_dir(&self) -> Result<&Path> {
        self.data_dir
            .as_deref()
            .context("--data-dir (or 'data-dir' in the config file) is required")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_and_merges_flags() {
        let dir = std::env::temp_dir().join("freqnet-cfg-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        fs::write(
            &path,
            "# run settings\narch = mnist-cemnet\nepochs = 5\nseed = 9\nbatch-size = 50\n",
        )
        .unwrap();
        let file_cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(file_cfg.arch.as_deref(), Some("mnist-cemnet"));
        assert_eq!(file_cfg.epochs, Some(5));

        let flags = RunConfig {
            epochs: Some(2),
            ..RunConfig::default()
        };
        let merged = file_cfg.merged_with(flags);
        assert_eq!(merged.epochs, Some(2));
        assert_eq!(merged.seed, Some(9));
        let tc = merged.train_config();
        assert_eq!(tc.epochs, 2);
        assert_eq!(tc.batch_size, 50);
        assert_eq!(tc.seed, 9);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        let dir = std::env::temp_dir().join("freqnet-cfg-test2");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.cfg");
        fs::write(&path, "bogus = 1\n").unwrap();
        assert!(RunConfig::from_file(&path).is_err());
        fs::write(&path, "no equals sign here\n").unwrap();
        assert!(RunConfig::from_file(&path).is_err());
    }
}
