use std::fmt::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nextpoi::baselines::ModelKind;
use nextpoi::model::ModelConfig;
use nextpoi::training::{StopOn, TrainConfig, Variant};

/// Everything that determines a training run besides the data.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub model: ModelKind,
    pub variant: Variant,
    pub train: TrainConfig,
    /// Fraction of sessions used for training; the rest validate.
    pub split: f64,
    /// Model hyperparameters as `key=value` pairs on top of the defaults.
    pub model_overrides: Vec<(String, String)>,
}

pub const RUN_FILE: &str = "run.cfg";

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| anyhow::anyhow!("bad value {v:?} for {key}"))
}

impl RunSettings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => self.model = value.parse()?,
            "variant" => self.variant = value.parse()?,
            "lr" => self.train.lr = parse_num(key, value)?,
            "batch" | "batch_size" => self.train.batch_size = parse_num(key, value)?,
            "seq_len" => self.train.seq_len = parse_num(key, value)?,
            "epochs" | "max_epochs" => self.train.max_epochs = parse_num(key, value)?,
            "patience" => self.train.patience = parse_num(key, value)?,
            "seed" => self.train.seed = parse_num(key, value)?,
            "split" => self.split = parse_num(key, value)?,
            "stop_on" => {
                self.train.stop_on = match value {
                    "validation" => StopOn::Validation,
                    "train" => StopOn::Train,
                    _ => bail!("stop_on must be validation or train, got {value:?}"),
                }
            }
            _ => {
                // validated against the model config when it is built
                ModelConfig::default().set(key, value).with_context(|| format!("unknown setting {key:?}"))?;
                self.model_overrides.retain(|(k, _)| k != key);
                self.model_overrides.push((key.to_string(), value.to_string()));
            }
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("{origin}:{}: expected key=value", i + 1))?;
            self.set(k.trim(), v.trim()).with_context(|| format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Model configuration for the given vocabulary sizes.
    pub fn model_config(&self, poi_count: usize, category_count: usize) -> Result<ModelConfig> {
        let mut c = ModelConfig::new(poi_count, category_count);
        for (k, v) in &self.model_overrides {
            c.set(k, v)?;
        }
        c.max_seq = c.max_seq.max(self.train.seq_len);
        c.train_seq_len = self.train.seq_len;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        writeln!(s, "model={}", self.model).unwrap();
        writeln!(s, "variant={}", self.variant).unwrap();
        writeln!(s, "lr={}", t.lr).unwrap();
        writeln!(s, "batch={}", t.batch_size).unwrap();
        writeln!(s, "seq_len={}", t.seq_len).unwrap();
        writeln!(s, "epochs={}", t.max_epochs).unwrap();
        writeln!(s, "patience={}", t.patience).unwrap();
        writeln!(s, "seed={}", t.seed).unwrap();
        writeln!(s, "split={}", self.split).unwrap();
        let stop = match t.stop_on {
            StopOn::Validation => "validation",
            StopOn::Train => "train",
        };
        writeln!(s, "stop_on={stop}").unwrap();
        for (k, v) in &self.model_overrides {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.split > 0.0 && self.split < 1.0) {
            bail!("split must be in (0, 1), got {}", self.split);
        }
        Ok(())
    }
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            model: ModelKind::Moe,
            variant: Variant::Full,
            train: TrainConfig::default(),
            split: 0.8,
            model_overrides: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut s = RunSettings::default();
        s.apply_text("lr=0.001\nvariant=two_lstm\n# note\nd_model=16\ntf_heads=4\nstop_on=train\n", "t").unwrap();
        assert_eq!(s.train.lr, 1e-3);
        assert_eq!(s.variant, Variant::TwoLstm);
        let mut back = RunSettings::default();
        back.apply_text(&s.to_text(), "t").unwrap();
        assert_eq!(back.to_text(), s.to_text());
        let cfg = back.model_config(10, 2).unwrap();
        assert_eq!((cfg.d_model, cfg.tf_heads), (16, 4));
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        let mut s = RunSettings::default();
        assert!(s.apply_text("colour=blue\n", "t").is_err());
        assert!(s.apply_text("lr=fast\n", "t").is_err());
        assert!(s.apply_text("variant=three\n", "t").is_err());
        assert!(s.apply_text("no equals sign\n", "t").is_err());
    }
}
