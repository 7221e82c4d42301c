use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpertKind {
    Transformer,
    Lstm,
}

impl ExpertKind {
    pub fn name(self) -> &'static str {
        match self {
            ExpertKind::Transformer => "transformer",
            ExpertKind::Lstm => "lstm",
        }
    }
}

impl FromStr for ExpertKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transformer" => Ok(ExpertKind::Transformer),
            "lstm" => Ok(ExpertKind::Lstm),
            _ => Err(Error::invalid(format!("unknown expert kind {s:?}"))),
        }
    }
}

/// Network family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// Shared encoder, experts, optional gate.
    Moe,
    /// Mean-pooled embeddings through a two-layer perceptron.
    Mlp,
    /// Embeddings straight into a recurrent stack.
    Lstm,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Moe => "moe",
            Architecture::Mlp => "mlp",
            Architecture::Lstm => "lstm",
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moe" => Ok(Architecture::Moe),
            "mlp" => Ok(Architecture::Mlp),
            "lstm" => Ok(Architecture::Lstm),
            _ => Err(Error::invalid(format!("unknown architecture {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub d_model: usize,
    pub max_seq: usize,
    pub train_seq_len: usize,
    /// Attention blocks in the shared encoder; 0 feeds experts the projected
    /// embeddings.
    pub fusion_layers: usize,
    pub tf_layers: usize,
    pub tf_heads: usize,
    pub tf_ff: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub experts: Vec<ExpertKind>,
    /// Without a gate there must be exactly one expert.
    pub gate: bool,
    pub poi_count: usize,
    /// 0 disables the category head.
    pub category_count: usize,
    pub w_poi: f64,
    pub w_cat: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Architecture::Moe,
            d_model: 128,
            max_seq: 500,
            train_seq_len: 50,
            fusion_layers: 1,
            tf_layers: 4,
            tf_heads: 8,
            tf_ff: 128,
            lstm_layers: 2,
            lstm_hidden: 64,
            mlp_hidden: 128,
            experts: vec![ExpertKind::Transformer, ExpertKind::Lstm],
            gate: true,
            poi_count: 0,
            category_count: 0,
            w_poi: 1.0,
            w_cat: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn new(poi_count: usize, category_count: usize) -> Self {
        ModelConfig {
            poi_count,
            category_count,
            ..Default::default()
        }
    }

    /// d=8, one layer of everything, for gradient checks.
    pub fn miniature(poi_count: usize, category_count: usize) -> Self {
        ModelConfig {
            d_model: 8,
            max_seq: 16,
            train_seq_len: 8,
            tf_layers: 1,
            tf_heads: 2,
            tf_ff: 8,
            lstm_layers: 2,
            lstm_hidden: 6,
            mlp_hidden: 8,
            ..Self::new(poi_count, category_count)
        }
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn category_head(&self) -> bool {
        self.category_count > 0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(format!("model config: {m}")));
        if self.poi_count == 0 {
            return bad("poi_count must be positive".into());
        }
        if self.d_model == 0 || self.max_seq == 0 {
            return bad("d_model and max_seq must be positive".into());
        }
        if self.train_seq_len == 0 || self.train_seq_len > self.max_seq {
            return bad(format!("train_seq_len {} must be in 1..={}", self.train_seq_len, self.max_seq));
        }
        if !(self.w_poi.is_finite() && self.w_cat.is_finite()) {
            return bad("loss weights must be finite".into());
        }
        match self.arch {
            Architecture::Moe => {
                if self.experts.is_empty() {
                    return bad("need at least one expert".into());
                }
                if !self.gate && self.experts.len() != 1 {
                    return bad("a gateless model takes exactly one expert".into());
                }
                let attention = self.fusion_layers > 0 || self.experts.contains(&ExpertKind::Transformer);
                if attention && (self.tf_heads == 0 || self.d_model % self.tf_heads != 0) {
                    return bad(format!("d_model {} not divisible by {} heads", self.d_model, self.tf_heads));
                }
                if attention && self.tf_ff == 0 {
                    return bad("tf_ff must be positive".into());
                }
                if self.experts.contains(&ExpertKind::Lstm) && (self.lstm_layers == 0 || self.lstm_hidden == 0) {
                    return bad("lstm expert needs layers and hidden units".into());
                }
            }
            Architecture::Mlp => {
                if self.mlp_hidden == 0 {
                    return bad("mlp_hidden must be positive".into());
                }
            }
            Architecture::Lstm => {
                if self.lstm_layers == 0 || self.lstm_hidden == 0 {
                    return bad("lstm needs layers and hidden units".into());
                }
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let experts: Vec<&str> = self.experts.iter().map(|e| e.name()).collect();
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        put("arch", self.arch.name().into());
        put("d_model", self.d_model.to_string());
        put("max_seq", self.max_seq.to_string());
        put("train_seq_len", self.train_seq_len.to_string());
        put("fusion_layers", self.fusion_layers.to_string());
        put("tf_layers", self.tf_layers.to_string());
        put("tf_heads", self.tf_heads.to_string());
        put("tf_ff", self.tf_ff.to_string());
        put("lstm_layers", self.lstm_layers.to_string());
        put("lstm_hidden", self.lstm_hidden.to_string());
        put("mlp_hidden", self.mlp_hidden.to_string());
        put("experts", experts.join(","));
        put("gate", self.gate.to_string());
        put("poi_count", self.poi_count.to_string());
        put("category_count", self.category_count.to_string());
        put("w_poi", self.w_poi.to_string());
        put("w_cat", self.w_cat.to_string());
        s
    }

    /// Parses `key=value` lines; unspecified keys keep their defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = ModelConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("model config line {}: missing '='", i + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::invalid(format!("bad value {v:?} for {key}")))
        }
        match key {
            "arch" => self.arch = value.parse()?,
            "d_model" => self.d_model = num(key, value)?,
            "max_seq" => self.max_seq = num(key, value)?,
            "train_seq_len" => self.train_seq_len = num(key, value)?,
            "fusion_layers" => self.fusion_layers = num(key, value)?,
            "tf_layers" => self.tf_layers = num(key, value)?,
            "tf_heads" => self.tf_heads = num(key, value)?,
            "tf_ff" => self.tf_ff = num(key, value)?,
            "lstm_layers" => self.lstm_layers = num(key, value)?,
            "lstm_hidden" => self.lstm_hidden = num(key, value)?,
            "mlp_hidden" => self.mlp_hidden = num(key, value)?,
            "experts" => {
                self.experts = value
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "gate" => self.gate = num(key, value)?,
            "poi_count" => self.poi_count = num(key, value)?,
            "category_count" => self.category_count = num(key, value)?,
            "w_poi" => self.w_poi = num(key, value)?,
            "w_cat" => self.w_cat = num(key, value)?,
            _ => return Err(Error::invalid(format!("unknown model config key {key:?}"))),
        }
        Ok(())
    }
}
