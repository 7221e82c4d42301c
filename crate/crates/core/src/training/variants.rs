use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Architecture, ExpertKind, ModelConfig};

/// Structural variants compared in the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// One Transformer and one LSTM expert behind a gate.
    Full,
    /// Single Transformer path, no gate.
    NoMoe,
    /// No shared encoder ahead of the experts.
    NoTransformer,
    TwoLstm,
    TwoTransformer,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoMoe,
        Variant::NoTransformer,
        Variant::TwoLstm,
        Variant::TwoTransformer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMoe => "no_moe",
            Variant::NoTransformer => "no_transformer",
            Variant::TwoLstm => "two_lstm",
            Variant::TwoTransformer => "two_transformer",
        }
    }

    /// `base` with this variant's structure applied.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        use ExpertKind::{Lstm, Transformer};
        let mut c = base.clone();
        c.arch = Architecture::Moe;
        c.fusion_layers = base.fusion_layers.max(1);
        c.gate = true;
        match self {
            Variant::Full => c.experts = vec![Transformer, Lstm],
            Variant::NoMoe => {
                c.experts = vec![Transformer];
                c.gate = false;
            }
            Variant::NoTransformer => {
                c.experts = vec![Transformer, Lstm];
                c.fusion_layers = 0;
            }
            Variant::TwoLstm => c.experts = vec![Lstm, Lstm],
            Variant::TwoTransformer => c.experts = vec![Transformer, Transformer],
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownVariant {
                name: s.to_string(),
                valid: Variant::ALL.iter().map(|v| v.name()).collect::<Vec<_>>().join(", "),
            })
    }
}

/// Looks up a variant by name and applies it to `base`.
pub fn variant_config(name: &str, base: &ModelConfig) -> Result<ModelConfig> {
    Ok(name.parse::<Variant>()?.apply(base))
}
