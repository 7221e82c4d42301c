//! Reference predictors: per-user majority vote and single-path networks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::dataio::{PoiId, UserId};
use crate::error::{Error, Result};
use crate::evaluation::Scorer;
use crate::model::{Architecture, Model, ModelConfig};
use crate::training::{TrainingWindow, Variant};

/// Visit counts of window targets, per user and overall.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MajorityModel {
    pub per_user_counts: HashMap<UserId, BTreeMap<PoiId, u64>>,
    pub global_counts: BTreeMap<PoiId, u64>,
    pub poi_count: usize,
}

impl MajorityModel {
    /// Counts the targets of `windows`, which should be training windows only.
    pub fn fit(windows: &[TrainingWindow], poi_count: usize) -> Self {
        let mut m = MajorityModel {
            poi_count,
            ..Default::default()
        };
        for w in windows {
            *m.per_user_counts.entry(w.user).or_default().entry(w.target_poi).or_default() += 1;
            *m.global_counts.entry(w.target_poi).or_default() += 1;
        }
        m
    }

    /// The user's POIs by descending count, then the remaining POIs by
    /// descending global count; ties go to the smaller id.
    pub fn predict(&self, user: UserId, k: usize) -> Vec<PoiId> {
        let scores = self.scores(user);
        let mut ids: Vec<PoiId> = (0..self.poi_count).collect();
        ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        ids.truncate(k);
        ids
    }

    /// Scores that order POIs as [`predict`](Self::predict) does: every POI
    /// the user visited outranks every POI they did not.
    pub fn scores(&self, user: UserId) -> Vec<f64> {
        let mut s = vec![0.0; self.poi_count];
        for (&p, &c) in &self.global_counts {
            if p < s.len() {
                s[p] = c as f64;
            }
        }
        if let Some(own) = self.per_user_counts.get(&user) {
            let above = self.global_counts.values().max().copied().unwrap_or(0) as f64 + 1.0;
            for (&p, &c) in own {
                if p < s.len() {
                    s[p] = above * c as f64;
                }
            }
        }
        s
    }
}

impl MajorityModel {
    /// `poi_count=<n>` then `user<TAB>poi<TAB>count` lines, sorted.
    pub fn to_text(&self) -> String {
        let mut s = format!("poi_count={}\n", self.poi_count);
        let mut users: Vec<&UserId> = self.per_user_counts.keys().collect();
        users.sort();
        for u in users {
            for (p, c) in &self.per_user_counts[u] {
                s.push_str(&format!("{u}\t{p}\t{c}\n"));
            }
        }
        s
    }

    /// Inverse of [`to_text`](Self::to_text); global counts are rebuilt
    /// from the per-user ones.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let poi_count = lines
            .next()
            .and_then(|(_, l)| l.strip_prefix("poi_count="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::invalid("majority counts: missing poi_count header"))?;
        let mut m = MajorityModel { poi_count, ..Default::default() };
        for (i, line) in lines {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::invalid(format!("majority counts line {}: {line:?}", i + 1));
            if f.len() != 3 {
                return Err(bad());
            }
            let user: UserId = f[0].parse().map_err(|_| bad())?;
            let poi: PoiId = f[1].parse().map_err(|_| bad())?;
            let count: u64 = f[2].parse().map_err(|_| bad())?;
            *m.per_user_counts.entry(user).or_default().entry(poi).or_default() += count;
            *m.global_counts.entry(poi).or_default() += count;
        }
        Ok(m)
    }
}

pub fn majority_predict(model: &MajorityModel, user: UserId, k: usize) -> Vec<PoiId> {
    model.predict(user, k)
}

impl Scorer for MajorityModel {
    fn score(&self, windows: &[TrainingWindow], f: &mut dyn FnMut(usize, &[f64])) -> Result<()> {
        let mut cache: HashMap<UserId, Vec<f64>> = HashMap::new();
        for (i, w) in windows.iter().enumerate() {
            let s = cache.entry(w.user).or_insert_with(|| self.scores(w.user));
            f(i, s);
        }
        Ok(())
    }
}

/// Mean-pooled embeddings through two GeLU layers.
pub fn mlp_model(base: &ModelConfig, seed: u64) -> Result<Model> {
    Model::new(ModelConfig { arch: Architecture::Mlp, ..base.clone() }, seed)
}

/// Embeddings through a stacked LSTM.
pub fn lstm_model(base: &ModelConfig, seed: u64) -> Result<Model> {
    Model::new(ModelConfig { arch: Architecture::Lstm, ..base.clone() }, seed)
}

/// The gateless single-Transformer variant.
pub fn transformer_model(base: &ModelConfig, seed: u64) -> Result<Model> {
    Model::new(Variant::NoMoe.apply(base), seed)
}

/// Predictor families selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Moe,
    Mlp,
    Lstm,
    Transformer,
    Majority,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Moe,
        ModelKind::Mlp,
        ModelKind::Lstm,
        ModelKind::Transformer,
        ModelKind::Majority,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Moe => "moe",
            ModelKind::Mlp => "mlp",
            ModelKind::Lstm => "lstm",
            ModelKind::Transformer => "transformer",
            ModelKind::Majority => "majority",
        }
    }

    /// Network for this kind; `variant` only applies to `Moe`. `None` for
    /// majority vote, which has nothing to train by gradient.
    pub fn build(self, base: &ModelConfig, variant: Variant, seed: u64) -> Result<Option<Model>> {
        Ok(Some(match self {
            ModelKind::Moe => Model::new(variant.apply(base), seed)?,
            ModelKind::Mlp => mlp_model(base, seed)?,
            ModelKind::Lstm => lstm_model(base, seed)?,
            ModelKind::Transformer => transformer_model(base, seed)?,
            ModelKind::Majority => return Ok(None),
        }))
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
            Error::invalid(format!("unknown model {s:?}; expected one of {}", valid.join(", ")))
        })
    }
}

#[cfg(test)]
mod tests;
