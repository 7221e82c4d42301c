//! The mixture-of-experts next-POI network and its baseline siblings.

mod config;
mod net;
#[cfg(test)]
mod tests;

pub use config::{Architecture, ExpertKind, ModelConfig};
pub use net::{ForwardVars, GateMode, Model, SeqBatch, Targets};

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GateOutput {
    /// Learned logits; still reported when the weights are fixed.
    pub logits: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Intermediate values of one forward pass over a single sequence, read at
/// its final position.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub fused_seq: Tensor,
    pub gate: Option<GateOutput>,
    pub expert_outs: Vec<Vec<f64>>,
    pub mixed: Vec<f64>,
    pub poi_logits: Vec<f64>,
    pub cat_logits: Vec<f64>,
}

pub fn moe_forward(model: &Model, poi_seq: &[usize]) -> Result<ForwardTrace> {
    if model.config.arch != Architecture::Moe {
        return Err(Error::invalid("forward traces need the mixture architecture"));
    }
    let mut g = Graph::new(&model.params);
    let batch = SeqBatch::single(poi_seq);
    let out = model.forward(&mut g, &batch, &[poi_seq.len().saturating_sub(1)])?;
    let row = |v| g.value(v).data().to_vec();
    Ok(ForwardTrace {
        fused_seq: g.value(out.fused.expect("mixture forward has an encoder")).clone(),
        gate: out.gate.map(|w| GateOutput {
            logits: row(out.gate_logits.unwrap()),
            weights: row(w),
        }),
        expert_outs: out.experts.iter().map(|&e| row(e)).collect(),
        mixed: row(out.mixed),
        poi_logits: row(out.poi_logits),
        cat_logits: out.cat_logits.map(row).unwrap_or_default(),
    })
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// All ids by descending logit, ties to the smaller id, with their
/// probabilities.
pub fn ranking(logits: &[f64]) -> Vec<(usize, f64)> {
    let probs = softmax(logits);
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    order.into_iter().map(|i| (i, probs[i])).collect()
}

pub fn predict_topk(logits: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 || k > logits.len() {
        return Err(Error::invalid(format!("k must be in 1..={}, got {k}", logits.len())));
    }
    let mut r = ranking(logits);
    r.truncate(k);
    Ok(r)
}
