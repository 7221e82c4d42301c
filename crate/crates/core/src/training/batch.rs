use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::windows::TrainingWindow;
use crate::dataio::PoiId;
use crate::error::Result;
use crate::model::{Model, SeqBatch, Targets};
use crate::numerics::{Graph, Var};

/// How windows are turned into model inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BatchMode {
    /// One input sequence per window, predicted at its last position.
    Windows,
    /// Windows that start at the beginning of the same session share one
    /// input sequence and are predicted at every position of it. With a
    /// causal model this gives the same outputs at a fraction of the cost.
    #[default]
    Prefix,
}

/// An input sequence with the windows it answers.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Vec<PoiId>,
    /// `(position in input, window index)`
    pub targets: Vec<(usize, usize)>,
}

fn single(windows: &[TrainingWindow], i: usize) -> Example {
    Example {
        input: windows[i].input.clone(),
        targets: vec![(windows[i].input.len() - 1, i)],
    }
}

/// Turns windows into examples, in order of each example's first window.
pub fn examples(windows: &[TrainingWindow], mode: BatchMode) -> Vec<Example> {
    if mode == BatchMode::Windows {
        return (0..windows.len()).map(|i| single(windows, i)).collect();
    }
    let mut out: Vec<Example> = Vec::new();
    let mut by_session: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        if w.start != 0 || w.input.is_empty() {
            out.push(single(windows, i));
            continue;
        }
        match by_session.get(&w.session) {
            Some(&e) => {
                let ex = &mut out[e];
                let shared = ex.input.len().min(w.input.len());
                if ex.input[..shared] != w.input[..shared] {
                    out.push(single(windows, i));
                    continue;
                }
                if w.input.len() > ex.input.len() {
                    ex.input = w.input.clone();
                }
                ex.targets.push((w.input.len() - 1, i));
            }
            None => {
                by_session.insert(w.session, out.len());
                out.push(single(windows, i));
            }
        }
    }
    out
}

/// Shuffles examples and packs them into batches of about `batch_size`
/// targets. An example is never split, so a batch can exceed the size only
/// when it holds a single example.
pub fn plan_batches(examples: &[Example], batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    pack(&order, examples, batch_size)
}

fn pack(order: &[usize], examples: &[Example], batch_size: usize) -> Vec<Vec<usize>> {
    let mut batches = Vec::new();
    let mut cur = Vec::new();
    let mut n = 0;
    for &e in order {
        let k = examples[e].targets.len();
        if !cur.is_empty() && n + k > batch_size {
            batches.push(std::mem::take(&mut cur));
            n = 0;
        }
        cur.push(e);
        n += k;
    }
    if !cur.is_empty() {
        batches.push(cur);
    }
    batches
}

/// Batches in example order, for evaluation.
pub fn sequential_batches(examples: &[Example], batch_size: usize) -> Vec<Vec<usize>> {
    let order: Vec<usize> = (0..examples.len()).collect();
    pack(&order, examples, batch_size)
}

/// Examples of one input length packed for a single forward pass.
#[derive(Clone, Debug)]
pub struct Group {
    pub batch: SeqBatch,
    pub targets: Targets,
    /// Window index of each target row.
    pub windows: Vec<usize>,
}

/// Splits a batch into equal-length groups, shortest first.
pub fn group(batch: &[usize], examples: &[Example], windows: &[TrainingWindow]) -> Vec<Group> {
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &e in batch {
        by_len.entry(examples[e].input.len()).or_default().push(e);
    }
    by_len
        .into_iter()
        .map(|(len, members)| {
            let mut g = Group {
                batch: SeqBatch {
                    ids: Vec::with_capacity(len * members.len()),
                    seq_len: len,
                },
                targets: Targets::default(),
                windows: Vec::new(),
            };
            for (b, &e) in members.iter().enumerate() {
                let ex = &examples[e];
                g.batch.ids.extend_from_slice(&ex.input);
                for &(pos, w) in &ex.targets {
                    g.targets.rows.push(b * len + pos);
                    g.targets.poi.push(windows[w].target_poi);
                    g.targets.cat.push(windows[w].target_cat);
                    g.windows.push(w);
                }
            }
            g
        })
        .collect()
}

/// Mean loss per target over all groups, built into `g`.
pub fn groups_loss(g: &mut Graph, model: &Model, groups: &[Group]) -> Result<Var> {
    let total: usize = groups.iter().map(|x| x.targets.rows.len()).sum();
    let mut acc: Option<Var> = None;
    for grp in groups {
        let l = model.loss(g, &grp.batch, &grp.targets)?;
        let l = g.scale(l, grp.targets.rows.len() as f64 / total as f64);
        acc = Some(match acc {
            None => l,
            Some(a) => g.add(a, l)?,
        });
    }
    Ok(acc.expect("batch has at least one group"))
}
