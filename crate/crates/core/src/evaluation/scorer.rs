use super::rank_of;
use crate::error::Result;
use crate::model::Model;
use crate::training::{examples, group, sequential_batches, BatchMode, TrainingWindow};

/// Anything that scores every POI for a window; higher is better.
pub trait Scorer {
    /// Calls `f(window index, scores)` exactly once per window.
    fn score(&self, windows: &[TrainingWindow], f: &mut dyn FnMut(usize, &[f64])) -> Result<()>;
}

const EVAL_TARGETS: usize = 256;

impl Scorer for Model {
    fn score(&self, windows: &[TrainingWindow], f: &mut dyn FnMut(usize, &[f64])) -> Result<()> {
        let ex = examples(windows, BatchMode::Prefix);
        for batch in sequential_batches(&ex, EVAL_TARGETS) {
            for grp in group(&batch, &ex, windows) {
                let logits = self.poi_logits(&grp.batch, &grp.targets.rows)?;
                for (i, &w) in grp.windows.iter().enumerate() {
                    f(w, logits.row(i));
                }
            }
        }
        Ok(())
    }
}

/// Rank of each window's target under `scorer`.
pub fn ranks(scorer: &dyn Scorer, windows: &[TrainingWindow]) -> Result<Vec<usize>> {
    let mut out = vec![0; windows.len()];
    scorer.score(windows, &mut |w, scores| out[w] = rank_of(scores, windows[w].target_poi))?;
    Ok(out)
}
