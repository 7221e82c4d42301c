use crate::dataio::{Familiarity, Poi, PoiId, TrajectorySession, UserId};
use crate::error::{Error, Result};

/// One prediction query: the steps before `end` (at most `seq_len` of them)
/// and the step at `end` as the target.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingWindow {
    pub user: UserId,
    /// Index of the source session in the list given to [`make_windows`].
    pub session: usize,
    /// Position of the first input step inside the session.
    pub start: usize,
    pub input: Vec<PoiId>,
    pub target_poi: PoiId,
    pub target_cat: usize,
    pub familiarity: Familiarity,
}

impl TrainingWindow {
    /// Session position of the target.
    pub fn end(&self) -> usize {
        self.start + self.input.len()
    }
}

/// Every position `t >= 1` of every session becomes a target, with input
/// `poi_seq[max(0, t - seq_len)..t]`. Categories are looked up in `pois`.
pub fn make_windows(sessions: &[TrajectorySession], pois: &[Poi], seq_len: usize) -> Result<Vec<TrainingWindow>> {
    if seq_len == 0 {
        return Err(Error::invalid("seq_len must be positive"));
    }
    let mut out = Vec::new();
    for (si, s) in sessions.iter().enumerate() {
        for t in 1..s.len() {
            let start = t.saturating_sub(seq_len);
            let target = s.poi_seq[t];
            let poi = pois.get(target).ok_or(Error::OutOfRange {
                what: "poi table",
                index: target,
                size: pois.len(),
            })?;
            out.push(TrainingWindow {
                user: s.user,
                session: si,
                start,
                input: s.poi_seq[start..t].to_vec(),
                target_poi: target,
                target_cat: poi.category as usize,
                familiarity: s.familiarity_seq.get(t).copied().unwrap_or(Familiarity::Unlabeled),
            });
        }
    }
    Ok(out)
}
