use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CheckIn, DatasetSplit, Poi, TrajectorySession, UserId};
use crate::error::{Error, Result};

pub const DEFAULT_SESSION_GAP_SECS: i64 = 24 * 3600;

/// Groups check-ins per user in time order, cutting a new session whenever
/// consecutive check-ins are more than `gap_secs` apart. Output is ordered by
/// user id, then time.
pub fn sessionize(checkins: &[CheckIn], gap_secs: i64) -> Vec<TrajectorySession> {
    let mut sorted = checkins.to_vec();
    sorted.sort_by_key(|c| (c.user, c.timestamp));

    let mut out = Vec::new();
    let mut pois = Vec::new();
    let mut times = Vec::new();
    let mut current: Option<UserId> = None;
    for c in sorted {
        let cut = match (current, times.last()) {
            (Some(u), Some(&last)) => u != c.user || c.timestamp - last > gap_secs,
            _ => false,
        };
        if cut {
            let user = current.unwrap();
            out.push(TrajectorySession::new(user, std::mem::take(&mut pois), std::mem::take(&mut times)).unwrap());
        }
        current = Some(c.user);
        pois.push(c.poi);
        times.push(c.timestamp);
    }
    if let Some(user) = current {
        out.push(TrajectorySession::new(user, pois, times).unwrap());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FilterThresholds {
    pub min_session_len: usize,
    pub min_user_sessions: usize,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            min_session_len: 10,
            min_user_sessions: 10,
        }
    }
}

pub fn filter_dataset(sessions: Vec<TrajectorySession>) -> Vec<TrajectorySession> {
    filter_dataset_with(sessions, &FilterThresholds::default())
}

/// Drops short sessions, then users left with too few sessions.
pub fn filter_dataset_with(sessions: Vec<TrajectorySession>, t: &FilterThresholds) -> Vec<TrajectorySession> {
    let kept: Vec<TrajectorySession> = sessions
        .into_iter()
        .filter(|s| s.len() >= t.min_session_len)
        .collect();
    let mut per_user: BTreeMap<UserId, usize> = BTreeMap::new();
    for s in &kept {
        *per_user.entry(s.user).or_default() += 1;
    }
    kept.into_iter()
        .filter(|s| per_user[&s.user] >= t.min_user_sessions)
        .collect()
}

/// Seeded session-level split. The training side gets
/// floor(n * train_fraction) sessions, clamped so neither side is empty;
/// both sides keep the input order.
pub fn split_dataset(
    sessions: &[TrajectorySession],
    pois: &[Poi],
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let n = sessions.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 sessions to split, got {n}")));
    }
    let n_train = ((n as f64 * train_fraction + 1e-9).floor() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (mut train, mut validation) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train));
    for (s, t) in sessions.iter().zip(in_train) {
        if t {
            train.push(s.clone());
        } else {
            validation.push(s.clone());
        }
    }
    let poi_count = sessions
        .iter()
        .flat_map(|s| s.poi_seq.iter())
        .max()
        .map_or(0, |m| m + 1);
    let category_count = pois.iter().map(|p| p.category as usize + 1).max().unwrap_or(0);
    let user_count = sessions.iter().map(|s| s.user).collect::<BTreeSet<_>>().len();
    Ok(DatasetSplit {
        train,
        validation,
        poi_count,
        category_count,
        user_count,
    })
}
