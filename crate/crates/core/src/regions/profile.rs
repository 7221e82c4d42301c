use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use super::grid::{RegionGrid, RegionId};
use super::meanshift::{mean_shift, MeanShiftParams};
use crate::dataio::{CheckIn, Familiarity, Poi, TrajectorySession, UserId};
use crate::error::{Error, Result};

const DAY_SECS: i64 = 86_400;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowStart {
    /// Midnight UTC of the day of the user's first check-in.
    FirstCheckIn,
    /// Midnight UTC of the day containing this timestamp.
    At(i64),
}

/// Whole calendar days (UTC) used to locate the main activity region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProfileWindow {
    pub days: u32,
    pub start: WindowStart,
}

impl Default for ProfileWindow {
    fn default() -> Self {
        ProfileWindow {
            days: 7,
            start: WindowStart::FirstCheckIn,
        }
    }
}

impl ProfileWindow {
    pub fn days(days: u32) -> Self {
        ProfileWindow {
            days,
            ..Default::default()
        }
    }

    /// Half-open [start, end) in epoch seconds for a record whose earliest
    /// check-in is at `first`.
    pub fn bounds(&self, first: i64) -> (i64, i64) {
        let anchor = match self.start {
            WindowStart::FirstCheckIn => first,
            WindowStart::At(t) => t,
        };
        let start = anchor.div_euclid(DAY_SECS) * DAY_SECS;
        (start, start + self.days as i64 * DAY_SECS)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MainRegion {
    pub region: RegionId,
    pub mode: (f64, f64),
    /// The window held no check-ins and the full record was used.
    pub fallback: bool,
}

fn coords(checkins: &[CheckIn], pois: &[Poi]) -> Result<Vec<(f64, f64)>> {
    checkins
        .iter()
        .map(|c| {
            pois.get(c.poi)
                .map(|p| (p.lat, p.lon))
                .ok_or(Error::OutOfRange {
                    what: "poi table",
                    index: c.poi,
                    size: pois.len(),
                })
        })
        .collect()
}

/// Mean-shift mode of the check-ins inside the profiling window, as a grid
/// region. `checkins` must be in time order.
pub fn main_activity_region(
    checkins: &[CheckIn],
    pois: &[Poi],
    window: &ProfileWindow,
    grid: &RegionGrid,
    params: &MeanShiftParams,
) -> Result<MainRegion> {
    let first = checkins
        .iter()
        .map(|c| c.timestamp)
        .min()
        .ok_or_else(|| Error::invalid("main activity region needs at least one check-in"))?;
    let (lo, hi) = window.bounds(first);
    let inside: Vec<CheckIn> = checkins
        .iter()
        .filter(|c| c.timestamp >= lo && c.timestamp < hi)
        .copied()
        .collect();
    let fallback = inside.is_empty();
    let used = if fallback { checkins } else { &inside[..] };
    let ms = mean_shift(&coords(used, pois)?, params)?;
    Ok(MainRegion {
        region: grid.region_of(ms.mode.0, ms.mode.1),
        mode: ms.mode,
        fallback,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionProfile {
    pub user: UserId,
    pub visit_counts: BTreeMap<RegionId, usize>,
    pub main_region: RegionId,
    pub familiar_set: BTreeSet<RegionId>,
    pub window_fallback: bool,
}

impl RegionProfile {
    pub fn total_checkins(&self) -> usize {
        self.visit_counts.values().sum()
    }
}

/// Three most visited regions, ties to the smaller id.
pub fn top_regions(counts: &BTreeMap<RegionId, usize>, k: usize) -> Vec<RegionId> {
    let mut v: Vec<(RegionId, usize)> = counts.iter().map(|(&r, &c)| (r, c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|(r, _)| r).collect()
}

pub fn familiar_set(counts: &BTreeMap<RegionId, usize>, main_region: RegionId) -> BTreeSet<RegionId> {
    let mut s: BTreeSet<RegionId> = top_regions(counts, 3).into_iter().collect();
    s.insert(main_region);
    s
}

pub fn build_profile(
    user: UserId,
    checkins: &[CheckIn],
    pois: &[Poi],
    grid: &RegionGrid,
    params: &MeanShiftParams,
    window: &ProfileWindow,
) -> Result<RegionProfile> {
    let main = main_activity_region(checkins, pois, window, grid, params)?;
    let mut visit_counts = BTreeMap::new();
    for (lat, lon) in coords(checkins, pois)? {
        *visit_counts.entry(grid.region_of(lat, lon)).or_insert(0) += 1;
    }
    Ok(RegionProfile {
        user,
        familiar_set: familiar_set(&visit_counts, main.region),
        visit_counts,
        main_region: main.region,
        window_fallback: main.fallback,
    })
}

/// One profile per user appearing in `sessions`, over all their check-ins.
pub fn build_profiles(
    sessions: &[TrajectorySession],
    pois: &[Poi],
    grid: &RegionGrid,
    params: &MeanShiftParams,
    window: &ProfileWindow,
) -> Result<BTreeMap<UserId, RegionProfile>> {
    let mut per_user: BTreeMap<UserId, Vec<CheckIn>> = BTreeMap::new();
    for s in sessions {
        per_user.entry(s.user).or_default().extend(s.checkins());
    }
    per_user
        .into_iter()
        .map(|(user, mut c)| {
            c.sort_by_key(|x| x.timestamp);
            build_profile(user, &c, pois, grid, params, window).map(|p| (user, p))
        })
        .collect()
}

/// Labels every step familiar iff its POI falls in the user's familiar set.
pub fn label_movements(
    sessions: &[TrajectorySession],
    profiles: &BTreeMap<UserId, RegionProfile>,
    pois: &[Poi],
    grid: &RegionGrid,
) -> Result<Vec<TrajectorySession>> {
    sessions
        .iter()
        .map(|s| {
            let profile = profiles.get(&s.user).ok_or(Error::MissingProfile(s.user))?;
            let mut out = s.clone();
            for (label, (lat, lon)) in out.familiarity_seq.iter_mut().zip(coords(&s.checkins().collect::<Vec<_>>(), pois)?) {
                *label = if profile.familiar_set.contains(&grid.region_of(lat, lon)) {
                    Familiarity::Familiar
                } else {
                    Familiarity::Unfamiliar
                };
            }
            Ok(out)
        })
        .collect()
}

pub fn format_profile(p: &RegionProfile) -> String {
    let fam: Vec<String> = p.familiar_set.iter().map(|r| r.to_string()).collect();
    format!("{}\t{}\t{}\t{}", p.user, p.main_region, fam.join(","), p.total_checkins())
}

pub fn write_profiles(path: &Path, profiles: &BTreeMap<UserId, RegionProfile>) -> Result<()> {
    let mut out = String::new();
    for p in profiles.values() {
        writeln!(out, "{}", format_profile(p)).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
