//! Seeded synthetic check-in corpora with known structure.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CheckIn, Familiarity, Poi, UserId};
use crate::error::{Error, Result};
use crate::regions::{RegionGrid, RegionId};

/// 2023-01-02 00:00:00 UTC.
pub const SYNTH_START_TIME: i64 = 1_672_617_600;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Past the first `memory_lag` steps of a session, each POI is a fixed
    /// per-region function of the POI `memory_lag` steps earlier.
    LongMemory,
    /// Each POI depends only on the previous two, up to a noise draw.
    ShortBursty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub users: usize,
    pub regions: usize,
    pub pois_per_region: usize,
    pub categories: usize,
    pub sessions_per_user: usize,
    pub long_session_len: usize,
    pub short_session_len: usize,
    /// Share of users (taken from the lowest ids) on the long-memory regime.
    pub long_memory_share: f64,
    pub memory_lag: usize,
    /// Probability of a fresh uniform draw instead of the short-regime rule.
    pub burst_noise: f64,
    /// Probability that a step of a home-region session is replaced by the
    /// user's anchor POI.
    pub revisit_prob: f64,
    /// Home region per user; defaults to `user % regions`.
    pub home_regions: Option<Vec<usize>>,
    pub grid: RegionGrid,
    /// Where region 0 sits; region r is laid out on a lattice five cells apart.
    pub base_lat: f64,
    pub base_lon: f64,
    pub step_secs: i64,
    pub session_gap_secs: i64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users: 20,
            regions: 6,
            pois_per_region: 10,
            categories: 8,
            sessions_per_user: 10,
            long_session_len: 40,
            short_session_len: 12,
            long_memory_share: 0.5,
            memory_lag: 20,
            burst_noise: 0.1,
            revisit_prob: 0.0,
            home_regions: None,
            grid: RegionGrid::default(),
            base_lat: 35.0,
            base_lon: 135.7,
            step_secs: 2 * 3600,
            session_gap_secs: 30 * 3600,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedUser {
    pub user: UserId,
    pub regime: Regime,
    pub home_region: RegionId,
    /// Home plus the favourite regions; equals top-3 by visits plus home.
    pub familiar_regions: BTreeSet<RegionId>,
    pub anchor_poi: usize,
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    /// Sorted by user, then time.
    pub checkins: Vec<CheckIn>,
    pub pois: Vec<Poi>,
    pub users: Vec<PlantedUser>,
    /// Ground-truth label of each check-in, aligned with `checkins`.
    pub labels: Vec<Familiarity>,
    /// Grid region of each synthetic region index.
    pub region_ids: Vec<RegionId>,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("synthetic spec: {m}")));
        if self.users == 0 || self.regions == 0 || self.pois_per_region == 0 {
            return bad("users, regions and pois_per_region must be positive");
        }
        if self.categories == 0 || self.sessions_per_user == 0 {
            return bad("categories and sessions_per_user must be positive");
        }
        if self.long_session_len == 0 || self.short_session_len == 0 {
            return bad("session lengths must be positive");
        }
        for p in [self.long_memory_share, self.burst_noise, self.revisit_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if self.memory_lag == 0 {
            return bad("memory_lag must be positive");
        }
        if let Some(h) = &self.home_regions {
            if h.len() != self.users || h.iter().any(|&r| r >= self.regions) {
                return bad("home_regions must name one valid region per user");
            }
        }
        if self.session_gap_secs <= 0 || self.step_secs <= 0 {
            return bad("time steps must be positive");
        }
        Ok(())
    }

    fn n_long_users(&self) -> usize {
        (self.users as f64 * self.long_memory_share).round() as usize
    }
}

/// Session counts per region kind: (home, per favourite, favourites, explores).
/// Home is visited at least as often as each favourite, and favourites
/// strictly more often than any explore region, so the top-3 set is planted.
fn allocate(sessions: usize, regions: usize) -> (usize, usize, usize, usize) {
    let max_fav = 2.min(regions - 1);
    for n_fav in (0..=max_fav).rev() {
        let pool = regions - 1 - n_fav;
        let max_explore = if n_fav == 0 { 0 } else { pool.min(sessions / 5) };
        for explores in (0..=max_explore).rev() {
            let rest = sessions - explores;
            if n_fav == 0 {
                return (rest, 0, 0, explores);
            }
            let lo = if explores > 0 { 2 } else { 1 };
            let per_fav = lo.max(rest / 4);
            if let Some(home) = rest.checked_sub(n_fav * per_fav) {
                if home >= per_fav {
                    return (home, per_fav, n_fav, explores);
                }
            }
        }
    }
    (sessions, 0, 0, 0)
}

pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = spec.pois_per_region;
    let g = &spec.grid;

    let (base_row, base_col) = g.cell_of(spec.base_lat, spec.base_lon);
    let mut region_ids = Vec::with_capacity(spec.regions);
    let mut pois = Vec::with_capacity(spec.regions * p);
    for r in 0..spec.regions {
        let row = base_row + 5 * (r / 8) as i64;
        let col = base_col + 5 * (r % 8) as i64;
        let (clat, clon) = g.cell_center(row, col);
        region_ids.push(g.region_of(clat, clon));
        let jitter = 0.2 * g.cell_deg;
        for _ in 0..p {
            pois.push(Poi {
                id: pois.len(),
                lat: clat + rng.random_range(-jitter..jitter),
                lon: clon + rng.random_range(-jitter..jitter),
                category: rng.random_range(0..spec.categories) as u32,
            });
        }
    }

    // per-region transition structure
    let memory_maps: Vec<Vec<usize>> = (0..spec.regions)
        .map(|_| {
            let mut m: Vec<usize> = (0..p).collect();
            m.shuffle(&mut rng);
            m
        })
        .collect();
    let burst_tables: Vec<Vec<usize>> = (0..spec.regions)
        .map(|_| (0..p * p).map(|_| rng.random_range(0..p)).collect())
        .collect();

    let (home_n, per_fav, n_fav, n_explore) = allocate(spec.sessions_per_user, spec.regions);
    let n_long = spec.n_long_users();

    let mut checkins = Vec::new();
    let mut labels = Vec::new();
    let mut users = Vec::with_capacity(spec.users);
    for u in 0..spec.users {
        let regime = if u < n_long { Regime::LongMemory } else { Regime::ShortBursty };
        let home = spec.home_regions.as_ref().map_or(u % spec.regions, |h| h[u]);
        let mut others: Vec<usize> = (0..spec.regions).filter(|&r| r != home).collect();
        others.shuffle(&mut rng);
        let favs = &others[..n_fav];
        let explores = &others[n_fav..n_fav + n_explore];

        let mut plan: Vec<usize> = Vec::with_capacity(spec.sessions_per_user);
        plan.extend(std::iter::repeat_n(home, home_n));
        for &f in favs {
            plan.extend(std::iter::repeat_n(f, per_fav));
        }
        plan.extend(explores);
        let lead = home_n.min(3);
        plan[lead..].shuffle(&mut rng);

        let familiar: BTreeSet<usize> = std::iter::once(home).chain(favs.iter().copied()).collect();
        let anchor_poi = home * p + u % p;
        let len = match regime {
            Regime::LongMemory => spec.long_session_len,
            Regime::ShortBursty => spec.short_session_len,
        };

        let mut t = SYNTH_START_TIME + 8 * 3600;
        for &region in &plan {
            let mut local: Vec<usize> = Vec::with_capacity(len);
            for i in 0..len {
                let next = match regime {
                    Regime::LongMemory if i >= spec.memory_lag => memory_maps[region][local[i - spec.memory_lag]],
                    Regime::ShortBursty if i >= 2 && !rng.random_bool(spec.burst_noise) => {
                        burst_tables[region][local[i - 2] * p + local[i - 1]]
                    }
                    _ => rng.random_range(0..p),
                };
                local.push(next);
            }
            let is_familiar = familiar.contains(&region);
            for l in local {
                let mut poi = region * p + l;
                if region == home && spec.revisit_prob > 0.0 && rng.random_bool(spec.revisit_prob) {
                    poi = anchor_poi;
                }
                checkins.push(CheckIn {
                    user: u as UserId,
                    poi,
                    timestamp: t,
                });
                labels.push(if is_familiar { Familiarity::Familiar } else { Familiarity::Unfamiliar });
                t += spec.step_secs;
            }
            t += spec.session_gap_secs - spec.step_secs;
        }
        users.push(PlantedUser {
            user: u as UserId,
            regime,
            home_region: region_ids[home],
            familiar_regions: familiar.iter().map(|&r| region_ids[r]).collect(),
            anchor_poi,
        });
    }
    Ok(SynthCorpus {
        checkins,
        pois,
        users,
        labels,
        region_ids,
    })
}

/// Corpus where the next POI is a fixed function of the current one.
#[derive(Clone, Debug, PartialEq)]
pub struct ToySpec {
    pub users: usize,
    pub poi_count: usize,
    pub sessions_per_user: usize,
    pub session_len: usize,
    pub categories: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            users: 20,
            poi_count: 50,
            sessions_per_user: 10,
            session_len: 10,
            categories: 5,
        }
    }
}

/// Returns check-ins, POIs and the successor map (`next[p]` follows `p`).
pub fn toy_corpus(spec: &ToySpec, seed: u64) -> Result<(Vec<CheckIn>, Vec<Poi>, Vec<usize>)> {
    if spec.users == 0 || spec.poi_count == 0 || spec.sessions_per_user == 0 || spec.session_len == 0 || spec.categories == 0 {
        return Err(Error::invalid("toy spec sizes must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next: Vec<usize> = (0..spec.poi_count).collect();
    next.shuffle(&mut rng);
    let pois: Vec<Poi> = (0..spec.poi_count)
        .map(|id| Poi {
            id,
            lat: 35.0 + 0.0001 * (id % 10) as f64,
            lon: 135.7 + 0.0001 * (id / 10) as f64,
            category: (id % spec.categories) as u32,
        })
        .collect();
    let mut checkins = Vec::new();
    for u in 0..spec.users {
        let mut t = SYNTH_START_TIME;
        for _ in 0..spec.sessions_per_user {
            let mut cur = rng.random_range(0..spec.poi_count);
            for _ in 0..spec.session_len {
                checkins.push(CheckIn {
                    user: u as UserId,
                    poi: cur,
                    timestamp: t,
                });
                cur = next[cur];
                t += 2 * 3600;
            }
            t += 30 * 3600;
        }
    }
    Ok((checkins, pois, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{sessionize, DEFAULT_SESSION_GAP_SECS};

    #[test]
    fn single_region_corpus() {
        let spec = SynthSpec {
            users: 1,
            regions: 1,
            pois_per_region: 5,
            sessions_per_user: 1,
            short_session_len: 30,
            long_memory_share: 0.0,
            ..Default::default()
        };
        let c = synth_corpus(&spec, 1).unwrap();
        assert_eq!(c.checkins.len(), 30);
        assert!(c.checkins.iter().all(|x| x.poi < 5));
        let r0 = c.region_ids[0];
        assert!(c.checkins.iter().all(|x| {
            let p = &c.pois[x.poi];
            spec.grid.region_of(p.lat, p.lon) == r0
        }));
    }

    #[test]
    fn long_memory_rule_holds_per_session() {
        let spec = SynthSpec {
            long_memory_share: 1.0,
            ..Default::default()
        };
        let c = synth_corpus(&spec, 9).unwrap();
        let sessions = sessionize(&c.checkins, DEFAULT_SESSION_GAP_SECS);
        assert_eq!(sessions.len(), spec.users * spec.sessions_per_user);
        let mut f: std::collections::HashMap<usize, usize> = Default::default();
        let mut checked = 0;
        for s in &sessions {
            for t in spec.memory_lag..s.len() {
                let prev = f.insert(s.poi_seq[t - spec.memory_lag], s.poi_seq[t]);
                assert!(prev.is_none_or(|v| v == s.poi_seq[t]));
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn seeds_differ_shapes_agree() {
        let spec = SynthSpec::default();
        let a = synth_corpus(&spec, 1).unwrap();
        let b = synth_corpus(&spec, 2).unwrap();
        assert_eq!(a.checkins.len(), b.checkins.len());
        assert_eq!(a.pois.len(), b.pois.len());
        assert_ne!(a.checkins, b.checkins);
        let again = synth_corpus(&spec, 1).unwrap();
        assert_eq!(a.checkins, again.checkins);
    }

    #[test]
    fn rejects_empty_spec() {
        for spec in [
            SynthSpec { users: 0, ..Default::default() },
            SynthSpec { pois_per_region: 0, ..Default::default() },
        ] {
            assert!(synth_corpus(&spec, 0).is_err());
        }
    }

    #[test]
    fn allocation_plants_top_three() {
        for sessions in 1..40 {
            for regions in 1..9 {
                let (home, per_fav, n_fav, explores) = allocate(sessions, regions);
                assert_eq!(home + per_fav * n_fav + explores, sessions);
                assert!(home >= 1 && home >= per_fav);
                if explores > 0 {
                    assert!(per_fav >= 2);
                }
                assert!(n_fav + explores < regions || (n_fav, explores) == (0, 0));
            }
        }
    }

    #[test]
    fn toy_rule_is_deterministic() {
        let (c, pois, next) = toy_corpus(&ToySpec::default(), 4).unwrap();
        assert_eq!(pois.len(), 50);
        assert_eq!(c.len(), 20 * 10 * 10);
        for s in sessionize(&c, DEFAULT_SESSION_GAP_SECS) {
            assert_eq!(s.len(), 10);
            for w in s.poi_seq.windows(2) {
                assert_eq!(w[1], next[w[0]]);
            }
        }
    }
}
