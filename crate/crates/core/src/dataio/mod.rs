//! Check-in records, trajectory sessions, and their on-disk forms.

mod canonical;
mod foursquare;
mod sessions;
mod synth;

pub use canonical::{
    format_session, parse_session_line, read_pois, read_sessions, write_pois, write_sessions,
    Dataset, IdMap,
};
pub use foursquare::{parse_foursquare, parse_foursquare_reader, ParsedCheckins, SkippedLine};
pub use sessions::{
    filter_dataset, filter_dataset_with, sessionize, split_dataset, FilterThresholds,
    DEFAULT_SESSION_GAP_SECS,
};
pub use synth::{
    synth_corpus, toy_corpus, PlantedUser, Regime, SynthCorpus, SynthSpec, ToySpec,
    SYNTH_START_TIME,
};

use crate::error::{Error, Result};

pub type UserId = u32;
pub type PoiId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct Poi {
    pub id: PoiId,
    pub lon: f64,
    pub lat: f64,
    pub category: u32,
}

impl Poi {
    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::invalid(format!(
                "poi {} has coordinates out of range ({}, {})",
                self.id, self.lat, self.lon
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckIn {
    pub user: UserId,
    pub poi: PoiId,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Familiarity {
    Familiar,
    Unfamiliar,
    Unlabeled,
}

impl Familiarity {
    pub fn code(self) -> char {
        match self {
            Familiarity::Familiar => 'f',
            Familiarity::Unfamiliar => 'u',
            Familiarity::Unlabeled => 'n',
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "f" => Some(Familiarity::Familiar),
            "u" => Some(Familiarity::Unfamiliar),
            "n" => Some(Familiarity::Unlabeled),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySession {
    pub user: UserId,
    pub poi_seq: Vec<PoiId>,
    pub time_seq: Vec<i64>,
    pub familiarity_seq: Vec<Familiarity>,
}

impl TrajectorySession {
    /// Builds an unlabeled session.
    pub fn new(user: UserId, poi_seq: Vec<PoiId>, time_seq: Vec<i64>) -> Result<Self> {
        let n = poi_seq.len();
        let s = TrajectorySession {
            user,
            poi_seq,
            time_seq,
            familiarity_seq: vec![Familiarity::Unlabeled; n],
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.poi_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poi_seq.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.poi_seq.len() != self.time_seq.len() || self.poi_seq.len() != self.familiarity_seq.len() {
            return Err(Error::invalid(format!(
                "session of user {}: sequence lengths differ ({}, {}, {})",
                self.user,
                self.poi_seq.len(),
                self.time_seq.len(),
                self.familiarity_seq.len()
            )));
        }
        if self.time_seq.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid(format!(
                "session of user {}: timestamps decrease",
                self.user
            )));
        }
        Ok(())
    }

    pub fn checkins(&self) -> impl Iterator<Item = CheckIn> + '_ {
        self.poi_seq
            .iter()
            .zip(&self.time_seq)
            .map(move |(&poi, &timestamp)| CheckIn {
                user: self.user,
                poi,
                timestamp,
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<TrajectorySession>,
    pub validation: Vec<TrajectorySession>,
    pub poi_count: usize,
    pub category_count: usize,
    pub user_count: usize,
}
