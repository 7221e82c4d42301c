//! Top-k accuracy and mean reciprocal rank by familiarity subset, and
//! per-region accuracy.

mod scorer;

pub use scorer::{ranks, Scorer};

use std::collections::BTreeMap;
use std::fmt::{self, Write};

use crate::dataio::{Familiarity, Poi, PoiId};
use crate::error::{Error, Result};
use crate::regions::{decode_cell, RegionGrid, RegionId};
use crate::training::TrainingWindow;

/// 1 if `truth` is among the first `k` entries of `ranked`.
pub fn topk_hit(ranked: &[PoiId], truth: PoiId, k: usize) -> u32 {
    ranked.iter().take(k).any(|&p| p == truth) as u32
}

pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::invalid("mean reciprocal rank of no queries"));
    }
    if ranks.contains(&0) {
        return Err(Error::invalid("ranks start at 1"));
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// 1-based position of `truth` when ids are ordered by descending score,
/// ties to the smaller id.
pub fn rank_of(scores: &[f64], truth: PoiId) -> usize {
    let s = scores[truth];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v.total_cmp(&s).is_gt() || (v.total_cmp(&s).is_eq() && j < truth))
        .count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subset {
    Familiar,
    Unfamiliar,
    Total,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Familiar, Subset::Unfamiliar, Subset::Total];

    pub fn name(self) -> &'static str {
        match self {
            Subset::Familiar => "familiar",
            Subset::Unfamiliar => "unfamiliar",
            Subset::Total => "total",
        }
    }

    pub fn contains(self, label: Familiarity) -> bool {
        match self {
            Subset::Familiar => label == Familiarity::Familiar,
            Subset::Unfamiliar => label == Familiarity::Unfamiliar,
            Subset::Total => true,
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Metrics over one subset. An empty subset reports zeros.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub subset: Subset,
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
    pub mrr: f64,
    pub n_queries: usize,
}

impl MetricReport {
    pub fn from_ranks(subset: Subset, ranks: &[usize]) -> Result<Self> {
        let n = ranks.len();
        if n == 0 {
            return Ok(MetricReport { subset, top1: 0.0, top5: 0.0, top10: 0.0, mrr: 0.0, n_queries: 0 });
        }
        let within = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n as f64;
        Ok(MetricReport {
            subset,
            top1: within(1),
            top5: within(5),
            top10: within(10),
            mrr: mrr(ranks)?,
            n_queries: n,
        })
    }
}

/// Splits per-window ranks by the windows' familiarity labels. The total
/// subset covers every window.
pub fn report_from_ranks(ranks: &[usize], windows: &[TrainingWindow]) -> Result<Vec<MetricReport>> {
    if ranks.len() != windows.len() {
        return Err(Error::invalid(format!("{} ranks for {} windows", ranks.len(), windows.len())));
    }
    Subset::ALL
        .iter()
        .map(|&s| {
            let picked: Vec<usize> = ranks
                .iter()
                .zip(windows)
                .filter(|(_, w)| s.contains(w.familiarity))
                .map(|(&r, _)| r)
                .collect();
            MetricReport::from_ranks(s, &picked)
        })
        .collect()
}

/// Ranks every window's target under `scorer` and reports each subset.
pub fn evaluate(scorer: &dyn Scorer, windows: &[TrainingWindow]) -> Result<Vec<MetricReport>> {
    report_from_ranks(&ranks(scorer, windows)?, windows)
}

pub const REPORT_HEADER: &str = "model\tsubset\ttop1\ttop5\ttop10\tmrr\tn";

/// Report rows `model subset top1 top5 top10 mrr n`, without the header.
pub fn format_report(model: &str, reports: &[MetricReport]) -> String {
    let mut s = String::new();
    for r in reports {
        writeln!(
            s,
            "{model}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
            r.subset, r.top1, r.top5, r.top10, r.mrr, r.n_queries
        )
        .unwrap();
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionStat {
    pub top1: f64,
    pub n: usize,
}

/// Top-1 accuracy grouped by the grid region of each window's target POI.
pub fn region_accuracy(
    ranks: &[usize],
    windows: &[TrainingWindow],
    pois: &[Poi],
    grid: &RegionGrid,
) -> Result<BTreeMap<RegionId, RegionStat>> {
    if ranks.len() != windows.len() {
        return Err(Error::invalid(format!("{} ranks for {} windows", ranks.len(), windows.len())));
    }
    let mut acc: BTreeMap<RegionId, (usize, usize)> = BTreeMap::new();
    for (&r, w) in ranks.iter().zip(windows) {
        let p = pois.get(w.target_poi).ok_or(Error::OutOfRange {
            what: "poi table",
            index: w.target_poi,
            size: pois.len(),
        })?;
        let e = acc.entry(grid.region_of(p.lat, p.lon)).or_default();
        e.0 += (r == 1) as usize;
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(id, (hits, n))| (id, RegionStat { top1: hits as f64 / n as f64, n }))
        .collect())
}

pub const REGION_HEADER: &str = "region_id\tlat_cell\tlon_cell\ttop1\tn";

/// Rows `region_id lat_cell lon_cell top1 n`, without the header.
pub fn format_region_accuracy(stats: &BTreeMap<RegionId, RegionStat>) -> String {
    let mut s = String::new();
    for (&id, st) in stats {
        let (row, col) = decode_cell(id);
        writeln!(s, "{id}\t{row}\t{col}\t{:.6}\t{}", st.top1, st.n).unwrap();
    }
    s
}
