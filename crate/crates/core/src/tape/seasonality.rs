use super::session::{session_bins, sigma_of};
use super::{EventKind, Half, Session};
use super::NS_PER_DAY;
use chrono::Datelike;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Below this many distinct dates a yearly profile is flagged as partial.
const FULL_YEAR_DATES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalityBin {
    pub half: Half,
    /// Bin bounds as offsets from midnight (ns), clipped to the trimmed window.
    pub start: i64,
    pub end: i64,
    /// Mean over sessions of `(bin high - bin low) / bin open`.
    pub sigma: f64,
    /// Mean executed volume in the bin.
    pub volume: f64,
    /// Standard error of the mean volume across sessions.
    pub volume_se: f64,
    pub n_sessions: usize,
    /// No session had a quote in this bin.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalityProfile {
    pub bin_minutes: i64,
    pub year: i32,
    pub partial_year: bool,
    pub bins: Vec<SeasonalityBin>,
}

impl SeasonalityProfile {
    pub fn bin_for(&self, ts_ns: i64) -> Option<&SeasonalityBin> {
        let off = ts_ns.rem_euclid(NS_PER_DAY);
        self.bins.iter().find(|b| off >= b.start && off < b.end)
    }

    pub fn half(&self, half: Half) -> impl Iterator<Item = &SeasonalityBin> {
        self.bins.iter().filter(move |b| b.half == half)
    }
}

/// Intraday profile of volatility and executed volume in `bin_minutes` bins.
///
/// Sessions from years other than the most represented one are ignored.
pub fn seasonality_profile(sessions: &[Session], bin_minutes: i64) -> SeasonalityProfile {
    let mut by_year: BTreeMap<i32, usize> = BTreeMap::new();
    for s in sessions {
        *by_year.entry(s.key.date.year()).or_default() += 1;
    }
    let year = by_year
        .iter()
        .max_by_key(|(y, n)| (**n, std::cmp::Reverse(**y)))
        .map(|(y, _)| *y)
        .unwrap_or(0);
    let sessions: Vec<&Session> = sessions.iter().filter(|s| s.key.date.year() == year).collect();
    let dates: BTreeSet<_> = sessions.iter().map(|s| s.key.date).collect();

    let mut bins = Vec::new();
    for half in [Half::Am, Half::Pm] {
        let of_half: Vec<&&Session> = sessions.iter().filter(|s| s.key.half == half).collect();
        for (lo, hi) in session_bins(half, bin_minutes) {
            let mut sig_sum = 0.0;
            let mut sig_n = 0usize;
            let mut vols = Vec::with_capacity(of_half.len());
            for s in &of_half {
                let day0 = s.day() * NS_PER_DAY;
                let (a, b) = (day0 + lo, day0 + hi);
                let start = s.events.partition_point(|e| e.ts_ns < a);
                let stop = s.events.partition_point(|e| e.ts_ns < b);
                let evs = &s.events[start..stop];
                if let Some(sig) = sigma_of(evs.iter().filter_map(|e| e.mid())) {
                    sig_sum += sig;
                    sig_n += 1;
                }
                vols.push(
                    evs.iter()
                        .filter(|e| e.kind == EventKind::Execution)
                        .map(|e| e.size as f64)
                        .sum::<f64>(),
                );
            }
            let n = vols.len();
            let (mean, se) = crate::stats::mean_se(&vols);
            bins.push(SeasonalityBin {
                half,
                start: lo,
                end: hi,
                sigma: if sig_n > 0 { sig_sum / sig_n as f64 } else { 0.0 },
                volume: if n > 0 { mean } else { 0.0 },
                volume_se: se,
                n_sessions: n,
                flagged: sig_n == 0,
            });
        }
    }
    SeasonalityProfile {
        bin_minutes,
        year,
        partial_year: dates.len() < FULL_YEAR_DATES,
        bins,
    }
}
