//! Metaorder reconstruction and execution stylized facts.
//!
//! A metaorder is a maximal run of same-sign market orders sent by one
//! trader within one session. Other traders' orders never break a run;
//! only a sign flip of the same trader (or the end of the session) does.

use crate::stats::{Accumulator, LogBins};
use crate::tape::{Session, SessionKey, Side};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

const NS: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Child {
    pub ts_ns: i64,
    /// Total filled size of the child market order.
    pub size: u64,
    /// Log mid just before execution.
    pub pre_log_mid: Option<f64>,
    /// Log mid right after the child's last fill.
    pub post_log_mid: Option<f64>,
    /// Index of the `M` row in the session.
    pub event_index: usize,
    pub no_immediate_impact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metaorder {
    pub session: SessionKey,
    pub trader_id: String,
    pub side: Side,
    pub children: Vec<Child>,
    /// `Q`, total executed shares.
    pub volume: u64,
    /// `V_D` of the session.
    pub session_volume: u64,
    /// `sigma_D` of the session, when quotes exist.
    pub session_sigma: Option<f64>,
    /// Ended by the session close rather than by a sign flip.
    pub truncated: bool,
}

impl Metaorder {
    pub fn n(&self) -> usize {
        self.children.len()
    }

    pub fn sign(&self) -> f64 {
        self.side.signum()
    }

    pub fn start_ns(&self) -> i64 {
        self.children[0].ts_ns
    }

    pub fn end_ns(&self) -> i64 {
        self.children.last().unwrap().ts_ns
    }

    /// `T`, seconds from first to last child.
    pub fn duration_secs(&self) -> f64 {
        (self.end_ns() - self.start_ns()) as f64 / NS
    }

    /// `f = Q / V_D`.
    pub fn fraction(&self) -> f64 {
        if self.session_volume == 0 {
            return f64::NAN;
        }
        self.volume as f64 / self.session_volume as f64
    }

    pub fn mean_child_size(&self) -> f64 {
        self.volume as f64 / self.n() as f64
    }

    /// Signed log-mid change from just before the first child to just after the last.
    pub fn signed_impact(&self) -> Option<f64> {
        let a = self.children[0].pre_log_mid?;
        let b = self.children.last().unwrap().post_log_mid?;
        Some(self.sign() * (b - a))
    }

    /// Mean gap between consecutive children, seconds.
    pub fn mean_gap_secs(&self) -> Option<f64> {
        (self.n() >= 2).then(|| self.duration_secs() / (self.n() - 1) as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    /// Also break a run when two consecutive children are further apart
    /// than this many seconds. Off by default.
    pub max_gap_secs: Option<f64>,
}

/// Sign-run decomposition of every trader's market-order stream.
///
/// Output order: by start time, then trader id.
pub fn reconstruct(session: &Session) -> Vec<Metaorder> {
    reconstruct_with(session, ReconstructOptions::default())
}

pub fn reconstruct_with(session: &Session, opts: ReconstructOptions) -> Vec<Metaorder> {
    let sigma = session.sigma().ok();
    let mut open: HashMap<&str, Metaorder> = HashMap::new();
    let mut done = Vec::new();
    for mo in session.market_orders() {
        let trader = mo.trader(session);
        let child = Child {
            ts_ns: mo.ts_ns,
            size: mo.size,
            pre_log_mid: mo.pre_log_mid,
            post_log_mid: mo.post_log_mid,
            event_index: mo.index,
            no_immediate_impact: mo.no_immediate_impact(),
        };
        if let Some(run) = open.get_mut(trader) {
            let gap_break = opts.max_gap_secs.is_some_and(|g| {
                (mo.ts_ns - run.end_ns()) as f64 / NS > g
            });
            if run.side == mo.side && !gap_break {
                run.volume += child.size;
                run.children.push(child);
                continue;
            }
            let finished = open.remove(trader).unwrap();
            done.push(finished);
        }
        open.insert(
            trader,
            Metaorder {
                session: session.key,
                trader_id: trader.to_string(),
                side: mo.side,
                volume: child.size,
                children: vec![child],
                session_volume: session.volume,
                session_sigma: sigma,
                truncated: false,
            },
        );
    }
    done.extend(open.into_values().map(|mut m| {
        m.truncated = true;
        m
    }));
    done.sort_by(|a, b| {
        (a.start_ns(), &a.trader_id).cmp(&(b.start_ns(), &b.trader_id))
    });
    done
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactBin {
    pub lo: f64,
    pub hi: f64,
    pub mean: f64,
    pub sd: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizedFacts {
    /// Mean gap between children vs `f` (metaorders with `N >= 2`).
    pub gap_vs_f: Vec<FactBin>,
    /// Mean child count vs `f`.
    pub count_vs_f: Vec<FactBin>,
    /// Normalized density of `f` on the log bins: `(lo, hi, density)`.
    pub f_density: Vec<(f64, f64, f64)>,
}

impl StylizedFacts {
    /// Centre of the most populated `f` bin.
    pub fn f_mode(&self) -> Option<f64> {
        self.f_density
            .iter()
            .max_by(|a, b| (a.2 * (a.1 - a.0)).total_cmp(&(b.2 * (b.1 - b.0))))
            .map(|(lo, hi, _)| (lo * hi).sqrt())
    }
}

pub fn stylized_facts(metaorders: &[Metaorder], bins: &LogBins) -> StylizedFacts {
    let n = bins.len();
    let mut gaps = vec![Accumulator::default(); n];
    let mut counts = vec![Accumulator::default(); n];
    let mut hist = vec![0u64; n];
    let mut total = 0u64;
    for m in metaorders {
        let Some(i) = bins.index(m.fraction()) else {
            continue;
        };
        hist[i] += 1;
        total += 1;
        counts[i].push(m.n() as f64);
        if let Some(g) = m.mean_gap_secs() {
            gaps[i].push(g);
        }
    }
    let collect = |acc: &[Accumulator]| {
        acc.iter()
            .enumerate()
            .filter(|(_, a)| a.n > 0)
            .map(|(i, a)| {
                let (lo, hi) = bins.bounds(i);
                FactBin {
                    lo,
                    hi,
                    mean: a.mean(),
                    sd: a.sd(),
                    count: a.n,
                }
            })
            .collect()
    };
    let f_density = (0..n)
        .filter(|&i| hist[i] > 0)
        .map(|i| {
            let (lo, hi) = bins.bounds(i);
            (lo, hi, hist[i] as f64 / (total as f64 * (hi - lo)))
        })
        .collect();
    StylizedFacts {
        gap_vs_f: collect(&gaps),
        count_vs_f: collect(&counts),
        f_density,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleBin {
    pub lo: f64,
    pub hi: f64,
    /// Mean rescaled time of the points in the bin.
    pub mean_time: f64,
    /// Mean executed fraction.
    pub mean_fraction: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleProfile {
    pub bins: Vec<ScheduleBin>,
    /// Metaorders with `N >= 2` whose children all share one timestamp.
    pub degenerate: usize,
}

impl ScheduleProfile {
    /// Largest gap between executed fraction and rescaled time over populated bins.
    pub fn max_diagonal_deviation(&self) -> f64 {
        self.bins
            .iter()
            .map(|b| (b.mean_fraction - b.mean_time).abs())
            .fold(0.0, f64::max)
    }
}

/// Mean executed fraction against rescaled time, averaged per time bin.
///
/// Each child owns a slot of length `d = T / (N - 1)` centred on its time,
/// so a metaorder spans `T + d`. A child is sampled at the slot centre,
/// `(t_i - t_1 + d / 2) / (T + d)`, with half its own volume counted as done.
/// An evenly spaced schedule of equal children then lies on the diagonal.
pub fn execution_profile(metaorders: &[Metaorder], n_bins: usize) -> ScheduleProfile {
    let mut t_acc = vec![Accumulator::default(); n_bins];
    let mut f_acc = vec![Accumulator::default(); n_bins];
    let mut degenerate = 0;
    for m in metaorders.iter().filter(|m| m.n() >= 2) {
        let t = m.duration_secs();
        if t <= 0.0 {
            degenerate += 1;
            continue;
        }
        let q = m.volume as f64;
        let d = t / (m.n() - 1) as f64;
        let mut done = 0u64;
        let mut k = 0;
        while k < m.n() {
            // children sharing a timestamp count together
            let ts = m.children[k].ts_ns;
            let mut group = 0u64;
            while k < m.n() && m.children[k].ts_ns == ts {
                group += m.children[k].size;
                k += 1;
            }
            let x = ((ts - m.start_ns()) as f64 / NS + d / 2.0) / (t + d);
            let b = ((x * n_bins as f64) as usize).min(n_bins - 1);
            t_acc[b].push(x);
            f_acc[b].push((done as f64 + group as f64 / 2.0) / q);
            done += group;
        }
    }
    let bins = (0..n_bins)
        .filter(|&b| t_acc[b].n > 0)
        .map(|b| ScheduleBin {
            lo: b as f64 / n_bins as f64,
            hi: (b + 1) as f64 / n_bins as f64,
            mean_time: t_acc[b].mean(),
            mean_fraction: f_acc[b].mean(),
            count: t_acc[b].n,
        })
        .collect();
    ScheduleProfile { bins, degenerate }
}

pub const METAORDER_CSV_HEADER: &str = "session_id,trader_id,sign,N,Q,T_s,f,start_ts,end_ts";

pub fn metaorders_csv(metaorders: &[Metaorder]) -> String {
    let mut s = String::from(METAORDER_CSV_HEADER);
    s.push('\n');
    for m in metaorders {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            m.session,
            m.trader_id,
            m.side.sign(),
            m.n(),
            m.volume,
            m.duration_secs(),
            m.fraction(),
            m.start_ns(),
            m.end_ns()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::SessionBuilder;

    #[test]
    fn sign_flip_breaks_run() {
        let mut b = SessionBuilder::new();
        b.market("A", Side::Buy, 10).market("A", Side::Buy, 20).market("A", Side::Sell, 5);
        let ms = reconstruct(&b.build());
        assert_eq!(ms.len(), 2);
        assert_eq!((ms[0].side, ms[0].n(), ms[0].volume), (Side::Buy, 2, 30));
        assert!(!ms[0].truncated);
        assert_eq!((ms[1].side, ms[1].n()), (Side::Sell, 1));
        assert!(ms[1].truncated);
    }

    #[test]
    fn other_traders_do_not_break_run() {
        let mut b = SessionBuilder::new();
        b.market("A", Side::Buy, 10).market("B", Side::Sell, 10).market("A", Side::Buy, 10);
        let ms = reconstruct(&b.build());
        let a: Vec<_> = ms.iter().filter(|m| m.trader_id == "A").collect();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].n(), 2);
    }

    #[test]
    fn gap_option_splits() {
        let mut b = SessionBuilder::new();
        b.market("A", Side::Buy, 10).wait(100.0).market("A", Side::Buy, 10);
        let s = b.build();
        assert_eq!(reconstruct(&s).len(), 1);
        let opts = ReconstructOptions { max_gap_secs: Some(50.0) };
        assert_eq!(reconstruct_with(&s, opts).len(), 2);
    }

    #[test]
    fn mean_gap_thirty_seconds() {
        let mut b = SessionBuilder::new();
        b.market("A", Side::Buy, 1).wait(30.0).market("A", Side::Buy, 1).wait(30.0).market("A", Side::Buy, 1);
        let ms = reconstruct(&b.build());
        assert_eq!(ms[0].mean_gap_secs(), Some(30.0));
        // f = 1 here: the trader is the whole session volume
        let bins = LogBins::new(1e-5, 10.0, 4);
        let facts = stylized_facts(&ms, &bins);
        assert_eq!(facts.gap_vs_f.len(), 1);
        assert_eq!(facts.gap_vs_f[0].mean, 30.0);
    }

    #[test]
    fn front_loaded_profile() {
        let mut b = SessionBuilder::new();
        b.market("A", Side::Buy, 3).wait(1.0).market("A", Side::Buy, 1);
        let ms = reconstruct(&b.build());
        let p = execution_profile(&ms, 10);
        assert_eq!((p.bins[0].mean_time, p.bins[0].mean_fraction), (0.25, 0.375));
        let last = p.bins.last().unwrap();
        assert_eq!((last.mean_time, last.mean_fraction), (0.75, 0.875));
    }

    #[test]
    fn uniform_schedule_is_linear() {
        let mut b = SessionBuilder::new();
        for _ in 0..101 {
            b.market("A", Side::Buy, 5).wait(2.0);
        }
        let p = execution_profile(&reconstruct(&b.build()), 20);
        assert!(p.max_diagonal_deviation() < 1e-12);
    }

    #[test]
    fn simultaneous_children_are_degenerate() {
        let mut b = SessionBuilder::new();
        b.market("A", Side::Buy, 3).market("A", Side::Buy, 1);
        let p = execution_profile(&reconstruct(&b.build()), 10);
        assert_eq!(p.degenerate, 1);
        assert!(p.bins.is_empty());
    }
}
