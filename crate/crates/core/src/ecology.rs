//! Trader ecology: reversal times, fast/slow classification, participation
//! shares and inventories.

use crate::tape::{EventKind, Session, Side};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

const NS: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TraderClass {
    Fast,
    Slow,
}

/// Which submissions count towards the reversal time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReversalMode {
    /// Limit and market submissions.
    #[default]
    AllOrders,
    MarketOnly,
}

/// Mean time between consecutive submissions of opposite sign, seconds.
/// `None` when the sign never changes.
pub fn reversal_time(orders: &[(f64, Side)]) -> Option<f64> {
    let gaps: Vec<f64> = orders
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| w[1].0 - w[0].0)
        .collect();
    (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
}

/// Fast iff `tau` is defined and shorter than the session.
pub fn classify(tau: Option<f64>, session_secs: f64) -> TraderClass {
    match tau {
        Some(t) if t < session_secs => TraderClass::Fast,
        _ => TraderClass::Slow,
    }
}

/// Signed cumulative shares of one trader, stepping at each fill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inventory {
    pub times: Vec<i64>,
    pub levels: Vec<i64>,
    pub traded: u64,
}

impl Inventory {
    pub fn last(&self) -> i64 {
        self.levels.last().copied().unwrap_or(0)
    }

    pub fn peak(&self) -> u64 {
        self.levels.iter().map(|l| l.unsigned_abs()).max().unwrap_or(0)
    }

    /// `max |I_t| / traded volume`; small for market makers.
    pub fn peak_ratio(&self) -> f64 {
        if self.traded == 0 {
            return 0.0;
        }
        self.peak() as f64 / self.traded as f64
    }

    /// Level at time `t` (right-continuous, 0 before the first fill).
    pub fn at(&self, t: i64) -> i64 {
        let n = self.times.partition_point(|&x| x <= t);
        if n == 0 { 0 } else { self.levels[n - 1] }
    }

    fn step(&mut self, ts: i64, delta: i64, size: u64) {
        let level = self.last() + delta;
        self.times.push(ts);
        self.levels.push(level);
        self.traded += size;
    }
}

/// Per-fill inventory changes `(ts, trader, signed shares, size)` for both
/// the aggressor and the resting side.
fn fill_flows(session: &Session) -> Vec<(i64, &str, i64, u64)> {
    let mut out = Vec::new();
    for mo in session.market_orders() {
        let aggressor = mo.trader(session);
        for &f in &mo.fills {
            let e = &session.events[f];
            let s = mo.side.sign() * e.size as i64;
            out.push((e.ts_ns, aggressor, s, e.size));
            out.push((e.ts_ns, e.trader_id.as_str(), -s, e.size));
        }
    }
    out
}

pub fn inventory_series(trader: &str, session: &Session) -> Inventory {
    let mut inv = Inventory { times: Vec::new(), levels: Vec::new(), traded: 0 };
    for (ts, who, delta, size) in fill_flows(session) {
        if who == trader {
            inv.step(ts, delta, size);
        }
    }
    inv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraderProfile {
    pub trader_id: String,
    pub tau: Option<f64>,
    pub class: TraderClass,
    /// Shares executed by this trader's market orders.
    pub aggressor_volume: u64,
    /// Shares of this trader's resting orders that were filled.
    pub resting_volume: u64,
    /// Aggressor volume executed against fast traders' resting orders.
    pub against_fast_volume: u64,
    pub inventory: Inventory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEcology {
    pub traders: Vec<TraderProfile>,
    pub v_d: u64,
    /// Market-order volume of fast traders over `V_D`.
    pub v_fast_share: f64,
    /// Fast traders over traders with at least one execution.
    pub n_fast_share: f64,
    /// Volume whose resting side belongs to a fast trader, over `V_D`.
    pub against_fast_share: f64,
}

#[derive(Default)]
struct Tally {
    orders: Vec<(f64, Side)>,
    aggressor: u64,
    resting: u64,
}

pub fn classify_session(session: &Session, mode: ReversalMode) -> SessionEcology {
    let mut tally: HashMap<&str, Tally> = HashMap::new();
    for e in &session.events {
        let counts = match e.kind {
            EventKind::Market => true,
            EventKind::Limit => mode == ReversalMode::AllOrders,
            _ => false,
        };
        if counts {
            tally.entry(&e.trader_id).or_default().orders.push((e.ts_ns as f64 / NS, e.side));
        }
    }
    let orders = session.market_orders();
    for mo in &orders {
        let t = tally.entry(mo.trader(session)).or_default();
        t.aggressor += mo.size;
        for &f in &mo.fills {
            let e = &session.events[f];
            tally.entry(&e.trader_id).or_default().resting += e.size;
        }
    }
    let secs = session.length_secs();
    let class: HashMap<&str, TraderClass> = tally
        .iter()
        .map(|(id, t)| (*id, classify(reversal_time(&t.orders), secs)))
        .collect();
    let mut against: HashMap<&str, u64> = HashMap::new();
    for mo in &orders {
        for &f in &mo.fills {
            let e = &session.events[f];
            if class.get(e.trader_id.as_str()) == Some(&TraderClass::Fast) {
                *against.entry(mo.trader(session)).or_default() += e.size;
            }
        }
    }
    let mut inventories: HashMap<&str, Inventory> = HashMap::new();
    for (ts, who, delta, size) in fill_flows(session) {
        inventories
            .entry(who)
            .or_insert_with(|| Inventory { times: Vec::new(), levels: Vec::new(), traded: 0 })
            .step(ts, delta, size);
    }

    let mut traders: Vec<TraderProfile> = tally
        .iter()
        .map(|(id, t)| TraderProfile {
            trader_id: id.to_string(),
            tau: reversal_time(&t.orders),
            class: class[id],
            aggressor_volume: t.aggressor,
            resting_volume: t.resting,
            against_fast_volume: against.get(id).copied().unwrap_or(0),
            inventory: inventories
                .remove(id)
                .unwrap_or(Inventory { times: Vec::new(), levels: Vec::new(), traded: 0 }),
        })
        .collect();
    traders.sort_by(|a, b| a.trader_id.cmp(&b.trader_id));

    let v_d: u64 = orders.iter().map(|m| m.size).sum();
    let share = |x: u64| if v_d > 0 { x as f64 / v_d as f64 } else { 0.0 };
    let active: Vec<&TraderProfile> = traders
        .iter()
        .filter(|t| t.aggressor_volume + t.resting_volume > 0)
        .collect();
    let n_fast = active.iter().filter(|t| t.class == TraderClass::Fast).count();
    SessionEcology {
        v_fast_share: share(
            traders.iter().filter(|t| t.class == TraderClass::Fast).map(|t| t.aggressor_volume).sum(),
        ),
        n_fast_share: if active.is_empty() { 0.0 } else { n_fast as f64 / active.len() as f64 },
        against_fast_share: share(traders.iter().map(|t| t.against_fast_volume).sum()),
        v_d,
        traders,
    }
}

/// Histogram on `[0, 1]` with equal-width bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareHistogram {
    pub counts: Vec<u64>,
}

impl ShareHistogram {
    pub fn new(n_bins: usize) -> Self {
        Self { counts: vec![0; n_bins] }
    }

    pub fn push(&mut self, x: f64) {
        let n = self.counts.len();
        let i = ((x.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1);
        self.counts[i] += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Centre of the fullest bin.
    pub fn mode(&self) -> Option<f64> {
        let n = self.counts.len() as f64;
        let (i, c) = self.counts.iter().enumerate().max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i)))?;
        (*c > 0).then(|| (i as f64 + 0.5) / n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcologySummary {
    pub sessions: usize,
    pub v_fast: ShareHistogram,
    pub n_fast: ShareHistogram,
    pub against_fast: ShareHistogram,
}

impl EcologySummary {
    pub fn new(n_bins: usize) -> Self {
        Self {
            sessions: 0,
            v_fast: ShareHistogram::new(n_bins),
            n_fast: ShareHistogram::new(n_bins),
            against_fast: ShareHistogram::new(n_bins),
        }
    }

    pub fn push(&mut self, e: &SessionEcology) {
        if e.v_d == 0 {
            return;
        }
        self.sessions += 1;
        self.v_fast.push(e.v_fast_share);
        self.n_fast.push(e.n_fast_share);
        self.against_fast.push(e.against_fast_share);
    }

    pub fn merge(&mut self, other: &Self) {
        self.sessions += other.sessions;
        self.v_fast.merge(&other.v_fast);
        self.n_fast.merge(&other.n_fast);
        self.against_fast.merge(&other.against_fast);
    }

    /// `bin_lo,bin_hi,v_fast,n_fast,against_fast` counts.
    pub fn to_csv(&self) -> String {
        let n = self.v_fast.counts.len();
        let mut out = String::from("bin_lo,bin_hi,v_fast,n_fast,against_fast\n");
        for i in 0..n {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i as f64 / n as f64,
                (i + 1) as f64 / n as f64,
                self.v_fast.counts[i],
                self.n_fast.counts[i],
                self.against_fast.counts[i]
            );
        }
        out
    }
}

/// Reversal-time band used for aggregate exports.
pub fn tau_band(tau: Option<f64>) -> &'static str {
    match tau {
        None => "none",
        Some(t) if t < 1.0 => "<1s",
        Some(t) if t < 10.0 => "1-10s",
        Some(t) if t < 100.0 => "10-100s",
        Some(t) if t < 1000.0 => "100-1000s",
        Some(_) => ">=1000s",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileGroup {
    pub class: TraderClass,
    pub tau_band: String,
    pub traders: usize,
    pub mean_volume: f64,
    pub mean_peak_ratio: f64,
}

/// Groups profiles by class and reversal-time band; groups with fewer than
/// `k` members are suppressed.
pub fn aggregate_profiles(profiles: &[TraderProfile], k: usize) -> Vec<ProfileGroup> {
    let mut groups: BTreeMap<(TraderClass, &str), Vec<&TraderProfile>> = BTreeMap::new();
    for p in profiles {
        groups.entry((p.class, tau_band(p.tau))).or_default().push(p);
    }
    groups
        .into_iter()
        .filter(|(_, v)| v.len() >= k)
        .map(|((class, band), v)| {
            let n = v.len() as f64;
            ProfileGroup {
                class,
                tau_band: band.to_string(),
                traders: v.len(),
                mean_volume: v.iter().map(|p| (p.aggressor_volume + p.resting_volume) as f64).sum::<f64>() / n,
                mean_peak_ratio: v.iter().map(|p| p.inventory.peak_ratio()).sum::<f64>() / n,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::SessionBuilder;
    use Side::{Buy, Sell};

    #[test]
    fn reversal_examples() {
        let o = [(0.0, Buy), (60.0, Buy), (120.0, Sell), (300.0, Buy)];
        assert_eq!(reversal_time(&o), Some(120.0));
        assert_eq!(reversal_time(&[(0.0, Buy), (5.0, Buy)]), None);
        assert_eq!(classify(None, 8400.0), TraderClass::Slow);
        let alt: Vec<(f64, Side)> = (0..10).map(|k| (k as f64, if k % 2 == 0 { Buy } else { Sell })).collect();
        assert_eq!(reversal_time(&alt), Some(1.0));
        assert_eq!(classify(Some(1.0), 8400.0), TraderClass::Fast);
    }

    #[test]
    fn lone_fast_trader_has_all_volume() {
        let mut b = SessionBuilder::new();
        b.market("F", Buy, 10).wait(1.0).market("F", Sell, 10).wait(1.0).market("F", Buy, 5);
        let e = classify_session(&b.build(), ReversalMode::AllOrders);
        assert_eq!(e.v_fast_share, 1.0);
        let f = e.traders.iter().find(|t| t.trader_id == "F").unwrap();
        assert_eq!(f.class, TraderClass::Fast);
    }

    #[test]
    fn shares_partition_and_inventories_cancel() {
        let mut b = SessionBuilder::new();
        b.market_from("S", Buy, 100, "MM").wait(3.0).market_from("F", Sell, 40, "P").wait(2.0);
        b.market_from("F", Buy, 30, "MM").wait(5.0).market_from("S", Buy, 20, "P");
        b.limit("MM", Sell, 50).wait(1.0).limit("MM", Buy, 50);
        let s = b.build();
        let e = classify_session(&s, ReversalMode::AllOrders);
        let v_slow: u64 = e.traders.iter().filter(|t| t.class == TraderClass::Slow).map(|t| t.aggressor_volume).sum();
        let v_fast: u64 = e.traders.iter().filter(|t| t.class == TraderClass::Fast).map(|t| t.aggressor_volume).sum();
        assert_eq!(v_fast + v_slow, e.v_d);
        for t in [s.start_ns, s.start_ns + 4_000_000_000, s.end_ns] {
            let total: i64 = e.traders.iter().map(|p| p.inventory.at(t)).sum();
            assert_eq!(total, 0);
        }
        let mm = e.traders.iter().find(|t| t.trader_id == "MM").unwrap();
        assert_eq!(mm.class, TraderClass::Fast);
        // S's 100 + F's 30 rest against MM
        assert_eq!(e.against_fast_share, 130.0 / 190.0);
        assert_eq!(e.n_fast_share, 2.0 / 4.0);
        let market_only = classify_session(&s, ReversalMode::MarketOnly);
        assert_eq!(market_only.traders.iter().find(|t| t.trader_id == "MM").unwrap().class, TraderClass::Slow);
    }

    #[test]
    fn inventory_round_trip() {
        let mut b = SessionBuilder::new();
        b.market("A", Buy, 100).wait(1.0).market("A", Sell, 100);
        let inv = inventory_series("A", &b.build());
        assert_eq!((inv.last(), inv.peak(), inv.traded), (0, 100, 200));
        let mut b = SessionBuilder::new();
        b.market("B", Buy, 10).wait(1.0).market("B", Buy, 20).wait(1.0).market("B", Buy, 5);
        let inv = inventory_series("B", &b.build());
        assert!(inv.levels.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn time_translation_invariance() {
        let build = |shift: f64| {
            let mut b = SessionBuilder::new();
            b.wait(shift);
            b.market("A", Buy, 10).wait(7.0).market("A", Sell, 10).wait(3.0).market("B", Buy, 1);
            classify_session(&b.build(), ReversalMode::AllOrders)
        };
        let (a, b) = (build(0.0), build(1234.5));
        let cls = |e: &SessionEcology| e.traders.iter().map(|t| (t.trader_id.clone(), t.class, t.tau)).collect::<Vec<_>>();
        assert_eq!(cls(&a), cls(&b));
    }

    #[test]
    fn k_anonymity_suppresses_small_groups() {
        let mut b = SessionBuilder::new();
        for k in 0..6 {
            b.market(&format!("S{k}"), Buy, 10).wait(1.0);
        }
        b.market("F", Buy, 1).wait(1.0).market("F", Sell, 1);
        let e = classify_session(&b.build(), ReversalMode::AllOrders);
        let g = aggregate_profiles(&e.traders, 5);
        assert!(g.iter().all(|g| g.traders >= 5));
        assert!(g.iter().any(|g| g.class == TraderClass::Slow));
        assert!(!g.iter().any(|g| g.class == TraderClass::Fast));
    }

    #[test]
    fn histogram_mode() {
        let mut h = ShareHistogram::new(20);
        for x in [0.51, 0.53, 0.54, 0.9, 1.0] {
            h.push(x);
        }
        assert!((h.mode().unwrap() - 0.525).abs() < 1e-12);
    }
}
