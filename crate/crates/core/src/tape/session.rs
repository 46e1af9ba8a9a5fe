use super::{EventKind, OrderEvent, Side, TapeError, TapeMeta};
use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const NS_PER_SECOND: i64 = 1_000_000_000;
pub const NS_PER_MINUTE: i64 = 60 * NS_PER_SECOND;
pub const NS_PER_DAY: i64 = 24 * 60 * NS_PER_MINUTE;

const fn hm(h: i64, m: i64) -> i64 {
    (h * 60 + m) * NS_PER_MINUTE
}

/// Continuous-trading windows `(open, close)` as offsets from midnight.
pub const AM_WINDOW: (i64, i64) = (hm(9, 0), hm(11, 30));
pub const PM_WINDOW: (i64, i64) = (hm(12, 30), hm(15, 0));
const TRIM: i64 = 10 * NS_PER_MINUTE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Half {
    Am,
    Pm,
}

impl Half {
    pub fn window(self) -> (i64, i64) {
        match self {
            Half::Am => AM_WINDOW,
            Half::Pm => PM_WINDOW,
        }
    }

    /// Trimmed window `[open + 10min, close - 10min)` as offsets from midnight.
    pub fn trimmed(self) -> (i64, i64) {
        let (o, c) = self.window();
        (o + TRIM, c - TRIM)
    }

    fn of_offset(offset: i64) -> Option<Half> {
        [Half::Am, Half::Pm].into_iter().find(|h| {
            let (o, c) = h.window();
            offset >= o && offset < c
        })
    }
}

impl fmt::Display for Half {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Half::Am => "AM",
            Half::Pm => "PM",
        })
    }
}

/// A half-day session; each one is analysed as an independent "day".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionKey {
    pub date: NaiveDate,
    pub half: Half,
}

impl fmt::Display for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.date.format("%Y-%m-%d"), self.half)
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub stock_id: String,
    pub key: SessionKey,
    /// Trimmed window in tape nanoseconds, half-open.
    pub start_ns: i64,
    pub end_ns: i64,
    pub events: Vec<OrderEvent>,
    /// Executed volume `V_D`: sum of fill sizes, each execution counted once.
    pub volume: u64,
    /// No event survived trimming.
    pub empty: bool,
}

impl Session {
    fn new(stock_id: &str, key: SessionKey, day: i64) -> Self {
        let (s, e) = key.half.trimmed();
        Session {
            stock_id: stock_id.to_string(),
            key,
            start_ns: day * NS_PER_DAY + s,
            end_ns: day * NS_PER_DAY + e,
            events: Vec::new(),
            volume: 0,
            empty: true,
        }
    }

    /// Builds a session from already-trimmed events (used by the simulator and tests).
    pub fn from_events(
        stock_id: &str,
        base_date: NaiveDate,
        day: i64,
        half: Half,
        events: Vec<OrderEvent>,
    ) -> Self {
        let key = SessionKey {
            date: base_date + Days::new(day as u64),
            half,
        };
        let mut s = Session::new(stock_id, key, day);
        s.volume = executed_volume(&events);
        s.empty = events.is_empty();
        s.events = events;
        s
    }

    pub fn length_secs(&self) -> f64 {
        (self.end_ns - self.start_ns) as f64 / NS_PER_SECOND as f64
    }

    /// Day index of the session relative to the tape epoch.
    pub fn day(&self) -> i64 {
        self.start_ns.div_euclid(NS_PER_DAY)
    }

    /// Session volatility proxy `(max mid - min mid) / first mid`.
    pub fn sigma(&self) -> Result<f64, TapeError> {
        sigma_of(self.events.iter().filter_map(OrderEvent::mid)).ok_or(TapeError::NoQuotes)
    }

    pub fn volume_clock(&self) -> VolumeClock {
        VolumeClock::new(self)
    }

    /// Market orders with their fills attached.
    ///
    /// Fills belong to the nearest preceding `M` row with the same timestamp.
    /// Orders that never fill are dropped: they did not execute.
    pub fn market_orders(&self) -> Vec<MarketOrder> {
        let mut out: Vec<MarketOrder> = Vec::new();
        let mut open: Option<MarketOrder> = None;
        let mut last_log_mid: Option<f64> = None;
        for (i, ev) in self.events.iter().enumerate() {
            match ev.kind {
                EventKind::Market => {
                    if let Some(mo) = open.take() {
                        if mo.size > 0 {
                            out.push(mo);
                        }
                    }
                    open = Some(MarketOrder {
                        index: i,
                        last_index: i,
                        ts_ns: ev.ts_ns,
                        side: ev.side,
                        size: 0,
                        pre_log_mid: ev.log_mid().or(last_log_mid),
                        post_log_mid: None,
                        opposite_size: ev.opposite_best_size(ev.side),
                        fills: Vec::new(),
                    });
                }
                EventKind::Execution => {
                    match open.as_mut() {
                        Some(mo) if mo.ts_ns == ev.ts_ns => {
                            mo.size += ev.size;
                            mo.last_index = i;
                            mo.fills.push(i);
                            mo.post_log_mid = ev.log_mid().or(mo.post_log_mid);
                        }
                        Some(_) => {
                            let mo = open.take().unwrap();
                            if mo.size > 0 {
                                out.push(mo);
                            }
                        }
                        None => {}
                    }
                }
                _ => {
                    if let Some(mo) = open.as_ref() {
                        if mo.ts_ns != ev.ts_ns || mo.size > 0 {
                            let mo = open.take().unwrap();
                            if mo.size > 0 {
                                out.push(mo);
                            }
                        }
                    }
                }
            }
            if let Some(m) = ev.log_mid() {
                last_log_mid = Some(m);
            }
        }
        if let Some(mo) = open {
            if mo.size > 0 {
                out.push(mo);
            }
        }
        out
    }

    /// Index of the last event sharing the timestamp of event `i`.
    pub fn batch_end(&self, i: usize) -> usize {
        let ts = self.events[i].ts_ns;
        let mut j = i;
        while j + 1 < self.events.len() && self.events[j + 1].ts_ns == ts {
            j += 1;
        }
        j
    }

    /// Log mid after event `i`, falling back to the latest earlier quote.
    pub fn log_mid_at(&self, i: usize) -> Option<f64> {
        self.events[..=i].iter().rev().find_map(OrderEvent::log_mid)
    }
}

pub(crate) fn sigma_of(mids: impl Iterator<Item = f64>) -> Option<f64> {
    let mut first = None;
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for m in mids {
        first.get_or_insert(m);
        hi = hi.max(m);
        lo = lo.min(m);
    }
    first.map(|o| (hi - lo) / o)
}

fn executed_volume(events: &[OrderEvent]) -> u64 {
    events
        .iter()
        .filter(|e| e.kind == EventKind::Execution)
        .map(|e| e.size)
        .sum()
}

/// One executed market order and its fills.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketOrder {
    /// Index of the `M` row in `Session::events`.
    pub index: usize,
    /// Index of the last fill row.
    pub last_index: usize,
    pub ts_ns: i64,
    pub side: Side,
    /// Total filled size.
    pub size: u64,
    /// Log mid just before the order.
    pub pre_log_mid: Option<f64>,
    /// Log mid right after the order's last fill.
    pub post_log_mid: Option<f64>,
    /// Size at the opposite best when the order arrived.
    pub opposite_size: Option<u64>,
    pub fills: Vec<usize>,
}

impl MarketOrder {
    pub fn trader<'s>(&self, session: &'s Session) -> &'s str {
        &session.events[self.index].trader_id
    }

    /// The order fits inside the opposite best queue, so it cannot move the quotes.
    pub fn no_immediate_impact(&self) -> bool {
        self.opposite_size.is_some_and(|s| self.size <= s)
    }
}

/// `(V_D, sigma_D)` for a session.
pub fn session_stats(session: &Session) -> Result<(u64, f64), TapeError> {
    Ok((session.volume, session.sigma()?))
}

/// Cumulative executed shares as a step function of time.
#[derive(Debug, Clone)]
pub struct VolumeClock {
    start_ns: i64,
    end_ns: i64,
    times: Vec<i64>,
    cumulative: Vec<u64>,
}

impl VolumeClock {
    pub fn new(session: &Session) -> Self {
        let mut times = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0u64;
        for e in session.events.iter().filter(|e| e.kind == EventKind::Execution) {
            acc += e.size;
            if times.last() == Some(&e.ts_ns) {
                *cumulative.last_mut().unwrap() = acc;
            } else {
                times.push(e.ts_ns);
                cumulative.push(acc);
            }
        }
        Self {
            start_ns: session.start_ns,
            end_ns: session.end_ns,
            times,
            cumulative,
        }
    }

    /// Shares executed at or before `t` (right-continuous).
    pub fn at(&self, t: i64) -> Result<u64, TapeError> {
        if t < self.start_ns || t > self.end_ns {
            return Err(TapeError::OutOfSession { ts: t });
        }
        let n = self.times.partition_point(|&x| x <= t);
        Ok(if n == 0 { 0 } else { self.cumulative[n - 1] })
    }

    pub fn total(&self) -> u64 {
        self.cumulative.last().copied().unwrap_or(0)
    }
}

/// Streams sessions out of a time-ordered event stream.
///
/// Events outside both trading windows are dropped; events inside a window
/// but outside its trimmed part open the session without joining it, so a
/// window whose events were all trimmed yields an empty, flagged session.
pub struct SessionSplitter<I> {
    events: I,
    stock_id: String,
    base_date: NaiveDate,
    current: Option<(i64, Session)>,
    failed: bool,
}

impl<I> SessionSplitter<I>
where
    I: Iterator<Item = Result<OrderEvent, TapeError>>,
{
    pub fn new(events: I, meta: &TapeMeta) -> Self {
        Self {
            events,
            stock_id: meta.stock_id.clone(),
            base_date: meta.session_date,
            current: None,
            failed: false,
        }
    }
}

impl<I> Iterator for SessionSplitter<I>
where
    I: Iterator<Item = Result<OrderEvent, TapeError>>,
{
    type Item = Result<Session, TapeError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let ev = match self.events.next() {
                None => return self.current.take().map(|(_, s)| Ok(s)),
                Some(Err(e)) => {
                    self.failed = true;
                    return Some(Err(e));
                }
                Some(Ok(ev)) => ev,
            };
            let day = ev.ts_ns.div_euclid(NS_PER_DAY);
            let offset = ev.ts_ns.rem_euclid(NS_PER_DAY);
            let Some(half) = Half::of_offset(offset) else {
                continue;
            };
            let same = matches!(&self.current, Some((d, s)) if *d == day && s.key.half == half);
            let mut finished = None;
            if !same {
                let key = SessionKey {
                    date: self.base_date + Days::new(day.max(0) as u64),
                    half,
                };
                finished = self
                    .current
                    .replace((day, Session::new(&self.stock_id, key, day)))
                    .map(|(_, s)| s);
            }
            let (_, session) = self.current.as_mut().unwrap();
            if ev.ts_ns >= session.start_ns && ev.ts_ns < session.end_ns {
                if ev.kind == EventKind::Execution {
                    session.volume += ev.size;
                }
                session.empty = false;
                session.events.push(ev);
            }
            if let Some(s) = finished {
                return Some(Ok(s));
            }
        }
    }
}

/// Split a whole event list into sessions.
pub fn split_sessions(events: Vec<OrderEvent>, meta: &TapeMeta) -> Vec<Session> {
    SessionSplitter::new(events.into_iter().map(Ok), meta)
        .map(|s| s.expect("infallible source"))
        .collect()
}

/// 15-minute (or `bin_minutes`) bins of a half, clipped to its trimmed window,
/// as `(start, end)` offsets from midnight.
pub fn session_bins(half: Half, bin_minutes: i64) -> Vec<(i64, i64)> {
    let width = bin_minutes * NS_PER_MINUTE;
    let (s, e) = half.trimmed();
    let mut out = Vec::new();
    let mut lo = s.div_euclid(width) * width;
    while lo < e {
        let hi = lo + width;
        out.push((lo.max(s), hi.min(e)));
        lo = hi;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(ts: i64, kind: EventKind, trader: &str, side: Side, size: u64, q: Option<(i64, i64)>) -> OrderEvent {
        OrderEvent {
            ts_ns: ts,
            order_id: format!("o{ts}"),
            trader_id: trader.into(),
            kind,
            side,
            price: 100,
            size,
            best_bid: q.map(|x| x.0),
            best_ask: q.map(|x| x.1),
            bid_size: q.map(|_| 10),
            ask_size: q.map(|_| 10),
        }
    }

    fn meta() -> TapeMeta {
        TapeMeta {
            stock_id: "S".into(),
            session_date: NaiveDate::from_ymd_opt(2016, 1, 4).unwrap(),
            tick_size: 1.0,
        }
    }

    #[test]
    fn trims_session_edges() {
        let evs = vec![
            ev(hm(9, 5), EventKind::Limit, "A", Side::Buy, 1, None),
            ev(hm(9, 30), EventKind::Limit, "A", Side::Buy, 1, None),
            ev(hm(11, 25), EventKind::Limit, "A", Side::Buy, 1, None),
        ];
        let s = split_sessions(evs, &meta());
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].key.half, Half::Am);
        assert_eq!(s[0].events.len(), 1);
        assert_eq!(s[0].events[0].ts_ns, hm(9, 30));
    }

    #[test]
    fn splits_am_pm_and_flags_empty() {
        let evs = vec![
            ev(hm(10, 0), EventKind::Limit, "A", Side::Buy, 1, None),
            ev(hm(13, 0), EventKind::Limit, "A", Side::Buy, 1, None),
            ev(NS_PER_DAY + hm(9, 3), EventKind::Limit, "A", Side::Buy, 1, None),
        ];
        let s = split_sessions(evs, &meta());
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].key.half, Half::Am);
        assert_eq!(s[1].key.half, Half::Pm);
        assert!(s[2].empty);
        assert_eq!(s[2].volume, 0);
        assert_eq!(s[2].key.date, NaiveDate::from_ymd_opt(2016, 1, 5).unwrap());
    }

    #[test]
    fn trim_boundaries_are_half_open() {
        let evs = vec![
            ev(hm(9, 10), EventKind::Limit, "A", Side::Buy, 1, None),
            ev(hm(11, 20), EventKind::Limit, "A", Side::Buy, 1, None),
        ];
        let s = split_sessions(evs, &meta());
        assert_eq!(s[0].events.len(), 1);
        assert_eq!(s[0].events[0].ts_ns, hm(9, 10));
    }

    #[test]
    fn sigma_proxy() {
        let mk = |mid: i64, t: i64| ev(hm(10, t), EventKind::Limit, "A", Side::Buy, 1, Some((mid - 1, mid + 1)));
        let s = Session::from_events("S", meta().session_date, 0, Half::Am, vec![mk(100, 0), mk(102, 1), mk(98, 2)]);
        assert!((s.sigma().unwrap() - 0.04).abs() < 1e-15);
        let flat = Session::from_events("S", meta().session_date, 0, Half::Am, vec![mk(100, 0), mk(100, 1)]);
        assert_eq!(session_stats(&flat).unwrap().1, 0.0);
        let none = Session::from_events("S", meta().session_date, 0, Half::Am, vec![ev(hm(10, 0), EventKind::Limit, "A", Side::Buy, 1, None)]);
        assert!(matches!(none.sigma(), Err(TapeError::NoQuotes)));
    }

    #[test]
    fn volume_clock_steps() {
        let q = Some((99, 101));
        let evs = vec![
            ev(hm(10, 0), EventKind::Market, "A", Side::Buy, 5, q),
            ev(hm(10, 0), EventKind::Execution, "P", Side::Sell, 5, q),
            ev(hm(10, 5), EventKind::Market, "B", Side::Sell, 3, q),
            ev(hm(10, 5), EventKind::Execution, "P", Side::Buy, 2, q),
            ev(hm(10, 5), EventKind::Execution, "Q", Side::Buy, 1, q),
        ];
        let s = Session::from_events("S", meta().session_date, 0, Half::Am, evs);
        let c = s.volume_clock();
        assert_eq!(c.at(s.start_ns).unwrap(), 0);
        assert_eq!(c.at(hm(10, 0)).unwrap(), 5);
        assert_eq!(c.at(hm(10, 4)).unwrap(), 5);
        assert_eq!(c.at(s.end_ns).unwrap(), s.volume);
        assert!(c.at(s.end_ns + 1).is_err());
        let mos = s.market_orders();
        assert_eq!(mos.len(), 2);
        assert_eq!(mos[1].size, 3);
        assert_eq!(mos[1].fills.len(), 2);
        assert!(mos[1].no_immediate_impact());
    }

    #[test]
    fn bins_tile_trimmed_window() {
        let bins = session_bins(Half::Am, 15);
        assert_eq!(bins.len(), 10);
        assert_eq!(bins[0], (hm(9, 10), hm(9, 15)));
        assert_eq!(bins[9].1, hm(11, 20));
        assert!(bins.windows(2).all(|w| w[0].1 == w[1].0));
    }
}
