//! Hand-built sessions for tests.

use crate::tape::{EventKind, Half, OrderEvent, Session, Side, Ticks, NS_PER_MINUTE};
use chrono::NaiveDate;

pub struct SessionBuilder {
    ts: i64,
    mid: Ticks,
    half_spread: Ticks,
    best_size: u64,
    next_id: u64,
    events: Vec<OrderEvent>,
}

impl Default for SessionBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl SessionBuilder {
    /// Starts at 10:00 of the AM session with mid 100_000 ticks.
    pub fn new() -> Self {
        Self {
            ts: 600 * NS_PER_MINUTE,
            mid: 100_000,
            half_spread: 2,
            best_size: 1_000,
            next_id: 0,
            events: Vec::new(),
        }
    }

    fn row(&mut self, trader: &str, kind: EventKind, side: Side, price: Ticks, size: u64) -> &mut Self {
        self.next_id += 1;
        self.events.push(OrderEvent {
            ts_ns: self.ts,
            order_id: format!("o{}", self.next_id),
            trader_id: trader.to_string(),
            kind,
            side,
            price,
            size,
            best_bid: Some(self.mid - self.half_spread),
            best_ask: Some(self.mid + self.half_spread),
            bid_size: Some(self.best_size),
            ask_size: Some(self.best_size),
        });
        self
    }

    pub fn wait(&mut self, secs: f64) -> &mut Self {
        self.ts += (secs * 1e9).round() as i64;
        self
    }

    pub fn best_size(&mut self, size: u64) -> &mut Self {
        self.best_size = size;
        self
    }

    /// Move the mid and publish it with a quote row.
    pub fn set_mid(&mut self, mid: Ticks) -> &mut Self {
        self.mid = mid;
        let p = mid - self.half_spread;
        self.row("QUOTE", EventKind::Limit, Side::Buy, p, 1)
    }

    /// Market order filled by provider `P` at the opposite best.
    pub fn market(&mut self, trader: &str, side: Side, size: u64) -> &mut Self {
        self.market_from(trader, side, size, "P")
    }

    pub fn market_from(&mut self, trader: &str, side: Side, size: u64, provider: &str) -> &mut Self {
        let price = self.mid + side.sign() * self.half_spread;
        self.row(trader, EventKind::Market, side, price, size);
        self.row(provider, EventKind::Execution, side.opposite(), price, size)
    }

    pub fn limit(&mut self, trader: &str, side: Side, size: u64) -> &mut Self {
        let price = self.mid - side.sign() * self.half_spread;
        self.row(trader, EventKind::Limit, side, price, size)
    }

    pub fn events(&self) -> &[OrderEvent] {
        &self.events
    }

    pub fn build(&self) -> Session {
        Session::from_events(
            "TEST",
            NaiveDate::from_ymd_opt(2016, 1, 4).unwrap(),
            0,
            Half::Am,
            self.events.clone(),
        )
    }
}
