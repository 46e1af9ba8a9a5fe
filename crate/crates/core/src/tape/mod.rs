//! ID-tagged order-flow tapes.
//!
//! A tape is a time-ordered stream of [`OrderEvent`] rows for a single stock.
//! Timestamps are nanoseconds since local midnight of the `session_date`
//! recorded in the stock's metadata sidecar; a tape may span several days,
//! in which case day `d` occupies `[d * 86_400e9, (d + 1) * 86_400e9)`.
//!
//! Quote fields follow one rule: on `M` rows they describe the book at
//! submission time (before any fill), on every other row they describe the
//! book once the row has been applied. Fills (`X` rows) that belong to a
//! market order follow its `M` row with the same timestamp and carry the
//! resting order's id, owner and side.

mod binary;
mod csv;
mod meta;
mod seasonality;
mod session;

pub use self::binary::{read_binary, BinaryReader, BinaryWriter, BINARY_MAGIC};
pub use self::csv::{parse_tape, TapeReader, TapeWriter, TAPE_HEADER};
pub use self::meta::TapeMeta;
pub use self::seasonality::{seasonality_profile, SeasonalityBin, SeasonalityProfile};
pub use self::session::{
    session_bins, session_stats, split_sessions, Half, MarketOrder, Session, SessionKey,
    SessionSplitter, VolumeClock, AM_WINDOW, NS_PER_DAY, NS_PER_MINUTE, NS_PER_SECOND, PM_WINDOW,
};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Price in integer ticks.
pub type Ticks = i64;

#[derive(Debug, Error)]
pub enum TapeError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: timestamp {ts} precedes previous timestamp {prev}")]
    NonMonotoneTimestamp { line: u64, prev: i64, ts: i64 },
    #[error("line {line}: unknown event kind {kind:?}")]
    UnknownEventKind { line: u64, kind: String },
    #[error("session has no best-quote snapshot")]
    NoQuotes,
    #[error("time {ts} is outside the session window")]
    OutOfSession { ts: i64 },
    #[error("metadata: {0}")]
    BadMeta(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn sign(self) -> i64 {
        match self {
            Side::Buy => 1,
            Side::Sell => -1,
        }
    }

    pub fn signum(self) -> f64 {
        self.sign() as f64
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Side> {
        match sign {
            1 => Some(Side::Buy),
            -1 => Some(Side::Sell),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// Limit order submission (`L`).
    Limit,
    /// Market order submission (`M`).
    Market,
    /// Cancellation (`C`).
    Cancel,
    /// Fill of a resting order (`X`).
    Execution,
}

impl EventKind {
    pub fn code(self) -> char {
        match self {
            EventKind::Limit => 'L',
            EventKind::Market => 'M',
            EventKind::Cancel => 'C',
            EventKind::Execution => 'X',
        }
    }

    pub fn from_code(code: &str) -> Option<EventKind> {
        match code {
            "L" => Some(EventKind::Limit),
            "M" => Some(EventKind::Market),
            "C" => Some(EventKind::Cancel),
            "X" => Some(EventKind::Execution),
            _ => None,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// One tape row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderEvent {
    pub ts_ns: i64,
    pub order_id: String,
    pub trader_id: String,
    pub kind: EventKind,
    pub side: Side,
    pub price: Ticks,
    pub size: u64,
    pub best_bid: Option<Ticks>,
    pub best_ask: Option<Ticks>,
    pub bid_size: Option<u64>,
    pub ask_size: Option<u64>,
}

impl OrderEvent {
    /// Mid-price in ticks, when both quotes are present.
    pub fn mid(&self) -> Option<f64> {
        match (self.best_bid, self.best_ask) {
            (Some(b), Some(a)) => Some((b + a) as f64 / 2.0),
            _ => None,
        }
    }

    pub fn log_mid(&self) -> Option<f64> {
        self.mid().map(f64::ln)
    }

    /// Size resting at the best quote opposite to an aggressor on `side`.
    pub fn opposite_best_size(&self, side: Side) -> Option<u64> {
        match side {
            Side::Buy => self.ask_size,
            Side::Sell => self.bid_size,
        }
    }

    pub(crate) fn validate(&self, line: u64) -> Result<(), TapeError> {
        let bad = |reason: &str| TapeError::MalformedRow {
            line,
            reason: reason.to_string(),
        };
        if self.size == 0 && self.kind != EventKind::Cancel {
            return Err(bad("size must be positive"));
        }
        if let (Some(b), Some(a)) = (self.best_bid, self.best_ask) {
            if b >= a {
                return Err(bad("crossed or locked quotes"));
            }
        }
        if self.order_id.contains(',') || self.trader_id.contains(',') {
            return Err(bad("identifier contains a comma"));
        }
        Ok(())
    }
}
