//! Length-prefixed binary tape variant.
//!
//! Layout: the 8-byte magic `DSQTAPE1`, then one record per event. Each
//! record is a little-endian `u32` payload length followed by the payload:
//!
//! ```text
//! i64 ts_ns | u8 kind (L=0 M=1 C=2 X=3) | i8 side | i64 price | u64 size
//! u8 presence bits (1 bid, 2 ask, 4 bid_size, 8 ask_size)
//! i64 best_bid | i64 best_ask | u64 bid_size | u64 ask_size   (zero when absent)
//! u16 len + order_id bytes | u16 len + trader_id bytes
//! ```

use super::{EventKind, OrderEvent, Side, TapeError};
use std::io::{Read, Write};

pub const BINARY_MAGIC: &[u8; 8] = b"DSQTAPE1";

const FIXED: usize = 8 + 1 + 1 + 8 + 8 + 1 + 32;

fn kind_byte(k: EventKind) -> u8 {
    match k {
        EventKind::Limit => 0,
        EventKind::Market => 1,
        EventKind::Cancel => 2,
        EventKind::Execution => 3,
    }
}

pub struct BinaryWriter<W: Write> {
    out: W,
    buf: Vec<u8>,
}

impl<W: Write> BinaryWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        out.write_all(BINARY_MAGIC)?;
        Ok(Self {
            out,
            buf: Vec::with_capacity(96),
        })
    }

    pub fn write(&mut self, ev: &OrderEvent) -> std::io::Result<()> {
        let b = &mut self.buf;
        b.clear();
        b.extend_from_slice(&ev.ts_ns.to_le_bytes());
        b.push(kind_byte(ev.kind));
        b.push(ev.side.sign() as i8 as u8);
        b.extend_from_slice(&ev.price.to_le_bytes());
        b.extend_from_slice(&ev.size.to_le_bytes());
        let bits = ev.best_bid.is_some() as u8
            | (ev.best_ask.is_some() as u8) << 1
            | (ev.bid_size.is_some() as u8) << 2
            | (ev.ask_size.is_some() as u8) << 3;
        b.push(bits);
        b.extend_from_slice(&ev.best_bid.unwrap_or(0).to_le_bytes());
        b.extend_from_slice(&ev.best_ask.unwrap_or(0).to_le_bytes());
        b.extend_from_slice(&ev.bid_size.unwrap_or(0).to_le_bytes());
        b.extend_from_slice(&ev.ask_size.unwrap_or(0).to_le_bytes());
        for s in [&ev.order_id, &ev.trader_id] {
            let len = u16::try_from(s.len()).map_err(|_| {
                std::io::Error::new(std::io::ErrorKind::InvalidInput, "identifier too long")
            })?;
            b.extend_from_slice(&len.to_le_bytes());
            b.extend_from_slice(s.as_bytes());
        }
        self.out.write_all(&(b.len() as u32).to_le_bytes())?;
        self.out.write_all(b)
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Streaming reader; `line` in errors is the 1-based record number.
pub struct BinaryReader<R> {
    input: R,
    record: u64,
    buf: Vec<u8>,
    last_ts: Option<i64>,
    started: bool,
    done: bool,
}

impl<R: Read> BinaryReader<R> {
    pub fn new(input: R) -> Self {
        Self {
            input,
            record: 0,
            buf: Vec::new(),
            last_ts: None,
            started: false,
            done: false,
        }
    }

    fn next_event(&mut self) -> Result<Option<OrderEvent>, TapeError> {
        if !self.started {
            let mut magic = [0u8; 8];
            self.input.read_exact(&mut magic)?;
            if &magic != BINARY_MAGIC {
                return Err(TapeError::MalformedRow {
                    line: 0,
                    reason: "bad binary magic".into(),
                });
            }
            self.started = true;
        }
        let mut len = [0u8; 4];
        match self.input.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        self.record += 1;
        let line = self.record;
        let len = u32::from_le_bytes(len) as usize;
        let malformed = |reason: &str| TapeError::MalformedRow {
            line,
            reason: reason.to_string(),
        };
        if len < FIXED + 4 {
            return Err(malformed("record too short"));
        }
        self.buf.resize(len, 0);
        self.input.read_exact(&mut self.buf)?;
        let b = &self.buf;
        let i64_at = |o: usize| i64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let kind = match b[8] {
            0 => EventKind::Limit,
            1 => EventKind::Market,
            2 => EventKind::Cancel,
            3 => EventKind::Execution,
            k => {
                return Err(TapeError::UnknownEventKind {
                    line,
                    kind: k.to_string(),
                })
            }
        };
        let side = Side::from_sign(b[9] as i8 as i64).ok_or_else(|| malformed("bad side"))?;
        let bits = b[26];
        let mut pos = FIXED;
        let mut ids = [String::new(), String::new()];
        for id in &mut ids {
            if pos + 2 > len {
                return Err(malformed("truncated identifier"));
            }
            let n = u16::from_le_bytes([b[pos], b[pos + 1]]) as usize;
            pos += 2;
            if pos + n > len {
                return Err(malformed("truncated identifier"));
            }
            *id = std::str::from_utf8(&b[pos..pos + n])
                .map_err(|_| malformed("identifier is not utf-8"))?
                .to_string();
            pos += n;
        }
        let [order_id, trader_id] = ids;
        let ev = OrderEvent {
            ts_ns: i64_at(0),
            order_id,
            trader_id,
            kind,
            side,
            price: i64_at(10),
            size: u64_at(18),
            best_bid: (bits & 1 != 0).then(|| i64_at(27)),
            best_ask: (bits & 2 != 0).then(|| i64_at(35)),
            bid_size: (bits & 4 != 0).then(|| u64_at(43)),
            ask_size: (bits & 8 != 0).then(|| u64_at(51)),
        };
        ev.validate(line)?;
        if let Some(prev) = self.last_ts {
            if ev.ts_ns < prev {
                return Err(TapeError::NonMonotoneTimestamp {
                    line,
                    prev,
                    ts: ev.ts_ns,
                });
            }
        }
        self.last_ts = Some(ev.ts_ns);
        Ok(Some(ev))
    }
}

impl<R: Read> Iterator for BinaryReader<R> {
    type Item = Result<OrderEvent, TapeError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let r = self.next_event().transpose();
        if !matches!(r, Some(Ok(_))) {
            self.done = true;
        }
        r
    }
}

pub fn read_binary<R: Read>(input: R) -> Result<Vec<OrderEvent>, TapeError> {
    BinaryReader::new(input).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_event() -> impl Strategy<Value = OrderEvent> {
        (
            0i64..1_000_000,
            "[a-z0-9]{1,8}",
            "[A-Z0-9]{1,8}",
            0u8..4,
            prop::bool::ANY,
            1i64..1_000_000,
            1u64..10_000,
            prop::option::of((1i64..1000, 1i64..10)),
            prop::option::of(1u64..1000),
        )
            .prop_map(|(ts, oid, tid, k, buy, price, size, q, bs)| OrderEvent {
                ts_ns: ts,
                order_id: oid,
                trader_id: tid,
                kind: [EventKind::Limit, EventKind::Market, EventKind::Cancel, EventKind::Execution]
                    [k as usize],
                side: if buy { Side::Buy } else { Side::Sell },
                price,
                size,
                best_bid: q.map(|(b, _)| b),
                best_ask: q.map(|(b, s)| b + s),
                bid_size: bs,
                ask_size: None,
            })
    }

    proptest! {
        #[test]
        fn binary_and_csv_agree(mut evs in prop::collection::vec(arb_event(), 0..40)) {
            evs.sort_by_key(|e| e.ts_ns);
            let mut bw = BinaryWriter::new(Vec::new()).unwrap();
            let mut cw = super::super::TapeWriter::new(Vec::new()).unwrap();
            for e in &evs {
                bw.write(e).unwrap();
                cw.write(e).unwrap();
            }
            let bin = read_binary(&bw.finish().unwrap()[..]).unwrap();
            let csv_bytes = cw.finish().unwrap();
            let csv = super::super::parse_tape(&csv_bytes[..]).unwrap();
            prop_assert_eq!(&bin, &evs);
            prop_assert_eq!(&csv, &evs);
            // canonical CSV: re-serialising reproduces the bytes
            let mut again = super::super::TapeWriter::new(Vec::new()).unwrap();
            for e in &csv { again.write(e).unwrap(); }
            prop_assert_eq!(again.finish().unwrap(), csv_bytes);
        }
    }
}
