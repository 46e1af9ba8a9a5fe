use super::{EventKind, OrderEvent, Side, TapeError};
use std::io::{BufRead, Write};

pub const TAPE_HEADER: &str =
    "ts_ns,order_id,trader_id,event,side,price_ticks,size,best_bid,best_ask,bid_size,ask_size";

const N_FIELDS: usize = 11;

/// Streaming tape reader. Holds one line in memory at a time.
pub struct TapeReader<R> {
    input: R,
    line: u64,
    buf: String,
    last_ts: Option<i64>,
    header_seen: bool,
    done: bool,
}

impl<R: BufRead> TapeReader<R> {
    pub fn new(input: R) -> Self {
        Self {
            input,
            line: 0,
            buf: String::with_capacity(128),
            last_ts: None,
            header_seen: false,
            done: false,
        }
    }

    /// Number of lines consumed so far, header included.
    pub fn lines_read(&self) -> u64 {
        self.line
    }

    fn read_line(&mut self) -> Result<bool, TapeError> {
        self.buf.clear();
        let n = self.input.read_line(&mut self.buf)?;
        if n == 0 {
            return Ok(false);
        }
        self.line += 1;
        while self.buf.ends_with('\n') || self.buf.ends_with('\r') {
            self.buf.pop();
        }
        Ok(true)
    }

    fn next_event(&mut self) -> Result<Option<OrderEvent>, TapeError> {
        if !self.header_seen {
            if !self.read_line()? {
                return Ok(None);
            }
            if self.buf != TAPE_HEADER {
                return Err(TapeError::MalformedRow {
                    line: self.line,
                    reason: "unexpected header".into(),
                });
            }
            self.header_seen = true;
        }
        loop {
            if !self.read_line()? {
                return Ok(None);
            }
            if self.buf.is_empty() {
                continue;
            }
            let ev = parse_row(&self.buf, self.line)?;
            if let Some(prev) = self.last_ts {
                if ev.ts_ns < prev {
                    return Err(TapeError::NonMonotoneTimestamp {
                        line: self.line,
                        prev,
                        ts: ev.ts_ns,
                    });
                }
            }
            self.last_ts = Some(ev.ts_ns);
            return Ok(Some(ev));
        }
    }
}

impl<R: BufRead> Iterator for TapeReader<R> {
    type Item = Result<OrderEvent, TapeError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_event() {
            Ok(Some(ev)) => Some(Ok(ev)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Parse a whole tape, stopping at the first error.
pub fn parse_tape<R: BufRead>(input: R) -> Result<Vec<OrderEvent>, TapeError> {
    TapeReader::new(input).collect()
}

fn parse_row(row: &str, line: u64) -> Result<OrderEvent, TapeError> {
    let malformed = |reason: String| TapeError::MalformedRow { line, reason };
    let mut fields: [&str; N_FIELDS] = [""; N_FIELDS];
    let mut count = 0;
    for field in row.split(',') {
        if count == N_FIELDS {
            return Err(malformed(format!("expected {N_FIELDS} fields, found more")));
        }
        fields[count] = field;
        count += 1;
    }
    if count != N_FIELDS {
        return Err(malformed(format!("expected {N_FIELDS} fields, found {count}")));
    }

    fn int<T: std::str::FromStr>(s: &str, name: &str, line: u64) -> Result<T, TapeError> {
        s.parse().map_err(|_| TapeError::MalformedRow {
            line,
            reason: format!("bad {name}: {s:?}"),
        })
    }
    fn opt<T: std::str::FromStr>(s: &str, name: &str, line: u64) -> Result<Option<T>, TapeError> {
        if s.is_empty() {
            Ok(None)
        } else {
            int(s, name, line).map(Some)
        }
    }

    let kind = EventKind::from_code(fields[3]).ok_or_else(|| TapeError::UnknownEventKind {
        line,
        kind: fields[3].to_string(),
    })?;
    let side = match fields[4] {
        "1" => Side::Buy,
        "-1" => Side::Sell,
        other => return Err(malformed(format!("bad side: {other:?}"))),
    };
    let ev = OrderEvent {
        ts_ns: int(fields[0], "ts_ns", line)?,
        order_id: fields[1].to_string(),
        trader_id: fields[2].to_string(),
        kind,
        side,
        price: int(fields[5], "price_ticks", line)?,
        size: int(fields[6], "size", line)?,
        best_bid: opt(fields[7], "best_bid", line)?,
        best_ask: opt(fields[8], "best_ask", line)?,
        bid_size: opt(fields[9], "bid_size", line)?,
        ask_size: opt(fields[10], "ask_size", line)?,
    };
    ev.validate(line)?;
    Ok(ev)
}

/// Writes tapes in canonical CSV form.
pub struct TapeWriter<W: Write> {
    out: W,
    rows: u64,
}

impl<W: Write> TapeWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{TAPE_HEADER}")?;
        Ok(Self { out, rows: 0 })
    }

    pub fn write(&mut self, ev: &OrderEvent) -> std::io::Result<()> {
        fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            ev.ts_ns,
            ev.order_id,
            ev.trader_id,
            ev.kind.code(),
            ev.side.sign(),
            ev.price,
            ev.size,
            opt(ev.best_bid),
            opt(ev.best_ask),
            opt(ev.bid_size),
            opt(ev.ask_size),
        )?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
ts_ns,order_id,trader_id,event,side,price_ticks,size,best_bid,best_ask,bid_size,ask_size
34200000000000,o1,T1,L,-1,10002,100,9998,10002,300,100
34201000000000,o2,T2,M,1,10002,100,9998,10002,300,100
34201000000000,o1,T1,X,-1,10002,100,9998,10004,300,200
";

    #[test]
    fn parses_fixture() {
        let evs = parse_tape(FIXTURE.as_bytes()).unwrap();
        assert_eq!(evs.len(), 3);
        assert_eq!(evs[1].kind, EventKind::Market);
        assert_eq!(evs[1].trader_id, "T2");
        assert_eq!(evs[1].side, Side::Buy);
        assert_eq!(evs[2].best_ask, Some(10004));
        assert_eq!(evs[0].mid(), Some(10000.0));
    }

    #[test]
    fn zero_size_market_order_is_malformed() {
        let tape = format!("{TAPE_HEADER}\n1,o,T,M,1,10,0,9,11,1,1\n");
        match parse_tape(tape.as_bytes()) {
            Err(TapeError::MalformedRow { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn error_paths() {
        let dec = format!("{TAPE_HEADER}\n5,o,T,L,1,10,1,,,,\n4,o,T,L,1,10,1,,,,\n");
        assert!(matches!(
            parse_tape(dec.as_bytes()),
            Err(TapeError::NonMonotoneTimestamp { line: 3, .. })
        ));
        let kind = format!("{TAPE_HEADER}\n5,o,T,Z,1,10,1,,,,\n");
        assert!(matches!(
            parse_tape(kind.as_bytes()),
            Err(TapeError::UnknownEventKind { line: 2, .. })
        ));
        let short = format!("{TAPE_HEADER}\n5,o,T,L,1,10\n");
        assert!(matches!(
            parse_tape(short.as_bytes()),
            Err(TapeError::MalformedRow { line: 2, .. })
        ));
        let crossed = format!("{TAPE_HEADER}\n5,o,T,L,1,10,1,11,10,1,1\n");
        assert!(parse_tape(crossed.as_bytes()).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let evs = parse_tape(FIXTURE.as_bytes()).unwrap();
        let mut w = TapeWriter::new(Vec::new()).unwrap();
        for e in &evs {
            w.write(e).unwrap();
        }
        assert_eq!(String::from_utf8(w.finish().unwrap()).unwrap(), FIXTURE);
    }
}
