use super::TapeError;
use chrono::NaiveDate;
use std::fmt::Write as _;
use std::path::Path;

/// Per-stock metadata sidecar (`key=value` lines).
#[derive(Debug, Clone, PartialEq)]
pub struct TapeMeta {
    pub stock_id: String,
    pub session_date: NaiveDate,
    pub tick_size: f64,
}

impl TapeMeta {
    pub fn parse(text: &str) -> Result<Self, TapeError> {
        let mut stock_id = None;
        let mut session_date = None;
        let mut tick_size = None;
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| TapeError::BadMeta(format!("not a key=value line: {line:?}")))?;
            let value = value.trim();
            match key.trim() {
                "stock_id" => stock_id = Some(value.to_string()),
                "session_date" => {
                    session_date = Some(
                        NaiveDate::parse_from_str(value, "%Y-%m-%d")
                            .map_err(|e| TapeError::BadMeta(format!("session_date: {e}")))?,
                    )
                }
                "tick_size" => {
                    let t: f64 = value
                        .parse()
                        .map_err(|_| TapeError::BadMeta(format!("tick_size: {value:?}")))?;
                    if !(t > 0.0) {
                        return Err(TapeError::BadMeta("tick_size must be positive".into()));
                    }
                    tick_size = Some(t)
                }
                _ => {}
            }
        }
        Ok(Self {
            stock_id: stock_id.ok_or_else(|| TapeError::BadMeta("missing stock_id".into()))?,
            session_date: session_date
                .ok_or_else(|| TapeError::BadMeta("missing session_date".into()))?,
            tick_size: tick_size.ok_or_else(|| TapeError::BadMeta("missing tick_size".into()))?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TapeError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "stock_id={}", self.stock_id);
        let _ = writeln!(s, "session_date={}", self.session_date.format("%Y-%m-%d"));
        let _ = writeln!(s, "tick_size={}", self.tick_size);
        s
    }

    /// Sidecar path for a tape: `foo.csv` -> `foo.meta`.
    pub fn sidecar_path(tape: &Path) -> std::path::PathBuf {
        tape.with_extension("meta")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = TapeMeta {
            stock_id: "S1".into(),
            session_date: NaiveDate::from_ymd_opt(2015, 3, 2).unwrap(),
            tick_size: 0.5,
        };
        assert_eq!(TapeMeta::parse(&m.to_text()).unwrap(), m);
        assert!(TapeMeta::parse("stock_id=A\n").is_err());
    }
}
