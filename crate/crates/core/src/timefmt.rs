use chrono::NaiveDateTime;

use crate::{Error, Result};

const FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

pub(crate) fn format(ts: &NaiveDateTime) -> String {
    ts.format(FORMAT).to_string()
}

/// Accepts `YYYY-MM-DDTHH:MM:SS` with or without a trailing `Z`.
pub(crate) fn parse(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    let s = s.strip_suffix('Z').unwrap_or(s);
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .map_err(|e| Error::InvalidInput(format!("bad timestamp {s:?}: {e}")))
}
