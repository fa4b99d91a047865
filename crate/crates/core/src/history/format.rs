//! Line-delimited text form of a history, one event per line:
//!
//! ```text
//! <seq> <GET|OK|REJECT> <agent> <key> <version> <expected|-> <k=v,k=v|->
//! ```
//!
//! Fields are separated by single spaces. Agent and key names are
//! percent-escaped for space, tab, newline, `%`, `,` and `=`; the empty string is
//! written as a lone `%` and a literal `-` as `%2D`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{EventKind, HistoryEvent};
use crate::error::{Error, Result};

fn escape(s: &str) -> String {
    if s.is_empty() {
        return "%".into();
    }
    if s == "-" {
        return "%2D".into();
    }
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' => out.push_str("%25"),
            ' ' => out.push_str("%20"),
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            ',' => out.push_str("%2C"),
            '=' => out.push_str("%3D"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String> {
    if s == "%" {
        return Ok(String::new());
    }
    let mut out = Vec::with_capacity(s.len());
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s
                .get(i + 1..i + 3)
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| malformed(format!("bad escape in {s:?}")))?;
            out.push(hex);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| malformed(format!("invalid utf-8 in {s:?}")))
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedHistory(msg.into())
}

pub fn write_event(e: &HistoryEvent, out: &mut String) {
    let kind = match e.kind {
        EventKind::Get => "GET",
        EventKind::CommitOk => "OK",
        EventKind::CommitReject => "REJECT",
    };
    let _ = write!(
        out,
        "{} {kind} {} {} {} ",
        e.seq,
        escape(&e.agent),
        escape(&e.key),
        e.version
    );
    match e.expected {
        Some(v) => {
            let _ = write!(out, "{v} ");
        }
        None => out.push_str("- "),
    }
    if e.read_set.is_empty() {
        out.push('-');
    } else {
        let pairs: Vec<String> = e.read_set.iter().map(|(k, v)| format!("{}={v}", escape(k))).collect();
        out.push_str(&pairs.join(","));
    }
}

pub fn to_lines(history: &[HistoryEvent]) -> String {
    let mut out = String::new();
    for e in history {
        write_event(e, &mut out);
        out.push('\n');
    }
    out
}

fn parse_u64(s: &str, what: &str) -> Result<u64> {
    s.parse().map_err(|_| malformed(format!("bad {what}: {s:?}")))
}

pub fn parse_line(line: &str) -> Result<HistoryEvent> {
    let fields: Vec<&str> = line.split(' ').collect();
    let [seq, kind, agent, key, version, expected, reads] = fields[..] else {
        return Err(malformed(format!("expected 7 fields: {line:?}")));
    };
    let kind = match kind {
        "GET" => EventKind::Get,
        "OK" => EventKind::CommitOk,
        "REJECT" => EventKind::CommitReject,
        other => return Err(malformed(format!("unknown event kind {other:?}"))),
    };
    let expected = match expected {
        "-" => None,
        v => Some(parse_u64(v, "expected version")?),
    };
    let mut read_set = BTreeMap::new();
    if reads != "-" {
        for pair in reads.split(',') {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| malformed(format!("bad read-set pair {pair:?}")))?;
            read_set.insert(unescape(k)?, parse_u64(v, "read version")?);
        }
    }
    Ok(HistoryEvent {
        seq: parse_u64(seq, "seq")?,
        kind,
        agent: unescape(agent)?,
        key: unescape(key)?,
        version: parse_u64(version, "version")?,
        expected,
        read_set,
    })
}

/// Parse a whole trace; blank lines and lines starting with `#` are skipped.
pub fn parse_lines(text: &str) -> Result<Vec<HistoryEvent>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(parse_line)
        .collect()
}
