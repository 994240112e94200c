//! Line-oriented trace files for captured UDS exchanges.
//!
//! One exchange per line as `key=value` pairs:
//!
//! ```text
//! t=1200 link=obd src=0x0e80 ecu=ecm req=2701 resp=67011234
//! ```
//!
//! `resp=` is omitted when no response was observed. Lines starting with `#`
//! and blank lines are ignored, so traces can carry inline commentary.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::codec::{
    encode_request, encode_response, parse_hex, parse_request, parse_response, to_hex, CodecError,
    UdsExchange,
};
use crate::event::{parse_u16, parse_u64, quote, split_pairs};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: missing field {field}")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: bad value for {field}: {value}")]
    BadValue { line: usize, field: &'static str, value: String },
    #[error("line {0}: malformed key=value syntax")]
    Syntax(usize),
    #[error("line {1}: {0}")]
    Codec(CodecError, usize),
}

/// Render one exchange as a trace line.
pub fn exchange_to_line(ex: &UdsExchange) -> String {
    let mut line = format!(
        "t={} link={} src=0x{:04x} ecu={} req={}",
        ex.timestamp_ms,
        quote(&ex.link),
        ex.source,
        quote(&ex.target_ecu),
        to_hex(&encode_request(&ex.request)),
    );
    if let Some(resp) = &ex.response {
        line.push_str(&format!(" resp={}", to_hex(&encode_response(resp).unwrap_or_default())));
    }
    line
}

/// Parse one trace line (caller has already stripped comments/blanks).
pub fn exchange_from_line(line: &str, lineno: usize) -> Result<UdsExchange, TraceError> {
    let pairs = split_pairs(line).map_err(|_| TraceError::Syntax(lineno))?;
    let get = |field: &'static str| -> Result<&str, TraceError> {
        pairs
            .iter()
            .find(|(k, _)| k == field)
            .map(|(_, v)| v.as_str())
            .ok_or(TraceError::MissingField { line: lineno, field })
    };
    let bad = |field: &'static str, value: &str| TraceError::BadValue {
        line: lineno,
        field,
        value: value.to_string(),
    };

    let t = get("t")?;
    let timestamp_ms = parse_u64(t).ok_or_else(|| bad("t", t))?;
    let link = get("link")?.to_string();
    let src = get("src")?;
    let source = parse_u16(src).ok_or_else(|| bad("src", src))?;
    let target_ecu = get("ecu")?.to_string();

    let req_hex = get("req")?;
    let req_bytes = parse_hex(req_hex).map_err(|e| TraceError::Codec(e, lineno))?;
    let request = parse_request(&req_bytes).map_err(|e| TraceError::Codec(e, lineno))?;

    let response = match pairs.iter().find(|(k, _)| k == "resp") {
        None => None,
        Some((_, v)) => {
            let bytes = parse_hex(v).map_err(|e| TraceError::Codec(e, lineno))?;
            Some(parse_response(&bytes).map_err(|e| TraceError::Codec(e, lineno))?)
        }
    };

    Ok(UdsExchange { timestamp_ms, link, source, target_ecu, request, response })
}

/// Render a whole trace, one line per exchange.
pub fn render_trace(trace: &[UdsExchange]) -> String {
    let mut out = String::new();
    for ex in trace {
        out.push_str(&exchange_to_line(ex));
        out.push('\n');
    }
    out
}

/// Parse a whole trace file body.
pub fn parse_trace(text: &str) -> Result<Vec<UdsExchange>, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(exchange_from_line(line, i + 1)?);
    }
    Ok(out)
}

pub fn load_trace(path: &Path) -> Result<Vec<UdsExchange>, TraceError> {
    parse_trace(&fs::read_to_string(path)?)
}

pub fn save_trace(path: &Path, trace: &[UdsExchange]) -> Result<(), TraceError> {
    Ok(fs::write(path, render_trace(trace))?)
}

// ===== tests =====

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{UdsRequest, UdsResponse};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample() -> UdsExchange {
        UdsExchange {
            timestamp_ms: 1_200,
            link: "obd".into(),
            source: 0x0E80,
            target_ecu: "ecm".into(),
            request: UdsRequest::with_subfunction(0x27, 0x01, &[]),
            response: Some(UdsResponse::Positive { sid: 0x27, data: vec![0x01, 0x12, 0x34] }),
        }
    }

    #[test]
    fn line_roundtrip() {
        let ex = sample();
        let line = exchange_to_line(&ex);
        assert_eq!(line, "t=1200 link=obd src=0x0e80 ecu=ecm req=2701 resp=67011234");
        assert_eq!(exchange_from_line(&line, 1).unwrap(), ex);
    }

    #[test]
    fn no_response_roundtrip() {
        let mut ex = sample();
        ex.response = None;
        let line = exchange_to_line(&ex);
        assert!(!line.contains("resp="));
        assert_eq!(exchange_from_line(&line, 1).unwrap(), ex);
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let body = "# capture start\n\nt=5 link=obd src=0x0e80 ecu=ecm req=3e00\n";
        let trace = parse_trace(body).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].request.sid, 0x3E);
    }

    #[test]
    fn negative_response_line() {
        let mut ex = sample();
        ex.response = Some(UdsResponse::Negative { sid: 0x27, nrc: 0x35 });
        let line = exchange_to_line(&ex);
        assert!(line.ends_with("resp=7f2735"));
        assert_eq!(exchange_from_line(&line, 1).unwrap(), ex);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let body = "t=5 link=obd src=0x0e80 ecu=ecm req=3e00\nt=6 link=obd src=nope ecu=ecm req=3e00\n";
        match parse_trace(body) {
            Err(TraceError::BadValue { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "src");
            }
            other => panic!("expected BadValue, got {other:?}"),
        }
        match parse_trace("req=3e00") {
            Err(TraceError::MissingField { field: "t", .. }) => {}
            other => panic!("expected MissingField, got {other:?}"),
        }
    }

    #[test]
    fn random_traces_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let sids = [0x10u8, 0x22, 0x27, 0x2E, 0x31, 0x34, 0x36, 0x3E];
        for _ in 0..200 {
            let mut trace = Vec::new();
            for t in 0..rng.random_range(1..20u64) {
                let sid = sids[rng.random_range(0..sids.len())];
                let mut req = vec![sid];
                for _ in 0..rng.random_range(0..5u8) {
                    req.push(rng.random());
                }
                let response = match rng.random_range(0..3u8) {
                    0 => None,
                    1 => Some(UdsResponse::Negative { sid, nrc: rng.random_range(0x10..0x90) }),
                    _ => Some(UdsResponse::Positive {
                        sid,
                        data: (0..rng.random_range(0..4u8)).map(|_| rng.random()).collect(),
                    }),
                };
                trace.push(UdsExchange {
                    timestamp_ms: t * 10,
                    link: "obd".into(),
                    source: rng.random(),
                    target_ecu: format!("ecu-{}", rng.random_range(0..4u8)),
                    request: parse_request(&req).unwrap(),
                    response,
                });
            }
            let text = render_trace(&trace);
            assert_eq!(parse_trace(&text).unwrap(), trace);
        }
    }
}
