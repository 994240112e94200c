//! Security events and their on-disk log format.
//!
//! An event couples an envelope (strategy, SID, ECU, source, time, AUTOSAR
//! support) with per-service context data. Context field sets follow the
//! context-data table exactly: a field is present if and only if the table
//! defines it for the event's (SID, strategy) pair, with NRC present only on
//! negative-response IR events (circumstance-based IR events carry a
//! violation reason in the envelope instead).
//!
//! The log format is one event per line, `key=value` pairs in a pinned
//! order, context keys prefixed with `ctx.`:
//!
//! ```text
//! id=4 t=12000 strategy=IR sid=0x27 ecu=ecm source=0x0e80 ar=true ar_id=103 ctx.sid=0x27 ctx.sf=0x02 ctx.nrc=0x35
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The three logging strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Invalid Request: rejected or circumstance-violating requests.
    #[serde(rename = "IR")]
    Ir,
    /// Function Execution: successfully executed service calls.
    #[serde(rename = "FE")]
    Fe,
    /// Message Flow Inconsistency: traffic-level anomalies.
    #[serde(rename = "MFI")]
    Mfi,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Ir => "IR",
            Strategy::Fe => "FE",
            Strategy::Mfi => "MFI",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        match s {
            "IR" => Some(Strategy::Ir),
            "FE" => Some(Strategy::Fe),
            "MFI" => Some(Strategy::Mfi),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a request was logged as IR although the ECU answered positively (or
/// not at all).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Violation {
    /// State-changing request while the vehicle was moving.
    Speed,
    /// Protected service used without the required security level.
    Authorization,
    /// Development-only service used in production mode.
    Mode,
}

impl Violation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Violation::Speed => "speed",
            Violation::Authorization => "authorization",
            Violation::Mode => "mode",
        }
    }

    pub fn parse(s: &str) -> Option<Violation> {
        match s {
            "speed" => Some(Violation::Speed),
            "authorization" => Some(Violation::Authorization),
            "mode" => Some(Violation::Mode),
            _ => None,
        }
    }
}

/// Flow-inconsistency categories reported by the network monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MfiKind {
    UnexpectedSource,
    ModifiedInTransit,
    RoutedWithoutOriginal,
    BadSequence,
}

impl MfiKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MfiKind::UnexpectedSource => "unexpected-source",
            MfiKind::ModifiedInTransit => "modified-in-transit",
            MfiKind::RoutedWithoutOriginal => "routed-without-original",
            MfiKind::BadSequence => "bad-sequence",
        }
    }

    pub fn parse(s: &str) -> Option<MfiKind> {
        match s {
            "unexpected-source" => Some(MfiKind::UnexpectedSource),
            "modified-in-transit" => Some(MfiKind::ModifiedInTransit),
            "routed-without-original" => Some(MfiKind::RoutedWithoutOriginal),
            "bad-sequence" => Some(MfiKind::BadSequence),
            _ => None,
        }
    }
}

/// Per-service context data, one variant per context-table row shape.
///
/// List fields are always present (possibly empty); `Option` fields are
/// present exactly when the table's strategy superscript says so.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContextData {
    /// 0x10, 0x11, 0x19, 0x27, 0x28, 0x29, 0x85, 0x87: SID, SF, NRC.
    Subfunction { sid: u8, sf: u8, nrc: Option<u8> },
    /// 0x14: SID, groupOfDTC, MemorySelection, NRC.
    DtcClear { sid: u8, group_of_dtc: u32, memory_selection: u8, nrc: Option<u8> },
    /// 0x22: SID, DID1..n, NRC.
    DidList { sid: u8, dids: Vec<u16>, nrc: Option<u8> },
    /// 0x23, 0x34, 0x35: SID, memAddr, memSize, NRC.
    MemoryRange { sid: u8, mem_addr: u64, mem_size: u64, nrc: Option<u8> },
    /// 0x24: SID, DID, NRC.
    ScalingDid { sid: u8, did: u16, nrc: Option<u8> },
    /// 0x2A: SID, transmissionMode, periodicDID#1..n, NRC.
    Periodic { sid: u8, transmission_mode: u8, pdids: Vec<u8>, nrc: Option<u8> },
    /// 0x2C: SID, SF, dynamicallyDefinedDID, sourceDID#1..n, memAddr, memSize, NRC.
    DynamicDefine {
        sid: u8,
        sf: u8,
        dddid: u16,
        source_dids: Vec<u16>,
        mem_addr: u64,
        mem_size: u64,
        nrc: Option<u8>,
    },
    /// 0x2E: SID, DID, hash over dataRecord, NRC.
    DidWrite { sid: u8, did: u16, data_hash: String, nrc: Option<u8> },
    /// 0x2F: SID, DID, I/O controlParameter, NRC.
    IoControl { sid: u8, did: u16, io_control_parameter: u8, nrc: Option<u8> },
    /// 0x31: SID, SF, RID, NRC.
    Routine { sid: u8, sf: u8, rid: u16, nrc: Option<u8> },
    /// 0x36 (IR only): SID, blockSequenceCounter, NRC.
    TransferBlock { sid: u8, bsc: u8, nrc: Option<u8> },
    /// 0x37: SID, NRC (IR); hash over transferred data (FE).
    TransferExit { sid: u8, nrc: Option<u8>, transfer_hash: Option<String> },
    /// 0x38: SID, modeOfOperation, filePathAndName, NRC.
    FileTransfer { sid: u8, mode_of_operation: u8, file_path: String, nrc: Option<u8> },
    /// 0x3D: SID, memAddr, memSize, NRC (IR); hash over transferred data (FE).
    MemoryWrite {
        sid: u8,
        mem_addr: u64,
        mem_size: u64,
        nrc: Option<u8>,
        data_hash: Option<String>,
    },
    /// 0x84: SID, Apar, Signature/Encryption Calculation, req. SID, NRC.
    SecuredTransmission { sid: u8, apar: u16, crypto_calc: u8, wrapped_sid: u8, nrc: Option<u8> },
    /// 0x86: SID, SF, SID for response, NRC.
    OnEvent { sid: u8, sf: u8, response_sid: u8, nrc: Option<u8> },
    /// MFI events: observed SID, origin observed vs expected, free-text detail.
    Mfi {
        sid: u8,
        kind: MfiKind,
        observed_origin: u16,
        expected_origins: Vec<u16>,
        detail: String,
    },
}

fn hex2(v: u8) -> String {
    format!("0x{v:02x}")
}

fn hex4(v: u16) -> String {
    format!("0x{v:04x}")
}

fn hex_list16(vs: &[u16]) -> String {
    vs.iter().map(|v| hex4(*v)).collect::<Vec<_>>().join(",")
}

fn hex_list8(vs: &[u8]) -> String {
    vs.iter().map(|v| hex2(*v)).collect::<Vec<_>>().join(",")
}

impl ContextData {
    /// SID the context belongs to (mirrored in the event envelope).
    pub fn sid(&self) -> u8 {
        match self {
            ContextData::Subfunction { sid, .. }
            | ContextData::DtcClear { sid, .. }
            | ContextData::DidList { sid, .. }
            | ContextData::MemoryRange { sid, .. }
            | ContextData::ScalingDid { sid, .. }
            | ContextData::Periodic { sid, .. }
            | ContextData::DynamicDefine { sid, .. }
            | ContextData::DidWrite { sid, .. }
            | ContextData::IoControl { sid, .. }
            | ContextData::Routine { sid, .. }
            | ContextData::TransferBlock { sid, .. }
            | ContextData::TransferExit { sid, .. }
            | ContextData::FileTransfer { sid, .. }
            | ContextData::MemoryWrite { sid, .. }
            | ContextData::SecuredTransmission { sid, .. }
            | ContextData::OnEvent { sid, .. }
            | ContextData::Mfi { sid, .. } => *sid,
        }
    }

    pub fn nrc(&self) -> Option<u8> {
        match self {
            ContextData::Subfunction { nrc, .. }
            | ContextData::DtcClear { nrc, .. }
            | ContextData::DidList { nrc, .. }
            | ContextData::MemoryRange { nrc, .. }
            | ContextData::ScalingDid { nrc, .. }
            | ContextData::Periodic { nrc, .. }
            | ContextData::DynamicDefine { nrc, .. }
            | ContextData::DidWrite { nrc, .. }
            | ContextData::IoControl { nrc, .. }
            | ContextData::Routine { nrc, .. }
            | ContextData::TransferBlock { nrc, .. }
            | ContextData::TransferExit { nrc, .. }
            | ContextData::FileTransfer { nrc, .. }
            | ContextData::MemoryWrite { nrc, .. }
            | ContextData::SecuredTransmission { nrc, .. }
            | ContextData::OnEvent { nrc, .. } => *nrc,
            ContextData::Mfi { .. } => None,
        }
    }

    /// Serialized value of one context field, if present.
    pub fn field(&self, key: &str) -> Option<String> {
        self.fields().into_iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    /// Payload digest carried by the context (write/transfer hashes).
    pub fn digest(&self) -> Option<&str> {
        match self {
            ContextData::DidWrite { data_hash, .. } => Some(data_hash.as_str()),
            ContextData::TransferExit { transfer_hash, .. } => transfer_hash.as_deref(),
            ContextData::MemoryWrite { data_hash, .. } => data_hash.as_deref(),
            _ => None,
        }
    }

    /// Serialize to ordered key/value pairs, field order following the
    /// context-data table row.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        let mut out: Vec<(&'static str, String)> = Vec::new();
        let push_nrc = |out: &mut Vec<(&'static str, String)>, nrc: &Option<u8>| {
            if let Some(n) = nrc {
                out.push(("nrc", hex2(*n)));
            }
        };
        match self {
            ContextData::Subfunction { sid, sf, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("sf", hex2(*sf)));
                push_nrc(&mut out, nrc);
            }
            ContextData::DtcClear { sid, group_of_dtc, memory_selection, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("group_of_dtc", format!("0x{group_of_dtc:06x}")));
                out.push(("memory_selection", hex2(*memory_selection)));
                push_nrc(&mut out, nrc);
            }
            ContextData::DidList { sid, dids, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("dids", hex_list16(dids)));
                push_nrc(&mut out, nrc);
            }
            ContextData::MemoryRange { sid, mem_addr, mem_size, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("mem_addr", format!("0x{mem_addr:x}")));
                out.push(("mem_size", format!("0x{mem_size:x}")));
                push_nrc(&mut out, nrc);
            }
            ContextData::ScalingDid { sid, did, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("did", hex4(*did)));
                push_nrc(&mut out, nrc);
            }
            ContextData::Periodic { sid, transmission_mode, pdids, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("transmission_mode", hex2(*transmission_mode)));
                out.push(("pdids", hex_list8(pdids)));
                push_nrc(&mut out, nrc);
            }
            ContextData::DynamicDefine { sid, sf, dddid, source_dids, mem_addr, mem_size, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("sf", hex2(*sf)));
                out.push(("dddid", hex4(*dddid)));
                out.push(("source_dids", hex_list16(source_dids)));
                out.push(("mem_addr", format!("0x{mem_addr:x}")));
                out.push(("mem_size", format!("0x{mem_size:x}")));
                push_nrc(&mut out, nrc);
            }
            ContextData::DidWrite { sid, did, data_hash, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("did", hex4(*did)));
                out.push(("data_hash", data_hash.clone()));
                push_nrc(&mut out, nrc);
            }
            ContextData::IoControl { sid, did, io_control_parameter, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("did", hex4(*did)));
                out.push(("io_control_parameter", hex2(*io_control_parameter)));
                push_nrc(&mut out, nrc);
            }
            ContextData::Routine { sid, sf, rid, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("sf", hex2(*sf)));
                out.push(("rid", hex4(*rid)));
                push_nrc(&mut out, nrc);
            }
            ContextData::TransferBlock { sid, bsc, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("bsc", hex2(*bsc)));
                push_nrc(&mut out, nrc);
            }
            ContextData::TransferExit { sid, nrc, transfer_hash } => {
                out.push(("sid", hex2(*sid)));
                push_nrc(&mut out, nrc);
                if let Some(h) = transfer_hash {
                    out.push(("transfer_hash", h.clone()));
                }
            }
            ContextData::FileTransfer { sid, mode_of_operation, file_path, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("mode_of_operation", hex2(*mode_of_operation)));
                out.push(("file_path", file_path.clone()));
                push_nrc(&mut out, nrc);
            }
            ContextData::MemoryWrite { sid, mem_addr, mem_size, nrc, data_hash } => {
                out.push(("sid", hex2(*sid)));
                out.push(("mem_addr", format!("0x{mem_addr:x}")));
                out.push(("mem_size", format!("0x{mem_size:x}")));
                push_nrc(&mut out, nrc);
                if let Some(h) = data_hash {
                    out.push(("data_hash", h.clone()));
                }
            }
            ContextData::SecuredTransmission { sid, apar, crypto_calc, wrapped_sid, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("apar", hex4(*apar)));
                out.push(("crypto_calc", hex2(*crypto_calc)));
                out.push(("wrapped_sid", hex2(*wrapped_sid)));
                push_nrc(&mut out, nrc);
            }
            ContextData::OnEvent { sid, sf, response_sid, nrc } => {
                out.push(("sid", hex2(*sid)));
                out.push(("sf", hex2(*sf)));
                out.push(("response_sid", hex2(*response_sid)));
                push_nrc(&mut out, nrc);
            }
            ContextData::Mfi { sid, kind, observed_origin, expected_origins, detail } => {
                out.push(("sid", hex2(*sid)));
                out.push(("kind", kind.as_str().to_string()));
                out.push(("observed_origin", hex4(*observed_origin)));
                out.push(("expected_origins", hex_list16(expected_origins)));
                out.push(("detail", detail.clone()));
            }
        }
        out
    }
}

/// One security event as shipped to the backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecurityEvent {
    /// Stream-unique id, assigned in merged timestamp order.
    pub id: u64,
    pub strategy: Strategy,
    pub sid: u8,
    /// ECU the triggering request targeted.
    pub ecu: String,
    /// Logical source address of the requester.
    pub source: u16,
    pub timestamp_ms: u64,
    pub context: ContextData,
    /// IR only: set when the event was raised for a circumstance violation
    /// rather than a negative response.
    pub violation: Option<Violation>,
    /// Whether AUTOSAR standardizes a security event for this (SID, strategy).
    pub autosar: bool,
    /// Numeric AUTOSAR event id where one is pinned (103 for failed 0x27).
    pub autosar_event_id: Option<u32>,
}

impl SecurityEvent {
    /// Render the pinned single-line format.
    pub fn to_line(&self) -> String {
        let mut parts: Vec<String> = vec![
            format!("id={}", self.id),
            format!("t={}", self.timestamp_ms),
            format!("strategy={}", self.strategy),
            format!("sid={}", hex2(self.sid)),
            format!("ecu={}", quote(&self.ecu)),
            format!("source={}", hex4(self.source)),
            format!("ar={}", self.autosar),
        ];
        if let Some(ar_id) = self.autosar_event_id {
            parts.push(format!("ar_id={ar_id}"));
        }
        if let Some(v) = self.violation {
            parts.push(format!("violation={}", v.as_str()));
        }
        for (k, v) in self.context.fields() {
            parts.push(format!("ctx.{k}={}", quote(&v)));
        }
        parts.join(" ")
    }

    /// Parse a line produced by [`SecurityEvent::to_line`].
    pub fn from_line(line: &str) -> Result<SecurityEvent, EventLineError> {
        let pairs = split_pairs(line)?;
        let get = |key: &str| -> Option<&str> {
            pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
        };
        let req = |key: &str| -> Result<&str, EventLineError> {
            get(key).ok_or_else(|| EventLineError::MissingField(key.to_string()))
        };

        let id: u64 = req("id")?.parse().map_err(|_| EventLineError::Number("id".into()))?;
        let timestamp_ms: u64 =
            req("t")?.parse().map_err(|_| EventLineError::Number("t".into()))?;
        let strategy = Strategy::parse(req("strategy")?)
            .ok_or_else(|| EventLineError::Value("strategy".into()))?;
        let sid = parse_u8(req("sid")?).ok_or_else(|| EventLineError::Number("sid".into()))?;
        let ecu = req("ecu")?.to_string();
        let source =
            parse_u16(req("source")?).ok_or_else(|| EventLineError::Number("source".into()))?;
        let autosar: bool =
            req("ar")?.parse().map_err(|_| EventLineError::Value("ar".into()))?;
        let autosar_event_id = match get("ar_id") {
            Some(v) => Some(v.parse().map_err(|_| EventLineError::Number("ar_id".into()))?),
            None => None,
        };
        let violation = match get("violation") {
            Some(v) => {
                Some(Violation::parse(v).ok_or_else(|| EventLineError::Value("violation".into()))?)
            }
            None => None,
        };

        let ctx: Vec<(String, String)> = pairs
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("ctx.").map(|k| (k.to_string(), v.clone())))
            .collect();
        let context = context_from_fields(sid, strategy, &ctx)?;

        Ok(SecurityEvent {
            id,
            strategy,
            sid,
            ecu,
            source,
            timestamp_ms,
            context,
            violation,
            autosar,
            autosar_event_id,
        })
    }
}

/// Render an event stream, one line per event, trailing newline.
pub fn render_event_log(events: &[SecurityEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&ev.to_line());
        out.push('\n');
    }
    out
}

/// Parse an event log; blank lines and `#` comments are skipped.
pub fn parse_event_log(text: &str) -> Result<Vec<SecurityEvent>, EventLineError> {
    let mut events = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ev = SecurityEvent::from_line(line)
            .map_err(|e| EventLineError::AtLine(no + 1, Box::new(e)))?;
        events.push(ev);
    }
    Ok(events)
}

#[derive(Debug, Error, PartialEq)]
pub enum EventLineError {
    #[error("missing field {0}")]
    MissingField(String),
    #[error("unparseable number in field {0}")]
    Number(String),
    #[error("bad value for field {0}")]
    Value(String),
    #[error("unterminated quote")]
    UnterminatedQuote,
    #[error("token without '=' separator: {0}")]
    BareToken(String),
    #[error("unknown context shape for sid 0x{0:02x}")]
    UnknownShape(u8),
    #[error("line {0}: {1}")]
    AtLine(usize, Box<EventLineError>),
}

/// Quote a value when it contains whitespace, quotes or is empty.
pub(crate) fn quote(v: &str) -> String {
    if !v.is_empty() && !v.contains([' ', '\t', '"', '\\']) {
        return v.to_string();
    }
    let mut out = String::with_capacity(v.len() + 2);
    out.push('"');
    for c in v.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Split a `key=value` line honoring double quotes.
pub(crate) fn split_pairs(line: &str) -> Result<Vec<(String, String)>, EventLineError> {
    let mut pairs = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while matches!(chars.peek(), Some(c) if c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        for c in chars.by_ref() {
            if c == '=' {
                break;
            }
            if c.is_whitespace() {
                return Err(EventLineError::BareToken(key));
            }
            key.push(c);
        }
        let mut value = String::new();
        if matches!(chars.peek(), Some('"')) {
            chars.next();
            let mut closed = false;
            while let Some(c) = chars.next() {
                match c {
                    '\\' => match chars.next() {
                        Some(e) => value.push(e),
                        None => return Err(EventLineError::UnterminatedQuote),
                    },
                    '"' => {
                        closed = true;
                        break;
                    }
                    _ => value.push(c),
                }
            }
            if !closed {
                return Err(EventLineError::UnterminatedQuote);
            }
        } else {
            while matches!(chars.peek(), Some(c) if !c.is_whitespace()) {
                value.push(chars.next().unwrap());
            }
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

pub(crate) fn parse_u8(s: &str) -> Option<u8> {
    parse_u64(s).and_then(|v| u8::try_from(v).ok())
}

pub(crate) fn parse_u16(s: &str) -> Option<u16> {
    parse_u64(s).and_then(|v| u16::try_from(v).ok())
}

pub(crate) fn parse_u32(s: &str) -> Option<u32> {
    parse_u64(s).and_then(|v| u32::try_from(v).ok())
}

pub(crate) fn parse_u64(s: &str) -> Option<u64> {
    if let Some(hex) = s.strip_prefix("0x") {
        u64::from_str_radix(hex, 16).ok()
    } else {
        s.parse().ok()
    }
}

fn parse_list16(s: &str) -> Option<Vec<u16>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(parse_u16).collect()
}

fn parse_list8(s: &str) -> Option<Vec<u8>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(parse_u8).collect()
}

/// Rebuild a [`ContextData`] from its serialized fields.
fn context_from_fields(
    sid: u8,
    strategy: Strategy,
    ctx: &[(String, String)],
) -> Result<ContextData, EventLineError> {
    let get = |key: &str| -> Option<&str> {
        ctx.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    };
    let num8 = |key: &str| -> Result<u8, EventLineError> {
        get(key)
            .and_then(parse_u8)
            .ok_or_else(|| EventLineError::Number(format!("ctx.{key}")))
    };
    let num16 = |key: &str| -> Result<u16, EventLineError> {
        get(key)
            .and_then(parse_u16)
            .ok_or_else(|| EventLineError::Number(format!("ctx.{key}")))
    };
    let num64 = |key: &str| -> Result<u64, EventLineError> {
        get(key)
            .and_then(parse_u64)
            .ok_or_else(|| EventLineError::Number(format!("ctx.{key}")))
    };
    let nrc = match get("nrc") {
        Some(v) => Some(parse_u8(v).ok_or_else(|| EventLineError::Number("ctx.nrc".into()))?),
        None => None,
    };

    if strategy == Strategy::Mfi {
        let kind = get("kind")
            .and_then(MfiKind::parse)
            .ok_or_else(|| EventLineError::Value("ctx.kind".into()))?;
        return Ok(ContextData::Mfi {
            sid,
            kind,
            observed_origin: num16("observed_origin")?,
            expected_origins: get("expected_origins")
                .and_then(parse_list16)
                .ok_or_else(|| EventLineError::Number("ctx.expected_origins".into()))?,
            detail: get("detail").unwrap_or_default().to_string(),
        });
    }

    let data = match sid {
        0x10 | 0x11 | 0x19 | 0x27 | 0x28 | 0x29 | 0x85 | 0x87 => {
            ContextData::Subfunction { sid, sf: num8("sf")?, nrc }
        }
        0x14 => ContextData::DtcClear {
            sid,
            group_of_dtc: get("group_of_dtc")
                .and_then(parse_u32)
                .ok_or_else(|| EventLineError::Number("ctx.group_of_dtc".into()))?,
            memory_selection: num8("memory_selection")?,
            nrc,
        },
        0x22 => ContextData::DidList {
            sid,
            dids: get("dids")
                .and_then(parse_list16)
                .ok_or_else(|| EventLineError::Number("ctx.dids".into()))?,
            nrc,
        },
        0x23 | 0x34 | 0x35 => ContextData::MemoryRange {
            sid,
            mem_addr: num64("mem_addr")?,
            mem_size: num64("mem_size")?,
            nrc,
        },
        0x24 => ContextData::ScalingDid { sid, did: num16("did")?, nrc },
        0x2A => ContextData::Periodic {
            sid,
            transmission_mode: num8("transmission_mode")?,
            pdids: get("pdids")
                .and_then(parse_list8)
                .ok_or_else(|| EventLineError::Number("ctx.pdids".into()))?,
            nrc,
        },
        0x2C => ContextData::DynamicDefine {
            sid,
            sf: num8("sf")?,
            dddid: num16("dddid")?,
            source_dids: get("source_dids")
                .and_then(parse_list16)
                .ok_or_else(|| EventLineError::Number("ctx.source_dids".into()))?,
            mem_addr: num64("mem_addr")?,
            mem_size: num64("mem_size")?,
            nrc,
        },
        0x2E => ContextData::DidWrite {
            sid,
            did: num16("did")?,
            data_hash: get("data_hash").unwrap_or_default().to_string(),
            nrc,
        },
        0x2F => ContextData::IoControl {
            sid,
            did: num16("did")?,
            io_control_parameter: num8("io_control_parameter")?,
            nrc,
        },
        0x31 => ContextData::Routine { sid, sf: num8("sf")?, rid: num16("rid")?, nrc },
        0x36 => ContextData::TransferBlock { sid, bsc: num8("bsc")?, nrc },
        0x37 => ContextData::TransferExit {
            sid,
            nrc,
            transfer_hash: get("transfer_hash").map(|s| s.to_string()),
        },
        0x38 => ContextData::FileTransfer {
            sid,
            mode_of_operation: num8("mode_of_operation")?,
            file_path: get("file_path").unwrap_or_default().to_string(),
            nrc,
        },
        0x3D => ContextData::MemoryWrite {
            sid,
            mem_addr: num64("mem_addr")?,
            mem_size: num64("mem_size")?,
            nrc,
            data_hash: get("data_hash").map(|s| s.to_string()),
        },
        0x84 => ContextData::SecuredTransmission {
            sid,
            apar: num16("apar")?,
            crypto_calc: num8("crypto_calc")?,
            wrapped_sid: num8("wrapped_sid")?,
            nrc,
        },
        0x86 => ContextData::OnEvent {
            sid,
            sf: num8("sf")?,
            response_sid: num8("response_sid")?,
            nrc,
        },
        other => return Err(EventLineError::UnknownShape(other)),
    };
    Ok(data)
}

// ===== tests =====
