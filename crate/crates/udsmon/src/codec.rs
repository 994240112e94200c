//! UDS (ISO 14229) application-layer codec.
//!
//! Covers the service registry (27 services), request/response parsing and
//! encoding, and the wire constants used elsewhere in the pipeline. Transport
//! framing (CAN-TP, DoIP) is out of scope: inputs are reassembled application
//! payloads.

use thiserror::Error;

/// Well-known service identifiers.
pub mod sid {
    pub const DIAGNOSTIC_SESSION_CONTROL: u8 = 0x10;
    pub const ECU_RESET: u8 = 0x11;
    pub const CLEAR_DIAGNOSTIC_INFORMATION: u8 = 0x14;
    pub const READ_DTC_INFORMATION: u8 = 0x19;
    pub const READ_DATA_BY_IDENTIFIER: u8 = 0x22;
    pub const READ_MEMORY_BY_ADDRESS: u8 = 0x23;
    pub const READ_SCALING_DATA_BY_IDENTIFIER: u8 = 0x24;
    pub const SECURITY_ACCESS: u8 = 0x27;
    pub const COMMUNICATION_CONTROL: u8 = 0x28;
    pub const AUTHENTICATION: u8 = 0x29;
    pub const READ_DATA_BY_PERIODIC_IDENTIFIER: u8 = 0x2A;
    pub const DYNAMICALLY_DEFINE_DATA_IDENTIFIER: u8 = 0x2C;
    pub const WRITE_DATA_BY_IDENTIFIER: u8 = 0x2E;
    pub const INPUT_OUTPUT_CONTROL_BY_IDENTIFIER: u8 = 0x2F;
    pub const ROUTINE_CONTROL: u8 = 0x31;
    pub const REQUEST_DOWNLOAD: u8 = 0x34;
    pub const REQUEST_UPLOAD: u8 = 0x35;
    pub const TRANSFER_DATA: u8 = 0x36;
    pub const REQUEST_TRANSFER_EXIT: u8 = 0x37;
    pub const REQUEST_FILE_TRANSFER: u8 = 0x38;
    pub const WRITE_MEMORY_BY_ADDRESS: u8 = 0x3D;
    pub const TESTER_PRESENT: u8 = 0x3E;
    pub const ACCESS_TIMING_PARAMETERS: u8 = 0x83;
    pub const SECURED_DATA_TRANSMISSION: u8 = 0x84;
    pub const CONTROL_DTC_SETTING: u8 = 0x85;
    pub const RESPONSE_ON_EVENT: u8 = 0x86;
    pub const LINK_CONTROL: u8 = 0x87;
}

/// Well-known negative response codes. NRCs are carried opaquely through the
/// pipeline; these names exist for rule files and tests.
pub mod nrc {
    pub const SERVICE_NOT_SUPPORTED: u8 = 0x11;
    pub const SUBFUNCTION_NOT_SUPPORTED: u8 = 0x12;
    pub const INCORRECT_MESSAGE_LENGTH: u8 = 0x13;
    pub const BUSY_REPEAT_REQUEST: u8 = 0x21;
    pub const CONDITIONS_NOT_CORRECT: u8 = 0x22;
    pub const REQUEST_SEQUENCE_ERROR: u8 = 0x24;
    pub const REQUEST_OUT_OF_RANGE: u8 = 0x31;
    pub const SECURITY_ACCESS_DENIED: u8 = 0x33;
    pub const INVALID_KEY: u8 = 0x35;
    pub const EXCEEDED_NUMBER_OF_ATTEMPTS: u8 = 0x36;
    pub const REQUIRED_TIME_DELAY_NOT_EXPIRED: u8 = 0x37;
    pub const UPLOAD_DOWNLOAD_NOT_ACCEPTED: u8 = 0x70;
    pub const GENERAL_PROGRAMMING_FAILURE: u8 = 0x72;
    pub const WRONG_BLOCK_SEQUENCE_COUNTER: u8 = 0x73;
}

/// Byte marking a negative response.
pub const NEGATIVE_RESPONSE_MARKER: u8 = 0x7F;
/// Offset added to the request SID in a positive response.
pub const POSITIVE_RESPONSE_OFFSET: u8 = 0x40;

/// One entry of the UDS service registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceDescriptor {
    pub sid: u8,
    /// Abbreviation, e.g. "RDBI".
    pub short: &'static str,
    /// Full service name, e.g. "ReadDataByIdentifier".
    pub name: &'static str,
    /// Whether the first request byte after the SID is a subfunction.
    pub has_subfunction: bool,
    /// Whether the context-data table defines logging fields for the service
    /// (26 of the 27 services; AccessTimingParameters has no row).
    pub in_context_table: bool,
}

/// The 27 UDS services tracked by the monitor.
pub const SERVICES: [ServiceDescriptor; 27] = [
    svc(sid::DIAGNOSTIC_SESSION_CONTROL, "DSC", "DiagnosticSessionControl", true, true),
    svc(sid::ECU_RESET, "ER", "ECUReset", true, true),
    svc(sid::CLEAR_DIAGNOSTIC_INFORMATION, "CDTCI", "ClearDiagnosticInformation", false, true),
    svc(sid::READ_DTC_INFORMATION, "RDTCI", "ReadDTCInformation", true, true),
    svc(sid::READ_DATA_BY_IDENTIFIER, "RDBI", "ReadDataByIdentifier", false, true),
    svc(sid::READ_MEMORY_BY_ADDRESS, "RMBA", "ReadMemoryByAddress", false, true),
    svc(sid::READ_SCALING_DATA_BY_IDENTIFIER, "RSDBI", "ReadScalingDataByIdentifier", false, true),
    svc(sid::SECURITY_ACCESS, "SA", "SecurityAccess", true, true),
    svc(sid::COMMUNICATION_CONTROL, "CC", "CommunicationControl", true, true),
    svc(sid::AUTHENTICATION, "AUTH", "Authentication", true, true),
    svc(sid::READ_DATA_BY_PERIODIC_IDENTIFIER, "RDBPI", "ReadDataByPeriodicIdentifier", false, true),
    svc(sid::DYNAMICALLY_DEFINE_DATA_IDENTIFIER, "DDDID", "DynamicallyDefineDataIdentifier", true, true),
    svc(sid::WRITE_DATA_BY_IDENTIFIER, "WDBI", "WriteDataByIdentifier", false, true),
    svc(sid::INPUT_OUTPUT_CONTROL_BY_IDENTIFIER, "IOCBI", "InputOutputControlByIdentifier", false, true),
    svc(sid::ROUTINE_CONTROL, "RC", "RoutineControl", true, true),
    svc(sid::REQUEST_DOWNLOAD, "RD", "RequestDownload", false, true),
    svc(sid::REQUEST_UPLOAD, "RU", "RequestUpload", false, true),
    svc(sid::TRANSFER_DATA, "TD", "TransferData", false, true),
    svc(sid::REQUEST_TRANSFER_EXIT, "RTE", "RequestTransferExit", false, true),
    svc(sid::REQUEST_FILE_TRANSFER, "RFT", "RequestFileTransfer", false, true),
    svc(sid::WRITE_MEMORY_BY_ADDRESS, "WMBA", "WriteMemoryByAddress", false, true),
    svc(sid::TESTER_PRESENT, "TP", "TesterPresent", true, true),
    svc(sid::ACCESS_TIMING_PARAMETERS, "ATP", "AccessTimingParameters", true, false),
    svc(sid::SECURED_DATA_TRANSMISSION, "SDT", "SecuredDataTransmission", false, true),
    svc(sid::CONTROL_DTC_SETTING, "CDTCS", "ControlDTCSetting", true, true),
    svc(sid::RESPONSE_ON_EVENT, "ROE", "ResponseOnEvent", true, true),
    svc(sid::LINK_CONTROL, "LC", "LinkControl", true, true),
];

const fn svc(
    sid: u8,
    short: &'static str,
    name: &'static str,
    has_subfunction: bool,
    in_context_table: bool,
) -> ServiceDescriptor {
    ServiceDescriptor { sid, short, name, has_subfunction, in_context_table }
}

/// Look up the registry entry for a SID.
pub fn service_info(sid: u8) -> Option<&'static ServiceDescriptor> {
    SERVICES.iter().find(|s| s.sid == sid)
}

/// SIDs with a context-data table row, ascending.
pub fn context_table_sids() -> impl Iterator<Item = u8> {
    SERVICES.iter().filter(|s| s.in_context_table).map(|s| s.sid)
}

/// Decoding failures. Parsing is strict only where the wire format is
/// unambiguous; unknown services and opaque payloads pass through.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("empty frame")]
    Empty,
    #[error("0x7f is the negative-response marker, not a request SID")]
    ReservedRequestSid,
    #[error("negative response must be exactly 3 bytes [0x7f, sid, nrc], got {0}")]
    MalformedNegativeResponse(usize),
    #[error("first byte 0x{0:02x} is below the positive-response range")]
    NotAResponse(u8),
    #[error("positive response SID 0x{0:02x} cannot be encoded (collides with 0x7f or exceeds 0xbf)")]
    UnencodableResponseSid(u8),
    #[error("odd-length hex payload")]
    OddHexLength,
    #[error("invalid hex byte at offset {0}")]
    InvalidHex(usize),
}

/// A decoded UDS request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdsRequest {
    pub sid: u8,
    /// Present when the registry marks the service as subfunction-bearing and
    /// the frame carries at least two bytes. The suppress-positive-response
    /// bit is preserved as received.
    pub subfunction: Option<u8>,
    /// Bytes after SID (and subfunction, when split off).
    pub payload: Vec<u8>,
}

impl UdsRequest {
    /// Build a request for a subfunction-less service.
    pub fn plain(sid: u8, payload: &[u8]) -> Self {
        UdsRequest { sid, subfunction: None, payload: payload.to_vec() }
    }

    /// Build a request for a subfunction-bearing service.
    pub fn with_subfunction(sid: u8, sf: u8, payload: &[u8]) -> Self {
        UdsRequest { sid, subfunction: Some(sf), payload: payload.to_vec() }
    }
}

/// A decoded UDS response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UdsResponse {
    /// `[sid + 0x40, data...]`
    Positive { sid: u8, data: Vec<u8> },
    /// `[0x7f, sid, nrc]`
    Negative { sid: u8, nrc: u8 },
}

impl UdsResponse {
    pub fn sid(&self) -> u8 {
        match self {
            UdsResponse::Positive { sid, .. } => *sid,
            UdsResponse::Negative { sid, .. } => *sid,
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, UdsResponse::Positive { .. })
    }

    pub fn nrc(&self) -> Option<u8> {
        match self {
            UdsResponse::Negative { nrc, .. } => Some(*nrc),
            UdsResponse::Positive { .. } => None,
        }
    }
}

/// One observed request/response pair on a diagnostic link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdsExchange {
    /// Trace-relative time in milliseconds.
    pub timestamp_ms: u64,
    /// Link the exchange was captured on, e.g. "obd" or "powertrain".
    pub link: String,
    /// Logical source address of the requester.
    pub source: u16,
    /// Target ECU identifier.
    pub target_ecu: String,
    pub request: UdsRequest,
    /// None when the ECU stayed silent (or the response was suppressed).
    pub response: Option<UdsResponse>,
}

/// Decode a request frame. Unknown SIDs are accepted with an opaque payload;
/// only the empty frame and the reserved 0x7f first byte are rejected.
pub fn parse_request(bytes: &[u8]) -> Result<UdsRequest, CodecError> {
    let (&first, rest) = bytes.split_first().ok_or(CodecError::Empty)?;
    if first == NEGATIVE_RESPONSE_MARKER {
        return Err(CodecError::ReservedRequestSid);
    }
    let split_sf = service_info(first).is_some_and(|s| s.has_subfunction);
    let (subfunction, payload) = match (split_sf, rest.split_first()) {
        (true, Some((&sf, tail))) => (Some(sf), tail.to_vec()),
        _ => (None, rest.to_vec()),
    };
    Ok(UdsRequest { sid: first, subfunction, payload })
}

/// Decode a response frame. `[0x7f, sid, nrc]` (exactly three bytes) is
/// negative; a first byte in `0x40..=0xff` excluding 0x7f is positive with
/// `sid = first - 0x40`; anything below 0x40 is not a response.
pub fn parse_response(bytes: &[u8]) -> Result<UdsResponse, CodecError> {
    let (&first, rest) = bytes.split_first().ok_or(CodecError::Empty)?;
    if first == NEGATIVE_RESPONSE_MARKER {
        if bytes.len() != 3 {
            return Err(CodecError::MalformedNegativeResponse(bytes.len()));
        }
        return Ok(UdsResponse::Negative { sid: bytes[1], nrc: bytes[2] });
    }
    if first < POSITIVE_RESPONSE_OFFSET {
        return Err(CodecError::NotAResponse(first));
    }
    Ok(UdsResponse::Positive { sid: first - POSITIVE_RESPONSE_OFFSET, data: rest.to_vec() })
}

/// Encode a request back to wire bytes. Inverse of [`parse_request`] for any
/// request it produced.
pub fn encode_request(req: &UdsRequest) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 + req.payload.len());
    out.push(req.sid);
    if let Some(sf) = req.subfunction {
        out.push(sf);
    }
    out.extend_from_slice(&req.payload);
    out
}

/// Encode a response back to wire bytes. Positive responses require
/// `sid <= 0xbf` and `sid != 0x3f` (0x3f + 0x40 would collide with the
/// negative-response marker).
pub fn encode_response(resp: &UdsResponse) -> Result<Vec<u8>, CodecError> {
    match resp {
        UdsResponse::Positive { sid, data } => {
            if *sid > 0xBF || *sid == 0x3F {
                return Err(CodecError::UnencodableResponseSid(*sid));
            }
            let mut out = Vec::with_capacity(1 + data.len());
            out.push(sid + POSITIVE_RESPONSE_OFFSET);
            out.extend_from_slice(data);
            Ok(out)
        }
        UdsResponse::Negative { sid, nrc } => Ok(vec![NEGATIVE_RESPONSE_MARKER, *sid, *nrc]),
    }
}

/// Decode a lowercase/uppercase hex string without separators into bytes.
pub fn parse_hex(s: &str) -> Result<Vec<u8>, CodecError> {
    if !s.len().is_multiple_of(2) {
        return Err(CodecError::OddHexLength);
    }
    hex::decode(s).map_err(|e| match e {
        hex::FromHexError::InvalidHexCharacter { index, .. } => CodecError::InvalidHex(index),
        _ => CodecError::OddHexLength,
    })
}

/// Encode bytes as lowercase hex without separators.
pub fn to_hex(bytes: &[u8]) -> String {
    hex::encode(bytes)
}

// ===== tests =====
