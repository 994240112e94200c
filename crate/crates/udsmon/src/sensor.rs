//! Vehicle-side logging strategies Invalid Request (IR) and Function
//! Execution (FE).
//!
//! [`evaluate_exchange`] is a pure function of (policy, exchange, state): an
//! IR event is emitted iff IR is enabled for the SID and the response is
//! negative or a circumstance check fails; an FE event iff FE is enabled and
//! the response is positive. TesterPresent (0x3E) never logs. Context fields
//! follow the context-data table exactly; request/response payloads are never
//! embedded, only derived fields and digests.
//!
//! [`Sensor`] wraps the pure core with the little state a HIDS vantage point
//! actually has: active sessions, security-access unlocks, and accumulated
//! 0x36 transfer data so the 0x37 "hash over transferred data" covers the
//! blocks of the surrounding download.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{self, service_info, UdsExchange, UdsRequest, UdsResponse};
use crate::event::{ContextData, SecurityEvent, Strategy, Violation};
use crate::store::Mode;

/// AUTOSAR event id for a failed SecurityAccess attempt.
pub const SEV_UDS_SECURITY_ACCESS_FAILED: u32 = 103;

/// SIDs whose IR/FE logging is already standardized by AUTOSAR.
pub const AR_SUPPORTED_SIDS: [u8; 13] =
    [0x11, 0x14, 0x27, 0x28, 0x29, 0x2E, 0x2F, 0x31, 0x34, 0x35, 0x38, 0x3D, 0x85];

/// Known context deltas between the table's fields and the standardized
/// AUTOSAR events (which otherwise align).
pub const AUTOSAR_CONTEXT_DELTAS: &[(u8, &str)] = &[
    (0x2E, "standardized event carries no hash over dataRecord"),
    (0x3D, "standardized event carries no hash over transferred data"),
];

/// AUTOSAR additionally includes the logical client source address in every
/// UDS security event.
pub const AUTOSAR_ADDS_CLIENT_ADDRESS: &str =
    "standardized events add the logical client source address";

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("no context data defined for sid 0x{0:02x}")]
    NoContextDefined(u8),
    #[error("policy io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("policy parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("policy serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid policy: {0}")]
    Invalid(String),
}

/// AUTOSAR support level for a SID.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArSupport {
    None,
    IrFe,
}

/// AUTOSAR support per the context-data table's "AR support" column.
pub fn autosar_support(sid: u8) -> ArSupport {
    if AR_SUPPORTED_SIDS.contains(&sid) {
        ArSupport::IrFe
    } else {
        ArSupport::None
    }
}

/// True when the context table defines IR logging for the SID (all rows
/// except the 0x3E "n/a" row).
pub fn ir_defined(sid: u8) -> bool {
    service_info(sid).is_some_and(|s| s.in_context_table) && sid != codec::sid::TESTER_PRESENT
}

/// True when the context table defines FE logging for the SID (0x36 is
/// marked IR-only, 0x3E is "n/a").
pub fn fe_defined(sid: u8) -> bool {
    ir_defined(sid) && sid != codec::sid::TRANSFER_DATA
}

/// Fixed-length digest over a payload, as lowercase hex. Used for the
/// dataRecord and transferred-data hash fields.
pub fn hash_payload(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Per-SID strategy toggles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceToggle {
    pub sid: u8,
    #[serde(default)]
    pub ir: bool,
    #[serde(default)]
    pub fe: bool,
    #[serde(default)]
    pub mfi: bool,
}

/// A SID requiring a prior security-access unlock at `level` or higher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectedSid {
    pub sid: u8,
    pub level: u8,
}

/// Which strategies are active per SID, plus the circumstance-check
/// configuration. Sensitive-identifier data itself lives in the context
/// store; the policy only decides what gets logged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggingPolicy {
    /// Speed above which state-changing requests violate circumstances.
    pub speed_threshold_kph: u32,
    /// SIDs subject to the speed check.
    pub state_changing: Vec<u8>,
    /// SIDs only legitimate on development builds.
    pub dev_only: Vec<u8>,
    pub services: Vec<ServiceToggle>,
    pub protected: Vec<ProtectedSid>,
}

impl Default for LoggingPolicy {
    fn default() -> Self {
        let services = codec::SERVICES
            .iter()
            .map(|s| ServiceToggle {
                sid: s.sid,
                ir: ir_defined(s.sid),
                fe: fe_defined(s.sid),
                mfi: true,
            })
            .collect();
        LoggingPolicy {
            speed_threshold_kph: 5,
            state_changing: vec![0x11, 0x2E, 0x2F, 0x31, 0x34, 0x36, 0x37, 0x38, 0x3D, 0x85],
            dev_only: vec![0x23, 0x35],
            services,
            protected: [0x2E, 0x2F, 0x31, 0x34, 0x35, 0x36, 0x37, 0x38, 0x3D]
                .iter()
                .map(|&sid| ProtectedSid { sid, level: 1 })
                .collect(),
        }
    }
}

impl LoggingPolicy {
    /// A policy with everything switched off; useful as a base for tests.
    pub fn silent() -> Self {
        LoggingPolicy {
            speed_threshold_kph: 5,
            state_changing: Vec::new(),
            dev_only: Vec::new(),
            services: Vec::new(),
            protected: Vec::new(),
        }
    }

    fn toggle(&self, sid: u8) -> Option<&ServiceToggle> {
        self.services.iter().find(|t| t.sid == sid)
    }

    pub fn ir_enabled(&self, sid: u8) -> bool {
        self.toggle(sid).is_some_and(|t| t.ir)
    }

    pub fn fe_enabled(&self, sid: u8) -> bool {
        self.toggle(sid).is_some_and(|t| t.fe)
    }

    pub fn mfi_enabled(&self, sid: u8) -> bool {
        self.toggle(sid).is_some_and(|t| t.mfi)
    }

    /// Required security-access level for a protected SID.
    pub fn required_level(&self, sid: u8) -> Option<u8> {
        self.protected.iter().find(|p| p.sid == sid).map(|p| p.level)
    }

    /// Every SID mentioned anywhere must be a registry SID.
    pub fn validate(&self) -> Result<(), SensorError> {
        let all = self
            .services
            .iter()
            .map(|t| t.sid)
            .chain(self.protected.iter().map(|p| p.sid))
            .chain(self.state_changing.iter().copied())
            .chain(self.dev_only.iter().copied());
        for sid in all {
            if service_info(sid).is_none() {
                return Err(SensorError::Invalid(format!("0x{sid:02x} is not a UDS service")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, SensorError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, SensorError> {
        let policy: LoggingPolicy = toml::from_str(text)?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn load(path: &Path) -> Result<Self, SensorError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SensorError> {
        Ok(fs::write(path, self.to_toml()?)?)
    }
}

/// Snapshot of what the sensor knows about an ECU and the vehicle at the
/// moment a request arrives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EcuState {
    pub ecu_id: String,
    /// Active diagnostic session (0x01 = default).
    pub active_session: u8,
    /// Security-access level currently unlocked, None when locked.
    pub security_level: Option<u8>,
    pub vehicle_speed_kph: u32,
    pub mode: Mode,
    pub workshop_session_active: bool,
}

impl EcuState {
    /// Locked, default session, standing still, production.
    pub fn new(ecu_id: &str) -> Self {
        EcuState {
            ecu_id: ecu_id.to_string(),
            active_session: 0x01,
            security_level: None,
            vehicle_speed_kph: 0,
            mode: Mode::Production,
            workshop_session_active: false,
        }
    }
}

/// Check a request against the circumstance rules. Checks run in a fixed
/// order (speed, authorization, mode) and the first hit wins.
pub fn classify_circumstance(
    exchange: &UdsExchange,
    state: &EcuState,
    policy: &LoggingPolicy,
) -> Option<Violation> {
    let sid = exchange.request.sid;
    if policy.state_changing.contains(&sid) && state.vehicle_speed_kph > policy.speed_threshold_kph
    {
        return Some(Violation::Speed);
    }
    if let Some(required) = policy.required_level(sid) {
        if state.security_level.is_none_or(|lvl| lvl < required) {
            return Some(Violation::Authorization);
        }
    }
    if policy.dev_only.contains(&sid) && state.mode == Mode::Production {
        return Some(Violation::Mode);
    }
    None
}

fn u16_at(payload: &[u8], at: usize) -> u16 {
    let hi = payload.get(at).copied().unwrap_or(0);
    let lo = payload.get(at + 1).copied().unwrap_or(0);
    u16::from_be_bytes([hi, lo])
}

fn be_u64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0u64, |acc, b| (acc << 8) | u64::from(*b))
}

/// Read an addressAndLengthFormatIdentifier-prefixed (address, size) pair
/// starting at `at`. Returns (addr, size, bytes consumed). Missing bytes
/// read as zero so extraction is total.
fn read_addr_size(payload: &[u8], at: usize) -> (u64, u64, usize) {
    let alfid = payload.get(at).copied().unwrap_or(0);
    let addr_len = (alfid & 0x0F) as usize;
    let size_len = (alfid >> 4) as usize;
    let take = |from: usize, len: usize| -> u64 {
        let end = (from + len).min(payload.len());
        let from = from.min(payload.len());
        be_u64(&payload[from..end])
    };
    let addr = take(at + 1, addr_len);
    let size = take(at + 1 + addr_len, size_len);
    (addr, size, 1 + addr_len + size_len)
}

/// Build the context-data record for (sid, strategy). `transferred` carries
/// the accumulated 0x36 block data for the 0x37 FE hash; extraction of all
/// other fields is defined by the request (and the NRC by the response).
///
/// Extraction is best-effort: missing request bytes yield zero/empty fields,
/// so malformed requests (which the ECU rejects with an NRC) still produce
/// the full field set of their row.
pub fn extract_context(
    sid: u8,
    request: &UdsRequest,
    response: Option<&UdsResponse>,
    strategy: Strategy,
    transferred: Option<&[u8]>,
) -> Result<ContextData, SensorError> {
    if !ir_defined(sid) {
        return Err(SensorError::NoContextDefined(sid));
    }
    let nrc = if strategy == Strategy::Ir { response.and_then(|r| r.nrc()) } else { None };
    let p = &request.payload;
    let sf = request.subfunction.unwrap_or(0);

    let ctx = match sid {
        0x10 | 0x11 | 0x19 | 0x27 | 0x28 | 0x29 | 0x85 | 0x87 => {
            ContextData::Subfunction { sid, sf, nrc }
        }
        0x14 => ContextData::DtcClear {
            sid,
            group_of_dtc: ((u32::from(p.first().copied().unwrap_or(0))) << 16)
                | (u32::from(p.get(1).copied().unwrap_or(0)) << 8)
                | u32::from(p.get(2).copied().unwrap_or(0)),
            memory_selection: p.get(3).copied().unwrap_or(0),
            nrc,
        },
        0x22 => ContextData::DidList {
            sid,
            dids: p.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect(),
            nrc,
        },
        0x23 => {
            let (mem_addr, mem_size, _) = read_addr_size(p, 0);
            ContextData::MemoryRange { sid, mem_addr, mem_size, nrc }
        }
        0x24 => ContextData::ScalingDid { sid, did: u16_at(p, 0), nrc },
        0x2A => ContextData::Periodic {
            sid,
            transmission_mode: p.first().copied().unwrap_or(0),
            pdids: p.get(1..).unwrap_or_default().to_vec(),
            nrc,
        },
        0x2C => {
            let dddid = u16_at(p, 0);
            let n_src = p.get(2).copied().unwrap_or(0) as usize;
            let source_dids: Vec<u16> = (0..n_src).map(|i| u16_at(p, 3 + 2 * i)).collect();
            let (mem_addr, mem_size, _) = read_addr_size(p, 3 + 2 * n_src);
            ContextData::DynamicDefine { sid, sf, dddid, source_dids, mem_addr, mem_size, nrc }
        }
        0x2E => ContextData::DidWrite {
            sid,
            did: u16_at(p, 0),
            data_hash: hash_payload(p.get(2..).unwrap_or_default()),
            nrc,
        },
        0x2F => ContextData::IoControl {
            sid,
            did: u16_at(p, 0),
            io_control_parameter: p.get(2).copied().unwrap_or(0),
            nrc,
        },
        0x31 => ContextData::Routine { sid, sf, rid: u16_at(p, 0), nrc },
        0x34 | 0x35 => {
            // [dataFormatIdentifier, alfid, address..., size...]
            let (mem_addr, mem_size, _) = read_addr_size(p, 1);
            ContextData::MemoryRange { sid, mem_addr, mem_size, nrc }
        }
        0x36 => ContextData::TransferBlock { sid, bsc: p.first().copied().unwrap_or(0), nrc },
        0x37 => ContextData::TransferExit {
            sid,
            nrc,
            transfer_hash: (strategy == Strategy::Fe)
                .then(|| hash_payload(transferred.unwrap_or_default())),
        },
        0x38 => {
            let mode_of_operation = p.first().copied().unwrap_or(0);
            let len = u16_at(p, 1) as usize;
            let end = (3 + len).min(p.len());
            let file_path = String::from_utf8_lossy(p.get(3..end).unwrap_or_default()).into_owned();
            ContextData::FileTransfer { sid, mode_of_operation, file_path, nrc }
        }
        0x3D => {
            let (mem_addr, mem_size, consumed) = read_addr_size(p, 0);
            ContextData::MemoryWrite {
                sid,
                mem_addr,
                mem_size,
                nrc,
                data_hash: (strategy == Strategy::Fe)
                    .then(|| hash_payload(p.get(consumed..).unwrap_or_default())),
            }
        }
        0x84 => ContextData::SecuredTransmission {
            sid,
            apar: u16_at(p, 0),
            crypto_calc: p.get(2).copied().unwrap_or(0),
            wrapped_sid: p.get(3).copied().unwrap_or(0),
            nrc,
        },
        0x86 => ContextData::OnEvent {
            sid,
            sf,
            response_sid: p.first().copied().unwrap_or(0),
            nrc,
        },
        other => return Err(SensorError::NoContextDefined(other)),
    };
    Ok(ctx)
}

/// Apply the IR/FE logging strategies to one exchange. Event ids are left 0;
/// the stream runner assigns them in merged order.
pub fn evaluate_exchange(
    policy: &LoggingPolicy,
    exchange: &UdsExchange,
    state: &EcuState,
    transferred: Option<&[u8]>,
) -> Vec<SecurityEvent> {
    let sid = exchange.request.sid;
    let mut events = Vec::new();
    if !ir_defined(sid) {
        return events;
    }

    let ar = autosar_support(sid) == ArSupport::IrFe;
    let envelope = |strategy: Strategy, context: ContextData, violation: Option<Violation>| {
        SecurityEvent {
            id: 0,
            strategy,
            sid,
            ecu: exchange.target_ecu.clone(),
            source: exchange.source,
            timestamp_ms: exchange.timestamp_ms,
            context,
            violation,
            autosar: ar,
            autosar_event_id: (ar && sid == codec::sid::SECURITY_ACCESS
                && strategy == Strategy::Ir)
                .then_some(SEV_UDS_SECURITY_ACCESS_FAILED),
        }
    };

    let negative = exchange.response.as_ref().is_some_and(|r| !r.is_positive());
    let violation = classify_circumstance(exchange, state, policy);
    if policy.ir_enabled(sid) && (negative || violation.is_some()) {
        if let Ok(ctx) = extract_context(
            sid,
            &exchange.request,
            exchange.response.as_ref(),
            Strategy::Ir,
            transferred,
        ) {
            events.push(envelope(Strategy::Ir, ctx, violation));
        }
    }

    let positive = exchange.response.as_ref().is_some_and(|r| r.is_positive());
    if policy.fe_enabled(sid) && fe_defined(sid) && positive {
        if let Ok(ctx) = extract_context(
            sid,
            &exchange.request,
            exchange.response.as_ref(),
            Strategy::Fe,
            transferred,
        ) {
            events.push(envelope(Strategy::Fe, ctx, None));
        }
    }
    events
}

/// Stateful per-vehicle sensor pass: tracks sessions, unlocks and transfer
/// buffers from the observed traffic and derives the [`EcuState`] snapshot
/// for each exchange from the context store's timeline plus that tracking.
pub struct Sensor<'a> {
    policy: &'a LoggingPolicy,
    store: &'a crate::store::ContextStore,
    vehicle_id: String,
    sessions: BTreeMap<String, u8>,
    unlocks: BTreeMap<String, u8>,
    transfers: BTreeMap<(String, u16), Vec<u8>>,
}

impl<'a> Sensor<'a> {
    pub fn new(
        policy: &'a LoggingPolicy,
        store: &'a crate::store::ContextStore,
        vehicle_id: &str,
    ) -> Self {
        Sensor {
            policy,
            store,
            vehicle_id: vehicle_id.to_string(),
            sessions: BTreeMap::new(),
            unlocks: BTreeMap::new(),
            transfers: BTreeMap::new(),
        }
    }

    /// Snapshot of the ECU/vehicle state right before `exchange` executes.
    pub fn state_for(&self, exchange: &UdsExchange) -> EcuState {
        let ecu = &exchange.target_ecu;
        let sample = self.store.state_at(&self.vehicle_id, exchange.timestamp_ms);
        let inventory_mode = self
            .store
            .vehicles
            .get(&self.vehicle_id)
            .and_then(|v| v.ecu(ecu))
            .map(|e| e.mode);
        EcuState {
            ecu_id: ecu.clone(),
            active_session: self.sessions.get(ecu).copied().unwrap_or(0x01),
            security_level: self.unlocks.get(ecu).copied(),
            vehicle_speed_kph: sample.map_or(0, |s| s.speed),
            mode: inventory_mode.or(sample.map(|s| s.mode)).unwrap_or(Mode::Production),
            workshop_session_active: sample.is_some_and(|s| s.workshop_session_active),
        }
    }

    /// Evaluate one exchange and update the tracked state.
    pub fn observe(&mut self, exchange: &UdsExchange) -> Vec<SecurityEvent> {
        let state = self.state_for(exchange);
        let key = (exchange.target_ecu.clone(), exchange.source);
        let transferred = self.transfers.get(&key).map(|b| b.as_slice());
        let events = evaluate_exchange(self.policy, exchange, &state, transferred);

        if exchange.response.as_ref().is_some_and(|r| r.is_positive()) {
            let ecu = exchange.target_ecu.clone();
            match exchange.request.sid {
                0x10 => {
                    // Session change; any pending unlock is reset.
                    self.sessions
                        .insert(ecu.clone(), exchange.request.subfunction.unwrap_or(0x01) & 0x7F);
                    self.unlocks.remove(&ecu);
                }
                0x11 => {
                    self.sessions.remove(&ecu);
                    self.unlocks.remove(&ecu);
                    self.transfers.retain(|(e, _), _| *e != ecu);
                }
                0x27 => {
                    // Even subfunction = sendKey accepted: unlocked.
                    if let Some(sf) = exchange.request.subfunction {
                        let sf = sf & 0x7F;
                        if sf != 0 && sf % 2 == 0 {
                            self.unlocks.insert(ecu, sf / 2);
                        }
                    }
                }
                0x34 | 0x35 => {
                    self.transfers.insert(key, Vec::new());
                }
                0x36 => {
                    if let Some(buf) = self.transfers.get_mut(&key) {
                        buf.extend_from_slice(
                            exchange.request.payload.get(1..).unwrap_or_default(),
                        );
                    }
                }
                0x37 => {
                    self.transfers.remove(&key);
                }
                _ => {}
            }
        }
        events
    }
}

// ===== tests =====

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{parse_request, parse_response};
    use crate::store::ContextStore;

    fn exchange(req: &[u8], resp: Option<&[u8]>) -> UdsExchange {
        UdsExchange {
            timestamp_ms: 1_000,
            link: "obd".into(),
            source: 0x0E80,
            target_ecu: "ecm".into(),
            request: parse_request(req).unwrap(),
            response: resp.map(|r| parse_response(r).unwrap()),
        }
    }

    #[test]
    fn autosar_support_is_13_of_26() {
        assert_eq!(autosar_support(0x27), ArSupport::IrFe);
        assert_eq!(autosar_support(0x22), ArSupport::None);
        let supported = codec::context_table_sids()
            .filter(|&sid| autosar_support(sid) == ArSupport::IrFe)
            .count();
        let unsupported = codec::context_table_sids()
            .filter(|&sid| autosar_support(sid) == ArSupport::None)
            .count();
        assert_eq!(supported, 13);
        assert_eq!(unsupported, 13);
    }

    #[test]
    fn hash_is_deterministic_fixed_length() {
        assert_eq!(hash_payload(b"abc"), hash_payload(b"abc"));
        assert_eq!(hash_payload(&[]).len(), 64);
        assert_ne!(hash_payload(b"blob-a"), hash_payload(b"blob-b"));
    }

    #[test]
    fn circumstance_speed() {
        let policy = LoggingPolicy::default();
        let mut state = EcuState::new("ecm");
        state.vehicle_speed_kph = 120;
        let ex = exchange(&[0x11, 0x01], None);
        assert_eq!(classify_circumstance(&ex, &state, &policy), Some(Violation::Speed));
        state.vehicle_speed_kph = 5;
        assert_ne!(classify_circumstance(&ex, &state, &policy), Some(Violation::Speed));
    }

    #[test]
    fn circumstance_authorization_and_mode() {
        let policy = LoggingPolicy::default();
        let state = EcuState::new("ecm");
        // Protected write without unlock.
        let write = exchange(&[0x2E, 0xF1, 0x90, 0x00], None);
        assert_eq!(classify_circumstance(&write, &state, &policy), Some(Violation::Authorization));
        let mut unlocked = state.clone();
        unlocked.security_level = Some(1);
        assert_eq!(classify_circumstance(&write, &unlocked, &policy), None);
        // Unprotected read never violates.
        let read = exchange(&[0x22, 0xF1, 0x90], None);
        assert_eq!(classify_circumstance(&read, &state, &policy), None);
        // Dev-only service in production mode (0x23 is not protected, so the
        // mode rule is what fires).
        let mem_read = exchange(&[0x23, 0x24, 0x10, 0x00, 0x00, 0x10], None);
        assert_eq!(classify_circumstance(&mem_read, &state, &policy), Some(Violation::Mode));
        let mut dev = unlocked.clone();
        dev.mode = Mode::Development;
        assert_eq!(classify_circumstance(&mem_read, &dev, &policy), None);
    }

    #[test]
    fn evaluate_failed_key_attempt() {
        let policy = LoggingPolicy::default();
        let state = EcuState::new("ecm");
        let ex = exchange(&[0x27, 0x02, 0xAA, 0xBB], Some(&[0x7F, 0x27, 0x35]));
        let events = evaluate_exchange(&policy, &ex, &state, None);
        assert_eq!(events.len(), 1);
        let ev = &events[0];
        assert_eq!(ev.strategy, Strategy::Ir);
        assert_eq!(
            ev.context,
            ContextData::Subfunction { sid: 0x27, sf: 0x02, nrc: Some(0x35) }
        );
        assert!(ev.autosar);
        assert_eq!(ev.autosar_event_id, Some(SEV_UDS_SECURITY_ACCESS_FAILED));
    }

    #[test]
    fn tester_present_never_logs() {
        let policy = LoggingPolicy::default();
        let state = EcuState::new("ecm");
        let ok = exchange(&[0x3E, 0x00], Some(&[0x7E, 0x00]));
        let bad = exchange(&[0x3E, 0x7F], Some(&[0x7F, 0x3E, 0x12]));
        assert!(evaluate_exchange(&policy, &ok, &state, None).is_empty());
        assert!(evaluate_exchange(&policy, &bad, &state, None).is_empty());
    }

    #[test]
    fn ir_disabled_means_silent() {
        let mut policy = LoggingPolicy::silent();
        policy.services.push(ServiceToggle { sid: 0x22, ir: false, fe: true, mfi: false });
        let state = EcuState::new("ecm");
        let ex = exchange(&[0x22, 0xF1, 0x90], Some(&[0x7F, 0x22, 0x31]));
        assert!(evaluate_exchange(&policy, &ex, &state, None).is_empty());
        let empty = LoggingPolicy::silent();
        let pos = exchange(&[0x22, 0xF1, 0x90], Some(&[0x62, 0xF1, 0x90, 0x01]));
        assert!(evaluate_exchange(&empty, &pos, &state, None).is_empty());
    }

    #[test]
    fn fe_and_circumstance_ir_can_coexist() {
        let policy = LoggingPolicy::default();
        let state = EcuState::new("ecm"); // locked
        let ex = exchange(&[0x2E, 0xF1, 0x90, 0x01], Some(&[0x6E, 0xF1, 0x90]));
        let events = evaluate_exchange(&policy, &ex, &state, None);
        let strategies: Vec<Strategy> = events.iter().map(|e| e.strategy).collect();
        assert_eq!(strategies, vec![Strategy::Ir, Strategy::Fe]);
        assert_eq!(events[0].violation, Some(Violation::Authorization));
        assert_eq!(events[0].context.nrc(), None, "no NRC on a positive response");
        assert_eq!(events[1].violation, None);
    }

    #[test]
    fn extract_dynamic_define_full_row() {
        let req = parse_request(&[
            0x2C, 0x01, // sf = defineByIdentifier
            0xF3, 0x01, // dddid
            0x02, // two source DIDs
            0xF1, 0x90, 0xF1, 0x91, // source dids
            0x24, // alfid: 2-byte size, 4-byte addr
            0x00, 0x00, 0x80, 0x00, // addr
            0x01, 0x00, // size
        ])
        .unwrap();
        let ctx =
            extract_context(0x2C, &req, Some(&UdsResponse::Negative { sid: 0x2C, nrc: 0x31 }),
                Strategy::Ir, None)
            .unwrap();
        assert_eq!(
            ctx,
            ContextData::DynamicDefine {
                sid: 0x2C,
                sf: 0x01,
                dddid: 0xF301,
                source_dids: vec![0xF190, 0xF191],
                mem_addr: 0x8000,
                mem_size: 0x100,
                nrc: Some(0x31),
            }
        );
    }

    #[test]
    fn extract_transfer_block() {
        let req = parse_request(&[0x36, 0x04, 0xDE, 0xAD]).unwrap();
        let ctx = extract_context(
            0x36,
            &req,
            Some(&UdsResponse::Negative { sid: 0x36, nrc: 0x73 }),
            Strategy::Ir,
            None,
        )
        .unwrap();
        assert_eq!(ctx, ContextData::TransferBlock { sid: 0x36, bsc: 0x04, nrc: Some(0x73) });
    }

    #[test]
    fn extract_rejects_undefined_sids() {
        let req = parse_request(&[0x83, 0x01]).unwrap();
        assert!(matches!(
            extract_context(0x83, &req, None, Strategy::Ir, None),
            Err(SensorError::NoContextDefined(0x83))
        ));
        let unknown = parse_request(&[0x55]).unwrap();
        assert!(matches!(
            extract_context(0x55, &unknown, None, Strategy::Ir, None),
            Err(SensorError::NoContextDefined(0x55))
        ));
    }

    #[test]
    fn policy_roundtrip_and_validation() {
        let policy = LoggingPolicy::default();
        let text = policy.to_toml().unwrap();
        assert_eq!(LoggingPolicy::from_toml(&text).unwrap(), policy);

        let mut bad = LoggingPolicy::default();
        bad.services.push(ServiceToggle { sid: 0x99, ir: true, fe: false, mfi: false });
        assert!(matches!(
            LoggingPolicy::from_toml(&bad.to_toml().unwrap()),
            Err(SensorError::Invalid(_))
        ));
    }

    #[test]
    fn sensor_tracks_unlock_session_and_transfer() {
        let policy = LoggingPolicy::default();
        let store = ContextStore::default();
        let mut sensor = Sensor::new(&policy, &store, "VIN-1");

        // Extended session, seed, key: unlocks level 1.
        sensor.observe(&exchange(&[0x10, 0x03], Some(&[0x50, 0x03])));
        sensor.observe(&exchange(&[0x27, 0x01], Some(&[0x67, 0x01, 0x11, 0x22])));
        sensor.observe(&exchange(&[0x27, 0x02, 0xAA, 0xBB], Some(&[0x67, 0x02])));
        let state = sensor.state_for(&exchange(&[0x2E, 0xF1, 0x90, 0x00], None));
        assert_eq!(state.active_session, 0x03);
        assert_eq!(state.security_level, Some(1));

        // Download: two blocks accumulate into the 0x37 hash.
        sensor.observe(&exchange(&[0x34, 0x00, 0x24, 0x00, 0x00, 0x80, 0x00, 0x00, 0x04],
            Some(&[0x74, 0x20, 0x0F, 0xFF])));
        sensor.observe(&exchange(&[0x36, 0x01, 0xDE, 0xAD], Some(&[0x76, 0x01])));
        sensor.observe(&exchange(&[0x36, 0x02, 0xBE, 0xEF], Some(&[0x76, 0x02])));
        let events = sensor.observe(&exchange(&[0x37], Some(&[0x77])));
        let fe: Vec<_> = events.iter().filter(|e| e.strategy == Strategy::Fe).collect();
        assert_eq!(fe.len(), 1);
        assert_eq!(
            fe[0].context.field("transfer_hash").unwrap(),
            hash_payload(&[0xDE, 0xAD, 0xBE, 0xEF])
        );

        // Reset clears everything.
        sensor.observe(&exchange(&[0x11, 0x01], Some(&[0x51, 0x01])));
        let state = sensor.state_for(&exchange(&[0x2E, 0xF1, 0x90, 0x00], None));
        assert_eq!(state.active_session, 0x01);
        assert_eq!(state.security_level, None);
    }

    #[test]
    fn session_change_resets_unlock() {
        let policy = LoggingPolicy::default();
        let store = ContextStore::default();
        let mut sensor = Sensor::new(&policy, &store, "VIN-1");
        sensor.observe(&exchange(&[0x27, 0x01], Some(&[0x67, 0x01, 0x11, 0x22])));
        sensor.observe(&exchange(&[0x27, 0x02, 0xAA, 0xBB], Some(&[0x67, 0x02])));
        sensor.observe(&exchange(&[0x10, 0x02], Some(&[0x50, 0x02])));
        let state = sensor.state_for(&exchange(&[0x2E, 0xF1, 0x90, 0x00], None));
        assert_eq!(state.security_level, None);
    }
}
