//! Deterministic scenario simulator: one self-contained exercise per
//! cataloged attack technique, plus a benign-traffic generator for
//! false-positive testing.
//!
//! Every scenario shares one fixture vehicle on a two-link topology: testing
//! equipment lives on the `obd` link and the monitored `ecm` on the
//! `powertrain` link behind a routing gateway, so each tester exchange
//! appears twice in the trace (original plus routed copy) while an attacker
//! with bus access injects on `powertrain` directly. The scenario carries
//! everything detection needs — context store, routing expectation, logging
//! policy, threat-intel items and the ground-truth attack intervals.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::{parse_request, parse_response, UdsExchange};
use crate::detect::pipeline::{process_trace, AlertReport, PipelineError};
use crate::detect::pti::{ThreatIntelItem, TiSource};
use crate::detect::rules::default_rules;
use crate::flow::{EcuNode, Permission, Route, RoutingExpectation, SourceNode};
use crate::sensor::{hash_payload, LoggingPolicy};
use crate::store::{
    ContextStore, EcuEntry, FirmwareRelease, MaintenanceWindow, Mode, SensitiveDid,
    SensitiveRange, SensitiveRid, StateSample, VehicleRecord,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no scenario for technique {0}")]
    UnknownTechnique(String),
}

// ===== fixture =====

pub const DEFAULT_VEHICLE: &str = "VIN-0001";
/// Legitimate diagnostic tester on the OBD link.
pub const TESTER: u16 = 0x0E80;
/// Second legitimate tool on the OBD link.
pub const WORKSHOP_TOOL: u16 = 0x0E81;
/// Undeclared device with direct powertrain-bus access.
pub const ATTACKER: u16 = 0x0666;

const ECU: &str = "ecm";
const OBD: &str = "obd";
const POWERTRAIN: &str = "powertrain";
/// How long the gateway takes to forward a request to the next link.
const ROUTE_DELAY_MS: u64 = 20;
/// Scenario clock at which the attack activity starts.
const ATTACK_START: u64 = 100_000;

fn fw_current() -> Vec<u8> {
    vec![0xA1; 64]
}

fn fw_old() -> Vec<u8> {
    vec![0x0B; 64]
}

fn fw_evil() -> Vec<u8> {
    vec![0xEE; 64]
}

/// The fixture vehicle: one production ECU, a locked configuration stance,
/// a maintenance window well after the attack hour and a registry of
/// sensitive identifiers the scenarios poke at.
pub fn fixture_store() -> ContextStore {
    let mut store = ContextStore::default();
    store.vehicles.insert(
        DEFAULT_VEHICLE.into(),
        VehicleRecord {
            model: "otto-500".into(),
            config: [
                ("dtc_reporting".to_string(), "locked".to_string()),
                ("comm_control".to_string(), "locked".to_string()),
            ]
            .into(),
            ecus: vec![EcuEntry {
                id: ECU.into(),
                ecu_type: "ecm-m3".into(),
                mode: Mode::Production,
            }],
            maintenance: vec![MaintenanceWindow {
                start: 1_000_000,
                end: 2_000_000,
                workshop: "ws-1".into(),
            }],
        },
    );
    store.firmware.insert(
        "ecm-m3".into(),
        vec![
            FirmwareRelease { version: 1, digest: hash_payload(&fw_old()) },
            FirmwareRelease { version: 2, digest: hash_payload(&fw_current()) },
        ],
    );
    store.sensitive.dids.push(SensitiveDid { id: 0x0101, label: "crypto-key".into() });
    store.sensitive.dids.push(SensitiveDid { id: 0xF1A0, label: "immobilizer".into() });
    store.sensitive.ranges.push(SensitiveRange {
        addr: 0x4000_0000,
        size: 0x2000,
        label: "key-store".into(),
    });
    store.sensitive.rids.push(SensitiveRid { id: 0xFF01, label: "dump-keys".into() });
    store.sensitive.rids.push(SensitiveRid { id: 0x0F00, label: "unlock-doors".into() });
    store.sensitive.paths.push("/secrets/".into());
    store
        .timeline
        .insert(DEFAULT_VEHICLE.into(), vec![sample(0, 0, false)]);
    store
}

fn sample(t: u64, speed: u32, workshop: bool) -> StateSample {
    StateSample { t, speed, mode: Mode::Production, workshop_session_active: workshop, campaign: None }
}

/// The fixture topology and permissions: both OBD tools may address the ECU,
/// the gateway forwards `obd` traffic onto `powertrain`.
pub fn fixture_expect() -> RoutingExpectation {
    RoutingExpectation {
        seq_threshold: 3,
        pairing_window_ms: 2_000,
        links: vec![OBD.into(), POWERTRAIN.into()],
        ecus: vec![EcuNode { id: ECU.into(), link: POWERTRAIN.into() }],
        sources: vec![
            SourceNode { address: TESTER, link: OBD.into(), name: "tester".into() },
            SourceNode { address: WORKSHOP_TOOL, link: OBD.into(), name: "workshop-tool".into() },
        ],
        permitted: vec![Permission {
            ecu: ECU.into(),
            sid: None,
            sources: vec![TESTER, WORKSHOP_TOOL],
        }],
        routes: vec![Route { from_link: OBD.into(), to_link: POWERTRAIN.into() }],
    }
}

// ===== scenario =====

/// One ready-to-run exercise: the trace plus all the context that the
/// pipeline consumes, and the ground truth to score the outcome against.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// `None` for the benign generator.
    pub technique: Option<String>,
    pub seed: u64,
    pub vehicle_id: String,
    pub store: ContextStore,
    pub expect: RoutingExpectation,
    pub policy: LoggingPolicy,
    pub trace: Vec<UdsExchange>,
    pub ti: Vec<ThreatIntelItem>,
    /// Half-open `[start, end)` intervals of attack activity in trace time;
    /// empty when nothing in the trace is malicious.
    pub truth: Vec<(u64, u64)>,
}

impl Scenario {
    /// Run the default pipeline over the scenario.
    pub fn run(&self) -> Result<AlertReport, PipelineError> {
        process_trace(
            &self.policy,
            &default_rules(),
            &self.store,
            Some(&self.expect),
            &self.ti,
            &self.vehicle_id,
            &self.trace,
        )
    }

    pub fn in_truth(&self, t: u64) -> bool {
        self.truth.iter().any(|(s, e)| (*s..*e).contains(&t))
    }
}

// ===== trace builder =====

fn pos(sid: u8, tail: &[u8]) -> Vec<u8> {
    let mut v = vec![sid + 0x40];
    v.extend_from_slice(tail);
    v
}

fn neg(sid: u8, nrc: u8) -> Vec<u8> {
    vec![0x7F, sid, nrc]
}

/// `[alfid=0x44, addr(4), size(4)]`.
fn addr_size(addr: u32, size: u32) -> Vec<u8> {
    let mut v = vec![0x44];
    v.extend_from_slice(&addr.to_be_bytes());
    v.extend_from_slice(&size.to_be_bytes());
    v
}

fn file_req(mode: u8, path: &str) -> Vec<u8> {
    let mut v = vec![0x38, mode];
    v.extend_from_slice(&(path.len() as u16).to_be_bytes());
    v.extend_from_slice(path.as_bytes());
    v
}

struct Builder {
    t: u64,
    rng: ChaCha8Rng,
    trace: Vec<UdsExchange>,
}

impl Builder {
    fn new(seed: u64, start: u64) -> Self {
        Builder { t: start, rng: ChaCha8Rng::seed_from_u64(seed), trace: Vec::new() }
    }

    fn push(&mut self, t: u64, link: &str, source: u16, req: &[u8], resp: &[u8]) {
        self.trace.push(UdsExchange {
            timestamp_ms: t,
            link: link.into(),
            source,
            target_ecu: ECU.into(),
            request: parse_request(req).expect("scenario request must encode"),
            response: Some(parse_response(resp).expect("scenario response must encode")),
        });
    }

    /// A tester exchange as the gateway sees it: original on `obd`, faithful
    /// copy on `powertrain` one routing delay later. Advances the clock.
    fn routed(&mut self, source: u16, req: &[u8], resp: &[u8], gap: u64) {
        self.push(self.t, OBD, source, req, resp);
        self.push(self.t + ROUTE_DELAY_MS, POWERTRAIN, source, req, resp);
        self.t += gap;
    }

    /// A man-in-the-middle exchange: the routed copy differs from the
    /// original.
    fn tampered(&mut self, source: u16, req_up: &[u8], req_down: &[u8], resp: &[u8], gap: u64) {
        self.push(self.t, OBD, source, req_up, resp);
        self.push(self.t + ROUTE_DELAY_MS, POWERTRAIN, source, req_down, resp);
        self.t += gap;
    }

    /// A request injected directly on the powertrain link, with no OBD
    /// original. Advances the clock.
    fn inject(&mut self, source: u16, req: &[u8], resp: &[u8], gap: u64) {
        self.push(self.t, POWERTRAIN, source, req, resp);
        self.t += gap;
    }

    /// Seed/key unlock pair from `source`, leaving the ECU unlocked.
    fn unlock(&mut self, source: u16) {
        let seed: [u8; 2] = self.rng.random();
        self.routed(source, &[0x27, 0x01], &pos(0x27, &[0x01, seed[0], seed[1]]), 1_500);
        self.routed(source, &[0x27, 0x02, seed[0], seed[1] ^ 0x5A], &pos(0x27, &[0x02]), 1_500);
    }

    fn finish(mut self) -> Vec<UdsExchange> {
        self.trace.sort_by_key(|e| e.timestamp_ms);
        self.trace
    }
}

fn intel(technique: &str, source: TiSource, text: &str) -> ThreatIntelItem {
    ThreatIntelItem {
        id: format!("TI-{technique}"),
        source,
        tags: vec!["model:otto-500".into(), technique.into()],
        text: text.into(),
    }
}

// ===== scenarios =====

/// Build the exercise for one cataloged technique. The trace layout is
/// deterministic; the seed only varies payload bytes (seeds, keys, fuzzing
/// data), never counts or timing.
pub fn simulate(technique: &str, seed: u64) -> Result<Scenario, SimError> {
    let mut store = fixture_store();
    let mut b = Builder::new(seed, ATTACK_START);
    let mut ti: Vec<ThreatIntelItem> = Vec::new();
    let mut benign_shaped = false;

    match technique {
        // --- reconnaissance (offline; nothing observable on the bus) ---
        "AT-RD-1" => {
            ti.push(intel(technique, TiSource::Public, "extracted firmware image under analysis"));
        }
        "AT-RD-2" => {
            ti.push(intel(technique, TiSource::Disclosed, "diagnostic credentials offered for sale"));
        }

        // --- package staging ---
        "AT-PS-1" => {
            ti.push(intel(technique, TiSource::Disclosed, "custom flash bundle for this platform"));
            let evil = fw_evil();
            for cycle in 0..2u8 {
                b.routed(TESTER, &[0x34, 0x00, 0x44, 0x08, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x40],
                         &pos(0x34, &[0x20, 0x01, 0x00]), 2_000);
                let mut blk1 = vec![0x36, 0x01];
                blk1.extend_from_slice(&evil[..32]);
                b.routed(TESTER, &blk1, &pos(0x36, &[0x01]), 2_000);
                // Out-of-order counter: the package tool stumbles.
                let mut bad = vec![0x36, 0x03, cycle];
                bad.push(b.rng.random());
                b.routed(TESTER, &bad, &neg(0x36, 0x73), 2_000);
                let mut blk2 = vec![0x36, 0x02];
                blk2.extend_from_slice(&evil[32..]);
                b.routed(TESTER, &blk2, &pos(0x36, &[0x02]), 2_000);
                b.routed(TESTER, &[0x37], &pos(0x37, &[]), 3_000);
            }
        }

        // --- privilege escalation ---
        "AT-PE-1" => {
            b.routed(TESTER, &[0x10, 0x03], &pos(0x10, &[0x03, 0x00, 0x32]), 2_000);
            b.inject(ATTACKER, &[0x10, 0x03], &pos(0x10, &[0x03, 0x00, 0x32]), 2_000);
        }
        "AT-PE-2" => {
            ti.push(intel(technique, TiSource::Disclosed, "valid security-access keys leaked"));
            b.unlock(TESTER);
            b.routed(TESTER, &[0x29, 0x05, 0x01], &pos(0x29, &[0x05, 0xC0, 0x01]), 2_000);
            b.routed(TESTER, &[0x29, 0x03, 0xAA, 0xBB], &pos(0x29, &[0x03]), 2_000);
        }
        "AT-PE-3" => {
            ti.push(intel(technique, TiSource::Public, "captured key replay against this ECU family"));
            b.routed(TESTER, &[0x27, 0x01], &pos(0x27, &[0x01, 0x4E, 0x71]), 2_000);
            let captured: [u8; 2] = b.rng.random();
            for _ in 0..11 {
                b.inject(ATTACKER, &[0x27, 0x02, captured[0], captured[1]], &neg(0x27, 0x35), 4_000);
            }
            b.inject(ATTACKER, &[0x27, 0x02, captured[0], captured[1]], &pos(0x27, &[0x02]), 2_000);
        }
        "AT-PE-4" => {
            b.routed(TESTER, &[0x27, 0x01], &pos(0x27, &[0x01, 0x13, 0x37]), 2_000);
            for _ in 0..12 {
                let guess: [u8; 2] = b.rng.random();
                b.routed(TESTER, &[0x27, 0x02, guess[0], guess[1]], &neg(0x27, 0x35), 4_000);
            }
            b.routed(TESTER, &[0x27, 0x01], &pos(0x27, &[0x01, 0x13, 0x38]), 2_000);
            b.routed(TESTER, &[0x27, 0x02, 0x77, 0x99], &pos(0x27, &[0x02]), 2_000);
        }
        "AT-PE-5" => {
            b.routed(TESTER, &[0x29, 0x05, 0x7F], &neg(0x29, 0x12), 2_000);
            b.routed(TESTER, &[0x29, 0x05, 0x01], &pos(0x29, &[0x05, 0xC0]), 2_000);
            b.routed(TESTER, &[0x29, 0x03, 0x00], &neg(0x29, 0x35), 2_000);
            b.routed(TESTER, &[0x29, 0x03, 0x01], &pos(0x29, &[0x03]), 2_000);
        }

        // --- defense evasion ---
        "AT-DE-1" => {
            b.routed(TESTER, &[0x85, 0x02], &pos(0x85, &[0x02]), 2_000);
        }
        "AT-DE-2" => {
            b.routed(TESTER, &[0x14, 0xFF, 0xFF, 0xFF], &pos(0x14, &[]), 2_000);
        }
        "AT-DE-3" => {
            let old = fw_old();
            b.unlock(TESTER);
            b.routed(TESTER, &[0x34, 0x00, 0x44, 0x08, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x40],
                     &pos(0x34, &[0x20, 0x01, 0x00]), 2_000);
            let mut blk1 = vec![0x36, 0x01];
            blk1.extend_from_slice(&old[..32]);
            b.routed(TESTER, &blk1, &pos(0x36, &[0x01]), 2_000);
            let mut blk2 = vec![0x36, 0x02];
            blk2.extend_from_slice(&old[32..]);
            b.routed(TESTER, &blk2, &pos(0x36, &[0x02]), 2_000);
            b.routed(TESTER, &[0x37], &pos(0x37, &[]), 2_000);
        }
        "AT-DE-4" => {
            ti.push(intel(technique, TiSource::Disclosed, "unlock bypass for this ECU generation"));
            let v: [u8; 2] = b.rng.random();
            b.routed(TESTER, &[0x2E, 0x00, 0x42, v[0], v[1]], &pos(0x2E, &[0x00, 0x42]), 2_000);
        }
        "AT-DE-5" => {
            ti.push(intel(technique, TiSource::Disclosed, "read protections bypassed via dynamic DIDs"));
            b.routed(TESTER, &[0x2C, 0x01, 0xF3, 0x01, 0x01, 0x01, 0x01, 0x00],
                     &pos(0x2C, &[0x01, 0xF3, 0x01]), 2_000);
            b.routed(TESTER, &[0x22, 0xF3, 0x01], &pos(0x22, &[0xF3, 0x01, 0xDE, 0xAD]), 2_000);
        }

        // --- credential access ---
        "AT-CA-1" => {
            b.unlock(TESTER);
            b.routed(TESTER, &[0x22, 0x01, 0x01], &pos(0x22, &[0x01, 0x01, 0x99]), 2_000);
            let mut read = vec![0x23];
            read.extend_from_slice(&addr_size(0x4000_0000, 0x100));
            b.routed(TESTER, &read, &pos(0x23, &[0x5A; 8]), 2_000);
            b.routed(TESTER, &[0x31, 0x01, 0xFF, 0x01], &pos(0x31, &[0x01, 0xFF, 0x01]), 2_000);
        }

        // --- discovery ---
        "AT-DS-1" => {
            for sid in [0x19u8, 0x23, 0x28, 0x2A, 0x2C, 0x2E, 0x2F, 0x31, 0x34, 0x35, 0x38, 0x3D] {
                let req = if crate::codec::service_info(sid).is_some_and(|s| s.has_subfunction) {
                    vec![sid, 0x01]
                } else {
                    vec![sid, 0x00, 0x00]
                };
                b.routed(TESTER, &req, &neg(sid, 0x11), 2_000);
            }
            b.routed(TESTER, &[0x22, 0xF1, 0x90], &pos(0x22, &[0xF1, 0x90, 0x56]), 2_000);
        }
        "AT-DS-2" => {
            for sf in 0x20..0x2Cu8 {
                b.routed(TESTER, &[0x19, sf], &neg(0x19, 0x12), 2_000);
            }
            b.routed(TESTER, &[0x19, 0x01, 0xFF], &pos(0x19, &[0x01, 0x00, 0x04]), 2_000);
        }
        "AT-DS-3" => {
            for sf in 0x05..0x0Bu8 {
                b.routed(TESTER, &[0x10, sf], &neg(0x10, 0x12), 2_000);
            }
            b.routed(TESTER, &[0x10, 0x03], &pos(0x10, &[0x03, 0x00, 0x32]), 2_000);
        }
        "AT-DS-4" => {
            for i in 0..12u8 {
                let sid = [0x19u8, 0x28, 0x2A, 0x31][usize::from(i % 4)];
                let junk: [u8; 3] = b.rng.random();
                let req = vec![sid, junk[0] & 0x3F, junk[1], junk[2]];
                let nrc = if i % 2 == 0 { 0x12 } else { 0x11 };
                b.routed(TESTER, &req, &neg(sid, nrc), 1_500);
            }
            b.routed(TESTER, &[0x22, 0xF1, 0x86], &pos(0x22, &[0xF1, 0x86, 0x01]), 1_500);
        }
        "AT-DS-5" => {
            for i in 0..12u8 {
                let resp = if i < 8 {
                    let s: [u8; 2] = b.rng.random();
                    pos(0x27, &[0x01, s[0], s[1]])
                } else {
                    neg(0x27, 0x37)
                };
                b.routed(TESTER, &[0x27, 0x01], &resp, 2_000);
            }
        }
        "AT-DS-6" => {
            ti.push(intel(technique, TiSource::Disclosed, "seed-to-key algorithm reconstruction notes"));
            for _ in 0..8 {
                let s: [u8; 2] = b.rng.random();
                b.routed(TESTER, &[0x27, 0x01], &pos(0x27, &[0x01, s[0], s[1]]), 2_000);
            }
        }
        "AT-DS-7" => {
            ti.push(intel(technique, TiSource::Disclosed, "authentication configuration probing"));
            b.routed(TESTER, &[0x29, 0x08], &pos(0x29, &[0x08, 0x02]), 2_000);
            b.routed(TESTER, &[0x29, 0x08], &pos(0x29, &[0x08, 0x02]), 2_000);
        }
        "AT-DS-8" => {
            ti.push(intel(technique, TiSource::Disclosed, "cipher-suite enumeration via authentication"));
            b.routed(TESTER, &[0x29, 0x05, 0x01], &pos(0x29, &[0x05, 0xC1]), 2_000);
            b.routed(TESTER, &[0x29, 0x05, 0x02], &pos(0x29, &[0x05, 0xC2]), 2_000);
            b.routed(TESTER, &[0x29, 0x03, 0x01], &pos(0x29, &[0x03]), 2_000);
        }
        "AT-DS-9" => {
            for i in 0..8u8 {
                let resp = if i < 5 {
                    let c: [u8; 2] = b.rng.random();
                    pos(0x29, &[0x05, c[0], c[1]])
                } else {
                    neg(0x29, 0x21)
                };
                b.routed(TESTER, &[0x29, 0x05, 0x01], &resp, 2_000);
            }
        }
        "AT-DS-10" => {
            ti.push(intel(technique, TiSource::Disclosed, "secured-transmission parameter scan"));
            b.routed(TESTER, &[0x84, 0x00, 0x01, 0x05, 0x22, 0xF1, 0x90],
                     &pos(0x84, &[0x00, 0x01]), 2_000);
            b.routed(TESTER, &[0x84, 0x00, 0x02, 0x05, 0x22, 0xF1, 0x90],
                     &pos(0x84, &[0x00, 0x02]), 2_000);
        }
        "AT-DS-11" => {
            for _ in 0..12 {
                let did: u16 = b.rng.random_range(0x0200..0x0F00);
                b.routed(TESTER, &[0x22, (did >> 8) as u8, did as u8], &neg(0x22, 0x31), 3_000);
            }
            b.routed(TESTER, &[0x22, 0xF1, 0x90], &pos(0x22, &[0xF1, 0x90, 0x56]), 3_000);
            b.routed(TESTER, &[0x22, 0x01, 0x01], &pos(0x22, &[0x01, 0x01, 0x99]), 3_000);
        }
        "AT-DS-12" => {
            for _ in 0..12 {
                let rid: u16 = b.rng.random_range(0x0100..0x0E00);
                b.routed(TESTER, &[0x31, 0x01, (rid >> 8) as u8, rid as u8], &neg(0x31, 0x31), 3_000);
            }
            b.routed(TESTER, &[0x31, 0x01, 0x0F, 0x00], &pos(0x31, &[0x01, 0x0F, 0x00]), 3_000);
        }
        "AT-DS-13" => {
            for i in 0..6u8 {
                let path = format!("/part{i}");
                b.routed(TESTER, &file_req(0x05, &path), &neg(0x38, 0x31), 3_000);
            }
            b.routed(TESTER, &file_req(0x05, "/data"), &pos(0x38, &[0x05, 0x00]), 3_000);
        }
        "AT-DS-14" => {
            // Passive eavesdropping: the observable traffic is ordinary.
            benign_shaped = true;
            for i in 0..5u64 {
                b.routed(TESTER, &[0x22, 0xF1, 0x86], &pos(0x22, &[0xF1, 0x86, 0x01]), 20_000);
                b.routed(TESTER, &[0x19, 0x01, 0xFF], &pos(0x19, &[0x01, 0x00, 0x00]), 20_000);
                let _ = i;
            }
        }

        // --- lateral movement ---
        "AT-LM-1" => {
            ti.push(intel(technique, TiSource::Public, "gateway interposer modifying requests"));
            for i in 0..4u8 {
                let honest = [0x2E, 0x00, 0x42, 0x10, i];
                let forged = [0x2E, 0x00, 0x42, 0xEE, i];
                b.tampered(TESTER, &honest, &forged, &pos(0x2E, &[0x00, 0x42]), 3_000);
            }
        }

        // --- collection ---
        "AT-CL-1" => {
            b.routed(TESTER, &[0x86, 0x05, 0x22], &neg(0x86, 0x12), 2_000);
            for _ in 0..3 {
                b.routed(TESTER, &[0x86, 0x01, 0x22], &pos(0x86, &[0x01]), 2_000);
            }
        }
        "AT-CL-2" => {
            b.routed(TESTER, &[0x2A, 0x01, 0xE9], &neg(0x2A, 0x31), 2_000);
            for pdid in 0xE1..0xE6u8 {
                b.routed(TESTER, &[0x2A, 0x01, pdid], &pos(0x2A, &[]), 2_000);
            }
        }
        "AT-CL-3" => {
            b.routed(TESTER, &[0x22, 0x0A, 0x0A], &neg(0x22, 0x31), 2_000);
            b.routed(TESTER, &[0x22, 0x01, 0x01], &pos(0x22, &[0x01, 0x01, 0x99]), 2_000);
            b.routed(TESTER, &[0x22, 0xF1, 0xA0], &pos(0x22, &[0xF1, 0xA0, 0x77]), 2_000);
        }
        "AT-CL-4" => {
            let mut read = vec![0x23];
            read.extend_from_slice(&addr_size(0x4000_0000, 0x100));
            b.routed(TESTER, &read, &pos(0x23, &[0x5A; 8]), 2_000);
            let mut up = vec![0x35, 0x00];
            up.extend_from_slice(&addr_size(0x4000_1000, 0x200));
            b.routed(TESTER, &up, &pos(0x35, &[0x20, 0x0F, 0xFF]), 2_000);
        }
        "AT-CL-5" => {
            b.routed(TESTER, &file_req(0x04, "/secrets/"), &neg(0x38, 0x33), 2_000);
            b.routed(TESTER, &file_req(0x04, "/secrets/sa.key"), &pos(0x38, &[0x04, 0x00]), 2_000);
        }
        "AT-CL-6" => {
            b.routed(TESTER, &[0x19, 0x06, 0x01, 0x02, 0x03, 0xFF], &neg(0x19, 0x31), 2_500);
            for _ in 0..10 {
                b.routed(TESTER, &[0x19, 0x02, 0xFF], &pos(0x19, &[0x02, 0xFF, 0x01]), 2_500);
            }
            b.routed(TESTER, &[0x19, 0x04, 0x01, 0x02, 0x03, 0x01],
                     &pos(0x19, &[0x04, 0x01, 0x02, 0x03]), 2_500);
        }

        // --- affect (denial / manipulation) ---
        "AT-AF-1" => {
            ti.push(intel(technique, TiSource::Disclosed, "diagnostic flooding tool in the wild"));
            store
                .timeline
                .get_mut(DEFAULT_VEHICLE)
                .expect("fixture timeline")
                .push(sample(ATTACK_START - 10_000, 60, false));
            for i in 0..35u8 {
                let resp = if i % 2 == 0 {
                    pos(0x22, &[0xF1, 0x90, i])
                } else {
                    neg(0x22, 0x21)
                };
                b.routed(TESTER, &[0x22, 0xF1, 0x90], &resp, 230);
            }
            for _ in 0..2 {
                b.routed(TESTER, &[0x2E, 0x00, 0x42, 0x00], &neg(0x2E, 0x21), 300);
            }
        }
        "AT-AF-2" => {
            ti.push(intel(technique, TiSource::Disclosed, "bus-blocking campaign reported"));
            for _ in 0..8 {
                b.inject(ATTACKER, &[0x3E, 0x00], &pos(0x3E, &[0x00]), 1_000);
            }
            for _ in 0..6 {
                b.routed(TESTER, &[0x22, 0xF1, 0x90], &neg(0x22, 0x21), 1_200);
            }
            b.routed(TESTER, &[0x22, 0xF1, 0x90], &pos(0x22, &[0xF1, 0x90, 0x56]), 1_200);
        }
        "AT-AF-3" => {
            b.routed(TESTER, &[0x10, 0x03], &pos(0x10, &[0x03, 0x00, 0x32]), 2_000);
            for _ in 0..3 {
                b.inject(ATTACKER, &[0x10, 0x01], &pos(0x10, &[0x01, 0x00, 0x32]), 2_000);
            }
            for _ in 0..5 {
                b.inject(ATTACKER, &[0x10, 0x01], &neg(0x10, 0x21), 2_000);
            }
            b.routed(TESTER, &[0x31, 0x01, 0x0B, 0x00], &neg(0x31, 0x22), 2_000);
        }
        "AT-AF-4" => {
            b.routed(TESTER, &[0x27, 0x02, 0x00, 0x01], &neg(0x27, 0x35), 3_000);
            b.routed(TESTER, &[0x27, 0x01], &neg(0x27, 0x36), 3_000);
            b.routed(TESTER, &[0x27, 0x02, 0x00, 0x02], &neg(0x27, 0x35), 3_000);
            b.routed(TESTER, &[0x27, 0x01], &neg(0x27, 0x37), 3_000);
            b.routed(TESTER, &[0x27, 0x01], &neg(0x27, 0x37), 3_000);
        }
        "AT-AF-5.1" => {
            for _ in 0..4 {
                b.routed(TESTER, &[0x86, 0x01, 0x22], &pos(0x86, &[0x01]), 2_000);
            }
            for _ in 0..2 {
                b.routed(TESTER, &[0x86, 0x01, 0x2A], &neg(0x86, 0x22), 2_000);
            }
        }
        "AT-AF-5.2" => {
            for pdid in 0xE1..0xE7u8 {
                b.routed(TESTER, &[0x2A, 0x03, pdid], &pos(0x2A, &[]), 2_000);
            }
            for _ in 0..2 {
                b.routed(TESTER, &[0x2A, 0x03, 0xEE], &neg(0x2A, 0x21), 2_000);
            }
            b.inject(ATTACKER, &[0x2A, 0x03, 0xEF], &pos(0x2A, &[]), 2_000);
        }
        "AT-AF-6" => {
            b.routed(TESTER, &[0x2A, 0x02, 0xE1], &pos(0x2A, &[]), 2_000);
            for _ in 0..5 {
                b.routed(WORKSHOP_TOOL, &[0x2A, 0x04], &pos(0x2A, &[]), 2_000);
            }
            b.routed(TESTER, &[0x2A, 0x02, 0xE1], &neg(0x2A, 0x24), 2_000);
        }
        "AT-AF-7" => {
            for v in 0..5u8 {
                b.routed(TESTER, &[0x2F, 0x00, 0x42, 0x03, v], &pos(0x2F, &[0x00, 0x42, 0x03]), 2_000);
            }
            b.inject(ATTACKER, &[0x2F, 0x00, 0x42, 0x03, 0xFF], &pos(0x2F, &[0x00, 0x42, 0x03]), 2_000);
        }
        "AT-AF-8" => {
            b.unlock(TESTER);
            b.routed(TESTER, &[0x31, 0x01, 0x0F, 0x00], &pos(0x31, &[0x01, 0x0F, 0x00]), 2_000);
        }
        "AT-AF-9" => {
            b.unlock(TESTER);
            b.routed(TESTER, &[0x34, 0x00, 0x44, 0x08, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x40],
                     &pos(0x34, &[0x20, 0x01, 0x00]), 2_000);
            let cur = fw_current();
            let mut blk = vec![0x36, 0x01];
            blk.extend_from_slice(&cur[..32]);
            b.routed(TESTER, &blk, &pos(0x36, &[0x01]), 2_000);
            b.inject(ATTACKER, &[0x37], &pos(0x37, &[]), 2_000);
            b.routed(TESTER, &[0x36, 0x02], &neg(0x36, 0x24), 2_000);
            for _ in 0..3 {
                b.routed(TESTER, &[0x37], &neg(0x37, 0x24), 2_000);
            }
        }
        "AT-AF-10" => {
            b.unlock(TESTER);
            for _ in 0..3 {
                b.routed(TESTER, &[0x31, 0x01, 0x0B, 0x00], &pos(0x31, &[0x01, 0x0B, 0x00]), 2_000);
                b.inject(ATTACKER, &[0x31, 0x02, 0x0B, 0x00], &pos(0x31, &[0x02, 0x0B, 0x00]), 2_000);
            }
            for _ in 0..2 {
                b.inject(ATTACKER, &[0x31, 0x02, 0x0B, 0x00], &neg(0x31, 0x24), 2_000);
            }
        }
        "AT-AF-11" => {
            b.routed(TESTER, &[0x10, 0x03], &pos(0x10, &[0x03, 0x00, 0x32]), 2_000);
            for _ in 0..4 {
                b.inject(ATTACKER, &[0x3E, 0x00], &pos(0x3E, &[0x00]), 5_000);
            }
        }
        "AT-AF-12" => {
            b.unlock(TESTER);
            b.routed(TESTER, &[0x2F, 0x00, 0x42, 0x03, 0x64], &pos(0x2F, &[0x00, 0x42, 0x03]), 2_000);
            b.routed(TESTER, &[0x2F, 0x00, 0x42, 0x03, 0x00], &pos(0x2F, &[0x00, 0x42, 0x03]), 2_000);
            b.routed(TESTER, &[0x2F, 0x00, 0x99, 0x03, 0x01], &neg(0x2F, 0x31), 2_000);
        }
        "AT-AF-13" => {
            b.routed(TESTER, &[0x28, 0x03, 0x01], &pos(0x28, &[0x03]), 2_000);
            b.routed(TESTER, &[0x28, 0x05, 0x01], &neg(0x28, 0x12), 2_000);
            b.inject(ATTACKER, &[0x28, 0x03, 0x01], &pos(0x28, &[0x03]), 2_000);
        }
        "AT-AF-14" => {
            b.routed(TESTER, &[0x11, 0x01], &pos(0x11, &[0x01]), 3_000);
            b.routed(TESTER, &[0x11, 0x01], &neg(0x11, 0x22), 3_000);
            b.routed(TESTER, &[0x11, 0x01], &neg(0x11, 0x22), 3_000);
            b.inject(ATTACKER, &[0x11, 0x01], &pos(0x11, &[0x01]), 3_000);
        }
        "AT-AF-15" => {
            for _ in 0..3 {
                let v: [u8; 2] = b.rng.random();
                b.routed(TESTER, &[0x2E, 0x00, 0x42, v[0], v[1]], &pos(0x2E, &[0x00, 0x42]), 2_000);
            }
            b.routed(TESTER, &[0x2E, 0x01, 0x01, 0xDE, 0xAD], &pos(0x2E, &[0x01, 0x01]), 2_000);
        }
        "AT-AF-16" => {
            b.routed(TESTER, &file_req(0x03, "/secrets/sa.key"), &pos(0x38, &[0x03, 0x00]), 2_000);
            b.routed(TESTER, &file_req(0x03, "/calib/map.bin"), &pos(0x38, &[0x03, 0x00]), 2_000);
            b.routed(TESTER, &file_req(0x02, "/log/audit"), &neg(0x38, 0x31), 2_000);
        }
        "AT-AF-17" => {
            for i in 0..2u8 {
                let mut write = vec![0x3D];
                write.extend_from_slice(&addr_size(0x4000_0000 + u32::from(i) * 0x40, 0x04));
                write.extend_from_slice(&[0xBA, 0xD0, 0xBA, i]);
                b.routed(TESTER, &write, &pos(0x3D, &addr_size(0x4000_0000, 0x04)), 2_000);
            }
            b.routed(TESTER, &[0x34, 0x00, 0x44, 0x40, 0x00, 0x10, 0x00, 0x00, 0x00, 0x00, 0x40],
                     &pos(0x34, &[0x20, 0x01, 0x00]), 2_000);
        }

        other => return Err(SimError::UnknownTechnique(other.to_string())),
    }

    let trace = b.finish();
    let truth = if trace.is_empty() || benign_shaped {
        Vec::new()
    } else {
        let last = trace.last().expect("non-empty").timestamp_ms;
        vec![(ATTACK_START, last + 1)]
    };
    Ok(Scenario {
        technique: Some(technique.to_string()),
        seed,
        vehicle_id: DEFAULT_VEHICLE.into(),
        store,
        expect: fixture_expect(),
        policy: LoggingPolicy::default(),
        trace,
        ti,
        truth,
    })
}

// ===== benign generator =====

/// Ordinary fleet traffic: paced reads while driving, one scheduled workshop
/// visit with unlocked writes and an authorized flash, then more reads. Runs
/// for at least `duration_ms` of trace time and must never raise an alert.
pub fn benign_traffic(seed: u64, duration_ms: u64) -> Scenario {
    let duration_ms = duration_ms.max(600_000);
    let mut store = fixture_store();
    let vehicle = store.vehicles.get_mut(DEFAULT_VEHICLE).expect("fixture vehicle");
    vehicle.maintenance = vec![MaintenanceWindow {
        start: 600_000,
        end: 1_200_000,
        workshop: "ws-1".into(),
    }];
    store.timeline.insert(
        DEFAULT_VEHICLE.into(),
        vec![
            sample(0, 0, false),
            sample(30_000, 55, false),
            sample(580_000, 0, false),
            sample(600_000, 0, true),
            sample(1_200_000, 0, false),
            sample(1_260_000, 50, false),
        ],
    );

    let mut b = Builder::new(seed, 10_000);
    let read_phase = |b: &mut Builder, from: u64, until: u64| {
        b.t = from;
        let mut failures = 0u32;
        while b.t < until {
            let gap = b.rng.random_range(20_000..40_000);
            match b.rng.random_range(0..10u8) {
                0..=4 => {
                    let did: u16 = *[0xF186u16, 0xF190, 0x0042].choose(&mut b.rng).expect("non-empty");
                    b.routed(TESTER, &[0x22, (did >> 8) as u8, did as u8],
                             &pos(0x22, &[(did >> 8) as u8, did as u8, 0x11]), gap);
                }
                5..=7 => {
                    let sf = if b.rng.random_bool(0.5) { 0x01 } else { 0x02 };
                    b.routed(TESTER, &[0x19, sf, 0xFF], &pos(0x19, &[sf, 0xFF, 0x00]), gap);
                }
                8 => {
                    b.routed(TESTER, &[0x3E, 0x00], &pos(0x3E, &[0x00]), gap);
                }
                _ => {
                    // An isolated, widely spaced lookup miss.
                    if failures < 3 {
                        failures += 1;
                        b.routed(TESTER, &[0x22, 0x0A, 0x0A], &neg(0x22, 0x31), gap.max(95_000));
                    } else {
                        b.routed(TESTER, &[0x3E, 0x00], &pos(0x3E, &[0x00]), gap);
                    }
                }
            }
        }
    };

    // Phase A: on the road, reads only.
    read_phase(&mut b, 10_000, 560_000.min(duration_ms.saturating_sub(20_000)));

    if duration_ms > 700_000 {
        // Phase B: scheduled workshop visit.
        b.t = 610_000;
        b.routed(WORKSHOP_TOOL, &[0x10, 0x03], &pos(0x10, &[0x03, 0x00, 0x32]), 4_000);
        b.unlock(WORKSHOP_TOOL);
        let v: [u8; 2] = b.rng.random();
        b.routed(WORKSHOP_TOOL, &[0x2E, 0x00, 0x42, v[0], v[1]], &pos(0x2E, &[0x00, 0x42]), 20_000);
        b.routed(WORKSHOP_TOOL, &[0x2A, 0x02, 0xE1], &pos(0x2A, &[]), 15_000);
        b.routed(WORKSHOP_TOOL, &[0x2A, 0x04], &pos(0x2A, &[]), 15_000);
        b.routed(WORKSHOP_TOOL, &[0x31, 0x01, 0x0B, 0x00], &pos(0x31, &[0x01, 0x0B, 0x00]), 15_000);
        // Authorized flash of the current release.
        let cur = fw_current();
        b.routed(WORKSHOP_TOOL, &[0x34, 0x00, 0x44, 0x08, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x40],
                 &pos(0x34, &[0x20, 0x01, 0x00]), 3_000);
        let mut blk1 = vec![0x36, 0x01];
        blk1.extend_from_slice(&cur[..32]);
        b.routed(WORKSHOP_TOOL, &blk1, &pos(0x36, &[0x01]), 3_000);
        let mut blk2 = vec![0x36, 0x02];
        blk2.extend_from_slice(&cur[32..]);
        b.routed(WORKSHOP_TOOL, &blk2, &pos(0x36, &[0x02]), 3_000);
        b.routed(WORKSHOP_TOOL, &[0x37], &pos(0x37, &[]), 15_000);
        let v: [u8; 2] = b.rng.random();
        b.routed(WORKSHOP_TOOL, &[0x2E, 0xF1, 0x90, v[0], v[1]], &pos(0x2E, &[0xF1, 0x90]), 15_000);
        b.routed(WORKSHOP_TOOL, &[0x10, 0x01], &pos(0x10, &[0x01, 0x00, 0x32]), 10_000);

        // Phase C: back on the road.
        if duration_ms > 1_260_000 {
            read_phase(&mut b, 1_260_000, duration_ms);
        }
    }

    Scenario {
        technique: None,
        seed,
        vehicle_id: DEFAULT_VEHICLE.into(),
        store,
        expect: fixture_expect(),
        policy: LoggingPolicy::default(),
        trace: b.finish(),
        ti: Vec::new(),
        truth: Vec::new(),
    }
}

// ===== tests =====

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::trace::{parse_trace, render_trace};

    #[test]
    fn every_cataloged_technique_has_a_scenario() {
        for t in catalog::catalog() {
            let scenario = simulate(&t.id, 7).unwrap_or_else(|_| panic!("no scenario for {}", t.id));
            assert_eq!(scenario.technique.as_deref(), Some(t.id.as_str()));
            if t.id.starts_with("AT-RD") {
                assert!(scenario.trace.is_empty());
            }
        }
        assert!(matches!(simulate("AT-XX-1", 7), Err(SimError::UnknownTechnique(_))));
    }

    #[test]
    fn traces_are_sorted_and_roundtrip() {
        for t in catalog::catalog() {
            let scenario = simulate(&t.id, 11).unwrap();
            assert!(
                scenario.trace.windows(2).all(|w| w[0].timestamp_ms <= w[1].timestamp_ms),
                "{} trace unsorted",
                t.id
            );
            let text = render_trace(&scenario.trace);
            assert_eq!(parse_trace(&text).unwrap(), scenario.trace, "{} trace roundtrip", t.id);
        }
    }

    #[test]
    fn scenarios_are_deterministic_per_seed() {
        let a = simulate("AT-PE-4", 42).unwrap();
        let b = simulate("AT-PE-4", 42).unwrap();
        assert_eq!(a.trace, b.trace);
        let c = simulate("AT-PE-4", 43).unwrap();
        assert_eq!(a.trace.len(), c.trace.len(), "seed must not change the shape");
    }

    #[test]
    fn pti_techniques_ship_matching_intel() {
        use crate::detect::DetectStrategy;
        for t in catalog::catalog() {
            let scenario = simulate(&t.id, 3).unwrap();
            if t.detection.contains(&DetectStrategy::Pti) {
                assert!(
                    scenario.ti.iter().any(|i| i.tags.contains(&t.id)),
                    "{} expects PTI but ships no matching intel",
                    t.id
                );
            } else {
                assert!(scenario.ti.is_empty(), "{} ships unexpected intel", t.id);
            }
        }
    }

    #[test]
    fn fixture_store_is_valid() {
        let store = fixture_store();
        let text = store.to_toml().unwrap();
        assert_eq!(ContextStore::from_toml(&text).unwrap(), store);
        assert!(!store.in_maintenance(DEFAULT_VEHICLE, ATTACK_START).unwrap());
    }

    #[test]
    fn benign_is_silent() {
        let scenario = benign_traffic(5, 1_300_000);
        let report = scenario.run().unwrap();
        assert!(!report.events.is_empty(), "benign traffic still produces events");
        assert!(
            report.alerts.is_empty(),
            "benign traffic raised: {:?}",
            report.alerts.iter().map(|a| &a.rule_id).collect::<Vec<_>>()
        );
    }

    #[test]
    fn eavesdropping_is_silent() {
        let scenario = simulate("AT-DS-14", 9).unwrap();
        let report = scenario.run().unwrap();
        assert!(report.alerts.is_empty());
        assert!(scenario.truth.is_empty());
    }

    #[test]
    fn brute_force_scenario_alerts() {
        let scenario = simulate("AT-PE-4", 1).unwrap();
        let report = scenario.run().unwrap();
        assert!(report.techniques().contains_key("AT-PE-4"));
        assert!(report.events.iter().any(|e| e.autosar_event_id == Some(103)));
    }
}
