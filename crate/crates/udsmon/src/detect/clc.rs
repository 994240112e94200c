//! Contextualized Log Checks: assess a single event against backend context
//! (vehicle master data, firmware registry, sensitive references) and the
//! surrounding event neighbourhood.

use serde::{Deserialize, Serialize};

use crate::detect::{Alert, DetectError, DetectStrategy, EventPredicate, Severity, Stage};
use crate::event::{parse_u8, ContextData, SecurityEvent, Strategy, Violation};
use crate::store::{ContextStore, FirmwareStatus};

/// How far back the neighbourhood reaches, in trace milliseconds.
pub const DEFAULT_LOOKBACK_MS: u64 = 600_000;

fn default_unlock_sids() -> Vec<u8> {
    vec![0x27, 0x29]
}

/// The six context checks. Each rule applies exactly one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClcCheck {
    /// Maintenance-bound operation outside any maintenance window, or a
    /// development-only service in the wrong mode.
    VehicleStatus,
    /// Protected operation without a prior successful unlock (0x27 key
    /// accepted / 0x29 proof accepted) from the same source.
    Permission {
        #[serde(default = "default_unlock_sids")]
        unlock_sids: Vec<u8>,
    },
    /// The event contradicts a configuration stance recorded for the
    /// vehicle, e.g. `dtc_reporting = "locked"` versus an observed
    /// DTC-setting-off execution.
    Configuration { key: String, expected: String },
    /// A required companion event is absent from the neighbourhood.
    CrossLog {
        requires: EventPredicate,
        #[serde(default)]
        same_source: bool,
    },
    /// Transfer digest not an authorized release (unknown or downgrade).
    FirmwareHash,
    /// The event references a sensitive DID, memory range, routine or path.
    SensitiveReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClcRule {
    pub id: String,
    pub trigger: EventPredicate,
    pub check: ClcCheck,
    pub severity: Severity,
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookback_ms: Option<u64>,
}

impl ClcRule {
    fn lookback(&self) -> u64 {
        self.lookback_ms.unwrap_or(DEFAULT_LOOKBACK_MS)
    }
}

/// A successful unlock: key accepted (0x27, even SF) or proof of ownership
/// accepted (0x29, SF 0x03).
fn is_unlock(event: &SecurityEvent, unlock_sids: &[u8]) -> bool {
    if event.strategy != Strategy::Fe || !unlock_sids.contains(&event.sid) {
        return false;
    }
    let Some(sf) = event.context.field("sf").and_then(|v| parse_u8(&v)) else {
        return false;
    };
    match event.sid {
        0x27 => sf % 2 == 0 && sf != 0,
        0x29 => sf == 0x03,
        _ => true,
    }
}

fn sensitive_hit(store: &ContextStore, context: &ContextData) -> Option<String> {
    let did_hit = |dids: &[u16]| {
        dids.iter()
            .find(|d| store.is_sensitive_did(**d))
            .map(|d| format!("sensitive DID 0x{d:04x}"))
    };
    let mem_hit = |addr: u64, size: u64| {
        store
            .overlaps_sensitive_memory(addr, size)
            .then(|| format!("sensitive memory [0x{:x}, 0x{:x})", addr, addr + size))
    };
    match context {
        ContextData::DidList { dids, .. } => did_hit(dids),
        ContextData::ScalingDid { did, .. }
        | ContextData::DidWrite { did, .. }
        | ContextData::IoControl { did, .. } => did_hit(&[*did]),
        ContextData::MemoryRange { mem_addr, mem_size, .. }
        | ContextData::MemoryWrite { mem_addr, mem_size, .. } => mem_hit(*mem_addr, *mem_size),
        ContextData::DynamicDefine { source_dids, mem_addr, mem_size, .. } => {
            did_hit(source_dids).or_else(|| mem_hit(*mem_addr, *mem_size))
        }
        ContextData::Routine { rid, .. } => store
            .is_sensitive_rid(*rid)
            .then(|| format!("sensitive routine 0x{rid:04x}")),
        ContextData::FileTransfer { file_path, .. } => store
            .is_sensitive_path(file_path)
            .then(|| format!("sensitive path {file_path}")),
        _ => None,
    }
}

/// Evaluate one context rule against one triggering event.
///
/// `neighborhood` is the ordered event stream the event came from; checks
/// that correlate events only look back `lookback_ms` from the trigger.
/// Checks needing the store fail with `ContextUnavailable` when it is absent
/// so the caller can defer rather than drop the decision.
pub fn clc_evaluate(
    rule: &ClcRule,
    event: &SecurityEvent,
    store: Option<&ContextStore>,
    vehicle_id: &str,
    neighborhood: &[SecurityEvent],
) -> Result<Option<Alert>, DetectError> {
    if !rule.trigger.matches(event) {
        return Ok(None);
    }
    let need_store = || {
        store.ok_or_else(|| DetectError::ContextUnavailable(rule.id.clone()))
    };
    let unavailable = |_: crate::store::StoreError| DetectError::ContextUnavailable(rule.id.clone());

    let mut severity = rule.severity;
    let conflict: Option<String> = match &rule.check {
        ClcCheck::VehicleStatus => {
            let store = need_store()?;
            if event.violation == Some(Violation::Mode) {
                Some("development-only service executed in production mode".into())
            } else if !store.in_maintenance(vehicle_id, event.timestamp_ms).map_err(unavailable)? {
                Some("executed outside any scheduled maintenance window".into())
            } else {
                None
            }
        }
        ClcCheck::Permission { unlock_sids } => {
            let unlocked = neighborhood.iter().any(|other| {
                other.id != event.id
                    && other.ecu == event.ecu
                    && other.source == event.source
                    && other.timestamp_ms <= event.timestamp_ms
                    && event.timestamp_ms - other.timestamp_ms <= rule.lookback()
                    && is_unlock(other, unlock_sids)
            });
            (!unlocked).then(|| "no prior successful security unlock from this source".into())
        }
        ClcCheck::Configuration { key, expected } => {
            let store = need_store()?;
            let vehicle = store.vehicle(vehicle_id).map_err(unavailable)?;
            (vehicle.config.get(key) == Some(expected))
                .then(|| format!("vehicle configuration has {key} = {expected}"))
        }
        ClcCheck::CrossLog { requires, same_source } => {
            let companion = neighborhood.iter().any(|other| {
                other.id != event.id
                    && other.ecu == event.ecu
                    && (!same_source || other.source == event.source)
                    && other.timestamp_ms <= event.timestamp_ms
                    && event.timestamp_ms - other.timestamp_ms <= rule.lookback()
                    && requires.matches(other)
            });
            (!companion).then(|| "required companion event is missing".into())
        }
        ClcCheck::FirmwareHash => {
            let store = need_store()?;
            match event.context.digest() {
                None => None,
                Some(digest) => {
                    let vehicle = store.vehicle(vehicle_id).map_err(unavailable)?;
                    let ecu_type = vehicle
                        .ecu(&event.ecu)
                        .ok_or_else(|| DetectError::ContextUnavailable(rule.id.clone()))?
                        .ecu_type
                        .clone();
                    match store.firmware_known(&ecu_type, digest).map_err(unavailable)? {
                        FirmwareStatus::AuthorizedCurrent => None,
                        FirmwareStatus::AuthorizedOlder => {
                            severity = Severity::Warn;
                            Some(format!("downgrade: digest {digest} is an older authorized release"))
                        }
                        FirmwareStatus::Unknown => {
                            severity = Severity::Critical;
                            Some(format!("digest {digest} is not an authorized release"))
                        }
                    }
                }
            }
        }
        ClcCheck::SensitiveReference => {
            let store = need_store()?;
            sensitive_hit(store, &event.context).map(|hit| format!("references {hit}"))
        }
    };

    Ok(conflict.map(|conflict| {
        Alert {
            id: String::new(),
            rule_id: rule.id.clone(),
            strategy: DetectStrategy::Clc,
            stage: Stage::Vsoc,
            severity,
            technique_tags: rule.tags.clone(),
            vehicle_id: vehicle_id.to_string(),
            ecu_id: Some(event.ecu.clone()),
            event_ids: vec![event.id],
            ti_item_ids: Vec::new(),
            window: None,
            timestamp_ms: event.timestamp_ms,
            explanation: format!("{} {} event on 0x{:02x}: {}", rule.id, event.strategy, event.sid, conflict),
        }
        .seal()
    }))
}

// ===== tests =====

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::hash_payload;
    use crate::store::{
        EcuEntry, FirmwareRelease, MaintenanceWindow, Mode, SensitiveDid, SensitiveRange,
        VehicleRecord,
    };

    fn store() -> ContextStore {
        let mut store = ContextStore::default();
        store.vehicles.insert(
            "VIN-1".into(),
            VehicleRecord {
                model: "otto-500".into(),
                config: [("dtc_reporting".to_string(), "locked".to_string())].into(),
                ecus: vec![EcuEntry {
                    id: "ecm".into(),
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
                FirmwareRelease { version: 1, digest: hash_payload(b"v1") },
                FirmwareRelease { version: 2, digest: hash_payload(b"v2") },
            ],
        );
        store.sensitive.dids.push(SensitiveDid { id: 0x0101, label: "crypto-key".into() });
        store.sensitive.ranges.push(SensitiveRange {
            addr: 0x4000_0000,
            size: 0x2000,
            label: "keys".into(),
        });
        store
    }

    fn fe(id: u64, t: u64, sid: u8, context: ContextData) -> SecurityEvent {
        SecurityEvent {
            id,
            strategy: Strategy::Fe,
            sid,
            ecu: "ecm".into(),
            source: 0x0E80,
            timestamp_ms: t,
            context,
            violation: None,
            autosar: false,
            autosar_event_id: None,
        }
    }

    fn session_event(id: u64, t: u64) -> SecurityEvent {
        fe(id, t, 0x10, ContextData::Subfunction { sid: 0x10, sf: 0x03, nrc: None })
    }

    fn vs_rule() -> ClcRule {
        ClcRule {
            id: "clc-vs-session".into(),
            trigger: EventPredicate::any().strategy(Strategy::Fe).sids(&[0x10]),
            check: ClcCheck::VehicleStatus,
            severity: Severity::Warn,
            tags: vec!["AT-PE-1".into()],
            lookback_ms: None,
        }
    }

    #[test]
    fn vehicle_status_maintenance_gate() {
        let store = store();
        let outside = session_event(1, 100_000);
        let alert = clc_evaluate(&vs_rule(), &outside, Some(&store), "VIN-1", &[]).unwrap();
        let alert = alert.expect("privileged session outside maintenance must alert");
        assert_eq!(alert.strategy, DetectStrategy::Clc);
        assert_eq!(alert.event_ids, vec![1]);
        assert!(alert.technique_tags.contains(&"AT-PE-1".to_string()));

        let inside = session_event(2, 1_500_000);
        assert!(clc_evaluate(&vs_rule(), &inside, Some(&store), "VIN-1", &[]).unwrap().is_none());
    }

    #[test]
    fn missing_store_defers() {
        let event = session_event(1, 100_000);
        assert!(matches!(
            clc_evaluate(&vs_rule(), &event, None, "VIN-1", &[]),
            Err(DetectError::ContextUnavailable(_))
        ));
    }

    #[test]
    fn non_matching_trigger_is_skipped() {
        let store = store();
        let read = fe(1, 100_000, 0x22, ContextData::DidList { sid: 0x22, dids: vec![0xF190], nrc: None });
        assert!(clc_evaluate(&vs_rule(), &read, Some(&store), "VIN-1", &[]).unwrap().is_none());
    }

    #[test]
    fn firmware_hash_classification() {
        let store = store();
        let rule = ClcRule {
            id: "clc-firmware-digest".into(),
            trigger: EventPredicate::any().strategy(Strategy::Fe).sids(&[0x37]),
            check: ClcCheck::FirmwareHash,
            severity: Severity::Warn,
            tags: vec!["AT-PS-1".into(), "AT-DE-3".into()],
            lookback_ms: None,
        };
        let exit = |id, digest: &str| {
            fe(id, 100_000, 0x37, ContextData::TransferExit {
                sid: 0x37,
                nrc: None,
                transfer_hash: Some(digest.to_string()),
            })
        };

        let bad = clc_evaluate(&rule, &exit(1, &hash_payload(b"attack")), Some(&store), "VIN-1", &[])
            .unwrap()
            .expect("unknown digest must alert");
        assert_eq!(bad.severity, Severity::Critical);

        let current =
            clc_evaluate(&rule, &exit(2, &hash_payload(b"v2")), Some(&store), "VIN-1", &[]).unwrap();
        assert!(current.is_none(), "current release must not alert");

        let older = clc_evaluate(&rule, &exit(3, &hash_payload(b"v1")), Some(&store), "VIN-1", &[])
            .unwrap()
            .expect("older release is a downgrade");
        assert_eq!(older.severity, Severity::Warn);
        assert!(older.explanation.contains("downgrade"));
    }

    #[test]
    fn sensitive_reference_checks() {
        let store = store();
        let rule = ClcRule {
            id: "clc-sensitive-read".into(),
            trigger: EventPredicate::any().strategy(Strategy::Fe).sids(&[0x22]),
            check: ClcCheck::SensitiveReference,
            severity: Severity::Critical,
            tags: vec!["AT-CL-3".into()],
            lookback_ms: None,
        };
        let benign = fe(1, 1_500_000, 0x22, ContextData::DidList {
            sid: 0x22,
            dids: vec![0xF186, 0xF190],
            nrc: None,
        });
        assert!(
            clc_evaluate(&rule, &benign, Some(&store), "VIN-1", &[]).unwrap().is_none(),
            "non-sensitive read during maintenance must pass all checks"
        );

        let hit = fe(2, 1_500_000, 0x22, ContextData::DidList {
            sid: 0x22,
            dids: vec![0xF186, 0x0101],
            nrc: None,
        });
        let alert = clc_evaluate(&rule, &hit, Some(&store), "VIN-1", &[]).unwrap().unwrap();
        assert!(alert.explanation.contains("0x0101"));

        let mem_rule = ClcRule {
            id: "clc-sensitive-memory".into(),
            trigger: EventPredicate::any().sids(&[0x23]),
            check: ClcCheck::SensitiveReference,
            severity: Severity::Critical,
            tags: vec!["AT-CL-4".into()],
            lookback_ms: None,
        };
        let read = fe(3, 0, 0x23, ContextData::MemoryRange {
            sid: 0x23,
            mem_addr: 0x4000_1FF0,
            mem_size: 0x40,
            nrc: None,
        });
        assert!(clc_evaluate(&mem_rule, &read, Some(&store), "VIN-1", &[]).unwrap().is_some());
    }

    #[test]
    fn permission_requires_prior_unlock() {
        let rule = ClcRule {
            id: "clc-perm-write".into(),
            trigger: EventPredicate::any().strategy(Strategy::Fe).sids(&[0x2E]),
            check: ClcCheck::Permission { unlock_sids: default_unlock_sids() },
            severity: Severity::Warn,
            tags: vec!["AT-DE-4".into()],
            lookback_ms: None,
        };
        let write = fe(5, 50_000, 0x2E, ContextData::DidWrite {
            sid: 0x2E,
            did: 0x0200,
            data_hash: hash_payload(b"x"),
            nrc: None,
        });

        // No unlock anywhere in the neighbourhood: alert, even without store.
        assert!(clc_evaluate(&rule, &write, None, "VIN-1", std::slice::from_ref(&write))
            .unwrap()
            .is_some());

        let unlock = fe(1, 40_000, 0x27, ContextData::Subfunction {
            sid: 0x27,
            sf: 0x02,
            nrc: None,
        });
        let hood = vec![unlock, write.clone()];
        assert!(clc_evaluate(&rule, &write, None, "VIN-1", &hood).unwrap().is_none());

        // A seed grant alone (odd SF) is not an unlock.
        let seed_only = vec![
            fe(1, 40_000, 0x27, ContextData::Subfunction { sid: 0x27, sf: 0x01, nrc: None }),
            write.clone(),
        ];
        assert!(clc_evaluate(&rule, &write, None, "VIN-1", &seed_only).unwrap().is_some());

        // An unlock from a different source does not count.
        let mut foreign = fe(1, 40_000, 0x27, ContextData::Subfunction {
            sid: 0x27,
            sf: 0x02,
            nrc: None,
        });
        foreign.source = 0x0702;
        let hood = vec![foreign, write.clone()];
        assert!(clc_evaluate(&rule, &write, None, "VIN-1", &hood).unwrap().is_some());
    }

    #[test]
    fn cross_log_companion() {
        let rule = ClcRule {
            id: "clc-crosslog-transfer".into(),
            trigger: EventPredicate::any().strategy(Strategy::Fe).sids(&[0x37]),
            check: ClcCheck::CrossLog {
                requires: EventPredicate::any().strategy(Strategy::Fe).sids(&[0x34]),
                same_source: true,
            },
            severity: Severity::Warn,
            tags: vec!["AT-AF-9".into()],
            lookback_ms: None,
        };
        let exit = fe(9, 80_000, 0x37, ContextData::TransferExit {
            sid: 0x37,
            nrc: None,
            transfer_hash: None,
        });
        assert!(clc_evaluate(&rule, &exit, None, "VIN-1", std::slice::from_ref(&exit)).unwrap().is_some());

        let download = fe(1, 70_000, 0x34, ContextData::MemoryRange {
            sid: 0x34,
            mem_addr: 0x0800_0000,
            mem_size: 0x1000,
            nrc: None,
        });
        let hood = vec![download, exit.clone()];
        assert!(clc_evaluate(&rule, &exit, None, "VIN-1", &hood).unwrap().is_none());
    }

    #[test]
    fn configuration_contradiction() {
        let store = store();
        let rule = ClcRule {
            id: "clc-config-dtc".into(),
            trigger: EventPredicate::any()
                .strategy(Strategy::Fe)
                .sids(&[0x85])
                .ctx("sf", &["0x02"]),
            check: ClcCheck::Configuration {
                key: "dtc_reporting".into(),
                expected: "locked".into(),
            },
            severity: Severity::Warn,
            tags: vec!["AT-DE-1".into()],
            lookback_ms: None,
        };
        let off = fe(1, 1_500_000, 0x85, ContextData::Subfunction {
            sid: 0x85,
            sf: 0x02,
            nrc: None,
        });
        assert!(
            clc_evaluate(&rule, &off, Some(&store), "VIN-1", &[]).unwrap().is_some(),
            "DTC-setting-off contradicts the locked stance even in maintenance"
        );

        let on = fe(2, 1_500_000, 0x85, ContextData::Subfunction {
            sid: 0x85,
            sf: 0x01,
            nrc: None,
        });
        assert!(clc_evaluate(&rule, &on, Some(&store), "VIN-1", &[]).unwrap().is_none());
    }
}
