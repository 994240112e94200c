//! The default detection rule set and its config-file round-trip.
//!
//! Rules are data, not code: an SLP rule is a predicate plus window
//! parameters, a CLC rule is a trigger predicate plus a consistency check.
//! The defaults below cover every detectable catalog technique that SLP or
//! CLC is expected to flag; operators can extend or replace them via a
//! rules file in the same dialect.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::detect::clc::{ClcCheck, ClcRule};
use crate::detect::slp::{GroupKey, SlpRule};
use crate::detect::{DetectError, EventPredicate, Severity};
use crate::event::{MfiKind, Strategy, Violation};

/// A complete rule configuration: every SLP window rule and every CLC
/// consistency rule the pipeline should run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    #[serde(default)]
    pub slp: Vec<SlpRule>,
    #[serde(default)]
    pub clc: Vec<ClcRule>,
}

impl RuleSet {
    /// Structural validation plus a catalog check: every technique tag on
    /// every rule must name one of the cataloged techniques, otherwise an
    /// alert could claim a technique that does not exist.
    pub fn validate(&self) -> Result<(), DetectError> {
        let known: BTreeSet<String> = catalog::technique_ids().into_iter().collect();
        let mut ids = BTreeSet::new();
        for rule in &self.slp {
            rule.validate()?;
            if !ids.insert(rule.id.clone()) {
                return Err(DetectError::InvalidRule {
                    rule: rule.id.clone(),
                    reason: "duplicate rule id".into(),
                });
            }
            check_tags(&rule.id, &rule.tags, &known)?;
        }
        for rule in &self.clc {
            if !ids.insert(rule.id.clone()) {
                return Err(DetectError::InvalidRule {
                    rule: rule.id.clone(),
                    reason: "duplicate rule id".into(),
                });
            }
            check_tags(&rule.id, &rule.tags, &known)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, DetectError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, DetectError> {
        let rules: RuleSet = toml::from_str(text)?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn load(path: &Path) -> Result<Self, DetectError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), DetectError> {
        Ok(fs::write(path, self.to_toml()?)?)
    }
}

fn check_tags(
    rule: &str,
    tags: &[String],
    known: &BTreeSet<String>,
) -> Result<(), DetectError> {
    if tags.is_empty() {
        return Err(DetectError::InvalidRule {
            rule: rule.into(),
            reason: "rule carries no technique tags".into(),
        });
    }
    for tag in tags {
        if !known.contains(tag) {
            return Err(DetectError::InvalidRule {
                rule: rule.into(),
                reason: format!("unknown technique tag {tag}"),
            });
        }
    }
    Ok(())
}

// ===== default rules =====

fn tags(ids: &[&str]) -> Vec<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

fn slp(
    id: &str,
    predicate: EventPredicate,
    threshold: usize,
    window_ms: u64,
    severity: Severity,
    tag_ids: &[&str],
) -> SlpRule {
    SlpRule {
        id: id.into(),
        predicate,
        threshold,
        window_ms,
        group_by: vec![GroupKey::Ecu, GroupKey::Source],
        severity,
        tags: tags(tag_ids),
    }
}

fn clc(id: &str, trigger: EventPredicate, check: ClcCheck, severity: Severity, tag_ids: &[&str]) -> ClcRule {
    ClcRule {
        id: id.into(),
        trigger,
        check,
        severity,
        tags: tags(tag_ids),
        lookback_ms: None,
    }
}

fn ir() -> EventPredicate {
    EventPredicate::any().strategy(Strategy::Ir)
}

fn fe(sid: u8) -> EventPredicate {
    EventPredicate::any().strategy(Strategy::Fe).sids(&[sid])
}

fn mfi(kind: MfiKind) -> EventPredicate {
    EventPredicate::any().strategy(Strategy::Mfi).ctx("kind", &[kind.as_str()])
}

fn nrc_values(nrcs: &[u8]) -> Vec<String> {
    nrcs.iter().map(|n| format!("0x{n:02x}")).collect()
}

fn ir_nrc(sids: &[u8], nrcs: &[u8]) -> EventPredicate {
    let mut p = ir();
    if !sids.is_empty() {
        p = p.sids(sids);
    }
    let owned = nrc_values(nrcs);
    let refs: Vec<&str> = owned.iter().map(String::as_str).collect();
    p.ctx("nrc", &refs)
}

fn default_slp_rules() -> Vec<SlpRule> {
    use Severity::{Critical, Warn};
    vec![
        // Security-access abuse.
        slp("slp-sa-bruteforce", ir_nrc(&[0x27], &[0x35]), 10, 60_000, Warn,
            &["AT-PE-4", "AT-PE-3"]),
        slp("slp-sa-lockout", ir_nrc(&[0x27], &[0x36, 0x37]), 3, 60_000, Warn,
            &["AT-AF-4"]),
        slp("slp-seed-without-key", mfi(MfiKind::BadSequence).sids(&[0x27]), 1, 1_000, Warn,
            &["AT-DS-5"]),
        slp("slp-challenge-without-proof", mfi(MfiKind::BadSequence).sids(&[0x29]), 1, 1_000,
            Warn, &["AT-DS-9"]),
        // Discovery sweeps.
        slp("slp-scan-unsupported", ir_nrc(&[], &[0x11, 0x12]), 10, 60_000, Warn,
            &["AT-DS-1", "AT-DS-2", "AT-DS-4"]),
        slp("slp-session-probe", ir().sids(&[0x10]), 5, 30_000, Warn,
            &["AT-DS-3", "AT-AF-3"]),
        slp("slp-did-enum", ir_nrc(&[0x22], &[0x31]), 10, 60_000, Warn, &["AT-DS-11"]),
        slp("slp-routine-enum", ir().sids(&[0x31]), 10, 60_000, Warn, &["AT-DS-12"]),
        slp("slp-file-discovery", ir().sids(&[0x38]), 5, 60_000, Warn, &["AT-DS-13"]),
        // Volume anomalies.
        slp("slp-flood", EventPredicate::any(), 30, 10_000, Critical, &["AT-AF-1"]),
        slp("slp-busy", ir_nrc(&[], &[0x21]), 5, 10_000, Warn, &["AT-AF-2"]),
        slp("slp-periodic-burst", fe(0x2A), 5, 30_000, Warn,
            &["AT-CL-2", "AT-AF-5.2", "AT-AF-6"]),
        slp("slp-roe-burst", fe(0x86), 3, 30_000, Warn, &["AT-CL-1", "AT-AF-5.1"]),
        slp("slp-dtc-read-sweep", fe(0x19), 10, 30_000, Warn, &["AT-CL-6"]),
        slp("slp-transfer-abort", ir_nrc(&[0x37], &[0x24]), 3, 60_000, Warn, &["AT-AF-9"]),
        // Repeated state-changing services.
        slp("slp-reset-repeat", EventPredicate::any().sids(&[0x11]), 3, 60_000, Warn,
            &["AT-AF-14"]),
        slp("slp-io-repeat", EventPredicate::any().sids(&[0x2F]), 5, 60_000, Warn,
            &["AT-AF-7"]),
        slp("slp-did-write-repeat", EventPredicate::any().sids(&[0x2E]), 5, 60_000, Warn,
            &["AT-AF-15"]),
        slp("slp-file-repeat", EventPredicate::any().sids(&[0x38]), 5, 60_000, Warn,
            &["AT-AF-16"]),
        slp("slp-mem-write-repeat", EventPredicate::any().sids(&[0x3D, 0x34]), 5, 60_000, Warn,
            &["AT-AF-17"]),
        slp("slp-download-repeat", EventPredicate::any().sids(&[0x34, 0x36, 0x37]), 8, 60_000,
            Warn, &["AT-PS-1"]),
        slp("slp-routine-repeat", EventPredicate::any().sids(&[0x31]), 5, 60_000, Warn,
            &["AT-AF-10"]),
        // Flow-integrity bursts, grouped per ECU because the source field
        // of tampered traffic is not trustworthy.
        SlpRule {
            id: "slp-mitm-tamper".into(),
            predicate: mfi(MfiKind::ModifiedInTransit),
            threshold: 3,
            window_ms: 60_000,
            group_by: vec![GroupKey::Ecu],
            severity: Critical,
            tags: tags(&["AT-LM-1"]),
        },
        SlpRule {
            id: "slp-foreign-source".into(),
            predicate: mfi(MfiKind::UnexpectedSource),
            threshold: 3,
            window_ms: 60_000,
            group_by: vec![GroupKey::Ecu],
            severity: Warn,
            tags: tags(&["AT-AF-2", "AT-LM-1"]),
        },
    ]
}

fn default_clc_rules() -> Vec<ClcRule> {
    use Severity::{Critical, Warn};
    let vs = |id: &str, trigger: EventPredicate, tag_ids: &[&str]| {
        clc(id, trigger, ClcCheck::VehicleStatus, Warn, tag_ids)
    };
    let sensitive = |id: &str, trigger: EventPredicate, tag_ids: &[&str]| {
        clc(id, trigger, ClcCheck::SensitiveReference, Critical, tag_ids)
    };
    vec![
        // Vehicle-status checks: service use that only makes sense in a
        // workshop is suspicious outside one (or while moving).
        vs("clc-vs-session",
           fe(0x10).ctx("sf", &["0x02", "0x03", "0x04"]),
           &["AT-PE-1", "AT-DS-3", "AT-AF-11"]),
        vs("clc-vs-reset", fe(0x11), &["AT-AF-14"]),
        vs("clc-vs-dtc-clear", fe(0x14), &["AT-DE-2"]),
        vs("clc-vs-dtc-read",
           fe(0x19).ctx("sf", &["0x04", "0x06", "0x18", "0x19"]),
           &["AT-CL-6"]),
        vs("clc-vs-mem-read", fe(0x23), &["AT-CA-1", "AT-CL-4"]),
        vs("clc-vs-sa", fe(0x27), &["AT-PE-2", "AT-PE-3", "AT-PE-4", "AT-DS-6"]),
        vs("clc-vs-comm-ctrl", fe(0x28), &["AT-AF-13"]),
        vs("clc-vs-auth", fe(0x29), &["AT-PE-2", "AT-PE-5", "AT-DS-7", "AT-DS-8"]),
        vs("clc-vs-periodic", fe(0x2A), &["AT-CL-2", "AT-AF-5.2", "AT-AF-6"]),
        vs("clc-vs-dddid", fe(0x2C), &["AT-DE-5"]),
        vs("clc-vs-did-write", fe(0x2E), &["AT-AF-15"]),
        vs("clc-vs-io", fe(0x2F), &["AT-AF-7", "AT-AF-12"]),
        vs("clc-vs-routine", fe(0x31), &["AT-AF-8", "AT-AF-10", "AT-DS-12"]),
        vs("clc-vs-download", fe(0x34), &["AT-PS-1", "AT-DE-3", "AT-AF-17"]),
        vs("clc-vs-upload", fe(0x35), &["AT-CL-4"]),
        vs("clc-vs-transfer-exit", fe(0x37), &["AT-AF-9", "AT-PS-1"]),
        vs("clc-vs-file", fe(0x38), &["AT-CL-5", "AT-DS-13", "AT-AF-16"]),
        vs("clc-vs-mem-write", fe(0x3D), &["AT-AF-17"]),
        vs("clc-vs-sdt", fe(0x84), &["AT-DS-10"]),
        vs("clc-vs-dtc-setting", fe(0x85), &["AT-DE-1"]),
        vs("clc-vs-roe", fe(0x86), &["AT-CL-1", "AT-AF-5.1"]),
        vs("clc-vs-scan", ir_nrc(&[], &[0x11, 0x12]), &["AT-DS-1", "AT-DS-2", "AT-DS-4"]),
        vs("clc-vs-moving",
           EventPredicate::any().strategy(Strategy::Ir).violation(Violation::Speed),
           &["AT-AF-1"]),
        clc("clc-mfi-tamper",
            EventPredicate::any().strategy(Strategy::Mfi).ctx(
                "kind",
                &[MfiKind::ModifiedInTransit.as_str(), MfiKind::RoutedWithoutOriginal.as_str()],
            ),
            ClcCheck::VehicleStatus,
            Critical,
            &["AT-LM-1", "AT-PE-3"]),
        // Permission check: successful protected writes need a prior unlock
        // from the same tester.
        clc("clc-perm-write",
            EventPredicate::any().strategy(Strategy::Fe).sids(&[
                0x2C, 0x2E, 0x2F, 0x31, 0x34, 0x35, 0x36, 0x37, 0x38, 0x3D,
            ]),
            ClcCheck::Permission { unlock_sids: vec![0x27, 0x29] },
            Warn,
            &["AT-DE-4"]),
        // Configuration checks: a service succeeded that the vehicle
        // configuration says is locked out.
        clc("clc-config-dtc",
            fe(0x85).ctx("sf", &["0x02"]),
            ClcCheck::Configuration { key: "dtc_reporting".into(), expected: "locked".into() },
            Warn,
            &["AT-DE-1"]),
        clc("clc-config-comm",
            fe(0x28).ctx("sf", &["0x01", "0x02", "0x03"]),
            ClcCheck::Configuration { key: "comm_control".into(), expected: "locked".into() },
            Warn,
            &["AT-AF-13"]),
        // Cross-log checks: an effect without its cause in the lookback.
        clc("clc-crosslog-transfer",
            fe(0x37),
            ClcCheck::CrossLog {
                requires: fe(0x34),
                same_source: true,
            },
            Warn,
            &["AT-AF-9"]),
        clc("clc-crosslog-periodic-stop",
            fe(0x2A).ctx("transmission_mode", &["0x04"]),
            ClcCheck::CrossLog {
                requires: fe(0x2A).ctx("transmission_mode", &["0x01", "0x02", "0x03"]),
                same_source: true,
            },
            Warn,
            &["AT-AF-6"]),
        // Firmware-hash check on completed transfers.
        clc("clc-firmware-digest", fe(0x37), ClcCheck::FirmwareHash, Warn,
            &["AT-PS-1", "AT-DE-3"]),
        // Sensitive-reference checks.
        sensitive("clc-sensitive-did-read", fe(0x22), &["AT-CL-3", "AT-CA-1", "AT-DS-11"]),
        sensitive("clc-sensitive-did-write", fe(0x2E), &["AT-AF-15"]),
        sensitive("clc-sensitive-memory",
                  EventPredicate::any().strategy(Strategy::Fe).sids(&[
                      0x23, 0x2C, 0x34, 0x35, 0x3D,
                  ]),
                  &["AT-CA-1", "AT-CL-4", "AT-DE-5", "AT-AF-17"]),
        sensitive("clc-sensitive-rid", fe(0x31), &["AT-CA-1", "AT-DS-12", "AT-AF-8"]),
        sensitive("clc-sensitive-path", fe(0x38), &["AT-CL-5", "AT-DS-13", "AT-AF-16"]),
    ]
}

/// The rule set the pipeline runs when no rules file is given.
pub fn default_rules() -> RuleSet {
    RuleSet { slp: default_slp_rules(), clc: default_clc_rules() }
}

// ===== tests =====
