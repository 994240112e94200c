//! Backend detection: turning security events plus context into alerts.
//!
//! Three strategies, mirrored by the submodules:
//!
//! * [`slp`] — suspicious log patterns: count matching events in a sliding
//!   window, alert at a threshold,
//! * [`clc`] — contextualized log checks: assess a single event against the
//!   context store and neighbouring events,
//! * [`pti`] — product threat intelligence: match tagged intel items against
//!   fleet asset tags.
//!
//! [`rules`] ships the default rule sets, [`pipeline`] wires everything into
//! one deterministic run.

pub mod clc;
pub mod pipeline;
pub mod pti;
pub mod rules;
pub mod slp;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::event::{SecurityEvent, Strategy, Violation};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("event stream is not ordered by timestamp")]
    Unsorted,
    #[error("invalid rule {rule}: {reason}")]
    InvalidRule { rule: String, reason: String },
    #[error("context store unavailable, alert for rule {0} deferred")]
    ContextUnavailable(String),
    #[error("rules io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("rules parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("rules serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
}

/// Which detection strategy produced an alert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectStrategy {
    #[serde(rename = "SLP")]
    Slp,
    #[serde(rename = "CLC")]
    Clc,
    #[serde(rename = "PTI")]
    Pti,
}

impl DetectStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectStrategy::Slp => "SLP",
            DetectStrategy::Clc => "CLC",
            DetectStrategy::Pti => "PTI",
        }
    }
}

/// Where in the pipeline the alert fired: counting rules can run on the
/// vehicle itself, context and intel checks need the backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Vehicle,
    Vsoc,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Vehicle => "vehicle",
            Stage::Vsoc => "vsoc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warn,
    Critical,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warn => "warn",
            Severity::Critical => "critical",
        }
    }
}

/// One constraint on a serialized context field: the field must be present
/// and its value must be one of `values`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextMatch {
    pub key: String,
    pub values: Vec<String>,
}

/// Predicate over a single security event. Empty `sids` means any SID;
/// absent strategy/violation constraints match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPredicate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sids: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<Violation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<ContextMatch>,
}

impl EventPredicate {
    pub fn any() -> Self {
        EventPredicate::default()
    }

    pub fn strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = Some(strategy);
        self
    }

    pub fn sids(mut self, sids: &[u8]) -> Self {
        self.sids = sids.to_vec();
        self
    }

    pub fn violation(mut self, violation: Violation) -> Self {
        self.violation = Some(violation);
        self
    }

    pub fn ctx(mut self, key: &str, values: &[&str]) -> Self {
        self.context.push(ContextMatch {
            key: key.to_string(),
            values: values.iter().map(|v| v.to_string()).collect(),
        });
        self
    }

    pub fn matches(&self, event: &SecurityEvent) -> bool {
        if let Some(strategy) = self.strategy {
            if event.strategy != strategy {
                return false;
            }
        }
        if !self.sids.is_empty() && !self.sids.contains(&event.sid) {
            return false;
        }
        if let Some(violation) = self.violation {
            if event.violation != Some(violation) {
                return false;
            }
        }
        self.context.iter().all(|m| {
            event.context.field(&m.key).is_some_and(|v| m.values.contains(&v))
        })
    }
}

/// One alert, from any of the three strategies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    /// Deterministic content-derived id.
    pub id: String,
    pub rule_id: String,
    pub strategy: DetectStrategy,
    pub stage: Stage,
    pub severity: Severity,
    pub technique_tags: Vec<String>,
    pub vehicle_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ecu_id: Option<String>,
    /// Contributing event ids (SLP: the N counted events; CLC: the trigger).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub event_ids: Vec<u64>,
    /// Contributing threat-intelligence item ids (PTI only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ti_item_ids: Vec<String>,
    /// [start, end] of the contributing events (SLP only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(u64, u64)>,
    pub timestamp_ms: u64,
    pub explanation: String,
}

impl Alert {
    /// Assign the content-derived id; call once all other fields are final.
    pub fn seal(mut self) -> Alert {
        let mut hasher = Sha256::new();
        hasher.update(self.rule_id.as_bytes());
        hasher.update([0x1F]);
        hasher.update(self.vehicle_id.as_bytes());
        hasher.update([0x1F]);
        if let Some(ecu) = &self.ecu_id {
            hasher.update(ecu.as_bytes());
        }
        hasher.update([0x1F]);
        for id in &self.event_ids {
            hasher.update(id.to_be_bytes());
        }
        for id in &self.ti_item_ids {
            hasher.update(id.as_bytes());
            hasher.update([0x1F]);
        }
        hasher.update(self.timestamp_ms.to_be_bytes());
        self.id = format!("A-{}", &hex::encode(hasher.finalize())[..12]);
        self
    }
}

// ===== tests =====

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::ContextData;

    fn event(strategy: Strategy, sid: u8, nrc: Option<u8>) -> SecurityEvent {
        SecurityEvent {
            id: 1,
            strategy,
            sid,
            ecu: "ecm".into(),
            source: 0x0E80,
            timestamp_ms: 0,
            context: ContextData::Subfunction { sid, sf: 0x01, nrc },
            violation: None,
            autosar: false,
            autosar_event_id: None,
        }
    }

    #[test]
    fn predicate_matching() {
        let p = EventPredicate::any()
            .strategy(Strategy::Ir)
            .sids(&[0x27])
            .ctx("nrc", &["0x35", "0x36"]);
        assert!(p.matches(&event(Strategy::Ir, 0x27, Some(0x35))));
        assert!(p.matches(&event(Strategy::Ir, 0x27, Some(0x36))));
        assert!(!p.matches(&event(Strategy::Ir, 0x27, Some(0x37))));
        assert!(!p.matches(&event(Strategy::Ir, 0x27, None)), "missing field never matches");
        assert!(!p.matches(&event(Strategy::Fe, 0x27, Some(0x35))));
        assert!(!p.matches(&event(Strategy::Ir, 0x10, Some(0x35))));
    }

    #[test]
    fn empty_predicate_matches_everything() {
        let p = EventPredicate::any();
        assert!(p.matches(&event(Strategy::Ir, 0x27, Some(0x35))));
        assert!(p.matches(&event(Strategy::Fe, 0x10, None)));
    }

    #[test]
    fn violation_constraint() {
        let p = EventPredicate::any().violation(Violation::Speed);
        let mut ev = event(Strategy::Ir, 0x11, None);
        assert!(!p.matches(&ev));
        ev.violation = Some(Violation::Speed);
        assert!(p.matches(&ev));
    }

    #[test]
    fn alert_ids_deterministic_and_distinct() {
        let base = Alert {
            id: String::new(),
            rule_id: "slp-sa-bruteforce".into(),
            strategy: DetectStrategy::Slp,
            stage: Stage::Vehicle,
            severity: Severity::Warn,
            technique_tags: vec!["AT-PE-4".into()],
            vehicle_id: "VIN-0001".into(),
            ecu_id: Some("ecm".into()),
            event_ids: vec![1, 2, 3],
            ti_item_ids: vec![],
            window: Some((0, 5_000)),
            timestamp_ms: 5_000,
            explanation: "x".into(),
        };
        let a = base.clone().seal();
        let b = base.clone().seal();
        assert_eq!(a.id, b.id);
        assert!(a.id.starts_with("A-") && a.id.len() == 14);

        let mut other = base.clone();
        other.event_ids = vec![1, 2, 4];
        assert_ne!(a.id, other.seal().id);
    }
}
