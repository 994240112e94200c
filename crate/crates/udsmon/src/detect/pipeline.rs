//! End-to-end plumbing: a diagnostic trace goes in, security events come
//! out of the sensor and flow monitor, the three detection strategies run
//! over the merged event log, and an [`AlertReport`] comes back.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::codec::UdsExchange;
use crate::detect::clc::clc_evaluate;
use crate::detect::pti::{fleet_tags, pti_evaluate, ThreatIntelItem, TiFeedError};
use crate::detect::rules::RuleSet;
use crate::detect::slp::slp_evaluate;
use crate::detect::{Alert, DetectError};
use crate::event::{SecurityEvent, Strategy};
use crate::flow::{run_flow_monitor, FlowError, MfiEvent, RoutingExpectation};
use crate::sensor::{LoggingPolicy, Sensor, SensorError};
use crate::store::{ContextStore, StoreError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("trace is not ordered by timestamp")]
    Unsorted,
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Feed(#[from] TiFeedError),
}

// ===== event generation =====

fn strategy_rank(strategy: Strategy) -> u8 {
    match strategy {
        Strategy::Ir => 0,
        Strategy::Fe => 1,
        Strategy::Mfi => 2,
    }
}

/// Run the logging side over a trace: the sensor pass over each ECU's own
/// link plus, when a routing expectation is configured, the flow monitor
/// over the whole trace. Events come back in a deterministic order with
/// ids assigned 1..=n.
pub fn generate_events(
    policy: &LoggingPolicy,
    store: &ContextStore,
    vehicle_id: &str,
    expect: Option<&RoutingExpectation>,
    trace: &[UdsExchange],
) -> Result<Vec<SecurityEvent>, PipelineError> {
    if trace.windows(2).any(|w| w[1].timestamp_ms < w[0].timestamp_ms) {
        return Err(PipelineError::Unsorted);
    }
    policy.validate()?;

    let mut events = Vec::new();
    let mut sensor = Sensor::new(policy, store, vehicle_id);
    for exchange in trace {
        // The in-ECU sensor only sees traffic addressed to it on its own
        // link; copies the gateway routed elsewhere belong to the flow
        // monitor.
        let on_home_link = expect
            .is_none_or(|e| e.ecu_link(&exchange.target_ecu) == Some(exchange.link.as_str()));
        if on_home_link {
            events.extend(sensor.observe(exchange));
        }
    }

    if let Some(expect) = expect {
        let mfi = run_flow_monitor(expect, policy, trace)?;
        events.extend(mfi.into_iter().map(MfiEvent::into_security_event));
    }

    events.sort_by(|a, b| {
        (a.timestamp_ms, strategy_rank(a.strategy), a.sid, &a.ecu, a.source).cmp(&(
            b.timestamp_ms,
            strategy_rank(b.strategy),
            b.sid,
            &b.ecu,
            b.source,
        ))
    });
    for (i, event) in events.iter_mut().enumerate() {
        event.id = (i + 1) as u64;
    }
    Ok(events)
}

// ===== detection =====

/// Run all three detection strategies over an event log. `store` powers
/// the CLC context checks and the PTI asset match; passing `None` degrades
/// PTI to a no-op and makes context-dependent CLC rules fail loudly rather
/// than silently skipping checks.
pub fn run_pipeline(
    events: &[SecurityEvent],
    rules: &RuleSet,
    store: Option<&ContextStore>,
    vehicle_id: &str,
    ti: &[ThreatIntelItem],
) -> Result<Vec<Alert>, PipelineError> {
    rules.validate()?;

    let mut alerts = Vec::new();
    for rule in &rules.slp {
        alerts.extend(slp_evaluate(rule, events, vehicle_id)?);
    }
    for rule in &rules.clc {
        for event in events {
            if let Some(alert) = clc_evaluate(rule, event, store, vehicle_id, events)? {
                alerts.push(alert);
            }
        }
    }
    if let Some(store) = store {
        if !ti.is_empty() {
            alerts.extend(pti_evaluate(ti, &fleet_tags(store), vehicle_id));
        }
    }

    alerts.sort_by(|a, b| {
        (a.timestamp_ms, &a.rule_id, &a.id).cmp(&(b.timestamp_ms, &b.rule_id, &b.id))
    });
    Ok(alerts)
}

// ===== report =====

/// Everything one monitored drive produced: the event log and the alerts
/// raised over it.
#[derive(Debug, Clone, Serialize)]
pub struct AlertReport {
    pub vehicle_id: String,
    #[serde(serialize_with = "serialize_events")]
    pub events: Vec<SecurityEvent>,
    pub alerts: Vec<Alert>,
}

fn serialize_events<S: serde::Serializer>(
    events: &[SecurityEvent],
    ser: S,
) -> Result<S::Ok, S::Error> {
    ser.collect_seq(events.iter().map(|e| e.to_line()))
}

impl AlertReport {
    /// Technique tag → ids of the alerts claiming it, for coverage math
    /// and the text report.
    pub fn techniques(&self) -> BTreeMap<String, Vec<String>> {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for alert in &self.alerts {
            for tag in &alert.technique_tags {
                map.entry(tag.clone()).or_default().push(alert.id.clone());
            }
        }
        map
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "vehicle {}: {} events, {} alerts\n",
            self.vehicle_id,
            self.events.len(),
            self.alerts.len()
        );
        for alert in &self.alerts {
            out.push_str(&format!(
                "{} t={} {} {} {} severity={} tags={} events={}\n",
                alert.id,
                alert.timestamp_ms,
                alert.strategy.as_str(),
                alert.stage.as_str(),
                alert.rule_id,
                alert.severity.as_str(),
                alert.technique_tags.join(","),
                alert
                    .event_ids
                    .iter()
                    .map(|id| id.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// One-call path from a parsed trace to the full report.
pub fn process_trace(
    policy: &LoggingPolicy,
    rules: &RuleSet,
    store: &ContextStore,
    expect: Option<&RoutingExpectation>,
    ti: &[ThreatIntelItem],
    vehicle_id: &str,
    trace: &[UdsExchange],
) -> Result<AlertReport, PipelineError> {
    let events = generate_events(policy, store, vehicle_id, expect, trace)?;
    let alerts = run_pipeline(&events, rules, Some(store), vehicle_id, ti)?;
    Ok(AlertReport { vehicle_id: vehicle_id.to_string(), events, alerts })
}

// ===== tests =====
