//! Suspicious Log Patterns: count matching events in a sliding time window,
//! alert when the count reaches a threshold.
//!
//! Windows are consume-on-alert: once a group of events triggers an alert,
//! those events are spent and counting restarts, so a sustained burst yields
//! one alert per N occurrences rather than one per event.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::detect::{Alert, DetectError, DetectStrategy, EventPredicate, Severity, Stage};
use crate::event::SecurityEvent;

/// Keys a counting rule may partition its window state by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Ecu,
    Source,
    Vehicle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlpRule {
    pub id: String,
    pub predicate: EventPredicate,
    /// Matching events needed within the window before alerting (N >= 1).
    pub threshold: usize,
    /// Window length in trace milliseconds (W > 0).
    pub window_ms: u64,
    #[serde(default)]
    pub group_by: Vec<GroupKey>,
    pub severity: Severity,
    /// Attack techniques this pattern evidences.
    pub tags: Vec<String>,
}

impl SlpRule {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.threshold < 1 {
            return Err(DetectError::InvalidRule {
                rule: self.id.clone(),
                reason: "threshold must be at least 1".into(),
            });
        }
        if self.window_ms == 0 {
            return Err(DetectError::InvalidRule {
                rule: self.id.clone(),
                reason: "window must be positive".into(),
            });
        }
        Ok(())
    }

    fn group_key(&self, event: &SecurityEvent, vehicle_id: &str) -> String {
        let mut parts = Vec::new();
        for key in &self.group_by {
            match key {
                GroupKey::Ecu => parts.push(event.ecu.clone()),
                GroupKey::Source => parts.push(format!("0x{:04x}", event.source)),
                GroupKey::Vehicle => parts.push(vehicle_id.to_string()),
            }
        }
        parts.join("/")
    }
}

/// Evaluate one counting rule over an ordered event stream.
///
/// An alert fires the moment the group's in-window count reaches the
/// threshold; it references exactly those N events and resets the group.
pub fn slp_evaluate(
    rule: &SlpRule,
    events: &[SecurityEvent],
    vehicle_id: &str,
) -> Result<Vec<Alert>, DetectError> {
    rule.validate()?;
    if events.windows(2).any(|w| w[1].timestamp_ms < w[0].timestamp_ms) {
        return Err(DetectError::Unsorted);
    }

    let mut windows: BTreeMap<String, VecDeque<(u64, u64)>> = BTreeMap::new();
    let mut alerts = Vec::new();

    for event in events {
        if !rule.predicate.matches(event) {
            continue;
        }
        let window = windows.entry(rule.group_key(event, vehicle_id)).or_default();
        window.push_back((event.timestamp_ms, event.id));
        while let Some(&(oldest, _)) = window.front() {
            if event.timestamp_ms - oldest >= rule.window_ms {
                window.pop_front();
            } else {
                break;
            }
        }
        if window.len() == rule.threshold {
            let (start, _) = *window.front().expect("threshold >= 1");
            alerts.push(
                Alert {
                    id: String::new(),
                    rule_id: rule.id.clone(),
                    strategy: DetectStrategy::Slp,
                    stage: Stage::Vehicle,
                    severity: rule.severity,
                    technique_tags: rule.tags.clone(),
                    vehicle_id: vehicle_id.to_string(),
                    ecu_id: Some(event.ecu.clone()),
                    event_ids: window.iter().map(|&(_, id)| id).collect(),
                    ti_item_ids: Vec::new(),
                    window: Some((start, event.timestamp_ms)),
                    timestamp_ms: event.timestamp_ms,
                    explanation: format!(
                        "{} matching events within {} ms (rule {})",
                        rule.threshold, rule.window_ms, rule.id
                    ),
                }
                .seal(),
            );
            window.clear();
        }
    }
    Ok(alerts)
}

// ===== tests =====

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{ContextData, Strategy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fail_event(id: u64, t: u64) -> SecurityEvent {
        SecurityEvent {
            id,
            strategy: Strategy::Ir,
            sid: 0x27,
            ecu: "ecm".into(),
            source: 0x0E80,
            timestamp_ms: t,
            context: ContextData::Subfunction { sid: 0x27, sf: 0x02, nrc: Some(0x35) },
            violation: None,
            autosar: true,
            autosar_event_id: Some(103),
        }
    }

    fn sa_rule(threshold: usize, window_ms: u64) -> SlpRule {
        SlpRule {
            id: "slp-test".into(),
            predicate: EventPredicate::any().strategy(Strategy::Ir).sids(&[0x27]),
            threshold,
            window_ms,
            group_by: vec![GroupKey::Ecu, GroupKey::Source],
            severity: Severity::Warn,
            tags: vec!["AT-PE-4".into()],
        }
    }

    /// O(n²) reference: rescan the whole prefix at every event, consuming
    /// contributors on each alert.
    fn brute_force(rule: &SlpRule, events: &[SecurityEvent]) -> Vec<Vec<u64>> {
        let mut consumed: Vec<bool> = vec![false; events.len()];
        let mut alerts = Vec::new();
        for (i, event) in events.iter().enumerate() {
            if !rule.predicate.matches(event) {
                continue;
            }
            let key = rule.group_key(event, "v");
            let in_window: Vec<usize> = (0..=i)
                .filter(|&j| {
                    !consumed[j]
                        && rule.predicate.matches(&events[j])
                        && rule.group_key(&events[j], "v") == key
                        && event.timestamp_ms - events[j].timestamp_ms < rule.window_ms
                })
                .collect();
            if in_window.len() >= rule.threshold {
                alerts.push(in_window.iter().map(|&j| events[j].id).collect());
                for j in in_window {
                    consumed[j] = true;
                }
            }
        }
        alerts
    }

    #[test]
    fn ten_failures_one_alert() {
        let events: Vec<_> = (0..10).map(|i| fail_event(i + 1, i * 500)).collect();
        let alerts = slp_evaluate(&sa_rule(10, 60_000), &events, "v").unwrap();
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].event_ids, (1..=10).collect::<Vec<_>>());
        assert_eq!(alerts[0].window, Some((0, 4_500)));
    }

    #[test]
    fn nine_failures_no_alert() {
        let events: Vec<_> = (0..9).map(|i| fail_event(i + 1, i * 500)).collect();
        assert!(slp_evaluate(&sa_rule(10, 60_000), &events, "v").unwrap().is_empty());
    }

    #[test]
    fn window_excludes_stale_events() {
        // Two failures, then a long pause, then nine more: never ten inside
        // one window.
        let mut events: Vec<_> = (0..2).map(|i| fail_event(i + 1, i * 500)).collect();
        events.extend((0..9).map(|i| fail_event(i + 3, 120_000 + i * 500)));
        assert!(slp_evaluate(&sa_rule(10, 60_000), &events, "v").unwrap().is_empty());
    }

    #[test]
    fn reset_after_alert() {
        // 20 failures in a tight burst: exactly two alerts of ten each.
        let events: Vec<_> = (0..20).map(|i| fail_event(i + 1, i * 100)).collect();
        let alerts = slp_evaluate(&sa_rule(10, 60_000), &events, "v").unwrap();
        assert_eq!(alerts.len(), 2);
        assert_eq!(alerts[0].event_ids, (1..=10).collect::<Vec<_>>());
        assert_eq!(alerts[1].event_ids, (11..=20).collect::<Vec<_>>());
    }

    #[test]
    fn groups_count_independently() {
        let mut events = Vec::new();
        for i in 0..6 {
            let mut ev = fail_event(i + 1, i * 100);
            ev.source = if i % 2 == 0 { 0x0E80 } else { 0x0E81 };
            events.push(ev);
        }
        // Three per source: a threshold of 4 never fires, 3 fires twice.
        assert!(slp_evaluate(&sa_rule(4, 60_000), &events, "v").unwrap().is_empty());
        assert_eq!(slp_evaluate(&sa_rule(3, 60_000), &events, "v").unwrap().len(), 2);
    }

    #[test]
    fn unsorted_stream_rejected() {
        let events = vec![fail_event(1, 100), fail_event(2, 50)];
        assert!(matches!(
            slp_evaluate(&sa_rule(2, 60_000), &events, "v"),
            Err(DetectError::Unsorted)
        ));
    }

    #[test]
    fn invalid_rules_rejected() {
        assert!(slp_evaluate(&sa_rule(0, 60_000), &[], "v").is_err());
        assert!(slp_evaluate(&sa_rule(1, 0), &[], "v").is_err());
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        for round in 0..400 {
            let n = rng.random_range(0..120);
            let mut t = 0u64;
            let events: Vec<SecurityEvent> = (0..n)
                .map(|i| {
                    t += rng.random_range(0..3_000);
                    let mut ev = fail_event(i + 1, t);
                    ev.source = if rng.random_bool(0.3) { 0x0E81 } else { 0x0E80 };
                    if rng.random_bool(0.2) {
                        ev.sid = 0x22;
                    }
                    ev
                })
                .collect();
            let rule = sa_rule(rng.random_range(1..8), rng.random_range(1..20_000));
            let got: Vec<Vec<u64>> = slp_evaluate(&rule, &events, "v")
                .unwrap()
                .into_iter()
                .map(|a| a.event_ids)
                .collect();
            let want = brute_force(&rule, &events);
            assert_eq!(got, want, "round {round} diverged from oracle");
        }
    }

    #[test]
    fn monotone_in_threshold_and_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n = rng.random_range(1..80);
            let mut t = 0u64;
            let events: Vec<SecurityEvent> = (0..n)
                .map(|i| {
                    t += rng.random_range(0..2_000);
                    fail_event(i + 1, t)
                })
                .collect();
            let threshold = rng.random_range(2..8);
            let window = rng.random_range(1_000..15_000);
            let base = slp_evaluate(&sa_rule(threshold, window), &events, "v").unwrap().len();
            let lower_n =
                slp_evaluate(&sa_rule(threshold - 1, window), &events, "v").unwrap().len();
            let wider_w =
                slp_evaluate(&sa_rule(threshold, window * 2), &events, "v").unwrap().len();
            assert!(lower_n >= base, "lowering N decreased alerts");
            assert!(wider_w >= base, "widening W decreased alerts");
        }
    }
}
