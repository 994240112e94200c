//! Product Threat Intelligence: tagged intel items matched against fleet
//! asset tags.
//!
//! Feed files are line-oriented `key=value` records:
//!
//! ```text
//! id=TI-0004 source=public tags=model:otto-500,AT-PE-3 text="replay tool published"
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{Alert, DetectStrategy, Severity, Stage};
use crate::event::{quote, split_pairs};
use crate::store::ContextStore;

#[derive(Debug, Error)]
pub enum TiFeedError {
    #[error("feed io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: missing field {field}")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: bad value for {field}: {value}")]
    BadValue { line: usize, field: &'static str, value: String },
    #[error("line {0}: malformed key=value syntax")]
    Syntax(usize),
    #[error("item {0} has no tags")]
    Untagged(String),
}

/// Provenance of an intel item; drives alert severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiSource {
    /// Published exploit or write-up.
    Public,
    /// Responsibly disclosed finding.
    Disclosed,
    /// In-house penetration-test result.
    InternalTest,
}

impl TiSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TiSource::Public => "public",
            TiSource::Disclosed => "disclosed",
            TiSource::InternalTest => "internal-test",
        }
    }

    pub fn parse(s: &str) -> Option<TiSource> {
        match s {
            "public" => Some(TiSource::Public),
            "disclosed" => Some(TiSource::Disclosed),
            "internal-test" => Some(TiSource::InternalTest),
            _ => None,
        }
    }
}

/// One feed entry. Tags mix asset facets (`model:...`, `ecu:...`, `sid:...`)
/// with attack-technique ids (`AT-...`); at least one tag is required.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreatIntelItem {
    pub id: String,
    pub source: TiSource,
    pub tags: Vec<String>,
    pub text: String,
}

impl ThreatIntelItem {
    pub fn technique_tags(&self) -> Vec<String> {
        self.tags.iter().filter(|t| t.starts_with("AT-")).cloned().collect()
    }
}

/// Asset tags describing the fleet: one `model:` tag per vehicle model and
/// one `ecu:` tag per ECU type in service.
pub fn fleet_tags(store: &ContextStore) -> BTreeSet<String> {
    let mut tags = BTreeSet::new();
    for vehicle in store.vehicles.values() {
        if !vehicle.model.is_empty() {
            tags.insert(format!("model:{}", vehicle.model));
        }
        for ecu in &vehicle.ecus {
            tags.insert(format!("ecu:{}", ecu.ecu_type));
        }
    }
    tags
}

/// One alert per item whose tags intersect the fleet's asset tags. A pure
/// function of its inputs; output is ordered by item id.
pub fn pti_evaluate(
    items: &[ThreatIntelItem],
    assets: &BTreeSet<String>,
    vehicle_id: &str,
) -> Vec<Alert> {
    let mut alerts: Vec<Alert> = items
        .iter()
        .filter(|item| item.tags.iter().any(|t| assets.contains(t)))
        .map(|item| {
            let matched: Vec<&str> = item
                .tags
                .iter()
                .filter(|t| assets.contains(*t))
                .map(|t| t.as_str())
                .collect();
            Alert {
                id: String::new(),
                rule_id: "pti-feed".into(),
                strategy: DetectStrategy::Pti,
                stage: Stage::Vsoc,
                severity: match item.source {
                    TiSource::Public => Severity::Critical,
                    TiSource::Disclosed | TiSource::InternalTest => Severity::Warn,
                },
                technique_tags: item.technique_tags(),
                vehicle_id: vehicle_id.to_string(),
                ecu_id: None,
                event_ids: Vec::new(),
                ti_item_ids: vec![item.id.clone()],
                window: None,
                timestamp_ms: 0,
                explanation: format!(
                    "intel item {} ({}) matches fleet assets {}: {}",
                    item.id,
                    item.source.as_str(),
                    matched.join(","),
                    item.text
                ),
            }
            .seal()
        })
        .collect();
    alerts.sort_by(|a, b| a.ti_item_ids.cmp(&b.ti_item_ids));
    alerts
}

// ===== feed file IO =====

pub fn item_to_line(item: &ThreatIntelItem) -> String {
    format!(
        "id={} source={} tags={} text={}",
        quote(&item.id),
        item.source.as_str(),
        quote(&item.tags.join(",")),
        quote(&item.text),
    )
}

pub fn item_from_line(line: &str, lineno: usize) -> Result<ThreatIntelItem, TiFeedError> {
    let pairs = split_pairs(line).map_err(|_| TiFeedError::Syntax(lineno))?;
    let get = |field: &'static str| -> Result<&str, TiFeedError> {
        pairs
            .iter()
            .find(|(k, _)| k == field)
            .map(|(_, v)| v.as_str())
            .ok_or(TiFeedError::MissingField { line: lineno, field })
    };
    let id = get("id")?.to_string();
    let source_raw = get("source")?;
    let source = TiSource::parse(source_raw).ok_or_else(|| TiFeedError::BadValue {
        line: lineno,
        field: "source",
        value: source_raw.to_string(),
    })?;
    let tags: Vec<String> = get("tags")?
        .split(',')
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect();
    if tags.is_empty() {
        return Err(TiFeedError::Untagged(id));
    }
    let text = get("text")?.to_string();
    Ok(ThreatIntelItem { id, source, tags, text })
}

pub fn render_feed(items: &[ThreatIntelItem]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&item_to_line(item));
        out.push('\n');
    }
    out
}

pub fn parse_feed(text: &str) -> Result<Vec<ThreatIntelItem>, TiFeedError> {
    let mut items = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        items.push(item_from_line(line, i + 1)?);
    }
    Ok(items)
}

pub fn load_feed(path: &Path) -> Result<Vec<ThreatIntelItem>, TiFeedError> {
    parse_feed(&fs::read_to_string(path)?)
}

pub fn save_feed(path: &Path, items: &[ThreatIntelItem]) -> Result<(), TiFeedError> {
    Ok(fs::write(path, render_feed(items))?)
}

// ===== tests =====

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::{IndexedRandom, SliceRandom};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn item(id: &str, source: TiSource, tags: &[&str]) -> ThreatIntelItem {
        ThreatIntelItem {
            id: id.into(),
            source,
            tags: tags.iter().map(|t| t.to_string()).collect(),
            text: "report".into(),
        }
    }

    fn assets(tags: &[&str]) -> BTreeSet<String> {
        tags.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn matching_item_alerts_with_copied_tags() {
        let items = vec![item("TI-1", TiSource::Public, &["model:otto-500", "AT-RD-2"])];
        let alerts = pti_evaluate(&items, &assets(&["model:otto-500"]), "VIN-1");
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].technique_tags, vec!["AT-RD-2"]);
        assert_eq!(alerts[0].severity, Severity::Critical);
        assert_eq!(alerts[0].ti_item_ids, vec!["TI-1"]);
    }

    #[test]
    fn disjoint_tags_stay_silent() {
        let items = vec![item("TI-1", TiSource::Public, &["model:other", "AT-RD-2"])];
        assert!(pti_evaluate(&items, &assets(&["model:otto-500"]), "VIN-1").is_empty());
    }

    #[test]
    fn severity_follows_source_kind() {
        let items = vec![
            item("TI-1", TiSource::Disclosed, &["model:x"]),
            item("TI-2", TiSource::InternalTest, &["model:x"]),
        ];
        let alerts = pti_evaluate(&items, &assets(&["model:x"]), "VIN-1");
        assert!(alerts.iter().all(|a| a.severity == Severity::Warn));
    }

    #[test]
    fn permutation_invariant_and_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let universe = ["model:a", "model:b", "ecu:x", "ecu:y", "sid:0x27", "AT-PE-4"];
        for _ in 0..200 {
            let mut items: Vec<ThreatIntelItem> = (0..rng.random_range(0..12))
                .map(|i| {
                    let n = rng.random_range(1..4);
                    let mut tags: Vec<&str> =
                        universe.choose_multiple(&mut rng, n).copied().collect();
                    tags.sort_unstable();
                    item(&format!("TI-{i}"), TiSource::Public, &tags)
                })
                .collect();
            let n_assets = rng.random_range(0..4);
            let fleet: BTreeSet<String> = universe
                .choose_multiple(&mut rng, n_assets)
                .map(|t| t.to_string())
                .collect();

            // Nested-loop oracle over item ids.
            let mut want: Vec<String> = items
                .iter()
                .filter(|it| it.tags.iter().any(|t| fleet.iter().any(|a| a == t)))
                .map(|it| it.id.clone())
                .collect();
            want.sort();

            let got: Vec<String> = pti_evaluate(&items, &fleet, "V")
                .into_iter()
                .map(|a| a.ti_item_ids[0].clone())
                .collect();
            assert_eq!(got, want);

            items.shuffle(&mut rng);
            let shuffled: Vec<String> = pti_evaluate(&items, &fleet, "V")
                .into_iter()
                .map(|a| a.ti_item_ids[0].clone())
                .collect();
            assert_eq!(shuffled, want, "order of the feed must not matter");
        }
    }

    #[test]
    fn feed_roundtrip() {
        let items = vec![
            item("TI-1", TiSource::Public, &["model:otto-500", "AT-PE-3"]),
            ThreatIntelItem {
                id: "TI-2".into(),
                source: TiSource::InternalTest,
                tags: vec!["ecu:ecm-m3".into()],
                text: "seed entropy too low on bench".into(),
            },
        ];
        let text = render_feed(&items);
        assert_eq!(parse_feed(&text).unwrap(), items);
        assert!(text.lines().next().unwrap().contains("tags=model:otto-500,AT-PE-3"));
    }

    #[test]
    fn untagged_items_rejected() {
        assert!(matches!(
            parse_feed("id=TI-9 source=public tags= text=x"),
            Err(TiFeedError::Untagged(_))
        ));
    }
}
