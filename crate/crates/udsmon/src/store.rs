//! VSOC-side context store: vehicle records, firmware registry, sensitive
//! identifiers and per-vehicle state timelines, persisted as a TOML document
//! with sections `[vehicles]`, `[firmware]`, `[sensitive]`, `[timeline]`.
//!
//! All intervals are half-open: a maintenance window `[start, end)` contains
//! `start` but not `end`, and a memory range `{addr, size}` covers
//! `[addr, addr + size)`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("store parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("store serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid store: {0}")]
    Invalid(String),
    #[error("unknown vehicle {0}")]
    UnknownVehicle(String),
    #[error("unknown ecu type {0}")]
    UnknownEcuType(String),
}

/// Production vs development build of an ECU (or vehicle state sample).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Production,
    Development,
}

/// One ECU installed in a vehicle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcuEntry {
    pub id: String,
    pub ecu_type: String,
    pub mode: Mode,
}

/// A planned workshop visit, half-open `[start, end)` in trace milliseconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaintenanceWindow {
    pub start: u64,
    pub end: u64,
    pub workshop: String,
}

/// Per-vehicle master data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct VehicleRecord {
    #[serde(default)]
    pub model: String,
    /// Expected configuration snapshot, e.g. `dtc_setting = "on"`.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
    #[serde(default)]
    pub ecus: Vec<EcuEntry>,
    #[serde(default)]
    pub maintenance: Vec<MaintenanceWindow>,
}

impl VehicleRecord {
    pub fn ecu(&self, ecu_id: &str) -> Option<&EcuEntry> {
        self.ecus.iter().find(|e| e.id == ecu_id)
    }
}

/// One authorized firmware release for an ECU type. Version ordering is the
/// explicit integer, not derived from strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirmwareRelease {
    pub version: u32,
    /// Lowercase hex digest as produced by the transfer-hash logging.
    pub digest: String,
}

/// Outcome of checking a digest against the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirmwareStatus {
    AuthorizedCurrent,
    AuthorizedOlder,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveDid {
    pub id: u16,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveRange {
    pub addr: u64,
    pub size: u64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveRid {
    pub id: u16,
    pub label: String,
}

/// Identifiers whose access is worth an alert by itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SensitiveRegistry {
    #[serde(default)]
    pub dids: Vec<SensitiveDid>,
    #[serde(default)]
    pub ranges: Vec<SensitiveRange>,
    #[serde(default)]
    pub rids: Vec<SensitiveRid>,
    /// Path prefixes; `/secrets/` marks everything below it sensitive.
    #[serde(default)]
    pub paths: Vec<String>,
}

/// One vehicle-state sample; values hold until the next sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSample {
    pub t: u64,
    /// km/h.
    pub speed: u32,
    pub mode: Mode,
    pub workshop_session_active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campaign: Option<String>,
}

/// The whole store. Cheap to clone; detection takes an immutable snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ContextStore {
    #[serde(default)]
    pub vehicles: BTreeMap<String, VehicleRecord>,
    /// ecu_type → authorized releases.
    #[serde(default)]
    pub firmware: BTreeMap<String, Vec<FirmwareRelease>>,
    #[serde(default)]
    pub sensitive: SensitiveRegistry,
    /// vehicle id → ordered samples.
    #[serde(default)]
    pub timeline: BTreeMap<String, Vec<StateSample>>,
}

impl ContextStore {
    pub fn vehicle(&self, vehicle_id: &str) -> Result<&VehicleRecord, StoreError> {
        self.vehicles
            .get(vehicle_id)
            .ok_or_else(|| StoreError::UnknownVehicle(vehicle_id.to_string()))
    }

    /// True iff `timestamp` lies inside a maintenance window of the vehicle.
    pub fn in_maintenance(&self, vehicle_id: &str, timestamp: u64) -> Result<bool, StoreError> {
        let v = self.vehicle(vehicle_id)?;
        Ok(v.maintenance.iter().any(|w| w.start <= timestamp && timestamp < w.end))
    }

    /// Classify a transfer digest against the authorized releases of a type.
    pub fn firmware_known(
        &self,
        ecu_type: &str,
        digest: &str,
    ) -> Result<FirmwareStatus, StoreError> {
        let releases = self
            .firmware
            .get(ecu_type)
            .ok_or_else(|| StoreError::UnknownEcuType(ecu_type.to_string()))?;
        let current = releases.iter().map(|r| r.version).max();
        for r in releases {
            if r.digest == digest {
                return Ok(if Some(r.version) == current {
                    FirmwareStatus::AuthorizedCurrent
                } else {
                    FirmwareStatus::AuthorizedOlder
                });
            }
        }
        Ok(FirmwareStatus::Unknown)
    }

    pub fn is_sensitive_did(&self, did: u16) -> bool {
        self.sensitive.dids.iter().any(|d| d.id == did)
    }

    pub fn is_sensitive_rid(&self, rid: u16) -> bool {
        self.sensitive.rids.iter().any(|r| r.id == rid)
    }

    pub fn is_sensitive_path(&self, path: &str) -> bool {
        self.sensitive.paths.iter().any(|p| path.starts_with(p.as_str()))
    }

    /// True iff `[addr, addr + size)` intersects a sensitive range. A
    /// zero-size query is the empty interval and never overlaps.
    pub fn overlaps_sensitive_memory(&self, addr: u64, size: u64) -> bool {
        if size == 0 {
            return false;
        }
        let end = addr.saturating_add(size);
        self.sensitive
            .ranges
            .iter()
            .any(|r| addr < r.addr.saturating_add(r.size) && r.addr < end)
    }

    /// Latest sample at or before `t` for the vehicle.
    pub fn state_at(&self, vehicle_id: &str, t: u64) -> Option<&StateSample> {
        let samples = self.timeline.get(vehicle_id)?;
        samples.iter().take_while(|s| s.t <= t).last()
    }

    /// Validate invariants and normalize the sensitive ranges.
    pub fn normalize(mut self) -> Result<Self, StoreError> {
        for (vid, v) in &self.vehicles {
            let mut windows = v.maintenance.clone();
            windows.sort_by_key(|w| w.start);
            for w in &windows {
                if w.end < w.start {
                    return Err(StoreError::Invalid(format!(
                        "vehicle {vid}: maintenance window ends before it starts ({}..{})",
                        w.start, w.end
                    )));
                }
            }
            for pair in windows.windows(2) {
                if pair[1].start < pair[0].end {
                    return Err(StoreError::Invalid(format!(
                        "vehicle {vid}: overlapping maintenance windows"
                    )));
                }
            }
        }
        for (ecu_type, releases) in &self.firmware {
            let mut versions: Vec<u32> = releases.iter().map(|r| r.version).collect();
            versions.sort_unstable();
            if versions.windows(2).any(|w| w[0] == w[1]) {
                return Err(StoreError::Invalid(format!(
                    "firmware {ecu_type}: duplicate version number"
                )));
            }
            let mut digests: Vec<&str> = releases.iter().map(|r| r.digest.as_str()).collect();
            digests.sort_unstable();
            if digests.windows(2).any(|w| w[0] == w[1]) {
                return Err(StoreError::Invalid(format!(
                    "firmware {ecu_type}: duplicate digest"
                )));
            }
        }
        for (vid, samples) in &self.timeline {
            if samples.windows(2).any(|w| w[1].t <= w[0].t) {
                return Err(StoreError::Invalid(format!(
                    "timeline {vid}: timestamps not strictly increasing"
                )));
            }
        }

        // Canonicalize sensitive ranges: drop empties, sort, merge overlaps.
        let mut ranges: Vec<SensitiveRange> =
            self.sensitive.ranges.drain(..).filter(|r| r.size > 0).collect();
        ranges.sort_by_key(|r| (r.addr, r.size));
        let mut merged: Vec<SensitiveRange> = Vec::with_capacity(ranges.len());
        for r in ranges {
            match merged.last_mut() {
                Some(last) if r.addr < last.addr.saturating_add(last.size) => {
                    let last_end = last.addr.saturating_add(last.size);
                    let end = r.addr.saturating_add(r.size).max(last_end);
                    last.size = end - last.addr;
                    if !last.label.split('+').any(|l| l == r.label) {
                        last.label.push('+');
                        last.label.push_str(&r.label);
                    }
                }
                _ => merged.push(r),
            }
        }
        self.sensitive.ranges = merged;
        Ok(self)
    }

    pub fn to_toml(&self) -> Result<String, StoreError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, StoreError> {
        let store: ContextStore = toml::from_str(text)?;
        store.normalize()
    }
}

pub fn load_store(path: &Path) -> Result<ContextStore, StoreError> {
    ContextStore::from_toml(&fs::read_to_string(path)?)
}

pub fn save_store(store: &ContextStore, path: &Path) -> Result<(), StoreError> {
    Ok(fs::write(path, store.to_toml()?)?)
}

// ===== tests =====
