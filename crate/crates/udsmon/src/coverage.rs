//! Catalog coverage runner: replays the simulated exercise for every
//! technique and scores what the pipeline produced against the catalog's
//! expectations.
//!
//! A technique passes when both halves hold. Logging: every expected
//! strategy contributed at least one event inside the ground-truth attack
//! intervals (a "various" row needs one event of any strategy; a
//! not-applicable row must stay silent there). Detection: every expected
//! strategy raised at least one alert tagged with the technique (a
//! not-applicable row must raise no alerts at all). Extra events or alerts
//! tagged with other techniques never fail a run — only silence where noise
//! is promised, or noise where silence is promised.

use serde::Serialize;
use thiserror::Error;

use crate::catalog::{self, AttackTechnique};
use crate::detect::pipeline::{AlertReport, PipelineError};
use crate::detect::DetectStrategy;
use crate::event::Strategy;
use crate::sim::{benign_traffic, simulate, Scenario, SimError};

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Outcome of one technique's exercise.
#[derive(Debug, Clone, Serialize)]
pub struct TechniqueVerdict {
    pub technique: String,
    pub name: String,
    pub logging_expected: Vec<Strategy>,
    pub logging_various: bool,
    /// Strategies that produced at least one event inside the truth windows.
    pub logging_observed: Vec<Strategy>,
    pub logging_pass: bool,
    pub detection_expected: Vec<DetectStrategy>,
    /// Strategies that raised at least one alert tagged with the technique.
    pub detection_observed: Vec<DetectStrategy>,
    pub detection_pass: bool,
    pub events: usize,
    pub alerts: usize,
    pub pass: bool,
}

/// Score one report against the catalog row it exercised.
pub fn assess(
    technique: &AttackTechnique,
    scenario: &Scenario,
    report: &AlertReport,
) -> TechniqueVerdict {
    let in_truth: Vec<Strategy> = report
        .events
        .iter()
        .filter(|e| scenario.in_truth(e.timestamp_ms))
        .map(|e| e.strategy)
        .collect();
    let logging_observed: Vec<Strategy> = [Strategy::Ir, Strategy::Fe, Strategy::Mfi]
        .into_iter()
        .filter(|s| in_truth.contains(s))
        .collect();
    let logging_pass = if technique.logging_various {
        !in_truth.is_empty()
    } else if technique.logging.is_empty() {
        in_truth.is_empty()
    } else {
        technique.logging.iter().all(|s| logging_observed.contains(s))
    };

    let detection_observed: Vec<DetectStrategy> =
        [DetectStrategy::Slp, DetectStrategy::Clc, DetectStrategy::Pti]
            .into_iter()
            .filter(|s| {
                report.alerts.iter().any(|a| {
                    a.strategy == *s && a.technique_tags.contains(&technique.id)
                })
            })
            .collect();
    let detection_pass = if technique.detection.is_empty() {
        report.alerts.is_empty()
    } else {
        technique.detection.iter().all(|s| detection_observed.contains(s))
    };

    TechniqueVerdict {
        technique: technique.id.clone(),
        name: technique.name.clone(),
        logging_expected: technique.logging.clone(),
        logging_various: technique.logging_various,
        logging_observed,
        logging_pass,
        detection_expected: technique.detection.clone(),
        detection_observed,
        detection_pass,
        events: report.events.len(),
        alerts: report.alerts.len(),
        pass: logging_pass && detection_pass,
    }
}

/// Verdicts for the whole catalog, in catalog order.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageMatrix {
    pub seed: u64,
    pub verdicts: Vec<TechniqueVerdict>,
}

impl CoverageMatrix {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn passed(&self) -> usize {
        self.verdicts.iter().filter(|v| v.pass).count()
    }

    pub fn failed(&self) -> Vec<&str> {
        self.verdicts.iter().filter(|v| !v.pass).map(|v| v.technique.as_str()).collect()
    }

    pub fn render_text(&self) -> String {
        fn strategies<T>(list: &[T], f: impl Fn(&T) -> &'static str) -> String {
            if list.is_empty() {
                "-".to_string()
            } else {
                list.iter().map(f).collect::<Vec<_>>().join("+")
            }
        }
        let mut out = String::new();
        out.push_str(&format!(
            "{:<11} {:<22} {:<22} {:>7} {:>7} {}\n",
            "technique", "logging exp->obs", "detection exp->obs", "events", "alerts", "verdict"
        ));
        for v in &self.verdicts {
            let exp = if v.logging_various {
                "various".to_string()
            } else {
                strategies(&v.logging_expected, |s| s.as_str())
            };
            let logging = format!("{}->{}", exp, strategies(&v.logging_observed, |s| s.as_str()));
            let detection = format!(
                "{}->{}",
                strategies(&v.detection_expected, |s| s.as_str()),
                strategies(&v.detection_observed, |s| s.as_str())
            );
            out.push_str(&format!(
                "{:<11} {:<22} {:<22} {:>7} {:>7} {}\n",
                v.technique,
                logging,
                detection,
                v.events,
                v.alerts,
                if v.pass { "pass" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "{} techniques, {} pass, {} fail\n",
            self.verdicts.len(),
            self.passed(),
            self.verdicts.len() - self.passed()
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("coverage matrix serializes")
    }
}

/// Outcome of the benign-traffic false-positive check.
#[derive(Debug, Clone, Serialize)]
pub struct BenignCheck {
    pub seed: u64,
    pub duration_ms: u64,
    pub events: usize,
    pub alerts: usize,
    /// Pass means the pipeline stayed completely silent.
    pub pass: bool,
}

/// Run the benign generator through the full pipeline.
pub fn check_benign(seed: u64, duration_ms: u64) -> Result<BenignCheck, CoverageError> {
    let scenario = benign_traffic(seed, duration_ms);
    let report = scenario.run()?;
    Ok(BenignCheck {
        seed,
        duration_ms,
        events: report.events.len(),
        alerts: report.alerts.len(),
        pass: report.alerts.is_empty(),
    })
}

/// Simulate, monitor and score every cataloged technique with one seed.
pub fn run(seed: u64) -> Result<CoverageMatrix, CoverageError> {
    let mut verdicts = Vec::new();
    for technique in catalog::catalog() {
        let scenario = simulate(&technique.id, seed)?;
        let report = scenario.run()?;
        verdicts.push(assess(&technique, &scenario, &report));
    }
    Ok(CoverageMatrix { seed, verdicts })
}

// ===== tests =====

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_catalog_passes_with_default_config() {
        let matrix = run(0xC0FFEE).expect("coverage run");
        assert_eq!(matrix.verdicts.len(), 53);
        assert!(matrix.all_pass(), "failing techniques: {:?}", matrix.failed());
    }

    #[test]
    fn renderers_cover_every_row() {
        let matrix = run(1).expect("coverage run");
        let text = matrix.render_text();
        for v in &matrix.verdicts {
            assert!(text.contains(&v.technique), "{} missing from text", v.technique);
        }
        let json: serde_json::Value = serde_json::from_str(&matrix.to_json()).unwrap();
        assert_eq!(json["verdicts"].as_array().unwrap().len(), 53);
        assert_eq!(json["seed"], 1);
    }

    #[test]
    fn verdict_fails_on_missing_detection() {
        let technique = crate::catalog::technique("AT-PE-4").unwrap();
        let scenario = simulate("AT-PE-4", 2).unwrap();
        let mut report = scenario.run().unwrap();
        report.alerts.retain(|a| !a.technique_tags.iter().any(|t| t == "AT-PE-4"));
        let verdict = assess(&technique, &scenario, &report);
        assert!(verdict.logging_pass);
        assert!(!verdict.detection_pass);
        assert!(!verdict.pass);
    }
}
