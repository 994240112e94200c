//! udsmon — security monitoring for UDS (ISO 14229) diagnostic traffic.
//!
//! The crate models a small end-to-end pipeline:
//!
//! * [`codec`] — request/response wire format and the service registry,
//! * [`event`] — security events with per-service context data,
//! * [`store`] — the backend context store (vehicle inventory, firmware
//!   releases, sensitive references, vehicle state timeline),
//! * [`sensor`] — on-ECU logging: invalid-request and function-execution
//!   events under a configurable policy,
//! * [`flow`] — gateway/NIDS logging: message-flow inconsistency events,
//! * [`trace`] — line-oriented capture files,
//! * [`detect`] — backend detection: sliding-window counting, cross-log
//!   correlation, and threat-intelligence matching,
//! * [`catalog`] — the attack-technique catalog used to score coverage,
//! * [`sim`] — deterministic scenario and benign-traffic generators,
//! * [`coverage`] — the technique-by-technique coverage matrix.

pub mod catalog;
pub mod codec;
pub mod coverage;
pub mod detect;
pub mod event;
pub mod flow;
pub mod sensor;
pub mod sim;
pub mod store;
pub mod trace;

pub use codec::{UdsExchange, UdsRequest, UdsResponse};
pub use event::{ContextData, MfiKind, SecurityEvent, Strategy, Violation};
pub use sensor::{LoggingPolicy, Sensor};
pub use store::ContextStore;

// ===== book snippets compiled as doc-tests =====

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(services, "../../../book/src/services.md");
    chapter!(logging, "../../../book/src/logging.md");
    chapter!(flow, "../../../book/src/flow.md");
    chapter!(store, "../../../book/src/store.md");
    chapter!(detection, "../../../book/src/detection.md");
    chapter!(catalog, "../../../book/src/catalog.md");
    chapter!(pipeline, "../../../book/src/pipeline.md");
}
