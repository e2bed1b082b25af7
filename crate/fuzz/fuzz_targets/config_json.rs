//! Config files are user-provided; deserialization and validation must never
//! panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = serde_json::from_str::<rtlsquad_core::orchestrator::OrchestratorConfig>(data) {
        let _ = cfg.validate();
    }
});
