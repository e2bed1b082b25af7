//! Simulation logs are arbitrary tool text; classification must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use std::sync::OnceLock;

static PATTERNS: OnceLock<(regex::Regex, regex::Regex)> = OnceLock::new();

fuzz_target!(|data: &str| {
    let (pass, fail) = PATTERNS.get_or_init(|| {
        (
            regex::Regex::new("TEST PASSED").unwrap(),
            regex::Regex::new("TEST FAILED|MISMATCH").unwrap(),
        )
    });
    let _ = rtlsquad_core::eda::report::classify_sim_log(data, pass, fail);
});
