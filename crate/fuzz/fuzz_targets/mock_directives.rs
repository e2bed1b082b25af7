//! Mock directive lines come from generated code; parsing must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = rtlsquad_core::eda::mock::parse_mock_directives(data);
});
