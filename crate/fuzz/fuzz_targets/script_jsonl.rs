//! Reply scripts are user-provided files; parsing must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = rtlsquad_core::runtime::script::ScriptedProvider::parse_records(data);
});
