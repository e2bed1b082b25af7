//! Agent replies are untrusted model output; extraction must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = rtlsquad_core::runtime::payload::extract_reply(data);
});
