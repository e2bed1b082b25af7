//! Transcripts may be hand-edited or truncated; parsing must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = rtlsquad_core::doc::parse_transcript(data);
});
