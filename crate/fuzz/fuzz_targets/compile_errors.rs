//! Compiler output is arbitrary tool text; the scanner must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = rtlsquad_core::eda::report::parse_compile_errors(data);
});
