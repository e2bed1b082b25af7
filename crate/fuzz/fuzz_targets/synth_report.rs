//! Synthesis reports are arbitrary tool text; every failure must be a
//! structured parse error, never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use std::collections::BTreeMap;

fuzz_target!(|data: &str| {
    let labels = rtlsquad_core::eda::ReportLabels::default();
    let _ = rtlsquad_core::eda::report::find_labeled_value(data, &labels.area);

    let mut sections = BTreeMap::new();
    for (idx, chunk) in data.split("\n===\n").enumerate() {
        let name = ["qor", "power", "area", "timing"][idx % 4];
        sections.insert(name.to_string(), chunk.to_string());
    }
    if let Ok(figures) = rtlsquad_core::eda::report::parse_synth_figures(&sections, &labels) {
        let _ = rtlsquad_core::eda::report::figures_to_report(&figures, sections);
    }
});
