//! Label-driven parsers for tool output: compile error lines, simulation
//! verdicts, and synthesis report sections (timing, power, area, cell
//! counts). Every tool prints its own headings, so the key phrases are
//! configurable; no parser panics on arbitrary bytes.

use std::collections::BTreeMap;

use regex::Regex;

use crate::domain::PpaMetrics;
use crate::eda::{CellCounts, CompileError, ReportLabels, SynthReport};
use crate::error::{Error, Result};

/// Scans tool output for `<file>:<line>: <text>` diagnostics. Lines in any
/// other shape are skipped.
pub fn parse_compile_errors(output: &str) -> Vec<CompileError> {
    let mut errors = Vec::new();
    for line in output.lines() {
        let Some((file, rest)) = line.split_once(':') else {
            continue;
        };
        let file = file.trim();
        if file.is_empty() || file.contains(char::is_whitespace) {
            continue;
        }
        let Some((line_no, text)) = rest.split_once(':') else {
            continue;
        };
        let Ok(line_no) = line_no.trim().parse::<u32>() else {
            continue;
        };
        errors.push(CompileError {
            file: file.to_string(),
            line: line_no,
            text: text.trim().to_string(),
        });
    }
    errors
}

/// Decides pass/fail from a simulation log: any fail-pattern line means
/// failure; otherwise a pass-pattern line means success. A line matching both
/// patterns, or a log matching neither, is indeterminate.
pub fn classify_sim_log(log: &str, pass: &Regex, fail: &Regex) -> Result<bool> {
    let mut saw_pass = false;
    let mut saw_fail = false;
    for line in log.lines() {
        let p = pass.is_match(line);
        let f = fail.is_match(line);
        if p && f {
            return Err(Error::IndeterminateResult(format!(
                "pass and fail patterns both match line `{line}`"
            )));
        }
        saw_pass |= p;
        saw_fail |= f;
    }
    if saw_fail {
        Ok(false)
    } else if saw_pass {
        Ok(true)
    } else {
        Err(Error::IndeterminateResult(
            "neither pass nor fail pattern matched the log".into(),
        ))
    }
}

/// A number recovered from a report line, with the unit token that followed
/// it (if any) kept verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledValue {
    pub value: f64,
    pub unit: Option<String>,
}

/// Finds the first line containing any of the label phrases
/// (case-insensitive on ASCII lines) and extracts the number adjacent to the
/// label. Both report idioms are handled: `<label>: <value> [unit]` and
/// `<value> [unit] <label>` (as in "17 leaf cells" or "28.0450 nW static
/// power").
pub fn find_labeled_value(text: &str, labels: &[String]) -> Option<LabeledValue> {
    for line in text.lines() {
        for label in labels {
            // byte offsets into a lowercased copy only stay valid for ASCII
            let pos = if line.is_ascii() {
                line.to_lowercase().find(&label.to_lowercase())
            } else {
                line.find(label.as_str())
            };
            let Some(pos) = pos else {
                continue;
            };

            let before: Vec<&str> = line.get(..pos).unwrap_or("").split_whitespace().collect();
            if let Some(&last) = before.last() {
                if let Some(value) = parse_token(last) {
                    return Some(LabeledValue { value, unit: None });
                }
                if before.len() >= 2 && starts_alphabetic(last) {
                    if let Some(value) = parse_token(before[before.len() - 2]) {
                        return Some(LabeledValue {
                            value,
                            unit: clean_unit(last),
                        });
                    }
                }
            }

            let after = line.get(pos + label.len()..).unwrap_or("");
            if let Some(value) = first_number(after) {
                return Some(value);
            }
        }
    }
    None
}

fn parse_token(token: &str) -> Option<f64> {
    let cleaned: &str = token.trim_matches(|c: char| {
        !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == 'e' || c == 'E')
    });
    if cleaned.is_empty() {
        return None;
    }
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn starts_alphabetic(token: &str) -> bool {
    token
        .chars()
        .next()
        .is_some_and(|c| c.is_alphabetic() || c == 'µ')
}

fn clean_unit(token: &str) -> Option<String> {
    let cleaned = token.trim_matches(|c: char| !c.is_alphanumeric() && c != 'µ');
    (!cleaned.is_empty() && starts_alphabetic(cleaned)).then(|| cleaned.to_string())
}

fn first_number(text: &str) -> Option<LabeledValue> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    for (i, token) in tokens.iter().enumerate() {
        if let Some(value) = parse_token(token) {
            let unit = tokens.get(i + 1).and_then(|u| clean_unit(u));
            return Some(LabeledValue { value, unit });
        }
    }
    None
}

/// Raw figures pulled from the report sections, before unit normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFigures {
    pub power_total: Option<LabeledValue>,
    pub power_static: Option<LabeledValue>,
    pub power_dynamic: Option<LabeledValue>,
    pub critical_path: LabeledValue,
    pub slack: Option<LabeledValue>,
    pub area: LabeledValue,
    pub leaf_cells: Option<u64>,
    pub combinational_cells: Option<u64>,
    pub sequential_cells: Option<u64>,
}

/// Extracts figures from the named sections. Timing and area are mandatory;
/// a report without them is a parse error naming the gap.
pub fn parse_synth_figures(
    sections: &BTreeMap<String, String>,
    labels: &ReportLabels,
) -> Result<SynthFigures> {
    let all_text = || -> String {
        sections
            .values()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join("\n")
    };
    let in_section = |names: &[&str], label_set: &[String]| -> Option<LabeledValue> {
        for name in names {
            if let Some(text) = sections.get(*name) {
                if let Some(v) = find_labeled_value(text, label_set) {
                    return Some(v);
                }
            }
        }
        find_labeled_value(&all_text(), label_set)
    };

    let critical_path =
        in_section(&["timing", "qor"], &labels.critical_path).ok_or_else(|| Error::ParseError {
            line: 0,
            detail: "timing section missing or no critical path figure found".into(),
        })?;
    let area = in_section(&["area", "qor"], &labels.area).ok_or_else(|| Error::ParseError {
        line: 0,
        detail: "area section missing or no area figure found".into(),
    })?;
    let slack = in_section(&["timing", "qor"], &labels.slack);
    let power_total = in_section(&["power"], &labels.power_total);
    let power_static = in_section(&["power"], &labels.power_static);
    let power_dynamic = in_section(&["power"], &labels.power_dynamic);

    let count = |label_set: &[String]| -> Option<u64> {
        in_section(&["qor", "area"], label_set).map(|v| v.value.max(0.0) as u64)
    };

    Ok(SynthFigures {
        power_total,
        power_static,
        power_dynamic,
        critical_path,
        slack,
        area,
        leaf_cells: count(&labels.leaf_cells),
        combinational_cells: count(&labels.combinational_cells),
        sequential_cells: count(&labels.sequential_cells),
    })
}

/// Power unit token to a microwatt multiplier.
pub fn power_unit_to_uw(unit: &str) -> Option<f64> {
    match unit.to_lowercase().as_str() {
        "nw" => Some(1e-3),
        "uw" | "µw" => Some(1.0),
        "mw" => Some(1e3),
        "w" => Some(1e6),
        _ => None,
    }
}

fn power_in_uw(value: &LabeledValue) -> f64 {
    let factor = value
        .unit
        .as_deref()
        .and_then(power_unit_to_uw)
        .unwrap_or(1.0);
    value.value * factor
}

/// Normalizes figures into the report shape. Dynamic power is preferred;
/// totals stand in when the breakdown is absent.
pub fn figures_to_report(
    figures: &SynthFigures,
    sections: BTreeMap<String, String>,
) -> Result<SynthReport> {
    let power = figures
        .power_dynamic
        .as_ref()
        .or(figures.power_total.as_ref())
        .ok_or_else(|| Error::ParseError {
            line: 0,
            detail: "power section missing or no power figure found".into(),
        })?;
    let metrics = PpaMetrics {
        power_uw: power_in_uw(power),
        critical_path_ns: figures.critical_path.value,
        slack_ns: figures.slack.as_ref().map(|v| v.value).unwrap_or(0.0),
        area_um2: figures.area.value,
    };
    metrics.validate()?;
    let combinational = figures.combinational_cells.unwrap_or(0);
    let sequential = figures.sequential_cells.unwrap_or(0);
    let total = figures.leaf_cells.unwrap_or(combinational + sequential);
    Ok(SynthReport {
        metrics,
        cell_counts: CellCounts {
            combinational,
            sequential,
            total,
        },
        raw_sections: sections,
    })
}
