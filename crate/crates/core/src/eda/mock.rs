//! Deterministic mock EDA backend.
//!
//! Behavior is steered by a single directive comment in the code:
//!
//! ```text
//! // MOCK: compile=true pass=true power=4.67e-3 perf=0.38 area=17
//! ```
//!
//! Absent keys default from a stable hash of the code text, so scripted
//! agents can shape the PPA landscape while unscripted code still gets
//! plausible, strictly positive figures. Identical code always produces the
//! identical report, across processes.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::domain::PpaMetrics;
use crate::eda::{CellCounts, CompileError, CompileOutcome, EdaBackend, SimOutcome, SynthReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockDirectives {
    pub compile_ok: Option<bool>,
    pub pass: Option<bool>,
    pub power: Option<f64>,
    pub perf: Option<f64>,
    pub area: Option<f64>,
}

/// Parses the first `// MOCK:` line of the code. Unknown keys and
/// unparseable values are structured errors, never panics.
pub fn parse_mock_directives(code: &str) -> Result<MockDirectives> {
    let mut directives = MockDirectives::default();
    for (idx, line) in code.lines().enumerate() {
        let trimmed = line.trim();
        let Some(rest) = trimmed.strip_prefix("// MOCK:") else {
            continue;
        };
        let line_no = idx + 1;
        for token in rest.split_whitespace() {
            let Some((key, value)) = token.split_once('=') else {
                return Err(Error::ParseError {
                    line: line_no,
                    detail: format!("directive token `{token}` is not key=value"),
                });
            };
            let bad_value = || Error::ParseError {
                line: line_no,
                detail: format!("bad value `{value}` for `{key}`"),
            };
            match key {
                "compile" => directives.compile_ok = Some(value.parse().map_err(|_| bad_value())?),
                "pass" => directives.pass = Some(value.parse().map_err(|_| bad_value())?),
                "power" => directives.power = Some(parse_metric(value).ok_or_else(bad_value)?),
                "perf" => directives.perf = Some(parse_metric(value).ok_or_else(bad_value)?),
                "area" => directives.area = Some(parse_metric(value).ok_or_else(bad_value)?),
                other => {
                    return Err(Error::ParseError {
                        line: line_no,
                        detail: format!("unknown directive key `{other}`"),
                    })
                }
            }
        }
        break; // only the first MOCK line counts
    }
    Ok(directives)
}

fn parse_metric(value: &str) -> Option<f64> {
    let parsed: f64 = value.parse().ok()?;
    if parsed.is_finite() && parsed >= 0.0 {
        Some(parsed)
    } else {
        None
    }
}

/// Stable hash-derived default metrics, strictly positive.
pub fn hash_metrics(code: &str) -> (f64, f64, f64, CellCounts) {
    let digest = Sha256::digest(code.as_bytes());
    let word = |i: usize| -> u64 {
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[i * 8..(i + 1) * 8]);
        u64::from_le_bytes(bytes)
    };
    let power = 1.0 + (word(0) % 10_000) as f64 / 100.0; // 1.00 .. 100.99 uW
    let perf = 0.1 + (word(1) % 9_000) as f64 / 1_000.0; // 0.1 .. 9.099 ns
    let area = 10.0 + (word(2) % 100_000) as f64 / 100.0; // 10 .. 1009.99 um^2
    let comb = 1 + word(3) % 64;
    let seq = 1 + word(3) / 64 % 64;
    let cells = CellCounts {
        combinational: comb,
        sequential: seq,
        total: comb + seq,
    };
    (power, perf, area, cells)
}

pub struct MockEda;

impl MockEda {
    fn report_for(code: &str) -> Result<SynthReport> {
        let directives = parse_mock_directives(code)?;
        let (h_power, h_perf, h_area, cells) = hash_metrics(code);
        let power = directives.power.unwrap_or(h_power);
        let perf = directives.perf.unwrap_or(h_perf);
        let area = directives.area.unwrap_or(h_area);
        let slack = 10.0 - perf;
        let metrics = PpaMetrics {
            power_uw: power,
            critical_path_ns: perf,
            slack_ns: slack,
            area_um2: area,
        };
        let mut raw_sections = BTreeMap::new();
        raw_sections.insert(
            "qor".to_string(),
            format!(
                "  Timing Path Group 'clk'\n  Critical Path Length: {perf:.4}\n  Critical Path Slack: {slack:.4}\n  Leaf Cell Count: {}\n  Combinational Cell Count: {}\n  Sequential Cell Count: {}\n",
                cells.total, cells.combinational, cells.sequential
            ),
        );
        raw_sections.insert(
            "power".to_string(),
            format!(
                "  Total Dynamic Power = {power:.4} uW\n  Total Static Power = {:.4} nW\n  Total Power = {:.6} mW\n",
                power * 6.0,
                power * 1.006e-3
            ),
        );
        raw_sections.insert(
            "area".to_string(),
            format!("  Total cell area: {area:.2}\n"),
        );
        raw_sections.insert(
            "timing".to_string(),
            format!("  critical path length of {perf:.4} ns, slack {slack:.4} ns\n"),
        );
        Ok(SynthReport {
            metrics,
            cell_counts: cells,
            raw_sections,
        })
    }
}

impl EdaBackend for MockEda {
    fn compile(&self, code: &str, _tb: &str) -> Result<CompileOutcome> {
        let directives = parse_mock_directives(code)?;
        if directives.compile_ok.unwrap_or(true) {
            Ok(CompileOutcome {
                ok: true,
                errors: vec![],
                log: String::new(),
            })
        } else {
            Ok(CompileOutcome {
                ok: false,
                errors: vec![CompileError {
                    file: "design.v".into(),
                    line: 1,
                    text: "syntax error (mock)".into(),
                }],
                log: "design.v:1: syntax error (mock)\n".into(),
            })
        }
    }

    fn simulate(&self, code: &str, _tb: &str) -> Result<SimOutcome> {
        let directives = parse_mock_directives(code)?;
        if directives.pass.unwrap_or(true) {
            Ok(SimOutcome {
                passed: true,
                log: "TEST PASSED (mock)\n".into(),
                failures: vec![],
            })
        } else {
            Ok(SimOutcome {
                passed: false,
                log: "MISMATCH at t=40 (mock)\nTEST FAILED (mock)\n".into(),
                failures: vec!["simulation mismatch (mock)".into()],
            })
        }
    }

    fn synthesize(&self, code: &str) -> Result<SynthReport> {
        Self::report_for(code)
    }
}
