//! Uniform interface to compile, simulate and synthesize RTL.
//!
//! Two backends implement the interface: a deterministic mock steered by
//! directives embedded in the code (for tests and scripted runs) and an
//! external-process backend driving real tools through command templates.

pub mod external;
pub mod mock;
pub mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::PpaMetrics;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdaBackendKind {
    Mock,
    External,
}

/// Report-section label phrases, configurable because every tool prints its
/// own headings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportLabels {
    pub power_total: Vec<String>,
    pub power_static: Vec<String>,
    pub power_dynamic: Vec<String>,
    pub critical_path: Vec<String>,
    pub slack: Vec<String>,
    pub area: Vec<String>,
    pub leaf_cells: Vec<String>,
    pub combinational_cells: Vec<String>,
    pub sequential_cells: Vec<String>,
}

impl Default for ReportLabels {
    fn default() -> Self {
        ReportLabels {
            power_total: vec!["total power consumption of".into(), "Total Power".into()],
            power_static: vec!["static power".into(), "Total Static Power".into()],
            power_dynamic: vec!["dynamic power".into(), "Total Dynamic Power".into()],
            critical_path: vec![
                "critical path length of".into(),
                "Critical Path Length".into(),
            ],
            slack: vec!["Critical Path Slack".into(), "slack".into()],
            area: vec!["Chip area for module".into(), "Total cell area".into()],
            leaf_cells: vec!["leaf cells".into(), "Leaf Cell Count".into()],
            combinational_cells: vec!["combinational".into()],
            sequential_cells: vec!["sequential".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdaConfig {
    pub backend: EdaBackendKind,
    pub compile_cmd: Option<String>,
    pub sim_cmd: Option<String>,
    pub synth_cmd: Option<String>,
    pub timeout_s: u64,
    pub pass_pattern: String,
    pub fail_pattern: String,
    /// Section name -> report file name produced by the synthesis command
    /// inside `{out_dir}`.
    pub section_files: BTreeMap<String, String>,
    pub labels: ReportLabels,
}

impl Default for EdaConfig {
    fn default() -> Self {
        let mut section_files = BTreeMap::new();
        section_files.insert("qor".to_string(), "qor.rpt".to_string());
        section_files.insert("power".to_string(), "power.rpt".to_string());
        section_files.insert("area".to_string(), "area.rpt".to_string());
        section_files.insert("timing".to_string(), "timing.rpt".to_string());
        EdaConfig {
            backend: EdaBackendKind::Mock,
            compile_cmd: None,
            sim_cmd: None,
            synth_cmd: None,
            timeout_s: 120,
            pass_pattern: "TEST PASSED".into(),
            fail_pattern: "TEST FAILED|MISMATCH".into(),
            section_files,
            labels: ReportLabels::default(),
        }
    }
}

impl EdaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.backend == EdaBackendKind::External
            && (self.compile_cmd.is_none() || self.sim_cmd.is_none() || self.synth_cmd.is_none())
        {
            return Err(Error::InvalidInput(
                "external backend requires compile_cmd, sim_cmd and synth_cmd".into(),
            ));
        }
        regex::Regex::new(&self.pass_pattern)
            .map_err(|e| Error::InvalidInput(format!("bad pass_pattern: {e}")))?;
        regex::Regex::new(&self.fail_pattern)
            .map_err(|e| Error::InvalidInput(format!("bad fail_pattern: {e}")))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileError {
    pub file: String,
    pub line: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileOutcome {
    pub ok: bool,
    pub errors: Vec<CompileError>,
    #[serde(default)]
    pub log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub passed: bool,
    pub log: String,
    /// Normalized defect descriptions when the run failed.
    #[serde(default)]
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CellCounts {
    pub combinational: u64,
    pub sequential: u64,
    pub total: u64,
}

/// Parsed synthesis results plus the verbatim report sections they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub metrics: PpaMetrics,
    pub cell_counts: CellCounts,
    pub raw_sections: BTreeMap<String, String>,
}

pub trait EdaBackend: Send {
    fn compile(&self, code: &str, tb: &str) -> Result<CompileOutcome>;
    fn simulate(&self, code: &str, tb: &str) -> Result<SimOutcome>;
    fn synthesize(&self, code: &str) -> Result<SynthReport>;
}

pub fn build_backend(cfg: &EdaConfig) -> Result<Box<dyn EdaBackend>> {
    cfg.validate()?;
    match cfg.backend {
        EdaBackendKind::Mock => Ok(Box::new(mock::MockEda)),
        EdaBackendKind::External => Ok(Box::new(external::ExternalEda::new(cfg.clone())?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        assert!(EdaConfig::default().validate().is_ok());
    }

    #[test]
    fn external_backend_requires_all_three_commands() {
        let cfg = EdaConfig {
            backend: EdaBackendKind::External,
            compile_cmd: Some("true".into()),
            sim_cmd: Some("true".into()),
            synth_cmd: None,
            ..EdaConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn broken_patterns_fail_validation() {
        let cfg = EdaConfig {
            pass_pattern: "TEST [".into(),
            ..EdaConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
