//! Verification & evaluation stage: functional verification and synthesis
//! through the EDA backend, the observer/analyst report dialogue, and the
//! version-quality arithmetic (scalarization, best-version selection, stall
//! detection).

use serde::{Deserialize, Serialize};

use crate::domain::{
    AnalysisRecord, Author, Phase, PpaMetrics, RoleId, RtlVersion, SessionState, Stage, Verified,
    VersionId,
};
use crate::eda::{CompileError, EdaBackend, SynthReport};
use crate::error::{Error, Result};
use crate::protocol::{converse, render_recent_messages, StageCtx};
use crate::runtime::payload::{PayloadKind, StageChoice, StructuredPayload};
use crate::runtime::PayloadRequirements;

/// Everything one verification pass learned about a version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub compile_ok: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compile_errors: Vec<CompileError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_passed: Option<bool>,
    #[serde(default)]
    pub sim_log_excerpt: String,
    /// Normalized defect descriptions driving fix checklists.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub defects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthReport>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.compile_ok && self.sim_passed == Some(true)
    }
}

/// Runs compile -> simulate -> synthesize for an unchecked version and marks
/// it passed or failed. Tool failures (missing binary, timeout, unreadable
/// report) propagate and leave the version unchecked.
pub fn verify_version(
    state: &mut SessionState,
    eda: &dyn EdaBackend,
    version_id: VersionId,
) -> Result<VerificationReport> {
    let version = state
        .version(version_id)
        .ok_or_else(|| Error::InvalidInput(format!("version {version_id} not found")))?;
    if version.verified != Verified::Unchecked {
        return Err(Error::InvalidInput(format!(
            "version {version_id} was already verified"
        )));
    }
    let code = version.code.clone();
    let tb = state.inputs.testbench_text.clone();

    let compile = eda.compile(&code, &tb)?;
    if !compile.ok {
        let defects: Vec<String> = compile
            .errors
            .iter()
            .map(|e| format!("compile error: {}:{}: {}", e.file, e.line, e.text))
            .collect();
        let report = VerificationReport {
            compile_ok: false,
            compile_errors: compile.errors,
            sim_passed: None,
            sim_log_excerpt: String::new(),
            defects: if defects.is_empty() {
                vec!["compilation failed".into()]
            } else {
                defects
            },
            synth: None,
        };
        finish(state, version_id, Verified::Failed, None, &report);
        return Ok(report);
    }

    let sim = eda.simulate(&code, &tb)?;
    let excerpt = log_tail(&sim.log, 20);
    if !sim.passed {
        let defects = if sim.failures.is_empty() {
            vec!["simulation failed".into()]
        } else {
            sim.failures.clone()
        };
        let report = VerificationReport {
            compile_ok: true,
            compile_errors: vec![],
            sim_passed: Some(false),
            sim_log_excerpt: excerpt,
            defects,
            synth: None,
        };
        finish(state, version_id, Verified::Failed, None, &report);
        return Ok(report);
    }

    let synth = eda.synthesize(&code)?;
    let report = VerificationReport {
        compile_ok: true,
        compile_errors: vec![],
        sim_passed: Some(true),
        sim_log_excerpt: excerpt,
        defects: vec![],
        synth: Some(synth.clone()),
    };
    finish(
        state,
        version_id,
        Verified::Passed,
        Some(synth.metrics),
        &report,
    );
    Ok(report)
}

fn finish(
    state: &mut SessionState,
    version_id: VersionId,
    verified: Verified,
    metrics: Option<PpaMetrics>,
    report: &VerificationReport,
) {
    if let Some(v) = state.version_mut(version_id) {
        v.set_verified(verified, metrics);
    }
    state.last_report = Some(report.clone());
}

fn log_tail(log: &str, lines: usize) -> String {
    let all: Vec<&str> = log.lines().collect();
    let start = all.len().saturating_sub(lines);
    all[start..].join("\n")
}

/// Headline summary of a report, used as the observer's prompt excerpt and
/// the system pool note.
pub fn summarize_report(report: &VerificationReport) -> String {
    let mut out = String::new();
    if !report.compile_ok {
        out.push_str("compilation FAILED\n");
        for e in &report.compile_errors {
            out.push_str(&format!("  {}:{}: {}\n", e.file, e.line, e.text));
        }
        return out;
    }
    out.push_str("compilation ok\n");
    match report.sim_passed {
        Some(true) => out.push_str("simulation PASSED\n"),
        Some(false) => {
            out.push_str("simulation FAILED\n");
            for d in &report.defects {
                out.push_str(&format!("  {d}\n"));
            }
        }
        None => {}
    }
    if let Some(synth) = &report.synth {
        let m = &synth.metrics;
        out.push_str(&format!(
            "critical path {} ns, slack {} ns\n",
            m.critical_path_ns, m.slack_ns
        ));
        out.push_str(&format!(
            "{} leaf cells ({} combinational, {} sequential)\n",
            synth.cell_counts.total, synth.cell_counts.combinational, synth.cell_counts.sequential
        ));
        out.push_str(&format!(
            "dynamic power {} uW, area {} um^2\n",
            m.power_uw, m.area_um2
        ));
    }
    out
}

fn section_excerpt(report: &VerificationReport, section: &str) -> Result<String> {
    let synth = report
        .synth
        .as_ref()
        .ok_or_else(|| Error::SectionUnavailable {
            section: section.to_string(),
        })?;
    synth
        .raw_sections
        .get(section)
        .cloned()
        .ok_or_else(|| Error::SectionUnavailable {
            section: section.to_string(),
        })
}

/// Observer turn: summarize headline findings, or answer the analyst's data
/// request from the raw report sections. A request for a missing section is
/// answered with an unavailability note instead of failing the stage.
pub fn observer_step(
    ctx: &mut StageCtx<'_>,
    report: &VerificationReport,
    request: Option<&str>,
) -> Result<String> {
    let excerpt = match request {
        None => summarize_report(report),
        Some(section) => match section_excerpt(report, section) {
            Ok(text) => text,
            Err(Error::SectionUnavailable { section }) => {
                let available: Vec<String> = report
                    .synth
                    .as_ref()
                    .map(|s| s.raw_sections.keys().cloned().collect())
                    .unwrap_or_default();
                let note = format!(
                    "the requested section `{section}` is unavailable; available sections: {}",
                    if available.is_empty() {
                        "(none)".to_string()
                    } else {
                        available.join(", ")
                    }
                );
                // mechanical answer, no provider call
                crate::doc::post_message(
                    ctx.state,
                    ctx.sink,
                    Stage::Verification,
                    1,
                    Author::System,
                    Phase::Observe,
                    note.clone(),
                    vec![],
                )?;
                return Ok(note);
            }
            Err(e) => return Err(e),
        },
    };

    let user_turn = match request {
        None => {
            "Summarize the headline findings of this verification run for the analyst.".to_string()
        }
        Some(section) => format!("The analyst asked for the `{section}` data. Summarize it."),
    };

    let (prose, _) = crate::protocol::converse_with_vars(
        ctx,
        RoleId::Observer,
        Stage::Verification,
        1,
        user_turn,
        &PayloadRequirements::none(),
        &|_| Phase::Observe,
        &[("report_excerpt", excerpt.as_str())],
    )?;
    Ok(prose)
}

/// What the analyst concluded about the latest verified version.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutcome {
    pub record: AnalysisRecord,
    pub terminate: bool,
    pub decision_justification: String,
}

/// Analyst dialogue: up to `max_data_requests` observer round-trips, then
/// exactly one rating and one stage decision.
pub fn analyst_step(
    ctx: &mut StageCtx<'_>,
    report: &VerificationReport,
    findings: &str,
) -> Result<AnalysisOutcome> {
    let version_id = ctx
        .state
        .versions
        .iter()
        .rev()
        .find(|v| v.verified == Verified::Passed)
        .map(|v| v.version_id)
        .ok_or_else(|| Error::VerificationStageFailed("no passed version to analyze".into()))?;
    let metrics_snapshot = ctx
        .state
        .version(version_id)
        .and_then(|v| v.metrics)
        .ok_or_else(|| Error::VerificationStageFailed("passed version lacks metrics".into()))?;
    let passed_ids: Vec<u32> = ctx
        .state
        .versions
        .iter()
        .filter(|v| v.verified == Verified::Passed)
        .map(|v| v.version_id)
        .collect();

    let mut requested: Vec<String> = Vec::new();
    let mut current_findings = findings.to_string();

    loop {
        let may_request = requested.len() < ctx.cfg.max_data_requests as usize;
        let passed_for_check = passed_ids.clone();
        let validator =
            move |payloads: &[StructuredPayload]| -> std::result::Result<(), String> {
                let has_rating = payloads.iter().any(|p| p.kind() == PayloadKind::Rating);
                let has_decision = payloads
                    .iter()
                    .any(|p| p.kind() == PayloadKind::StageDecision);
                let has_request = payloads
                    .iter()
                    .any(|p| p.kind() == PayloadKind::DataRequest);
                if has_rating && has_decision {
                    for p in payloads {
                        if let StructuredPayload::StageDecision {
                            decision: StageChoice::Terminate,
                            best_version: Some(best),
                            ..
                        } = p
                        {
                            if !passed_for_check.contains(best) {
                                return Err(format!(
                                "terminate names version {best}, which has not passed verification"
                            ));
                            }
                        }
                    }
                    return Ok(());
                }
                if has_request {
                    if may_request {
                        return Ok(());
                    }
                    return Err(
                        "the data request budget is exhausted; emit a rating and a stage decision"
                            .into(),
                    );
                }
                Err("reply must contain either a data_request or both a rating and a stage_decision"
                .into())
            };
        let requirements = PayloadRequirements {
            required_kinds: &[],
            validator: Some(&validator),
        };

        let user_turn = format!(
            "Observer findings:\n{current_findings}\n\nRecent dialogue:\n{}",
            render_recent_messages(ctx.state, Stage::Verification, 8)
        );
        let (prose, payloads) = converse(
            ctx,
            RoleId::Analyst,
            Stage::Verification,
            1,
            user_turn,
            &requirements,
            &|_| Phase::Analyze,
        )
        .map_err(|e| match e {
            Error::ProtocolBreakdown { role, detail } => {
                Error::VerificationStageFailed(format!("{role}: {detail}"))
            }
            other => other,
        })?;

        let mut rating: Option<u8> = None;
        let mut decision: Option<(StageChoice, String)> = None;
        let mut request: Option<String> = None;
        for payload in &payloads {
            match payload {
                StructuredPayload::Rating { value, .. } => rating = Some(*value),
                StructuredPayload::StageDecision {
                    decision: choice,
                    justification,
                    ..
                } => decision = Some((*choice, justification.clone())),
                StructuredPayload::DataRequest { section } => request = Some(section.clone()),
                _ => {}
            }
        }

        if let (Some(rating), Some((choice, justification))) = (rating, &decision) {
            let record = AnalysisRecord {
                version_id,
                plan_revision: ctx.state.plan.revision,
                rating,
                narrative: prose,
                metrics_snapshot,
                requested_data: requested,
            };
            return Ok(AnalysisOutcome {
                record,
                terminate: *choice == StageChoice::Terminate,
                decision_justification: justification.clone(),
            });
        }

        let section = request.expect("validator guarantees a data request here");
        requested.push(section.clone());
        current_findings = observer_step(ctx, report, Some(&section))?;
    }
}

// --- version quality arithmetic --------------------------------------------

/// Equal-weight mean of min-normalized metrics; lower is better.
pub fn scalarize(metrics: &PpaMetrics, normalizers: &PpaMetrics) -> Result<f64> {
    if normalizers.power_uw <= 0.0
        || normalizers.critical_path_ns <= 0.0
        || normalizers.area_um2 <= 0.0
    {
        return Err(Error::InvalidNormalizer);
    }
    Ok((metrics.power_uw / normalizers.power_uw
        + metrics.critical_path_ns / normalizers.critical_path_ns
        + metrics.area_um2 / normalizers.area_um2)
        / 3.0)
}

/// Component-wise minima over the passed versions' metrics, with zero
/// components replaced by 1 so they stay usable as normalizers (any positive
/// normalizer preserves dominance ordering).
pub fn min_normalizers(passed: &[&RtlVersion]) -> Option<PpaMetrics> {
    let mut iter = passed.iter().filter_map(|v| v.metrics);
    let first = iter.next()?;
    let mut mins = first;
    for m in iter {
        mins.power_uw = mins.power_uw.min(m.power_uw);
        mins.critical_path_ns = mins.critical_path_ns.min(m.critical_path_ns);
        mins.area_um2 = mins.area_um2.min(m.area_um2);
    }
    let fix = |v: f64| if v > 0.0 { v } else { 1.0 };
    Some(PpaMetrics {
        power_uw: fix(mins.power_uw),
        critical_path_ns: fix(mins.critical_path_ns),
        slack_ns: 0.0,
        area_um2: fix(mins.area_um2),
    })
}

/// Among passed versions, the one minimizing the scalarized score under
/// per-metric minimum normalizers; ties go to the smallest version id.
pub fn select_best(versions: &[RtlVersion]) -> Result<VersionId> {
    let passed: Vec<&RtlVersion> = versions
        .iter()
        .filter(|v| v.verified == Verified::Passed && v.metrics.is_some())
        .collect();
    let normalizers = min_normalizers(&passed).ok_or(Error::NoCandidate)?;
    let mut best: Option<(VersionId, f64)> = None;
    for v in &passed {
        let score = scalarize(&v.metrics.expect("filtered"), &normalizers)?;
        match best {
            None => best = Some((v.version_id, score)),
            Some((_, best_score)) if score < best_score => {
                best = Some((v.version_id, score));
            }
            _ => {}
        }
    }
    best.map(|(id, _)| id).ok_or(Error::NoCandidate)
}

/// Core stall law over a score series (lower scores are better): the recent
/// window must fail to improve on the best earlier score by at least
/// `eps_rel`, and there must be at least one pre-window entry to compare
/// against.
pub fn stalled_scores(scores: &[f64], window: usize, eps_rel: f64) -> bool {
    if window < 2 || scores.len() < window + 1 {
        return false;
    }
    let split = scores.len() - window;
    let min_of = |slice: &[f64]| slice.iter().cloned().fold(f64::INFINITY, f64::min);
    let best_last = min_of(&scores[split..]);
    let best_before = min_of(&scores[..split]);
    let improvement = if best_before.abs() < f64::EPSILON {
        if best_last < best_before {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        (best_before - best_last) / best_before.abs()
    };
    improvement < eps_rel
}

/// Stall detection over analysis records: scores are the min-normalized
/// scalarizations of the recorded metric snapshots.
pub fn trend_is_stalled(history: &[AnalysisRecord], window: usize, eps_rel: f64) -> bool {
    if window < 2 || history.len() < window + 1 {
        return false;
    }
    let mut mins: Option<PpaMetrics> = None;
    for record in history {
        let m = record.metrics_snapshot;
        mins = Some(match mins {
            None => m,
            Some(prev) => PpaMetrics {
                power_uw: prev.power_uw.min(m.power_uw),
                critical_path_ns: prev.critical_path_ns.min(m.critical_path_ns),
                slack_ns: 0.0,
                area_um2: prev.area_um2.min(m.area_um2),
            },
        });
    }
    let mut normalizers = mins.expect("non-empty history");
    let fix = |v: f64| if v > 0.0 { v } else { 1.0 };
    normalizers.power_uw = fix(normalizers.power_uw);
    normalizers.critical_path_ns = fix(normalizers.critical_path_ns);
    normalizers.area_um2 = fix(normalizers.area_um2);
    let scores: Vec<f64> = history
        .iter()
        .map(|r| scalarize(&r.metrics_snapshot, &normalizers).unwrap_or(f64::INFINITY))
        .collect();
    stalled_scores(&scores, window, eps_rel)
}
