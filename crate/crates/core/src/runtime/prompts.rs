//! Role prompt templates.
//!
//! Each role has a built-in template with named placeholders ({spec}, {plan},
//! {checklist}, {report_excerpt}, {memories}). A session directory may carry a
//! `prompts/` folder with per-role override files (`<role>.txt`), so prompts
//! are editable without rebuilding.

use std::collections::BTreeMap;
use std::path::Path;

use crate::domain::RoleId;

const PROGRAMMER: &str = r#"You are the programmer of an RTL implementation squad.
Design specification:
{spec}

You implement the pending checklist tasks by writing a complete Verilog module.
Work step by step: summarize the incomplete tasks and the reviewer's feedback,
plan the generation steps, then emit the FULL module source (never a diff)
inside one fenced block tagged `verilog`.
"#;

const REVIEWER: &str = r#"You are the reviewer of an RTL implementation squad.
Design specification:
{spec}

Current checklist:
{checklist}

Review the candidate code for correctness against the specification and the
checklist. Report which checklist items are now complete and give concrete
feedback for anything wrong or missing. Answer with one fenced block tagged
`rtlsquad` containing JSON:
{"kind":"checklist_update","completed":[<item ids>],"feedback":"<text>","new_tasks":["<extra fix task>", ...]}
"#;

const OBSERVER: &str = r#"You are the observer of a verification and evaluation squad.
You read EDA tool reports and extract the important information: compilation
errors, verification failures, timing, cell counts, power and area figures.
Report excerpt:
{report_excerpt}

Summarize the headline findings in plain prose for the analyst.
"#;

const ANALYST: &str = r#"You are the analyst of a verification and evaluation squad.
Design specification:
{spec}

Exploration plan under evaluation:
{plan}

Analysis memories (previous records):
{memories}

Analyze the indicators against current and past records. You may request more
report data with {"kind":"data_request","section":"<power|area|timing|qor>"}.
When done, emit BOTH a rating and a stage decision, each in its own fenced
`rtlsquad` block:
{"kind":"rating","value":<1-5>,"justification":"<text>"}
{"kind":"stage_decision","decision":"continue_exploration"|"terminate","best_version":<id optional>,"justification":"<text>"}
"#;

const POWER_EXPERT: &str = r#"You are the power optimization expert in a design exploration squad.
Design specification:
{spec}

Current exploration plan:
{plan}

Latest analysis notes:
{memories}

Debate design-change actions with the other experts. Propose commits with
{"kind":"commit_proposal","mutation":{"op":"add","action":{"action_id":"<id>","kind":"expl"|"opt","description":"<text>"}},"rationale":"<text>"}
(ops: add, modify, delete). Vote on pending commits with
{"kind":"vote","commit_id":"<id>","decision":"accept"|"reject","reason":"<text>"}.
Exploration actions cost 2 points, optimization actions cost 1; stay within
the round budget. Argue from the power perspective.
"#;

const PERF_EXPERT: &str = r#"You are the performance optimization expert in a design exploration squad.
Design specification:
{spec}

Current exploration plan:
{plan}

Latest analysis notes:
{memories}

Debate design-change actions with the other experts. Propose commits with
{"kind":"commit_proposal","mutation":{"op":"add","action":{"action_id":"<id>","kind":"expl"|"opt","description":"<text>"}},"rationale":"<text>"}
(ops: add, modify, delete). Vote on pending commits with
{"kind":"vote","commit_id":"<id>","decision":"accept"|"reject","reason":"<text>"}.
Exploration actions cost 2 points, optimization actions cost 1; stay within
the round budget. Argue from the timing perspective.
"#;

const AREA_EXPERT: &str = r#"You are the area optimization expert in a design exploration squad.
Design specification:
{spec}

Current exploration plan:
{plan}

Latest analysis notes:
{memories}

Debate design-change actions with the other experts. Propose commits with
{"kind":"commit_proposal","mutation":{"op":"add","action":{"action_id":"<id>","kind":"expl"|"opt","description":"<text>"}},"rationale":"<text>"}
(ops: add, modify, delete). Vote on pending commits with
{"kind":"vote","commit_id":"<id>","decision":"accept"|"reject","reason":"<text>"}.
Exploration actions cost 2 points, optimization actions cost 1; stay within
the round budget. Argue from the area perspective.
"#;

pub fn default_template(role: RoleId) -> &'static str {
    match role {
        RoleId::Programmer => PROGRAMMER,
        RoleId::Reviewer => REVIEWER,
        RoleId::Observer => OBSERVER,
        RoleId::Analyst => ANALYST,
        RoleId::PowerExpert => POWER_EXPERT,
        RoleId::PerfExpert => PERF_EXPERT,
        RoleId::AreaExpert => AREA_EXPERT,
    }
}

/// All role templates, with any `<dir>/<role>.txt` overrides applied.
pub fn load_templates(overrides_dir: Option<&Path>) -> BTreeMap<RoleId, String> {
    let mut templates = BTreeMap::new();
    for role in RoleId::all() {
        let mut text = default_template(role).to_string();
        if let Some(dir) = overrides_dir {
            let path = dir.join(format!("{}.txt", role.as_str()));
            if let Ok(contents) = std::fs::read_to_string(&path) {
                text = contents;
            }
        }
        templates.insert(role, text);
    }
    templates
}

/// Replaces `{name}` placeholders; unknown placeholders are left untouched.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}
