//! Shared fixtures: script builders for deterministic scripted runs.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rtlsquad_core::domain::{
    commit_id_for, ActionKind, Clock, DesignInputs, ExplAction, Mutation, RoleId, SessionRng, Stage,
};
use rtlsquad_core::eda::EdaBackendKind;
use rtlsquad_core::orchestrator::{OrchestratorConfig, ProviderKind};
use rtlsquad_core::runtime::payload::{render_payload, StageChoice, StructuredPayload};
use rtlsquad_core::runtime::script::{ScriptKey, ScriptRecord};

/// Collects script records, assigning per-(role, stage, round) indexes in
/// insertion order — the same order the engine consumes them.
pub struct ScriptBuilder {
    records: Vec<ScriptRecord>,
    counts: HashMap<(RoleId, Stage, u32), u32>,
}

impl ScriptBuilder {
    pub fn new() -> Self {
        ScriptBuilder {
            records: Vec::new(),
            counts: HashMap::new(),
        }
    }

    pub fn add(&mut self, role: RoleId, stage: Stage, round: u32, reply: impl Into<String>) {
        let counter = self.counts.entry((role, stage, round)).or_insert(0);
        let index = *counter;
        *counter += 1;
        self.records.push(ScriptRecord {
            key: ScriptKey {
                role,
                stage,
                round,
                index,
            },
            reply: reply.into(),
        });
    }

    pub fn records(self) -> Vec<ScriptRecord> {
        self.records
    }

    pub fn write_jsonl(self, path: &Path) {
        let mut text = String::new();
        for record in &self.records {
            text.push_str(&serde_json::to_string(record).unwrap());
            text.push('\n');
        }
        std::fs::write(path, text).unwrap();
    }
}

pub fn block(payload: &StructuredPayload) -> String {
    render_payload(payload)
}

pub fn proposal_block(
    action_id: &str,
    kind: ActionKind,
    description: &str,
    rationale: &str,
) -> String {
    block(&StructuredPayload::CommitProposal {
        mutation: Mutation::Add {
            action: ExplAction {
                action_id: action_id.into(),
                kind,
                description: description.into(),
            },
        },
        rationale: rationale.into(),
    })
}

pub fn vote_block(commit_id: &str, accept: bool, reason: &str) -> String {
    block(&StructuredPayload::Vote {
        commit_id: commit_id.into(),
        decision: if accept {
            rtlsquad_core::domain::VoteDecision::Accept
        } else {
            rtlsquad_core::domain::VoteDecision::Reject
        },
        reason: reason.into(),
    })
}

pub fn poll_block(acceptable: bool, reason: &str) -> String {
    block(&StructuredPayload::PlanPoll {
        acceptable,
        reason: reason.into(),
    })
}

pub fn code_block(code: &str) -> String {
    block(&StructuredPayload::CodeBlock { code: code.into() })
}

pub fn review_block(completed: &[u32], feedback: &str, new_tasks: &[&str]) -> String {
    block(&StructuredPayload::ChecklistUpdate {
        completed: completed.to_vec(),
        feedback: feedback.into(),
        new_tasks: new_tasks.iter().map(|t| t.to_string()).collect(),
    })
}

pub fn rating_block(value: u8, justification: &str) -> String {
    block(&StructuredPayload::Rating {
        value,
        justification: justification.into(),
    })
}

pub fn decision_block(terminate: bool, best: Option<u32>, justification: &str) -> String {
    block(&StructuredPayload::StageDecision {
        decision: if terminate {
            StageChoice::Terminate
        } else {
            StageChoice::ContinueExploration
        },
        best_version: best,
        justification: justification.into(),
    })
}

pub fn data_request_block(section: &str) -> String {
    block(&StructuredPayload::DataRequest {
        section: section.into(),
    })
}

/// Commit id the engine will assign to `Add(action)` proposed by `proposer`
/// at plan revision `revision`.
pub fn expected_commit_id(
    action_id: &str,
    kind: ActionKind,
    description: &str,
    proposer: RoleId,
    revision: u32,
) -> String {
    commit_id_for(
        &Mutation::Add {
            action: ExplAction {
                action_id: action_id.into(),
                kind,
                description: description.into(),
            },
        },
        proposer,
        revision,
    )
}

/// Searches for an action id whose commit hash matches the wanted 4-hex id.
pub fn action_id_for_commit(
    want: &str,
    base: &str,
    kind: ActionKind,
    description: &str,
    proposer: RoleId,
    revision: u32,
) -> String {
    for n in 0..2_000_000u32 {
        let action_id = format!("{base}{n:x}");
        if expected_commit_id(&action_id, kind, description, proposer, revision) == want {
            return action_id;
        }
    }
    panic!("no action id hashes to commit {want}");
}

/// Replays the session RNG: the order drawn on the n-th shuffle of the
/// exploration squad (0-based draw index).
pub fn speaking_order(seed: u64, draw: usize) -> Vec<RoleId> {
    let mut rng = SessionRng::new(seed);
    let mut order = Vec::new();
    for _ in 0..=draw {
        order = Stage::Exploration.squad().to_vec();
        rng.shuffle(&mut order);
    }
    order
}

/// First seed whose first drawn speaking order matches `want`.
pub fn seed_with_first_order(want: &[RoleId]) -> u64 {
    (0..100_000u64)
        .find(|&seed| speaking_order(seed, 0) == want)
        .expect("some seed produces the wanted order")
}

/// Scripted + mock-EDA config with a fixed clock: fully deterministic runs.
pub fn deterministic_config(seed: u64, script_path: &Path) -> OrchestratorConfig {
    let mut cfg = embedded_script_config(seed);
    cfg.provider.kind = ProviderKind::Scripted;
    cfg.provider.script_path = Some(script_path.to_path_buf());
    cfg
}

pub fn inputs(spec: &str, tb: &str, code: Option<&str>) -> DesignInputs {
    DesignInputs {
        spec_text: spec.into(),
        testbench_text: tb.into(),
        initial_code: code.map(|c| c.to_string()),
    }
}

/// One exploration cycle where the round-1 first speaker proposes a single
/// opt action, the other experts approve it, round 2 is quiet, and the poll
/// accepts the plan. Returns the applied action's id.
pub struct SimpleCycle {
    pub action_id: String,
    pub commit_id: String,
}

pub fn script_simple_exploration_cycle(
    builder: &mut ScriptBuilder,
    seed: u64,
    draw_base: usize,
    cycle: u32,
    revision_at_proposal: u32,
    description: &str,
) -> SimpleCycle {
    let order1 = speaking_order(seed, draw_base);
    let order2 = speaking_order(seed, draw_base + 1);
    let action_id = format!("a{cycle}");
    let commit_id = expected_commit_id(
        &action_id,
        ActionKind::Opt,
        description,
        order1[0],
        revision_at_proposal,
    );

    builder.add(
        order1[0],
        Stage::Exploration,
        1,
        format!(
            "I suggest we {description}. This is a one-point optimization action.\n{}",
            proposal_block(
                &action_id,
                ActionKind::Opt,
                description,
                "incremental improvement with low risk"
            )
        ),
    );
    builder.add(
        order1[1],
        Stage::Exploration,
        1,
        format!(
            "Agreed, this is a sound step.\n{}",
            vote_block(&commit_id, true, "low risk, clear benefit")
        ),
    );
    builder.add(
        order1[2],
        Stage::Exploration,
        1,
        format!(
            "No objection from my side.\n{}",
            vote_block(&commit_id, true, "no downside for my metric")
        ),
    );
    for expert in &order2 {
        builder.add(
            *expert,
            Stage::Exploration,
            2,
            "Nothing further to propose this round.",
        );
    }
    for expert in &order2 {
        builder.add(
            *expert,
            Stage::Exploration,
            2,
            format!(
                "The plan is good.\n{}",
                poll_block(true, "covers the agreed action")
            ),
        );
    }

    SimpleCycle {
        action_id,
        commit_id,
    }
}

/// Programmer + reviewer single-round implementation producing code with the
/// given mock directives.
pub fn script_single_round_impl(builder: &mut ScriptBuilder, mock_line: &str, module_name: &str) {
    let code = format!("{mock_line}\nmodule {module_name}(input clk);\nendmodule");
    builder.add(
        RoleId::Programmer,
        Stage::Implementation,
        1,
        format!(
            "Implementing the plan step by step: 1. apply the planned change 2. keep the interface stable.\n{}",
            code_block(&code)
        ),
    );
    builder.add(
        RoleId::Reviewer,
        Stage::Implementation,
        1,
        format!(
            "The change is in place and matches the plan.\n{}",
            review_block(&[1], "", &[])
        ),
    );
}

/// Observer summary plus an analyst reply that rates and decides in one turn.
pub fn script_analysis(
    builder: &mut ScriptBuilder,
    findings: &str,
    rating: u8,
    narrative: &str,
    terminate: bool,
) {
    builder.add(
        RoleId::Observer,
        Stage::Verification,
        1,
        findings.to_string(),
    );
    builder.add(
        RoleId::Analyst,
        Stage::Verification,
        1,
        format!(
            "{narrative}\n{}\n{}",
            rating_block(rating, "based on the metric trend"),
            decision_block(
                terminate,
                None,
                if terminate {
                    "metrics are settled"
                } else {
                    "more headroom remains"
                }
            )
        ),
    );
}

/// The three-cycle hill scenario: metrics dip at the second version and rise
/// again, so the middle version wins selection.
pub fn hill_script(seed: u64) -> ScriptBuilder {
    let mut builder = ScriptBuilder::new();
    let metrics = [
        "// MOCK: pass=true power=100 perf=5 area=500",
        "// MOCK: pass=true power=80 perf=4 area=450",
        "// MOCK: pass=true power=85 perf=4.5 area=460",
    ];
    let ratings = [2u8, 4, 3];
    for cycle in 0..3u32 {
        // one commit is applied per cycle, so the revision equals the cycle
        script_simple_exploration_cycle(
            &mut builder,
            seed,
            (cycle as usize) * 2,
            cycle + 1,
            cycle,
            match cycle {
                0 => "use a compact adder tree",
                1 => "share the carry chain between stages",
                _ => "balance the output mux depth",
            },
        );
        script_single_round_impl(&mut builder, metrics[cycle as usize], "design");
        script_analysis(
            &mut builder,
            match cycle {
                0 => "The run passed; power 100 uW, critical path 5 ns, area 500 um^2.",
                1 => "The run passed; power 80 uW, critical path 4 ns, area 450 um^2.",
                _ => "The run passed; power 85 uW, critical path 4.5 ns, area 460 um^2.",
            },
            ratings[cycle as usize],
            match cycle {
                0 => "The baseline works but every metric has headroom.",
                1 => "The shared carry chain helped every metric.",
                _ => "This round regressed slightly; the previous version holds up better.",
            },
            cycle == 2,
        );
    }
    builder
}

/// Runs a scripted session with an injected provider so the stored config
/// stays free of machine-specific paths (keeps goldens byte-stable).
pub fn run_with_records(
    cfg: OrchestratorConfig,
    inputs: DesignInputs,
    records: Vec<ScriptRecord>,
    root: &Path,
) -> (
    rtlsquad_core::orchestrator::Outcome,
    rtlsquad_core::domain::SessionState,
) {
    use rtlsquad_core::orchestrator::{Orchestrator, SessionDir};
    use rtlsquad_core::runtime::script::ScriptedProvider;

    let dir = SessionDir::init(root).unwrap();
    let mut state = rtlsquad_core::domain::new_session(inputs, cfg.seed, &cfg).unwrap();
    let provider = Box::new(ScriptedProvider::from_records(records));
    let mut orch = Orchestrator::with_provider(cfg, dir, provider).unwrap();
    orch.bootstrap(&mut state).unwrap();
    let outcome = orch.run(&mut state);
    (outcome, state)
}

/// Deterministic config without a script path (provider injected directly).
pub fn embedded_script_config(seed: u64) -> OrchestratorConfig {
    let mut cfg = OrchestratorConfig {
        seed,
        auto_accept: true,
        clock: Clock::fixed(0, 1),
        ..OrchestratorConfig::default()
    };
    cfg.eda.backend = EdaBackendKind::Mock;
    cfg
}

pub const IMPL_FIDELITY_SEED: u64 = 7;

pub const REVIEWER_FEEDBACK: &str = "The output logic must raise valid_out only after the fourth \
valid input has been accumulated. As written, valid_out goes high whenever valid_in is high while \
count equals 3, which asserts it one cycle early and breaks the handshake expected by the \
downstream consumer. Merge the count and accumulation updates into one clocked process so the two \
registers cannot fall out of step.";

pub const IMPL_CODE_ROUND_1: &str = "module accu(input clk, input rst_n, input [7:0] data_in, input valid_in,\n            output reg valid_out, output reg [9:0] data_out);\n  // Single accumulator register\n  reg [9:0] accumulator;\n  reg [1:0] count;\n\n  always @(posedge clk or negedge rst_n) begin\n    // count logic\n  end\n\n  always @(posedge clk or negedge rst_n) begin\n    // accumulation logic\n  end\n\n  always @(posedge clk or negedge rst_n) begin\n    // output logic\n  end\nendmodule";

pub const IMPL_CODE_ROUND_2: &str = "// MOCK: pass=true power=11.76 perf=2.01 area=192\nmodule accu(input clk, input rst_n, input [7:0] data_in, input valid_in,\n            output reg valid_out, output reg [9:0] data_out);\n  // Single accumulator register\n  reg [9:0] accumulator;\n  reg [1:0] count;\n\n  // combined count and accumulation logic\n  always @(posedge clk or negedge rst_n) begin\n    if (!rst_n) begin\n      count <= 0;\n      accumulator <= 0;\n      valid_out <= 0;\n    end else if (valid_in) begin\n      accumulator <= accumulator + data_in;\n      count <= count + 1;\n      valid_out <= (count == 2'd3);\n    end else begin\n      valid_out <= 0;\n    end\n  end\nendmodule";

/// Two-round programmer/reviewer session over an 8-bit accumulator: the
/// first candidate is functionally wrong, the reviewer's feedback drives a
/// refactor, the second candidate passes.
pub fn impl_fidelity_fixture() -> (OrchestratorConfig, DesignInputs, Vec<ScriptRecord>) {
    let seed = IMPL_FIDELITY_SEED;
    let mut builder = ScriptBuilder::new();
    script_simple_exploration_cycle(
        &mut builder,
        seed,
        0,
        1,
        0,
        "refactor the accumulation logic to reduce the critical path delay",
    );
    builder.add(
        RoleId::Programmer,
        Stage::Implementation,
        1,
        format!(
            "The exploration squad asked for a refactor of the accumulation logic to reduce the \
             critical path delay. I will follow structured implementation steps: 1. define the \
             accumulator register; 2. implement the count logic; 3. implement the output logic.\n{}",
            code_block(IMPL_CODE_ROUND_1)
        ),
    );
    builder.add(
        RoleId::Reviewer,
        Stage::Implementation,
        1,
        format!(
            "Please address the following issue before I can sign off.\n{}",
            review_block(&[], REVIEWER_FEEDBACK, &[])
        ),
    );
    builder.add(
        RoleId::Programmer,
        Stage::Implementation,
        2,
        format!(
            "To address the feedback I merged the count and accumulation updates into a single \
             clocked process and derived valid_out from the completed count, so it asserts exactly \
             on the fourth accepted word.\n{}",
            code_block(IMPL_CODE_ROUND_2)
        ),
    );
    builder.add(
        RoleId::Reviewer,
        Stage::Implementation,
        2,
        format!(
            "The combined process asserts valid_out exactly on the fourth accepted word; the \
             refactor is complete.\n{}",
            review_block(&[1], "", &[])
        ),
    );
    script_analysis(
        &mut builder,
        "The accumulator passed simulation; the merged process closed timing with margin.",
        4,
        "The refactor met the plan and the figures are sound.",
        true,
    );
    (
        embedded_script_config(seed),
        inputs(
            "Design an 8-bit data accumulator that emits a valid output after every four valid inputs.",
            "accumulator testbench",
            None,
        ),
        builder.records(),
    )
}

pub const GATING_DESCRIPTION: &str =
    "Implement clock gating in the pipeline stages to reduce dynamic power consumption";
pub const REUSE_DESCRIPTION: &str =
    "Reduce the number of registers in the pipeline stages by reusing intermediate registers";

/// Debate session over a pipelined adder: a power-saving commit is accepted
/// three-to-nothing, a riskier register-reuse commit is voted down.
pub fn expl_fidelity_fixture() -> (OrchestratorConfig, DesignInputs, Vec<ScriptRecord>) {
    let seed =
        seed_with_first_order(&[RoleId::PowerExpert, RoleId::AreaExpert, RoleId::PerfExpert]);
    let gating_action = action_id_for_commit(
        "79b4",
        "cg",
        ActionKind::Opt,
        GATING_DESCRIPTION,
        RoleId::PowerExpert,
        0,
    );
    let reuse_action = action_id_for_commit(
        "982d",
        "rr",
        ActionKind::Expl,
        REUSE_DESCRIPTION,
        RoleId::AreaExpert,
        0,
    );

    let mut builder = ScriptBuilder::new();
    builder.add(
        RoleId::Observer,
        Stage::Verification,
        1,
        "The QoR report shows no timing violations; the pipeline carries substantial register area \
         and its dynamic power dominates the budget.",
    );
    builder.add(
        RoleId::Analyst,
        Stage::Verification,
        1,
        format!(
            "The baseline pipeline is correct but power-hungry; the next exploration round should \
             target dynamic power.\n{}\n{}",
            rating_block(3, "correct baseline, heavy power draw"),
            decision_block(false, None, "clear headroom remains")
        ),
    );

    builder.add(
        RoleId::PowerExpert,
        Stage::Exploration,
        1,
        format!(
            "I suggest we implement clock gating in the pipeline stages to reduce dynamic power \
             consumption. Gating the clock for stages that do not need to be updated in every \
             cycle prevents unnecessary toggling, which is particularly effective in idle or \
             less frequently used stages. This action will consume 1 exploration point.\n{}",
            proposal_block(
                &gating_action,
                ActionKind::Opt,
                GATING_DESCRIPTION,
                "prevents unnecessary clock toggling in idle stages"
            )
        ),
    );
    let gating_vote_area = vote_block(
        "79b4",
        true,
        "solid optimization that aligns with the area goals",
    );
    builder.add(
        RoleId::AreaExpert,
        Stage::Exploration,
        1,
        format!(
            "I agree with the clock gating proposal; it reduces power without compromising \
             performance. I also suggest we reuse intermediate registers and simplify the \
             pipeline structure to shrink the footprint. This action will consume 2 exploration \
             points.\n{gating_vote_area}\n{}",
            proposal_block(
                &reuse_action,
                ActionKind::Expl,
                REUSE_DESCRIPTION,
                "a more compact design with fewer registers"
            )
        ),
    );
    builder.add(
        RoleId::PerfExpert,
        Stage::Exploration,
        1,
        format!(
            "Clock gating is effective in reducing power in idle pipeline stages, and the added \
             control complexity is manageable together with the implementation team, so I accept \
             it. Reusing intermediate registers, however, could lead to data hazards and timing \
             issues if not carefully managed, so I reject that commit and would rather explore \
             other optimization actions.\n{}\n{}",
            vote_block(
                "79b4",
                true,
                "effective in idle stages, complexity is manageable"
            ),
            vote_block("982d", false, "could lead to data hazards")
        ),
    );

    let order2 = speaking_order(seed, 1);
    for expert in &order2 {
        if *expert == RoleId::PowerExpert {
            builder.add(
                *expert,
                Stage::Exploration,
                2,
                format!(
                    "On reflection, the hazard risk of register reuse outweighs the area win this \
                     round.\n{}",
                    vote_block("982d", false, "timing risk outweighs the area saving")
                ),
            );
        } else {
            builder.add(
                *expert,
                Stage::Exploration,
                2,
                "Nothing further to propose; the gating action is the right scope for this round.",
            );
        }
    }
    for expert in &order2 {
        builder.add(
            *expert,
            Stage::Exploration,
            2,
            format!(
                "The plan is acceptable.\n{}",
                poll_block(true, "one well-understood action")
            ),
        );
    }

    builder.add(
        RoleId::Programmer,
        Stage::Implementation,
        1,
        format!(
            "Implementing clock gating: 1. add an enable term per pipeline stage; 2. gate the \
             stage clocks with the enable; 3. keep the handshake untouched.\n{}",
            code_block(
                "// MOCK: pass=true power=102.84 perf=8.63 area=1738.28\nmodule adder_pipe(input clk, input rst_n);\n  // gated stage clocks\nendmodule"
            )
        ),
    );
    builder.add(
        RoleId::Reviewer,
        Stage::Implementation,
        1,
        format!(
            "The gating enables are correct and no stage lost its update condition.\n{}",
            review_block(&[1], "", &[])
        ),
    );

    builder.add(
        RoleId::Observer,
        Stage::Verification,
        1,
        "Dynamic power dropped by nearly half while the critical path stayed within budget.",
    );
    builder.add(
        RoleId::Analyst,
        Stage::Verification,
        1,
        format!(
            "The gating action delivered the targeted power reduction without hurting timing; the \
             design is in good shape.\n{}\n{}",
            rating_block(4, "the plan clearly improved the key metric"),
            decision_block(true, Some(1), "metrics have settled at a good point")
        ),
    );

    (
        embedded_script_config(seed),
        inputs(
            "Optimize a pipelined 64-bit ripple carry adder.",
            "adder testbench",
            Some("// MOCK: pass=true power=187.54 perf=8.9 area=2201\nmodule adder_pipe(input clk, input rst_n);\nendmodule"),
        ),
        builder.records(),
    )
}

/// Session directories for tests.
pub fn temp_session_root(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "rtlsquad-test-{tag}-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
