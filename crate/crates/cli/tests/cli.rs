//! End-to-end tests of the rtlsquad binary: exit codes, file outputs, and
//! flag/config precedence.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::{failing_script, single_cycle_script};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_rtlsquad")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "rtlsquad-cli-{tag}-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_design_files(dir: &Path) -> (PathBuf, PathBuf) {
    let spec = dir.join("spec.md");
    let tb = dir.join("tb.v");
    std::fs::write(&spec, "Design a 4-bit adder with registered output.").unwrap();
    std::fs::write(&tb, "module tb; endmodule").unwrap();
    (spec, tb)
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(binary()).args(args).output().unwrap()
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

#[test]
fn run_happy_path_exits_zero_and_writes_documents() {
    let dir = temp_dir("run-ok");
    let (spec, tb) = write_design_files(&dir);
    let script = dir.join("agents.jsonl");
    single_cycle_script(7, "// MOCK: pass=true power=12 perf=2 area=100", true)
        .write_jsonl(&script);
    let out = dir.join("session");

    let output = run_cli(&[
        "run",
        "--spec",
        spec.to_str().unwrap(),
        "--testbench",
        tb.to_str().unwrap(),
        "--mock-eda",
        "--script",
        script.to_str().unwrap(),
        "--seed",
        "7",
        "--auto-accept",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&output),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("outcome: accepted v0"), "{stdout}");
    assert!(out.join("decision_path.md").exists());
    assert!(out.join("transcript.jsonl").exists());
    assert!(out.join("session.json").exists());
    assert!(out.join("versions/v0.v").exists());
}

#[test]
fn missing_testbench_flag_is_a_usage_error() {
    let dir = temp_dir("run-usage");
    let (spec, _) = write_design_files(&dir);
    let output = run_cli(&["run", "--spec", spec.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 1);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("--testbench"), "{stderr}");
}

#[test]
fn missing_testbench_file_is_a_usage_error() {
    let dir = temp_dir("run-missing-file");
    let (spec, _) = write_design_files(&dir);
    let output = run_cli(&[
        "run",
        "--spec",
        spec.to_str().unwrap(),
        "--testbench",
        dir.join("absent.v").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn failing_scenario_exits_two() {
    let dir = temp_dir("run-fail");
    let (spec, tb) = write_design_files(&dir);
    let script = dir.join("agents.jsonl");
    failing_script(7, 2).write_jsonl(&script);
    let out = dir.join("session");

    let output = run_cli(&[
        "run",
        "--spec",
        spec.to_str().unwrap(),
        "--testbench",
        tb.to_str().unwrap(),
        "--mock-eda",
        "--script",
        script.to_str().unwrap(),
        "--seed",
        "7",
        "--auto-accept",
        "--max-inner",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&output), 2);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("UnfixableDesign"), "{stdout}");
    // partial documents are still written
    assert!(out.join("decision_path.md").exists());
}

#[test]
fn resume_of_a_finished_session_repeats_the_outcome() {
    let dir = temp_dir("resume-ok");
    let (spec, tb) = write_design_files(&dir);
    let script = dir.join("agents.jsonl");
    single_cycle_script(7, "// MOCK: pass=true power=12 perf=2 area=100", true)
        .write_jsonl(&script);
    let out = dir.join("session");

    let first = run_cli(&[
        "run",
        "--spec",
        spec.to_str().unwrap(),
        "--testbench",
        tb.to_str().unwrap(),
        "--mock-eda",
        "--script",
        script.to_str().unwrap(),
        "--seed",
        "7",
        "--auto-accept",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&first), 0);

    let resumed = run_cli(&["resume", "--session", out.to_str().unwrap()]);
    assert_eq!(exit_code(&resumed), 0);
    assert!(String::from_utf8_lossy(&resumed.stdout).contains("accepted v0"));
}

#[test]
fn resume_of_a_corrupt_session_exits_two() {
    let dir = temp_dir("resume-corrupt");
    let session = dir.join("session");
    std::fs::create_dir_all(&session).unwrap();
    std::fs::write(session.join("session.json"), "{not valid json").unwrap();
    std::fs::write(session.join("transcript.jsonl"), "{\"schema\":1}\n").unwrap();
    let output = run_cli(&["resume", "--session", session.to_str().unwrap()]);
    assert_eq!(exit_code(&output), 2);
}

#[test]
fn resume_of_a_nonexistent_dir_exits_one() {
    let dir = temp_dir("resume-nodir");
    let output = run_cli(&["resume", "--session", dir.join("nope").to_str().unwrap()]);
    assert_eq!(exit_code(&output), 1);
}

#[test]
fn report_prints_the_version_table_with_the_best_row_marked() {
    let dir = temp_dir("report");
    let (spec, tb) = write_design_files(&dir);
    let script = dir.join("agents.jsonl");
    single_cycle_script(7, "// MOCK: pass=true power=12 perf=2 area=100", true)
        .write_jsonl(&script);
    let out = dir.join("session");

    run_cli(&[
        "run",
        "--spec",
        spec.to_str().unwrap(),
        "--testbench",
        tb.to_str().unwrap(),
        "--mock-eda",
        "--script",
        script.to_str().unwrap(),
        "--seed",
        "7",
        "--auto-accept",
        "--out",
        out.to_str().unwrap(),
    ]);

    let report = run_cli(&["report", "--session", out.to_str().unwrap()]);
    assert_eq!(exit_code(&report), 0);
    let stdout = String::from_utf8_lossy(&report.stdout).to_string();
    assert!(stdout.contains("* v0"), "best row marked: {stdout}");
    assert!(stdout.contains("12.000"), "{stdout}");

    // pure function of the on-disk files: a second report is identical
    let again = run_cli(&["report", "--session", out.to_str().unwrap()]);
    assert_eq!(String::from_utf8_lossy(&again.stdout), stdout);
}

#[test]
fn report_of_a_corrupt_transcript_exits_two() {
    let dir = temp_dir("report-corrupt");
    let (spec, tb) = write_design_files(&dir);
    let script = dir.join("agents.jsonl");
    single_cycle_script(7, "// MOCK: pass=true power=12 perf=2 area=100", true)
        .write_jsonl(&script);
    let out = dir.join("session");
    run_cli(&[
        "run",
        "--spec",
        spec.to_str().unwrap(),
        "--testbench",
        tb.to_str().unwrap(),
        "--mock-eda",
        "--script",
        script.to_str().unwrap(),
        "--seed",
        "7",
        "--auto-accept",
        "--out",
        out.to_str().unwrap(),
    ]);

    let transcript = out.join("transcript.jsonl");
    let text = std::fs::read_to_string(&transcript).unwrap();
    std::fs::write(&transcript, &text[..text.len() - 8]).unwrap();
    let report = run_cli(&["report", "--session", out.to_str().unwrap()]);
    assert_eq!(exit_code(&report), 2);
}

#[test]
fn flags_strictly_override_config_file_values() {
    let dir = temp_dir("flags");
    let (spec, tb) = write_design_files(&dir);
    let script = dir.join("agents.jsonl");
    single_cycle_script(99, "// MOCK: pass=true power=12 perf=2 area=100", true)
        .write_jsonl(&script);

    // the config file sets three representative keys ...
    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        serde_json::json!({
            "seed": 1,
            "max_outer_iters": 9,
            "provider": {"kind": "remote", "model": "config-model"}
        })
        .to_string(),
    )
    .unwrap();

    // ... and every one of them is overridden on the command line
    let out = dir.join("session");
    let output = run_cli(&[
        "run",
        "--spec",
        spec.to_str().unwrap(),
        "--testbench",
        tb.to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
        "--mock-eda",
        "--script",
        script.to_str().unwrap(),
        "--seed",
        "99",
        "--max-outer",
        "3",
        "--model",
        "flag-model",
        "--auto-accept",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&output),
        0,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );

    let envelope: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("session.json")).unwrap()).unwrap();
    let cfg = &envelope["config"];
    assert_eq!(cfg["seed"], 99);
    assert_eq!(cfg["max_outer_iters"], 3);
    assert_eq!(cfg["provider"]["model"], "flag-model");
    // config-file values that were not overridden survive
    assert_eq!(cfg["min_outer_iters"], 2);
}

#[test]
fn checked_in_demo_fixtures_drive_a_green_run() {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo");
    if !demo.join("agents.jsonl").exists() {
        panic!("demo fixtures missing; run the ignored regenerate_demo_fixtures test");
    }
    let out = temp_dir("demo").join("session");
    let output = run_cli(&[
        "run",
        "--spec",
        demo.join("spec.md").to_str().unwrap(),
        "--testbench",
        demo.join("tb.v").to_str().unwrap(),
        "--mock-eda",
        "--script",
        demo.join("agents.jsonl").to_str().unwrap(),
        "--seed",
        "7",
        "--auto-accept",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&output),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Regenerates the checked-in demo fixtures. Run manually:
/// `cargo test -p rtlsquad-cli --test cli regenerate_demo_fixtures -- --ignored`
#[test]
#[ignore]
fn regenerate_demo_fixtures() {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo");
    std::fs::create_dir_all(&demo).unwrap();
    std::fs::write(
        demo.join("spec.md"),
        "Design a 4-bit adder with registered output. The sum must be available one cycle after the operands are applied.\n",
    )
    .unwrap();
    std::fs::write(
        demo.join("tb.v"),
        "module tb;\n  // exercises the adder with directed operand pairs\nendmodule\n",
    )
    .unwrap();
    single_cycle_script(7, "// MOCK: pass=true power=12 perf=2 area=100", true)
        .write_jsonl(&demo.join("agents.jsonl"));
}
