//! Exit codes, file round trips and renderer behaviour of the binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use brickplan_core::coordinate::Message;
use brickplan_core::Schedule;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brickplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn demo_mission_path() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../missions/demo_wall.json")
        .to_str()
        .unwrap()
        .to_owned()
}

#[test]
fn malformed_mission_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ this is not json").unwrap();
    let output = run(&["plan", bad.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    let output = run(&["plan", missing.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn invalid_weights_exit_3() {
    let mission = demo_mission_path();
    let output = run(&["plan", &mission, "--alpha", "0.9", "--beta", "0.9"]);
    assert_eq!(output.status.code(), Some(3));
    let output = run(&["plan", &mission, "--delta", "0.2"]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn zero_sized_generation_exits_3() {
    let output = run(&["gen", "--seed", "1", "--bricks", "0", "--agents", "2"]);
    assert_eq!(output.status.code(), Some(3));
    let output = run(&["gen", "--seed", "1", "--bricks", "3", "--agents", "0"]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn empty_corpus_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(&["compare", dir.path().to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(5));
}

#[test]
fn oversized_corpus_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let big = dir.path().join("big.json");
    let output = run(&[
        "gen", "--seed", "1", "--bricks", "9", "--agents", "2", "--out",
        big.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let output = run(&["compare", dir.path().to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(5));
}

#[test]
fn generated_missions_pass_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mission = dir.path().join("mission.json");
    let output = run(&[
        "gen", "--seed", "7", "--bricks", "4", "--agents", "3", "--out",
        mission.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let output = run(&["validate", mission.to_str().unwrap()]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("ok:"));

    // Same seed, same bytes.
    let again = dir.path().join("again.json");
    let output = run(&[
        "gen", "--seed", "7", "--bricks", "4", "--agents", "3", "--out",
        again.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert_eq!(
        std::fs::read(&mission).unwrap(),
        std::fs::read(&again).unwrap()
    );
}

#[test]
fn tampered_mission_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(demo_mission_path()).unwrap();
    let tampered = text.replace("\"supports\": [\"B1\"]", "\"supports\": [\"NOPE\"]");
    assert_ne!(text, tampered);
    let path = dir.path().join("tampered.json");
    std::fs::write(&path, tampered).unwrap();
    let output = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn render_rejects_garbage_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "[1, 2, 3]").unwrap();
    let output = run(&["render", garbage.to_str().unwrap(), "--format", "svg"]);
    assert_eq!(output.status.code(), Some(2));

    let mission = demo_mission_path();
    let schedule_path = dir.path().join("schedule.json");
    let output = run(&["plan", &mission, "--out", schedule_path.to_str().unwrap()]);
    assert!(output.status.success());

    let svg_a = run(&["render", schedule_path.to_str().unwrap(), "--format", "svg"]);
    let svg_b = run(&["render", schedule_path.to_str().unwrap(), "--format", "svg"]);
    assert!(svg_a.status.success());
    assert_eq!(svg_a.stdout, svg_b.stdout, "identical input, identical bytes");

    // One rect per executed action: four per assigned brick in each lane.
    let schedule: Schedule =
        serde_json::from_str(&std::fs::read_to_string(&schedule_path).unwrap()).unwrap();
    let svg = String::from_utf8(svg_a.stdout).unwrap();
    let rects = svg.matches("<rect class=\"action\"").count();
    assert_eq!(rects, schedule.entries.len());
    assert_eq!(rects, 4 * 6, "four segments per brick across the lanes");

    let text = run(&["render", schedule_path.to_str().unwrap(), "--format", "text"]);
    assert!(text.status.success());
    let text = String::from_utf8(text.stdout).unwrap();
    assert!(text.contains("legend: G go-to-pile"));
}

#[test]
fn empty_schedule_renders_without_panicking() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    std::fs::write(
        &path,
        "{\"entries\":[],\"makespan\":0.0,\"total_cost\":0.0,\"total_quality\":0.0}",
    )
    .unwrap();
    let text = run(&["render", path.to_str().unwrap(), "--format", "text"]);
    assert!(text.status.success());
    assert!(String::from_utf8_lossy(&text.stdout).contains("(empty schedule)"));
    let svg = run(&["render", path.to_str().unwrap(), "--format", "svg"]);
    assert!(svg.status.success());
    assert!(String::from_utf8_lossy(&svg.stdout).contains("</svg>"));
}

#[test]
fn coordinate_writes_a_replayable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let schedule_path = dir.path().join("schedule.json");
    let trace_path = dir.path().join("trace.ndjson");
    let mission = demo_mission_path();
    let output = run(&[
        "coordinate",
        &mission,
        "--seed",
        "5",
        "--out",
        schedule_path.to_str().unwrap(),
        "--trace",
        trace_path.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let trace = std::fs::read_to_string(&trace_path).unwrap();
    let mut kinds = std::collections::BTreeSet::new();
    for line in trace.lines() {
        let message: Message = serde_json::from_str(line).expect("each line is one message");
        kinds.insert(format!("{:?}", std::mem::discriminant(&message.body)));
    }
    assert!(trace.lines().count() > 10);
    // Re-running with the same seed reproduces the trace byte for byte.
    let trace_again = dir.path().join("trace2.ndjson");
    let output = run(&[
        "coordinate",
        &mission,
        "--seed",
        "5",
        "--out",
        schedule_path.to_str().unwrap(),
        "--trace",
        trace_again.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert_eq!(
        std::fs::read(&trace_path).unwrap(),
        std::fs::read(&trace_again).unwrap()
    );
}

#[test]
fn plan_summary_lists_every_agent() {
    let mission = demo_mission_path();
    let output = run(&["plan", &mission]);
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("makespan:"));
    for agent in ["uav1", "uav2", "ugv1"] {
        assert!(stdout.contains(&format!("  {agent}: ")), "{stdout}");
    }
}
