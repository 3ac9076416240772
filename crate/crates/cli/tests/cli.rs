use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use cirl_core::archive::SolutionArchive;
use cirl_core::config::Mode;

fn cirl() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cirl"));
    cmd.env_remove("CIRL_OUT_DIR");
    cmd
}

fn domain(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../domains").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cirl-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{:?} failed\nstdout:\n{}\nstderr:\n{}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn play(args: &[&str], stdin: &str, out: &Path) -> String {
    let mut child = cirl()
        .arg("play")
        .args(args)
        .arg("--out")
        .arg(out)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    let output = child.wait_with_output().unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    String::from_utf8(output.stdout).unwrap()
}

const WALKTHROUGH: &str = "slice bread\nwait\nwait\nwait\n";

#[test]
fn solve_is_byte_reproducible() {
    let (a, b) = (scratch("repro-a"), scratch("repro-b"));
    for dir in [&a, &b] {
        run(cirl().args(["solve", "--domain"]).arg(domain("chefworld2.json")).args(["--beta", "5", "--out"]).arg(dir));
    }
    for file in ["solution.bin", "solve_report.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let archive = SolutionArchive::read(&a.join("solution.bin")).unwrap();
    let report = std::fs::read_to_string(a.join("solve_report.json")).unwrap();
    assert_eq!(archive.config_hash.len(), 64);
    assert!(report.contains(&archive.config_hash));
    assert!(archive.solutions.cirl.is_some());

    for seed_dir in [&a, &b] {
        run(cirl()
            .arg("simulate")
            .arg(a.join("solution.bin"))
            .args(["--episodes", "5", "--seed", "7", "--out"])
            .arg(seed_dir));
    }
    let trace = std::fs::read(a.join("trace.jsonl")).unwrap();
    assert_eq!(trace, std::fs::read(b.join("trace.jsonl")).unwrap());
    assert!(String::from_utf8(trace).unwrap().lines().next().unwrap().contains(&archive.config_hash));
}

#[test]
fn config_file_and_flags_agree() {
    let dir = scratch("config");
    let config = dir.join("run.json");
    let domain = domain("chefworld2.json");
    std::fs::write(
        &config,
        serde_json::json!({"domain": domain, "mode": "cirl", "model": {"kind": "boltzmann", "beta": 5.0}}).to_string(),
    )
    .unwrap();
    run(cirl().args(["solve", "--config"]).arg(&config).arg("--out").arg(dir.join("from-config")));
    run(cirl().args(["solve", "--domain"]).arg(&domain).args(["--beta", "5", "--out"]).arg(dir.join("from-flags")));
    let read = |d: &str| std::fs::read(dir.join(d).join("solution.bin")).unwrap();
    assert_eq!(read("from-config"), read("from-flags"));

    std::fs::write(&config, r#"{"domain": "x.json", "model": {"kind": "rational"}, "colour": 1}"#).unwrap();
    let out = cirl().args(["solve", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_dir_comes_from_the_environment() {
    let dir = scratch("env");
    let flag_dir = dir.join("flag");
    run(cirl()
        .env("CIRL_OUT_DIR", &dir)
        .args(["solve", "--domain", "chefworld-2", "--mode", "irl", "--beta", "2.5", "--out"])
        .arg(&flag_dir));
    assert!(dir.join("solution.bin").exists());
    assert!(!flag_dir.exists());
}

#[test]
fn irl_archive_holds_the_literal_pipeline() {
    let dir = scratch("irl");
    run(cirl().args(["solve", "--domain", "chefworld-2", "--mode", "irl", "--beta", "5", "--out"]).arg(&dir));
    let archive = SolutionArchive::read(&dir.join("solution.bin")).unwrap();
    assert_eq!(archive.mode, Mode::Irl);
    assert!(archive.solutions.cirl.is_none());
    let literal = archive.solutions.literal.unwrap();
    assert_eq!(literal.full.per_objective.len(), archive.spec.num_objectives());
}

#[test]
fn malformed_domain_exits_with_two() {
    let dir = scratch("bad");
    let text =
        std::fs::read_to_string(domain("chefworld2.json")).unwrap().replace("\"discount\": 1.0", "\"discount\": 1.5");
    let bad = dir.join("bad.json");
    std::fs::write(&bad, text).unwrap();
    let validate = cirl().arg("validate").arg(&bad).output().unwrap();
    let solve = cirl().args(["solve", "--domain"]).arg(&bad).arg("--out").arg(&dir).output().unwrap();
    for out in [validate, solve] {
        assert_eq!(out.status.code(), Some(2));
        let all = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
        assert!(all.contains("discount: 1.5 is outside"), "{all}");
    }
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(cirl().args(["validate"]).arg(&bad).output().unwrap().status.code(), Some(2));
    assert_eq!(cirl().args(["validate", "no-such-domain"]).output().unwrap().status.code(), Some(2));
    assert!(!dir.join("solution.bin").exists());
}

#[test]
fn compile_emits_the_flat_game() {
    let out = run(cirl().arg("compile").arg(domain("chefworld2.json")));
    let spec: cirl_core::GameSpec = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(spec.objectives, ["soup", "salad"]);
    assert!(cirl_core::game::validate_game(&spec).is_empty());
}

#[test]
fn benchmark_single_column() {
    let dir = scratch("bench-one");
    let out = run(cirl().args(["benchmark", "--beta", "1", "--out"]).arg(&dir));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("benchmark.json")).unwrap()).unwrap();
    assert_eq!(report["columns"].as_array().unwrap().len(), 1);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("beta=1") && !table.contains("beta=5"), "{table}");
    assert_eq!(std::fs::read_to_string(dir.join("benchmark.txt")).unwrap(), table);
}

#[test]
fn benchmark_default_run_passes_the_ordering_check() {
    let dir = scratch("bench-all");
    let out = run(cirl().args(["benchmark", "--assert-paper-ordering", "--out"]).arg(&dir));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("ordering check passed"), "{table}");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("benchmark.json")).unwrap()).unwrap();
    assert_eq!(report["columns"].as_array().unwrap().len(), 4);
}

#[test]
fn scripted_play_shows_the_flip_to_soup() {
    let dir = scratch("play-cirl");
    let transcript = play(&["--true-recipe", "soup", "--mode", "cirl"], WALKTHROUGH, &dir);
    assert!(transcript.contains("you: wait | robot belief now: soup 0.989"), "{transcript}");
    assert!(transcript.contains("outcome: success"), "{transcript}");
}

#[test]
fn scripted_play_against_the_literal_robot_fails() {
    let dir = scratch("play-irl");
    let transcript = play(&["--true-recipe", "soup", "--mode", "irl"], WALKTHROUGH, &dir);
    assert!(transcript.contains("outcome: failure"), "{transcript}");
    let trace = std::fs::read_to_string(dir.join("play_trace.jsonl")).unwrap();
    assert!(trace.lines().last().unwrap().contains("\"success\":false"));
}

#[test]
fn play_reprompts_on_illegal_input_and_saves_on_eof() {
    let dir = scratch("play-eof");
    let transcript = play(&["--true-recipe", "salad"], "", &dir);
    assert!(transcript.contains("input closed after 0 turns"), "{transcript}");
    let trace = std::fs::read_to_string(dir.join("play_trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 2);

    let transcript = play(&["--true-recipe", "salad"], "pizza\n99\n4\n", &dir);
    assert_eq!(transcript.matches("not a legal action here").count(), 2, "{transcript}");
    assert!(transcript.contains("input closed after 1 turns"), "{transcript}");
    let trace = std::fs::read_to_string(dir.join("play_trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 3);
}
