use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn hetfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetfl")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

#[test]
fn eval_middle_on_fig2() {
    let out = hetfl(&["eval", "--mechanism", "middle", "--instance", "fig2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["expected_welfare"], "11/6");
    assert_eq!(v["lottery"][0]["placements"][0]["facility"], 1);
    assert_eq!(v["lottery"][0]["placements"][0]["location"], "1/2");
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn eval_rd_single_agent_is_a_point_mass() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.json");
    fs::write(&path, r#"{"m": 2, "agents": [{"x": "2/7", "approve": [2]}]}"#).unwrap();
    let out = hetfl(&["eval", "--mechanism", "rd:optimal", "--instance", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["lottery"].as_array().unwrap().len(), 1);
    assert_eq!(v["lottery"][0]["probability"], "1/1");
    assert_eq!(v["lottery"][0]["placements"][0]["location"], "2/7");
    assert_eq!(v["lottery"][0]["placements"][0]["facility"], 2);
}

#[test]
fn eval_fixed_rd_on_prd() {
    let v = json(&hetfl(&["eval", "--mechanism", "rd:fixed:1/2", "--instance", "prd"]));
    assert_eq!(v["expected_welfare"], "79/4");
}

#[test]
fn opt_reports_placement() {
    let v = json(&hetfl(&["opt", "--instance", "fig2"]));
    assert_eq!(v["optimal_welfare"], "13/6");
}

#[test]
fn audit_exit_codes() {
    let fail = hetfl(&["audit", "--mechanism", "rd:optimal", "--instance", "fig3", "--setting", "general", "--grid", "10"]);
    assert_eq!(fail.status.code(), Some(1));
    let v = json(&fail);
    assert_eq!(v["verdict"], "FAIL");
    let witnesses: Vec<&Value> = v["violations"].as_array().unwrap().iter().collect();
    assert!(witnesses.iter().all(|w| w["coalition"] == serde_json::json!([4])));
    assert!(witnesses.iter().any(|w| w["utility_before"][0] == "1/4" && w["utility_after"][0] == "3/10"));

    let pass = hetfl(&["audit", "--mechanism", "middle", "--instance", "fig1", "--setting", "general", "--grid", "8"]);
    assert_eq!(pass.status.code(), Some(0));
    assert_eq!(json(&pass)["verdict"], "PASS");
}

#[test]
fn group_audit_csv() {
    let out = hetfl(&[
        "audit", "--mechanism", "km-middle", "--instance", "km-nongsp:4:2", "--group", "--max-coalition", "2", "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "mechanism,instance_id,setting,verdict,n_deviations,first_violation_agent,utility_before,utility_after"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[3], "FAIL");
    assert_eq!(row[5], "3;4");
    assert_eq!(row[7], "1/1;1/1");
}

#[test]
fn ratio_of_rd_worst_case() {
    let out = hetfl(&["ratio", "--mechanism", "rd:optimal", "--instance", "rd-worst-case"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["ratio"], "3/2");
    assert_eq!(v["within_bound"], true);
}

#[test]
fn reproduce_fig2_table() {
    let out = hetfl(&["reproduce", "fig2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for value in ["13/6", "11/6", "13/11"] {
        assert!(text.contains(value), "{value} missing from\n{text}");
    }
    assert!(!text.contains(" NO"));
}

#[test]
fn reproduce_json_for_every_name() {
    for name in ["fig1", "fig2", "random-median-lb", "fig3", "prd", "km-nongsp", "km-lb"] {
        let out = hetfl(&["reproduce", name, "--format", "json"]);
        assert_eq!(out.status.code(), Some(0), "{name}");
        assert_eq!(json(&out)["all_hold"], true, "{name}");
    }
}

#[test]
fn mirror_search_reaches_its_bound() {
    let out = hetfl(&["search", "--mechanism", "mirror", "--n", "4", "--grid", "1000", "--seed", "7", "--iters", "10000"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let ratio = v["max_ratio_decimal"].as_f64().unwrap();
    assert!((4.0 / 3.0 - 1e-2..=4.0 / 3.0 + 1e-12).contains(&ratio), "{ratio}");
    assert_eq!(v["exceeds_bound"], false);
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (i, threads) in ["1", "4", "4"].iter().enumerate() {
        let path = dir.path().join(format!("r{i}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_hetfl"))
            .env("FM_THREADS", threads)
            .args(["search", "--mechanism", "proportional", "--n", "5", "--grid", "50", "--seed", "3", "--iters", "3000"])
            .args(["--output", path.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
        files.push(fs::read(path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[1], files[2]);
}

#[test]
fn conjecture_reports_references() {
    let v = json(&hetfl(&["conjecture", "--seed", "0", "--iters", "2000", "--n", "5", "--grid", "10"]));
    let refs = v["references"].as_array().unwrap();
    assert_eq!(refs[0]["name"], "prd");
    assert_eq!(refs[0]["ratio"], "780/527");
    assert!(v["witness_instance"]["agents"].as_array().unwrap().len() == 5);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(hetfl(&["eval", "--mechanism", "middle", "--instance", "fig99"]).status.code(), Some(2));
    assert_eq!(hetfl(&["eval", "--mechanism", "bogus", "--instance", "fig2"]).status.code(), Some(2));
    assert_eq!(hetfl(&["reproduce", "nothing"]).status.code(), Some(2));
    assert_eq!(hetfl(&["search", "--mechanism", "mirror", "--n", "3"]).status.code(), Some(2), "seed is required");
    assert_eq!(
        hetfl(&["eval", "--mechanism", "mirror", "--instance", "km-nongsp"]).status.code(),
        Some(2),
        "mirror needs two facilities"
    );
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\"m\": 2,\n \"agents\": [{\"x\": \"1/2\", \"approve\": []}]}").unwrap();
    let out = hetfl(&["opt", "--instance", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("agents[0]"), "{err}");

    fs::write(&path, "{\"m\": 2,\n \"agents\": [{\"x\": 0.5, \"approve\": [1]}]}").unwrap();
    let err = String::from_utf8(hetfl(&["opt", "--instance", path.to_str().unwrap()]).stderr).unwrap();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn audit_cap_is_a_usage_error() {
    let out = hetfl(&["audit", "--mechanism", "middle", "--instance", "prd", "--group", "--max-coalition", "3", "--cap", "1000"]);
    assert_eq!(out.status.code(), Some(2));
}
