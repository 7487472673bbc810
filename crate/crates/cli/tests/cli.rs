use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn gbb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gbb")).args(args).output().expect("run gbb")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn solve_json(instance: &Path) -> Value {
    let out = gbb(&["solve", instance.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn final_prices(doc: &Value) -> Vec<String> {
    doc["buyers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["final_price"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn solve_fix_e1() {
    let doc = solve_json(&data("fix_e1.json"));
    assert_eq!(doc["social_welfare"], 6);
    assert_eq!(final_prices(&doc), ["6", "4"]);
    assert_eq!(doc["group_transfers"][0]["vendor"], "s1");
    assert_eq!(doc["group_transfers"][0]["set"], serde_json::json!(["s1"]));
    assert_eq!(doc["group_transfers"][0]["amount"], 1);
    assert_eq!(doc["certificate"]["passed"], true);
}

#[test]
fn solve_fix_e2() {
    let doc = solve_json(&data("fix_e2.json"));
    assert_eq!(doc["social_welfare"], 9);
    assert_eq!(final_prices(&doc), ["5", "5", "5"]);
    let transfers = doc["transfers"].as_array().unwrap();
    assert_eq!(transfers.len(), 2);
    assert_eq!(transfers[0], serde_json::json!({"from": "b1", "to": "b3", "amount": "1"}));
    assert_eq!(transfers[1], serde_json::json!({"from": "b2", "to": "b3", "amount": "1"}));
}

#[test]
fn solve_is_byte_reproducible() {
    let a = gbb(&["solve", data("fix_e2.json").to_str().unwrap()]);
    let b = gbb(&["solve", data("fix_e2.json").to_str().unwrap(), "--jobs", "4"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn timings_are_opt_in() {
    let plain = gbb(&["solve", data("fix_e1.json").to_str().unwrap()]);
    assert!(!String::from_utf8_lossy(&plain.stdout).contains("timings_ms"));
    let timed = gbb(&["solve", data("fix_e1.json").to_str().unwrap(), "--timings"]);
    let doc: Value = serde_json::from_slice(&timed.stdout).unwrap();
    assert!(doc["solver"]["timings_ms"]["swm"].is_number());
}

#[test]
fn no_certify_omits_report() {
    let out = gbb(&["solve", data("fix_e1.json").to_str().unwrap(), "--no-certify"]);
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc.get("certificate").is_none());
}

#[test]
fn oracle_matches_solve() {
    for name in ["fix_e1.json", "fix_e2.json", "gen_b4_v2_i2_s7.json"] {
        let out = gbb(&["oracle", data(name).to_str().unwrap()]);
        assert_eq!(code(&out), 0);
        let oracle: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(oracle["social_welfare"], solve_json(&data(name))["social_welfare"], "{name}");
        assert_eq!(oracle["solver"]["method"], "brute_force");
    }
    let out = gbb(&["oracle", data("fix_e2.json").to_str().unwrap()]);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["solver"]["evaluated"], 729);
}

#[test]
fn oracle_on_five_buyers() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.json");
    let out = gbb(&["gen", "--buyers", "5", "--vendors", "2", "--items", "2", "--seed", "3", "--out", inst.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let out = gbb(&["oracle", inst.to_str().unwrap(), "--no-certify"]);
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["solver"]["evaluated"], 59049);
}

#[test]
fn budget_exceeded_exits_3() {
    let out = gbb(&["solve", data("fix_e2.json").to_str().unwrap(), "--max-partitions", "100"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("165"));
    let out = gbb(&["oracle", data("fix_e2.json").to_str().unwrap(), "--max-allocations", "100"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn invalid_instance_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"schema":"gbb-market/1","item_types":1,
            "vendors":[{"id":"a","base_prices":[3],"discounts":[{"thresholds":[1],"price":4}]}],
            "buyers":[]}"#,
    )
    .unwrap();
    let out = gbb(&["solve", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not below base sum"));

    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&gbb(&["solve", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&gbb(&["solve", "/nonexistent/file.json"])), 2);
}

#[test]
fn gen_matches_golden_file() {
    let out = gbb(&["gen", "--buyers", "4", "--vendors", "2", "--items", "2", "--seed", "7"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), fs::read_to_string(data("gen_b4_v2_i2_s7.json")).unwrap());
}

#[test]
fn gen_with_no_buyers() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("empty.json");
    let out = gbb(&["gen", "--buyers", "0", "--vendors", "2", "--items", "2", "--seed", "1", "--out", inst.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let doc = solve_json(&inst);
    assert_eq!(doc["social_welfare"], 0);
    assert_eq!(doc["buyers"].as_array().unwrap().len(), 0);
}

#[test]
fn verify_roundtrip_and_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let sol = dir.path().join("sol.json");
    let inst = data("fix_e1.json");
    let out = gbb(&["solve", inst.to_str().unwrap(), "--out", sol.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let out = gbb(&["verify", inst.to_str().unwrap(), sol.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("stable: pass"));
    assert!(!text.contains("FAIL"));

    let mut doc: Value = serde_json::from_str(&fs::read_to_string(&sol).unwrap()).unwrap();
    doc["buyers"][0]["delta"] = Value::from("2");
    doc["buyers"][0]["final_price"] = Value::from("7");
    let edited = dir.path().join("edited.json");
    fs::write(&edited, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = gbb(&["verify", inst.to_str().unwrap(), edited.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("budget_balance: FAIL"));
    assert!(text.contains("p_consistent: FAIL"));
    assert!(text.contains("fair: pass"));
    assert!(text.contains("stable: pass"));
}

#[test]
fn verify_rejects_mismatched_instance() {
    let dir = tempfile::tempdir().unwrap();
    let sol = dir.path().join("sol.json");
    gbb(&["solve", data("fix_e1.json").to_str().unwrap(), "--out", sol.to_str().unwrap()]);
    let out = gbb(&["verify", data("fix_e2.json").to_str().unwrap(), sol.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn partitions_count() {
    let out = gbb(&["partitions", data("fix_e1.json").to_str().unwrap()]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "45\n");
    let out = gbb(&["partitions", data("fix_e2.json").to_str().unwrap()]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "165\n");
}
