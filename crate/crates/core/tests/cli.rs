use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cuntz-lab"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn json(args: &[&str]) -> (i32, serde_json::Value) {
    let (code, out) = run(args);
    (code, serde_json::from_str(&out).unwrap_or_else(|e| panic!("{e}: {out}")))
}

#[test]
fn build_inventory() {
    let std = config("standard.json");
    let (code, v) = json(&["build", "--config", std.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(v["schema"], "cuntz-lab/1");
    assert_eq!(v["result"]["systems"][0]["stages"].as_array().unwrap().len(), 5);
    assert_eq!(v["config"]["params"]["primes"], serde_json::json!([2, 3, 5, 7]));
    let (code, _) = run(&["build", "--config", config("r0-one.json").to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn build_single_stage_and_lambda_dump() {
    let dir = std::env::temp_dir().join(format!("cuntz-lab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join("s0.json");
    std::fs::write(&p, r#"{"primes":[2],"exponents":[2],"stages":0}"#).unwrap();
    let (code, v) = json(&["build", "--config", p.to_str().unwrap(), "--variant", "a"]);
    assert_eq!(code, 0);
    let stages = v["result"]["systems"][0]["stages"].as_array().unwrap().clone();
    assert_eq!(stages.len(), 1);
    assert!(stages[0]["blocks"].as_array().unwrap().is_empty());
    let (code, v) = json(&["build", "--config", p.to_str().unwrap(), "--variant", "a", "--dump-lambda", "1"]);
    assert_eq!(code, 0);
    assert!(v["result"]["lambda"].as_array().unwrap().is_empty());
    let one = dir.join("s1.json");
    std::fs::write(&one, r#"{"primes":[2],"exponents":[2],"stages":1}"#).unwrap();
    let (code, v) = json(&["build", "--config", one.to_str().unwrap(), "--variant", "a", "--dump-lambda", "1"]);
    assert_eq!(code, 0);
    // I¹_{2,1} at level 1: the count matches the library's enumeration
    let dumped = v["result"]["lambda"][0]["elements"].as_array().unwrap().len();
    let obj = cuntz_lab::cusemi::CuObject::FoldingCu { q: 2, level: 1 };
    assert_eq!(dumped as u128, cuntz_lab::cusemi::lambda_count(&obj, 1).unwrap());
    assert!(dumped > 0);
    let (code, _) = run(&["build", "--variant", "a", "--dump-lambda", "3", "--lambda-ceiling", "2"]);
    assert_eq!(code, 4);
}

#[test]
fn ktheory_verdicts() {
    let (code, v) = json(&["k-theory"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["k0Verdict"], "isomorphic");
    assert_eq!(v["result"]["k1Verdict"], "isomorphic");
    let (code, v) = json(&["k-theory", "--variant", "a"]);
    assert_eq!(code, 0);
    assert!(v["result"]["k0Verdict"].is_null());
    let dir = std::env::temp_dir().join(format!("cuntz-lab-kt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let a = dir.join("a.json");
    let b = dir.join("b.json");
    std::fs::write(&a, r#"{"primes":[2,3,7,11],"exponents":[2,3,4,5],"stages":4}"#).unwrap();
    std::fs::write(&b, r#"{"primes":[2,3,7,11,13],"exponents":[2,3,4,5,6],"stages":4}"#).unwrap();
    let (code, v) = json(&["k-theory", "--config", a.to_str().unwrap(), "--config-b", b.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(!v["result"]["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn intertwine_criterion_and_limits() {
    let ext = config("extended.json");
    let (code, v) = json(&["intertwine", "--config", ext.to_str().unwrap(), "--mode", "criterion", "--n-max", "4"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["certified"], true);
    let (code, v) = json(&["intertwine", "--n-max", "2", "--lambda-ceiling", "10"]);
    assert_eq!(code, 4);
    assert_eq!(v["result"]["resourceLimited"], true);
    let r1 = config("r0-one.json");
    let (code, v) = json(&["intertwine", "--config", r1.to_str().unwrap(), "--relaxed", "--mode", "criterion"]);
    assert_eq!(code, 1);
    assert!(!v["result"]["conditionFailures"].as_array().unwrap().is_empty());
}

#[test]
fn obstruct_exit_codes() {
    let (code, v) = json(&["obstruct"]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["report"]["feasible"], false);
    for row in v["result"]["report"]["rows"].as_array().unwrap() {
        let i = row["i"].as_u64().unwrap();
        assert!(row["candidates"].as_array().unwrap().is_empty());
        assert_eq!(row["reason"]["k0ForcedJ"], i);
        assert_eq!(row["reason"]["k1ForcedJ"], i + 1);
    }
    let (code, v) = json(&["obstruct", "--pair", "aa"]);
    assert_eq!(code, 1);
    assert_eq!(v["result"]["report"]["matching"], serde_json::json!([0, 1, 2, 3]));
}

#[test]
fn axioms_on_files() {
    let m = config("synthetic-model.json");
    let (code, v) = json(&["axioms", "--model", m.to_str().unwrap()]);
    assert_eq!(code, 0);
    let verdicts = v["result"][0]["verdicts"].as_array().unwrap();
    let pwc = verdicts.iter().find(|x| x["axiom"] == "PWC").unwrap();
    assert_eq!(pwc["holds"], false);
    let (code, _) = run(&["axioms", "--model", config("standard.json").to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn render_outputs() {
    let dir = std::env::temp_dir().join(format!("cuntz-lab-render-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let one = dir.join("one.json");
    std::fs::write(&one, r#"{"breakpoints":[],"intervals":["1"],"points":["1","1"]}"#).unwrap();
    let (code, text) = run(&["render", "--input", one.to_str().unwrap(), "--format", "text"]);
    assert_eq!(code, 0);
    assert!(text.contains(&format!("  1 |{}", "#".repeat(48))));
    let svg = dir.join("ind.svg");
    let ind = config("indicator.json");
    let (code, _) = run(&["render", "--input", ind.to_str().unwrap(), "--format", "svg", "--out", svg.to_str().unwrap()]);
    assert_eq!(code, 0);
    let s = std::fs::read_to_string(&svg).unwrap();
    assert!(s.starts_with("<svg") && s.matches("fill=\"white\"").count() == 2);
}

#[test]
fn reports_are_byte_identical() {
    let dir = std::env::temp_dir().join(format!("cuntz-lab-det-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let std = config("standard.json");
    for cmd in ["k-theory", "obstruct"] {
        let out = dir.join(format!("{cmd}.json"));
        let mut runs = Vec::new();
        for _ in 0..2 {
            run(&[cmd, "--config", std.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            runs.push(std::fs::read(&out).unwrap());
        }
        assert!(!runs[0].is_empty());
        assert_eq!(runs[0], runs[1]);
    }
}
