use std::io::Write;
use std::process::{Command, Output};

use serde_json::Value;

fn clm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clm"))
        .args(args)
        .env_remove("CLM_THREADS")
        .output()
        .expect("run clm")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn entry<'a>(doc: &'a Value, parts: &[u64]) -> &'a Value {
    doc["entries"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["partition"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).eq(parts.iter().copied()))
        .unwrap()
}

fn temp_json(contents: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

#[test]
fn measure_card_example() {
    let out = clm(&["measure", "--p", "2", "--k", "1", "--moments", "card:u=0", "--max-size", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["schema"], "clm.measure.v1");
    assert_eq!(doc["inputs"]["max_size"], 10);
    let v = entry(&doc, &[])["value"].as_f64().unwrap();
    assert!((v - 0.2887880951).abs() < 1e-9);
    assert_eq!(doc["existence"]["exists_on_window"], true);
}

#[test]
fn measure_csv() {
    let out = clm(&["measure", "--p", "2", "--k", "2", "--moments", "point:2", "--max-size", "3", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "partition;value;err_bound;exact");
    // [], [1], [2], [1,1], [2,1], [1,1,1]
    assert_eq!(lines.len(), 7);
    assert!(lines.contains(&"2;1.0;0.0;1"), "{text}");
    assert!(lines.contains(&"0;0.0;0.0;0"), "{text}");
}

#[test]
fn check_identity_example() {
    let out = clm(&["check-identity", "--p", "2", "--k", "1", "--max-size", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["pass"], true);
    assert_eq!(doc["classes"], 3);
}

#[test]
fn skew_simulation_misses_trivial_group() {
    let out = clm(&["simulate", "--p", "3", "--k", "1", "--n", "7", "--skew", "--samples", "10000", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["seed"], 1);
    let freq = doc["freq"].as_array().unwrap();
    let total: u64 = freq.iter().map(|f| f["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 10000);
    assert!(freq.iter().all(|f| !f["partition"].as_array().unwrap().is_empty()));
}

#[test]
fn output_is_identical_across_thread_counts() {
    for args in [
        vec!["measure", "--p", "3", "--k", "1", "--moments", "card:u=1", "--max-size", "5"],
        vec!["simulate", "--p", "2", "--k", "2", "--n", "5", "--u", "1", "--samples", "5000", "--seed", "9", "--targets", "1", "2;1,1"],
    ] {
        let one = clm(&[&["--threads", "1"], &args[..]].concat());
        let three = clm(&[&["--threads", "3"], &args[..]].concat());
        let env = Command::new(env!("CARGO_BIN_EXE_clm")).args(&args).env("CLM_THREADS", "2").output().unwrap();
        assert_eq!(one.status.code(), Some(0));
        assert_eq!(one.stdout, three.stdout);
        assert_eq!(one.stdout, env.stdout);
        assert_eq!(one.stdout, clm(&[&["--threads", "1"], &args[..]].concat()).stdout);
    }
    let bad = Command::new(env!("CARGO_BIN_EXE_clm"))
        .args(["check-identity", "--p", "2", "--k", "1", "--max-size", "1"])
        .env("CLM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn error_bounds_hold_at_a_larger_window() {
    let small = json(&clm(&["measure", "--p", "2", "--k", "2", "--moments", "card:u=1", "--max-size", "4"]));
    let large = json(&clm(&["measure", "--p", "2", "--k", "2", "--moments", "card:u=1", "--max-size", "8"]));
    for e in small["entries"].as_array().unwrap() {
        let parts: Vec<u64> = e["partition"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
        let f = entry(&large, &parts);
        let diff = (e["value"].as_f64().unwrap() - f["value"].as_f64().unwrap()).abs();
        assert!(diff <= e["err_bound"].as_f64().unwrap() + f["err_bound"].as_f64().unwrap(), "{parts:?}");
    }
}

#[test]
fn forward_from_a_measure_file() {
    let m = clm(&["measure", "--p", "2", "--k", "1", "--moments", "card:u=0", "--max-size", "12"]);
    let file = temp_json(std::str::from_utf8(&m.stdout).unwrap());
    let path = file.path().to_str().unwrap();
    let out = clm(&["forward", "--p", "2", "--k", "1", "--measure-file", path, "--targets", "1", "1,1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&out);
    assert_eq!(doc["schema"], "clm.forward.v1");
    for m in doc["moments"].as_array().unwrap() {
        let v = m["value"].as_f64().unwrap();
        assert!((v - 1.0).abs() <= m["err_bound"].as_f64().unwrap() + 1e-12, "{m}");
        assert_eq!(m["rigorous"], true);
    }
    let wrong_level = clm(&["forward", "--p", "3", "--k", "1", "--measure-file", path, "--targets", "1"]);
    assert_eq!(wrong_level.status.code(), Some(2));
}

#[test]
fn certify_verdicts() {
    let ok = clm(&["certify", "--p", "2", "--k", "2", "--moments", "card:u=0", "--target", "0", "--a", "3"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json(&ok)["verdict"], "converges");
    let bad = clm(&["certify", "--p", "2", "--k", "2", "--moments", "sym2", "--target", "1", "--a", "0"]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(json(&bad)["verdict"], "diverges");
    assert!(!bad.stderr.is_empty());
}

#[test]
fn moment_table_file() {
    let file = temp_json(
        r#"{"schema":"clm.moments.v1","level":{"p":2,"k":1},
            "entries":[{"partition":[],"value":"1"},{"partition":[1],"value":1},{"partition":[1,1],"value":"0"}],
            "envelope":{"c":1.0,"v":0.0}}"#,
    );
    let spec = format!("file:{}", file.path().display());
    let out = clm(&["measure", "--p", "2", "--k", "1", "--moments", &spec, "--max-size", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    // moments of the point mass at (1) inside the window, bounded by 1 outside
    let doc = json(&out);
    assert_eq!(doc["inputs"]["moments"], spec.as_str());
    for e in doc["entries"].as_array().unwrap() {
        assert!(e["err_bound"].as_f64().unwrap().is_finite());
        assert!(e["exact"].is_null());
    }
    let mismatch = clm(&["measure", "--p", "3", "--k", "1", "--moments", &spec, "--max-size", "2"]);
    assert_eq!(mismatch.status.code(), Some(2));
}

#[test]
fn setcat_round_trip_and_verdicts() {
    let d = temp_json(r#"{"schema":"clm.setcat.v1","measure":[0,"1/4","1/2","1/4"]}"#);
    let fwd = clm(&["setcat", "forward", "--file", d.path().to_str().unwrap(), "--max-index", "5"]);
    assert_eq!(fwd.status.code(), Some(0));
    let doc = json(&fwd);
    let moments: Vec<Value> = doc["entries"].as_array().unwrap().iter().map(|e| e["exact"].clone()).collect();
    assert_eq!(moments, ["1", "2", "5/2", "3/2", "0", "0"].map(Value::from));

    let m = temp_json(r#"{"schema":"clm.setcat.v1","moments":[1,2,"5/2","3/2"]}"#);
    let inv = clm(&["setcat", "invert", "--file", m.path().to_str().unwrap(), "--max-index", "4"]);
    assert_eq!(inv.status.code(), Some(0));
    let doc = json(&inv);
    let nu: Vec<Value> = doc["entries"].as_array().unwrap().iter().map(|e| e["exact"].clone()).collect();
    assert_eq!(nu, ["0", "1/4", "1/2", "1/4", "0"].map(Value::from));

    let neg = temp_json(r#"{"schema":"clm.setcat.v1","moments":[1,2,0]}"#);
    let out = clm(&["setcat", "invert", "--file", neg.path().to_str().unwrap(), "--max-index", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["witness"], 0);

    let guard = temp_json(r#"{"schema":"clm.setcat.v1","moments":[1,1,1],"envelope":{"c":1.0,"r":1.0}}"#);
    let out = clm(&["setcat", "invert", "--file", guard.path().to_str().unwrap(), "--max-index", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["guard"], "fails");

    let csv = clm(&["setcat", "invert", "--file", m.path().to_str().unwrap(), "--max-index", "1", "--format", "csv"]);
    assert_eq!(String::from_utf8(csv.stdout).unwrap(), "index;value;err_bound;exact\n0;0.0;0.0;0\n1;0.25;0.0;1/4\n");
}

#[test]
fn oracle_small_window() {
    let out = clm(&["oracle", "--p", "2", "--k", "2", "--max-size", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["schema"], "clm.oracle.v1");
    assert_eq!(doc["pass"], true);
}

#[test]
fn usage_errors() {
    for args in [
        vec!["measure", "--p", "2", "--k", "1", "--max-size", "3"],
        vec!["measure", "--p", "2", "--k", "1", "--moments", "card:u=zero", "--max-size", "3"],
        vec!["simulate", "--p", "2", "--k", "1", "--n", "3", "--skew", "--samples", "10", "--seed", "0"],
        vec!["setcat", "invert", "--file", "/nonexistent.json", "--max-index", "3"],
        vec!["frobnicate"],
    ] {
        let out = clm(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(out.stdout.is_empty());
        assert!(!out.stderr.is_empty());
    }
}
