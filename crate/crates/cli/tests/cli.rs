use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn darkqubit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_darkqubit")).args(args).output().expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

const ANALYZE_ONLY: &str = r#"
name = "small"
protocols = ["analyze"]
[scheme]
preset = "d32-p12"
optical_gap = "1e4 rad/s"
[construction]
kind = "ideal"
omega = "1 rad/s"
field = "10 rad/s"
"#;

#[test]
fn ca40_analyze_reports_the_reference_dark_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = darkqubit(&["analyze", "--scenario", "bundled:ca40_compact_analyze", "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let s = summary(&out);
    assert_eq!(s["status"], "ok");
    assert_eq!(s["tool"], "darkqubit");
    assert_eq!(s["scenario_hash"].as_str().unwrap().len(), 64);
    let a = &s["results"]["analyze"];
    assert!(a["protected"].as_bool().unwrap());
    // B = 2 pi x 1.25 MHz gives delta = B/15 and nu = sqrt(Omega^2 + delta^2/4) - delta/2
    let gap = a["gap"].as_f64().unwrap();
    let expected = a["expected_gap"].as_f64().unwrap();
    assert!((gap / expected - 1.0).abs() < 1e-9);
    assert!((a["gap_over_omega"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert!((a["reference_overlap"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let d1 = a["dark_states"][0].as_array().unwrap();
    let amp = |state: &str| d1.iter().find(|x| x["state"] == state).unwrap()["re"].as_f64().unwrap().abs();
    assert!((amp("D3/2;m=-1/2") - 3f64.sqrt() / 2.0).abs() < 1e-12);
    assert!((amp("D3/2;m=3/2") - 0.5).abs() < 1e-12);
}

#[test]
fn headline_budget_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = darkqubit(&["run", "--scenario", "bundled:headline_error_budget", "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let s = summary(&out);
    let b = &s["results"]["error-budget"]["budget"];
    let mech =
        |name: &str| b["mechanisms"].as_array().unwrap().iter().find(|m| m["mechanism"] == name).unwrap().clone();
    let t1 = mech("magnetic-shift")["t1_limit"].as_f64().unwrap();
    assert!(t1 > 0.1 / 3.0 && t1 < 0.3, "T1 {t1}");
    // eps = 1e-2 against T2* = 20 us: T2 = 0.2 s, four decades
    assert!((mech("relative-amplitude")["coherence_gain_orders"].as_f64().unwrap() - 4.0).abs() < 1e-9);
    // (eps_pol Delta / Omega)^2 with Delta = 2 g_d mu_B B = 0.02 Omega
    let p = mech("polarization")["excited_population"].as_f64().unwrap();
    assert!((p / 1e-8 - 1.0).abs() < 1e-9, "p {p}");
    assert_eq!(b["magnetic"]["cross_check"]["supported_reading"], "without-g");
    // T1 grows as Omega^2: the 2 pi x 1 GHz point reaches ~10 s
    let pts = s["results"]["error-budget"]["sweep"]["points"].as_array().unwrap();
    let at_ghz = pts[1]["mechanisms"][0]["t1_limit"].as_f64().unwrap();
    assert!(at_ghz > 10.0 / 3.0 && at_ghz < 30.0, "T1 {at_ghz}");
    let csv = fs::read_to_string(out.join("budget_sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("omega,magnetic-shift_t1,"));
    assert_eq!(lines.count(), 2);
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("budget_sweep.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["axes"]["x"], "omega");
    assert_eq!(manifest["columns"][0]["unit"], "rad/s");
}

#[test]
fn empty_protocol_list_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.toml");
    fs::write(&file, ANALYZE_ONLY.replace("[\"analyze\"]", "[]")).unwrap();
    let out = dir.path().join("o");
    let r = darkqubit(&["run", "--scenario", file.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("protocols"));
    assert_eq!(summary(&out)["status"], "invalid");
    assert_eq!(names(&out), ["summary.json"]);
}

#[test]
fn every_unitless_or_mistyped_field_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.toml");
    fs::write(&file, ANALYZE_ONLY.replace("\"1 rad/s\"", "1").replace("\"10 rad/s\"", "\"10 us\"")).unwrap();
    let r = darkqubit(&["check", "--scenario", file.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("construction.omega") && err.contains("bare number"), "{err}");
    assert!(err.contains("construction.field") && err.contains("not a frequency"), "{err}");
    assert!(err.contains("MHz"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.toml");
    fs::write(&file, ANALYZE_ONLY.replace("kind = \"ideal\"", "kind = \"ideal\"\nstrength = \"1 rad/s\"")).unwrap();
    let r = darkqubit(&["check", "--scenario", file.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("strength"));
}

#[test]
fn hash_ignores_spelling_of_equal_quantities() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.toml");
    let b = dir.path().join("b.toml");
    fs::write(&a, ANALYZE_ONLY).unwrap();
    fs::write(&b, ANALYZE_ONLY.replace("\"10 rad/s\"", "\"0.01 krad/s\"")).unwrap();
    let ra = darkqubit(&["check", "--scenario", a.to_str().unwrap()]);
    let rb = darkqubit(&["check", "--scenario", b.to_str().unwrap()]);
    assert!(ra.status.success());
    assert_eq!(ra.stdout, rb.stdout);
    let c = dir.path().join("c.toml");
    fs::write(&c, ANALYZE_ONLY.replace("\"10 rad/s\"", "\"11 rad/s\"")).unwrap();
    assert_ne!(darkqubit(&["check", "--scenario", c.to_str().unwrap()]).stdout, ra.stdout);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for (k, threads) in ["1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("o{k}"));
        let r = darkqubit(&[
            "run",
            "--scenario",
            "bundled:desk_protocols",
            "--seed",
            "11",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        outs.push(out);
    }
    let files = names(&outs[0]);
    assert!(files.contains(&"evolve_trace.csv".to_string()));
    assert!(files.contains(&"coherence_sweep.csv".to_string()));
    for o in &outs[1..] {
        assert_eq!(names(o), files);
        for f in &files {
            assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(o.join(f)).unwrap(), "{f} differs");
        }
    }
    let s = summary(&outs[0]);
    assert_eq!(s["seed"], 11);
    let gain = s["results"]["compare"]["comparison"]["comparison"]["coherence_gain_orders"].as_f64().unwrap();
    assert!(gain >= 2.0, "gain {gain}");
    let header = fs::read_to_string(outs[0].join("coherence_sweep.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), "sigma,coherence_gain_orders");
}

#[test]
fn json_format_writes_json_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = darkqubit(&[
        "sense",
        "--scenario",
        "bundled:desk_protocols",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(names(&out), ["sense_trace.json", "summary.json"]);
    let t: Value = serde_json::from_str(&fs::read_to_string(out.join("sense_trace.json")).unwrap()).unwrap();
    assert_eq!(t["columns"][0]["name"], "t");
    let att = summary(&out)["results"]["sense"]["report"]["attenuation_factor"].as_f64().unwrap();
    assert!((att - 0.5).abs() < 0.05, "attenuation {att}");
}

#[test]
fn infeasible_run_fails_numerically_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.toml");
    let text = format!(
        "{}\n[noise]\nkind = \"ornstein-uhlenbeck\"\nsigma = \"1e-3 rad/s\"\ntau_c = \"1 s\"\n[evolve]\nduration = \"1e12 s\"\n",
        ANALYZE_ONLY.replace("[\"analyze\"]", "[\"analyze\", \"evolve\"]")
    );
    fs::write(&file, text).unwrap();
    let out = dir.path().join("o");
    let r = darkqubit(&["run", "--scenario", file.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3));
    let s = summary(&out);
    assert_eq!(s["status"], "failed");
    assert_eq!(names(&out), ["summary.json"]);
}

#[test]
fn subcommand_requires_its_section() {
    let r = darkqubit(&["gates", "--scenario", "bundled:ca40_compact_analyze", "--out", "/nonexistent/never"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("[gates]"));
}
