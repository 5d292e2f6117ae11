use std::fs;
use std::path::Path;
use std::process::Command;

use fraclap_cli::{execute, parse_config, ConfigErrorKind, RunOptions};
use serde_json::Value;
use sha2::{Digest, Sha256};

const RING: &str = r#"{"subcommand":"starshape-ring","s":0.5,"p":2,"h":0.03125,
    "domain":{"kind":"annulus","r_in":0.5,"r_out":1.5}}"#;

fn messages(text: &str) -> (ConfigErrorKind, Vec<(String, String)>) {
    let e = parse_config(text).expect_err("config must be rejected");
    (
        e.kind,
        e.errors.into_iter().map(|f| (f.field, f.message)).collect(),
    )
}

fn fraclap(config: &str, dir: &Path, extra: &[&str]) -> (i32, String) {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fraclap"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn minimal_solve_config_is_valid() {
    let cfg = parse_config(
        r#"{"subcommand":"solve","s":0.5,"p":2,"domain":{"kind":"ball","radius":1.0}}"#,
    )
    .unwrap();
    assert_eq!(cfg.s, 0.5);
    assert_eq!(cfg.dim, 1);
}

#[test]
fn s_out_of_range_names_the_field() {
    let (kind, errs) =
        messages(r#"{"subcommand":"solve","s":1.2,"p":2,"domain":{"kind":"ball","radius":1.0}}"#);
    assert_eq!(kind, ConfigErrorKind::ValidationError);
    assert_eq!(
        errs,
        vec![("s".to_string(), "s must lie in (0,1)".to_string())]
    );
}

#[test]
fn small_p_is_rejected() {
    let (kind, errs) = messages(
        r#"{"subcommand":"solve","s":0.5,"p":1.01,"domain":{"kind":"ball","radius":1.0}}"#,
    );
    assert_eq!(kind, ConfigErrorKind::ValidationError);
    assert_eq!(
        errs,
        vec![(
            "p".to_string(),
            "p below supported minimum 1.05".to_string()
        )]
    );
}

#[test]
fn all_field_errors_are_listed_together() {
    let (_, errs) =
        messages(r#"{"subcommand":"check-scaling","s":0.0,"p":2,"scaling":{"levels":[0.1]}}"#);
    let fields: Vec<&str> = errs.iter().map(|(f, _)| f.as_str()).collect();
    assert_eq!(fields, ["s", "domain", "scaling.levels"]);
}

#[test]
fn unknown_and_malformed_input_are_parse_errors() {
    assert_eq!(
        messages(r#"{"subcommand":"solve","sigma":0.5}"#).0,
        ConfigErrorKind::ParseError
    );
    assert_eq!(
        messages(r#"{"subcommand":"solve","solver":{"tolerance":1e-9,"typo":1}}"#).0,
        ConfigErrorKind::ParseError
    );
    assert_eq!(
        messages(r#"{"subcommand":"solve""#).0,
        ConfigErrorKind::ParseError
    );
    assert_eq!(
        messages(r#"{"subcommand":"integrate"}"#).0,
        ConfigErrorKind::ParseError
    );
}

#[test]
fn inequality_report_covers_families_and_grid() {
    let cfg = parse_config(
        r#"{"subcommand":"check-inequalities","inequalities":{"qs":[0.5,2.0],"ms":[1.0,10.0],"samples":2000}}"#,
    )
    .unwrap();
    let out = execute(&cfg, RunOptions::default()).unwrap();
    assert_eq!(out.exit_code(), 0);
    let cells = out.report["inequalities"]["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    for c in cells {
        assert_eq!(c["families"].as_array().unwrap().len(), 5);
    }
}

#[test]
fn identical_strong_comparison_data_give_equal_branch() {
    let cfg = parse_config(
        r#"{"subcommand":"check-comparison","s":0.5,"p":2,"h":0.0625,
        "domain":{"kind":"annulus","r_in":0.5,"r_out":1.5},
        "exterior":{"hole":{"kind":"constant","value":1.0}},"comparison":{"mode":"strong"}}"#,
    )
    .unwrap();
    let out = execute(&cfg, RunOptions::default()).unwrap();
    assert_eq!(out.exit_code(), 0);
    assert_eq!(out.report["checks"][0]["branch"], "EQUAL");
}

#[test]
fn unordered_comparison_data_are_an_execution_error() {
    let cfg = parse_config(
        r#"{"subcommand":"check-comparison","s":0.5,"p":2,"h":0.0625,
        "domain":{"kind":"ball","radius":1.0},
        "comparison":{"lower":{"exterior":{"outside":{"kind":"constant","value":0.5}}}}}"#,
    )
    .unwrap();
    let err = execute(&cfg, RunOptions::default()).unwrap_err();
    assert_eq!(err.code(), "principles.DATA_NOT_ORDERED");
}

#[test]
fn ring_run_writes_artifacts_listed_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr) = fraclap(RING, dir.path(), &["--dump-weights"]);
    assert_eq!(code, 0, "{stderr}");
    let out = dir.path().join("out");
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let names: Vec<&str> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["path"].as_str().unwrap())
        .collect();
    for want in [
        "report.json",
        "solution.csv",
        "starshape.json",
        "radial_profile.csv",
        "level_sets.csv",
        "weights.csv",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    for a in manifest["artifacts"].as_array().unwrap() {
        let bytes = fs::read(out.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(
            a["sha256"].as_str().unwrap(),
            hex::encode(Sha256::digest(&bytes))
        );
        assert_eq!(a["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
    assert!(manifest["created_unix"].as_u64().unwrap() > 0);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["holds"], true);
    assert!(report["starshape"]["levels"].as_array().unwrap().len() == 9);
}

#[test]
fn solution_csv_round_trips_losslessly() {
    let cfg = parse_config(
        r#"{"subcommand":"solve","s":0.3,"p":2.5,"dim":2,"h":0.25,"domain":{"kind":"ball","radius":1.0},
        "g":{"kind":"constant","value":1.0}}"#,
    )
    .unwrap();
    let out = execute(&cfg, RunOptions::default()).unwrap();
    let csv = out
        .artifacts
        .iter()
        .find(|a| a.name == "solution.csv")
        .unwrap();
    let text = String::from_utf8(csv.contents.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,value,role"));
    let mut interior = 0;
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 4);
        let v: f64 = cols[2].parse().unwrap();
        assert_eq!(format!("{v:.16e}"), cols[2]);
        if cols[3] == "INTERIOR" {
            interior += 1;
            assert!(v > 0.0);
        } else {
            assert_eq!(cols[3], "EXTERIOR_FIXED");
        }
    }
    assert_eq!(
        out.report["solve"]["interior_nodes"].as_u64().unwrap(),
        interior
    );
}

#[test]
fn failed_check_exits_two() {
    // a negative source violates the scaling hypothesis on g
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"subcommand":"starshape-general","s":0.5,"p":2,"h":0.03125,
        "domain":{"kind":"annulus","r_in":0.5,"r_out":1.5},"g":{"kind":"constant","value":-0.5}}"#;
    let (code, stderr) = fraclap(cfg, dir.path(), &[]);
    assert_eq!(code, 2, "{stderr}");
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["holds"], false);
}

#[test]
fn invalid_config_exits_one_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr) = fraclap(
        r#"{"subcommand":"solve","s":1.2,"domain":{"kind":"ball","radius":1.0}}"#,
        dir.path(),
        &[],
    );
    assert_eq!(code, 1);
    let err: Value = serde_json::from_str(&stderr).unwrap();
    assert_eq!(err["error"], "VALIDATION_ERROR");
    assert_eq!(err["errors"][0]["field"], "s");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn execution_error_exits_one_with_module_code() {
    let dir = tempfile::tempdir().unwrap();
    // a ball is not a ring
    let cfg = r#"{"subcommand":"starshape-ring","s":0.5,"p":2,"h":0.0625,"domain":{"kind":"ball","radius":1.0}}"#;
    let (code, stderr) = fraclap(cfg, dir.path(), &[]);
    assert_eq!(code, 1);
    let err: Value = serde_json::from_str(&stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains('.'), "{err}");
}

#[test]
fn reports_are_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"subcommand":"check-comparison","seed":9,"s":0.5,"p":2,"h":0.0625,
        "domain":{"kind":"ball","radius":1.0},"comparison":{"random_pairs":3}}"#;
    let report = |extra: &[&str]| {
        let (code, stderr) = fraclap(cfg, dir.path(), extra);
        assert_eq!(code, 0, "{stderr}");
        fs::read(dir.path().join("out/report.json")).unwrap()
    };
    let a = report(&[]);
    let b = report(&["--parallel", "1"]);
    assert_eq!(a, b);
    let c = report(&["--seed", "10"]);
    assert_ne!(a, c);
    let v: Value = serde_json::from_slice(&c).unwrap();
    assert_eq!(v["seed"], 10);
}
