use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TWO_LEVEL: &str = r#"{"dimension":1,"kind":"piecewise","base":[[0.5]],"pieces":[{"from":0,"matrix":[[2]]}]}"#;
const DIAG123: &str = r#"{"dimension":3,"kind":"constant","matrix":[[1,0,0],[0,2,0],[0,0,3]]}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn dspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dspec")).args(args).output().unwrap()
}

fn run_to(dir: &Path, cmd: &str, input: &Path, out: &str, extra: &[&str]) -> (i32, PathBuf) {
    let out = dir.join(out);
    let mut args = vec![cmd, "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = dspec(&args);
    (o.status.code().unwrap(), out)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn spectrum_of_two_level() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "two_level.json", TWO_LEVEL);
    let (code, out) = run_to(dir.path(), "spectrum", &input, "s.json", &[]);
    assert_eq!(code, 0);
    let v = read_json(&out);
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["ell", "horizon", "intervals", "method", "resolution"]);
    let iv = &v["intervals"][0];
    assert!((iv[0].as_f64().unwrap() - 0.5).abs() <= 0.05);
    assert!((iv[1].as_f64().unwrap() - 2.0).abs() <= 0.05);
    assert_eq!(v["ell"], 1);
    assert_eq!(v["horizon"], 1000);
}

#[test]
fn report_goes_to_stdout_without_output_flag() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "two_level.json", TWO_LEVEL);
    let o = dspec(&["spectrum", "--input", input.to_str().unwrap(), "--horizon", "200"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["method"], "scan");
    assert!(String::from_utf8_lossy(&o.stderr).contains("spectrum:"));
}

#[test]
fn contract_verify_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "diag.json", DIAG123);
    let (code, cert) = run_to(dir.path(), "contract", &input, "c.json", &["--delta", "0.1"]);
    assert_eq!(code, 0);
    let v = read_json(&cert);
    for k in ["similarity", "h_in_spectrum", "residual_bound", "minimality"] {
        assert_eq!(v["verdicts"][k], true, "{k}");
    }
    assert_eq!(v["switch_times"].as_array().unwrap().len(), v["blocks"].as_array().unwrap().len());
    assert_eq!(v["mu"].as_array().unwrap().len(), 3);
    assert!(v["similarity_residual"].as_f64().unwrap() < 1e-6);

    let cert_arg = ["--certificate", cert.to_str().unwrap()];
    let (code, _) = run_to(dir.path(), "verify", &input, "v.json", &cert_arg);
    assert_eq!(code, 0);

    // a forged residual bound
    let mut forged = v.clone();
    forged["R_norm"][3] = Value::from(1.0);
    let bad = write(dir.path(), "forged.json", &forged.to_string());
    let (code, rep) = run_to(dir.path(), "verify", &input, "v2.json", &["--certificate", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert_eq!(read_json(&rep)["residual_bound"], false);

    // an H value outside the spectrum
    let mut forged = v.clone();
    forged["H"][0][0] = Value::from(1.5);
    let bad = write(dir.path(), "forged2.json", &forged.to_string());
    let (code, _) = run_to(dir.path(), "verify", &input, "v3.json", &["--certificate", bad.to_str().unwrap()]);
    assert_eq!(code, 2);

    // a recorded failure
    let mut forged = v;
    forged["verdicts"]["similarity"] = Value::from(false);
    let bad = write(dir.path(), "forged3.json", &forged.to_string());
    let (code, _) = run_to(dir.path(), "verify", &input, "v4.json", &["--certificate", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "diag.json", DIAG123);
    for cmd in ["spectrum", "contract", "blockdiag"] {
        let (c1, a) = run_to(dir.path(), cmd, &input, "a.json", &["--horizon", "200", "--seed", "7"]);
        let (c2, b) = run_to(dir.path(), cmd, &input, "b.json", &["--horizon", "200", "--seed", "7"]);
        assert_eq!((c1, c2), (0, 0), "{cmd}");
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{cmd}");
    }
}

#[test]
fn other_pipelines_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "diag.json", DIAG123);
    for cmd in ["triangularize", "blockdiag", "diagonalize"] {
        let (code, out) = run_to(dir.path(), cmd, &input, "o.json", &["--horizon", "200"]);
        assert_eq!(code, 0, "{cmd}");
        assert!(read_json(&out).is_object());
    }
}

#[test]
fn failures_never_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let (code, _) = run_to(dir.path(), "spectrum", &missing, "o.json", &[]);
    assert_eq!(code, 1);

    let broken = write(dir.path(), "broken.json", r#"{"dimension":1,"kind":"constant","#);
    let o = dspec(&["spectrum", "--input", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));

    let singular = write(dir.path(), "sing.json", r#"{"dimension":2,"kind":"constant","matrix":[[1,1],[0,0]]}"#);
    let (code, _) = run_to(dir.path(), "spectrum", &singular, "o.json", &[]);
    assert_eq!(code, 1);

    // a rotation has a single spectral point in dimension 2
    let rot = write(dir.path(), "rot.json", r#"{"dimension":2,"kind":"constant","matrix":[[0,-2],[2,0]]}"#);
    let (code, _) = run_to(dir.path(), "diagonalize", &rot, "o.json", &["--horizon", "200"]);
    assert_eq!(code, 1);

    let diag = write(dir.path(), "diag.json", DIAG123);
    let (code, _) = run_to(dir.path(), "verify", &diag, "o.json", &[]);
    assert_eq!(code, 1);
    let (code, _) = run_to(dir.path(), "spectrum", &diag, "o.json", &["--horizon", "4"]);
    assert_eq!(code, 1);
    let (code, _) = run_to(dir.path(), "contract", &diag, "o.json", &["--horizon", "200", "--delta", "5"]);
    assert_eq!(code, 1);
    let (code, _) = run_to(dir.path(), "spectrum", &diag, "o.json", &["--lambda-max", "2.5"]);
    assert_eq!(code, 1);
}
