use serde_json::Value;
use so2bell::cli::{run, EXIT_ERROR, EXIT_NEGATIVE, EXIT_OK};
use std::path::{Path, PathBuf};

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn cli(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("so2bell").chain(args.iter().copied()), &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn json(r: &Run) -> Value {
    serde_json::from_str(&r.out).unwrap_or_else(|e| panic!("{e}: {}", r.out))
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const COS: &str = r#"{"two_j": 1, "constant": 0, "terms": [{"m": 1, "n": 1, "cos": 1, "sin": 0}]}"#;

#[test]
fn scifi_chsh_example() {
    let r = cli(&["chsh", "--scifi", "--angles", "1.5", "3.9", "0", "2.3"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v = json(&r)["value"].as_f64().unwrap();
    assert!((v - 3.63).abs() <= 0.005);
    assert!(r.err.starts_with("chsh value=3.62889917"));
}

#[test]
fn gamma_example() {
    let r = cli(&["lhv", "gamma", "--n", "2"]);
    assert_eq!(r.code, EXIT_OK);
    let g = json(&r)["gamma"].as_f64().unwrap();
    assert_eq!(format!("{g:.6}"), "0.184375");
    let r = cli(&["lhv", "gamma", "--two-j", "0"]);
    assert_eq!(r.code, EXIT_ERROR);
}

#[test]
fn witness_example() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "cos.json", COS);
    let r = cli(&["witness", "--corr", s(&f), "--theta-plus", "0", "--theta-minus", "3.14159"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v = json(&r);
    assert_eq!(v["n"], 4);
    assert!((v["lhs"].as_f64().unwrap() - 2.5).abs() < 1e-4);
    assert_eq!(v["violated"], true);
    assert!(v["angles"]["alice"].is_array());
}

#[test]
fn negative_verdicts_exit_two() {
    let r = cli(&["chsh", "--werner", "0.5", "--optimize"]);
    assert_eq!(r.code, EXIT_NEGATIVE);
    let r = cli(&["bci", "--werner", "0.3", "--n", "4", "--theta-plus", "0", "--theta-minus", "1.5707963267948966"]);
    assert_eq!(r.code, EXIT_NEGATIVE);
    let r = cli(&["lhv", "check", "--scifi"]);
    assert_eq!(r.code, EXIT_NEGATIVE);
    assert_eq!(json(&r)["verdict"], "INCONCLUSIVE");
}

#[test]
fn malformed_inputs_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"two_j": 1, "constant": 0, "terms": [{"m": 1, "n": 1, "cos": "x", "sin": 0}]}"#);
    let r = cli(&["eval", "--corr", s(&bad), "--alpha", "0", "--beta", "0"]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.err.contains("terms[0].cos"), "{}", r.err);

    let csv = write(dir.path(), "box.csv", "x1,x2,y1,y2,p_pp,p_pm,p_mp,p_mm\n1,0,1,0,0.25,oops,0.25,0.25\n");
    let r = cli(&["sodbox", "--csv", s(&csv), "--d", "2"]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.err.contains("row 1, column p_pm"), "{}", r.err);

    let csv = write(dir.path(), "hdr.csv", "x1,x2,y1,y2,p_pp,p_pm,p_mp\n");
    let r = cli(&["sodbox", "--csv", s(&csv), "--d", "2"]);
    assert!(r.err.contains("p_mm"), "{}", r.err);

    let cfg = write(dir.path(), "cfg.json", r#"{"seed": 1, "tolerances": {"bogus": 1.0}}"#);
    let r = cli(&["--config", s(&cfg), "lhv", "gamma", "--n", "3"]);
    assert_eq!(r.code, EXIT_ERROR);
    assert!(r.err.contains("tolerances.bogus"), "{}", r.err);

    let r = cli(&["frobnicate"]);
    assert_eq!(r.code, EXIT_ERROR);
}

#[test]
fn atomic_output_and_summary_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gamma.json");
    let r = cli(&["lhv", "gamma", "--n", "3", "--output", s(&out)]);
    assert_eq!(r.code, EXIT_OK);
    assert_eq!(r.out.lines().count(), 1);
    assert!(r.out.starts_with("gamma n=3 gamma=0.10389"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((v["gamma"].as_f64().unwrap() - 0.103893).abs() < 1e-6);
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 1, "temporary files left behind: {names:?}");
}

#[test]
fn seeded_runs_are_byte_identical_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for (i, workers) in ["1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("p{i}.json"));
        let r = cli(&[
            "protocol", "--werner", "1", "--flip-bob", "--theta-plus", "0", "--theta-minus", "1.5707963267948966",
            "--shots", "20000", "--seed", "9", "--workers", workers, "--output", s(&out),
        ]);
        assert!(r.code == EXIT_OK || r.code == EXIT_NEGATIVE, "{}", r.err);
        bodies.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(bodies[1], bodies[2]);
    let other = dir.path().join("other.json");
    cli(&["protocol", "--werner", "1", "--flip-bob", "--theta-plus", "0", "--theta-minus", "1.5707963267948966", "--shots", "20000", "--seed", "10", "--output", s(&other)]);
    assert_ne!(std::fs::read(&other).unwrap(), bodies[0]);
}

#[test]
fn config_file_supplies_seed_and_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"seed": 3, "format": "csv"}"#);
    let a = cli(&["--config", s(&cfg), "sodbox", "--emit", "singlet", "--d", "3", "--count", "5"]);
    let b = cli(&["sodbox", "--emit", "singlet", "--d", "3", "--count", "5", "--seed", "3"]);
    assert_eq!(a.code, EXIT_OK);
    assert_eq!(a.out, b.out);
    assert!(a.out.starts_with("x1,x2,x3,y1,y2,y3,p_pp,p_pm,p_mp,p_mm\n"));
    let r = cli(&["--config", s(&cfg), "lhv", "gamma", "--n", "3"]);
    assert_eq!(r.code, EXIT_ERROR, "gamma has no csv form");
}

#[test]
fn sodbox_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let singlet = dir.path().join("singlet.csv");
    assert_eq!(cli(&["sodbox", "--emit", "singlet", "--d", "3", "--count", "64", "--output", s(&singlet)]).code, EXIT_OK);
    let r = cli(&["sodbox", "--csv", s(&singlet), "--d", "3"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.out);
    let v = json(&r);
    for key in ["affine_residual", "unbiased", "unital", "positivity_min"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["affine_residual"].as_f64().unwrap() < 1e-10);

    let pr = dir.path().join("pr.csv");
    cli(&["sodbox", "--emit", "pr", "--d", "2", "--count", "40", "--output", s(&pr)]);
    let r = cli(&["sodbox", "--csv", s(&pr), "--d", "2"]);
    assert_eq!(r.code, EXIT_NEGATIVE);
    assert_eq!(json(&r)["unbiased"], false);
    assert_eq!(cli(&["sodbox", "--emit", "pr", "--d", "17"]).code, EXIT_ERROR);
}

#[test]
fn fit_recovers_werner_series() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("alpha,beta,value\n");
    for i in 0..10 {
        for j in 0..10 {
            let (a, b) = (0.6 * i as f64, 0.6 * j as f64 + 0.1);
            body.push_str(&format!("{a},{b},{}\n", -0.8 * (2.0 * (a - b)).cos()));
        }
    }
    let f = write(dir.path(), "w.csv", &body);
    let r = cli(&["fit", "--csv", s(&f), "--two-j", "2"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v = json(&r);
    assert!(v["residual_rms"].as_f64().unwrap() < 1e-10);
    let terms = v["function"]["terms"].as_array().unwrap();
    let big: Vec<_> = terms.iter().filter(|t| t["cos"].as_f64().unwrap().abs() > 1e-9).collect();
    assert_eq!(big.len(), 1);
    assert_eq!(big[0]["m"], 2);
    assert_eq!(big[0]["n"], 2);
}

#[test]
fn quantum_outputs() {
    let r = cli(&["quantum", "--werner", "0.7", "--sweep", "4"]);
    assert_eq!(r.code, EXIT_OK);
    let lines: Vec<_> = r.out.lines().collect();
    assert_eq!(lines[0], "theta,C");
    assert_eq!(lines[1], "0,-0.7");
    assert_eq!(lines.len(), 5);

    let r = cli(&["quantum", "--werner", "1", "--chsh-max"]);
    assert!((json(&r)["value"].as_f64().unwrap().abs() - 2.0 * 2f64.sqrt()).abs() < 1e-9);

    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "osc.json", r#"{"omega": 1.3, "levels": [0, 1, 3], "amplitudes": [[0.6, 0], [0.3, 0.5], [-0.2, 0.4]]}"#);
    let r = cli(&["quantum", "--oscillator", s(&spec)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v = json(&r);
    assert_eq!(v["active_harmonics"], serde_json::json!([1, 2, 3]));

    let jb = dir.path().join("box.json");
    cli(&["quantum", "--werner", "0.9", "--joint-box", "--output", s(&jb)]);
    let r = cli(&["eval", "--box", s(&jb), "--grid", "3"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.starts_with("alpha,beta,p_pp,p_pm,p_mp,p_mm\n"));
    assert_eq!(r.out.lines().count(), 10);
}

#[test]
fn lhv_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "weak.json", r#"{"two_j": 1, "constant": 0.1, "terms": [{"m": 1, "n": 1, "cos": 0.02, "sin": 0.01}]}"#);
    assert_eq!(cli(&["lhv", "check", "--corr", s(&f)]).code, EXIT_OK);
    let r = cli(&["lhv", "build", "--corr", s(&f)]);
    assert_eq!(r.code, EXIT_OK);
    assert!((json(&r)["model"]["constant"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    let r = cli(&["lhv", "sample", "--corr", s(&f), "--shots", "2000", "--pairs", "3"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.starts_with("alpha,beta,samples,empirical_C,stderr\n"));
    assert_eq!(r.out.lines().count(), 4);
    let r = cli(&["lhv", "squarewave", "--m", "1", "--n", "2"]);
    let v = json(&r);
    assert_eq!(v["c_zero"], 1.0);
    assert_eq!(v["c_theta_minus"], -1.0);
}

#[test]
fn every_subcommand_has_help() {
    let expect = [
        ("eval", "correlation series"),
        ("chsh", "CHSH"),
        ("bci", "Braunstein"),
        ("witness", "witness"),
        ("protocol", "protocol"),
        ("lhv", "hidden variable"),
        ("quantum", "qubit"),
        ("sodbox", "bilinear form"),
        ("fit", "fit"),
    ];
    let top = cli(&["--help"]);
    assert_eq!(top.code, EXIT_OK);
    for (cmd, word) in expect {
        let r = cli(&[cmd, "--help"]);
        assert_eq!(r.code, EXIT_OK, "{cmd}");
        assert!(r.out.to_lowercase().contains(&word.to_lowercase()), "{cmd} help lacks {word}:\n{}", r.out);
    }
}
