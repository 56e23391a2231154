use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sasv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sasv"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sasv(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    let out = sasv(dir, args);
    assert!(
        !out.stderr.is_empty() || out.status.success(),
        "no diagnostic for {args:?}"
    );
    out.status.code().unwrap()
}

fn spec(n: usize, seed: u64, asv_scale: f64) -> String {
    let s = asv_scale;
    format!(
        r#"{{"classes": {{
            "spf": {{"mean": [{}, -1.5], "cov": [[{}, 0], [0, 1]]}},
            "nonbf": {{"mean": [0, 1.5], "cov": [[{}, 0], [0, 1]]}},
            "tarbf": {{"mean": [{}, 1.5], "cov": [[{}, 0], [0, 1]]}}}},
          "priors": {{"spf": 0.25, "nonbf": 0.25, "tarbf": 0.5}},
          "n_trials": {n}, "seed": {seed}}}"#,
        2.5 * s,
        s * s,
        s * s,
        3.0 * s,
        s * s
    )
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path().join(name)).unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        ok(self.path(), args)
    }

    fn code(&self, args: &[&str]) -> i32 {
        code(self.path(), args)
    }

    /// Simulates train/dev/eval and fits every model.
    fn pipeline(&self, n: usize, asv_scale: f64) {
        for (name, seed) in [("train", 1), ("dev", 2), ("eval", 3)] {
            self.write(&format!("{name}.json"), &spec(n, seed, asv_scale));
            self.ok(&["simulate", &format!("{name}.json"), "--out", &format!("{name}.tsv")]);
        }
        self.ok(&["fit", "train.tsv", "--what", "backend", "--out", "backend.json"]);
        self.ok(&["fit", "train.tsv", "--what", "affine-asv", "--out", "asv.json"]);
        self.ok(&["fit", "train.tsv", "--what", "affine-cm", "--out", "cm.json"]);
        for (what, out) in [("affine-llr-asv", "llr_asv.json"), ("affine-llr-cm", "llr_cm.json")] {
            self.ok(&[
                "fit",
                "dev.tsv",
                "--what",
                what,
                "--backend",
                "backend.json",
                "--out",
                out,
            ]);
        }
        let models = r#""models": {"asv_affine": "asv.json", "cm_affine": "cm.json", "backend": "backend.json",
                                    "llr_asv_affine": "llr_asv.json", "llr_cm_affine": "llr_cm.json"}"#;
        for system in ["b1", "b1c", "l2", "l2c", "l3", "l3c", "b1v2", "post"] {
            self.write(
                &format!("{system}.cfg.json"),
                &format!(r#"{{"system": "{system}", "rho": {{"grid": "min-sasv-eer"}}, "dev": "dev.tsv", {models}}}"#),
            );
        }
    }

    fn report(&self, system: &str) -> Value {
        serde_json::from_str(&self.ok(&["evaluate", "eval.tsv", "--config", &format!("{system}.cfg.json")])).unwrap()
    }
}

#[test]
fn simulate_writes_header_and_rows_deterministically() {
    let w = Workspace::new();
    w.write("spec.json", &spec(100, 5, 1.0));
    let a = w.ok(&["simulate", "spec.json"]);
    assert_eq!(a.lines().count(), 101);
    assert_eq!(a.lines().next().unwrap(), "trial_id\ts_asv\ts_cm\tlabel");
    assert_eq!(w.ok(&["simulate", "spec.json"]), a);
    w.ok(&["simulate", "spec.json", "--out", "t.tsv"]);
    assert_eq!(w.read("t.tsv"), a);
    assert_ne!(w.ok(&["simulate", "spec.json", "--seed", "6"]), a);
}

#[test]
fn simulate_rejects_bad_specs() {
    let w = Workspace::new();
    w.write(
        "bad.json",
        &spec(10, 1, 1.0).replace("[[1, 0], [0, 1]]", "[[1, 3], [3, 1]]"),
    );
    assert_eq!(w.code(&["simulate", "bad.json"]), 2);
    w.write("junk.json", "{\"classes\": 3}");
    assert_eq!(w.code(&["simulate", "junk.json"]), 2);
    w.write(
        "zero.json",
        &spec(10, 1, 1.0).replace("\"n_trials\": 10", "\"n_trials\": 0"),
    );
    assert_eq!(w.code(&["simulate", "zero.json"]), 2);
    assert_eq!(w.code(&["simulate", "missing.json"]), 2);
}

#[test]
fn backend_fit_recovers_spec_moments() {
    let w = Workspace::new();
    w.write("spec.json", &spec(40_000, 9, 1.0));
    w.ok(&["simulate", "spec.json", "--out", "t.tsv"]);
    let model: Value = serde_json::from_str(&w.ok(&["fit", "t.tsv", "--what", "backend"])).unwrap();
    let truth = [("spf", [2.5, -1.5]), ("nonbf", [0.0, 1.5]), ("tarbf", [3.0, 1.5])];
    for (class, mean) in truth {
        let fitted = &model["backend"][class];
        for i in 0..2 {
            assert!(
                (fitted["mean"][i].as_f64().unwrap() - mean[i]).abs() < 0.05,
                "{class}: {fitted}"
            );
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (fitted["cov"][i][j].as_f64().unwrap() - expected).abs() < 0.06,
                    "{class}: {fitted}"
                );
            }
        }
    }
}

#[test]
fn asv_calibration_ignores_spoof_rows() {
    let w = Workspace::new();
    w.write("spec.json", &spec(2_000, 4, 1.0));
    let all = w.ok(&["simulate", "spec.json", "--out", "all.tsv"]);
    assert!(all.is_empty());
    let text = w.read("all.tsv");
    let bona: String = text
        .lines()
        .filter(|l| !l.ends_with("\tspf"))
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(bona.lines().count() < text.lines().count());
    w.write("bona.tsv", &bona);
    assert_eq!(
        w.ok(&["fit", "all.tsv", "--what", "affine-asv"]),
        w.ok(&["fit", "bona.tsv", "--what", "affine-asv"])
    );
    // Without spoofs the CM calibration has nothing to separate.
    assert_eq!(w.code(&["fit", "bona.tsv", "--what", "affine-cm"]), 3);
}

#[test]
fn fit_failures_exit_3() {
    let w = Workspace::new();
    w.write("u.tsv", "trial_id\ts_asv\ts_cm\tlabel\na\t1\t2\t-\nb\t0\t1\t-\n");
    for what in ["backend", "affine-asv", "affine-cm"] {
        assert_eq!(w.code(&["fit", "u.tsv", "--what", what]), 3, "{what}");
    }
    w.write("bad.tsv", "trial_id\ts_asv\ts_cm\n");
    assert_eq!(w.code(&["fit", "bad.tsv", "--what", "backend"]), 2);
    assert_eq!(w.code(&["fit", "u.tsv", "--what", "affine-llr-asv"]), 2);
}

#[test]
fn l3c_end_to_end_report() {
    let w = Workspace::new();
    w.pipeline(6_000, 1.0);
    let r = w.report("l3c");
    let keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
    for key in ["sasv_eer", "eer_threshold", "cllr", "cllr_min", "cllr_calib", "t_eer"] {
        assert!(keys.contains(&key), "{r}");
    }
    let get = |k: &str| r[k].as_f64().unwrap();
    assert!(get("cllr_min") <= get("cllr"));
    assert!((0.0..=1.0).contains(&get("sasv_eer")) && (0.0..=1.0).contains(&get("t_eer")));
    for system in ["b1", "b1c", "l2", "l2c", "l3", "b1v2", "post"] {
        let r = w.report(system);
        assert!(
            r["cllr_min"].as_f64().unwrap() <= r["cllr"].as_f64().unwrap(),
            "{system}: {r}"
        );
    }
}

#[test]
fn calibration_fixes_a_shrunk_asv_scale() {
    let w = Workspace::new();
    w.pipeline(20_000, 0.01);
    let eer = |s: &str| w.report(s)["sasv_eer"].as_f64().unwrap();
    assert!(eer("b1c") < eer("b1"));
    assert_eq!(w.report("b1")["t_eer"], w.report("b1c")["t_eer"]);
}

#[test]
fn evaluation_failures_exit_4() {
    let w = Workspace::new();
    w.pipeline(600, 1.0);
    w.write("empty.tsv", "");
    assert_eq!(w.code(&["evaluate", "empty.tsv", "--config", "b1.cfg.json"]), 4);
    w.write("header.tsv", "trial_id\ts_asv\ts_cm\tlabel\n");
    assert_eq!(w.code(&["evaluate", "header.tsv", "--config", "b1.cfg.json"]), 4);
    w.write("nomodels.json", r#"{"system": "l2c"}"#);
    assert_eq!(w.code(&["evaluate", "eval.tsv", "--config", "nomodels.json"]), 4);
    w.write(
        "norho.json",
        r#"{"system": "l3", "models": {"backend": "backend.json"}}"#,
    );
    assert_eq!(w.code(&["evaluate", "eval.tsv", "--config", "norho.json"]), 4);
    w.write("unknown.json", r#"{"system": "l4"}"#);
    assert_eq!(w.code(&["evaluate", "eval.tsv", "--config", "unknown.json"]), 2);
    assert_eq!(w.code(&["evaluate", "eval.tsv"]), 2);
}

#[test]
fn fuse_and_decide_append_a_column() {
    let w = Workspace::new();
    w.pipeline(3_000, 1.0);
    let fused = w.ok(&["fuse", "eval.tsv", "--config", "l2.cfg.json"]);
    assert_eq!(fused.lines().next().unwrap(), "trial_id\ts_asv\ts_cm\tlabel\tscore");
    assert_eq!(fused.lines().count(), w.read("eval.tsv").lines().count());

    let decisions = |policy: &str| -> Vec<bool> {
        w.ok(&["decide", "eval.tsv", "--config", "l2.cfg.json", "--policy", policy])
            .lines()
            .skip(1)
            .map(|l| l.ends_with("\taccept"))
            .collect()
    };
    let (optimal, linear) = (decisions("optimal"), decisions("linear"));
    assert!(
        optimal.iter().zip(&linear).all(|(o, l)| !o || *l),
        "optimal accepts must be linear accepts"
    );
    assert!(optimal.iter().any(|&a| a));
    assert_eq!(w.code(&["decide", "eval.tsv", "--config", "b1.cfg.json"]), 4);
}

#[test]
fn grid_rho_prints_the_curve() {
    let w = Workspace::new();
    w.pipeline(3_000, 1.0);
    let r: Value = serde_json::from_str(&w.ok(&["grid-rho", "dev.tsv", "--config", "l3.cfg.json"])).unwrap();
    let curve = r["curve"].as_array().unwrap();
    assert_eq!(curve.len(), 101);
    let best = r["rho"].as_f64().unwrap();
    let min = curve
        .iter()
        .map(|p| p["value"].as_f64().unwrap())
        .fold(f64::INFINITY, f64::min);
    let at_best = curve.iter().find(|p| p["rho"].as_f64() == Some(best)).unwrap();
    assert_eq!(at_best["value"].as_f64().unwrap(), min);
    let risk: Value = serde_json::from_str(&w.ok(&[
        "grid-rho",
        "dev.tsv",
        "--config",
        "l3.cfg.json",
        "--objective",
        "min-risk",
    ]))
    .unwrap();
    assert!((0.0..=1.0).contains(&risk["rho"].as_f64().unwrap()));
    assert_eq!(w.code(&["grid-rho", "dev.tsv", "--config", "l2.cfg.json"]), 2);
}

#[test]
fn boundary_grid_csv() {
    let w = Workspace::new();
    let grid = [
        "boundary",
        "--asv-min",
        "-1",
        "--asv-max",
        "1",
        "--cm-min",
        "-1",
        "--cm-max",
        "1",
        "--step",
        "1",
    ];
    let plain = w.ok(&grid);
    assert_eq!(plain.lines().count(), 10);
    assert_eq!(plain.lines().next().unwrap(), "llr_asv,llr_cm,linear,optimal");

    let mut with = grid.to_vec();
    with.extend(["--mismatched", "0.05,0.05,0.9"]);
    let csv = w.ok(&with);
    assert_eq!(csv.lines().next().unwrap(), "llr_asv,llr_cm,linear,optimal,mismatched");

    let fine = w.ok(&["boundary", "--step", "0.25"]);
    for row in fine.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        assert!(
            !(f[3] == "1" && f[2] == "0"),
            "optimal accept outside linear region: {row}"
        );
    }
    assert_eq!(w.code(&["boundary", "--step", "0"]), 2);
    assert_eq!(w.code(&["boundary", "--step", "-1"]), 2);
    assert_eq!(w.code(&["boundary", "--mismatched", "0.5,0.5"]), 2);
}

#[test]
fn end_to_end_runs_are_byte_identical() {
    let run = || {
        let w = Workspace::new();
        w.pipeline(2_000, 1.0);
        let mut bytes = Vec::new();
        for f in [
            "train.tsv",
            "dev.tsv",
            "eval.tsv",
            "backend.json",
            "asv.json",
            "llr_asv.json",
            "llr_cm.json",
        ] {
            bytes.extend(w.read(f).into_bytes());
        }
        for system in ["b1c", "l3c"] {
            bytes.extend(
                w.ok(&["evaluate", "eval.tsv", "--config", &format!("{system}.cfg.json")])
                    .into_bytes(),
            );
        }
        bytes
    };
    assert_eq!(run(), run());
}
