use std::path::{Path, PathBuf};

use serde_json::Value;
use tempfile::TempDir;

use super::{run, Outcome};

fn pregrasp(args: &[&str]) -> Outcome {
    run(
        std::iter::once("pregrasp").chain(args.iter().copied()),
        None,
    )
}

fn code(out: &Outcome) -> u8 {
    out.code()
}

fn stderr(out: &Outcome) -> String {
    match out {
        Outcome::Failed { message, .. } => message.clone(),
        _ => String::new(),
    }
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, name: &str, args: &[&str]) -> PathBuf {
    let out = path(dir, name);
    let mut all = vec!["synth"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", s(&out)]);
    let r = pregrasp(&all);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    out
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn synth_writes_one_line_per_point_and_is_repeatable() {
    let dir = TempDir::new().unwrap();
    let a = synth(
        &dir,
        "s.xyz",
        &["sphere", "--r", "0.05", "--n", "5000", "--seed", "7"],
    );
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 5000);
    let dumbbell = [
        "dumbbell",
        "--dims",
        "0.06,0.06,0.015",
        "--n",
        "2000",
        "--seed",
        "3",
    ];
    let b = synth(&dir, "d1.xyz", &dumbbell);
    let c = synth(&dir, "d2.xyz", &dumbbell);
    assert_eq!(std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
}

#[test]
fn synth_rejects_bad_shapes_with_code_two() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "x.xyz");
    for args in [
        vec!["synth", "box", "--dims", "0.1,0.1,0.1", "--n", "3"],
        vec!["synth", "box", "--dims", "0.1,0.1"],
        vec!["synth", "box", "--dims", "0.1,0,0.1"],
        vec!["synth", "sphere"],
        vec!["synth", "cylinder", "--r", "0.02"],
        vec!["synth", "lshape", "--dims", "0.04,0.1,0.04"],
    ] {
        let mut args = args;
        args.extend_from_slice(&["--out", s(&out)]);
        let r = pregrasp(&args);
        assert_eq!(code(&r), 2, "{args:?}: {}", stderr(&r));
        assert!(!out.exists());
    }
}

#[test]
fn decompose_sphere_gives_one_node() {
    let dir = TempDir::new().unwrap();
    let cloud = synth(
        &dir,
        "s.xyz",
        &["sphere", "--r", "0.05", "--n", "5000", "--seed", "7"],
    );
    let out = path(&dir, "run.json");
    let r = pregrasp(&[
        "decompose",
        "--input",
        s(&cloud),
        "--min-points",
        "500",
        "--volume-ratio",
        "0.9",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let doc = json(&out);
    assert_eq!(doc["tree"]["nodes"].as_array().unwrap().len(), 1);
    assert!(doc.get("classifications").is_none());
    assert!(doc["timings"]["decompose"].as_f64().is_some());
}

#[test]
fn rank_fills_the_best_index() {
    let dir = TempDir::new().unwrap();
    let cloud = synth(
        &dir,
        "l.xyz",
        &["lshape", "--dims", "0.1,0.04,0.04", "--n", "4000"],
    );
    let out = path(&dir, "run.json");
    let r = pregrasp(&["rank", "--input", s(&cloud), "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let doc = json(&out);
    let best = doc["ranking"]["best_index"].as_u64().unwrap();
    assert!((best as usize) < doc["pool"].as_array().unwrap().len());
}

#[test]
fn invalid_parameters_exit_two_and_name_the_field() {
    let r = pregrasp(&["decompose", "--volume-ratio", "1.5"]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("volume_ratio"), "{}", stderr(&r));
    assert_eq!(stderr(&r).trim_end().lines().count(), 1);

    let dir = TempDir::new().unwrap();
    let cloud = synth(&dir, "s.xyz", &["sphere", "--r", "0.05", "--n", "600"]);
    for (flag, field) in [
        ("--aperture=-0.1", "max_aperture"),
        ("--angular-step=0", "angular_step"),
        ("--cone-edges=2", "cone_edges"),
        ("--mu=-1", "friction_mu"),
    ] {
        let r = pregrasp(&["rank", "--input", s(&cloud), flag]);
        assert_eq!(code(&r), 2, "{flag}");
        assert!(stderr(&r).contains(field), "{flag}: {}", stderr(&r));
    }
    assert_eq!(code(&pregrasp(&["decompose"])), 2);
    assert_eq!(code(&pregrasp(&["frobnicate"])), 2);
    let help = pregrasp(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(matches!(help, Outcome::Info(ref t) if t.contains("export-viz")));
}

#[test]
fn runtime_failures_exit_one_with_a_single_line() {
    let dir = TempDir::new().unwrap();
    let missing = path(&dir, "missing.xyz");
    let r = pregrasp(&["decompose", "--input", s(&missing)]);
    assert_eq!(code(&r), 1);
    assert_eq!(stderr(&r).trim_end().lines().count(), 1);
    assert!(stderr(&r).contains("missing.xyz"));

    let bad = path(&dir, "bad.xyz");
    std::fs::write(&bad, "0 0 0\n1 1 1\nnot a point\n2 2 2\n3 3 4\n").unwrap();
    let r = pregrasp(&["decompose", "--input", s(&bad)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("line 3"), "{}", stderr(&r));

    let few = path(&dir, "few.xyz");
    std::fs::write(&few, "0 0 0\n1 0 0\n0 1 0\n").unwrap();
    assert_eq!(code(&pregrasp(&["decompose", "--input", s(&few)])), 1);
}

#[test]
fn resume_continues_and_rejects_overrides() {
    let dir = TempDir::new().unwrap();
    let cloud = synth(
        &dir,
        "d.xyz",
        &["dumbbell", "--dims", "0.06,0.06,0.015", "--n", "3000"],
    );
    let partial = path(&dir, "mask.json");
    assert_eq!(
        code(&pregrasp(&[
            "mask",
            "--input",
            s(&cloud),
            "--out",
            s(&partial)
        ])),
        0
    );

    let r = pregrasp(&["rank", "--resume", s(&partial), "--aperture", "0.2"]);
    assert_eq!(code(&r), 2);
    let r = pregrasp(&["rank", "--resume", s(&partial), "--input", s(&cloud)]);
    assert_eq!(code(&r), 2);

    let resumed = path(&dir, "resumed.json");
    let r = pregrasp(&["rank", "--resume", s(&partial), "--out", s(&resumed)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let full = path(&dir, "full.json");
    assert_eq!(
        code(&pregrasp(&[
            "rank",
            "--input",
            s(&cloud),
            "--out",
            s(&full)
        ])),
        0
    );
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timings");
        v["config"]["output"] = Value::Null;
        v
    };
    assert_eq!(strip(json(&resumed)), strip(json(&full)));

    // A document whose later stage is present without an earlier one is rejected.
    let mut broken = json(&full);
    broken.as_object_mut().unwrap().remove("masks");
    let broken_path = path(&dir, "broken.json");
    std::fs::write(&broken_path, broken.to_string()).unwrap();
    assert_eq!(code(&pregrasp(&["rank", "--resume", s(&broken_path)])), 1);
}

#[test]
fn export_viz_draws_boxes_and_triads() {
    let dir = TempDir::new().unwrap();
    let cloud = synth(
        &dir,
        "p.xyz",
        &["plate", "--dims", "0.1,0.1,0.005", "--n", "3000"],
    );
    let run = path(&dir, "run.json");
    assert_eq!(
        code(&pregrasp(&["rank", "--input", s(&cloud), "--out", s(&run)])),
        0
    );
    let obj = path(&dir, "scene.obj");
    let r = pregrasp(&["export-viz", s(&run), "--top-k", "1", "--out", s(&obj)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = std::fs::read_to_string(&obj).unwrap();
    let count = |p: &str| text.lines().filter(|l| l.starts_with(p)).count();
    assert_eq!(count("l "), 12 + 36);
    assert_eq!(count("g best"), 1);

    let bare = path(&dir, "bare.json");
    let mut doc = json(&run);
    doc.as_object_mut().unwrap().retain(|k, _| k == "config");
    std::fs::write(&bare, doc.to_string()).unwrap();
    let r = pregrasp(&["export-viz", s(&bare), "--out", s(&obj)]);
    assert_eq!(code(&r), 1);
    assert_eq!(
        code(&pregrasp(&[
            "export-viz",
            s(&path(&dir, "nope.json")),
            "--out",
            s(&obj)
        ])),
        1
    );
}

#[test]
fn bad_log_setting_is_a_config_error() {
    assert_eq!(run(["pregrasp", "--help"], Some("loud")).code(), 2);
    assert_eq!(run(["pregrasp", "--help"], Some("quiet")).code(), 0);
}
