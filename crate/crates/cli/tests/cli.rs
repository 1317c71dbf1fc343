use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fairsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairsynth")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = fairsynth(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn step_by_step_german() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let disc = repo().join("configs/discretization/german.json");
    let sep = repo().join("configs/separations/german_property.json");
    let out = ok(&["ingest", "--input", s(&repo().join("data/german.csv")), "--config", s(&disc), "--out-dir", s(d)]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1000 rows, 22 attributes");
    let schema = d.join("schema.json");
    ok(&[
        "split", "--schema", s(&schema), "--input", s(&d.join("data.csv")), "--separation", s(&sep), "--seed", "3",
        "--out-dir", s(d),
    ]);
    let test_rows = std::fs::read_to_string(d.join("test.csv")).unwrap().lines().count() - 1;
    assert_eq!(test_rows, 300);
    let header = std::fs::read_to_string(d.join("external.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), "marital-status,sex,property,age,foreign-worker");

    ok(&[
        "train", "--schema", s(&schema), "--input", s(&d.join("train.csv")), "--separation", s(&sep), "--out",
        s(&d.join("tree.json")),
    ]);
    let tree: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("tree.json")).unwrap()).unwrap();
    let features: Vec<&str> = tree["features"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert!(!features.contains(&"sex") && !features.contains(&"age") && !features.contains(&"class-label"));

    for method in ["indep_overlap", "marginal_internal", "marginal_external", "latent_nb", "independent"] {
        let model = d.join(format!("{method}.json"));
        ok(&[
            "fit", "--schema", s(&schema), "--internal", s(&d.join("internal.csv")), "--external",
            s(&d.join("external.csv")), "--method", method, "--k", "4", "--restarts", "2", "--out", s(&model),
        ]);
        let synth = d.join(format!("{method}.csv"));
        ok(&["sample", "--model", s(&model), "--n", "300", "--seed", "1", "--out", s(&synth)]);
        let out = ok(&[
            "fidelity", "--schema", s(&schema), "--real", s(&d.join("test.csv")), "--synthetic", s(&synth),
            "--trials", "1",
        ]);
        let f: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(f["mean_tvd_complement"].as_f64().unwrap() > 0.9, "{method}");
        assert_eq!(f["kl"].as_array().unwrap().len(), 2);

        let out = ok(&[
            "fairness", "--schema", s(&schema), "--input", s(&synth), "--classifier", s(&d.join("tree.json")),
            "--discretization", s(&disc), "--n-boot", "50",
        ]);
        let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(r["entries"].as_array().unwrap().len(), 6);
    }
}

#[test]
fn sampling_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let disc = repo().join("configs/discretization/compas.json");
    ok(&["ingest", "--input", s(&repo().join("data/compas.csv")), "--config", s(&disc), "--out-dir", s(d)]);
    let schema = d.join("schema.json");
    ok(&[
        "split", "--schema", s(&schema), "--input", s(&d.join("data.csv")), "--separation",
        s(&repo().join("configs/separations/compas_score.json")), "--out-dir", s(d),
    ]);
    let model = d.join("m.json");
    ok(&[
        "fit", "--schema", s(&schema), "--internal", s(&d.join("internal.csv")), "--external",
        s(&d.join("external.csv")), "--method", "indep_overlap", "--out", s(&model),
    ]);
    for name in ["a.csv", "b.csv"] {
        ok(&["sample", "--model", s(&model), "--n", "20000", "--seed", "5", "--out", s(&d.join(name))]);
    }
    assert_eq!(std::fs::read(d.join("a.csv")).unwrap(), std::fs::read(d.join("b.csv")).unwrap());
}

#[test]
fn audit_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = serde_json::json!({
        "dataset_name": "german",
        "dataset": repo().join("data/german.csv"),
        "discretization": repo().join("configs/discretization/german.json"),
        "separation_name": "housing",
        "separation": repo().join("configs/separations/german_housing.json"),
        "methods": ["marginal_internal", "independent"],
        "bootstrap": 50,
        "discriminator": {"trials": 1, "forest": {"n_trees": 10}},
        "seed": 1,
        "output": d.join("out"),
    });
    let path = d.join("exp.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = ok(&["audit", "--config", s(&path), "--table"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("marginal_internal") && text.contains("|synthetic - real|"));
    let report = d.join("out/german/housing/report.json");
    assert!(d.join("out/german/housing/marginal_internal/synthetic.csv").is_file());

    let csv = ok(&["report", "--input", s(&report), "--format", "csv"]);
    assert_eq!(csv.stdout, std::fs::read(d.join("out/german/housing/report.csv")).unwrap());
    let again = ok(&["report", "--input", s(&report)]);
    assert_eq!(String::from_utf8_lossy(&again.stdout), text);

    ok(&["audit", "--config", s(&path), "--seed", "2", "--output", s(&d.join("other"))]);
    assert!(d.join("other/german/housing/report.json").is_file());
}

#[test]
fn exit_codes() {
    assert_eq!(fairsynth(&[]).status.code(), Some(1));
    assert_eq!(fairsynth(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fairsynth(&["sample", "--model", "x.json"]).status.code(), Some(1));
    assert_eq!(fairsynth(&["--help"]).status.code(), Some(0));
    assert_eq!(
        fairsynth(&["sample", "--model", "/nonexistent/m.json", "--n", "5", "--out", "/tmp/x.csv"]).status.code(),
        Some(2)
    );
    let out = Command::new(env!("CARGO_BIN_EXE_fairsynth"))
        .args(["report", "--input", "x"])
        .env("FAIRSYNTH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // external data never shows b = 1, so p(c | b = 1) is undefined without smoothing
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("raw.csv"), "a,b,c\n0,0,0\n1,1,1\n0,1,0\n1,0,1\n").unwrap();
    std::fs::write(d.join("disc.json"), r#"{"columns": [{"name": "a"}, {"name": "b"}, {"name": "c"}]}"#).unwrap();
    ok(&["ingest", "--input", s(&d.join("raw.csv")), "--config", s(&d.join("disc.json")), "--out-dir", s(d)]);
    std::fs::write(d.join("int.csv"), "a,b\n0,0\n1,1\n0,1\n").unwrap();
    std::fs::write(d.join("ext.csv"), "b,c\n0,0\n0,1\n").unwrap();
    let fit = |smoothing: &str| {
        fairsynth(&[
            "fit", "--schema", s(&d.join("schema.json")), "--internal", s(&d.join("int.csv")), "--external",
            s(&d.join("ext.csv")), "--method", "indep_overlap", "--smoothing", smoothing, "--out",
            s(&d.join("m.json")),
        ])
    };
    let out = fit("off");
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fit("empty-slices").status.code(), Some(0));
    let bad_method = fairsynth(&["fit", "--schema", "s", "--internal", "i", "--external", "e", "--method", "ctgan", "--out", "o"]);
    assert_eq!(bad_method.status.code(), Some(1));
}
