use std::path::Path;
use std::process::{Command, Output};

fn coevo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coevo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_out(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn grow_save_load_stats() {
    let dir = tempfile::tempdir().unwrap();
    for file in ["t.bin", "t.tsv"] {
        let path = dir.path().join(file);
        let p = path.to_str().unwrap();
        let grown = json_out(&coevo(&[
            "grow",
            "--pmf",
            "geometric:0.4",
            "--n",
            "5000",
            "--variant",
            "continuous",
            "--seed",
            "9",
            "--out",
            p,
        ]));
        let loaded = json_out(&coevo(&[
            "stats",
            "--in",
            p,
            "--json",
            "--pagerank",
            "0.5",
            "--fringe",
            "3",
        ]));
        assert_eq!(loaded["n"], 5000);
        for key in ["height", "root_degree", "degree_histogram", "profile"] {
            assert_eq!(grown[key], loaded[key], "{key}");
        }
        assert!((loaded["pagerank_total"].as_f64().unwrap() - 5000.0).abs() < 1e-6);
        assert!(loaded["fringe"].is_object());
        // text files carry no birth times
        assert_eq!(loaded.get("martingale_w").is_some(), file == "t.bin");
    }
}

#[test]
fn same_seed_same_file() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let o = coevo(&[
            "grow",
            "--pmf",
            "srw:0.4",
            "--t",
            "6",
            "--variant",
            "killed",
            "--seed",
            "3",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        std::fs::read(p).unwrap()
    };
    assert_eq!(run("a.bin"), run("b.bin"));
}

#[test]
fn constants_json() {
    let v = json_out(&coevo(&[
        "constants",
        "--pmf",
        "geometric:0.3",
        "--json",
        "--k",
        "10",
        "--damping",
        "0.5",
    ]));
    let s0 = v["constants"]["s0"]["finite"].as_f64().unwrap();
    assert!((s0 - 1.0 / 1.4).abs() < 1e-9);
    assert_eq!(v["alpha_trace"].as_array().unwrap().len(), 10);
}

#[test]
fn profile_command() {
    let v = json_out(&coevo(&[
        "rw",
        "profile",
        "--pmf",
        "geometric:0.5",
        "--k",
        "1",
        "--t",
        "1",
    ]));
    assert!((v["value"].as_f64().unwrap() - 0.5748041731).abs() < 1e-8);
}

#[test]
fn experiment_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = coevo(&[
        "experiment",
        "--preset",
        "A1",
        "--out",
        out.to_str().unwrap(),
        "--csv-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout)
        .lines()
        .all(|l| l.starts_with("PASS A1")));
    assert!(Path::new(&out).exists());

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"name":"x","pmfs":["geometric:0.3"],"kind":"alpha_k","k_min":5,"k_max":9,"replicas":0}"#,
    )
    .unwrap();
    assert_eq!(
        coevo(&["experiment", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(coevo(&["experiment", "--preset", "A99"]).status.code(), Some(2));
}

#[test]
fn rejects_bad_input() {
    assert!(!coevo(&["grow", "--pmf", "geometric:1.5", "--n", "10"])
        .status
        .success());
    assert!(
        !coevo(&["grow", "--pmf", "geometric:0.5", "--n", "10", "--t", "2"])
            .status
            .success()
    );
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk.bin");
    std::fs::write(&p, b"not a tree").unwrap();
    assert_eq!(
        coevo(&["stats", "--in", p.to_str().unwrap()]).status.code(),
        Some(2)
    );
}
