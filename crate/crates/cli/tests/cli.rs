use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pointsynth"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate_lambda1(dir: &TempDir) -> String {
    let out = run(&[
        "--mode",
        "simulate",
        "--intensity",
        "lambda1",
        "--n-ori",
        "2",
        "--seed",
        "5",
        "--out",
        &path(dir, "sim"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path(dir, "sim/lambda1_000.csv")
}

#[test]
fn simulate_then_synthesize_kernel() {
    let dir = TempDir::new().unwrap();
    let points = simulate_lambda1(&dir);
    assert!(Path::new(&path(&dir, "sim/lambda1_001.csv")).is_file());
    let out = run(&[
        "--mode",
        "synthesize",
        "--points",
        &points,
        "--method",
        "kernel",
        "--eps",
        "1",
        "--domain",
        "0,0,1,1",
        "--n-syn",
        "3",
        "--out",
        &path(&dir, "syn"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cell = dir.path().join("syn/kernel_eps1");
    for k in 0..3 {
        assert!(cell.join(format!("syn_{k:03}.csv")).is_file());
    }
    let m = json(&cell.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    let text = m["calibration"].as_str().unwrap();
    assert!(
        text.contains("epsilon = 1") && text.contains("h = "),
        "{text}"
    );
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let points = simulate_lambda1(&dir);
    let out_dir = path(&dir, "x");
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "--mode",
            "synthesize",
            "--points",
            &points,
            "--eps",
            "-1",
            "--out",
            &out_dir,
        ],
        vec![
            "--mode",
            "synthesize",
            "--points",
            "/nonexistent.csv",
            "--out",
            &out_dir,
        ],
        vec!["--mode", "synthesize", "--out", &out_dir],
        vec!["--mode", "bogus"],
        vec!["--eps", "1"],
        vec![
            "--mode",
            "synthesize",
            "--points",
            &points,
            "--delta",
            "half",
            "--out",
            &out_dir,
        ],
        vec![
            "--mode",
            "experiment",
            "--intensity",
            "lambda9",
            "--out",
            &out_dir,
        ],
    ];
    for args in cases {
        assert_eq!(code(&run(&args)), 1, "{args:?}");
    }
}

#[test]
fn infeasible_cell_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let points = simulate_lambda1(&dir);
    // α above the 11-knot grid ceiling B/(10√2) ≈ 0.0707
    let out = run(&[
        "--mode",
        "synthesize",
        "--points",
        &points,
        "--method",
        "lgcp,lap",
        "--eps",
        "1",
        "--alpha",
        "0.2",
        "--domain",
        "0,0,1,1",
        "--n-syn",
        "2",
        "--chains",
        "2",
        "--warmup",
        "20",
        "--draws",
        "20",
        "--out",
        &path(&dir, "syn"),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(&dir.path().join("syn/manifest.json"));
    let status: Vec<&str> = m["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["status"].as_str().unwrap())
        .collect();
    assert_eq!(status, ["infeasible", "ok"]);
}

#[test]
fn config_file_mirrors_flags_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "mode = \"experiment\"\nintensity = [\"lambda1\"]\nmethod = [\"kernel\", \"lap\"]\n\
             eps = [1.0]\ndelta = \"1/n\"\nalpha = \"auto\"\nknots = 6\ntess = \"sqr\"\n\
             n_ori = 2\nn_syn = 2\nseed = 3\nout = \"{}\"\n",
            path(&dir, "from_file").replace('\\', "/")
        ),
    )
    .unwrap();
    let cfg = cfg.display().to_string();
    assert_eq!(code(&run(&["--config", &cfg])), 0);
    let results = fs::read_to_string(dir.path().join("from_file/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 3);
    assert!(
        results.starts_with("dataset,method,epsilon,pmse_mean,pmse_std,npoints_mean,mise,status")
    );

    let over = path(&dir, "override");
    assert_eq!(
        code(&run(&["--config", &cfg, "--eps", "1,10", "--out", &over])),
        0
    );
    let results = fs::read_to_string(dir.path().join("override/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 5);

    fs::write(
        dir.path().join("bad.toml"),
        "mode = \"experiment\"\nepsilon = [1.0]\n",
    )
    .unwrap();
    assert_eq!(code(&run(&["--config", &path(&dir, "bad.toml")])), 1);
}

#[test]
fn experiment_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let args = |out: &str| {
        vec![
            "--mode".to_string(),
            "experiment".into(),
            "--intensity".into(),
            "lambda3".into(),
            "--method".into(),
            "kernel,lap".into(),
            "--eps".into(),
            "0.1,10".into(),
            "--n-ori".into(),
            "2".into(),
            "--n-syn".into(),
            "2".into(),
            "--out".into(),
            out.into(),
        ]
    };
    for out in ["a", "b"] {
        let a = args(&path(&dir, out));
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        assert_eq!(code(&run(&a)), 0);
    }
    let a = fs::read(dir.path().join("a/results.csv")).unwrap();
    let b = fs::read(dir.path().join("b/results.csv")).unwrap();
    assert_eq!(a, b);
    assert!(dir.path().join("a/manifest.json").is_file());
    assert!(dir.path().join("a/kcurves/lambda3_ori.csv").is_file());
    let cell = json(&dir.path().join("a/manifests/lambda3_kernel_eps0.1.json"));
    assert!(cell["calibration"][0]
        .as_str()
        .unwrap()
        .contains("bound_slack"));
}

#[test]
fn evaluate_planar_scores_each_file() {
    let dir = TempDir::new().unwrap();
    let points = simulate_lambda1(&dir);
    let other = path(&dir, "sim/lambda1_001.csv");
    let out = run(&[
        "--mode",
        "evaluate",
        "--points",
        &points,
        "--synthetic",
        &format!("{points},{other}"),
        "--domain",
        "0,0,1,1",
        "--out",
        &path(&dir, "eval"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("eval/evaluation.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0] == "file,npoints,pmse");
    // a pattern scored against itself has pMSE 0
    assert!(rows[1].ends_with(",0"), "{}", rows[1]);
    let m = json(&dir.path().join("eval/manifest.json"));
    assert!(m["mise"].as_f64().is_some());
    assert!(dir.path().join("eval/kcurves/original.csv").is_file());
}

#[test]
fn network_pipeline() {
    let dir = TempDir::new().unwrap();
    let sim = path(&dir, "sim");
    assert_eq!(
        code(&run(&[
            "--mode",
            "simulate",
            "--intensity",
            "chicago_like",
            "--n-points",
            "40",
            "--out",
            &sim
        ])),
        0
    );
    let net = path(&dir, "sim/chicago_like_network.csv");
    let pts = path(&dir, "sim/chicago_like_points.csv");
    let out = run(&[
        "--mode",
        "synthesize",
        "--network",
        &net,
        "--points",
        &pts,
        "--method",
        "lap",
        "--eps",
        "1",
        "--n-syn",
        "2",
        "--resolution",
        "100",
        "--out",
        &path(&dir, "syn"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(&dir.path().join("syn/manifest.json"));
    assert_eq!(m["input"]["count"], 40);
    assert_eq!(m["alpha"], 100.0);
    let syn = path(&dir, "syn/lap_eps1/syn_000.csv");
    let out = run(&[
        "--mode",
        "evaluate",
        "--network",
        &net,
        "--points",
        &pts,
        "--synthetic",
        &syn,
        "--out",
        &path(&dir, "eval"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(&dir.path().join("eval/manifest.json"));
    assert!(m["files"][0]["pmse"].is_null());
    assert!(m["mise"].as_f64().is_some());
    // the kernel synthesizer is planar only
    let out = run(&[
        "--mode",
        "synthesize",
        "--network",
        &net,
        "--points",
        &pts,
        "--method",
        "kernel",
        "--out",
        &path(&dir, "k"),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn lonlat_points_are_projected_and_deduplicated() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("crimes.csv");
    let mut text = String::from("id,longitude,latitude\n");
    for i in 0..10 {
        let k = i.min(8);
        text.push_str(&format!(
            "{i},{},{}\n",
            -87.66 + 0.0005 * k as f64,
            41.80 + 0.0004 * k as f64
        ));
    }
    fs::write(&file, text).unwrap();
    let out = run(&[
        "--mode",
        "synthesize",
        "--points",
        &file.display().to_string(),
        "--lonlat",
        "--domain=-87.66,41.80,-87.655,41.805",
        "--method",
        "lap",
        "--eps",
        "1",
        "--n-syn",
        "1",
        "--out",
        &path(&dir, "syn"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(&dir.path().join("syn/manifest.json"));
    assert_eq!(m["input"]["ingest"]["read"], 10);
    assert_eq!(m["input"]["ingest"]["duplicates"], 1);
    assert_eq!(m["input"]["count"], 9);
    // synthetic coordinates are in meters around the window center
    let syn = fs::read_to_string(dir.path().join("syn/lap_eps1/syn_000.csv")).unwrap();
    for line in syn.lines().skip(1) {
        let x: f64 = line.split(',').next().unwrap().parse().unwrap();
        assert!(x.abs() <= 208.0, "{x}");
    }
}
