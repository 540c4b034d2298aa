use std::path::Path;
use std::process::{Command, Output};

fn spde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spde-gp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_writes_grid_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = spde(&[
            "--seed",
            "3",
            "--out",
            path_str(out),
            "synth",
            "--kind",
            "heat-line",
            "--noise-sd",
            "0.1",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(lines(&a.join("series.csv")), 21 * 70 + 1);
    assert_eq!(lines(&a.join("graph.csv")), 20 + 1);
    for f in ["graph.csv", "series.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    let prov: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["seed"], 3);

    let wave = dir.path().join("w");
    let o = spde(&["--out", path_str(&wave), "synth", "--kind", "wave-line"]);
    assert_eq!(code(&o), 0);
    assert_eq!(lines(&wave.join("series.csv")), 11 * 70 + 1);
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_str(dir.path());
    assert_eq!(
        code(&spde(&[
            "--out",
            out,
            "synth",
            "--kind",
            "heat-line",
            "--nodes",
            "1"
        ])),
        1
    );
    assert_eq!(code(&spde(&["--out", out, "synth"])), 1);
    assert_eq!(code(&spde(&["--out", out, "frobnicate"])), 1);
    let unknown = spde(&[
        "--out",
        out,
        "backtest",
        "--kind",
        "heat-line",
        "--kernels",
        "shek,nonsense",
    ]);
    assert_eq!(code(&unknown), 1);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("nonsense"));
    let baseline = spde(&[
        "--out",
        out,
        "backtest",
        "--kind",
        "heat-line",
        "--kernels",
        "shek",
        "--baseline",
        "swek",
    ]);
    assert_eq!(code(&baseline), 1);
    assert_eq!(
        code(&spde(&[
            "--out", out, "sample", "--kernel", "matern", "--c", "1"
        ])),
        1
    );
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(code(&spde(&["--help"])), 0);
    assert_eq!(code(&spde(&["--version"])), 0);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("g.csv");
    let series = dir.path().join("s.csv");
    std::fs::write(&graph, "src,dst\na,b\nb,c\n").unwrap();
    std::fs::write(&series, "node_id,t,y\na,1,0.5\nzzz,1,0.1\n").unwrap();
    let out = dir.path().join("out");
    let o = spde(&[
        "--out",
        path_str(&out),
        "fit",
        "--graph",
        path_str(&graph),
        "--series",
        path_str(&series),
        "--kernel",
        "shek",
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let missing = dir.path().join("missing.csv");
    let o = spde(&[
        "--out",
        path_str(&out),
        "fit",
        "--graph",
        path_str(&missing),
        "--series",
        path_str(&series),
        "--kernel",
        "shek",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unstable_step_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = spde(&[
        "--out",
        path_str(dir.path()),
        "validate-kernel",
        "--kernel",
        "shek",
        "--dt",
        "0.5",
        "--paths",
        "100",
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stability"));
}

#[test]
fn validate_kernel_passes_and_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    for kernel in ["shek", "swek"] {
        let o = spde(&[
            "--seed",
            "2",
            "--out",
            path_str(dir.path()),
            "validate-kernel",
            "--kernel",
            kernel,
            "--kappa",
            "1",
            "--paths",
            "5000",
        ]);
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert_eq!(
            code(&o),
            0,
            "{stdout}{}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(stdout.contains("PASS"));
        let table = dir.path().join(format!("validate_{kernel}.csv"));
        // Three times pairs over a 3-vertex graph.
        assert_eq!(lines(&table), 3 * 9 + 1);
    }
}

fn small_backtest(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "--seed",
        "1",
        "--out",
        path_str(out),
        "backtest",
        "--kind",
        "heat-line",
        "--nodes",
        "5",
        "--t",
        "1:20",
        "--noise-sd",
        "0.01",
        "--kernels",
        "shek,sep-matern-rbf",
        "--n-train",
        "10",
        "--n-test",
        "2",
        "--no-fit",
    ];
    args.extend_from_slice(extra);
    spde(&args)
}

#[test]
fn backtest_outputs_and_single_round_note() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_backtest(dir.path(), &["--rounds", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("omitted"), "{summary}");
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let header = results.lines().next().unwrap();
    assert_eq!(
        header,
        "round,kernel,split,mae,mape,ci_half_width,dm_vs_baseline_p,error"
    );
    // Two kernels, two tasks, one round each plus a summary row each.
    assert_eq!(results.lines().count(), 1 + 2 * 2 * 2);
    assert!(dir.path().join("provenance.json").exists());
}

#[test]
fn backtest_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(
            code(&small_backtest(out, &["--rounds", "3", "--jobs", "1"])),
            0
        );
    }
    assert_eq!(
        std::fs::read(a.join("results.csv")).unwrap(),
        std::fs::read(b.join("results.csv")).unwrap()
    );
}

#[test]
fn command_line_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            "seed = 5\nout = {:?}\n\n[synth]\nkind = \"heat-line\"\nnodes = 4\nt = \"1:3\"\n",
            out
        ),
    )
    .unwrap();
    assert_eq!(code(&spde(&["--config", path_str(&cfg), "synth"])), 0);
    assert_eq!(lines(&out.join("series.csv")), 4 * 3 + 1);
    assert_eq!(
        code(&spde(&[
            "--config",
            path_str(&cfg),
            "synth",
            "--nodes",
            "6"
        ])),
        0
    );
    assert_eq!(lines(&out.join("series.csv")), 6 * 3 + 1);

    std::fs::write(&cfg, "[synth]\nkind = \"heat-line\"\nbogus = 1\n").unwrap();
    assert_eq!(
        code(&spde(&[
            "--config",
            path_str(&cfg),
            "--out",
            path_str(&out),
            "synth"
        ])),
        1
    );
}

#[test]
fn fit_and_sample_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_str(dir.path());
    let o = spde(&[
        "--out",
        out,
        "fit",
        "--kind",
        "heat-line",
        "--nodes",
        "4",
        "--t",
        "1:8",
        "--noise-sd",
        "0.01",
        "--kernel",
        "shek",
        "--max-iters",
        "20",
        "--restarts",
        "0",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    assert!(report["lml"].as_f64().unwrap() >= report["initial_lml"].as_f64().unwrap() - 1e-12);

    let o = spde(&[
        "--out",
        out,
        "sample",
        "--kernel",
        "shek",
        "--t",
        "0:1:0.5",
        "--n-samples",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // 3 nodes × 3 times × (mean, lower, upper, 2 samples).
    assert_eq!(lines(&dir.path().join("sample_shek.csv")), 3 * 3 * 5 + 1);
}
