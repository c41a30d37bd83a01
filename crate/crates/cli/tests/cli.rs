use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_rachlearn");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn analytics_examples() {
    let o = run(&[
        "analytics",
        "contention-free-delay",
        "--t-min",
        "159",
        "--slot-ms",
        "0.25",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "19.75 ms");
    let o = run(&[
        "analytics",
        "realloc",
        "--p-c",
        "1",
        "--n-a",
        "2",
        "--d-th-ms",
        "2.5",
        "--slot-ms",
        "0.25",
    ]);
    assert_eq!(stdout(&o).trim(), "β = 1");
    let o = run(&[
        "analytics",
        "expected-realloc",
        "--n-t",
        "0",
        "--p-f",
        "63",
        "--beta",
        "5",
    ]);
    assert_eq!(stdout(&o).trim(), "E[β_t] = 0");
    let o = run(&["analytics", "min-period", "--n", "20000", "--p-f", "63"]);
    assert_eq!(stdout(&o).trim(), "T_min = 318");
    let o = run(&["analytics", "contention-delay", "--p-c", "1", "--n-a", "3"]);
    assert_eq!(stdout(&o).trim(), "inf slots");
    let o = run(&[
        "analytics",
        "realloc-pmf",
        "--n-t",
        "2",
        "--p-f",
        "4",
        "--beta",
        "1",
    ]);
    assert_eq!(stdout(&o), "b,probability\n0,0.5\n1,0.5\n");
}

#[test]
fn analytics_errors_are_one_line() {
    let o = run(&["analytics", "no-such-formula"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&[
        "analytics",
        "realloc",
        "--p-c",
        "1",
        "--n-a",
        "2",
        "--d-th-ms",
        "0.25",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).lines().count(), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible"));
    let o = run(&[
        "analytics",
        "run-probability",
        "--n-e",
        "5",
        "--alpha",
        "2",
        "--p",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validate_reports_rules() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.json", "{}");
    let o = run(&["validate", "--config", &ok]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("pass preamble_sum"));

    let bad = write(dir.path(), "bad.json", r#"{"p_c": 2}"#);
    let o = run(&["validate", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL preamble_sum"));

    let slot = write(dir.path(), "slot.json", r#"{"d_th_ms": 0.25}"#);
    let o = run(&["validate", "--config", &slot]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL threshold_feasible"));

    let typo = write(dir.path(), "typo.json", r#"{"lamda": 2}"#);
    let o = run(&["validate", "--config", &typo]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lamda"));

    let broken = write(dir.path(), "broken.json", "{\n  \"p\": 64,\n  \"p_c\" 1\n}");
    let o = run(&["validate", "--config", &broken]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn validate_checks_every_sweep_point() {
    let dir = tempfile::tempdir().unwrap();
    let exp = write(
        dir.path(),
        "exp.json",
        r#"{"sweep": {"param": "d_th_ms", "values": [2.5, 0.25]}}"#,
    );
    let o = run(&["validate", "--config", &exp]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("[d_th_ms = 2.5] pass threshold_feasible"));
    assert!(out.contains("[d_th_ms = 0.25] FAIL threshold_feasible"));
}

fn read_csv(path: &Path) -> (String, Vec<(f64, f64)>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    (header, rows)
}

const SMALL: &str = r#"{
  "base": {"width": 25.0, "length": 25.0},
  "sweep": {"param": "d_th_ms", "values": [1.25, 2.5]},
  "runs": 6
}"#;

#[test]
fn simulate_writes_plot_files() {
    let dir = tempfile::tempdir().unwrap();
    let exp = write(dir.path(), "exp.json", SMALL);
    let out = dir.path().join("out");
    let o = run(&[
        "simulate",
        "--config",
        &exp,
        "--out",
        out.to_str().unwrap(),
        "--trace",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 6);
    assert_eq!(summary["sweep"], "d_th_ms");
    assert_eq!(summary["master_seed"], rachlearn_core::DEFAULT_MASTER_SEED);
    for (i, tag) in ["d_th_ms_1.25", "d_th_ms_2.5"].iter().enumerate() {
        let (header, cdf) = read_csv(&out.join(format!("delay_cdf_{tag}.csv")));
        assert_eq!(header, "delay_ms,cumulative_probability");
        assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        assert_eq!(cdf.last().unwrap().1, 1.0);

        let point = &summary["points"][i];
        let d_th = point["d_th_ms"].as_f64().unwrap();
        let sat = point["threshold_satisfaction"].as_f64().unwrap();
        let n = point["critical_messages"].as_f64().unwrap();
        let at = cdf
            .iter()
            .take_while(|r| r.0 <= d_th + 1e-9)
            .last()
            .map_or(0.0, |r| r.1);
        assert!((at - sat).abs() <= 1.0 / n + 1e-6, "{at} vs {sat}");
        assert!(point["censored_fraction"].as_f64().unwrap() >= 0.0);

        let (header, learned) = read_csv(&out.join(format!("learned_frac_{tag}.csv")));
        assert_eq!(header, "time_ms,mean_fraction_correct");
        assert_eq!(learned[0].0, 0.25);
        assert!(learned.iter().all(|r| (0.0..=1.0).contains(&r.1)));
        let peak = learned.iter().map(|r| r.1).fold(0.0, f64::max) * 100.0;
        assert!((peak - point["peak_learned_correct_pct"].as_f64().unwrap()).abs() < 1e-3);

        let trace = fs::read_to_string(out.join(format!("trace_{tag}.csv"))).unwrap();
        assert!(trace.starts_with("slot,sender,receiver,phase,observation,outcome\n"));
    }
}

#[test]
fn simulate_is_reproducible_and_seedable() {
    let dir = tempfile::tempdir().unwrap();
    let exp = write(dir.path(), "exp.json", SMALL);
    let outs: Vec<_> = ["a", "b", "c"].iter().map(|n| dir.path().join(n)).collect();
    for (out, seed) in outs.iter().zip(["5", "5", "6"]) {
        let o = run(&[
            "simulate",
            "--config",
            &exp,
            "--out",
            out.to_str().unwrap(),
            "--runs",
            "1",
            "--seed",
            seed,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    for f in [
        "summary.json",
        "delay_cdf_d_th_ms_2.5.csv",
        "learned_frac_d_th_ms_1.25.csv",
    ] {
        assert_eq!(read(&outs[0], f), read(&outs[1], f), "{f}");
    }
    assert_ne!(
        read(&outs[0], "summary.json"),
        read(&outs[2], "summary.json")
    );
}

#[test]
fn simulate_rejects_bad_sweeps_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"sweep": {"param": "m", "values": [5, 1, 2.5]}, "runs": 1}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("m = 1") && err.contains("m = 2.5") && !err.contains("m = 5:"),
        "{err}"
    );
    assert!(!out.exists());

    let exp = write(dir.path(), "exp.json", SMALL);
    let o = run(&["simulate", "--config", &exp]);
    assert_eq!(o.status.code(), Some(1), "no output directory");

    let blocker = write(dir.path(), "file", "");
    let o = run(&[
        "simulate",
        "--config",
        &exp,
        "--out",
        &format!("{blocker}/sub"),
        "--runs",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = run(&[
        "simulate",
        "--config",
        &exp,
        "--out",
        out.to_str().unwrap(),
        "--parallel",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shipped_recipes_are_valid() {
    let recipes = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes");
    let mut seen = 0;
    for entry in fs::read_dir(recipes).unwrap() {
        let path = entry.unwrap().path();
        let o = run(&["validate", "--config", path.to_str().unwrap()]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}: {}",
            path.display(),
            stdout(&o)
        );
        seen += 1;
    }
    assert!(seen >= 5);
}
