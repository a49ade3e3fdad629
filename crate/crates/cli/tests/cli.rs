use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
seed = 5
[synthetic]
n_per_class = 100
n_shifts = 6
[estimation]
bootstrap = 10
[evaluation]
trials = 6
max_instances = 5
[solver]
restarts = 1
";

fn recourse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recourse"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = recourse(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn small_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

#[test]
fn synth_is_deterministic() {
    let dir = small_dir();
    ok(dir.path(), &["synth", "--seed", "7", "--out", "a"]);
    ok(dir.path(), &["synth", "--seed", "7", "--out", "b"]);
    ok(dir.path(), &["synth", "--seed", "8", "--out", "c"]);
    for f in ["original.csv", "shifted.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
        assert_ne!(a, fs::read(dir.path().join("c").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn negative_delta_add_is_a_usage_error() {
    let dir = small_dir();
    let out = recourse(
        dir.path(),
        &[
            "generate",
            "--belief",
            "b.json",
            "--instances",
            "i.csv",
            "--out",
            "r.csv",
            "--delta-add",
            "-0.5",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem.delta_add"));
}

#[test]
fn config_errors_are_reported_per_key() {
    let dir = small_dir();
    fs::write(
        dir.path().join("bad.toml"),
        "[estimation]\nk = 0\n[evaluation]\nsubsample = 2.0\n",
    )
    .unwrap();
    let out = recourse(dir.path(), &["synth", "--config", "bad.toml", "--out", "d"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("estimation.k") && err.contains("evaluation.subsample"),
        "{err}"
    );

    fs::write(dir.path().join("typo.toml"), "[solver]\nlamda_ls = 0.5\n").unwrap();
    let out = recourse(dir.path(), &["synth", "--config", "typo.toml", "--out", "d"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_subcommand_and_missing_input() {
    let dir = small_dir();
    assert_eq!(recourse(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(recourse(dir.path(), &["--help"]).status.code(), Some(0));
    let out = recourse(dir.path(), &["estimate", "--data", "missing.csv", "--out", "b.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn staged_run_emits_parseable_report() {
    let dir = small_dir();
    let p = dir.path();
    let c = ["--config", "small.toml"];
    ok(p, &[&c[..], &["synth", "--out", "d"]].concat());
    ok(
        p,
        &[
            &c[..],
            &[
                "estimate",
                "--data",
                "d/original.csv",
                "--normalize",
                "--out",
                "belief.json",
            ],
        ]
        .concat(),
    );

    let original = fs::read_to_string(p.join("d/original.csv")).unwrap();
    let instances: Vec<&str> = original.lines().take(4).collect();
    fs::write(p.join("inst.csv"), instances.join("\n") + "\n").unwrap();
    ok(
        p,
        &[
            &c[..],
            &[
                "generate",
                "--belief",
                "belief.json",
                "--instances",
                "inst.csv",
                "--out",
                "rec.csv",
            ],
        ]
        .concat(),
    );
    let rec = fs::read_to_string(p.join("rec.csv")).unwrap();
    assert!(
        rec.starts_with("id,x1,x2,raw_x1,raw_x2,objective,prob_1,stationarity,iterations,converged,delta_min,status\n")
    );
    assert_eq!(rec.lines().count(), 4);

    for mode in ["shifted-only", "concat"] {
        ok(
            p,
            &[
                &c[..],
                &[
                    "evaluate",
                    "--recourses",
                    "rec.csv",
                    "--instances",
                    "inst.csv",
                    "--shifted",
                    "d/shifted.csv",
                    "--original",
                    "d/original.csv",
                    "--belief",
                    "belief.json",
                    "--m2-mode",
                    mode,
                    "--out-json",
                    "r.json",
                    "--out-csv",
                    "r.csv",
                ],
            ]
            .concat(),
        );
        let csv = fs::read_to_string(p.join("r.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("id,solved,m1,m1_nominal,m2,l1_cost,l2_cost"));
        let mean: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(mean[0], "mean");
        assert_eq!(mean[3], "1", "nominal M1");
        let json = fs::read_to_string(p.join("r.json")).unwrap();
        for key in [
            "\"n_instances\": 3",
            "\"m1_validity\"",
            "\"m2_validity\"",
            "\"l1_cost\"",
            "\"per_instance\"",
        ] {
            assert!(json.contains(key), "{key}");
        }
    }
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = small_dir();
    ok(
        dir.path(),
        &[
            "sweep",
            "--config",
            "small.toml",
            "--deltas-add",
            "0,1",
            "--rhos",
            "0,0.1",
            "--out",
            "f.csv",
        ],
    );
    let csv = fs::read_to_string(dir.path().join("f.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("delta_add,rho,l1_cost,l2_cost,m1_validity,m2_validity,n_failed,error\n"));
}

#[test]
fn default_pipeline_runs_and_repeats_bytewise() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["pipeline", "--seed", "11", "--out", "a"]);
    ok(dir.path(), &["pipeline", "--seed", "11", "--out", "b"]);
    for f in ["belief.json", "recourses.csv", "report.json", "report.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let report = fs::read_to_string(dir.path().join("a/report.json")).unwrap();
    assert!(report.contains("\"m1_nominal_validity\": 1.0"), "{report}");
}
