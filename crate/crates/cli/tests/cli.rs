use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn cgtc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgtc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(path).unwrap()
}

/// Three well separated clusters of 60 points each.
fn clusters_csv(dir: &Path) -> PathBuf {
    let mut s = String::from("label,f0,f1\n");
    for (name, cx, cy) in [("a", 0.0, 0.0), ("b", 5.0, 5.0), ("c", 10.0, 0.0)] {
        for i in 0..60 {
            let t = i as f64;
            writeln!(s, "{name},{},{}", cx + 0.1 * (t * 0.7).sin(), cy + 0.1 * (t * 1.3).cos()).unwrap();
        }
    }
    let path = dir.join("clusters.csv");
    std::fs::write(&path, s).unwrap();
    path
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let args = ["simulate", "--theta", "100", "--n", "500", "--seed", "7", "--out"];
    for name in ["a.csv", "b.csv"] {
        let o = cgtc(dir.path(), &[&args[..], &[name]].concat());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = read(dir.path().join("a.csv"));
    assert_eq!(a, read(dir.path().join("b.csv")));
    assert_eq!(a.lines().count(), 501);
    assert!(a.starts_with("label,f0,f1,f2\n"));

    let o = cgtc(dir.path(), &["simulate", "--theta", "100", "--n", "500", "--seed", "8", "--out", "c.csv"]);
    assert_eq!(code(&o), 0);
    assert_ne!(a, read(dir.path().join("c.csv")));
}

#[test]
fn simulate_requires_theta() {
    let dir = TempDir::new().unwrap();
    let o = cgtc(dir.path(), &["simulate", "--n", "50"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("theta"));
}

#[test]
fn run_writes_all_method_groups() {
    let dir = TempDir::new().unwrap();
    let o = cgtc(
        dir.path(),
        &["run", "--theta", "20", "--n", "120", "--reps", "3", "--tests", "20", "--out", "m.csv", "--plot", "p.csv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let metrics = read(dir.path().join("m.csv"));
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("method,variant,theta,n,rep,metric,value,se"));
    let methods: std::collections::BTreeSet<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods.len(), 4);
    for metric in [",coverage,", ",avg_cardinality,", ",joker_rate,"] {
        assert_eq!(metrics.matches(metric).count(), 4, "{metric}");
    }
    assert!(!metrics.contains("alpha_class"));
    assert_eq!(read(dir.path().join("p.csv")).lines().count(), 5);
    assert!(stdout(&o).contains("cgtc-selective"));
}

#[test]
fn tuned_runs_report_allocations_per_rep() {
    let dir = TempDir::new().unwrap();
    let o = cgtc(
        dir.path(),
        &[
            "run", "--method", "cgtc-random", "--theta", "50", "--n", "150", "--reps", "2", "--tests", "10",
            "--alloc", "tuned", "--out", "m.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let metrics = read(dir.path().join("m.csv"));
    for rep in ["0", "1"] {
        for part in ["alpha_class", "alpha_unseen", "alpha_seen"] {
            assert!(metrics.contains(&format!(",{rep},{part},")), "{rep} {part}");
        }
    }
}

#[test]
fn invalid_method_lists_options() {
    let dir = TempDir::new().unwrap();
    let o = cgtc(dir.path(), &["run", "--theta", "10", "--method", "bogus"]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    for name in ["standard-random", "standard-selective", "cgtc-random", "cgtc-selective"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn written_config_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let o = cgtc(
        dir.path(),
        &[
            "run", "--method", "standard-selective,cgtc-selective", "--theta", "10,100", "--n", "100", "--reps",
            "2", "--tests", "15", "--seed", "4", "--out", "first.csv", "--write-config", "eff.toml",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = cgtc(dir.path(), &["run", "--config", "eff.toml", "--out", "second.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(dir.path().join("first.csv")), read(dir.path().join("second.csv")));
}

#[test]
fn flags_override_config_and_unknown_keys_fail() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("c.toml"), "theta = [10.0]\nn = 80\nreps = 2\ntests = 10\nalpha = 0.3\n").unwrap();
    let o = cgtc(dir.path(), &["run", "--config", "c.toml", "--method", "cgtc-random", "--alpha", "0.2", "--write-config", "e.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let eff = read(dir.path().join("e.toml"));
    assert!(eff.contains("alpha = 0.2"), "{eff}");
    assert!(eff.contains("n = 80"), "{eff}");

    std::fs::write(dir.path().join("bad.toml"), "theta = [10.0]\nbogus = 1\n").unwrap();
    let o = cgtc(dir.path(), &["run", "--config", "bad.toml"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn tune_favors_classes_on_closed_data() {
    let dir = TempDir::new().unwrap();
    clusters_csv(dir.path());
    let args = ["tune", "--data", "clusters.csv", "--seed", "5", "--out"];
    let o = cgtc(dir.path(), &[&args[..], &["a.toml"]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o2 = cgtc(dir.path(), &[&args[..], &["b.toml"]].concat());
    assert_eq!(stdout(&o), stdout(&o2));
    let text = read(dir.path().join("a.toml"));
    assert_eq!(text, read(dir.path().join("b.toml")));

    let value = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key} = ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    let (c, u, s) = (value("alpha_class"), value("alpha_unseen"), value("alpha_seen"));
    assert!(c >= 0.08, "{text}");
    assert!((c + u + s - 0.1).abs() < 1e-12);
}

#[test]
fn predict_marks_the_joker_only_when_needed() {
    let dir = TempDir::new().unwrap();
    clusters_csv(dir.path());
    let o = cgtc(
        dir.path(),
        &["predict", "--data", "clusters.csv", "--query", "0,0.1", "--alpha", "0.3", "--out", "p.csv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("{a"), "{line}");
    assert!(!line.contains('*'), "{line}");
    assert!(line.contains("psi_unseen=") && line.contains("psi_seen="));
    let csv = read(dir.path().join("p.csv"));
    assert!(csv.starts_with("query,labels,joker,psi_unseen,psi_seen\n"));
    assert!(csv.contains(",false,"));

    let o = cgtc(dir.path(), &["simulate", "--theta", "1000", "--n", "200", "--seed", "1", "--out", "diverse.csv"]);
    assert_eq!(code(&o), 0);
    let o = cgtc(dir.path(), &["predict", "--data", "diverse.csv", "--query", "40,40,40"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains('*'), "{}", stdout(&o));
}

#[test]
fn predict_rejects_bad_queries() {
    let dir = TempDir::new().unwrap();
    clusters_csv(dir.path());
    std::fs::write(dir.path().join("q.csv"), "f0,f1\n1,2\n3,oops\n").unwrap();
    let o = cgtc(dir.path(), &["predict", "--data", "clusters.csv", "--queries", "q.csv"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));

    let o = cgtc(dir.path(), &["predict", "--data", "clusters.csv", "--query", "1,2,3"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("features"), "{}", stderr(&o));
}
