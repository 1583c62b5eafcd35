//! Drives the `syran` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use syran::data::{kepler_dataset, manifold_dataset, write_csv};
use syran::ensemble::{EnsembleModel, Hyperparameters, InvariantModel, SCORE_MAX};
use syran::expr::parse_with_names;
use syran::objective::{mean_abs_deviation, LossBreakdown};

fn syran(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_syran")).args(args).env_remove("SYRAN_SEED").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_csv(&kepler_dataset(), dir.path().join("kepler.csv")).unwrap();
        write_csv(&manifold_dataset(40, 4, 1), dir.path().join("manifold.csv")).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn fit(&self, model: &str, extra: &[&str]) -> Output {
        let input = self.path("kepler.csv");
        let model = self.path(model);
        let mut args = vec!["fit", "--input", s(&input), "--model", s(&model)];
        args.extend_from_slice(&["--ensemble-size", "4", "--generations", "600", "--population", "30"]);
        args.extend_from_slice(extra);
        syran(&args)
    }
}

#[test]
fn fit_writes_a_model_and_is_reproducible() {
    let fx = Fixture::new();
    let a = fx.fit("a.json", &["--seed", "11"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(stderr(&a).is_empty());
    assert!(stdout(&a).contains("trained 4 invariants on 13 rows"));
    let b = fx.fit("b.json", &["--seed", "11", "--workers", "2"]);
    assert!(b.status.success());
    let ma = std::fs::read(fx.path("a.json")).unwrap();
    assert_eq!(ma, std::fs::read(fx.path("b.json")).unwrap());
    let model = EnsembleModel::load(fx.path("a.json")).unwrap();
    assert_eq!(model.members.len(), 4);
    assert_eq!(model.feature_names, ["T", "a"]);
}

#[test]
fn seed_falls_back_to_the_environment() {
    let fx = Fixture::new();
    assert!(fx.fit("flag.json", &["--seed", "5"]).status.success());
    let input = fx.path("kepler.csv");
    let model = fx.path("env.json");
    let o = Command::new(env!("CARGO_BIN_EXE_syran"))
        .args(["fit", "--input", s(&input), "--model", s(&model)])
        .args(["--ensemble-size", "4", "--generations", "600", "--population", "30"])
        .env("SYRAN_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(fx.path("flag.json")).unwrap());
}

#[test]
fn fit_on_an_empty_file_names_it() {
    let fx = Fixture::new();
    let empty = fx.write("empty.csv", "");
    let model = fx.path("m.json");
    let o = syran(&["fit", "--input", s(&empty), "--model", s(&model)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("empty.csv"), "{}", stderr(&o));
    assert!(!model.exists());
}

#[test]
fn score_preserves_rows_and_range() {
    let fx = Fixture::new();
    assert!(fx.fit("m.json", &[]).status.success());
    let model = fx.path("m.json");
    let input = fx.path("kepler.csv");
    let o = syran(&["score", "--model", s(&model), "--input", s(&input)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("score"));
    let scores: Vec<f64> = lines.map(|l| l.parse().unwrap()).collect();
    assert_eq!(scores.len(), 13);
    assert!(scores.iter().all(|s| (0.5..=SCORE_MAX).contains(s)));
    // training rows score around the calibrated center sigmoid(1)
    let mean = scores.iter().sum::<f64>() / 13.0;
    assert!((0.6..0.8).contains(&mean), "{mean}");
}

#[test]
fn single_member_fit_beats_the_constant_baseline() {
    let fx = Fixture::new();
    let input = fx.path("kepler.csv");
    let model = fx.path("one.json");
    let o = syran(&["fit", "--input", s(&input), "--model", s(&model), "--ensemble-size", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = EnsembleModel::load(&model).unwrap();
    assert_eq!(m.members.len(), 1);
    assert!(m.members[0].train_loss.total < 1.0);
}

#[test]
fn off_law_body_outscores_the_training_bodies() {
    let fx = Fixture::new();
    let ds = kepler_dataset();
    let expression = parse_with_names("(div (mul T T) (mul a (mul a a)))", &["T", "a"]).unwrap();
    let member = InvariantModel {
        mean_deviation: mean_abs_deviation(&expression, ds.rows()).value,
        expression,
        subset: vec![0, 1],
        train_loss: LossBreakdown::default(),
    };
    let model = fx.path("kepler-law.json");
    EnsembleModel::new(vec![member], ds.feature_names().to_vec(), Hyperparameters::default(), 2)
        .unwrap()
        .save(&model)
        .unwrap();

    let input = fx.path("kepler.csv");
    let train = syran(&["score", "--model", s(&model), "--input", s(&input)]);
    assert!(train.status.success(), "{}", stderr(&train));
    let max_train = stdout(&train).lines().skip(1).map(|l| l.parse::<f64>().unwrap()).fold(0.0, f64::max);
    // (1, 5) breaks T^2 = a^3 by a factor of 125
    let odd = fx.write("odd.csv", "T,a\n1,5\n");
    let o = syran(&["score", "--model", s(&model), "--input", s(&odd)]);
    let odd_score: f64 = stdout(&o).lines().nth(1).unwrap().parse().unwrap();
    assert!(odd_score > max_train, "{odd_score} vs {max_train}");
}

#[test]
fn score_edge_cases() {
    let fx = Fixture::new();
    assert!(fx.fit("m.json", &[]).status.success());
    let model = fx.path("m.json");
    let empty = fx.write("empty.csv", "");
    let o = syran(&["score", "--model", s(&model), "--input", s(&empty)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());

    let wide = fx.write("wide.csv", "T,a,b\n1,1,1\n");
    let o = syran(&["score", "--model", s(&model), "--input", s(&wide)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("expects 2"), "{}", stderr(&o));
}

#[test]
fn inspect_sorts_by_training_loss() {
    let fx = Fixture::new();
    assert!(fx.fit("m.json", &[]).status.success());
    let model = fx.path("m.json");
    let o = syran(&["inspect", "--model", s(&model), "--format", "json"]);
    assert!(o.status.success());
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    let losses: Vec<f64> = rows.iter().map(|r| r["train_loss"].as_f64().unwrap()).collect();
    assert!(losses.windows(2).all(|w| w[0] <= w[1]));
    let text = stdout(&syran(&["inspect", "--model", s(&model)]));
    assert!(text.contains('T') || text.contains('a'));
    assert!(!text.contains("x0") && !text.contains("x1"));
}

#[test]
fn degenerate_demo_still_reports() {
    let o = syran(&["demo-kepler", "--generations", "1", "--population", "1", "--ensemble-size", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("Kepler-equivalent invariants"));
    assert!(out.contains("per invariant"));
}

#[test]
fn eval_and_sweep() {
    let fx = Fixture::new();
    let input = fx.path("manifold.csv");
    let small = ["--ensemble-size", "3", "--generations", "600", "--population", "30"];
    let mut args = vec!["eval", "--input", s(&input), "--label-column", "label", "--format", "json"];
    args.extend_from_slice(&small);
    let o = syran(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["auc_per_member"].as_array().unwrap().len(), 3);

    let sweep = |grid: &[&str]| {
        let mut args = vec!["sweep", "--input", s(&input), "--label-column", "label"];
        for g in grid {
            args.extend_from_slice(&["--grid", g]);
        }
        args.extend_from_slice(&small);
        syran(&args)
    };
    let o = sweep(&["gamma=0.001,0.01,0.1,0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 5, "{out}");
    assert!(out.starts_with("     gamma |"));
    let o = sweep(&["delta=2"]);
    assert_eq!(stdout(&o).lines().count(), 2);
    assert!(!sweep(&["gamma=0.1", "delta=1"]).status.success());
    assert!(!sweep(&["gamma=0.1,delta=1"]).status.success());
}

#[test]
fn missing_arguments_fail_cleanly() {
    let o = syran(&["fit"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--input"));
    assert!(!syran(&["launch"]).status.success());
}
