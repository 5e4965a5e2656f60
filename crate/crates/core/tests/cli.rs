use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fullsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fullsum"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fullsum-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn count_reports_lemma_values() {
    let dir = scratch("count");
    let csv = dir.join("counts.csv");
    let o = fullsum(&["count", "--topology", "B* a+ B*", "--T", "5", "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("total: 15"), "{out}");
    assert!(out.contains("count[a]: 35"));
    assert!(out.contains("count[B]: 40"));
    assert!(out.contains("dominant: B"));
    let table = fs::read_to_string(csv).unwrap();
    assert!(table.starts_with("t,label,count\n"));
    assert!(table.contains("3,a,9\n"));

    let o = fullsum(&["count", "--topology", "B* a+ B*", "--T", "4"]);
    assert!(stdout(&o).contains("dominant: none"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(fullsum(&["count", "--topology", "", "--T", "5"]).status.code(), Some(2));
    assert_eq!(fullsum(&["count", "--topology", "B* a+ a+ B*", "--T", "5"]).status.code(), Some(2));
    assert_eq!(fullsum(&["verify", "--suite", "bogus"]).status.code(), Some(2));
    assert_eq!(fullsum(&["landscape", "--loss", "ctc", "--n", "2", "--grid", "1:0:1", "--csv", "x.csv"]).status.code(), Some(2));
    assert_eq!(fullsum(&["train", "--config", "/nonexistent.json", "--out", "x"]).status.code(), Some(2));
    assert_eq!(fullsum(&[]).status.code(), Some(2));
}

#[test]
fn verify_suites_pass() {
    for args in [
        &["verify", "--suite", "lemma", "--Tmax", "200"][..],
        &["verify", "--suite", "theorem2", "--n", "4"],
        &["verify", "--suite", "oracle", "--Tmax", "10"],
        &["verify", "--suite", "generative-ratios"],
        &["verify", "--suite", "gradcheck", "--draws", "5"],
    ] {
        let o = fullsum(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}\n{}", stdout(&o));
        assert!(!stdout(&o).contains("FAIL"));
    }
}

#[test]
fn train_writes_artifacts_deterministically() {
    let dir = scratch("train");
    let cfg = configs().join("bias_T5.json");
    let o = fullsum(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    let p: f64 = col("p_dominant_mean").parse().unwrap();
    assert!((0.70..=0.74).contains(&p), "{p}");
    assert_eq!(col("dominant"), "B");
    for f in ["bias_T5_loss.csv", "bias_T5_model.txt", "bias_T5_peakiness.txt", "bias_T5_soft_alignment.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let first = fs::read(dir.join("bias_T5_loss.csv")).unwrap();
    assert!(first.starts_with(b"step,loss\n"));
    fullsum(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(first, fs::read(dir.join("bias_T5_loss.csv")).unwrap());
}

#[test]
fn landscape_reports_region() {
    let dir = scratch("landscape");
    let csv = dir.join("ctc.csv");
    let svg = dir.join("ctc.svg");
    let o = fullsum(&[
        "landscape", "--loss", "ctc", "--n", "4", "--grid", "-2:2:0.5",
        "--csv", csv.to_str().unwrap(), "--svg", svg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("terminal region: peaky"));
    let table = fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("theta_a,theta_B,loss,grad_a,grad_B\n"));
    assert_eq!(table.lines().count(), 1 + 81);
    assert!(fs::read_to_string(&svg).unwrap().contains("<svg"));

    for (loss, region) in [("hybrid_softmax_prior", "optimal"), ("generative", "optimal")] {
        let o = fullsum(&["landscape", "--loss", loss, "--n", "4", "--grid", "-1:1:1", "--csv", csv.to_str().unwrap()]);
        assert!(stdout(&o).contains(&format!("terminal region: {region}")), "{loss}");
    }
}

#[test]
fn ratio_uniform_exact() {
    let dir = scratch("ratio");
    let csv = dir.join("ratio.csv");
    let o = fullsum(&["ratio", "--T-list", "6..8,20", "--mode", "uniform_exact", "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let table = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "T,mean_q_blank,convergence_step");
    assert_eq!(rows.len(), 5);
    let vals: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn sequential_flag_matches_parallel() {
    let dir = scratch("seq");
    let (a, b) = (dir.join("a.csv"), dir.join("b.csv"));
    fullsum(&["landscape", "--loss", "ctc", "--n", "2", "--grid", "-1:1:0.25", "--csv", a.to_str().unwrap()]);
    fullsum(&["--sequential", "landscape", "--loss", "ctc", "--n", "2", "--grid", "-1:1:0.25", "--csv", b.to_str().unwrap()]);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}
