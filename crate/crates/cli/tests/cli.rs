use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_scoretrend");
const QUICK: &[&str] = &["--chains", "2", "--iters", "300", "--mle-starts", "2", "--max-draws", "40"];

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_match(dir: &Path, id: &str, home: &str, away: &str, phase: f64) -> PathBuf {
    let mut text = String::from("match_id,date,home_team,away_team,minute,home_score,away_score\n");
    let (mut h, mut a) = (0, 0);
    for i in 1..=120 {
        let t = i as f64 * 0.39;
        if ((t / 4.0 + phase).sin() + 0.3 * ((i * 7) % 5) as f64 - 0.6) > 0.0 {
            a += 2;
        } else {
            h += 2;
        }
        text.push_str(&format!("{id},2020-01-01,{home},{away},{t},{h},{a}\n"));
    }
    let p = dir.join(format!("{id}.csv"));
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_grid_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_match(dir.path(), "g1", "H", "A", 0.0);
    let out1 = dir.path().join("b1");
    let out2 = dir.path().join("b2");
    for out in [&out1, &out2] {
        let mut args = vec!["fit", "--input", s(&input), "--out", s(out), "--grid-points", "3", "--seed", "7"];
        args.extend_from_slice(QUICK);
        let o = run(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let post: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out1.join("posterior_mle.json")).unwrap()).unwrap();
    assert_eq!(post["grid"], serde_json::json!([0.0, 24.0, 48.0]));
    assert_eq!(std::fs::read(out1.join("chain.csv")).unwrap(), std::fs::read(out2.join("chain.csv")).unwrap());
    let header = std::fs::read_to_string(out1.join("chain.csv")).unwrap();
    assert!(header.starts_with("chain,iter,beta,alpha,rho,sigma,log_post\n"));
}

#[test]
fn plotdata_from_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_match(dir.path(), "g1", "H", "A", 1.0);
    let bundle = dir.path().join("bundle");
    let mut args = vec!["fit", "--input", s(&input), "--out", s(&bundle)];
    args.extend_from_slice(QUICK);
    assert!(run(&args).status.success());
    let csv_path = dir.path().join("plot.csv");
    let o = run(&["plotdata", "--input", s(&bundle), "--out", s(&csv_path)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let post: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(bundle.join("posterior_mle.json")).unwrap()).unwrap();
    let idx: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(bundle.join("indices.json")).unwrap()).unwrap();
    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 241);
    for (i, r) in rows.iter().enumerate() {
        let v = |name: &str| r[col(name)].parse::<f64>().unwrap();
        assert!(v("cred_lower") <= v("mu_d") && v("mu_d") <= v("cred_upper"));
        assert!(v("pred_lower") <= v("cred_lower") && v("cred_upper") <= v("pred_upper"));
        assert!(v("tdi_q05") <= v("tdi_q50") && v("tdi_q50") <= v("tdi_q95"));
        assert!((v("mu_d") - post["mu_d"][i].as_f64().unwrap()).abs() <= 1e-12);
        assert!((v("t") - post["grid"][i].as_f64().unwrap()).abs() <= 1e-12);
        assert!((v("tdi_mean") - idx["tdi_mean"][i].as_f64().unwrap()).abs() <= 1e-12);
        assert!((v("deti_q50") - idx["deti_q50"][i].as_f64().unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn season_rows_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    write_match(&input, "g1", "A", "B", 0.0);
    write_match(&input, "g2", "B", "C", 1.0);
    write_match(&input, "g3", "C", "A", 2.0);
    let out = dir.path().join("out");
    let mut args = vec!["season", "--input", s(&input), "--out", s(&out), "--grid-points", "25"];
    args.extend_from_slice(QUICK);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(out.join("season_eti.csv")).unwrap();
    assert_eq!(rows.lines().count(), 4);
    let clusters: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("clusters.json")).unwrap()).unwrap();
    assert_eq!(clusters["partitions"][0]["groups"][0]["label"], "A");

    let o = Command::new(BIN).args(&args).env("RUST_LOG", "info").output().unwrap();
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["cache_hits"], 3);
    assert_eq!(String::from_utf8_lossy(&o.stderr).matches("cache hit for match").count(), 3);
}

#[test]
fn season_fails_over_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    write_match(&input, "g1", "A", "B", 0.0);
    std::fs::write(input.join("bad.csv"), "match_id,date,home_team,away_team,minute,home_score,away_score\nx,,A,B,1,5,0\nx,,A,B,2,3,0\n").unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["season", "--input", s(&input), "--out", s(&out), "--grid-points", "25"];
    args.extend_from_slice(QUICK);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(4));
    assert!(out.join("season_eti.csv").exists());
}

#[test]
fn errors_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["plotdata", "--input", s(&dir.path().join("missing"))]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "MissingBundle");

    let input = write_match(dir.path(), "g1", "H", "A", 0.0);
    assert_eq!(run(&["fit", "--input", s(&input), "--bogus"]).status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "match_id,date,home_team,away_team,minute,home_score,away_score\nx,,A,B,50,5,0\n").unwrap();
    let o = run(&["fit", "--input", s(&bad), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "EmptyAfterTruncation");

    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "grid_pts = 3\n").unwrap();
    let o = run(&["fit", "--input", s(&input), "--out", s(&dir.path().join("o")), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_match(dir.path(), "g1", "H", "A", 0.0);
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "grid_points = 5\nmax_draws = 40\n[mcmc]\nn_chains = 2\nn_iter = 300\n[mle]\nstarts = 2\n").unwrap();
    let out = dir.path().join("o");
    let o = run(&["fit", "--input", s(&input), "--out", s(&out), "--config", s(&cfg), "--grid-points", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let post: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("posterior_mle.json")).unwrap()).unwrap();
    assert_eq!(post["grid"].as_array().unwrap().len(), 3);
}

#[test]
fn help_lists_every_setting() {
    let help = String::from_utf8(run(&["fit", "--help"]).stdout).unwrap();
    for flag in [
        "--input", "--out", "--config", "--seed", "--grid-points", "--domain-end", "--prior-scale", "--prior-df", "--chains",
        "--iters", "--warmup-frac", "--target-accept", "--thin", "--mle-starts", "--mle-max-iter", "--mle-grad-tol",
        "--max-draws", "--workers", "--c-max", "--cluster-tol", "--max-failed-fraction",
    ] {
        assert!(help.contains(flag), "{flag}");
    }
}

#[test]
fn validate_reports_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_match(dir.path(), "g1", "H", "A", 0.0);
    let o = run(&["validate", "--input", s(&input)]);
    assert!(o.status.success());
    let line: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(line["events"], 120);
}
