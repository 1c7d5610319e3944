use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use latentspec::sim::{generate_scenario, Scenario, ScenarioConfig};
use latentspec::{
    estimate_dk_qvf, estimate_latent_space, subspace_distance, DataMatrix, Family, Matrix,
    RankMode, RowSpaceBasis,
};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_latentspec"));
    c.env_remove("LATENTSPEC_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_csv(path: &Path, m: &Matrix) {
    let mut s = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|x| format!("{x:.16e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn scenario_fixture(dir: &Path, sc: Scenario, n: usize, k: usize, r: usize, seed: u64) -> (PathBuf, PathBuf) {
    let draw = generate_scenario(&ScenarioConfig::new(sc, n, k, r, 1, seed), 0).unwrap();
    let y = dir.join("y.csv");
    let m = dir.join("m.csv");
    write_csv(&y, draw.y.matrix());
    write_csv(&m, &draw.m);
    (y, m)
}

fn poisson_100x4(dir: &Path) -> PathBuf {
    let path = dir.join("pois.csv");
    let mut s = String::from("s1,s2,s3,s4\n");
    for i in 0..100u64 {
        let base = (i * 7 + 3) % 11;
        let row: Vec<String> = (0..4u64).map(|j| (base * (j + 1) + (i * j) % 5).to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    fs::write(&path, s).unwrap();
    path
}

#[test]
fn estimate_fixed_rank_writes_unit_row() {
    let dir = TempDir::new().unwrap();
    let data = poisson_100x4(dir.path());
    let out = dir.path().join("out");
    let o = run(&["estimate", "--data", p(&data), "--family", "poisson", "--rank", "fixed:1", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_csv(&out.join("m_hat.csv"));
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].len(), 4);
    let norm: f64 = m[0].iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-12);
    assert_eq!(read_csv(&out.join("eigenvalues.csv")).len(), 4);
}

#[test]
fn estimate_auto_rank_record() {
    let dir = TempDir::new().unwrap();
    let data = poisson_100x4(dir.path());
    let out = dir.path().join("out");
    let o = run(&["estimate", "--data", p(&data), "--family", "poisson", "--rank", "auto", "--out", p(&out)]);
    assert!(matches!(o.status.code(), Some(0) | Some(4)));
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("rank.json")).unwrap()).unwrap();
    let dec = &rec["decision"];
    assert_eq!(dec["mode"], "estimated");
    let scaled: Vec<f64> = dec["scaled_eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(scaled.len(), 4);
    assert!(scaled.windows(2).all(|w| w[0] >= w[1]));
    let threshold = dec["threshold"].as_f64().unwrap();
    let count = scaled.iter().filter(|&&s| s > threshold).count();
    assert_eq!(rec["r_hat"].as_u64().unwrap() as usize, count);
    assert!(dec["calibration"]["grid"].is_array());
}

#[test]
fn estimate_recovers_rank_on_poisson_fixture() {
    let dir = TempDir::new().unwrap();
    let (y, _) = scenario_fixture(dir.path(), Scenario::PoissonB, 15, 10_000, 2, 3);
    let out = dir.path().join("out");
    let o = run(&["estimate", "--data", p(&y), "--family", "poisson", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("rank.json")).unwrap()).unwrap();
    assert_eq!(rec["r_hat"], 2);
}

#[test]
fn estimate_exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("neg.csv");
    fs::write(&bad, "1,2,3\n-1,2,3\n4,5,6\n7,8,9\n").unwrap();
    let o = run(&["estimate", "--data", p(&bad), "--family", "poisson", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(3));

    let garbage = dir.path().join("g.csv");
    fs::write(&garbage, "a,b\n1,x\n").unwrap();
    let o = run(&["estimate", "--data", p(&garbage), "--family", "poisson"]);
    assert_eq!(o.status.code(), Some(2));

    // No variance source.
    let o = run(&["estimate", "--data", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));

    // Gram minus a large diagonal has no positive eigenvalue.
    let y = dir.path().join("y.csv");
    fs::write(&y, "1,0\n0,1\n1,1\n").unwrap();
    let dk = dir.path().join("dk.csv");
    fs::write(&dk, "10\n10\n").unwrap();
    let out = dir.path().join("o");
    let o = run(&["estimate", "--data", p(&y), "--dk-file", p(&dk), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(out.join("rank.json").exists());
}

#[test]
fn estimate_transpose_and_leek() {
    let dir = TempDir::new().unwrap();
    let draw = generate_scenario(&ScenarioConfig::new(Scenario::NormalA, 6, 400, 2, 1, 5), 0).unwrap();
    let yt = dir.path().join("yt.csv");
    write_csv(&yt, &draw.y.matrix().transpose());
    let out = dir.path().join("out");
    let o = run(&["estimate", "--data", p(&yt), "--transpose", "--leek", "3", "--rank", "fixed:2", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_csv(&out.join("m_hat.csv")).len(), 2);
}

#[test]
fn distance_examples() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, "1,0\n").unwrap();
    fs::write(&b, "0,1\n").unwrap();
    let o = run(&["distance", "--m", p(&a), "--m-hat", p(&b)]);
    assert!(o.status.success());
    let d: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!((d - 1.0).abs() < 1e-15);

    let o = run(&["distance", "--m", p(&a), "--m-hat", p(&a)]);
    let d: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert_eq!(d, 0.0);

    let def = dir.path().join("def.csv");
    fs::write(&def, "1,2\n2,4\n").unwrap();
    let o = run(&["distance", "--m", p(&def), "--m-hat", p(&a)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn distance_matches_library() {
    let dir = TempDir::new().unwrap();
    let (y, m) = scenario_fixture(dir.path(), Scenario::GammaE, 10, 3000, 3, 8);
    let out = dir.path().join("out");
    let o = run(&["estimate", "--data", p(&y), "--family", "gamma", "--s", "10", "--rank", "fixed:3", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json = dir.path().join("d.json");
    let o = run(&["distance", "--m", p(&m), "--m-hat", p(&out.join("m_hat.csv")), "--json", p(&json)]);
    assert!(o.status.success());
    let d_cli: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();

    let draw = generate_scenario(&ScenarioConfig::new(Scenario::GammaE, 10, 3000, 3, 1, 8), 0).unwrap();
    let dk = estimate_dk_qvf(&draw.y, &Family::gamma(10.0).unwrap()).unwrap();
    let est = estimate_latent_space(&draw.y, &dk, &RankMode::Fixed(3)).unwrap();
    let d_lib = subspace_distance(
        &RowSpaceBasis::new(draw.m.clone()).unwrap(),
        &RowSpaceBasis::new(est.m_hat).unwrap(),
    )
    .unwrap()
    .d;
    assert!((d_cli - d_lib).abs() <= 1e-12);
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(rec["r_hat"], 3);
    assert_eq!(rec["m_hat_orthonormal"], true);
}

#[test]
fn distance_normalize_m() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, "3,4,0\n").unwrap();
    fs::write(&b, "0.6,0.8,0\n").unwrap();
    let o = run(&["distance", "--m", p(&a), "--m-hat", p(&b), "--normalize-m"]);
    let d: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!(d < 1e-15);
}

fn sim_config(dir: &Path, body: &str) -> PathBuf {
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, body).unwrap();
    cfg
}

#[test]
fn simulate_normal_cell() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = sim_config(
        dir.path(),
        &format!(
            r#"{{"scenario":"normal","n":15,"k":1000,"r":5,"reps":50,"seed":7,"output_dir":"{}"}}"#,
            p(&out)
        ),
    );
    let o = run(&["simulate", "--config", p(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,n,k,r,reps,r_correct,r_under,r_over,d_median_fixed,d_median_auto,rho_median"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..5], &["normal", "15", "1000", "5", "50"]);
    let correct: usize = row[5].parse().unwrap();
    assert!(correct >= 45, "r_correct = {correct}");
    let reps = fs::read_to_string(out.join("reps.csv")).unwrap();
    assert_eq!(reps.lines().count(), 51);
    let meta = fs::read_to_string(out.join("metadata.json")).unwrap();
    assert!(meta.contains("ChaCha12"));
}

#[test]
fn simulate_gamma_convergence_in_k() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = sim_config(
        dir.path(),
        r#"{"scenario":"gamma","n":15,"k":[1000,5000,10000],"r":5,"reps":20,"seed":3}"#,
    );
    let o = run(&["simulate", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    let d: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(8).unwrap().parse().unwrap())
        .collect();
    assert_eq!(d.len(), 3);
    assert!(d[0] >= d[1] && d[1] >= d[2], "{d:?}");
}

#[test]
fn simulate_config_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = sim_config(dir.path(), r#"{"scenario":"normal","n":5,"k":100,"r":7}"#);
    assert_eq!(run(&["simulate", "--config", p(&cfg)]).status.code(), Some(2));
    let cfg = sim_config(dir.path(), r#"{"scenario":"normal""#);
    assert_eq!(run(&["simulate", "--config", p(&cfg)]).status.code(), Some(2));
    assert_eq!(run(&["simulate"]).status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let cfg = sim_config(
        dir.path(),
        r#"{"scenario":["poisson","binomial"],"n":8,"k":500,"r":2,"reps":6,"seed":11}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["simulate", "--config", p(&cfg), "--out", p(&a), "--threads", "1"]).status.success());
    let o = bin()
        .args(["simulate", "--config", p(&cfg), "--out", p(&b), "--threads", "1"])
        .env("LATENTSPEC_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success());
    for f in ["summary.csv", "reps.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn subsample_full_grid_matches_estimate_and_distance() {
    let dir = TempDir::new().unwrap();
    let (y, m) = scenario_fixture(dir.path(), Scenario::PoissonB, 8, 1500, 2, 4);
    let out = dir.path().join("sub");
    let o = run(&[
        "subsample", "--data", p(&y), "--m", p(&m), "--family", "poisson", "--k-grid", "1500",
        "--reps", "1", "--seed", "9", "--out", p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    let row: Vec<&str> = curve.lines().nth(1).unwrap().split(',').collect();
    let d_sub: f64 = row[3].parse().unwrap();

    let est = dir.path().join("est");
    assert!(run(&["estimate", "--data", p(&y), "--family", "poisson", "--rank", "fixed:2", "--out", p(&est)])
        .status
        .success());
    let o = run(&["distance", "--m", p(&m), "--m-hat", p(&est.join("m_hat.csv"))]);
    let d_direct: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert_eq!(d_sub, d_direct);
}

#[test]
fn subsample_curve_decreases_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let (y, m) = scenario_fixture(dir.path(), Scenario::PoissonB, 8, 8000, 2, 12);
    let args = |out: &Path| {
        vec![
            "subsample".to_string(), "--data".into(), p(&y).into(), "--m".into(), p(&m).into(),
            "--family".into(), "poisson".into(), "--k-grid".into(), "500,2000,8000".into(),
            "--reps".into(), "10".into(), "--seed".into(), "5".into(), "--out".into(), p(out).into(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(bin().args(args(&a)).output().unwrap().status.success());
    assert!(bin().args(args(&b)).output().unwrap().status.success());
    let ca = fs::read(a.join("curve.csv")).unwrap();
    assert_eq!(ca, fs::read(b.join("curve.csv")).unwrap());
    let d: Vec<f64> = String::from_utf8(ca)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(d[0] >= d[1] && d[1] >= d[2], "{d:?}");
}

#[test]
fn subsample_rejects_oversized_k() {
    let dir = TempDir::new().unwrap();
    let (y, m) = scenario_fixture(dir.path(), Scenario::PoissonB, 6, 100, 2, 1);
    let o = run(&["subsample", "--data", p(&y), "--m", p(&m), "--family", "poisson", "--k-grid", "50,101"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rank_sweep_minimum_at_true_rank() {
    let dir = TempDir::new().unwrap();
    let (y, m) = scenario_fixture(dir.path(), Scenario::NormalA, 15, 5000, 5, 21);
    let out = dir.path().join("sw");
    let o = run(&[
        "rank-sweep", "--data", p(&y), "--family", "normal", "--r-grid", "1..10", "--m", p(&m), "--out", p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let d: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let argmin = d
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert_eq!(argmin + 1, 5, "{d:?}");
}

#[test]
fn rank_sweep_whole_space_and_noiseless() {
    let dir = TempDir::new().unwrap();
    let draw = generate_scenario(&ScenarioConfig::new(Scenario::GammaE, 6, 300, 1, 1, 2), 0).unwrap();
    let y = dir.path().join("theta.csv");
    write_csv(&y, &draw.theta);
    let m = dir.path().join("m.csv");
    write_csv(&m, &draw.m);
    let zeros = dir.path().join("dk.csv");
    fs::write(&zeros, "0,0,0,0,0,0\n").unwrap();

    let out = dir.path().join("one");
    let o = run(&["rank-sweep", "--data", p(&y), "--dk-file", p(&zeros), "--r-grid", "1", "--m", p(&m), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let d: f64 = text.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(d <= 1e-6);

    let out = dir.path().join("full");
    let o = run(&["rank-sweep", "--data", p(&y), "--dk-file", p(&zeros), "--r-grid", "6", "--out", p(&out)]);
    assert!(o.status.success());
    let est = dir.path().join("est");
    let o = run(&["estimate", "--data", p(&y), "--dk-file", p(&zeros), "--rank", "fixed:6", "--out", p(&est)]);
    assert!(o.status.success());
    let mh = Matrix::from_rows(&read_csv(&est.join("m_hat.csv"))).unwrap();
    let gram = mh.matmul(&mh.transpose()).unwrap();
    assert!(latentspec::frobenius_norm(&gram.sub(&Matrix::identity(6)).unwrap()) < 1e-10);

    let o = run(&["rank-sweep", "--data", p(&y), "--dk-file", p(&zeros), "--r-grid", "7"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn csv_output_round_trips() {
    let dir = TempDir::new().unwrap();
    let vals = Matrix::from_rows(&[[0.1 + 0.2, 1.0 / 3.0, 2.0f64.sqrt()], [1e-300, -7.25, 6.02e23]]).unwrap();
    let y = DataMatrix::try_from(vals.clone()).unwrap();
    let data = dir.path().join("y.csv");
    write_csv(&data, y.matrix());
    let out = dir.path().join("o");
    let o = run(&["estimate", "--data", p(&data), "--family", "normal", "--rank", "fixed:3", "--out", p(&out)]);
    assert!(o.status.success());
    let eig = read_csv(&out.join("eigenvalues.csv"));
    let direct = latentspec::sym_eigen(
        &latentspec::adjusted_gram(&y, &latentspec::VarianceEstimate::known_unit(3)).unwrap(),
        1e-10,
    )
    .unwrap();
    for (row, v) in eig.iter().zip(&direct.values) {
        assert_eq!(row[0].to_bits(), v.to_bits());
    }
}
