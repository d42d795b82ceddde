use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str], cache: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tropgamma"))
        .args(args)
        .env("TROPGAMMA_CACHE_DIR", cache)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn compare_defects_decrease() {
    let cache = tempfile::tempdir().unwrap();
    let p2 = data("p2-elliptic.json");
    let o = run(&["compare", "--datum", p2.to_str().unwrap(), "--t", "1e-3,1e-4,1e-5", "--format", "csv"], cache.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,lhs_re,lhs_im,rhs_re,rhs_im,defect"));
    let defects: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(defects.len(), 3);
    assert!(defects.windows(2).all(|w| w[1] < w[0]), "{defects:?}");
    let table = run(&["compare", "--datum", p2.to_str().unwrap()], cache.path());
    assert!(stdout(&table).contains("defect monotone: yes"));
}

#[test]
fn relations_block() {
    let cache = tempfile::tempdir().unwrap();
    let o = run(&["relations", "--weight", "4"], cache.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.trim_end().ends_with("= 0")).count(), 4);
    assert!(text.contains("zeta(4) + 4*I(1;0)^2 + 2*I(1;2) = 0"), "{text}");
}

#[test]
fn validation_errors_exit_2() {
    let cache = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let octahedral = dir.path().join("octahedral.json");
    let vs: Vec<String> = (0..8)
        .map(|i| format!("[{},{},{}]", 1 - 2 * (i & 1), 1 - 2 * ((i >> 1) & 1), 1 - 2 * ((i >> 2) & 1)))
        .collect();
    std::fs::write(&octahedral, format!("{{\"vectors\": [{}], \"weights\": [1,1,1,1,1,1,1,1]}}", vs.join(","))).unwrap();
    let o = run(&["compare", "--datum", octahedral.to_str().unwrap()], cache.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not simplicial at vertex ("), "{}", stderr(&o));

    let floats = dir.path().join("floats.json");
    std::fs::write(&floats, r#"{"vectors": [[1,0],[0,1],[-1,-1]], "weights": [1, 0.5, 1]}"#).unwrap();
    let o = run(&["chern", "--datum", floats.to_str().unwrap()], cache.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("weights[1]"));

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\n \"vectors\": [[1,0],\n}").unwrap();
    let o = run(&["chern", "--datum", broken.to_str().unwrap()], cache.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let p2 = data("p2-elliptic.json");
    let o = run(&["period", "--datum", p2.to_str().unwrap(), "--t", "0.5"], cache.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_3() {
    let cache = tempfile::tempdir().unwrap();
    let p2 = data("p2-elliptic.json");
    let o = run(&["period", "--datum", p2.to_str().unwrap(), "--max-evals", "40"], cache.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn reports_are_reproducible_and_cache_blind() {
    let cache = tempfile::tempdir().unwrap();
    let q = data("quartic-k3.json");
    let args = ["period", "--datum", q.to_str().unwrap(), "--t", "1e-2", "--format", "json"];
    let cold = run(&args, cache.path());
    let warm = run(&args, cache.path());
    assert_eq!(cold.status.code(), Some(0));
    assert!(stderr(&cold).contains("miss") && stderr(&warm).contains("hit"));
    assert_eq!(cold.stdout, warm.stdout);
    let v: serde_json::Value = serde_json::from_slice(&cold.stdout).unwrap();
    assert_eq!(v["command"], "period");
    assert_eq!(v["config"]["epsilon"], 0.3);
    assert_eq!(v["result"]["per_piece"].as_object().unwrap().len(), 28);
    assert!(v["result"]["value"][0].as_f64().unwrap() > 0.0);
}

#[test]
fn line_bundle_datum() {
    let cache = tempfile::tempdir().unwrap();
    let d = data("p2-elliptic-theta.json");
    let o = run(&["period", "--datum", d.to_str().unwrap(), "--t", "1e-4", "--format", "json"], cache.path());
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let re = v["result"]["value"][0].as_f64().unwrap();
    let im = v["result"]["value"][1].as_f64().unwrap();
    assert!((re - 9.0 * 1e4f64.ln()).abs() < 1e-6);
    assert!((im + 6.0 * std::f64::consts::PI).abs() < 1e-6);
}

#[test]
fn chern_and_amoeba() {
    let cache = tempfile::tempdir().unwrap();
    let q = data("quintic.json");
    let o = run(&["chern", "--datum", q.to_str().unwrap(), "--format", "json"], cache.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["euler"], "-200");
    let o = run(&["amoeba", "--collision", "conifold:2", "--format", "json"], cache.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let want = -std::f64::consts::PI.powi(2) / 3.0;
    assert!((v["result"]["collision"]["value"].as_f64().unwrap() - want).abs() < 1e-6);
    let o = run(&["amoeba", "--rect", "-8,16,-8,8", "--format", "json"], cache.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["result"]["defect"]["constant_given_length"].as_f64().unwrap() - 1.2020569).abs() < 1e-3);
    let o = run(&["amoeba"], cache.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn every_bundled_datum_validates() {
    let cache = tempfile::tempdir().unwrap();
    for name in ["p2-elliptic", "p2-elliptic-theta", "quartic-k3", "quintic", "p1xp1-k3-slice"] {
        let o = run(&["chern", "--datum", data(&format!("{name}.json")).to_str().unwrap()], cache.path());
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
    }
}
