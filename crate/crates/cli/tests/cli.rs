use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn iwalk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iwalk"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("IWALK_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn geometric_env_has_identical_sites_and_diagnostics() {
    let tmp = TempDir::new().unwrap();
    let out = iwalk(tmp.path(), &["env", "--family", "geometric", "--r", "0.5", "--xmax", "100"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let env: serde_json::Value = serde_json::from_str(&read(tmp.path(), "env.json")).unwrap();
    let sites = env["sites"].as_array().unwrap();
    assert_eq!(sites.len(), 100);
    assert!(sites.iter().all(|s| s == &sites[0]));
    let diag = read(tmp.path(), "diagnostics.csv");
    let mut lines = diag.lines();
    assert_eq!(lines.next(), Some("x,A,A_prime,K,m,s2,mu,sigma2"));
    assert_eq!(lines.next(), Some("0,4,20.25,1,2,2,0,0"));
    assert_eq!(diag.lines().count(), 101);
    // μ_x = 2x, so M_n = ⌈n/2⌉.
    assert!(read(tmp.path(), "mn.csv").lines().any(|l| l == "7,4"));
}

#[test]
fn lsv_env_solves_for_kappa() {
    let tmp = TempDir::new().unwrap();
    let out = iwalk(tmp.path(), &["env", "--family", "lsv", "--alpha", "0.33", "--c", "0.5", "--xmax", "50"]);
    assert_eq!(code(&out), 0);
    let env: serde_json::Value = serde_json::from_str(&read(tmp.path(), "env.json")).unwrap();
    let kappa = env["model"]["kappa"].as_f64().unwrap();
    assert!((kappa - 1.2570133745218284).abs() < 1e-12, "{kappa}");
}

#[test]
fn random_env_is_reproducible_from_the_seed() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        assert_eq!(code(&iwalk(dir.path(), &["env", "--random", "iid-powerlaw", "--seed", "7"])), 0);
    }
    for name in ["env.json", "diagnostics.csv", "mn.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let c = TempDir::new().unwrap();
    assert_eq!(code(&iwalk(c.path(), &["env", "--random", "iid-powerlaw", "--seed", "8"])), 0);
    assert_ne!(read(a.path(), "env.json"), read(c.path(), "env.json"));
}

#[test]
fn env_file_round_trip_reproduces_diagnostics() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert_eq!(code(&iwalk(a.path(), &["env", "--random", "iid-lsv", "--seed", "3", "--xmax", "40"])), 0);
    let file = a.path().join("env.json");
    assert_eq!(code(&iwalk(b.path(), &["env", "--env-file", file.to_str().unwrap()])), 0);
    assert_eq!(read(a.path(), "diagnostics.csv"), read(b.path(), "diagnostics.csv"));
    assert_eq!(read(a.path(), "env.json"), read(b.path(), "env.json"));
}

#[test]
fn exact_at_time_zero_is_a_point_mass() {
    let tmp = TempDir::new().unwrap();
    let out = iwalk(tmp.path(), &["exact", "--family", "power-law", "--beta", "3", "--xmax", "10", "--n", "0"]);
    assert_eq!(code(&out), 0);
    assert_eq!(read(tmp.path(), "exact_n0.csv"), "x,prob,deficit_bound\n0,1,0\n");
}

#[test]
fn exact_laws_sum_to_one() {
    let tmp = TempDir::new().unwrap();
    let out = iwalk(
        tmp.path(),
        &["exact", "--family", "geometric", "--r", "0.5", "--xmax", "60", "--n", "5,40", "--hitting", "3"],
    );
    assert_eq!(code(&out), 0);
    for name in ["exact_n5.csv", "exact_n40.csv"] {
        let total: f64 =
            read(tmp.path(), name).lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12, "{name}: {total}");
    }
    // T_3 ≥ 3 and P(T_3 = 3) = (1/2)^3.
    assert!(read(tmp.path(), "hitting_x3.csv").lines().nth(1).unwrap() == "3,0.125");
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let tmp = TempDir::new().unwrap();
    let args = ["env", "--family", "geometric", "--r", "0.5", "--xmax", "10"];
    assert_eq!(code(&iwalk(tmp.path(), &args)), 0);
    fs::write(tmp.path().join("mn.csv"), "sentinel").unwrap();
    let out = iwalk(tmp.path(), &args);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    assert_eq!(read(tmp.path(), "mn.csv"), "sentinel");
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&iwalk(tmp.path(), &forced)), 0);
    assert_ne!(read(tmp.path(), "mn.csv"), "sentinel");
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    // Validation.
    assert_eq!(code(&iwalk(p, &["env", "--family", "geometric", "--r", "1.5"])), 2);
    assert_eq!(code(&iwalk(p, &["env", "--random", "iid-powerlaw"])), 2);
    assert_eq!(code(&iwalk(p, &["mc", "--family", "geometric", "--r", "0.5", "--paths", "2", "--horizon", "3"])), 2);
    assert_eq!(
        code(&iwalk(p, &["clt", "--family", "power-law", "--beta", "1.5", "--xmax", "200", "--n-grid", "50"])),
        2
    );
    // Numeric budget, with a remediation hint.
    let out = iwalk(p, &["exact", "--family", "power-law", "--beta", "1.5", "--xmax", "3000", "--n", "2000"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("N_cap"));
    // I/O.
    assert_eq!(code(&iwalk(p, &["exact", "--env-file", "/nonexistent/env.json", "--n", "1"])), 4);
    assert!(fs::read_dir(p).unwrap().next().is_none());
}

#[test]
fn output_directory_defaults_to_the_environment_variable() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_iwalk"))
        .args(["env", "--family", "geometric", "--r", "0.5", "--xmax", "5"])
        .env("IWALK_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(tmp.path().join("env.json").exists());
}

#[test]
fn monte_carlo_outputs_depend_only_on_the_seed() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = [
        "mc",
        "--family",
        "geometric",
        "--r",
        "0.5",
        "--xmax",
        "30",
        "--paths",
        "20",
        "--horizon",
        "25",
        "--record",
        "full-path",
        "--sampler",
        "full-chain",
        "--seed",
        "5",
    ];
    for dir in [&a, &b] {
        assert_eq!(code(&iwalk(dir.path(), &args)), 0);
    }
    for name in ["mc_endpoints.csv", "mc_paths.csv", "mc_summary.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let paths = read(a.path(), "mc_paths.csv");
    assert_eq!(paths.lines().next(), Some("path,n,x,y"));
    assert_eq!(paths.lines().count(), 1 + 20 * 26);
}

#[test]
fn dynsys_matches_the_exact_law() {
    let tmp = TempDir::new().unwrap();
    let out = iwalk(
        tmp.path(),
        &[
            "dynsys",
            "--family",
            "geometric",
            "--r",
            "0.5",
            "--xmax",
            "80",
            "--paths",
            "100000",
            "--n",
            "50",
            "--seed",
            "9",
        ],
    );
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_str(&read(tmp.path(), "dynsys_summary.json")).unwrap();
    assert!(summary["tv"].as_f64().unwrap() <= summary["tolerance"].as_f64().unwrap());
    assert_eq!(summary["flagged"], 0);
    assert_eq!(read(tmp.path(), "dynsys_levels.csv").lines().next(), Some("n,x,y,count,paths"));
    assert_eq!(read(tmp.path(), "dynsys_cells.csv").lines().next(), Some("n,x,count,paths"));
}

#[test]
fn llt_grid_errors_decrease() {
    let tmp = TempDir::new().unwrap();
    let out = iwalk(
        tmp.path(),
        &["llt", "--family", "geometric", "--r", "0.5", "--xmax", "4700", "--n-grid", "500,2000,8000"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let errs: Vec<f64> = read(tmp.path(), "llt_summary.csv")
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(errs.len(), 3);
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    let report: serde_json::Value = serde_json::from_str(&read(tmp.path(), "llt_n500.json")).unwrap();
    let row = &report["rows"][250];
    for key in ["x", "exact", "pred_lo", "pred_hi", "E1", "E2", "E3"] {
        assert!(!row[key].is_null(), "{key}");
    }
}

#[test]
fn clt_and_slln_reports() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path();
    let out = iwalk(
        p,
        &[
            "clt",
            "--family",
            "geometric",
            "--r",
            "0.5",
            "--xmax",
            "700",
            "--n-grid",
            "250,1000",
            "--x-grid",
            "50,200",
            "--strict",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let clt: serde_json::Value = serde_json::from_str(&read(p, "clt.json")).unwrap();
    let d: Vec<f64> = clt["positions"].as_array().unwrap().iter().map(|r| r["distance"].as_f64().unwrap()).collect();
    assert!(d[1] < d[0]);
    assert_eq!(clt["hitting_times"].as_array().unwrap().len(), 2);

    let out = iwalk(
        p,
        &[
            "slln",
            "--family",
            "geometric",
            "--r",
            "0.5",
            "--xmax",
            "5001",
            "--paths",
            "50",
            "--horizon",
            "5000",
            "--seed",
            "4",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let slln: serde_json::Value = serde_json::from_str(&read(p, "slln.json")).unwrap();
    let mu = slln["mu"].as_f64().unwrap();
    assert!((mu - 2.0).abs() < 1e-9, "fitted μ = {mu}");
    assert_eq!(slln["times"].as_array().unwrap().len(), 20);
}
