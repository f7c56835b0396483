use std::process::Command;

use star_isac::driver::{optimize, Scheme};
use star_isac::scenario::Scenario;
use star_isac_cli::*;

fn spec(param: SweepParam, values: &str, seeds: &str, schemes: &[Scheme], out: &std::path::Path) -> SweepSpec {
    SweepSpec {
        base: Scenario::desk(),
        param,
        values: parse_values(param, values).unwrap(),
        seeds: parse_list(seeds, "seed").unwrap(),
        schemes: schemes.to_vec(),
        out: out.to_path_buf(),
    }
}

fn read_rows(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn empty_lists_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(SweepParam::PMax, "1", "1", &[Scheme::StarRsma], dir.path());
    s.seeds.clear();
    assert!(matches!(s.points(), Err(CliError::Validation(_))));
    let mut s = spec(SweepParam::PMax, "1", "1", &[Scheme::StarRsma], dir.path());
    s.values.clear();
    assert!(matches!(s.validate(), Err(CliError::Validation(_))));
    assert!("watts".parse::<SweepParam>().is_err());
    assert!(parse_values(SweepParam::Elements, "8,x").is_err());
}

#[test]
fn single_point_matches_direct_call() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(SweepParam::PMax, "2", "3", &[Scheme::StarRsma], dir.path());
    let out = run_sweep(&s).unwrap();
    let direct = optimize(&Scenario { seed: 3, p_max_watts: 2.0, ..Scenario::desk() }, Scheme::StarRsma).unwrap();
    let r = out[0].result.as_ref().unwrap();
    assert_eq!(r.gamma.to_bits(), direct.gamma.to_bits());
    assert_eq!(r.omega_trace, direct.omega_trace);
    assert!(out[0].audited);
    let (header, rows) = read_rows(&dir.path().join("results.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    assert_eq!(rows[0][col("gamma_bs")].parse::<f64>().unwrap().to_bits(), direct.gamma.to_bits());
    assert_eq!(rows[0][col("feasible")], "true");
}

#[test]
fn rows_follow_scheme_value_seed_order_and_repeat_exactly() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(SweepParam::RateThreshold, "3,1", "2,1", &[Scheme::StarSdma, Scheme::StarRsma], dir.path());
        run_sweep(&s).unwrap();
        let (header, rows) = read_rows(&dir.path().join("results.csv"));
        let traces = std::fs::read_dir(dir.path().join("traces")).unwrap().count();
        let surfaces = read_rows(&dir.path().join("surfaces.csv")).1.len();
        (header, rows, traces, surfaces)
    };
    let (header, rows, traces, surfaces) = run();
    assert_eq!(
        &header[..10],
        ["scheme", "seed", "P_max", "M", "K", "R_th", "outer_iters", "gamma_bs", "gamma_bs_db", "sum_c"]
    );
    assert_eq!(&header[10..], ["rate_1", "rate_2", "trace_W0", "feasible", "wall_ms"]);
    let keys: Vec<(String, String, String)> = rows.iter().map(|r| (r[0].clone(), r[5].clone(), r[1].clone())).collect();
    let want: Vec<(String, String, String)> = [
        ("star_sdma", "3", "2"),
        ("star_sdma", "3", "1"),
        ("star_sdma", "1", "2"),
        ("star_sdma", "1", "1"),
        ("star_rsma", "3", "2"),
        ("star_rsma", "3", "1"),
        ("star_rsma", "1", "2"),
        ("star_rsma", "1", "1"),
    ]
    .iter()
    .map(|(a, b, c)| (a.to_string(), b.to_string(), c.to_string()))
    .collect();
    assert_eq!(keys, want);
    assert_eq!(traces, 8);
    assert_eq!(surfaces, 8 * Scenario::desk().num_elements);
    let strip = |rows: &[Vec<String>]| rows.iter().map(|r| r[..r.len() - 1].to_vec()).collect::<Vec<_>>();
    let (_, again, _, _) = run();
    assert_eq!(strip(&rows), strip(&again));
}

#[test]
fn power_sweep_is_monotone_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(SweepParam::PMax, "1,2,5,10", "1,2", &[Scheme::StarRsma], dir.path());
    let out = run_sweep(&s).unwrap();
    for seed in [1, 2] {
        let g: Vec<f64> = out
            .iter()
            .filter(|o| o.point.scenario.seed == seed)
            .map(|o| o.result.as_ref().unwrap().gamma)
            .collect();
        assert_eq!(g.len(), 4);
        assert!(g.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-6)), "seed {seed}: {g:?}");
    }
}

#[test]
fn scheme_sweep_uses_values_as_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(SweepParam::Scheme, "no_ris_rsma,random-ris-rsma", "1", &[], dir.path());
    let pts = s.points().unwrap();
    assert_eq!(pts.iter().map(|p| p.scheme).collect::<Vec<_>>(), [Scheme::NoRisRsma, Scheme::RandomRisRsma]);
}

#[test]
fn broken_config_reports_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "num_antennas = 4\nnum_elements = \"eight\"\n").unwrap();
    let err = Scenario::from_file(&path).unwrap_err().to_string();
    assert!(err.contains("bad.toml") && err.contains("line 2"), "{err}");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_star-isac");
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(bin)
        .args(["run", "--sweep", "p_max", "--values", "1", "--seeds", "", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!status.status.success());
    let out = Command::new(bin).arg("selftest").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().filter(|l| l.starts_with("PASS")).count(), 5);
    let cfg = dir.path().join("desk.toml");
    std::fs::write(&cfg, Scenario::desk().to_toml_string()).unwrap();
    let out = Command::new(bin).args(["solve", "--scheme", "star_sdma", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["scheme"], "star_sdma");
    let status = Command::new(bin)
        .args(["run", "--sweep", "m", "--values", "7", "--seeds", "1", "--schemes", "traditional_ris_rsma", "--out"])
        .arg(dir.path().join("odd"))
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("1 of the sweep runs failed"));
}
