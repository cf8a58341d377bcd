use std::path::Path;
use std::process::{Command, Output};

use monqfi_cli::{Efficiency, Mode, ProbeState, RunConfig};
use monqfi_core::{NoiseAxis, UnravelingKind};
use proptest::prelude::*;

fn monqfi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monqfi")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn documented_invocation_runs() {
    let out = monqfi(&[
        "--model",
        "transverse",
        "--N",
        "5",
        "--omega",
        "1.0",
        "--kappa",
        "1.0",
        "--eta",
        "0.8",
        "--unraveling",
        "pd",
        "--tmax",
        "2.0",
        "--steps",
        "2000",
        "--ntraj",
        "10000",
        "--seed",
        "42",
        "--mode",
        "ultimate",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t,q_unc,q_ultimate,f_traj,q_cond_mean,q_eff,stderr_f,stderr_q,n_traj\n"));
    assert_eq!(rows(&text).len(), 101);
}

#[test]
fn parallel_ghz_ultimate_is_heisenberg_scaling() {
    let out = monqfi(&[
        "--model", "parallel", "--N", "5", "--mode", "ultimate", "--tmax", "2", "--steps", "40", "--stride", "4",
    ]);
    assert!(out.status.success());
    for row in rows(&String::from_utf8(out.stdout).unwrap()) {
        let t: f64 = row[0].parse().unwrap();
        let q: f64 = row[2].parse().unwrap();
        assert!((q - 25.0 * t * t).abs() <= 1e-12 * (1.0 + q), "t = {t}: {q}");
        assert!(row[1].is_empty() && row[5].is_empty());
    }
}

#[test]
fn efficiency_above_one_is_a_usage_error() {
    let out = monqfi(&["--eta", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta"));
    assert!(out.stdout.is_empty());
}

#[test]
fn exit_codes() {
    assert_eq!(monqfi(&["--help"]).status.code(), Some(0));
    assert_eq!(monqfi(&["--version"]).status.code(), Some(0));
    assert_eq!(monqfi(&["--bogus"]).status.code(), Some(1));
    assert_eq!(monqfi(&["--steps", "100", "--stride", "3"]).status.code(), Some(1));
    // Δt·κ = 0.1 trips the step guard.
    let guard = monqfi(&["--kappa", "10", "--tmax", "1", "--steps", "100", "--mode", "effective"]);
    assert_eq!(guard.status.code(), Some(2), "{}", String::from_utf8_lossy(&guard.stderr));
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let io = monqfi(&["--mode", "ultimate", "--out", path_str(&blocker.join("x.csv"))]);
    assert_eq!(io.status.code(), Some(3));
}

const SMALL_RUN: [&str; 14] = [
    "--model",
    "transverse",
    "--N",
    "2",
    "--eta",
    "0.6",
    "--unraveling",
    "hd",
    "--tmax",
    "0.5",
    "--steps",
    "250",
    "--ntraj",
    "200",
];

#[test]
fn reruns_and_replays_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let mut args = SMALL_RUN.to_vec();
    args.extend(["--seed", "7", "--out", path_str(&a), "--threads", "1"]);
    assert!(monqfi(&args).status.success());
    let mut args = SMALL_RUN.to_vec();
    args.extend(["--seed", "7", "--out", path_str(&b), "--threads", "3"]);
    assert!(monqfi(&args).status.success());
    let manifest = dir.path().join("a.manifest.json");
    assert!(monqfi(&["--replay", path_str(&manifest), "--out", path_str(&c)]).status.success());

    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, std::fs::read(&b).unwrap());
    assert_eq!(first, std::fs::read(&c).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(rows(&text).iter().skip(1).all(|r| r[8] == "200" && !r[5].is_empty()));

    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["unraveling"], "homodyne");
    assert!(m["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(m["version"].is_string());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"model": "parallel", "N": 4, "tmax": 1.0, "steps": 10, "mode": "ultimate"}"#).unwrap();
    let out = monqfi(&["--config", path_str(&cfg), "--N", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let last = rows(&String::from_utf8(out.stdout).unwrap()).pop().unwrap();
    assert_eq!(last[0].parse::<f64>().unwrap(), 1.0);
    assert!((last[2].parse::<f64>().unwrap() - 9.0).abs() < 1e-12);

    std::fs::write(&cfg, r#"{"N": 2, "eta": [0.9, 0.7], "mode": "effective", "ntraj": 20, "steps": 100}"#).unwrap();
    let dir_out = dir.path().join("eta.csv");
    assert!(monqfi(&["--config", path_str(&cfg), "--eta", "0.5", "--out", path_str(&dir_out)]).status.success());
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("eta.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["eta"], 0.5);
    assert_eq!(m["config"]["N"], 2);

    std::fs::write(&cfg, r#"{"N": 4, "temperature": 3}"#).unwrap();
    let bad = monqfi(&["--config", path_str(&cfg)]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("temperature"));
}

#[test]
fn plot_data_merges_runs_by_efficiency() {
    let dir = tempfile::tempdir().unwrap();
    let mut inputs = Vec::new();
    for eta in ["0.5", "1"] {
        let out = dir.path().join(format!("eta{eta}.csv"));
        let status = monqfi(&[
            "--N",
            "3",
            "--kappa",
            "1",
            "--eta",
            eta,
            "--tmax",
            "0.2",
            "--steps",
            "100",
            "--stride",
            "50",
            "--ntraj",
            "50",
            "--out",
            path_str(&out),
        ])
        .status;
        assert!(status.success());
        inputs.push(out);
    }
    let mut args = vec!["plot-data", "--format", "gnuplot"];
    args.extend(inputs.iter().map(|p| path_str(p)));
    let out = monqfi(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let headers: Vec<&str> = text.lines().filter(|l| l.starts_with('#')).collect();
    assert_eq!(headers.len(), 10);
    assert!(headers.contains(&"# source=eta0.5 N=3 eta=0.5 unraveling=pd quantity=q_eff"));
    assert!(headers.contains(&"# source=eta1 N=3 eta=1 unraveling=pd quantity=q_eff"));
    assert_eq!(text.split("\n\n\n").count(), 10);

    let mut args = vec!["plot-data"];
    args.extend(inputs.iter().map(|p| path_str(p)));
    let long = String::from_utf8(monqfi(&args).stdout).unwrap();
    assert!(long.starts_with("source,N,eta,unraveling,quantity,t,value,stderr\n"));
    assert_eq!(long.lines().count(), 1 + 2 * 5 * 3);
}

#[test]
fn transverse_homodyne_at_unit_efficiency_saturates_the_bound() {
    let out = monqfi(&[
        "--model",
        "transverse",
        "--N",
        "3",
        "--eta",
        "1",
        "--unraveling",
        "hd",
        "--mode",
        "all",
        "--tmax",
        "1",
        "--steps",
        "1000",
        "--stride",
        "100",
        "--ntraj",
        "4000",
        "--seed",
        "11",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for row in rows(&String::from_utf8(out.stdout).unwrap()).iter().skip(1) {
        let x = |i: usize| row[i].parse::<f64>().unwrap();
        let (q_ult, q_eff) = (x(2), x(5));
        // stderr_f + stderr_q bounds the standard error of their sum.
        let sigma = x(6) + x(7);
        assert!((q_eff - q_ult).abs() <= 3.0 * sigma, "t = {}: q_eff {q_eff} vs {q_ult} (σ {sigma})", row[0]);
        assert!(x(1) < q_ult);
    }
}

#[test]
fn plot_data_single_run_is_one_series() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one.csv");
    let args = [
        "--N",
        "2",
        "--eta",
        "0.7",
        "--unraveling",
        "hd",
        "--mode",
        "effective",
        "--tmax",
        "0.2",
        "--steps",
        "100",
        "--stride",
        "50",
        "--ntraj",
        "20",
        "--out",
        path_str(&csv),
    ];
    assert!(monqfi(&args).status.success());
    let long = String::from_utf8(monqfi(&["plot-data", path_str(&csv)]).stdout).unwrap();
    let keys: std::collections::BTreeSet<String> =
        long.lines().skip(1).map(|l| l.split(',').take(4).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(keys.into_iter().collect::<Vec<_>>(), vec!["one,2,0.7,hd".to_string()]);
    assert_eq!(long.lines().count(), 1 + 3 * 3);
}

#[test]
fn plot_data_rejects_missing_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("partial.csv");
    std::fs::write(&csv, "t,q_unc\n0.0,0.0\n").unwrap();
    let out = monqfi(&["plot-data", path_str(&csv)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing column q_ultimate"));
}

fn config() -> impl Strategy<Value = RunConfig> {
    let eta = prop_oneof![
        (0.0..=1.0f64).prop_map(Efficiency::Uniform),
        prop::collection::vec(0.0..=1.0f64, 1..5).prop_map(Efficiency::PerChannel),
    ];
    (
        (any::<bool>(), 1usize..40, -10.0..10.0f64, 0.0..5.0f64, eta, any::<bool>()),
        (1e-3..100.0f64, 1usize..100_000, 1usize..100, 2usize..1_000_000, any::<u64>()),
        (0usize..4, any::<bool>(), prop::option::of("[a-z]{1,8}\\.csv")),
    )
        .prop_map(|((par, n, omega, kappa, eta, hd), (tmax, steps, stride, ntraj, seed), (mode, ghz, out))| {
            RunConfig {
                model: if par { NoiseAxis::Parallel } else { NoiseAxis::Transverse },
                n,
                omega,
                kappa,
                eta,
                unraveling: if hd { UnravelingKind::Homodyne } else { UnravelingKind::Photodetection },
                tmax,
                steps,
                stride,
                ntraj,
                seed,
                mode: [Mode::Unconditional, Mode::Ultimate, Mode::Effective, Mode::All][mode],
                state: if ghz { ProbeState::Ghz } else { ProbeState::Coherent },
                out: out.map(Into::into),
                manifest: None,
            }
        })
}

proptest! {
    #[test]
    fn config_round_trips_through_json(cfg in config()) {
        let text = serde_json::to_string(&cfg).unwrap();
        prop_assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
