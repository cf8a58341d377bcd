//! One scan: QFI curves on the output grid, written as CSV plus a JSON
//! manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use monqfi_core::estimator::effective_qfi_with;
use monqfi_core::lindblad::{
    ultimate_qfi, ultimate_qfi_parallel, ultimate_qfi_transverse_closed_form, unconditional_qfi_curve,
};
use monqfi_core::{Ket, NoiseAxis, Simulation, C64};
use serde::{Deserialize, Serialize};

use crate::config::{ProbeState, RunConfig};
use crate::error::CliError;

pub const COLUMNS: [&str; 9] =
    ["t", "q_unc", "q_ultimate", "f_traj", "q_cond_mean", "q_eff", "stderr_f", "stderr_q", "n_traj"];

/// One CSV row; `None` fields belong to modes that were not requested.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Row {
    pub t: f64,
    pub q_unc: Option<f64>,
    pub q_ultimate: Option<f64>,
    pub f_traj: Option<f64>,
    pub q_cond_mean: Option<f64>,
    pub q_eff: Option<f64>,
    pub stderr_f: Option<f64>,
    pub stderr_q: Option<f64>,
    pub n_traj: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub seed: u64,
    pub threads: usize,
    pub rows: usize,
    pub wall_time_seconds: f64,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Parallel-noise GHZ: `N²t² e^{-2Nκt}`, the dephased coherence carrying phase `Nωt`.
fn ghz_parallel_unconditional(n: usize, kappa: f64, t: f64) -> f64 {
    let nf = n as f64;
    nf * nf * t * t * (-2.0 * nf * kappa * t).exp()
}

pub fn compute(cfg: &RunConfig) -> Result<Vec<Row>, CliError> {
    cfg.validate()?;
    let grid = cfg.grid();
    let model = cfg.frequency_model()?;
    let parallel_ghz = cfg.model == NoiseAxis::Parallel && cfg.state == ProbeState::Ghz;
    let mut rows: Vec<Row> = grid.iter().map(|&t| Row { t, ..Row::default() }).collect();

    if cfg.mode.unconditional() {
        let values = if parallel_ghz {
            grid.iter().map(|&t| ghz_parallel_unconditional(cfg.n, cfg.kappa, t)).collect()
        } else {
            unconditional_qfi_curve(&model, &cfg.probe().projector(), &grid)?.values
        };
        for (row, q) in rows.iter_mut().zip(values) {
            row.q_unc = Some(q);
        }
    }

    if cfg.mode.ultimate() {
        for row in &mut rows {
            let t = row.t;
            let q = match (cfg.model, cfg.state) {
                (NoiseAxis::Parallel, ProbeState::Ghz) => (cfg.n * cfg.n) as f64 * t * t,
                (NoiseAxis::Parallel, ProbeState::Coherent) => ultimate_qfi_parallel(&model, &cfg.probe(), t)?,
                (NoiseAxis::Transverse, ProbeState::Ghz) => ultimate_qfi_transverse_closed_form(cfg.n, cfg.kappa, t),
                (NoiseAxis::Transverse, ProbeState::Coherent) => ultimate_qfi(&model, &cfg.probe().projector(), t)?,
            };
            row.q_ultimate = Some(q);
        }
    }

    if cfg.mode.effective() {
        let spec = cfg.unraveling_spec()?;
        spec.validate(&model)?;
        let sim = if parallel_ghz && cfg.n > monqfi_core::model::MAX_QUBITS {
            let amp = C64::new(0.5f64.sqrt(), 0.0);
            Simulation::ghz_parallel(&model, &spec, &Ket::from_vec(vec![amp, amp]))?
        } else {
            Simulation::new(&model, &spec, &cfg.probe())?
        };
        let estimates = effective_qfi_with(&sim, &grid, cfg.ntraj, cfg.seed)?;
        for (row, e) in rows.iter_mut().zip(estimates) {
            row.f_traj = Some(e.f_traj);
            row.q_cond_mean = Some(e.q_cond_mean);
            row.q_eff = Some(e.q_eff);
            row.stderr_f = Some(e.stderr_f);
            row.stderr_q = Some(e.stderr_q);
            row.n_traj = Some(e.n_traj);
        }
    }
    Ok(rows)
}

fn field(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

pub fn write_csv<W: Write>(out: W, rows: &[Row]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record([
            format!("{:.16e}", r.t),
            field(r.q_unc),
            field(r.q_ultimate),
            field(r.f_traj),
            field(r.q_cond_mean),
            field(r.q_eff),
            field(r.stderr_f),
            field(r.stderr_q),
            r.n_traj.map(|n| n.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Runs the scan and writes the CSV (stdout when `out` is unset) and the
/// manifest. Returns the manifest path, if one was written.
pub fn execute(cfg: &RunConfig) -> Result<Option<PathBuf>, CliError> {
    let start = Instant::now();
    let rows = compute(cfg)?;
    let wall = start.elapsed().as_secs_f64();

    let mut csv_bytes = Vec::new();
    write_csv(&mut csv_bytes, &rows).map_err(|e| CliError::Io(e.to_string()))?;
    match &cfg.out {
        Some(path) => write_file(path, &csv_bytes)?,
        None => std::io::stdout().write_all(&csv_bytes).map_err(|e| CliError::Io(format!("stdout: {e}")))?,
    }

    let Some(path) = cfg.manifest_path() else { return Ok(None) };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        rows: rows.len(),
        wall_time_seconds: wall,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&path, text.as_bytes())?;
    Ok(Some(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Efficiency, Mode, PartialConfig};
    use monqfi_core::UnravelingKind;

    fn base() -> RunConfig {
        PartialConfig {
            n: Some(3),
            tmax: Some(0.5),
            steps: Some(100),
            stride: Some(25),
            ntraj: Some(64),
            ..Default::default()
        }
        .resolve()
        .unwrap()
    }

    #[test]
    fn ghz_unconditional_closed_form_matches_master_equation() {
        let cfg = RunConfig { mode: Mode::Unconditional, kappa: 0.7, ..base() };
        let model = cfg.frequency_model().unwrap();
        let dense = unconditional_qfi_curve(&model, &cfg.probe().projector(), &cfg.grid()).unwrap();
        for row in compute(&cfg).unwrap() {
            let i = dense.times.iter().position(|&t| t == row.t).unwrap();
            let q = row.q_unc.unwrap();
            assert!((q - dense.values[i]).abs() < 1e-8 * (1.0 + q), "t = {}: {q} vs {}", row.t, dense.values[i]);
        }
    }

    #[test]
    fn ghz_ultimate_matches_dense_routes() {
        for axis in [NoiseAxis::Parallel, NoiseAxis::Transverse] {
            let cfg = RunConfig { mode: Mode::Ultimate, model: axis, ..base() };
            let model = cfg.frequency_model().unwrap();
            for row in compute(&cfg).unwrap() {
                let dense = match axis {
                    NoiseAxis::Parallel => ultimate_qfi_parallel(&model, &cfg.probe(), row.t).unwrap(),
                    NoiseAxis::Transverse => ultimate_qfi(&model, &cfg.probe().projector(), row.t).unwrap(),
                };
                let q = row.q_ultimate.unwrap();
                assert!((q - dense).abs() < 1e-6 * (1.0 + dense), "{axis:?} t = {}: {q} vs {dense}", row.t);
            }
        }
    }

    #[test]
    fn unrequested_columns_stay_empty() {
        let cfg = RunConfig { mode: Mode::Ultimate, ..base() };
        let mut buf = Vec::new();
        write_csv(&mut buf, &compute(&cfg).unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
        let second = lines.nth(1).unwrap();
        assert!(second.starts_with("1.2500000000000000e-1,,"), "{second}");
        assert!(second.ends_with(",,,,,,"), "{second}");
    }

    #[test]
    fn large_ghz_register_runs_without_dense_storage() {
        let cfg = RunConfig {
            n: 40,
            kappa: 0.1,
            tmax: 0.2,
            steps: 200,
            stride: 50,
            ntraj: 16,
            eta: Efficiency::Uniform(0.9),
            unraveling: UnravelingKind::Photodetection,
            ..base()
        };
        let rows = compute(&cfg).unwrap();
        let last = rows.last().unwrap();
        assert!(last.q_eff.unwrap() > 0.0);
        assert!(last.q_eff.unwrap() <= last.q_ultimate.unwrap() * (1.0 + 1e-9));
    }
}
