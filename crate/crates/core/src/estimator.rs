//! Monte-Carlo aggregation of trajectories into effective-QFI curves.
//!
//! `Q_eff(t) = E[(Tr τ)²] + E[Q_cond]`: the classical Fisher information of
//! the record distribution plus the mean QFI of the conditional states.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{QfiCurve, QfiKind, TimeOptimum};
use crate::model::FrequencyModel;
use crate::qops::Ket;
use crate::trajectories::{Simulation, TrajectorySample, UnravelingSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveQfiEstimate {
    pub t: f64,
    /// Sample mean of `(Tr τ)²`.
    pub f_traj: f64,
    pub q_cond_mean: f64,
    pub q_eff: f64,
    pub stderr_f: f64,
    pub stderr_q: f64,
    /// Standard error of the per-trajectory sum `(Tr τ)² + Q_cond`.
    pub stderr_eff: f64,
    pub n_traj: usize,
}

/// Sum with a fixed binary tree over the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Sample mean and its standard error (`s / √n`, with the `n - 1` variance).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs `n_traj` trajectories in parallel. Row `i` holds trajectory `i`, so
/// the result does not depend on the thread count.
pub fn sample_trajectories(
    sim: &Simulation,
    t_grid: &[f64],
    n_traj: usize,
    seed: u64,
) -> Result<Vec<Vec<TrajectorySample>>> {
    sim.grid_steps(t_grid)?;
    (0..n_traj as u64).into_par_iter().map(|i| sim.run(t_grid, seed, i)).collect()
}

/// Per-grid-point estimates from per-trajectory samples.
pub fn aggregate(t_grid: &[f64], samples: &[Vec<TrajectorySample>]) -> Result<Vec<EffectiveQfiEstimate>> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 trajectories, got {}", samples.len())));
    }
    if let Some(row) = samples.iter().find(|r| r.len() != t_grid.len()) {
        return Err(Error::DimensionMismatch { expected: t_grid.len(), found: row.len() });
    }
    let n = samples.len();
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let f: Vec<f64> = samples.iter().map(|r| r[k].score * r[k].score).collect();
            let q: Vec<f64> = samples.iter().map(|r| r[k].q_cond).collect();
            let both: Vec<f64> = f.iter().zip(&q).map(|(a, b)| a + b).collect();
            let (f_traj, stderr_f) = mean_and_stderr(&f);
            let (q_cond_mean, stderr_q) = mean_and_stderr(&q);
            let (_, stderr_eff) = mean_and_stderr(&both);
            EffectiveQfiEstimate {
                t,
                f_traj,
                q_cond_mean,
                q_eff: f_traj + q_cond_mean,
                stderr_f,
                stderr_q,
                stderr_eff,
                n_traj: n,
            }
        })
        .collect())
}

pub fn effective_qfi(
    model: &FrequencyModel,
    spec: &UnravelingSpec,
    psi0: &Ket,
    t_grid: &[f64],
    n_traj: usize,
    seed: u64,
) -> Result<Vec<EffectiveQfiEstimate>> {
    effective_qfi_with(&Simulation::new(model, spec, psi0)?, t_grid, n_traj, seed)
}

/// As [`effective_qfi`] for an already configured simulation.
pub fn effective_qfi_with(
    sim: &Simulation,
    t_grid: &[f64],
    n_traj: usize,
    seed: u64,
) -> Result<Vec<EffectiveQfiEstimate>> {
    if n_traj < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 trajectories, got {n_traj}")));
    }
    aggregate(t_grid, &sample_trajectories(sim, t_grid, n_traj, seed)?)
}

pub fn effective_curve(estimates: &[EffectiveQfiEstimate]) -> QfiCurve {
    QfiCurve {
        times: estimates.iter().map(|e| e.t).collect(),
        values: estimates.iter().map(|e| e.q_eff).collect(),
        kind: QfiKind::Effective,
    }
}

/// Maximum of `Q(t)/t` over the grid points with `t > 0`, refined by a
/// parabola through the best point and its neighbours. A maximum on either
/// end of the grid (including a flat ratio) is returned unrefined and
/// flagged.
pub fn maximize_q_over_t(curve: &QfiCurve) -> Result<TimeOptimum> {
    if curve.times.len() != curve.values.len() {
        return Err(Error::DimensionMismatch { expected: curve.times.len(), found: curve.values.len() });
    }
    let pts: Vec<(f64, f64)> =
        curve.times.iter().zip(&curve.values).filter(|(t, _)| **t > 0.0).map(|(&t, &q)| (t, q / t)).collect();
    if pts.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 grid points with t > 0, got {}", pts.len())));
    }
    if pts.iter().any(|(_, r)| !r.is_finite()) {
        return Err(Error::InvalidParameter("curve contains non-finite values".into()));
    }
    let best = (0..pts.len()).fold(0, |b, i| if pts[i].1 > pts[b].1 { i } else { b });
    let last = pts.len() - 1;
    let (_, r_best) = pts[best];
    let flat = |i: usize| r_best <= pts[i].1 + 1e-12 * r_best.abs();
    if best == 0 || best == last || flat(0) || flat(last) {
        return Ok(TimeOptimum { t_opt: pts[best].0, q_over_t: r_best, at_boundary: true });
    }
    let (t0, r0) = pts[best - 1];
    let (t1, r1) = pts[best];
    let (t2, r2) = pts[best + 1];
    // Vertex of the interpolating parabola on a possibly uneven grid.
    let num = (t1 - t0).powi(2) * (r1 - r2) - (t1 - t2).powi(2) * (r1 - r0);
    let den = (t1 - t0) * (r1 - r2) - (t1 - t2) * (r1 - r0);
    if den == 0.0 {
        return Ok(TimeOptimum { t_opt: t1, q_over_t: r1, at_boundary: false });
    }
    let tv = (t1 - 0.5 * num / den).clamp(t0, t2);
    let lagrange = r0 * (tv - t1) * (tv - t2) / ((t0 - t1) * (t0 - t2))
        + r1 * (tv - t0) * (tv - t2) / ((t1 - t0) * (t1 - t2))
        + r2 * (tv - t0) * (tv - t1) / ((t2 - t0) * (t2 - t1));
    Ok(TimeOptimum { t_opt: tv, q_over_t: lagrange.max(r1), at_boundary: false })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub mean: f64,
    pub stderr: f64,
    pub batch_means: Vec<f64>,
    pub batch_stderrs: Vec<f64>,
    /// Largest `|m_a - m_b| / √(s_a² + s_b²)` over batch pairs; zero when
    /// the batches coincide.
    pub max_z: f64,
    pub consistent: bool,
}

/// Splits `values` into `n_batches` contiguous batches and checks that their
/// means agree within three combined standard errors.
pub fn convergence_report(values: &[f64], n_batches: usize) -> Result<ConvergenceReport> {
    if n_batches < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 batches, got {n_batches}")));
    }
    if values.len() < 2 * n_batches {
        return Err(Error::InvalidParameter(format!(
            "{} samples cannot fill {n_batches} batches of at least 2",
            values.len()
        )));
    }
    let size = values.len() / n_batches;
    let (batch_means, batch_stderrs): (Vec<f64>, Vec<f64>) = (0..n_batches)
        .map(|b| {
            let end = if b + 1 == n_batches { values.len() } else { (b + 1) * size };
            mean_and_stderr(&values[b * size..end])
        })
        .unzip();
    let mut max_z: f64 = 0.0;
    for a in 0..n_batches {
        for b in a + 1..n_batches {
            let diff = (batch_means[a] - batch_means[b]).abs();
            let se = batch_stderrs[a].hypot(batch_stderrs[b]);
            let z = if diff == 0.0 {
                0.0
            } else if se == 0.0 {
                f64::INFINITY
            } else {
                diff / se
            };
            max_z = max_z.max(z);
        }
    }
    let (mean, stderr) = mean_and_stderr(values);
    Ok(ConvergenceReport { mean, stderr, batch_means, batch_stderrs, max_z, consistent: max_z <= 3.0 })
}
