//! Unconditional Lindblad dynamics with its frequency derivative, and the
//! ultimate QFI from the two-frequency generalized master equation.

mod generalized;

pub use generalized::{
    gme_qubit_trace_row, transverse_optimal_time, ultimate_qfi, ultimate_qfi_numeric, ultimate_qfi_parallel,
    ultimate_qfi_transverse_closed_form, ultimate_qfi_transverse_ghz, vectorized_generator, GeneralizedState,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrequencyModel, Register};
use crate::qops::{hermitian_eig, qfi_mixed, ComplexMatrix, LocalOp, C64, I, ONE};

/// RK4 step bound: `‖L‖·h` never exceeds this.
pub const RK4_NORM_STEP: f64 = 0.02;

/// Largest accepted drift of `Tr ρ` away from one.
pub const TRACE_DRIFT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QfiKind {
    Unconditional,
    Ultimate,
    Effective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfiCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: QfiKind,
}

impl QfiCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>, kind: QfiKind) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), found: values.len() });
        }
        Ok(Self { times, values, kind })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Maximum of `Q(t)/t`, possibly flagged as lying on the edge of the search
/// range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeOptimum {
    pub t_opt: f64,
    pub q_over_t: f64,
    pub at_boundary: bool,
}

pub(crate) fn check_time_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("time grid is empty".into()));
    }
    if t_grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidParameter("time grid must be finite and non-negative".into()));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("time grid must be ascending".into()));
    }
    Ok(())
}

/// Checks that `rho` is a density operator on the model's register.
pub fn check_density(model: &FrequencyModel, rho: &ComplexMatrix) -> Result<()> {
    model.check_dense()?;
    if rho.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: rho.dim() });
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(Error::InvalidState(format!("initial state has trace {tr}")));
    }
    let eig = hermitian_eig(rho)?;
    if eig.eigenvalues[0] < -1e-10 {
        return Err(Error::InvalidState(format!("initial state has negative eigenvalue {:.3e}", eig.eigenvalues[0])));
    }
    Ok(())
}

/// The Lindbladian of a register, split into local pieces so that it can be
/// applied without ever forming `2^N`-dimensional operators.
pub(crate) struct LocalLindbladian {
    /// `-i(h - (i/2) c†c)` per qubit.
    drift: Vec<LocalOp>,
    /// `-i g` per qubit.
    gen: Vec<LocalOp>,
    /// `c` per qubit; kept at half weight because the output is symmetrized.
    jumps: Vec<LocalOp>,
    norm_bound: f64,
}

impl LocalLindbladian {
    pub(crate) fn new(reg: &Register) -> Self {
        let n = reg.n_qubits;
        let k = (reg.h - reg.qubit_decay() * C64::new(0.0, 0.5)) * (-I);
        let mg = reg.g * (-I);
        let half_c = reg.collapse * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let h_norm = op_norm_bound(&reg.h);
        let c_norm = op_norm_bound(&reg.collapse);
        Self {
            drift: (0..n).map(|j| LocalOp::new(k, j, n)).collect(),
            gen: (0..n).map(|j| LocalOp::new(mg, j, n)).collect(),
            jumps: (0..n).map(|j| LocalOp::new(half_c, j, n)).collect(),
            norm_bound: n as f64 * (2.0 * h_norm + 2.0 * c_norm * c_norm),
        }
    }

    /// `L x` for Hermitian `x`, written as `A + A†` with
    /// `A = -i K x + (1/2) Σ c x c†`.
    pub(crate) fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let d = x.dim();
        let mut a = ComplexMatrix::zeros(d);
        for k in &self.drift {
            accumulate_left(k, x, &mut a);
        }
        for c in &self.jumps {
            a.axpy(ONE, &c.sandwich(x));
        }
        hermitian_part_doubled(a)
    }

    /// `(∂ω L) x = -i[G, x]` for Hermitian `x`.
    pub(crate) fn apply_derivative(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut a = ComplexMatrix::zeros(x.dim());
        for g in &self.gen {
            accumulate_left(g, x, &mut a);
        }
        hermitian_part_doubled(a)
    }

    pub(crate) fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
}

/// Crude bound on the spectral radius of `X -> op X - X op†` style maps.
fn op_norm_bound(op: &crate::qops::Op2) -> f64 {
    op.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn accumulate_left(op: &LocalOp, x: &ComplexMatrix, out: &mut ComplexMatrix) {
    let d = x.dim();
    let src = x.as_slice();
    let dst = out.as_mut_slice();
    for (sc, dc) in src.chunks_exact(d).zip(dst.chunks_exact_mut(d)) {
        op.accumulate(sc, ONE, dc);
    }
}

fn hermitian_part_doubled(a: ComplexMatrix) -> ComplexMatrix {
    let mut out = a.adjoint();
    out.axpy(ONE, &a);
    out
}

/// Fixed-step RK4 integrator for the pair `(ρ, ∂ωρ)`.
pub(crate) struct JointRk4 {
    lind: LocalLindbladian,
}

impl JointRk4 {
    pub(crate) fn new(reg: &Register) -> Self {
        Self { lind: LocalLindbladian::new(reg) }
    }

    fn rhs(&self, rho: &ComplexMatrix, drho: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
        let k_rho = self.lind.apply(rho);
        let mut k_d = self.lind.apply(drho);
        k_d.axpy(ONE, &self.lind.apply_derivative(rho));
        (k_rho, k_d)
    }

    fn step(&self, rho: &mut ComplexMatrix, drho: &mut ComplexMatrix, h: f64) {
        let shifted = |x: &ComplexMatrix, k: &ComplexMatrix, s: f64| {
            let mut y = x.clone();
            y.axpy(C64::new(s, 0.0), k);
            y
        };
        let (k1r, k1d) = self.rhs(rho, drho);
        let (k2r, k2d) = self.rhs(&shifted(rho, &k1r, h / 2.0), &shifted(drho, &k1d, h / 2.0));
        let (k3r, k3d) = self.rhs(&shifted(rho, &k2r, h / 2.0), &shifted(drho, &k2d, h / 2.0));
        let (k4r, k4d) = self.rhs(&shifted(rho, &k3r, h), &shifted(drho, &k3d, h));
        for (x, ks) in [(&mut *rho, [k1r, k2r, k3r, k4r]), (&mut *drho, [k1d, k2d, k3d, k4d])] {
            for (k, w) in ks.iter().zip([1.0, 2.0, 2.0, 1.0]) {
                x.axpy(C64::new(h * w / 6.0, 0.0), k);
            }
            x.symmetrize();
        }
    }

    /// Advances by `span` using equal substeps that respect [`RK4_NORM_STEP`].
    pub(crate) fn advance(&self, rho: &mut ComplexMatrix, drho: &mut ComplexMatrix, span: f64) -> Result<()> {
        if span <= 0.0 {
            return Ok(());
        }
        let n_sub = ((span * self.lind.norm_bound() / RK4_NORM_STEP).ceil() as usize).max(1);
        let h = span / n_sub as f64;
        for _ in 0..n_sub {
            self.step(rho, drho, h);
        }
        let drift = (rho.trace().re - 1.0).abs();
        if drift > TRACE_DRIFT_TOL {
            return Err(Error::NumericalGuard(format!("trace drifted by {drift:.3e} during propagation")));
        }
        Ok(())
    }
}

/// `(ρ(t), ∂ωρ(t))` at each grid time.
pub fn propagate_with_derivative(
    model: &FrequencyModel,
    rho0: &ComplexMatrix,
    t_grid: &[f64],
) -> Result<Vec<(ComplexMatrix, ComplexMatrix)>> {
    model.validate()?;
    check_density(model, rho0)?;
    check_time_grid(t_grid)?;
    let rk = JointRk4::new(&model.register());
    let mut rho = rho0.clone();
    rho.symmetrize();
    let mut drho = ComplexMatrix::zeros(rho.dim());
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &tk in t_grid {
        rk.advance(&mut rho, &mut drho, tk - t)?;
        t = tk;
        out.push((rho.clone(), drho.clone()));
    }
    Ok(out)
}

pub fn propagate_unconditional(
    model: &FrequencyModel,
    rho0: &ComplexMatrix,
    t_grid: &[f64],
) -> Result<Vec<ComplexMatrix>> {
    Ok(propagate_with_derivative(model, rho0, t_grid)?.into_iter().map(|(r, _)| r).collect())
}

pub fn unconditional_qfi_curve(model: &FrequencyModel, rho0: &ComplexMatrix, t_grid: &[f64]) -> Result<QfiCurve> {
    let states = propagate_with_derivative(model, rho0, t_grid)?;
    let values = states.iter().map(|(r, d)| qfi_mixed(r, d)).collect::<Result<Vec<_>>>()?;
    QfiCurve::new(t_grid.to_vec(), values, QfiKind::Unconditional)
}

pub fn unconditional_qfi(model: &FrequencyModel, rho0: &ComplexMatrix, t: f64) -> Result<f64> {
    Ok(unconditional_qfi_curve(model, rho0, &[t])?.values[0])
}
