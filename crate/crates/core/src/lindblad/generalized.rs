//! The generalized master equation
//! `dρ̄/dt = -i(H_{ω1} ρ̄ - ρ̄ H_{ω2}) + Σ_j D[c_j] ρ̄`
//! and the ultimate QFI `4 ∂ω1 ∂ω2 log|Tr ρ̄|` at `ω1 = ω2 = ω`.

use crate::error::{Error, Result};
use crate::model::{FrequencyModel, NoiseAxis};
use crate::qops::{
    apply_superop_in_place, kron, qfi_pure, superop_from_map, ComplexMatrix, Ket, Op2, Superop4, C64, I, ZERO,
};

use super::{check_density, TimeOptimum};

/// Largest register for which the dense `4^N` generator is built.
pub const MAX_VECTORIZED_QUBITS: usize = 4;

/// Stencil refinement gives up after this many halvings of `δ`.
const MAX_HALVINGS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedState {
    pub rho_bar: ComplexMatrix,
    pub omega1: f64,
    pub omega2: f64,
}

impl GeneralizedState {
    /// Evolves `rho0` for time `t`, one qubit at a time: the generator is a
    /// sum of commuting single-qubit terms, so the map factorizes.
    pub fn evolve(model: &FrequencyModel, rho0: &ComplexMatrix, omega1: f64, omega2: f64, t: f64) -> Result<Self> {
        model.check_dense()?;
        if rho0.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: rho0.dim() });
        }
        let s = qubit_map(model, omega1, omega2, t);
        let mut rho_bar = rho0.clone();
        for j in 0..model.n_qubits {
            apply_superop_in_place(&s, j, model.n_qubits, &mut rho_bar);
        }
        Ok(Self { rho_bar, omega1, omega2 })
    }

    /// Same evolution through the exponential of the dense `4^N x 4^N`
    /// generator.
    pub fn evolve_dense(
        model: &FrequencyModel,
        rho0: &ComplexMatrix,
        omega1: f64,
        omega2: f64,
        t: f64,
    ) -> Result<Self> {
        model.check_dense()?;
        if rho0.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: rho0.dim() });
        }
        let prop = vectorized_generator(model, omega1, omega2)?.scale_real(t).exp();
        let d = model.dim();
        let v = Ket::from_vec(rho0.as_slice().to_vec());
        let out = prop.apply(&v);
        let rho_bar = ComplexMatrix::from_nalgebra(nalgebra::DMatrix::from_column_slice(d, d, out.as_slice()));
        Ok(Self { rho_bar, omega1, omega2 })
    }

    pub fn trace(&self) -> C64 {
        self.rho_bar.trace()
    }
}

/// Single-qubit generalized generator in the row-major vectorization.
fn qubit_generator(model: &FrequencyModel, omega1: f64, omega2: f64) -> Superop4 {
    let h1 = model.with_omega(omega1).qubit_hamiltonian();
    let h2 = model.with_omega(omega2).qubit_hamiltonian();
    let c = model.qubit_collapse();
    let cd = c.adjoint();
    let cdc = cd * c;
    superop_from_map(|x: &Op2| (h1 * x - x * h2) * (-I) + c * x * cd - (cdc * x + x * cdc) * C64::new(0.5, 0.0))
}

fn qubit_map(model: &FrequencyModel, omega1: f64, omega2: f64, t: f64) -> Superop4 {
    (qubit_generator(model, omega1, omega2) * C64::new(t, 0.0)).exp()
}

/// `L_{ω1,ω2}` acting on column-stacked operators, `vec(X)[c·d + r] = X[r, c]`.
pub fn vectorized_generator(model: &FrequencyModel, omega1: f64, omega2: f64) -> Result<ComplexMatrix> {
    model.validate()?;
    if model.n_qubits > MAX_VECTORIZED_QUBITS {
        return Err(Error::InvalidParameter(format!(
            "dense generator limited to {MAX_VECTORIZED_QUBITS} qubits, got {}",
            model.n_qubits
        )));
    }
    let d = model.dim();
    let id = ComplexMatrix::identity(d);
    let transpose = |a: &ComplexMatrix| ComplexMatrix::from_fn(a.dim(), |r, c| a[(c, r)]);
    let conj = |a: &ComplexMatrix| ComplexMatrix::from_fn(a.dim(), |r, c| a[(r, c)].conj());
    let h1 = model.with_omega(omega1).hamiltonian();
    let h2 = model.with_omega(omega2).hamiltonian();
    let mut gen = &kron(&id, &h1) - &kron(&transpose(&h2), &id);
    gen = gen.scale(-I);
    for c in model.collapse_operators() {
        let cdc = &c.adjoint() * &c;
        gen.axpy(C64::new(1.0, 0.0), &kron(&conj(&c), &c));
        gen.axpy(C64::new(-0.5, 0.0), &kron(&id, &cdc));
        gen.axpy(C64::new(-0.5, 0.0), &kron(&transpose(&cdc), &id));
    }
    Ok(gen)
}

/// Richardson-extrapolated mixed second difference
/// `∂1∂2 f(ω, ω) ≈ [f(+,+) - f(+,-) - f(-,+) + f(-,-)] / (4δ²)`.
fn mixed_second_derivative(f: &impl Fn(f64, f64) -> Result<f64>, omega: f64, delta: f64) -> Result<f64> {
    let stencil = |h: f64| -> Result<f64> {
        let pp = f(omega + h, omega + h)?;
        let pm = f(omega + h, omega - h)?;
        let mp = f(omega - h, omega + h)?;
        let mm = f(omega - h, omega - h)?;
        Ok((pp - pm - mp + mm) / (4.0 * h * h))
    };
    Ok((4.0 * stencil(delta / 2.0)? - stencil(delta)?) / 3.0)
}

/// Halves `δ` until the extrapolated estimate stops moving by more than
/// `1e-6` relative (plus the rounding floor of the stencil).
fn converged_second_derivative(f: &impl Fn(f64, f64) -> Result<f64>, omega: f64, delta0: f64) -> Result<f64> {
    let mut delta = delta0;
    let mut prev = mixed_second_derivative(f, omega, delta)?;
    for _ in 0..MAX_HALVINGS {
        delta /= 2.0;
        let next = mixed_second_derivative(f, omega, delta)?;
        let floor = 64.0 * f64::EPSILON / (delta * delta);
        if (next - prev).abs() <= 1e-6 * next.abs() + floor {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NumericalGuard(format!("ultimate QFI stencil did not settle down to δ = {delta:.3e}")))
}

fn log_abs_trace(tr: C64, omega1: f64, omega2: f64) -> Result<f64> {
    if tr.re.is_nan() || tr.re <= 0.0 {
        return Err(Error::NumericalGuard(format!(
            "Tr ρ̄ = {tr} at (ω1, ω2) = ({omega1}, {omega2}); stencil width too large"
        )));
    }
    Ok(tr.norm().ln())
}

fn check_pure(rho0: &ComplexMatrix) -> Result<()> {
    let purity = (rho0 * rho0).trace().re;
    if (purity - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidState(format!("ultimate QFI needs a pure initial state (purity {purity})")));
    }
    Ok(())
}

fn default_delta(scales: &[f64], t: f64) -> f64 {
    1e-3 * scales.iter().fold(1.0 / t, |m, s| m.max(s.abs()))
}

/// Ultimate QFI from a single Richardson-extrapolated stencil of half-width
/// `delta`.
pub fn ultimate_qfi_numeric(model: &FrequencyModel, rho0: &ComplexMatrix, t: f64, delta: f64) -> Result<f64> {
    model.validate()?;
    check_density(model, rho0)?;
    check_pure(rho0)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("stencil width must be positive, got {delta}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let f = |w1: f64, w2: f64| log_abs_trace(GeneralizedState::evolve(model, rho0, w1, w2, t)?.trace(), w1, w2);
    Ok(4.0 * mixed_second_derivative(&f, model.omega, delta)?)
}

/// Ultimate QFI with the default stencil width `1e-3·max(κ, |ω|, 1/t)`,
/// halved until converged.
pub fn ultimate_qfi(model: &FrequencyModel, rho0: &ComplexMatrix, t: f64) -> Result<f64> {
    model.validate()?;
    check_density(model, rho0)?;
    check_pure(rho0)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let f = |w1: f64, w2: f64| log_abs_trace(GeneralizedState::evolve(model, rho0, w1, w2, t)?.trace(), w1, w2);
    let delta0 = default_delta(&[model.kappa, model.omega], t);
    Ok(4.0 * converged_second_derivative(&f, model.omega, delta0)?)
}

/// First row of the single-qubit transverse generalized map in the basis
/// `σ_i/√2`, `i = 0, x, y, z`. Entries 1 and 2 vanish identically.
pub fn gme_qubit_trace_row(omega1: f64, omega2: f64, kappa: f64, t: f64) -> [C64; 4] {
    let a = kappa * kappa - (omega1 - omega2).powi(2);
    let x = t / 2.0;
    // cosh(x√a) and sinh(x√a)/√a, continued through a = 0.
    let (ch, sh) = if a.abs() < 1e-8 * kappa * kappa {
        (1.0 + a * x * x / 2.0 + a * a * x.powi(4) / 24.0, x + a * x.powi(3) / 6.0 + a * a * x.powi(5) / 120.0)
    } else if a > 0.0 {
        let s = a.sqrt();
        ((s * x).cosh(), (s * x).sinh() / s)
    } else {
        let s = (-a).sqrt();
        ((s * x).cos(), (s * x).sin() / s)
    };
    let e = (-kappa * t / 2.0).exp();
    [C64::new(e * (ch + kappa * sh), 0.0), ZERO, ZERO, C64::new(0.0, e * (omega2 - omega1) * sh)]
}

/// `Tr[Ẽ^{⊗N}(|ψ_GHZ⟩⟨ψ_GHZ|)]` from the single-qubit row: only the
/// `|0…0⟩⟨0…0|` and `|1…1⟩⟨1…1|` blocks survive the trace.
fn ghz_transverse_trace(n: usize, omega1: f64, omega2: f64, kappa: f64, t: f64) -> C64 {
    let r = gme_qubit_trace_row(omega1, omega2, kappa, t);
    let up = r[0] + r[3];
    let down = r[0] - r[3];
    (up.powi(n as i32) + down.powi(n as i32)) * 0.5
}

/// Transverse-noise ultimate QFI of a GHZ probe through the single-qubit row
/// reduction; cost independent of `N`.
pub fn ultimate_qfi_transverse_ghz(n: usize, kappa: f64, t: f64) -> Result<f64> {
    if n == 0 || n > i32::MAX as usize {
        return Err(Error::InvalidParameter(format!("invalid number of qubits {n}")));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let f = |w1: f64, w2: f64| log_abs_trace(ghz_transverse_trace(n, w1, w2, kappa, t), w1, w2);
    Ok(4.0 * converged_second_derivative(&f, 0.0, default_delta(&[kappa], t))?)
}

/// `[N²(1-e^{-κt})² + N(2κt + 1 - (2-e^{-κt})²)] / κ²`, with the `κ -> 0`
/// limit `N²t²`.
pub fn ultimate_qfi_transverse_closed_form(n: usize, kappa: f64, t: f64) -> f64 {
    let nf = n as f64;
    if kappa == 0.0 {
        return nf * nf * t * t;
    }
    let a = -(-kappa * t).exp_m1();
    (nf * nf * a * a + nf * (2.0 * kappa * t - 2.0 * a - a * a)) / (kappa * kappa)
}

/// Maximizer of `Q̄⊥(t)/t`. For small `N` the ratio keeps growing towards
/// `2N/κ` and the search edge `t = 10³/κ` is reported as a boundary optimum.
pub fn transverse_optimal_time(n: usize, kappa: f64) -> Result<TimeOptimum> {
    if n == 0 {
        return Err(Error::InvalidParameter("number of qubits must be positive".into()));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    let ratio = |t: f64| ultimate_qfi_transverse_closed_form(n, kappa, t) / t;
    let points = 6001;
    let grid: Vec<f64> = (0..points).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / (points - 1) as f64) / kappa).collect();
    let best = (0..points).max_by(|&i, &j| ratio(grid[i]).total_cmp(&ratio(grid[j]))).unwrap();
    // Ratios that creep up to their large-t limit are not interior maxima.
    let edge = ratio(grid[points - 1]);
    if best == 0 || ratio(grid[best]) <= edge * (1.0 + 1e-10) {
        let best = if best == 0 { 0 } else { points - 1 };
        return Ok(TimeOptimum { t_opt: grid[best], q_over_t: ratio(grid[best]), at_boundary: true });
    }
    let t_opt = golden_section_max(&ratio, grid[best - 1], grid[best + 1]);
    Ok(TimeOptimum { t_opt, q_over_t: ratio(t_opt), at_boundary: false })
}

fn golden_section_max(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-12 * hi {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Parallel-noise ultimate QFI: the noiseless QFI of `e^{-iHt}|ψ0⟩`,
/// `4t² Var_{ψ0}(∂ωH)`.
pub fn ultimate_qfi_parallel(model: &FrequencyModel, psi0: &Ket, t: f64) -> Result<f64> {
    model.validate()?;
    if model.noise_axis != NoiseAxis::Parallel {
        return Err(Error::InvalidParameter("closed-form ultimate QFI only holds for parallel noise".into()));
    }
    model.check_dense()?;
    if psi0.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: psi0.dim() });
    }
    if !psi0.is_normalized(1e-10) {
        return Err(Error::InvalidState(format!("initial ket has norm {}", psi0.norm())));
    }
    let energies = model.energies();
    let g = model.hamiltonian_derivative();
    let psi_t =
        Ket::from_vec(psi0.as_slice().iter().zip(&energies).map(|(a, e)| a * C64::from_polar(1.0, -e * t)).collect());
    let dpsi = g.apply(&psi_t).scale(C64::new(0.0, -t));
    qfi_pure(&psi_t, &dpsi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{coherent_spin_state, ghz_state, ground_state};

    fn transverse(n: usize, omega: f64, kappa: f64) -> FrequencyModel {
        FrequencyModel::new(n, omega, kappa, NoiseAxis::Transverse).unwrap()
    }

    #[test]
    fn closed_form_reference_value() {
        // 49(1 - e^{-1})² + 7(3 - (2 - e^{-1})²), evaluated term by term.
        let e = (-1.0f64).exp();
        let expect = 49.0 * (1.0 - e).powi(2) + 7.0 * (3.0 - (2.0 - e).powi(2));
        let q = ultimate_qfi_transverse_closed_form(7, 1.0, 1.0);
        assert!((q - expect).abs() < 1e-12);
        assert!((q - 21.93).abs() < 5e-3);
        for n in [1, 4, 9] {
            let t = 1e-4;
            let q = ultimate_qfi_transverse_closed_form(n, 1.0, t);
            let hl = (n * n) as f64 * t * t;
            assert!((q - hl).abs() < 1e-3 * hl);
        }
    }

    #[test]
    fn row_at_equal_frequencies_is_trace_preserving() {
        for (k, t) in [(1.0, 0.3), (2.5, 1.7), (0.1, 10.0)] {
            let r = gme_qubit_trace_row(0.4, 0.4, k, t);
            assert!((r[0] - C64::new(1.0, 0.0)).norm() < 1e-14);
            assert_eq!(r[3], ZERO);
        }
    }

    #[test]
    fn row_matches_single_qubit_map() {
        let m = transverse(1, 0.0, 1.3);
        let t = 0.8;
        for (w1, w2) in [(0.2, -0.1), (1.0, 2.0), (0.5, 0.5 + 1.3), (3.0, 0.0)] {
            let r = gme_qubit_trace_row(w1, w2, m.kappa, t);
            for (idx, expect) in [(0, r[0] + r[3]), (1, r[0] - r[3])] {
                let rho0 = Ket::basis(2, idx).projector();
                let tr = GeneralizedState::evolve(&m, &rho0, w1, w2, t).unwrap().trace();
                assert!((tr - expect).norm() < 1e-12, "({w1},{w2}) idx={idx}: {tr} vs {expect}");
            }
            let coh = Ket::basis(2, 0).outer(&Ket::basis(2, 1));
            let tr = GeneralizedState::evolve(&m, &coh, w1, w2, t).unwrap().trace();
            assert!(tr.norm() < 1e-14);
        }
    }

    #[test]
    fn row_series_branch_is_continuous() {
        let (k, t) = (1.0, 2.0);
        let inside = gme_qubit_trace_row(1.0 + 1e-10, 0.0, k, t);
        let outside = gme_qubit_trace_row(1.0 + 1e-6, 0.0, k, t);
        let exact = gme_qubit_trace_row(1.0, 0.0, k, t);
        assert!((inside[0] - exact[0]).norm() < 1e-9);
        assert!((outside[0] - exact[0]).norm() < 1e-5);
        assert!((inside[3] - exact[3]).norm() < 1e-9);
    }

    #[test]
    fn dense_and_factorized_generalized_maps_agree() {
        let m = transverse(2, 0.7, 0.9);
        let rho0 = ghz_state(2).projector();
        let a = GeneralizedState::evolve(&m, &rho0, 0.9, 0.5, 1.1).unwrap();
        let b = GeneralizedState::evolve_dense(&m, &rho0, 0.9, 0.5, 1.1).unwrap();
        assert!((&a.rho_bar - &b.rho_bar).max_abs() < 1e-12);
    }

    #[test]
    fn generalized_state_is_a_state_at_equal_frequencies() {
        let m = transverse(3, 0.7, 0.9);
        let g = GeneralizedState::evolve(&m, &coherent_spin_state(3).projector(), 0.7, 0.7, 2.0).unwrap();
        assert!(g.rho_bar.is_hermitian(1e-12));
        assert!((g.trace() - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn numeric_matches_closed_form_and_row() {
        for n in 1..=3 {
            let m = transverse(n, 1.0, 1.0);
            let rho0 = ghz_state(n).projector();
            for t in [0.1, 1.0, 3.0] {
                let closed = ultimate_qfi_transverse_closed_form(n, 1.0, t);
                let num = ultimate_qfi(&m, &rho0, t).unwrap();
                let row = ultimate_qfi_transverse_ghz(n, 1.0, t).unwrap();
                assert!((num - closed).abs() < 1e-6 * closed, "n={n} t={t}: {num} vs {closed}");
                assert!((row - closed).abs() < 1e-6 * closed, "n={n} t={t}: {row} vs {closed}");
            }
        }
    }

    #[test]
    fn parallel_numeric_is_noiseless() {
        for n in 1..=3 {
            let m = FrequencyModel::new(n, 0.6, 1.0, NoiseAxis::Parallel).unwrap();
            let q = ultimate_qfi(&m, &ghz_state(n).projector(), 1.0).unwrap();
            let hl = (n * n) as f64;
            assert!((q - hl).abs() < 1e-6 * hl);
        }
    }

    #[test]
    fn parallel_closed_form_examples() {
        let m = FrequencyModel::new(5, 0.3, 1.0, NoiseAxis::Parallel).unwrap();
        assert!((ultimate_qfi_parallel(&m, &ghz_state(5), 2.0).unwrap() - 100.0).abs() < 1e-10);
        assert!((ultimate_qfi_parallel(&m, &coherent_spin_state(5), 2.0).unwrap() - 20.0).abs() < 1e-10);
        assert!(ultimate_qfi_parallel(&m, &ground_state(5), 2.0).unwrap().abs() < 1e-12);
        let tr = transverse(5, 0.3, 1.0);
        assert!(ultimate_qfi_parallel(&tr, &ghz_state(5), 2.0).is_err());
    }

    #[test]
    fn numeric_rejects_mixed_input() {
        let m = transverse(1, 1.0, 1.0);
        let mixed = ComplexMatrix::identity(2).scale_real(0.5);
        assert!(matches!(ultimate_qfi(&m, &mixed, 1.0), Err(Error::InvalidState(_))));
    }

    #[test]
    fn huge_stencil_is_flagged() {
        let m = transverse(2, 0.0, 1.0);
        // Tr ρ̄ = r0² - |r3|² < 0 at |ω1 - ω2| = 3.
        let r = ultimate_qfi_numeric(&m, &ghz_state(2).projector(), 3.0, 1.5);
        assert!(matches!(r, Err(Error::NumericalGuard(_))), "{r:?}");
    }

    #[test]
    fn optimal_time_trend() {
        assert!(transverse_optimal_time(2, 1.0).unwrap().at_boundary);
        assert!(transverse_optimal_time(3, 1.0).unwrap().at_boundary);
        // t_opt comes down from infinity (N <= 3) towards c/κ.
        let mut prev = f64::INFINITY;
        for n in [5, 10, 50, 1000] {
            let opt = transverse_optimal_time(n, 1.0).unwrap();
            assert!(!opt.at_boundary);
            assert!(opt.t_opt < prev && opt.t_opt > 1.25);
            prev = opt.t_opt;
        }
        let t50 = transverse_optimal_time(50, 1.0).unwrap().t_opt;
        assert!((t50 - 1.26).abs() < 0.05 * 1.26, "t_opt(50) = {t50}");
        let t_big = transverse_optimal_time(1_000_000, 2.0).unwrap().t_opt;
        assert!((t_big * 2.0 - 1.26).abs() < 0.01, "c = {}", t_big * 2.0);
    }
}
