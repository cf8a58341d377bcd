//! One time step of the conditional dynamics, carrying the parameter
//! derivative alongside the state.
//!
//! Homodyne steps use the first-order Kraus operator with the Milstein
//! correction,
//! `M = 1 - iHΔt - ½Σc†cΔt + Σ√η c Δy + ½Σ√(η_jη_k) c_j c_k (Δy_jΔy_k - δ_jkΔt)`.
//! Photodetection steps propagate through the exact no-click map
//! `exp(Δt L0)`, `L0 X = -i(h X - X h†) + (1-η) c X c†` with
//! `h = H - (i/2)Σc†c`, then apply `c_j` on a click. The classical score
//! `∂ω log p(record)` is accumulated from the click probabilities, so it is
//! exactly zero whenever every `c_j†c_j` is a multiple of the identity.

use crate::error::{Error, Result};
use crate::model::Register;
use crate::qops::{
    apply_ket_pair, apply_superop_pair, exp_pair2, exp_pair4, superop_from_map, ComplexMatrix, Ket, LocalOp, Op2,
    Superop4, C64, I, ONE, ZERO,
};

use super::{StepOutcome, TrajectoryState, UnravelingKind};

/// Largest total click probability accepted in one step.
pub const MAX_CLICK_PROBABILITY: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct Stepper {
    kind: UnravelingKind,
    n_qubits: usize,
    dt: f64,
    eta: Vec<f64>,
    channels: Vec<LocalOp>,
    /// `c_j†c_j`, or `None` when it is `λ·I` with `λ` stored in `decay_scalar`.
    decay: Vec<Option<LocalOp>>,
    decay_scalar: Vec<f64>,
    /// `-iΔt g` on each qubit.
    gen_dt: Vec<LocalOp>,
    /// Homodyne: `-iΔt h - ½Δt c†c - ½Δt η c²` on each qubit.
    hd_drift: Vec<Op2>,
    /// Photodetection, mixed path: `(exp(Δt L0), ∂ω exp(Δt L0))` per qubit.
    pd_super: Vec<(Superop4, Superop4)>,
    /// Photodetection, pure path: `(exp(-iΔt h), ∂ω exp(-iΔt h))`.
    pd_ket: (Op2, Op2),
}

impl Stepper {
    pub fn new(reg: &Register, kind: UnravelingKind, eta: &[f64], dt: f64) -> Result<Self> {
        let n = reg.n_qubits;
        if eta.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: eta.len() });
        }
        if eta.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::InvalidParameter("efficiencies must lie in [0, 1]".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let c = reg.collapse;
        let cd = c.adjoint();
        let cdc = cd * c;
        let dtc = C64::new(dt, 0.0);
        let half = C64::new(0.5, 0.0);
        let h_eff = reg.h - cdc * C64::new(0.0, 0.5);
        let decay_is_scalar = cdc[(0, 1)] == ZERO && cdc[(1, 0)] == ZERO && cdc[(0, 0)] == cdc[(1, 1)];

        let pd_super = eta
            .iter()
            .map(|&e| {
                let keep = C64::new(1.0 - e, 0.0);
                let l0 = superop_from_map(|x: &Op2| (h_eff * x - x * h_eff.adjoint()) * (-I) + c * x * cd * keep);
                let dl0 = superop_from_map(|x: &Op2| (reg.g * x - x * reg.g) * (-I));
                exp_pair4(&(l0 * dtc), &(dl0 * dtc))
            })
            .collect();
        let pd_ket = exp_pair2(&(h_eff * (-I * dt)), &(reg.g * (-I * dt)));
        let hd_drift = eta.iter().map(|&e| reg.h * (-I * dt) - cdc * (half * dtc) - c * c * (half * dtc * e)).collect();

        Ok(Self {
            kind,
            n_qubits: n,
            dt,
            eta: eta.to_vec(),
            channels: reg.channels(),
            decay: (0..n).map(|j| if decay_is_scalar { None } else { Some(LocalOp::new(cdc, j, n)) }).collect(),
            decay_scalar: vec![if decay_is_scalar { cdc[(0, 0)].re } else { 0.0 }; n],
            gen_dt: (0..n).map(|j| LocalOp::new(reg.g * (-I * dt), j, n)).collect(),
            hd_drift,
            pd_super,
            pd_ket,
        })
    }

    pub fn kind(&self) -> UnravelingKind {
        self.kind
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_channels(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn is_perfect(&self) -> bool {
        self.eta.iter().all(|&e| e == 1.0)
    }

    /// Number of random draws consumed by one step: one uniform for
    /// photodetection, one normal per channel for homodyne.
    pub fn draws_per_step(&self) -> usize {
        match self.kind {
            UnravelingKind::Photodetection => 1,
            UnravelingKind::Homodyne => self.n_qubits,
        }
    }

    fn check_state(&self, s: &TrajectoryState) -> Result<()> {
        if s.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: s.dim() });
        }
        if matches!(s, TrajectoryState::Pure { .. }) && !self.is_perfect() {
            return Err(Error::InvalidParameter(
                "pure-state stepping requires unit efficiency on every channel".into(),
            ));
        }
        Ok(())
    }

    // ---------------------------------------------------------------- homodyne

    /// Homodyne step driven by Wiener increments `Δw_j ~ N(0, Δt)`.
    pub fn homodyne_step(&self, s: &mut TrajectoryState, dw: &[f64]) -> Result<StepOutcome> {
        self.check_state(s)?;
        if dw.len() != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, found: dw.len() });
        }
        let dy: Vec<f64> = (0..self.n_qubits)
            .map(|j| {
                let x = 2.0 * self.channel_mean(s, j).re;
                self.eta[j].sqrt() * x * self.dt + dw[j]
            })
            .collect();
        self.homodyne_step_with_record(s, &dy)?;
        Ok(StepOutcome::Homodyne(dy))
    }

    /// Homodyne step for a prescribed measurement record `Δy`.
    pub fn homodyne_step_with_record(&self, s: &mut TrajectoryState, dy: &[f64]) -> Result<()> {
        self.check_state(s)?;
        if dy.len() != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, found: dy.len() });
        }
        let a: Vec<C64> = dy.iter().zip(&self.eta).map(|(y, e)| C64::new(e.sqrt() * y, 0.0)).collect();
        let first: Vec<LocalOp> =
            self.channels.iter().zip(&self.hd_drift).zip(&a).map(|((c, k), aj)| c.with_op(k + c.op * *aj)).collect();
        let kraus = Kraus { first, channels: &self.channels, a: &a };
        match s {
            TrajectoryState::Pure { psi, phi, score } => {
                let mut psi_n = kraus.apply(psi.as_slice());
                let mut phi_n = kraus.apply(phi.as_slice());
                for g in &self.gen_dt {
                    g.accumulate(psi.as_slice(), ONE, &mut phi_n);
                }
                let norm = psi_n.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if !(norm > 0.0 && norm.is_finite()) {
                    return Err(Error::NumericalGuard(format!("homodyne Kraus norm {norm}; step too large")));
                }
                psi_n.iter_mut().for_each(|z| *z /= norm);
                phi_n.iter_mut().for_each(|z| *z /= norm);
                *psi = Ket::from_vec(psi_n);
                *phi = Ket::from_vec(phi_n);
                *score = 2.0 * psi.inner(phi).re;
            }
            TrajectoryState::Mixed { rho, tau, score } => {
                let m_rho = kraus.apply_columns(rho);
                let mut rho_n = kraus.apply_columns(&m_rho.adjoint());
                let mut tau_n = kraus.apply_columns(&kraus.apply_columns(tau).adjoint());
                // (∂M) ρ M† + M ρ (∂M)† with ∂M = -iΔt G.
                let mut d = ComplexMatrix::zeros(rho.dim());
                let rho_md = m_rho.adjoint();
                for g in &self.gen_dt {
                    accumulate_columns(g, &rho_md, &mut d);
                }
                tau_n.axpy(ONE, &d);
                tau_n.axpy(ONE, &d.adjoint());
                self.add_defect(rho, &mut rho_n);
                self.add_defect(tau, &mut tau_n);
                let norm = rho_n.trace().re;
                if !(norm > 0.0 && norm.is_finite()) {
                    return Err(Error::NumericalGuard(format!("homodyne trace {norm}; step too large")));
                }
                rho_n.scale_in_place(1.0 / norm);
                tau_n.scale_in_place(1.0 / norm);
                rho_n.symmetrize();
                tau_n.symmetrize();
                *score = tau_n.trace().re;
                *rho = rho_n;
                *tau = tau_n;
            }
        }
        Ok(())
    }

    /// `Σ_j (1-η_j) c_j x c_j† Δt` added to `out`.
    fn add_defect(&self, x: &ComplexMatrix, out: &mut ComplexMatrix) {
        for (c, &e) in self.channels.iter().zip(&self.eta) {
            if e < 1.0 {
                out.axpy(C64::new((1.0 - e) * self.dt, 0.0), &c.sandwich(x));
            }
        }
    }

    /// `Tr[ρ c_j]` or `⟨ψ|c_j|ψ⟩`.
    fn channel_mean(&self, s: &TrajectoryState, j: usize) -> C64 {
        match s {
            TrajectoryState::Pure { psi, .. } => self.channels[j].expectation(psi),
            TrajectoryState::Mixed { rho, .. } => self.channels[j].trace_with(rho),
        }
    }

    // --------------------------------------------------------- photodetection

    /// Click probabilities `η_j Tr[ρ c_j†c_j] Δt` and their ω-derivatives.
    pub fn click_probabilities(&self, s: &TrajectoryState) -> (Vec<f64>, Vec<f64>) {
        let mut p = Vec::with_capacity(self.n_qubits);
        let mut dp = Vec::with_capacity(self.n_qubits);
        for j in 0..self.n_qubits {
            let w = self.eta[j] * self.dt;
            match &self.decay[j] {
                None => {
                    p.push(w * self.decay_scalar[j]);
                    dp.push(0.0);
                }
                Some(op) => match s {
                    TrajectoryState::Pure { psi, phi, .. } => {
                        let dpsi = pure_derivative(psi, phi);
                        let mut tmp = vec![ZERO; psi.dim()];
                        op.accumulate(dpsi.as_slice(), ONE, &mut tmp);
                        let cross = psi.as_slice().iter().zip(&tmp).fold(ZERO, |acc, (a, b)| acc + a.conj() * b);
                        p.push(w * op.expectation(psi).re);
                        dp.push(w * 2.0 * cross.re);
                    }
                    TrajectoryState::Mixed { rho, tau, score } => {
                        let mut drho = tau.clone();
                        drho.axpy(C64::new(-*score, 0.0), rho);
                        p.push(w * op.trace_with(rho).re);
                        dp.push(w * op.trace_with(&drho).re);
                    }
                },
            }
        }
        (p, dp)
    }

    /// Photodetection step driven by a uniform variate `u ∈ [0, 1)`: channel
    /// `j` clicks when `u` falls in its slice of the cumulative probability.
    pub fn photodetection_step(&self, s: &mut TrajectoryState, u: f64) -> Result<StepOutcome> {
        self.check_state(s)?;
        let (p, dp) = self.click_probabilities(s);
        let total: f64 = p.iter().sum();
        if total > MAX_CLICK_PROBABILITY {
            return Err(Error::NumericalGuard(format!(
                "click probability {total:.4} per step exceeds {MAX_CLICK_PROBABILITY}; reduce the time step"
            )));
        }
        let mut acc = 0.0;
        let mut click = None;
        for (j, pj) in p.iter().enumerate() {
            acc += pj;
            if u < acc {
                click = Some(j);
                break;
            }
        }
        let d_log_p = match click {
            Some(j) => dp[j] / p[j],
            None => -dp.iter().sum::<f64>() / (1.0 - total),
        };
        self.propagate_photodetection(s, click, d_log_p)?;
        Ok(StepOutcome::Photodetection(click))
    }

    /// Photodetection step with a prescribed outcome. The score is still
    /// updated with the sampling probabilities of that outcome.
    pub fn photodetection_step_with_outcome(&self, s: &mut TrajectoryState, click: Option<usize>) -> Result<()> {
        self.check_state(s)?;
        if let Some(j) = click {
            if j >= self.n_qubits {
                return Err(Error::QubitOutOfRange { qubit: j, n_qubits: self.n_qubits });
            }
        }
        let (p, dp) = self.click_probabilities(s);
        let total: f64 = p.iter().sum();
        let d_log_p = match click {
            Some(j) if p[j] > 0.0 => dp[j] / p[j],
            Some(_) => return Err(Error::InvalidState("prescribed click has zero probability".into())),
            None => -dp.iter().sum::<f64>() / (1.0 - total),
        };
        self.propagate_photodetection(s, click, d_log_p)
    }

    fn propagate_photodetection(&self, s: &mut TrajectoryState, click: Option<usize>, d_log_p: f64) -> Result<()> {
        let n = self.n_qubits;
        match s {
            TrajectoryState::Pure { psi, phi, score } => {
                let mut x = psi.clone();
                let mut y = pure_derivative(psi, phi);
                let (m, dm) = &self.pd_ket;
                for j in 0..n {
                    apply_ket_pair(m, dm, j, n, x.as_mut_slice(), y.as_mut_slice());
                }
                if let Some(j) = click {
                    x = self.channels[j].apply(&x);
                    y = self.channels[j].apply(&y);
                }
                let norm = x.norm();
                if !(norm > 0.0 && norm.is_finite()) {
                    return Err(Error::NumericalGuard(format!("photodetection norm {norm}")));
                }
                x.scale_in_place(1.0 / norm);
                y.scale_in_place(1.0 / norm);
                let along = x.inner(&y).re;
                y.axpy(C64::new(-along, 0.0), &x);
                *score += d_log_p;
                y.axpy(C64::new(*score / 2.0, 0.0), &x);
                *psi = x;
                *phi = y;
            }
            TrajectoryState::Mixed { rho, tau, score } => {
                let mut r = rho.clone();
                let mut d = tau.clone();
                d.axpy(C64::new(-*score, 0.0), rho);
                for (j, (sj, dsj)) in self.pd_super.iter().enumerate() {
                    apply_superop_pair(sj, dsj, j, n, &mut r, &mut d);
                }
                if let Some(j) = click {
                    r = self.channels[j].sandwich(&r);
                    d = self.channels[j].sandwich(&d);
                }
                let norm = r.trace().re;
                if !(norm > 0.0 && norm.is_finite()) {
                    return Err(Error::NumericalGuard(format!("photodetection trace {norm}")));
                }
                r.scale_in_place(1.0 / norm);
                d.scale_in_place(1.0 / norm);
                r.symmetrize();
                d.symmetrize();
                let tr_d = d.trace().re;
                d.axpy(C64::new(-tr_d, 0.0), &r);
                *score += d_log_p;
                d.axpy(C64::new(*score, 0.0), &r);
                *rho = r;
                *tau = d;
            }
        }
        Ok(())
    }
}

/// `∂ψ = φ - Re⟨ψ|φ⟩ ψ`
pub(crate) fn pure_derivative(psi: &Ket, phi: &Ket) -> Ket {
    let mut d = phi.clone();
    d.axpy(C64::new(-psi.inner(phi).re, 0.0), psi);
    d
}

fn accumulate_columns(op: &LocalOp, x: &ComplexMatrix, out: &mut ComplexMatrix) {
    let d = x.dim();
    for (sc, dc) in x.as_slice().chunks_exact(d).zip(out.as_mut_slice().chunks_exact_mut(d)) {
        op.accumulate(sc, ONE, dc);
    }
}

/// `v -> v + Σ_j (k_j + a_j c_j) v + ½ A(A v)` with `A = Σ_j a_j c_j`.
struct Kraus<'a> {
    first: Vec<LocalOp>,
    channels: &'a [LocalOp],
    a: &'a [C64],
}

impl Kraus<'_> {
    fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut out = v.to_vec();
        self.apply_into(v, &mut out);
        out
    }

    fn apply_into(&self, v: &[C64], out: &mut [C64]) {
        for op in &self.first {
            op.accumulate(v, ONE, out);
        }
        let mut av = vec![ZERO; v.len()];
        for (c, aj) in self.channels.iter().zip(self.a) {
            c.accumulate(v, *aj, &mut av);
        }
        for (c, aj) in self.channels.iter().zip(self.a) {
            c.accumulate(&av, aj * 0.5, out);
        }
    }

    /// `M X`, column by column.
    fn apply_columns(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let d = x.dim();
        let mut out = x.clone();
        for (sc, dc) in x.as_slice().chunks_exact(d).zip(out.as_mut_slice().chunks_exact_mut(d)) {
            self.apply_into(sc, dc);
        }
        out
    }
}
