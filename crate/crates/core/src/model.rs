//! The frequency-estimation problem: `N` qubits precessing under
//! `H = (ω/2) Σ_j σz⁽ʲ⁾`, each subject to independent Markovian noise
//! `c_j = √(κ/2) σα⁽ʲ⁾` along the Hamiltonian axis (parallel) or across it
//! (transverse).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qops::{pauli_x, pauli_z, ComplexMatrix, Ket, LocalOp, Op2, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseAxis {
    /// σz noise, commuting with the Hamiltonian (pure dephasing).
    Parallel,
    /// σx noise.
    Transverse,
}

impl NoiseAxis {
    pub fn pauli(self) -> Op2 {
        match self {
            NoiseAxis::Parallel => pauli_z(),
            NoiseAxis::Transverse => pauli_x(),
        }
    }
}

impl std::fmt::Display for NoiseAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseAxis::Parallel => "parallel",
            NoiseAxis::Transverse => "transverse",
        })
    }
}

impl std::str::FromStr for NoiseAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parallel" | "z" => Ok(NoiseAxis::Parallel),
            "transverse" | "x" => Ok(NoiseAxis::Transverse),
            other => Err(Error::InvalidParameter(format!("unknown noise axis '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyModel {
    pub n_qubits: usize,
    pub omega: f64,
    pub kappa: f64,
    pub noise_axis: NoiseAxis,
}

/// Dense `2^N` representations are refused beyond this size; the two-level
/// GHZ reduction and the closed forms have no such limit.
pub const MAX_QUBITS: usize = 20;

impl FrequencyModel {
    pub fn new(n_qubits: usize, omega: f64, kappa: f64, noise_axis: NoiseAxis) -> Result<Self> {
        let model = Self { n_qubits, omega, kappa, noise_axis };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::InvalidParameter("number of qubits must be at least 1".into()));
        }
        if !self.omega.is_finite() {
            return Err(Error::InvalidParameter(format!("omega must be finite, got {}", self.omega)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        Ok(())
    }

    /// Fails when the register is too large for dense operators.
    pub fn check_dense(&self) -> Result<()> {
        if self.n_qubits > MAX_QUBITS {
            return Err(Error::InvalidParameter(format!(
                "dense simulation supports at most {MAX_QUBITS} qubits, got {}",
                self.n_qubits
            )));
        }
        Ok(())
    }

    pub fn with_omega(&self, omega: f64) -> Self {
        Self { omega, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Single-qubit term `(ω/2) σz`.
    pub fn qubit_hamiltonian(&self) -> Op2 {
        pauli_z() * C64::new(self.omega / 2.0, 0.0)
    }

    /// `∂ω` of the single-qubit term, `σz / 2`.
    pub fn qubit_generator(&self) -> Op2 {
        pauli_z() * C64::new(0.5, 0.0)
    }

    /// Single-qubit noise operator `√(κ/2) σα`.
    pub fn qubit_collapse(&self) -> Op2 {
        self.noise_axis.pauli() * C64::new((self.kappa / 2.0).sqrt(), 0.0)
    }

    /// Diagonal of `H`: `(ω/2)(N - 2·popcount(i))`.
    pub fn energies(&self) -> Vec<f64> {
        generator_diagonal(self.n_qubits).into_iter().map(|g| self.omega * g).collect()
    }

    pub fn hamiltonian(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_diagonal(&self.energies())
    }

    /// `∂ωH = (1/2) Σ_j σz⁽ʲ⁾`, independent of ω.
    pub fn hamiltonian_derivative(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_diagonal(&generator_diagonal(self.n_qubits))
    }

    pub fn local_collapse_operators(&self) -> Vec<LocalOp> {
        let c = self.qubit_collapse();
        (0..self.n_qubits).map(|j| LocalOp::new(c, j, self.n_qubits)).collect()
    }

    pub fn collapse_operators(&self) -> Vec<ComplexMatrix> {
        self.local_collapse_operators().iter().map(LocalOp::to_dense).collect()
    }

    /// Register description used by the propagators.
    pub fn register(&self) -> Register {
        Register {
            n_qubits: self.n_qubits,
            h: self.qubit_hamiltonian(),
            g: self.qubit_generator(),
            collapse: self.qubit_collapse(),
        }
    }
}

/// A register of identical qubits with Hamiltonian `Σ_j h⁽ʲ⁾`, parameter
/// generator `Σ_j g⁽ʲ⁾` and one noise channel `c⁽ʲ⁾` per qubit.
///
/// The GHZ fast path reuses this with a single effective qubit.
#[derive(Clone, Debug, PartialEq)]
pub struct Register {
    pub n_qubits: usize,
    pub h: Op2,
    pub g: Op2,
    pub collapse: Op2,
}

impl Register {
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn channel(&self, j: usize) -> LocalOp {
        LocalOp::new(self.collapse, j, self.n_qubits)
    }

    pub fn channels(&self) -> Vec<LocalOp> {
        (0..self.n_qubits).map(|j| self.channel(j)).collect()
    }

    /// `c†c` on one qubit.
    pub fn qubit_decay(&self) -> Op2 {
        self.collapse.adjoint() * self.collapse
    }
}

fn generator_diagonal(n_qubits: usize) -> Vec<f64> {
    (0..1usize << n_qubits).map(|i| 0.5 * (n_qubits as f64 - 2.0 * i.count_ones() as f64)).collect()
}

/// `(|0…0⟩ + |1…1⟩)/√2`
pub fn ghz_state(n_qubits: usize) -> Ket {
    assert!(n_qubits >= 1);
    let d = 1 << n_qubits;
    let mut psi = Ket::zeros(d);
    let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    psi[0] = a;
    psi[d - 1] = a;
    psi
}

/// `[(|0⟩ + |1⟩)/√2]^⊗N`
pub fn coherent_spin_state(n_qubits: usize) -> Ket {
    assert!(n_qubits >= 1);
    let d = 1usize << n_qubits;
    let a = C64::new((d as f64).sqrt().recip(), 0.0);
    Ket::from_vec(vec![a; d])
}

/// `|0…0⟩`
pub fn ground_state(n_qubits: usize) -> Ket {
    Ket::basis(1 << n_qubits, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::qfi_pure;

    fn model(n: usize, omega: f64, kappa: f64, axis: NoiseAxis) -> FrequencyModel {
        FrequencyModel::new(n, omega, kappa, axis).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        assert_eq!(
            model(1, 2.0, 0.0, NoiseAxis::Parallel).hamiltonian(),
            ComplexMatrix::from_real_diagonal(&[1.0, -1.0])
        );
        assert_eq!(
            model(2, 1.0, 0.0, NoiseAxis::Parallel).hamiltonian(),
            ComplexMatrix::from_real_diagonal(&[1.0, 0.0, 0.0, -1.0])
        );
        let g = model(3, 0.3, 0.0, NoiseAxis::Parallel).energies();
        let dh = model(3, 0.3, 0.0, NoiseAxis::Parallel).hamiltonian_derivative();
        let diag: Vec<f64> = (0..8).map(|i| dh[(i, i)].re).collect();
        assert_eq!(diag.iter().cloned().fold(f64::MIN, f64::max), 1.5);
        assert_eq!(diag.iter().cloned().fold(f64::MAX, f64::min), -1.5);
        assert!(g.iter().zip(&diag).all(|(e, d)| (e - 0.3 * d).abs() < 1e-15));
    }

    #[test]
    fn collapse_operator_examples() {
        let ops = model(1, 1.0, 2.0, NoiseAxis::Parallel).collapse_operators();
        assert_eq!(ops, vec![ComplexMatrix::from_real_diagonal(&[1.0, -1.0])]);

        let ops = model(2, 1.0, 2.0, NoiseAxis::Transverse).collapse_operators();
        assert_eq!(ops[0].apply(&Ket::basis(4, 0)), Ket::basis(4, 2));

        for axis in [NoiseAxis::Parallel, NoiseAxis::Transverse] {
            let m = model(3, 0.7, 1.3, axis);
            for c in m.collapse_operators() {
                let cdc = &c.adjoint() * &c;
                assert!((cdc.trace().re - 0.65 * 8.0).abs() < 1e-13);
                let expect = ComplexMatrix::identity(8).scale_real(0.65);
                assert!((&cdc - &expect).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn commutation_by_axis() {
        let par = model(3, 0.9, 1.1, NoiseAxis::Parallel);
        let h = par.hamiltonian();
        for c in par.collapse_operators() {
            assert!(h.commutator(&c).max_abs() <= 1e-14);
        }
        let tr = model(3, 0.9, 1.1, NoiseAxis::Transverse);
        let h = tr.hamiltonian();
        for c in tr.collapse_operators() {
            assert!(h.commutator(&c).max_abs() > 0.1);
        }
    }

    #[test]
    fn probe_states() {
        assert!((&ghz_state(1) - &coherent_spin_state(1)).norm() < 1e-15);
        let g3 = ghz_state(3);
        for i in 0..8 {
            let expect = if i == 0 || i == 7 { std::f64::consts::FRAC_1_SQRT_2 } else { 0.0 };
            assert_eq!(g3[i], C64::new(expect, 0.0));
        }
        assert_eq!(coherent_spin_state(2), Ket::from_vec(vec![C64::new(0.5, 0.0); 4]));
        for n in 1..=10 {
            assert!(ghz_state(n).is_normalized(1e-14));
            assert!(coherent_spin_state(n).is_normalized(1e-14));
        }
    }

    #[test]
    fn noiseless_qfi_heisenberg_vs_sql() {
        let t = 1.3;
        for n in 1..=6 {
            let m = model(n, 0.8, 0.0, NoiseAxis::Parallel);
            let e = m.energies();
            let g = m.hamiltonian_derivative();
            for (psi0, expect) in [(ghz_state(n), (n * n) as f64 * t * t), (coherent_spin_state(n), n as f64 * t * t)] {
                let psi = Ket::from_vec(
                    psi0.as_slice().iter().zip(&e).map(|(a, en)| a * C64::from_polar(1.0, -en * t)).collect(),
                );
                let dpsi = g.apply(&psi).scale(C64::new(0.0, -t));
                let q = qfi_pure(&psi, &dpsi).unwrap();
                assert!((q - expect).abs() < 1e-12 * expect, "n={n} q={q} expect={expect}");
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(FrequencyModel::new(0, 1.0, 1.0, NoiseAxis::Parallel).is_err());
        assert!(FrequencyModel::new(2, 1.0, -1.0, NoiseAxis::Parallel).is_err());
        assert!(FrequencyModel::new(2, f64::NAN, 1.0, NoiseAxis::Parallel).is_err());
    }
}
