//! Dense complex linear algebra for qubit registers and the two quantum
//! Fisher information formulas (mixed-state eigenbasis sum, pure-state
//! overlap form).

mod local;
mod matrix;

pub use local::{
    accumulate_ket, apply_ket_in_place, apply_ket_pair, apply_superop_in_place, apply_superop_pair, exp_pair2,
    exp_pair4, exp_with_derivative, identity2, pauli_x, pauli_y, pauli_z, superop_from_map, LocalOp, Op2, Superop4,
};
pub use matrix::{ComplexMatrix, Ket, C64, I, ONE, ZERO};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative Hermiticity tolerance accepted by the eigensolver and QFI routines.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalue-pair cutoff in [`qfi_mixed`]: pairs with `λs + λt` at or below
/// this are treated as outside the support.
pub const RANK_EPS: f64 = 1e-12;

/// Kronecker product, `a` on the most significant factor.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_nalgebra(a.as_nalgebra().kronecker(b.as_nalgebra()))
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` on `qubit` (0-based, qubit 0 leftmost).
pub fn embed(op: &ComplexMatrix, qubit: usize, n_qubits: usize) -> Result<ComplexMatrix> {
    if op.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: op.dim() });
    }
    if qubit >= n_qubits {
        return Err(Error::QubitOutOfRange { qubit, n_qubits });
    }
    let left = ComplexMatrix::identity(1 << qubit);
    let right = ComplexMatrix::identity(1 << (n_qubits - 1 - qubit));
    Ok(kron(&kron(&left, op), &right))
}

pub fn op2_to_matrix(op: &Op2) -> ComplexMatrix {
    ComplexMatrix::from_nalgebra(DMatrix::from_column_slice(2, 2, op.as_slice()))
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Ket>,
}

impl HermitianEigen {
    /// Eigenvectors as the columns of a unitary matrix.
    pub fn unitary(&self) -> ComplexMatrix {
        let d = self.eigenvalues.len();
        ComplexMatrix::from_fn(d, |r, c| self.eigenvectors[c][r])
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = self.eigenvalues.len();
        let mut out = ComplexMatrix::zeros(d);
        for (l, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            out.axpy(C64::new(*l, 0.0), &v.projector());
        }
        out
    }
}

pub fn hermitian_eig(a: &ComplexMatrix) -> Result<HermitianEigen> {
    check_hermitian(a)?;
    let eig = SymmetricEigen::new(a.as_nalgebra().clone());
    let mut order: Vec<usize> = (0..a.dim()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    Ok(HermitianEigen {
        eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        eigenvectors: order.iter().map(|&i| Ket::from_nalgebra(eig.eigenvectors.column(i).into_owned())).collect(),
    })
}

fn check_hermitian(a: &ComplexMatrix) -> Result<()> {
    let defect = a.hermiticity_defect();
    if defect > HERMITIAN_TOL * a.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian { defect });
    }
    Ok(())
}

/// QFI of a mixed state from its eigenbasis:
/// `Q = 2 Σ_{λs+λt > ε} |⟨ψs|∂ρ|ψt⟩|² / (λs + λt)`.
pub fn qfi_mixed(rho: &ComplexMatrix, drho: &ComplexMatrix) -> Result<f64> {
    if rho.dim() != drho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: drho.dim() });
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(Error::InvalidState(format!("density operator has trace {tr}")));
    }
    check_hermitian(drho)?;
    let dscale = drho.max_abs().max(1.0);
    if drho.trace().norm() > 1e-10 * dscale {
        return Err(Error::InvalidState(format!("state derivative is not traceless (trace {})", drho.trace())));
    }
    let eig = hermitian_eig(rho)?;
    if eig.eigenvalues[0] < -1e-10 {
        return Err(Error::InvalidState(format!(
            "density operator has negative eigenvalue {:.3e}",
            eig.eigenvalues[0]
        )));
    }
    let u = eig.unitary();
    let d_eig = &(&u.adjoint() * drho) * &u;
    let lam = &eig.eigenvalues;
    let d = lam.len();
    let mut q = 0.0;
    for t in 0..d {
        for s in 0..d {
            let denom = lam[s] + lam[t];
            if denom > RANK_EPS {
                q += d_eig[(s, t)].norm_sqr() / denom;
            }
        }
    }
    Ok(2.0 * q)
}

/// QFI of a pure-state family: `Q = 4[⟨∂ψ|∂ψ⟩ + ⟨∂ψ|ψ⟩²]`.
///
/// For a normalized family `⟨∂ψ|ψ⟩` is purely imaginary, so the bracket is
/// real; a derivative that breaks this is rejected.
pub fn qfi_pure(psi: &Ket, dpsi: &Ket) -> Result<f64> {
    if psi.dim() != dpsi.dim() {
        return Err(Error::DimensionMismatch { expected: psi.dim(), found: dpsi.dim() });
    }
    if !psi.is_normalized(1e-10) {
        return Err(Error::InvalidState(format!("ket has norm {}", psi.norm())));
    }
    let overlap = dpsi.inner(psi);
    let q = (dpsi.inner(dpsi) + overlap * overlap) * 4.0;
    if q.im.abs() > 1e-10 * q.re.abs().max(1.0) {
        return Err(Error::InvalidState(format!("derivative does not preserve normalization (Q = {q})")));
    }
    Ok(q.re)
}
