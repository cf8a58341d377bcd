//! Kernels for single-qubit operators and superoperators acting on a
//! register, applied in place without building the `2^N`-dimensional
//! embedding.
//!
//! Qubit 0 is the most significant bit of a basis index. Single-qubit
//! superoperators act on the row-major vectorization `(X00, X01, X10, X11)`
//! of a 2x2 operator.

use nalgebra::{DMatrix, Matrix2, Matrix4};

use super::matrix::{ComplexMatrix, Ket, C64, I, ONE, ZERO};

pub type Op2 = Matrix2<C64>;
pub type Superop4 = Matrix4<C64>;

pub fn identity2() -> Op2 {
    Op2::identity()
}

pub fn pauli_x() -> Op2 {
    Op2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> Op2 {
    Op2::new(ZERO, -I, I, ZERO)
}

pub fn pauli_z() -> Op2 {
    Op2::new(ONE, ZERO, ZERO, -ONE)
}

#[inline]
fn mask(qubit: usize, n_qubits: usize) -> usize {
    1usize << (n_qubits - 1 - qubit)
}

/// `dst += s * op_q src` for a register state stored in `src`.
#[inline]
pub fn accumulate_ket(op: &Op2, qubit: usize, n_qubits: usize, src: &[C64], s: C64, dst: &mut [C64]) {
    let m = mask(qubit, n_qubits);
    let (a00, a01, a10, a11) = (op[(0, 0)] * s, op[(0, 1)] * s, op[(1, 0)] * s, op[(1, 1)] * s);
    let d = src.len();
    let mut base = 0;
    while base < d {
        for i in base..base + m {
            let x0 = src[i];
            let x1 = src[i + m];
            dst[i] += a00 * x0 + a01 * x1;
            dst[i + m] += a10 * x0 + a11 * x1;
        }
        base += 2 * m;
    }
}

/// `v <- op_q v` in place.
#[inline]
pub fn apply_ket_in_place(op: &Op2, qubit: usize, n_qubits: usize, v: &mut [C64]) {
    let m = mask(qubit, n_qubits);
    let (a00, a01, a10, a11) = (op[(0, 0)], op[(0, 1)], op[(1, 0)], op[(1, 1)]);
    let d = v.len();
    let mut base = 0;
    while base < d {
        for i in base..base + m {
            let x0 = v[i];
            let x1 = v[i + m];
            v[i] = a00 * x0 + a01 * x1;
            v[i + m] = a10 * x0 + a11 * x1;
        }
        base += 2 * m;
    }
}

/// Propagates a (value, derivative) pair of kets through `op_q` whose
/// parameter derivative is `dop_q`: `(x, y) <- (op x, op y + dop x)`.
pub fn apply_ket_pair(op: &Op2, dop: &Op2, qubit: usize, n_qubits: usize, x: &mut [C64], y: &mut [C64]) {
    let m = mask(qubit, n_qubits);
    let d = x.len();
    let mut base = 0;
    while base < d {
        for i in base..base + m {
            let (x0, x1) = (x[i], x[i + m]);
            let (y0, y1) = (y[i], y[i + m]);
            x[i] = op[(0, 0)] * x0 + op[(0, 1)] * x1;
            x[i + m] = op[(1, 0)] * x0 + op[(1, 1)] * x1;
            y[i] = op[(0, 0)] * y0 + op[(0, 1)] * y1 + dop[(0, 0)] * x0 + dop[(0, 1)] * x1;
            y[i + m] = op[(1, 0)] * y0 + op[(1, 1)] * y1 + dop[(1, 0)] * x0 + dop[(1, 1)] * x1;
        }
        base += 2 * m;
    }
}

/// Applies a 4x4 single-qubit superoperator to qubit `qubit` of `mat` in place.
pub fn apply_superop_in_place(s: &Superop4, qubit: usize, n_qubits: usize, mat: &mut ComplexMatrix) {
    let d = mat.dim();
    let m = mask(qubit, n_qubits);
    let data = mat.as_mut_slice();
    for c0 in (0..d).filter(|c| c & m == 0) {
        let c1 = c0 | m;
        for r0 in (0..d).filter(|r| r & m == 0) {
            let r1 = r0 | m;
            let idx = [c0 * d + r0, c1 * d + r0, c0 * d + r1, c1 * d + r1];
            let v = [data[idx[0]], data[idx[1]], data[idx[2]], data[idx[3]]];
            for (k, &i) in idx.iter().enumerate() {
                data[i] = s[(k, 0)] * v[0] + s[(k, 1)] * v[1] + s[(k, 2)] * v[2] + s[(k, 3)] * v[3];
            }
        }
    }
}

/// `(rho, tau) <- (S rho, S tau + dS rho)` on one qubit.
pub fn apply_superop_pair(
    s: &Superop4,
    ds: &Superop4,
    qubit: usize,
    n_qubits: usize,
    rho: &mut ComplexMatrix,
    tau: &mut ComplexMatrix,
) {
    let d = rho.dim();
    let m = mask(qubit, n_qubits);
    let rd = rho.as_mut_slice();
    let td = tau.as_mut_slice();
    for c0 in (0..d).filter(|c| c & m == 0) {
        let c1 = c0 | m;
        for r0 in (0..d).filter(|r| r & m == 0) {
            let r1 = r0 | m;
            let idx = [c0 * d + r0, c1 * d + r0, c0 * d + r1, c1 * d + r1];
            let v = [rd[idx[0]], rd[idx[1]], rd[idx[2]], rd[idx[3]]];
            let w = [td[idx[0]], td[idx[1]], td[idx[2]], td[idx[3]]];
            for (k, &i) in idx.iter().enumerate() {
                let mut acc_r = ZERO;
                let mut acc_t = ZERO;
                for l in 0..4 {
                    acc_r += s[(k, l)] * v[l];
                    acc_t += s[(k, l)] * w[l] + ds[(k, l)] * v[l];
                }
                rd[i] = acc_r;
                td[i] = acc_t;
            }
        }
    }
}

/// Matrix of the single-qubit linear map `f` in the row-major vectorization.
pub fn superop_from_map(f: impl Fn(&Op2) -> Op2) -> Superop4 {
    let mut s = Superop4::zeros();
    for a in 0..2 {
        for b in 0..2 {
            let mut e = Op2::zeros();
            e[(a, b)] = ONE;
            let out = f(&e);
            let col = 2 * a + b;
            for r in 0..2 {
                for c in 0..2 {
                    s[(2 * r + c, col)] = out[(r, c)];
                }
            }
        }
    }
    s
}

/// `exp(A)` together with its directional derivative along `B`, from the
/// block-triangular exponential `exp([[A, B], [0, A]])`.
pub fn exp_with_derivative(a: &DMatrix<C64>, b: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = a.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    big.view_mut((0, n), (n, n)).copy_from(b);
    big.view_mut((n, n), (n, n)).copy_from(a);
    let e = big.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, n)).into_owned())
}

pub fn exp_pair2(a: &Op2, b: &Op2) -> (Op2, Op2) {
    let (e, de) = exp_with_derivative(
        &DMatrix::from_column_slice(2, 2, a.as_slice()),
        &DMatrix::from_column_slice(2, 2, b.as_slice()),
    );
    (Op2::from_column_slice(e.as_slice()), Op2::from_column_slice(de.as_slice()))
}

pub fn exp_pair4(a: &Superop4, b: &Superop4) -> (Superop4, Superop4) {
    let (e, de) = exp_with_derivative(
        &DMatrix::from_column_slice(4, 4, a.as_slice()),
        &DMatrix::from_column_slice(4, 4, b.as_slice()),
    );
    (Superop4::from_column_slice(e.as_slice()), Superop4::from_column_slice(de.as_slice()))
}

/// A single-qubit operator placed on one qubit of an `n_qubits` register.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOp {
    pub qubit: usize,
    pub n_qubits: usize,
    pub op: Op2,
}

impl LocalOp {
    pub fn new(op: Op2, qubit: usize, n_qubits: usize) -> Self {
        assert!(qubit < n_qubits, "qubit {qubit} out of range for {n_qubits} qubits");
        Self { qubit, n_qubits, op }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn with_op(&self, op: Op2) -> Self {
        Self { op, ..self.clone() }
    }

    pub fn adjoint(&self) -> Self {
        self.with_op(self.op.adjoint())
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        let d = self.dim();
        let m = mask(self.qubit, self.n_qubits);
        ComplexMatrix::from_fn(d, |r, c| {
            if (r & !m) != (c & !m) {
                return ZERO;
            }
            self.op[(usize::from(r & m != 0), usize::from(c & m != 0))]
        })
    }

    pub fn apply(&self, ket: &Ket) -> Ket {
        let mut out = ket.clone();
        apply_ket_in_place(&self.op, self.qubit, self.n_qubits, out.as_mut_slice());
        out
    }

    /// `dst += s * op src`
    #[inline]
    pub fn accumulate(&self, src: &[C64], s: C64, dst: &mut [C64]) {
        accumulate_ket(&self.op, self.qubit, self.n_qubits, src, s, dst);
    }

    /// `op * mat`
    pub fn left_mul(&self, mat: &ComplexMatrix) -> ComplexMatrix {
        let mut out = mat.clone();
        let d = mat.dim();
        for col in out.as_mut_slice().chunks_exact_mut(d) {
            apply_ket_in_place(&self.op, self.qubit, self.n_qubits, col);
        }
        out
    }

    /// `mat * op^dag`
    pub fn right_mul_adjoint(&self, mat: &ComplexMatrix) -> ComplexMatrix {
        let mut out = mat.clone();
        let d = mat.dim();
        let m = mask(self.qubit, self.n_qubits);
        let (b00, b01, b10, b11) =
            (self.op[(0, 0)].conj(), self.op[(0, 1)].conj(), self.op[(1, 0)].conj(), self.op[(1, 1)].conj());
        let data = out.as_mut_slice();
        for c0 in (0..d).filter(|c| c & m == 0) {
            let c1 = c0 | m;
            for r in 0..d {
                let x0 = data[c0 * d + r];
                let x1 = data[c1 * d + r];
                data[c0 * d + r] = b00 * x0 + b01 * x1;
                data[c1 * d + r] = b10 * x0 + b11 * x1;
            }
        }
        out
    }

    /// `op * mat * op^dag`
    pub fn sandwich(&self, mat: &ComplexMatrix) -> ComplexMatrix {
        self.right_mul_adjoint(&self.left_mul(mat))
    }

    /// `Tr[op * mat]`
    pub fn trace_with(&self, mat: &ComplexMatrix) -> C64 {
        let d = mat.dim();
        let m = mask(self.qubit, self.n_qubits);
        let mut acc = ZERO;
        for r0 in (0..d).filter(|r| r & m == 0) {
            let r1 = r0 | m;
            acc += self.op[(0, 0)] * mat[(r0, r0)]
                + self.op[(0, 1)] * mat[(r1, r0)]
                + self.op[(1, 0)] * mat[(r0, r1)]
                + self.op[(1, 1)] * mat[(r1, r1)];
        }
        acc
    }

    /// `⟨psi|op|psi⟩`
    pub fn expectation(&self, psi: &Ket) -> C64 {
        let mut tmp = vec![ZERO; psi.dim()];
        self.accumulate(psi.as_slice(), ONE, &mut tmp);
        psi.as_slice().iter().zip(&tmp).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
    }

    /// True when the operator is an exact multiple of the identity.
    pub fn is_scalar(&self) -> bool {
        self.op[(0, 1)] == ZERO && self.op[(1, 0)] == ZERO && self.op[(0, 0)] == self.op[(1, 1)]
    }
}
