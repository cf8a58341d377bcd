use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Dense square complex matrix, column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

/// Dense complex state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket(DVector<C64>);

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(dim, dim, f))
    }

    /// Builds from row-major entries; panics if `entries.len()` is not a square.
    pub fn from_rows(entries: &[C64]) -> Self {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        assert_eq!(dim * dim, entries.len(), "entries do not form a square matrix");
        Self(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Self(DMatrix::from_diagonal(&d))
    }

    pub fn from_nalgebra(m: DMatrix<C64>) -> Self {
        assert!(m.is_square(), "ComplexMatrix must be square");
        Self(m)
    }

    pub fn as_nalgebra(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_nalgebra(self) -> DMatrix<C64> {
        self.0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Column-major storage.
    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        self.0.as_slice()
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        self.0.as_mut_slice()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for z in self.0.iter_mut() {
            *z *= s;
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: C64, other: &ComplexMatrix) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += s * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// max |A - A†|
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut m: f64 = 0.0;
        for c in 0..d {
            for r in 0..=c {
                m = m.max((self.0[(r, c)] - self.0[(c, r)].conj()).norm());
            }
        }
        m
    }

    /// Hermitian within `rel_tol * max|A|`.
    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermiticity_defect() <= rel_tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Replaces `A` by `(A + A†)/2`.
    pub fn symmetrize(&mut self) {
        let d = self.dim();
        for c in 0..d {
            self.0[(c, c)].im = 0.0;
            for r in 0..c {
                let avg = (self.0[(r, c)] + self.0[(c, r)].conj()) * 0.5;
                self.0[(r, c)] = avg;
                self.0[(c, r)] = avg.conj();
            }
        }
    }

    pub fn commutator(&self, other: &ComplexMatrix) -> ComplexMatrix {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn apply(&self, ket: &Ket) -> Ket {
        Ket(&self.0 * &ket.0)
    }

    /// Matrix exponential (scaling and squaring with Padé approximants).
    pub fn exp(&self) -> ComplexMatrix {
        Self(self.0.exp())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.0[idx]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Ket {
    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[index] = ONE;
        Self(v)
    }

    pub fn from_vec(amplitudes: Vec<C64>) -> Self {
        Self(DVector::from_vec(amplitudes))
    }

    pub fn from_nalgebra(v: DVector<C64>) -> Self {
        Self(v)
    }

    pub fn as_nalgebra(&self) -> &DVector<C64> {
        &self.0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        self.0.as_slice()
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        self.0.as_mut_slice()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &Ket) -> C64 {
        self.0.iter().zip(other.0.iter()).fold(ZERO, |acc, (a, b)| acc + a.conj() * b)
    }

    /// `|self⟩⟨other|`
    pub fn outer(&self, other: &Ket) -> ComplexMatrix {
        ComplexMatrix(&self.0 * other.0.adjoint())
    }

    pub fn projector(&self) -> ComplexMatrix {
        self.outer(self)
    }

    pub fn scale(&self, s: C64) -> Ket {
        Ket(&self.0 * s)
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for z in self.0.iter_mut() {
            *z *= s;
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: C64, other: &Ket) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += s * b;
        }
    }
}

impl Index<usize> for Ket {
    type Output = C64;
    #[inline]
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Ket {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

impl Add for &Ket {
    type Output = Ket;
    fn add(self, rhs: &Ket) -> Ket {
        Ket(&self.0 + &rhs.0)
    }
}

impl Sub for &Ket {
    type Output = Ket;
    fn sub(self, rhs: &Ket) -> Ket {
        Ket(&self.0 - &rhs.0)
    }
}
