//! Dense reference recursions built straight from the Kraus operators on the
//! full `2^N` space, independent of the local kernels in the library.

#![allow(dead_code)]

use monqfi_core::model::Register;
use monqfi_core::qops::{embed, op2_to_matrix, ComplexMatrix, C64};
use nalgebra::DMatrix;

pub type Dense = DMatrix<C64>;

pub struct DenseRegister {
    pub h: Dense,
    pub c: Vec<Dense>,
}

pub fn dense(reg: &Register) -> DenseRegister {
    let n = reg.n_qubits;
    let d = 1 << n;
    let mut h = Dense::zeros(d, d);
    let mut c = Vec::new();
    for q in 0..n {
        h += embed(&op2_to_matrix(&reg.h), q, n).unwrap().as_nalgebra();
        c.push(embed(&op2_to_matrix(&reg.collapse), q, n).unwrap().as_nalgebra().clone());
    }
    DenseRegister { h, c }
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Unnormalized homodyne evolution `ρ -> MρM† + Σ(1-η)cρc†Δt` along a fixed
/// record, with the Milstein-corrected first-order Kraus operator.
pub fn homodyne_unnormalized(reg: &Register, eta: &[f64], dt: f64, rho0: &ComplexMatrix, record: &[Vec<f64>]) -> Dense {
    let d = dense(reg);
    let dim = rho0.dim();
    let mut rho = rho0.as_nalgebra().clone();
    for dy in record {
        let mut m = Dense::identity(dim, dim) - &d.h * C64::new(0.0, dt);
        for (j, cj) in d.c.iter().enumerate() {
            m -= cj.adjoint() * cj * re(0.5 * dt);
            m += cj * re(eta[j].sqrt() * dy[j]);
            for (k, ck) in d.c.iter().enumerate() {
                let w = (eta[j] * eta[k]).sqrt() * (dy[j] * dy[k] - if j == k { dt } else { 0.0 });
                m += cj * ck * re(0.5 * w);
            }
        }
        let mut next = &m * &rho * m.adjoint();
        for (j, cj) in d.c.iter().enumerate() {
            next += cj * &rho * cj.adjoint() * re((1.0 - eta[j]) * dt);
        }
        rho = next;
    }
    rho
}

/// Dense `exp(Δt L0)` on column-stacked matrices,
/// `L0 X = -i(hX - Xh†) + Σ(1-η)cXc†`, `h = H - (i/2)Σc†c`.
pub fn no_click_propagator(d: &DenseRegister, eta: &[f64], dt: f64) -> Dense {
    let dim = d.h.nrows();
    let mut heff = d.h.clone();
    for cj in &d.c {
        heff -= cj.adjoint() * cj * C64::new(0.0, 0.5);
    }
    let mut gen = Dense::zeros(dim * dim, dim * dim);
    for l in 0..dim {
        for k in 0..dim {
            let mut e = Dense::zeros(dim, dim);
            e[(k, l)] = re(1.0);
            let mut out = (&heff * &e - &e * heff.adjoint()) * C64::new(0.0, -1.0);
            for (j, cj) in d.c.iter().enumerate() {
                out += cj * &e * cj.adjoint() * re(1.0 - eta[j]);
            }
            for (idx, v) in out.iter().enumerate() {
                gen[(idx, k + l * dim)] = *v;
            }
        }
    }
    (gen * re(dt)).exp()
}

/// Normalized state and `log p(record)` along a prescribed click record.
pub fn photodetection_record(
    reg: &Register,
    eta: &[f64],
    dt: f64,
    rho0: &ComplexMatrix,
    record: &[Option<usize>],
) -> (Dense, f64) {
    let d = dense(reg);
    let dim = rho0.dim();
    let s = no_click_propagator(&d, eta, dt);
    let mut rho = rho0.as_nalgebra().clone();
    let mut log_p = 0.0;
    for click in record {
        let p: Vec<f64> =
            d.c.iter().enumerate().map(|(j, cj)| eta[j] * dt * (cj.adjoint() * cj * &rho).trace().re).collect();
        let v = Dense::from_column_slice(dim * dim, 1, rho.as_slice());
        let mut next = Dense::from_column_slice(dim, dim, (&s * v).as_slice());
        match click {
            Some(j) => {
                log_p += p[*j].ln();
                next = &d.c[*j] * next * d.c[*j].adjoint();
            }
            None => log_p += (1.0 - p.iter().sum::<f64>()).ln(),
        }
        let tr = next.trace();
        rho = next / tr;
    }
    (rho, log_p)
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &Dense) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
