//! Complex linear-algebra helpers shared by every module.
//!
//! Conventions fixed for the whole crate:
//! - `vec(.)` is column-major (first index fastest).
//! - A complex vector `z ∈ C^n` is lifted to `R^{2n}` by interleaving
//!   `[Re z_0, Im z_0, Re z_1, Im z_1, ...]`.  With this layout
//!   `Re{c^H z} = lift(c) · lift(z)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const J: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn norm_sq(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn diag(v: &CVec) -> CMat {
    CMat::from_diagonal(v)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            for p in 0..br {
                for q in 0..bc {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Column-major vectorization.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &[C64], rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v)
}

/// Canonical basis vector `δ_k` of length `n` as a row.
pub fn selector_row(k: usize, n: usize) -> CMat {
    let mut r = CMat::zeros(1, n);
    r[(0, k)] = C64::new(1.0, 0.0);
    r
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Interleaved real lifting of a complex vector.
pub fn lift(v: &CVec) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * v.len());
    for z in v.iter() {
        out.push(z.re);
        out.push(z.im);
    }
    out
}

pub fn unlift(x: &[f64]) -> CVec {
    assert!(x.len() % 2 == 0, "lifted vector must have even length");
    CVec::from_iterator(x.len() / 2, x.chunks(2).map(|p| C64::new(p[0], p[1])))
}

/// Real lifting of a complex linear map `F`: returns `R` (2m x 2n) with
/// `lift(F z) = R lift(z)`.
pub fn lift_matrix(f: &CMat) -> DMatrix<f64> {
    let (m, n) = f.shape();
    let mut r = DMatrix::zeros(2 * m, 2 * n);
    for i in 0..m {
        for j in 0..n {
            let a = f[(i, j)];
            r[(2 * i, 2 * j)] = a.re;
            r[(2 * i, 2 * j + 1)] = -a.im;
            r[(2 * i + 1, 2 * j)] = a.im;
            r[(2 * i + 1, 2 * j + 1)] = a.re;
        }
    }
    r
}

pub fn select_rows(m: &CMat, rows: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_entries(v: &CVec, idx: &[usize]) -> CVec {
    CVec::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_matches_complex_product() {
        let f = CMat::from_fn(2, 3, |i, j| c64(i as f64 + 0.5, j as f64 - 1.0));
        let z = CVec::from_fn(3, |i, _| c64(0.3 * i as f64, 1.0 - i as f64));
        let lhs = lift(&(&f * &z));
        let rhs = lift_matrix(&f) * DVector::from_vec(lift(&z));
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn real_inner_product_via_lift() {
        let c = CVec::from_vec(vec![c64(1.0, 2.0), c64(-0.5, 0.25)]);
        let z = CVec::from_vec(vec![c64(0.7, -1.1), c64(2.0, 3.0)]);
        let direct = (c.adjoint() * &z)[(0, 0)].re;
        let lifted: f64 = lift(&c).iter().zip(lift(&z)).map(|(a, b)| a * b).sum();
        assert!((direct - lifted).abs() < 1e-14);
    }

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_watts(40.0) - 10.0).abs() < 1e-12);
        assert!((dbm_to_watts(-70.0) - 1e-10).abs() < 1e-22);
        assert!((db_to_linear(-30.0) - 1e-3).abs() < 1e-15);
        assert!((watts_to_dbm(1.0) - 30.0).abs() < 1e-12);
    }
}
