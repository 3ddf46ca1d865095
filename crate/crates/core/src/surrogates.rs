//! SCA bounds in the stacked variable `ψ = [vec(W); conj(diag Φ)]`.
//!
//! Every bilinear quantity `a^H Φ G w_k` is written as `x^H A^H G w_k`
//! with `x = conj(diag Φ)` and `A = diag(a)`, i.e. `(B x)^H w_k` where
//! `B = G^H A`.  The bounds below are then quadratic forms in `ψ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, CMat, CVec, C64, J};

/// `ψ = [vec(W); conj(phi)]` together with its block sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiVector {
    pub data: CVec,
    pub m: usize,
    pub k: usize,
    pub nr: usize,
}

impl PsiVector {
    pub fn len(&self) -> usize {
        self.m * self.k + self.nr
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `vec(W)`.
    pub fn w_block(&self) -> CVec {
        self.data.rows(0, self.m * self.k).into_owned()
    }

    /// `x = conj(diag Φ)`.
    pub fn x_block(&self) -> CVec {
        self.data.rows(self.m * self.k, self.nr).into_owned()
    }

    pub fn from_data(data: CVec, m: usize, k: usize, nr: usize) -> Result<Self> {
        if data.len() != m * k + nr {
            return Err(Error::Dimension(format!("ψ has length {}, expected {}", data.len(), m * k + nr)));
        }
        Ok(Self { data, m, k, nr })
    }
}

pub fn stack_psi(w: &CMat, phi: &CVec) -> PsiVector {
    let (m, k) = w.shape();
    let nr = phi.len();
    let mut data = CVec::zeros(m * k + nr);
    data.rows_mut(0, m * k).copy_from_slice(w.as_slice());
    for (i, p) in phi.iter().enumerate() {
        data[m * k + i] = p.conj();
    }
    PsiVector { data, m, k, nr }
}

pub fn unstack_psi(psi: &PsiVector) -> Result<(CMat, CVec)> {
    if psi.data.len() != psi.len() {
        return Err(Error::Dimension(format!("ψ has length {}, expected {}", psi.data.len(), psi.len())));
    }
    let w = CMat::from_column_slice(psi.m, psi.k, psi.data.rows(0, psi.m * psi.k).as_slice());
    let phi = psi.x_block().map(|z| z.conj());
    Ok((w, phi))
}

/// `y_k = a^H Φ G w_k` for every user, evaluated at `ψ`.
pub fn cascade(a: &CVec, g: &CMat, psi: &PsiVector) -> Result<CVec> {
    check_dims(a, g, psi)?;
    let (w, phi) = unstack_psi(psi)?;
    Ok(crate::metrics::cascaded_response(a, &phi, g, &w))
}

fn check_dims(a: &CVec, g: &CMat, psi: &PsiVector) -> Result<()> {
    if a.len() != psi.nr || g.shape() != (psi.nr, psi.m) || psi.data.len() != psi.len() {
        return Err(Error::Dimension(format!(
            "a has length {}, G is {:?}, ψ blocks (M={}, K={}, N_r={})",
            a.len(),
            g.shape(),
            psi.m,
            psi.k,
            psi.nr
        )));
    }
    Ok(())
}

fn check_user(k: usize, psi: &PsiVector) -> Result<()> {
    if k >= psi.k {
        return Err(Error::IndexOutOfRange { index: k, len: psi.k });
    }
    Ok(())
}

/// `B = G^H diag(a)`, M x N_r.
fn b_matrix(a: &CVec, g: &CMat) -> CMat {
    let mut b = g.adjoint();
    for (j, mut col) in b.column_iter_mut().enumerate() {
        col *= a[j];
    }
    b
}

/// `[coeffs ⊗ I_M, sign·B]`: maps `ψ` to `Σ_k coeffs_k w_k + sign·B x`.
fn split_operator(coeffs: &[C64], b: &CMat, sign: f64) -> CMat {
    let m = b.nrows();
    let k = coeffs.len();
    let nr = b.ncols();
    let mut out = CMat::zeros(m, m * k + nr);
    for (kk, &r) in coeffs.iter().enumerate() {
        for i in 0..m {
            out[(i, kk * m + i)] = r;
        }
    }
    out.columns_mut(m * k, nr).copy_from(&(b * C64::from(sign)));
    out
}

/// Concave quadratic `−½‖Ξ₁ψ‖² + Re{c^H ψ} + const`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorantData {
    pub xi1: CMat,
    pub linear: CVec,
    pub constant: f64,
}

impl MinorantData {
    pub fn eval(&self, psi: &PsiVector) -> f64 {
        let q = norm_sq(&(&self.xi1 * &psi.data));
        -0.5 * q + self.linear.dotc(&psi.data).re + self.constant
    }

    fn build(coeffs: Vec<C64>, b: &CMat, psi0: &PsiVector) -> Self {
        let xi1 = split_operator(&coeffs, b, -1.0);
        let xi2 = split_operator(&coeffs, b, 1.0);
        let xi2_psi0 = &xi2 * &psi0.data;
        let r_sq: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum();
        Self {
            linear: xi2.adjoint() * &xi2_psi0,
            constant: -0.5 * norm_sq(&xi2_psi0) - r_sq,
            xi1,
        }
    }
}

/// Concave minorant of `‖a^H Φ G W‖²`, tight at `psi0`.
pub fn response_minorant(a: &CVec, g: &CMat, psi0: &PsiVector) -> Result<MinorantData> {
    check_dims(a, g, psi0)?;
    if psi0.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::DegenerateExpansion("ψ0 is not finite".into()));
    }
    let b = b_matrix(a, g);
    let w0 = CMat::from_column_slice(psi0.m, psi0.k, psi0.w_block().as_slice());
    let r = w0.adjoint() * (&b * psi0.x_block());
    Ok(MinorantData::build(r.iter().copied().collect(), &b, psi0))
}

/// Concave minorant of `|a^H Φ G w_k|²`, tight at `psi0`.
pub fn column_minorant(a: &CVec, k: usize, g: &CMat, psi0: &PsiVector) -> Result<MinorantData> {
    check_dims(a, g, psi0)?;
    check_user(k, psi0)?;
    let b = b_matrix(a, g);
    let w0k = psi0.data.rows(k * psi0.m, psi0.m).into_owned();
    let rk = w0k.dotc(&(&b * psi0.x_block()));
    let mut coeffs = vec![C64::new(0.0, 0.0); psi0.k];
    coeffs[k] = rk;
    Ok(MinorantData::build(coeffs, &b, psi0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slack {
    /// Bounds `|Re{a^H Φ G w_k}|`.
    Rho,
    /// Bounds `|Im{a^H Φ G w_k}|`.
    Zeta,
}

/// Convex quadratic `Λ(ψ) = ¼‖Πψ‖² + Re{c^H ψ} + const`; the constraint is `slack ≥ Λ(ψ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaConstraint {
    pub slack: Slack,
    /// The multiplier of `a` this piece was built for (`1, −1, j, −j`).
    pub rotation: C64,
    pub pi: CMat,
    pub linear: CVec,
    pub constant: f64,
}

impl LambdaConstraint {
    pub fn eval(&self, psi: &PsiVector) -> f64 {
        0.25 * norm_sq(&(&self.pi * &psi.data)) + self.linear.dotc(&psi.data).re + self.constant
    }
}

/// Four convex constraints whose feasible slacks satisfy
/// `ρ² + ζ² ≥ |a^H Φ G w_k|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorantData {
    pub k: usize,
    pub constraints: [LambdaConstraint; 4],
}

impl MajorantData {
    /// Smallest slacks `(ρ, ζ)` feasible at `ψ`.
    pub fn minimal_slacks(&self, psi: &PsiVector) -> (f64, f64) {
        let mut rho = f64::NEG_INFINITY;
        let mut zeta = f64::NEG_INFINITY;
        for c in &self.constraints {
            let v = c.eval(psi);
            match c.slack {
                Slack::Rho => rho = rho.max(v),
                Slack::Zeta => zeta = zeta.max(v),
            }
        }
        (rho, zeta)
    }
}

/// `Π_k(a) = [δ_k^T ⊗ (A^* G), I]`: maps `ψ` to `conj(a) ⊙ (G w_k) + x`.
pub fn pi_operator(a: &CVec, k: usize, g: &CMat, m: usize, kk: usize) -> CMat {
    let nr = a.len();
    let mut out = CMat::zeros(nr, m * kk + nr);
    for n in 0..nr {
        let ac = a[n].conj();
        for i in 0..m {
            out[(n, k * m + i)] = ac * g[(n, i)];
        }
        out[(n, m * kk + n)] = C64::new(1.0, 0.0);
    }
    out
}

/// Convex majorant pieces for `|a^H Φ G w_k|²`.
pub fn cross_majorant(a: &CVec, k: usize, g: &CMat, psi0: &PsiVector) -> Result<MajorantData> {
    check_dims(a, g, psi0)?;
    check_user(k, psi0)?;
    let one = C64::new(1.0, 0.0);
    let rotations = [(Slack::Rho, one), (Slack::Rho, -one), (Slack::Zeta, J), (Slack::Zeta, -J)];
    let constraints = rotations.map(|(slack, rot)| {
        let pa = pi_operator(&(a * rot), k, g, psi0.m, psi0.k);
        let pm = pi_operator(&(a * (-rot)), k, g, psi0.m, psi0.k);
        let pm_psi0 = &pm * &psi0.data;
        LambdaConstraint {
            slack,
            rotation: rot,
            linear: pm.adjoint() * &pm_psi0 * C64::new(-0.5, 0.0),
            constant: 0.25 * norm_sq(&pm_psi0),
            pi: pa,
        }
    });
    Ok(MajorantData { k, constraints })
}

/// Affine function `2 Re{coeff^H u} + constant` of the combiner.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineU {
    pub coeff: CVec,
    pub constant: f64,
}

impl AffineU {
    pub fn eval(&self, u: &CVec) -> f64 {
        2.0 * self.coeff.dotc(u).re + self.constant
    }
}

/// Linearized sensing constraint on `u` at one location:
/// `lhs(u) ≥ rhs_weight·|u^H e_a|² + rhs_const`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingLinearization {
    /// `2Re{u_prev^H c_a c_a^H u} − |c_a^H u_prev|²`.
    pub lhs: AffineU,
    pub rhs_weight: f64,
    pub rhs_const: f64,
}

impl SensingLinearization {
    /// `lhs − rhs` at `u`; non-negative when the constraint holds.
    pub fn slack(&self, u: &CVec, e_a: &CVec) -> f64 {
        self.lhs.eval(u) - self.rhs_weight * e_a.dotc(u).norm_sqr() - self.rhs_const
    }
}

/// Linearization of `|c_a^H u|²` around `u_prev`, with the sensing
/// requirement divided by the fixed beam energy reaching location `l`.
///
/// `beam` is `‖c_r^H Φ G_r W‖²` at the current `(W, Φ)`.
#[allow(clippy::too_many_arguments)]
pub fn u_sensing_linearization(
    l: usize,
    u_prev: &CVec,
    c_a: &CVec,
    beam: f64,
    d: C64,
    rcs: f64,
    detector_power: f64,
    noise_s: f64,
    gamma_s: f64,
) -> Result<SensingLinearization> {
    if u_prev.len() != c_a.len() {
        return Err(Error::Dimension(format!("u has length {}, c_a {}", u_prev.len(), c_a.len())));
    }
    let den = rcs * (beam + detector_power * d.norm_sqr());
    if !(den > 0.0) {
        return Err(Error::NoSignalEnergy(l));
    }
    let proj = c_a.dotc(u_prev);
    Ok(SensingLinearization {
        lhs: AffineU { coeff: c_a * proj, constant: -proj.norm_sqr() },
        rhs_weight: gamma_s * detector_power / den,
        rhs_const: gamma_s * noise_s / den,
    })
}

/// `2Re{u_prev^H u} − ‖u_prev‖²`, to be kept `≥ 1` next to `‖u‖² ≤ 1`.
pub fn unit_norm_linearization(u_prev: &CVec) -> Result<AffineU> {
    let n = norm_sq(u_prev);
    if !(n > 0.0) {
        return Err(Error::DegenerateExpansion("linearizing ‖u‖² at u = 0".into()));
    }
    Ok(AffineU { coeff: u_prev.clone(), constant: -n })
}

/// Coefficient `c` of `H̄(ψ) = Re{c^H ψ}`: the previous phase block, zero on `W`.
pub fn penalty_linearization(psi_prev: &PsiVector) -> CVec {
    let mut c = CVec::zeros(psi_prev.len());
    let off = psi_prev.m * psi_prev.k;
    c.rows_mut(off, psi_prev.nr).copy_from(&psi_prev.x_block());
    c
}

/// `2Re{v0^H v} − ‖v0‖²`, the tangent lower bound of `‖v‖²`.
pub fn norm_sq_tangent(v: &CVec, v0: &CVec) -> f64 {
    2.0 * v0.dotc(v).re - norm_sq(v0)
}

/// `Re{v1^H v2}` through the polarization identity.
pub fn re_inner_polarized(v1: &CVec, v2: &CVec) -> f64 {
    0.25 * (norm_sq(&(v1 + v2)) - norm_sq(&(v1 - v2)))
}

/// `Im{v1^H v2}` through the polarization identity.
pub fn im_inner_polarized(v1: &CVec, v2: &CVec) -> f64 {
    let jv2 = v2 * J;
    0.25 * (norm_sq(&(v1 - &jv2)) - norm_sq(&(v1 + &jv2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, kron, vec_of};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
        c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> CVec {
        CVec::from_fn(n, |_, _| rand_c(rng))
    }

    fn rand_mat(r: usize, c: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_fn(r, c, |_, _| rand_c(rng))
    }

    fn rand_psi(m: usize, k: usize, nr: usize, rng: &mut ChaCha8Rng) -> PsiVector {
        stack_psi(&rand_mat(m, k, rng), &rand_vec(nr, rng))
    }

    #[test]
    fn stack_conjugates_phase_block() {
        let w = CMat::from_element(1, 1, c64(2.0, 0.0));
        let phi = CVec::from_element(1, c64(0.0, 1.0));
        let psi = stack_psi(&w, &phi);
        assert_eq!(psi.data.as_slice(), &[c64(2.0, 0.0), c64(0.0, -1.0)]);
        let (w2, phi2) = unstack_psi(&psi).unwrap();
        assert_eq!(w2, w);
        assert_eq!(phi2, phi);
    }

    #[test]
    fn reference_dimension() {
        let psi = stack_psi(&CMat::zeros(4, 4), &CVec::zeros(40));
        assert_eq!(psi.len(), 56);
        assert!(PsiVector::from_data(CVec::zeros(5), 2, 2, 2).is_err());
    }

    #[test]
    fn minorant_of_zero_channel_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = rand_mat(4, 2, &mut rng);
        let psi0 = rand_psi(2, 2, 4, &mut rng);
        let psi = rand_psi(2, 2, 4, &mut rng);
        let om = response_minorant(&CVec::zeros(4), &g, &psi0).unwrap();
        assert_relative_eq!(om.eval(&psi), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn minorant_dimension_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = rand_mat(4, 2, &mut rng);
        let psi0 = rand_psi(2, 2, 4, &mut rng);
        assert!(response_minorant(&CVec::zeros(3), &g, &psi0).is_err());
        assert!(column_minorant(&CVec::zeros(4), 2, &g, &psi0).is_err());
        assert!(cross_majorant(&CVec::zeros(4), 5, &g, &psi0).is_err());
    }

    #[test]
    fn column_minorant_matches_response_minorant_for_single_user() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = rand_mat(3, 2, &mut rng);
        let a = rand_vec(3, &mut rng);
        let psi0 = rand_psi(2, 1, 3, &mut rng);
        let l1 = response_minorant(&a, &g, &psi0).unwrap();
        let c2 = column_minorant(&a, 0, &g, &psi0).unwrap();
        assert_relative_eq!(l1.eval(&psi0), c2.eval(&psi0), max_relative = 1e-12);
    }

    #[test]
    fn majorant_zero_channel_still_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = rand_mat(4, 2, &mut rng);
        let psi0 = rand_psi(2, 2, 4, &mut rng);
        let psi = rand_psi(2, 2, 4, &mut rng);
        let maj = cross_majorant(&CVec::zeros(4), 1, &g, &psi0).unwrap();
        let (rho, zeta) = maj.minimal_slacks(&psi);
        assert!(rho >= -1e-12 && zeta >= -1e-12);
    }

    #[test]
    fn vec_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v1 = rand_mat(3, 4, &mut rng);
        let v2 = rand_mat(4, 2, &mut rng);
        let lhs = vec_of(&(&v1 * &v2));
        let rhs = kron(&v2.transpose(), &CMat::identity(3, 3)) * vec_of(&v1);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn u_linearization_tight_at_expansion_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = rand_vec(4, &mut rng);
        let u0 = rand_vec(4, &mut rng);
        let lin = u_sensing_linearization(0, &u0, &c, 1.0, c64(0.1, 0.0), 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(lin.lhs.eval(&u0), c.dotc(&u0).norm_sqr(), max_relative = 1e-12);
        let zero = u_sensing_linearization(0, &u0, &CVec::zeros(4), 1.0, c64(0.1, 0.0), 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(zero.lhs.eval(&rand_vec(4, &mut rng)), 0.0);
        assert!(matches!(
            u_sensing_linearization(3, &u0, &c, 0.0, c64(0.0, 0.0), 1.0, 1.0, 1.0, 1.0),
            Err(Error::NoSignalEnergy(3))
        ));
    }

    #[test]
    fn unit_norm_linearization_cases() {
        let u0 = CVec::from_vec(vec![c64(0.6, 0.0), c64(0.0, 0.8)]);
        let lin = unit_norm_linearization(&u0).unwrap();
        assert_relative_eq!(lin.eval(&u0), 1.0, epsilon = 1e-15);
        assert!(unit_norm_linearization(&CVec::zeros(2)).is_err());
    }

    #[test]
    fn penalty_tight_for_unit_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let phi = CVec::from_fn(5, |_, _| C64::from_polar(1.0, rng.random_range(0.0..6.0)));
        let psi = stack_psi(&rand_mat(2, 2, &mut rng), &phi);
        let c = penalty_linearization(&psi);
        let hbar = c.dotc(&psi.data).re;
        assert_relative_eq!(2.0 * hbar - 5.0, 5.0, epsilon = 1e-12);
        let zero = stack_psi(&rand_mat(2, 2, &mut rng), &CVec::zeros(5));
        assert_eq!(c.dotc(&zero.data).re, 0.0);
    }
}
