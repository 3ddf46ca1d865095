//! Assembly of the three convex programs solved inside the SCA loops.
//!
//! The ψ-programs work in power-normalized coordinates `W̃ = W / sqrt(P)`,
//! `G̃ = sqrt(P) G_r`, which leave every product `Φ G_r W` unchanged and
//! turn the power budget into `‖vec W̃‖ ≤ 1`.  Every quadratic constraint is
//! divided by a magnitude taken at the expansion point so the conic rows
//! are of order one.

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::conic::{complex_rows, solve, ConicProblem, LinExpr, SolveResult, VarRole};
use crate::error::{Error, Result};
use crate::linalg::{norm_sq, CMat, CVec, C64};
use crate::metrics::{illumination_power, BeamformingState};
use crate::scenario::PartitionedChannels;
use crate::surrogates::{
    column_minorant, response_minorant, cross_majorant, penalty_linearization, stack_psi,
    u_sensing_linearization, unit_norm_linearization, MajorantData, MinorantData, PsiVector, Slack,
};

/// What the ψ-program maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PsiObjective {
    /// Interference power at the detector, `‖e_r^H Φ G_r W‖²`.
    Interference,
    /// `Σ_ℓ ς²|u^H c_a|²/ω0 · ‖c_r^H Φ G_r W‖²`, a sum of sensing SINR terms.
    SensingSum,
    /// Feasibility refinement: minimize the total normalized constraint shortfall.
    Feasibility,
}

/// Where each quantity lives in an assembled ψ-program.
#[derive(Debug, Clone)]
pub struct PsiLayout {
    pub m: usize,
    pub k: usize,
    pub nr: usize,
    pub psi_offset: usize,
    /// `sqrt(P_max)`: `W = w_scale · W̃`.
    pub w_scale: f64,
    /// `(k, i, s)` for each interference pair; the slacks at
    /// `slack_offset + 2p` and `+1` bound `s·|h_k^T Φ G_r w_i|`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub slack_offset: Option<usize>,
    pub epigraph_offset: Option<usize>,
    pub lambda_s_offset: Option<usize>,
    pub lambda_c_offset: Option<usize>,
    /// Objective normalizer.
    pub objective_scale: f64,
    /// Surrogate of the true objective, in true units (absent for feasibility programs).
    pub objective_minorant: Option<MinorantData>,
    pub scaled_g: CMat,
}

impl PsiLayout {
    pub fn psi_from(&self, x: &[f64]) -> PsiVector {
        let n = self.m * self.k + self.nr;
        let data = CVec::from_fn(n, |j, _| C64::new(x[self.psi_offset + 2 * j], x[self.psi_offset + 2 * j + 1]));
        PsiVector { data, m: self.m, k: self.k, nr: self.nr }
    }

    /// `(W, phi)` in true units.
    pub fn decode(&self, res: &SolveResult) -> (CMat, CVec) {
        let psi = self.psi_from(&res.x);
        let w = CMat::from_column_slice(self.m, self.k, psi.w_block().as_slice()) * C64::from(self.w_scale);
        let phi = psi.x_block().map(|z| z.conj());
        (w, phi)
    }

    /// Feasibility slacks `(λ̄_s, λ̄_c)` in normalized units.
    pub fn lambdas(&self, res: &SolveResult, l: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
        let grab = |off: Option<usize>, n: usize| off.map(|o| res.x[o..o + n].to_vec()).unwrap_or_default();
        (grab(self.lambda_s_offset, l), grab(self.lambda_c_offset, k))
    }

    /// `ψ̃` of a state in this layout's coordinates.
    pub fn encode(&self, state: &BeamformingState) -> PsiVector {
        stack_psi(&(&state.w / C64::from(self.w_scale)), &state.phi)
    }
}

#[derive(Debug, Clone)]
pub struct PsiProblem {
    pub problem: ConicProblem,
    pub layout: PsiLayout,
}

impl PsiProblem {
    pub fn solve(&self) -> Result<SolveResult> {
        solve(&self.problem)
    }
}

/// `(W̃, x)` as real rows of the complex ψ̃ block.
fn psi_rows(m: &CMat, off: usize) -> Vec<LinExpr> {
    complex_rows(m, off, None)
}

/// `scale · (Re{c^H ψ̃} + const)` of a minorant.
fn minorant_affine(mi: &MinorantData, off: usize, scale: f64) -> LinExpr {
    let mut e = LinExpr::default();
    e.add_re_inner(&(&mi.linear * C64::from(scale)), off);
    e.constant = mi.constant * scale;
    e
}

/// `Γ̄` test in normalized form: returns `(α, 1 − β)` with the sensing
/// constraint reading `α Ω ≥ 1 − β`.  `None` if `Γ_s = 0`.
fn sensing_coefficients(l: usize, state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig) -> Option<(f64, f64, f64)> {
    let gamma = cfg.gamma_s[l];
    if gamma <= 0.0 {
        return None;
    }
    let ue = state.u.dotc(&ch.ea).norm_sqr();
    let uc = state.u.dotc(&ch.ca[l]).norm_sqr();
    let omega0 = cfg.detector_power * ue + cfg.noise_s;
    let req = gamma * omega0;
    let alpha = cfg.rcs[l] * uc / req;
    let beta = cfg.rcs[l] * cfg.detector_power * ch.d[l].norm_sqr() * uc / req;
    Some((alpha, 1.0 - beta, omega0))
}

/// Per-pair scaling that balances the two halves of `Π_k(a)ψ0`.
fn pair_scale(h: &CVec, g: &CMat, psi0: &PsiVector, i: usize) -> f64 {
    let x0 = psi0.x_block().norm();
    let hg = CMat::from_fn(g.nrows(), g.ncols(), |n, j| h[n] * g[(n, j)]);
    let wi = psi0.data.rows(i * psi0.m, psi0.m).into_owned();
    let num = if x0 > 0.0 { x0 } else { (psi0.nr as f64).sqrt() };
    let mut den = (&hg * wi).norm();
    if !(den > 0.0) {
        den = hg.norm() / (psi0.k as f64).sqrt();
    }
    if den > 0.0 && den.is_finite() {
        num / den
    } else {
        1.0
    }
}

/// Shared assembly of the interference, sensing-sum and feasibility programs.
pub fn assemble_psi(
    ch: &PartitionedChannels,
    cfg: &ScenarioConfig,
    state_prev: &BeamformingState,
    eps_penalty: f64,
    objective: PsiObjective,
) -> Result<PsiProblem> {
    state_prev.check_dims(ch)?;
    let (m, k, nr, l) = (ch.m(), ch.k(), ch.nr(), ch.l());
    let feas = objective == PsiObjective::Feasibility;
    let w_scale = cfg.p_max.sqrt();
    let g = &ch.gr * C64::from(w_scale);
    let psi0 = stack_psi(&(&state_prev.w / C64::from(w_scale)), &state_prev.phi);
    let dim = m * k + nr;

    let label = match objective {
        PsiObjective::Interference => "psi-interference",
        PsiObjective::SensingSum => "psi-sensing-sum",
        PsiObjective::Feasibility => "psi-feasibility",
    };
    let mut p = ConicProblem::new(label);
    let off = p.add_block("w", VarRole::Psi, 2 * m * k, w_scale);
    p.add_block("x", VarRole::Psi, 2 * nr, 1.0);
    let comm_active = cfg.gamma_c.iter().any(|&g| g > 0.0);
    let mut pairs = Vec::new();
    if comm_active {
        for kk in 0..k {
            for i in (0..k).filter(|&i| i != kk) {
                pairs.push((kk, i, pair_scale(&ch.hr[kk], &g, &psi0, i)));
            }
        }
    }
    let slack_offset = (!pairs.is_empty()).then(|| p.add_block("delta_chi", VarRole::Slack, 2 * pairs.len(), 1.0));
    let (lambda_s_offset, lambda_c_offset) = if feas {
        (
            Some(p.add_block("lambda_s", VarRole::Feasibility, l, 1.0)),
            Some(p.add_block("lambda_c", VarRole::Feasibility, k, 1.0)),
        )
    } else {
        (None, None)
    };

    // power
    let mut w_sel = CMat::zeros(m * k, dim);
    for j in 0..m * k {
        w_sel[(j, j)] = C64::new(1.0, 0.0);
    }
    p.add_soc("power", LinExpr::constant(1.0), psi_rows(&w_sel, off));

    // relaxed modulus
    let x_off = off + 2 * m * k;
    for n in 0..nr {
        p.add_soc(
            &format!("modulus[{n}]"),
            LinExpr::constant(1.0),
            vec![LinExpr::var(x_off + 2 * n, 1.0), LinExpr::var(x_off + 2 * n + 1, 1.0)],
        );
    }

    // sensing
    for ll in 0..l {
        let Some((alpha, rhs, omega0)) = sensing_coefficients(ll, state_prev, ch, cfg) else {
            continue;
        };
        let lam = lambda_s_offset.map(|o| (o + ll, cfg.noise_s / omega0));
        if rhs <= 0.0 && lam.is_none() {
            continue;
        }
        if alpha <= 0.0 {
            match lam {
                Some((idx, coef)) => {
                    let mut e = LinExpr::var(idx, coef);
                    e.constant = -rhs;
                    p.add_nonneg(&format!("sensing[{ll}]"), vec![e]);
                    continue;
                }
                None => return Err(Error::NoSignalEnergy(ll)),
            }
        }
        let mi = response_minorant(&ch.cr[ll], &g, &psi0)?;
        let v = psi_rows(&(&mi.xi1 * C64::from((alpha / 2.0).sqrt())), off);
        let mut s = minorant_affine(&mi, off, alpha);
        s.constant -= rhs;
        if let Some((idx, coef)) = lam {
            s.add_term(idx, coef);
        }
        p.add_squared_norm_bound(&format!("sensing[{ll}]"), v, &s);
    }

    // communication
    let majorants: Vec<MajorantData> = pairs
        .iter()
        .map(|&(kk, i, s)| {
            let a = ch.hr[kk].map(|z| z.conj()) * C64::from(s);
            cross_majorant(&a, i, &g, &psi0)
        })
        .collect::<Result<_>>()?;
    for kk in 0..k {
        let gamma = cfg.gamma_c[kk];
        if gamma <= 0.0 {
            if let Some(o) = lambda_c_offset {
                p.add_nonneg(&format!("comm[{kk}]"), vec![LinExpr::var(o + kk, 1.0)]);
            }
            continue;
        }
        let hc = ch.hr[kk].map(|z| z.conj());
        let mi = column_minorant(&hc, kk, &g, &psi0)?;
        let sig0 = mi.eval(&psi0);
        let leak_vec = CVec::from_fn(nr, |n, _| ch.hr[kk][n] * ch.er[n]);
        let x0 = psi0.x_block();
        let leak0 = cfg.detector_power * leak_vec.dotc(&x0).norm_sqr();
        let intf0: f64 = (0..k)
            .filter(|&i| i != kk)
            .map(|i| {
                let wi = psi0.data.rows(i * m, m).into_owned();
                (hc.map(|z| z.conj()).component_mul(&state_prev.phi).transpose() * &g * wi)[(0, 0)].norm_sqr()
            })
            .sum();
        let noise = cfg.noise_c[kk];
        let d = (gamma * (noise + leak0 + intf0)).max(sig0).max(gamma * noise);
        let mut v = psi_rows(&(&mi.xi1 * C64::from((0.5 / d).sqrt())), off);
        for (pi, &(pk, _, s)) in pairs.iter().enumerate() {
            if pk == kk {
                let coef = (gamma / d).sqrt() / s;
                let so = slack_offset.expect("pairs imply slacks");
                v.push(LinExpr::var(so + 2 * pi, coef));
                v.push(LinExpr::var(so + 2 * pi + 1, coef));
            }
        }
        let mut leak_row = CMat::zeros(1, dim);
        for n in 0..nr {
            leak_row[(0, m * k + n)] = leak_vec[n].conj() * C64::from((gamma * cfg.detector_power / d).sqrt());
        }
        v.extend(psi_rows(&leak_row, off));
        let mut s = minorant_affine(&mi, off, 1.0 / d);
        s.constant -= gamma * noise / d;
        if let Some(o) = lambda_c_offset {
            s.add_term(o + kk, gamma * noise / d);
        }
        p.add_squared_norm_bound(&format!("comm[{kk}]"), v, &s);
    }
    for (pi, (maj, &(kk, i, _))) in majorants.iter().zip(&pairs).enumerate() {
        let so = slack_offset.expect("pairs imply slacks");
        let scale = norm_sq(&(&maj.constraints[0].pi * &psi0.data)) / 4.0 + maj.constraints[0].constant;
        let e = if scale > 0.0 { scale } else { 1.0 };
        for c in &maj.constraints {
            let idx = match c.slack {
                Slack::Rho => so + 2 * pi,
                Slack::Zeta => so + 2 * pi + 1,
            };
            let v = psi_rows(&(&c.pi * C64::from(0.5 / e.sqrt())), off);
            let mut s = LinExpr::var(idx, 1.0 / e);
            s.add_re_inner(&(&c.linear * C64::from(-1.0 / e)), off);
            s.constant = -c.constant / e;
            p.add_squared_norm_bound(&format!("majorant[{kk},{i},{}]", c.rotation), v, &s);
        }
    }

    // objective
    let pen = penalty_linearization(&psi0);
    let pen_weight = if nr > 0 { eps_penalty / nr as f64 } else { 0.0 };
    let mut obj_pen = LinExpr::default();
    obj_pen.add_re_inner(&pen, off);
    let mut epigraph_offset = None;
    let mut objective_scale = 1.0;
    let mut objective_minorant = None;
    match objective {
        PsiObjective::Feasibility => {
            for o in [lambda_s_offset.unwrap(), lambda_c_offset.unwrap()]
                .into_iter()
                .zip([l, k])
                .flat_map(|(o, n)| o..o + n)
            {
                p.objective[o] = -1.0;
                p.add_nonneg(&format!("lambda[{o}]"), vec![LinExpr::var(o, 1.0)]);
            }
            p.add_objective(&obj_pen, pen_weight);
        }
        PsiObjective::Interference | PsiObjective::SensingSum => {
            let (mi, f0) = if objective == PsiObjective::Interference {
                let mi = response_minorant(&ch.er, &g, &psi0)?;
                let f0 = mi.eval(&psi0);
                (mi, f0)
            } else {
                let mut weights = Vec::with_capacity(l);
                for ll in 0..l {
                    let omega0 = cfg.detector_power * state_prev.u.dotc(&ch.ea).norm_sqr() + cfg.noise_s;
                    weights.push(cfg.rcs[ll] * state_prev.u.dotc(&ch.ca[ll]).norm_sqr() / omega0);
                }
                weighted_minorant(&ch.cr, &weights, &g, &psi0)?
            };
            let fs = if f0 > 0.0 { f0 } else { 1.0 };
            objective_scale = fs;
            let t = p.add_block("epigraph", VarRole::Auxiliary, 1, fs);
            epigraph_offset = Some(t);
            let v = psi_rows(&(&mi.xi1 * C64::from(1.0 / fs.sqrt())), off);
            p.add_squared_norm_bound("objective", v, &LinExpr::var(t, 1.0));
            p.objective[t] = -0.5;
            p.add_objective(&minorant_affine(&mi, off, 1.0 / fs), 1.0);
            p.add_objective(&obj_pen, pen_weight);
            objective_minorant = Some(mi);
        }
    }

    Ok(PsiProblem {
        problem: p,
        layout: PsiLayout {
            m,
            k,
            nr,
            psi_offset: off,
            w_scale,
            pairs,
            slack_offset,
            epigraph_offset,
            lambda_s_offset,
            lambda_c_offset,
            objective_scale,
            objective_minorant,
            scaled_g: g,
        },
    })
}

/// `Σ_ℓ w_ℓ Ω(c_r,ℓ)` folded into one minorant; also returns its value at ψ0.
fn weighted_minorant(cr: &[CVec], weights: &[f64], g: &CMat, psi0: &PsiVector) -> Result<(MinorantData, f64)> {
    let dim = psi0.len();
    let mut rows: Vec<CMat> = Vec::new();
    let mut linear = CVec::zeros(dim);
    let mut constant = 0.0;
    for (c, &w) in cr.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        let mi = response_minorant(c, g, psi0)?;
        rows.push(&mi.xi1 * C64::from(w.sqrt()));
        linear += &mi.linear * C64::from(w);
        constant += w * mi.constant;
    }
    let total_rows: usize = rows.iter().map(|r| r.nrows()).sum();
    let mut xi1 = CMat::zeros(total_rows.max(1), dim);
    let mut at = 0;
    for r in rows {
        xi1.rows_mut(at, r.nrows()).copy_from(&r);
        at += r.nrows();
    }
    let mi = MinorantData { xi1, linear, constant };
    let v = mi.eval(psi0);
    Ok((mi, v))
}

/// Maximize the interference minorant plus the modulus penalty.
pub fn assemble_psi_socp(ch: &PartitionedChannels, cfg: &ScenarioConfig, state_prev: &BeamformingState, eps_penalty: f64) -> Result<PsiProblem> {
    assemble_psi(ch, cfg, state_prev, eps_penalty, PsiObjective::Interference)
}

/// Initialization program: minimize the normalized sensing and communication shortfalls.
///
/// `λ̄_s,ℓ` is measured in units of `Γ_s,ℓ σ_s²` and `λ̄_c,k` in units of
/// `Γ_c,k σ̄_c,k²`.
pub fn assemble_init_problem(ch: &PartitionedChannels, cfg: &ScenarioConfig, state_prev: &BeamformingState, eps_penalty: f64) -> Result<PsiProblem> {
    assemble_psi(ch, cfg, state_prev, eps_penalty, PsiObjective::Feasibility)
}

/// How the unit-norm requirement on `u` enters the ℓ1 combiner program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UNormForm {
    /// `‖u‖² ≤ 1` together with the tangent bound `2Re{u_prev^H u} − ‖u_prev‖² ≥ 1`.
    /// With `‖u_prev‖ = 1` this admits only `u = u_prev`.
    Literal,
    /// Scale-free sensing constraints (noise weighted by `‖u‖²`) with the
    /// normalization `Re{u_prev^H u} ≥ 1`; the solution is rescaled to unit norm.
    Homogeneous,
}

#[derive(Debug, Clone)]
pub struct UProblem {
    pub problem: ConicProblem,
    pub u_offset: usize,
    pub na: usize,
    pub form: UNormForm,
}

impl UProblem {
    /// Solver output as a unit-norm combiner.
    pub fn decode(&self, res: &SolveResult) -> CVec {
        let u = CVec::from_fn(self.na, |i, _| C64::new(res.x[self.u_offset + 2 * i], res.x[self.u_offset + 2 * i + 1]));
        let n = u.norm();
        if n > 0.0 {
            u / C64::from(n)
        } else {
            u
        }
    }
}

/// Minimize `‖u‖₁` under linearized sensing constraints.
pub fn assemble_u_l1(ch: &PartitionedChannels, cfg: &ScenarioConfig, state: &BeamformingState, u_prev: &CVec, form: UNormForm) -> Result<UProblem> {
    let na = ch.na();
    if na == 0 {
        return Err(Error::EmptyAbsorptiveSet);
    }
    if u_prev.len() != na {
        return Err(Error::Dimension(format!("u_prev has length {}, N_a = {na}", u_prev.len())));
    }
    let mut p = ConicProblem::new("u-l1");
    let uo = p.add_block("u", VarRole::Combiner, 2 * na, 1.0);
    let to = p.add_block("abs_u", VarRole::Auxiliary, na, 1.0);
    for i in 0..na {
        p.objective[to + i] = -1.0;
        p.add_soc(
            &format!("abs[{i}]"),
            LinExpr::var(to + i, 1.0),
            vec![LinExpr::var(uo + 2 * i, 1.0), LinExpr::var(uo + 2 * i + 1, 1.0)],
        );
    }
    for ll in 0..ch.l() {
        if cfg.gamma_s[ll] <= 0.0 {
            continue;
        }
        let beam = illumination_power(ll, state, ch);
        let lin = u_sensing_linearization(
            ll,
            u_prev,
            &ch.ca[ll],
            beam,
            ch.d[ll],
            cfg.rcs[ll],
            cfg.detector_power,
            cfg.noise_s,
            cfg.gamma_s[ll],
        )?;
        let p0 = -lin.lhs.constant;
        let norm = if p0 > 0.0 { p0 } else { 1.0 };
        let mut v = complex_rows(&(CMat::from_row_slice(1, ch.na(), ch.ea.conjugate().as_slice()) * C64::from((lin.rhs_weight / norm).sqrt())), uo, None);
        let mut s = LinExpr::default();
        s.add_re_inner(&(&lin.lhs.coeff * C64::from(2.0 / norm)), uo);
        s.constant = lin.lhs.constant / norm;
        match form {
            UNormForm::Homogeneous => {
                let c = (lin.rhs_const / norm).sqrt();
                for j in 0..2 * na {
                    v.push(LinExpr::var(uo + j, c));
                }
            }
            UNormForm::Literal => s.constant -= lin.rhs_const / norm,
        }
        p.add_squared_norm_bound(&format!("sensing[{ll}]"), v, &s);
    }
    match form {
        UNormForm::Homogeneous => {
            let mut e = LinExpr::default();
            e.add_re_inner(u_prev, uo);
            e.constant = -1.0;
            p.add_nonneg("scale", vec![e]);
        }
        UNormForm::Literal => {
            p.add_soc("norm-upper", LinExpr::constant(1.0), (0..2 * na).map(|j| LinExpr::var(uo + j, 1.0)).collect());
            let lin = unit_norm_linearization(u_prev)?;
            let mut e = LinExpr::default();
            e.add_re_inner(&(&lin.coeff * C64::from(2.0)), uo);
            e.constant = lin.constant - 1.0;
            p.add_nonneg("norm-lower", vec![e]);
        }
    }
    Ok(UProblem { problem: p, u_offset: uo, na, form })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{ConeKind, SolveStatus};
    use crate::scenario::{build_scenario, partition_channels, ElementPartition};

    fn desk_instance(seed: u64) -> (PartitionedChannels, ScenarioConfig, BeamformingState) {
        let mut cfg = ScenarioConfig::desk();
        cfg.seed = seed;
        let sc = build_scenario(&cfg).unwrap();
        let ch = partition_channels(&sc.channels, &sc.partition).unwrap();
        let (m, k) = (ch.m(), ch.k());
        let w = CMat::from_fn(m, k, |i, j| C64::from_polar((cfg.p_max / (m * k) as f64).sqrt(), (i + 2 * j) as f64));
        let state = BeamformingState {
            w,
            phi: CVec::from_element(ch.nr(), C64::new(1.0, 0.0)),
            u: CVec::from_fn(ch.na(), |i, _| C64::new(1.0 / (ch.na() as f64).sqrt(), 0.0) * C64::from_polar(1.0, i as f64)),
        };
        (ch, cfg, state)
    }

    #[test]
    fn variable_count_at_reference_dimensions() {
        let cfg = ScenarioConfig::default();
        let sc = build_scenario(&cfg).unwrap();
        let ch = partition_channels(&sc.channels, &ElementPartition::leading(64, 40).unwrap()).unwrap();
        let state = BeamformingState {
            w: CMat::from_element(4, 4, C64::new(1.0, 0.0)),
            phi: CVec::from_element(40, C64::new(1.0, 0.0)),
            u: CVec::from_element(24, C64::new(0.2, 0.0)),
        };
        let pp = assemble_psi_socp(&ch, &cfg, &state, 1e-3).unwrap();
        let core: usize = pp
            .problem
            .blocks
            .iter()
            .filter(|b| matches!(b.role, VarRole::Psi | VarRole::Slack))
            .map(|b| b.len)
            .sum();
        assert_eq!(core, 136);
        pp.problem.validate().unwrap();
    }

    #[test]
    fn every_constraint_is_a_cone() {
        let (ch, cfg, state) = desk_instance(2);
        for obj in [PsiObjective::Interference, PsiObjective::SensingSum, PsiObjective::Feasibility] {
            let pp = assemble_psi(&ch, &cfg, &state, 1e-3, obj).unwrap();
            pp.problem.validate().unwrap();
            for c in &pp.problem.constraints {
                assert!(c.kind == ConeKind::NonNeg || c.rows.len() >= 2);
            }
        }
    }

    #[test]
    fn u_literal_form_pins_the_combiner() {
        let (ch, mut cfg, state) = desk_instance(3);
        cfg.gamma_s = vec![0.0; ch.l()];
        let u = state.u.clone();
        let up = assemble_u_l1(&ch, &cfg, &state, &u, UNormForm::Literal).unwrap();
        let res = solve(&up.problem).unwrap();
        if res.status == SolveStatus::Optimal {
            assert!((up.decode(&res) - &u).norm() < 1e-3);
        }
    }

    #[test]
    fn u_without_sensing_concentrates_on_one_entry() {
        let (ch, mut cfg, mut state) = desk_instance(4);
        cfg.gamma_s = vec![0.0; ch.l()];
        // a strict peak makes the minimizer unique
        state.u[2] *= C64::from(2.0);
        state.u /= C64::from(state.u.norm());
        let up = assemble_u_l1(&ch, &cfg, &state, &state.u, UNormForm::Homogeneous).unwrap();
        let res = solve(&up.problem).unwrap().require_optimal(&up.problem).unwrap();
        let u = up.decode(&res);
        assert!((u.norm() - 1.0).abs() < 1e-9);
        let l1: f64 = u.iter().map(|z| z.norm()).sum();
        assert!((l1 - 1.0).abs() < 1e-5, "ℓ1 norm {l1}");
        assert!(u[2].norm() > 1.0 - 1e-5);
    }

    #[test]
    fn u_rejects_zero_expansion_point() {
        let (ch, cfg, state) = desk_instance(5);
        let zero = CVec::zeros(ch.na());
        assert!(assemble_u_l1(&ch, &cfg, &state, &zero, UNormForm::Literal).is_err());
    }
}
