//! SCA loops over `(W, Φ)` and `u`, element reassignment, the two-step
//! initialization and the alternating outer loop.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::conic::{SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::{linear_to_db, CMat, CVec, C64};
use crate::metrics::{
    audit, illumination_power, interference_power, max_detector_sinr, omega_params, BeamformingState,
    FeasibilityReport,
};
use crate::scenario::{build_scenario, partition_channels, ChannelSet, ElementPartition, PartitionedChannels, Scenario};
use crate::subproblems::{assemble_init_problem, assemble_psi, assemble_u_l1, PsiObjective, UNormForm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSettings {
    /// Inner stop: `‖ψ̃(τ) − ψ̃(τ−1)‖²` (power-normalized) or `‖u(τ) − u(τ−1)‖²`.
    pub eps_converge: f64,
    /// Inner stop on the relative gain of the tracked objective.
    pub eps_objective: f64,
    /// Outer stop on the relative interference gain between outer iterations.
    pub eps_outer: f64,
    /// Initial modulus penalty weight, relative to the objective scale.
    pub eps_penalty: f64,
    /// Factor applied to the penalty weight when an inner loop settles with
    /// `max_n ||φ_n| − 1| > modulus_tol`.
    pub penalty_growth: f64,
    pub eps_penalty_max: f64,
    pub modulus_tol: f64,
    /// Reassignment threshold relative to `max_i |u_i|`.
    pub u_zero_thresh: f64,
    pub max_iter_inner: usize,
    pub max_iter_outer: usize,
    pub max_iter_init: usize,
    /// Initialization targets thresholds inflated by this factor.
    pub init_margin: f64,
    /// Accept a ψ iterate only if the true objective drops by less than this (relative).
    pub ascent_tol: f64,
    /// Reject the unit-modulus projection if any SINR margin drops below `-projection_tol`.
    pub projection_tol: f64,
}

impl Default for AlgorithmSettings {
    fn default() -> Self {
        Self {
            eps_converge: 1e-6,
            eps_objective: 1e-5,
            eps_outer: 1e-3,
            eps_penalty: 1e-3,
            penalty_growth: 10.0,
            eps_penalty_max: 10.0,
            modulus_tol: 1e-6,
            u_zero_thresh: 1e-3,
            max_iter_inner: 200,
            max_iter_outer: 5,
            max_iter_init: 30,
            init_margin: 1e-3,
            ascent_tol: 1e-6,
            projection_tol: 1e-4,
        }
    }
}

impl AlgorithmSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.eps_converge, self.eps_objective, self.eps_outer, self.u_zero_thresh];
        if positive.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Config("convergence thresholds must be > 0".into()));
        }
        let non_negative = [self.eps_penalty, self.eps_penalty_max, self.init_margin, self.ascent_tol, self.projection_tol, self.modulus_tol];
        if non_negative.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Config("penalty, margins and tolerances must be >= 0".into()));
        }
        if !(self.penalty_growth >= 1.0) {
            return Err(Error::Config("penalty_growth must be >= 1".into()));
        }
        if self.max_iter_inner == 0 || self.max_iter_outer == 0 || self.max_iter_init == 0 {
            return Err(Error::Config("iteration caps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Init,
    Psi,
    U,
    Baseline,
    /// Penalty continuation towards unit-modulus phases after a ψ loop settles.
    Restore,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Init => "init",
            Stage::Psi => "psi",
            Stage::U => "u",
            Stage::Baseline => "baseline",
            Stage::Restore => "restore",
        }
    }
}

/// Why an inner loop record was written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepStatus {
    Accepted,
    /// Iterate rejected because the true objective dropped.
    NonAscent,
    Infeasible,
    NumericalFailure,
    /// Partition reverted after a reassignment broke a constraint.
    Reverted,
    /// Unit-modulus projection rejected; relaxed phases kept.
    ProjectionRejected,
    /// State after projecting the phases onto the unit circle.
    Projected,
}

impl StepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StepStatus::Accepted => "accepted",
            StepStatus::NonAscent => "non-ascent",
            StepStatus::Infeasible => "infeasible",
            StepStatus::NumericalFailure => "numerical-failure",
            StepStatus::Reverted => "reverted",
            StepStatus::ProjectionRejected => "projection-rejected",
            StepStatus::Projected => "projected",
        }
    }

    fn from_solve(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => StepStatus::Accepted,
            SolveStatus::Infeasible => StepStatus::Infeasible,
            SolveStatus::NumericalFailure => StepStatus::NumericalFailure,
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, StepStatus::Infeasible | StepStatus::NumericalFailure)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub stage: Stage,
    pub outer: usize,
    pub inner: usize,
    /// `‖e_r^H Φ G_r W‖²` (W).
    pub interference: f64,
    pub max_detector_sinr_db: f64,
    pub nr: usize,
    pub sensing_margin: f64,
    pub comm_margin: f64,
    pub power_ratio: f64,
    /// Stage objective: interference, sensing sum, `Σλ̄` or `‖u‖₁`.
    pub objective: f64,
    pub status: StepStatus,
    /// Seconds since the run started; kept out of the CSV.
    pub wall_time: f64,
}

/// Column order of [`RunTrace::to_csv`].
pub const TRACE_COLUMNS: [&str; 11] = [
    "stage",
    "outer",
    "inner",
    "interference_w",
    "max_detector_sinr_db",
    "n_reflecting",
    "sensing_margin",
    "comm_margin",
    "power_ratio",
    "objective",
    "status",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

/// `x` with 6 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else if x.is_finite() {
        let e = x.abs().log10().floor() as i32;
        if (-4..6).contains(&e) {
            let decimals = (5 - e).max(0) as usize;
            let s = format!("{x:.decimals$}");
            if s.contains('.') {
                s.trim_end_matches('0').trim_end_matches('.').to_string()
            } else {
                s
            }
        } else {
            format!("{x:.5e}")
        }
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

impl RunTrace {
    fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    /// Line-per-record CSV with [`TRACE_COLUMNS`]; timing is excluded so
    /// identical runs produce identical bytes.
    pub fn to_csv(&self) -> String {
        let mut s = TRACE_COLUMNS.join(",");
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.stage.as_str(),
                r.outer,
                r.inner,
                fmt_sig(r.interference),
                fmt_sig(r.max_detector_sinr_db),
                r.nr,
                fmt_sig(r.sensing_margin),
                fmt_sig(r.comm_margin),
                fmt_sig(r.power_ratio),
                fmt_sig(r.objective),
                r.status.as_str()
            );
        }
        s
    }

    /// Wall-clock seconds per record, in record order.
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("stage,outer,inner,wall_time_s\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{}", r.stage.as_str(), r.outer, r.inner, fmt_sig(r.wall_time));
        }
        s
    }

    pub fn stage(&self, stage: Stage) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.stage == stage)
    }
}

struct Clock(Instant);

impl Clock {
    fn secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[allow(clippy::too_many_arguments)]
fn record(
    stage: Stage,
    outer: usize,
    inner: usize,
    state: &BeamformingState,
    ch: &PartitionedChannels,
    cfg: &ScenarioConfig,
    objective: f64,
    status: StepStatus,
    clock: &Clock,
) -> TraceRecord {
    let rep = audit(state, ch, cfg).ok();
    TraceRecord {
        stage,
        outer,
        inner,
        interference: interference_power(state, ch),
        max_detector_sinr_db: max_detector_sinr(state, ch, cfg).map(linear_to_db).unwrap_or(f64::NAN),
        nr: ch.nr(),
        sensing_margin: rep.as_ref().map_or(f64::NAN, |r| r.sensing_margin),
        comm_margin: rep.as_ref().map_or(f64::NAN, |r| r.comm_margin),
        power_ratio: rep.as_ref().map_or(f64::NAN, |r| r.power_ratio),
        objective,
        status,
        wall_time: clock.secs(),
    }
}

/// True value of the quantity a ψ-program maximizes.
pub fn psi_objective_value(objective: PsiObjective, state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig) -> f64 {
    match objective {
        PsiObjective::Interference => interference_power(state, ch),
        PsiObjective::SensingSum | PsiObjective::Feasibility => (0..ch.l())
            .map(|l| match omega_params(l, state, ch, cfg) {
                Ok((w0, w1)) => (w1 - w0) / w0,
                Err(_) => 0.0,
            })
            .sum(),
    }
}

/// Result of one inner loop.
#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub state: BeamformingState,
    pub iterations: usize,
    /// A solve failed or an iterate was rejected; the best accepted point is returned.
    pub degraded: bool,
    pub projection_rejected: bool,
}

fn sinr_ok(rep: &FeasibilityReport, tol: f64) -> bool {
    rep.sensing_margin >= -tol && rep.comm_margin >= -tol
}

fn modulus_deviation(phi: &CVec) -> f64 {
    phi.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max)
}

/// Unit-modulus projection of the nonzero phases.
fn project_phases(phi: &CVec) -> CVec {
    phi.map(|z| if z.norm() > 0.0 { z / z.norm() } else { z })
}

/// SCA on `(W, Φ)`; also run with the sensing-sum objective by the baseline.
#[allow(clippy::too_many_arguments)]
fn psi_loop(
    state: &BeamformingState,
    ch: &PartitionedChannels,
    cfg: &ScenarioConfig,
    settings: &AlgorithmSettings,
    objective: PsiObjective,
    stage: Stage,
    outer: usize,
    trace: &mut RunTrace,
    clock: &Clock,
) -> Result<InnerOutcome> {
    let mut cur = state.clone();
    let mut f_cur = psi_objective_value(objective, &cur, ch, cfg);
    let mut degraded = false;
    let mut iterations = 0;
    let mut eps = settings.eps_penalty;
    // Restoration: once the loop settles off the unit circle, grow the
    // penalty; iterates are then judged on f/f_prev + ε/(2N_r)·Δ‖x‖².
    let mut restoring = false;
    let nr = ch.nr().max(1) as f64;
    for tau in 1..=settings.max_iter_inner {
        let st = if restoring { Stage::Restore } else { stage };
        let pp = assemble_psi(ch, cfg, &cur, eps, objective)?;
        let res = pp.solve()?;
        iterations = tau;
        if res.status != SolveStatus::Optimal {
            degraded = true;
            trace.push(record(st, outer, tau, &cur, ch, cfg, f_cur, StepStatus::from_solve(res.status), clock));
            break;
        }
        let (w, phi) = pp.layout.decode(&res);
        let cand = BeamformingState { w, phi, u: cur.u.clone() };
        let f_new = psi_objective_value(objective, &cand, ch, cfg);
        let ascent = if restoring {
            let pen_gain = eps / (2.0 * nr) * (cand.phi.norm_squared() - cur.phi.norm_squared());
            f_new / f_cur.abs().max(f64::MIN_POSITIVE) + pen_gain >= 1.0 - settings.ascent_tol
        } else {
            f_new >= f_cur - settings.ascent_tol * f_cur.abs()
        };
        if !ascent {
            degraded = true;
            trace.push(record(st, outer, tau, &cur, ch, cfg, f_cur, StepStatus::NonAscent, clock));
            break;
        }
        let delta = (pp.layout.encode(&cand).data - pp.layout.encode(&cur).data).norm_squared();
        let gain = if f_cur.abs() > 0.0 { (f_new - f_cur) / f_cur.abs() } else { f64::INFINITY };
        cur = cand;
        f_cur = f_new;
        trace.push(record(st, outer, tau, &cur, ch, cfg, f_cur, StepStatus::Accepted, clock));
        let on_circle = modulus_deviation(&cur.phi) <= settings.modulus_tol;
        if restoring && on_circle {
            break;
        }
        if delta <= settings.eps_converge || (!restoring && gain <= settings.eps_objective) {
            if !on_circle && eps < settings.eps_penalty_max {
                eps = (eps * settings.penalty_growth).min(settings.eps_penalty_max);
                restoring = true;
                continue;
            }
            break;
        }
    }
    let mut projection_rejected = false;
    let projected = BeamformingState { phi: project_phases(&cur.phi), ..cur.clone() };
    if projected.phi != cur.phi {
        let rep = audit(&projected, ch, cfg)?;
        if sinr_ok(&rep, settings.projection_tol) {
            cur = projected;
            f_cur = psi_objective_value(objective, &cur, ch, cfg);
            trace.push(record(stage, outer, iterations, &cur, ch, cfg, f_cur, StepStatus::Projected, clock));
        } else {
            projection_rejected = true;
            trace.push(record(stage, outer, iterations, &cur, ch, cfg, f_cur, StepStatus::ProjectionRejected, clock));
        }
    }
    Ok(InnerOutcome { state: cur, iterations, degraded, projection_rejected })
}

/// SCA on `(W, Φ)` maximizing the detector interference.
pub fn optimize_psi(
    state: &BeamformingState,
    ch: &PartitionedChannels,
    cfg: &ScenarioConfig,
    settings: &AlgorithmSettings,
) -> Result<(InnerOutcome, RunTrace)> {
    let mut trace = RunTrace::default();
    let clock = Clock(Instant::now());
    let out = psi_loop(state, ch, cfg, settings, PsiObjective::Interference, Stage::Psi, 0, &mut trace, &clock)?;
    Ok((out, trace))
}

/// Result of the combiner update and reassignment.
#[derive(Debug, Clone)]
pub struct ReassignOutcome {
    pub state: BeamformingState,
    pub partition: ElementPartition,
    pub channels: PartitionedChannels,
    /// Element indices moved from `A` to `R`.
    pub moved: Vec<usize>,
    pub degraded: bool,
}

/// Positions in `A` whose combiner weight is at most `rel · max_i |u_i|`.
pub fn zero_positions(u: &CVec, rel: f64) -> Vec<usize> {
    let peak = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let thresh = rel * peak;
    u.iter().enumerate().filter(|(_, z)| z.norm() <= thresh).map(|(i, _)| i).collect()
}

/// `phi` over a grown reflecting set, zero on newly added elements.
pub fn expand_phi(phi: &CVec, old: &ElementPartition, new: &ElementPartition) -> CVec {
    let mut out = CVec::zeros(new.nr());
    let mut j = 0;
    for (pos, &idx) in new.reflecting().iter().enumerate() {
        while j < old.nr() && old.reflecting()[j] < idx {
            j += 1;
        }
        if j < old.nr() && old.reflecting()[j] == idx {
            out[pos] = phi[j];
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn u_loop(
    state: &BeamformingState,
    full: &ChannelSet,
    partition: &ElementPartition,
    ch: &PartitionedChannels,
    cfg: &ScenarioConfig,
    settings: &AlgorithmSettings,
    outer: usize,
    trace: &mut RunTrace,
    clock: &Clock,
) -> Result<ReassignOutcome> {
    let mut cur = state.clone();
    let mut degraded = false;
    let unchanged = |s: BeamformingState, degraded| ReassignOutcome {
        state: s,
        partition: partition.clone(),
        channels: ch.clone(),
        moved: vec![],
        degraded,
    };
    if ch.na() == 0 {
        return Ok(unchanged(cur, false));
    }
    let mut inner = 0;
    for tau in 1..=settings.max_iter_inner {
        inner = tau;
        let up = assemble_u_l1(ch, cfg, &cur, &cur.u, UNormForm::Homogeneous)?;
        let res = crate::conic::solve(&up.problem)?;
        if res.status != SolveStatus::Optimal {
            degraded = true;
            let l1 = cur.u.iter().map(|z| z.norm()).sum();
            trace.push(record(Stage::U, outer, tau, &cur, ch, cfg, l1, StepStatus::from_solve(res.status), clock));
            break;
        }
        let u_new = up.decode(&res);
        let cand = BeamformingState { u: u_new, ..cur.clone() };
        let rep = audit(&cand, ch, cfg)?;
        let before = audit(&cur, ch, cfg)?;
        if rep.sensing_margin < before.sensing_margin.min(0.0) - 1e-9 {
            degraded = true;
            let l1 = cur.u.iter().map(|z| z.norm()).sum();
            trace.push(record(Stage::U, outer, tau, &cur, ch, cfg, l1, StepStatus::NonAscent, clock));
            break;
        }
        let delta = (&cand.u - &cur.u).norm_squared();
        cur = cand;
        let l1 = cur.u.iter().map(|z| z.norm()).sum();
        trace.push(record(Stage::U, outer, tau, &cur, ch, cfg, l1, StepStatus::Accepted, clock));
        if delta <= settings.eps_converge {
            break;
        }
    }

    let drop = zero_positions(&cur.u, settings.u_zero_thresh);
    if drop.is_empty() {
        return Ok(unchanged(cur, degraded));
    }
    let mut new_part = partition.clone();
    let moved = new_part.reassign(&drop)?;
    let keep: Vec<usize> = (0..cur.u.len()).filter(|i| !drop.contains(i)).collect();
    let u_kept = CVec::from_iterator(keep.len(), keep.iter().map(|&i| cur.u[i]));
    let norm = u_kept.norm();
    let new_state = BeamformingState {
        w: cur.w.clone(),
        phi: expand_phi(&cur.phi, partition, &new_part),
        u: if norm > 0.0 { u_kept / C64::from(norm) } else { u_kept },
    };
    let new_ch = partition_channels(full, &new_part)?;
    let rep = audit(&new_state, &new_ch, cfg)?;
    let old_rep = audit(&cur, ch, cfg)?;
    if rep.sensing_margin < old_rep.sensing_margin.min(0.0) - 1e-9 {
        trace.push(record(Stage::U, outer, inner, &cur, ch, cfg, f64::NAN, StepStatus::Reverted, clock));
        return Ok(unchanged(cur, true));
    }
    let l1 = new_state.u.iter().map(|z| z.norm()).sum();
    trace.push(record(Stage::U, outer, inner, &new_state, &new_ch, cfg, l1, StepStatus::Accepted, clock));
    Ok(ReassignOutcome { state: new_state, partition: new_part, channels: new_ch, moved, degraded })
}

/// Sparse combiner by SCA on the ℓ1 program, then move the near-zero
/// absorptive elements into the reflecting set.
pub fn optimize_u_and_partition(
    state: &BeamformingState,
    full: &ChannelSet,
    partition: &ElementPartition,
    cfg: &ScenarioConfig,
    settings: &AlgorithmSettings,
) -> Result<(ReassignOutcome, RunTrace)> {
    let ch = partition_channels(full, partition)?;
    let mut trace = RunTrace::default();
    let clock = Clock(Instant::now());
    let out = u_loop(state, full, partition, &ch, cfg, settings, 0, &mut trace, &clock)?;
    Ok((out, trace))
}

/// Principal generalized eigenvector of `(C, ρ² e e^H + σ² I)`, unit norm.
fn generalized_top(c: &CMat, e: &CVec, rho2: f64, sigma2: f64) -> CVec {
    let n = e.len();
    let e_norm2 = e.norm_squared();
    // (σ²I + ρ² e e^H)^{-1/2} in closed form
    let shrink = if e_norm2 > 0.0 { 1.0 - 1.0 / (1.0 + rho2 * e_norm2 / sigma2).sqrt() } else { 0.0 };
    let mut q = CMat::identity(n, n);
    if e_norm2 > 0.0 {
        q -= (e * e.adjoint()) * C64::from(shrink / e_norm2);
    }
    q /= C64::from(sigma2.sqrt());
    let mut m = &q * c * &q;
    m = (&m + m.adjoint()) * C64::from(0.5);
    let eig = SymmetricEigen::new(m);
    let (mut best, mut idx) = (f64::NEG_INFINITY, 0);
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v > best {
            best = v;
            idx = i;
        }
    }
    let y = eig.eigenvectors.column(idx).into_owned();
    let u = &q * y;
    let norm = u.norm();
    let mut u = if norm > 0.0 { u / C64::from(norm) } else { CVec::from_element(n, C64::new(1.0, 0.0)) };
    // fix the global phase so the largest entry is real positive
    let (mut peak, mut at) = (0.0, 0);
    for (i, z) in u.iter().enumerate() {
        if z.norm() > peak {
            peak = z.norm();
            at = i;
        }
    }
    if peak > 0.0 {
        let rot = u[at].conj() / C64::from(peak);
        u *= rot;
    }
    u
}

/// Sensing ratios `SINR_ℓ / Γ_ℓ` of a combiner (locations with `Γ = 0` use 1).
fn sensing_ratios(u: &CVec, state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig) -> Vec<f64> {
    let s = BeamformingState { u: u.clone(), ..state.clone() };
    (0..ch.l())
        .map(|l| {
            let (w0, w1) = omega_params(l, &s, ch, cfg).unwrap_or((1.0, 1.0));
            let g = if cfg.gamma_s[l] > 0.0 { cfg.gamma_s[l] } else { 1.0 };
            (w1 - w0) / w0 / g
        })
        .collect()
}

/// Combiner maximizing the worst sensing ratio, by reweighted generalized
/// eigenvectors.  Exact when `L = 1`.
pub fn best_combiner(state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig) -> CVec {
    let na = ch.na();
    let l = ch.l();
    let gains: Vec<f64> = (0..l)
        .map(|ll| {
            let g = if cfg.gamma_s[ll] > 0.0 { cfg.gamma_s[ll] } else { 1.0 };
            cfg.rcs[ll] * (illumination_power(ll, state, ch) + cfg.detector_power * ch.d[ll].norm_sqr()) / g
        })
        .collect();
    let mut weights = vec![1.0 / l as f64; l];
    let mut best_u = CVec::from_element(na, C64::new(1.0 / (na as f64).sqrt(), 0.0));
    let mut best_min = f64::NEG_INFINITY;
    for _ in 0..40 {
        let mut c = CMat::zeros(na, na);
        for ll in 0..l {
            c += (&ch.ca[ll] * ch.ca[ll].adjoint()) * C64::from(weights[ll] * gains[ll]);
        }
        let u = generalized_top(&c, &ch.ea, cfg.detector_power, cfg.noise_s);
        let ratios = sensing_ratios(&u, state, ch, cfg);
        let worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        if worst > best_min {
            best_min = worst;
            best_u = u;
        }
        let mut total = 0.0;
        for (w, r) in weights.iter_mut().zip(&ratios) {
            *w /= r.max(1e-300);
            total += *w;
        }
        if !(total > 0.0) || !total.is_finite() {
            break;
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
    }
    best_u
}

/// Step-1 point: identity phases, regularized zero-forcing precoder at full
/// power and a detector-suppressing combiner.
pub fn initial_guess(ch: &PartitionedChannels, cfg: &ScenarioConfig) -> BeamformingState {
    let (m, k, nr) = (ch.m(), ch.k(), ch.nr());
    let phi = CVec::from_element(nr, C64::new(1.0, 0.0));
    let h_eff = CMat::from_fn(k, m, |kk, j| (0..nr).map(|n| ch.hr[kk][n] * ch.gr[(n, j)]).sum());
    let reg = k as f64 * cfg.noise_c.iter().sum::<f64>() / k as f64 / cfg.p_max;
    let gram = &h_eff * h_eff.adjoint() + CMat::identity(k, k) * C64::from(reg);
    let mut w = match gram.clone().try_inverse() {
        Some(inv) => h_eff.adjoint() * inv,
        None => h_eff.adjoint(),
    };
    for mut col in w.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= C64::from(n);
        }
    }
    let total = w.norm();
    if total > 0.0 {
        w *= C64::from(cfg.p_max.sqrt() / total);
    }
    let mut state = BeamformingState { w, phi, u: CVec::zeros(ch.na()) };
    if ch.na() > 0 {
        state.u = best_combiner(&state, ch, cfg);
    }
    state
}

fn is_feasible(state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig) -> bool {
    audit(state, ch, cfg).map(|r| sinr_ok(&r, 0.0) && r.power_ratio <= 1.0 + 1e-9).unwrap_or(false)
}

#[derive(Debug, Clone)]
pub struct InitOutcome {
    pub state: BeamformingState,
    pub partition: ElementPartition,
    pub channels: PartitionedChannels,
    /// `Σλ̄` after each refinement iteration (normalized units).
    pub lambda_history: Vec<f64>,
    pub feasible: bool,
}

fn with_margin(cfg: &ScenarioConfig, margin: f64) -> ScenarioConfig {
    let mut c = cfg.clone();
    for g in c.gamma_s.iter_mut().chain(c.gamma_c.iter_mut()) {
        *g *= 1.0 + margin;
    }
    c
}

fn init_loop(
    full: &ChannelSet,
    partition: &ElementPartition,
    cfg: &ScenarioConfig,
    settings: &AlgorithmSettings,
    trace: &mut RunTrace,
    clock: &Clock,
) -> Result<InitOutcome> {
    let ch = partition_channels(full, partition)?;
    let mut state = initial_guess(&ch, cfg);
    let target = with_margin(cfg, settings.init_margin);
    let mut history: Vec<f64> = Vec::new();
    trace.push(record(Stage::Init, 0, 0, &state, &ch, cfg, f64::NAN, StepStatus::Accepted, clock));
    let mut feasible = is_feasible(&state, &ch, cfg);
    let mut stall = 0;
    let mut it = 0;
    while !feasible && it < settings.max_iter_init {
        it += 1;
        if ch.na() > 0 {
            let u = best_combiner(&state, &ch, cfg);
            let old = sensing_ratios(&state.u, &state, &ch, cfg).into_iter().fold(f64::INFINITY, f64::min);
            let new = sensing_ratios(&u, &state, &ch, cfg).into_iter().fold(f64::INFINITY, f64::min);
            if new > old {
                state.u = u;
            }
        }
        let pp = assemble_init_problem(&ch, &target, &state, settings.eps_penalty)?;
        let res: SolveResult = pp.solve()?;
        if res.status != SolveStatus::Optimal {
            trace.push(record(Stage::Init, 0, it, &state, &ch, cfg, f64::NAN, StepStatus::from_solve(res.status), clock));
            break;
        }
        let (w, phi) = pp.layout.decode(&res);
        state = BeamformingState { w, phi, u: state.u.clone() };
        let (ls, lc) = pp.layout.lambdas(&res, ch.l(), ch.k());
        let total: f64 = ls.iter().chain(&lc).map(|v| v.max(0.0)).sum();
        trace.push(record(Stage::Init, 0, it, &state, &ch, cfg, total, StepStatus::Accepted, clock));
        if let Some(&prev) = history.last() {
            if total > prev - 1e-6 * prev.max(1e-12) {
                stall += 1;
            } else {
                stall = 0;
            }
        }
        history.push(total);
        feasible = is_feasible(&state, &ch, cfg);
        if !feasible && stall >= 3 {
            break;
        }
    }
    if feasible {
        let projected = BeamformingState { phi: project_phases(&state.phi), ..state.clone() };
        if projected.phi != state.phi && is_feasible(&projected, &ch, cfg) {
            state = projected;
            trace.push(record(Stage::Init, 0, it, &state, &ch, cfg, f64::NAN, StepStatus::Projected, clock));
        }
    }
    Ok(InitOutcome { state, partition: partition.clone(), channels: ch, lambda_history: history, feasible })
}

/// Two-step initialization with the reflecting set held at `partition`.
pub fn find_initial_point(
    full: &ChannelSet,
    partition: &ElementPartition,
    cfg: &ScenarioConfig,
    settings: &AlgorithmSettings,
) -> Result<(InitOutcome, RunTrace)> {
    let mut trace = RunTrace::default();
    let clock = Clock(Instant::now());
    let out = init_loop(full, partition, cfg, settings, &mut trace, &clock)?;
    Ok((out, trace))
}

/// Which design to run on a realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "reflecting")]
pub enum Mode {
    /// Full alternating optimization with element reassignment.
    ProposedAdaptive,
    /// Interference maximization with `R = {0..n}` and the initial combiner.
    ProposedFixed(usize),
    /// Sensing-sum maximization with `R = {0..n}`, no detector objective.
    BaselineSenseMax(usize),
}

impl Mode {
    pub fn label(&self) -> String {
        match self {
            Mode::ProposedAdaptive => "proposed-adaptive".into(),
            Mode::ProposedFixed(n) => format!("proposed-fixed-{n}"),
            Mode::BaselineSenseMax(n) => format!("baseline-sense-max-{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Converged,
    /// Finished, but some inner step failed or an outer cap was hit.
    Degraded,
    /// No feasible initial point was found.
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: BeamformingState,
    pub partition: ElementPartition,
    pub channels: PartitionedChannels,
    pub trace: RunTrace,
    pub status: RunStatus,
    pub outer_iterations: usize,
    /// Feasibility audit of the returned state.
    pub audit: FeasibilityReport,
    pub max_detector_sinr: f64,
    pub interference: f64,
}

/// Full alternating optimization on a freshly built scenario.
pub fn run_main(cfg: &ScenarioConfig, settings: &AlgorithmSettings) -> Result<RunOutcome> {
    let sc = build_scenario(cfg)?;
    run_mode(&sc, cfg, settings, Mode::ProposedAdaptive)
}

fn finish(
    state: BeamformingState,
    partition: ElementPartition,
    channels: PartitionedChannels,
    trace: RunTrace,
    status: RunStatus,
    outer_iterations: usize,
    cfg: &ScenarioConfig,
) -> Result<RunOutcome> {
    Ok(RunOutcome {
        audit: audit(&state, &channels, cfg)?,
        max_detector_sinr: max_detector_sinr(&state, &channels, cfg)?,
        interference: interference_power(&state, &channels),
        state,
        partition,
        channels,
        trace,
        status,
        outer_iterations,
    })
}

/// Run one design mode on a built scenario.
pub fn run_mode(sc: &Scenario, cfg: &ScenarioConfig, settings: &AlgorithmSettings, mode: Mode) -> Result<RunOutcome> {
    settings.validate()?;
    cfg.validate()?;
    let clock = Clock(Instant::now());
    let mut trace = RunTrace::default();
    let n = cfg.n();
    let partition = match mode {
        Mode::ProposedAdaptive => sc.partition.clone(),
        Mode::ProposedFixed(nr) | Mode::BaselineSenseMax(nr) => {
            if nr == 0 || nr >= n {
                return Err(Error::Config(format!("fixed reflecting set size {nr} must be in 1..{n}")));
            }
            ElementPartition::leading(n, nr)?
        }
    };
    let init = init_loop(&sc.channels, &partition, cfg, settings, &mut trace, &clock)?;
    if !init.feasible {
        return finish(init.state, init.partition, init.channels, trace, RunStatus::Infeasible, 0, cfg);
    }
    let (mut state, mut partition, mut ch) = (init.state, init.partition, init.channels);
    let mut degraded = false;
    let mut outer = 0;
    match mode {
        Mode::ProposedFixed(_) => {
            outer = 1;
            let out = psi_loop(&state, &ch, cfg, settings, PsiObjective::Interference, Stage::Psi, 1, &mut trace, &clock)?;
            degraded |= out.degraded || out.projection_rejected;
            state = out.state;
        }
        Mode::BaselineSenseMax(_) => {
            let mut f_prev = psi_objective_value(PsiObjective::SensingSum, &state, &ch, cfg);
            let mut converged = false;
            while outer < settings.max_iter_outer {
                outer += 1;
                let out =
                    psi_loop(&state, &ch, cfg, settings, PsiObjective::SensingSum, Stage::Baseline, outer, &mut trace, &clock)?;
                degraded = out.degraded || out.projection_rejected;
                state = out.state;
                let u = best_combiner(&state, &ch, cfg);
                let cand = BeamformingState { u, ..state.clone() };
                if is_feasible(&cand, &ch, cfg)
                    && psi_objective_value(PsiObjective::SensingSum, &cand, &ch, cfg)
                        > psi_objective_value(PsiObjective::SensingSum, &state, &ch, cfg)
                {
                    state = cand;
                }
                let f = psi_objective_value(PsiObjective::SensingSum, &state, &ch, cfg);
                trace.push(record(Stage::Baseline, outer, 0, &state, &ch, cfg, f, StepStatus::Accepted, &clock));
                let gain = (f - f_prev) / f_prev.abs().max(1e-300);
                f_prev = f;
                if gain <= settings.eps_outer {
                    converged = true;
                    break;
                }
            }
            degraded |= !converged;
        }
        Mode::ProposedAdaptive => {
            let mut f_prev = interference_power(&state, &ch);
            let mut converged = false;
            let mut pending_zeros = false;
            while outer < settings.max_iter_outer {
                outer += 1;
                let out = psi_loop(&state, &ch, cfg, settings, PsiObjective::Interference, Stage::Psi, outer, &mut trace, &clock)?;
                // a later ψ loop re-solves from the current state, so only the last one decides
                degraded = out.degraded || out.projection_rejected;
                state = out.state;
                pending_zeros = false;
                let re = u_loop(&state, &sc.channels, &partition, &ch, cfg, settings, outer, &mut trace, &clock)?;
                let changed = !re.moved.is_empty();
                state = re.state;
                partition = re.partition;
                ch = re.channels;
                pending_zeros |= changed;
                let f = interference_power(&state, &ch);
                let gain = (f - f_prev) / f_prev.abs().max(1e-300);
                f_prev = f;
                if gain <= settings.eps_outer && !changed {
                    converged = true;
                    break;
                }
            }
            if pending_zeros {
                let out = psi_loop(&state, &ch, cfg, settings, PsiObjective::Interference, Stage::Psi, outer + 1, &mut trace, &clock)?;
                degraded = out.degraded || out.projection_rejected;
                state = out.state;
            }
            degraded |= !converged;
        }
    }
    let status = if degraded { RunStatus::Degraded } else { RunStatus::Converged };
    finish(state, partition, ch, trace, status, outer, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    #[test]
    fn default_settings_are_valid() {
        AlgorithmSettings::default().validate().unwrap();
        let bad = AlgorithmSettings { max_iter_inner: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = AlgorithmSettings { eps_converge: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn thresholding_semantics() {
        let u = CVec::from_vec(vec![c64(0.9, 0.0), c64(1e-7, 0.0), c64(0.436, 0.0)]);
        assert_eq!(zero_positions(&u, 1e-3), vec![1]);
        let mut p = ElementPartition::leading(5, 2).unwrap();
        p.reassign(&zero_positions(&u, 1e-3)).unwrap();
        assert_eq!(p.nr(), 3);
        let dense = CVec::from_vec(vec![c64(0.5, 0.0), c64(0.5, 0.0)]);
        assert!(zero_positions(&dense, 1e-3).is_empty());
    }

    #[test]
    fn expand_phi_inserts_zeros() {
        let old = ElementPartition::new(5, &[0, 3]).unwrap();
        let new = ElementPartition::new(5, &[0, 2, 3]).unwrap();
        let phi = CVec::from_vec(vec![c64(1.0, 0.0), c64(0.0, 1.0)]);
        let out = expand_phi(&phi, &old, &new);
        assert_eq!(out.as_slice(), &[c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 1.0)]);
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(-12.345678), "-12.3457");
        assert_eq!(fmt_sig(1.23456789e-7), "1.23457e-7");
        assert_eq!(fmt_sig(123456789.0), "1.23457e8");
        assert_eq!(fmt_sig(0.000123456789), "0.000123457");
    }

    #[test]
    fn generalized_top_single_location_is_optimal() {
        let c = CVec::from_vec(vec![c64(1.0, 0.0), c64(0.0, 1.0), c64(0.5, 0.5)]);
        let e = CVec::from_vec(vec![c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0)]);
        let u = generalized_top(&(&c * c.adjoint()), &e, 1.0, 0.01);
        // closed form: u ∝ Q^{-1} c
        let q = CMat::identity(3, 3) * C64::from(0.01) + &e * e.adjoint();
        let v = q.try_inverse().unwrap() * &c;
        let v = &v / C64::from(v.norm());
        assert!((u.dotc(&v).norm() - 1.0).abs() < 1e-9);
    }
}
