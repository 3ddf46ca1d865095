//! SINRs, energy-detector thresholds and false-alarm / missed-detection
//! probabilities.

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::linalg::{norm_sq, CMat, CVec, C64};
use crate::scenario::PartitionedChannels;

/// Decision variables: precoder `W` (M x K), reflection diagonal `phi` (N_r)
/// and absorptive combiner `u` (N_a).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformingState {
    pub w: CMat,
    pub phi: CVec,
    pub u: CVec,
}

impl BeamformingState {
    pub fn check_dims(&self, ch: &PartitionedChannels) -> Result<()> {
        if self.w.shape() != (ch.m(), ch.k()) || self.phi.len() != ch.nr() || self.u.len() != ch.na() {
            return Err(Error::Dimension(format!(
                "state W {:?}, phi {}, u {} against M={} K={} N_r={} N_a={}",
                self.w.shape(),
                self.phi.len(),
                self.u.len(),
                ch.m(),
                ch.k(),
                ch.nr(),
                ch.na()
            )));
        }
        Ok(())
    }
}

/// `a^H Φ G W` as a length-K vector.
pub fn cascaded_response(a: &CVec, phi: &CVec, g: &CMat, w: &CMat) -> CVec {
    let v = CVec::from_fn(a.len(), |n, _| a[n].conj() * phi[n]);
    (v.transpose() * g * w).transpose()
}

/// `‖e_r^H Φ G_r W‖²`, the beam power leaking into the detector.
pub fn interference_power(state: &BeamformingState, ch: &PartitionedChannels) -> f64 {
    norm_sq(&cascaded_response(&ch.er, &state.phi, &ch.gr, &state.w))
}

/// `‖c_r^H Φ G_r W‖²` for location `l`.
pub fn illumination_power(l: usize, state: &BeamformingState, ch: &PartitionedChannels) -> f64 {
    norm_sq(&cascaded_response(&ch.cr[l], &state.phi, &ch.gr, &state.w))
}

fn check_index(i: usize, len: usize) -> Result<()> {
    if i >= len {
        return Err(Error::IndexOutOfRange { index: i, len });
    }
    Ok(())
}

fn inner(u: &CVec, v: &CVec) -> C64 {
    u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum()
}

pub fn comm_sinr(k: usize, state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig) -> Result<f64> {
    check_index(k, ch.k())?;
    state.check_dims(ch)?;
    let h = &ch.hr[k];
    let hc = h.map(|z| z.conj());
    let resp = cascaded_response(&hc, &state.phi, &ch.gr, &state.w);
    let signal = resp[k].norm_sqr();
    let multiuser: f64 = (0..ch.k()).filter(|&i| i != k).map(|i| resp[i].norm_sqr()).sum();
    let leak: C64 = (0..ch.nr()).map(|n| h[n] * state.phi[n] * ch.er[n]).sum();
    Ok(signal / (multiuser + cfg.detector_power * leak.norm_sqr() + cfg.noise_c[k]))
}

/// Null/alternative energies `(ω0, ω1)` of the absorptive-side detector at location `l`.
pub fn omega_params(l: usize, state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig) -> Result<(f64, f64)> {
    check_index(l, ch.l())?;
    if ch.na() == 0 {
        return Err(Error::EmptyAbsorptiveSet);
    }
    state.check_dims(ch)?;
    let ue = inner(&state.u, &ch.ea).norm_sqr();
    let uc = inner(&state.u, &ch.ca[l]).norm_sqr();
    let omega0 = cfg.detector_power * ue + cfg.noise_s;
    let beam = illumination_power(l, state, ch);
    let signal = cfg.rcs[l] * uc * (beam + cfg.detector_power * ch.d[l].norm_sqr());
    Ok((omega0, omega0 + signal))
}

pub fn sensing_sinr_ris(l: usize, state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig) -> Result<f64> {
    let (w0, w1) = omega_params(l, state, ch, cfg)?;
    Ok((w1 - w0) / w0)
}

/// Sensing SINR of the adversarial detector at location `l`.
pub fn sensing_sinr_detector(l: usize, state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig) -> Result<f64> {
    check_index(l, ch.l())?;
    let d2 = ch.d[l].norm_sqr();
    let beam = illumination_power(l, state, ch);
    let leak = interference_power(state, ch);
    Ok(cfg.rcs[l] * d2 * (cfg.detector_power * d2 + beam) / (leak + cfg.noise_d))
}

pub fn max_detector_sinr(state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for l in 0..ch.l() {
        best = best.max(sensing_sinr_detector(l, state, ch, cfg)?);
    }
    Ok(best)
}

/// Per-location threshold `ω̄ = ω1 ω0 / (ω1 − ω0) · ln(ω1/ω0)`.
pub fn detection_threshold(omega0: f64, omega1: f64) -> Result<f64> {
    if !(omega0 > 0.0) || !(omega1 > omega0) {
        return Err(Error::DegenerateHypothesis { omega0, omega1 });
    }
    let delta = omega1 / omega0 - 1.0;
    if delta < 1e-9 {
        return Ok(omega0 * (1.0 + delta / 2.0 - delta * delta / 6.0));
    }
    Ok(omega0 * (1.0 + delta) * delta.ln_1p() / delta)
}

/// Single threshold shared by all locations, the smallest per-location one.
pub fn global_threshold(thresholds: &[f64]) -> Result<f64> {
    thresholds
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or_else(|| Error::InvalidArgument("no thresholds given".into()))
}

/// `ln(1+γ)/γ`, continuous at 0.
fn log1p_ratio(gamma: f64) -> f64 {
    if gamma < 1e-9 {
        1.0 - gamma / 2.0
    } else {
        gamma.ln_1p() / gamma
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("SINR must be >= 0, got {gamma}")));
    }
    Ok(())
}

/// Single-sample false-alarm probability `(1+γ)^-(1+1/γ)`.
pub fn fa_probability(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if gamma.is_infinite() {
        return Ok(0.0);
    }
    Ok((-(gamma.ln_1p() + log1p_ratio(gamma))).exp())
}

/// Single-sample missed-detection probability `1 − (1+γ)^(-1/γ)`.
pub fn md_probability(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if gamma.is_infinite() {
        return Ok(0.0);
    }
    Ok(-(-log1p_ratio(gamma)).exp_m1())
}

/// `x^t Σ_{i<t} (−t ln x)^i / i!`: the probability that a Poisson variable
/// with mean `−t ln x` stays below `t`.  Summed in log space.
fn poisson_lower(x: f64, t: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let tf = t as f64;
    let lambda = -tf * x.ln();
    let ln_lambda = lambda.ln();
    let mut log_term = tf * x.ln();
    let mut total = log_term.exp();
    for i in 1..t {
        log_term += ln_lambda - (i as f64).ln();
        total += log_term.exp();
    }
    total.clamp(0.0, 1.0)
}

fn check_samples(t: usize) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument("samples per decision must be >= 1".into()));
    }
    Ok(())
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability out of [0,1]: {p}")));
    }
    Ok(())
}

/// False-alarm probability when `t` energy samples are averaged.
pub fn fa_averaged(p: f64, t: usize) -> Result<f64> {
    check_samples(t)?;
    check_probability(p)?;
    Ok(poisson_lower(p, t))
}

/// Missed-detection probability when `t` energy samples are averaged.
pub fn md_averaged(q: f64, t: usize) -> Result<f64> {
    check_samples(t)?;
    check_probability(q)?;
    Ok(1.0 - poisson_lower(1.0 - q, t))
}

/// `(p̄, q̄)` of a detector operating at SINR `gamma` with `t` samples.
pub fn averaged_probabilities(gamma: f64, t: usize) -> Result<(f64, f64)> {
    Ok((fa_averaged(fa_probability(gamma)?, t)?, md_averaged(md_probability(gamma)?, t)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    pub omega0: f64,
    pub omega1: Vec<f64>,
    pub thresh: Vec<f64>,
    pub global_thresh: f64,
    pub fa: Vec<f64>,
    pub md: Vec<f64>,
    pub fa_avg: Vec<f64>,
    pub md_avg: Vec<f64>,
}

/// Detection statistics of the absorptive-side detector at every location.
pub fn detection_stats(state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig) -> Result<DetectionStats> {
    let t = cfg.samples_per_decision;
    let mut stats = DetectionStats {
        omega0: 0.0,
        omega1: vec![],
        thresh: vec![],
        global_thresh: 0.0,
        fa: vec![],
        md: vec![],
        fa_avg: vec![],
        md_avg: vec![],
    };
    for l in 0..ch.l() {
        let (w0, w1) = omega_params(l, state, ch, cfg)?;
        stats.omega0 = w0;
        stats.omega1.push(w1);
        stats.thresh.push(detection_threshold(w0, w1)?);
        let gamma = (w1 - w0) / w0;
        let (p, q) = (fa_probability(gamma)?, md_probability(gamma)?);
        stats.fa.push(p);
        stats.md.push(q);
        stats.fa_avg.push(fa_averaged(p, t)?);
        stats.md_avg.push(md_averaged(q, t)?);
    }
    stats.global_thresh = global_threshold(&stats.thresh)?;
    Ok(stats)
}

/// Constraint margins of a state, evaluated directly from the SINR formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `min_ℓ (sinr_ℓ / Γ_s,ℓ) − 1`.
    pub sensing_margin: f64,
    /// `min_k (sinr_k / Γ_c,k) − 1`.
    pub comm_margin: f64,
    /// `‖W‖² / P_max`.
    pub power_ratio: f64,
    /// `max_n ||phi_n| − 1|`.
    pub modulus_deviation: f64,
    /// `|‖u‖ − 1|`.
    pub u_norm_deviation: f64,
}

impl FeasibilityReport {
    pub fn holds(&self, sinr_tol: f64, power_tol: f64, modulus_tol: f64, norm_tol: f64) -> bool {
        self.sensing_margin >= -sinr_tol
            && self.comm_margin >= -sinr_tol
            && self.power_ratio <= 1.0 + power_tol
            && self.modulus_deviation <= modulus_tol
            && self.u_norm_deviation <= norm_tol
    }
}

fn ratio_margin(value: f64, threshold: f64) -> f64 {
    if threshold > 0.0 {
        value / threshold - 1.0
    } else {
        f64::INFINITY
    }
}

pub fn audit(state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig) -> Result<FeasibilityReport> {
    let mut sensing_margin = f64::INFINITY;
    for l in 0..ch.l() {
        sensing_margin = sensing_margin.min(ratio_margin(sensing_sinr_ris(l, state, ch, cfg)?, cfg.gamma_s[l]));
    }
    let mut comm_margin = f64::INFINITY;
    for k in 0..ch.k() {
        comm_margin = comm_margin.min(ratio_margin(comm_sinr(k, state, ch, cfg)?, cfg.gamma_c[k]));
    }
    Ok(FeasibilityReport {
        sensing_margin,
        comm_margin,
        power_ratio: state.w.norm_squared() / cfg.p_max,
        modulus_deviation: state.phi.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max),
        u_norm_deviation: (state.u.norm() - 1.0).abs(),
    })
}
