//! Monte Carlo campaigns, parameter sweeps, detector heatmaps and the
//! energy-detector simulation oracle.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::algorithms::Mode;
use crate::algorithms::{fmt_sig, run_mode, AlgorithmSettings, RunStatus, RunTrace};
use crate::config::{reflecting_fraction, ScenarioConfig};
use crate::error::{Error, Result};
use crate::linalg::{db_to_linear, dbm_to_watts, linear_to_db, norm_sq};
use crate::metrics::{averaged_probabilities, cascaded_response, interference_power, BeamformingState};
use crate::scenario::{build_scenario, point_channels, sensing_grid, PartitionedChannels};

/// Default heatmap resolution (azimuth x elevation).
pub const DEFAULT_HEATMAP_GRID: (usize, usize) = (21, 21);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Transmit power budget, dBm.
    PMax,
    /// Communication threshold applied to all users, dB.
    GammaC,
    /// Sensing threshold applied to all locations, dB.
    GammaS,
    /// RIS elements `N`.
    N,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::PMax => "p_max_dbm",
            SweepParameter::GammaC => "gamma_c_db",
            SweepParameter::GammaS => "gamma_s_db",
            SweepParameter::N => "n",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "p-max" | "p_max" | "p_max_dbm" => Ok(SweepParameter::PMax),
            "gamma-c" | "gamma_c" | "gamma_c_db" => Ok(SweepParameter::GammaC),
            "gamma-s" | "gamma_s" | "gamma_s_db" => Ok(SweepParameter::GammaS),
            "n" | "N" => Ok(SweepParameter::N),
            _ => Err(Error::InvalidArgument(format!("unknown sweep parameter `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub resolution: (usize, usize),
    pub samples_per_decision: usize,
}

impl Default for HeatmapGrid {
    fn default() -> Self {
        Self { resolution: DEFAULT_HEATMAP_GRID, samples_per_decision: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub settings: AlgorithmSettings,
    pub mode: Mode,
    pub realizations: usize,
    pub sweep: Option<Sweep>,
    pub heatmap: Option<HeatmapGrid>,
}

impl ExperimentSpec {
    pub fn new(scenario: ScenarioConfig, mode: Mode, realizations: usize) -> Self {
        Self { scenario, settings: AlgorithmSettings::default(), mode, realizations, sweep: None, heatmap: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be >= 1".into()));
        }
        self.scenario.validate()?;
        self.settings.validate()?;
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Config("sweep needs at least one value".into()));
            }
            if !s.values.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Config("sweep values must be strictly increasing".into()));
            }
            if s.parameter == SweepParameter::N && s.values.iter().any(|&v| v < 2.0 || v.fract() != 0.0) {
                return Err(Error::Config("N sweep values must be integers >= 2".into()));
            }
        }
        if let Some(h) = &self.heatmap {
            if h.resolution.0 == 0 || h.resolution.1 == 0 || h.samples_per_decision == 0 {
                return Err(Error::Config("heatmap resolution and samples must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Seed of realization `r`; every mode uses the same sequence.
pub fn realization_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

/// Scenario and mode at one sweep value.  An `N` sweep rescales fixed
/// reflecting sets in proportion, so `{0..⌈0.625N⌉}` stays `{0..⌈0.625N'⌉}`.
pub fn apply_sweep_value(cfg: &ScenarioConfig, mode: Mode, parameter: SweepParameter, value: f64) -> (ScenarioConfig, Mode) {
    let mut c = cfg.clone();
    let mut mode = mode;
    match parameter {
        SweepParameter::PMax => c.p_max = dbm_to_watts(value),
        SweepParameter::GammaC => c.gamma_c.iter_mut().for_each(|g| *g = db_to_linear(value)),
        SweepParameter::GammaS => c.gamma_s.iter_mut().for_each(|g| *g = db_to_linear(value)),
        SweepParameter::N => {
            let old_n = cfg.n();
            let n = value as usize;
            c.set_ris_elements(n);
            let rescale = |nr: usize| reflecting_fraction(n, nr as f64 / old_n as f64).clamp(1, n - 1);
            mode = match mode {
                Mode::ProposedAdaptive => Mode::ProposedAdaptive,
                Mode::ProposedFixed(nr) => Mode::ProposedFixed(rescale(nr)),
                Mode::BaselineSenseMax(nr) => Mode::BaselineSenseMax(rescale(nr)),
            };
        }
    }
    (c, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RealizationResult {
    Completed { max_detector_sinr_db: f64, converged: bool, final_nr: usize },
    Infeasible,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapResult {
    pub resolution: (usize, usize),
    pub samples_per_decision: usize,
    /// `(azimuth, elevation)` in degrees, azimuth fastest.
    pub points: Vec<(f64, f64)>,
    /// Mean over completed realizations, indexed `[elevation][azimuth]`.
    pub fa: Vec<Vec<f64>>,
    pub md: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: Option<f64>,
    pub mode: Mode,
    pub realizations: Vec<RealizationResult>,
    pub completed: usize,
    pub infeasible: usize,
    pub failed: usize,
    pub mean_db: f64,
    /// Half-width of the 95% normal-approximation interval.
    pub ci95_db: f64,
    /// Completed fraction of all realizations.
    pub feasibility_rate: f64,
    /// Trace of the first completed realization.
    pub trace: Option<RunTrace>,
    pub heatmap: Option<HeatmapResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub parameter: Option<SweepParameter>,
    pub points: Vec<SweepPoint>,
}

/// `(mean, 95% half-width)` of the samples.
pub fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Detector sensing SINR for a point with RIS-side channel `c` and
/// detector path gain `d`, using the mean RCS of the scenario.
pub fn detector_sinr_at(state: &BeamformingState, ch: &PartitionedChannels, cfg: &ScenarioConfig, c: &crate::linalg::CVec, d: crate::linalg::C64) -> f64 {
    let rcs = cfg.rcs.iter().sum::<f64>() / cfg.rcs.len() as f64;
    let cr = crate::linalg::select_entries(c, ch.partition.reflecting());
    let beam = norm_sq(&cascaded_response(&cr, &state.phi, &ch.gr, &state.w));
    let d2 = d.norm_sqr();
    rcs * d2 * (cfg.detector_power * d2 + beam) / (interference_power(state, ch) + cfg.noise_d)
}

/// Averaged FA and MD probabilities of the adversarial detector over the
/// sensing region, indexed `[elevation][azimuth]`.
pub fn heatmap(
    state: &BeamformingState,
    ch: &PartitionedChannels,
    cfg: &ScenarioConfig,
    grid: (usize, usize),
    ts: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let pts = sensing_grid(cfg, grid);
    let mut fa = vec![vec![0.0; grid.0]; grid.1];
    let mut md = vec![vec![0.0; grid.0]; grid.1];
    for (i, &(az, el)) in pts.iter().enumerate() {
        let (c, d) = point_channels(cfg, az, el)?;
        let gamma = detector_sinr_at(state, ch, cfg, &c, d);
        let (p, q) = averaged_probabilities(gamma, ts)?;
        fa[i / grid.0][i % grid.0] = p;
        md[i / grid.0][i % grid.0] = q;
    }
    Ok((fa, md))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub p_hat: f64,
    pub q_hat: f64,
    /// Binomial standard errors.
    pub p_sigma: f64,
    pub q_sigma: f64,
}

/// Simulate the averaged energy test: `ts` exponential energies with mean
/// `omega0` (null) or `omega1` (target), compare the mean with `thresh`.
pub fn detection_oracle<R: Rng + ?Sized>(omega0: f64, omega1: f64, thresh: f64, ts: usize, trials: usize, rng: &mut R) -> OracleEstimate {
    let trials = trials.max(1);
    let ts = ts.max(1);
    let mean_energy = |omega: f64, rng: &mut R| {
        let s: f64 = (0..ts).map(|_| omega * <Exp1 as Distribution<f64>>::sample(&Exp1, rng)).sum();
        s / ts as f64
    };
    let mut fa = 0usize;
    let mut md = 0usize;
    for _ in 0..trials {
        if mean_energy(omega0, rng) >= thresh {
            fa += 1;
        }
        if mean_energy(omega1, rng) < thresh {
            md += 1;
        }
    }
    let n = trials as f64;
    let (p, q) = (fa as f64 / n, md as f64 / n);
    OracleEstimate { p_hat: p, q_hat: q, p_sigma: (p * (1.0 - p) / n).sqrt(), q_sigma: (q * (1.0 - q) / n).sqrt() }
}

fn run_realization(cfg: &ScenarioConfig, settings: &AlgorithmSettings, mode: Mode, heat: Option<HeatmapGrid>) -> (RealizationResult, Option<RunTrace>, Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)>) {
    let outcome = build_scenario(cfg).and_then(|sc| run_mode(&sc, cfg, settings, mode));
    match outcome {
        Err(e) => (RealizationResult::Failed(e.to_string()), None, None),
        Ok(out) if out.status == RunStatus::Infeasible => (RealizationResult::Infeasible, Some(out.trace), None),
        Ok(out) => {
            let maps = heat.and_then(|h| heatmap(&out.state, &out.channels, cfg, h.resolution, h.samples_per_decision).ok());
            (
                RealizationResult::Completed {
                    max_detector_sinr_db: linear_to_db(out.max_detector_sinr),
                    converged: out.status == RunStatus::Converged,
                    final_nr: out.partition.nr(),
                },
                Some(out.trace),
                maps,
            )
        }
    }
}

fn run_point(cfg: &ScenarioConfig, settings: &AlgorithmSettings, mode: Mode, realizations: usize, heat: Option<HeatmapGrid>, value: Option<f64>) -> SweepPoint {
    let runs: Vec<_> = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let mut c = cfg.clone();
            c.seed = realization_seed(cfg.seed, r);
            run_realization(&c, settings, mode, heat)
        })
        .collect();
    let mut db = Vec::new();
    let (mut infeasible, mut failed) = (0, 0);
    let mut trace = None;
    let mut sum_maps: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = None;
    let mut n_maps = 0usize;
    let mut results = Vec::with_capacity(realizations);
    for (res, tr, maps) in runs {
        match &res {
            RealizationResult::Completed { max_detector_sinr_db, .. } => {
                db.push(*max_detector_sinr_db);
                if trace.is_none() {
                    trace = tr;
                }
            }
            RealizationResult::Infeasible => infeasible += 1,
            RealizationResult::Failed(_) => failed += 1,
        }
        if let Some((fa, md)) = maps {
            n_maps += 1;
            match &mut sum_maps {
                None => sum_maps = Some((fa, md)),
                Some((sf, sm)) => {
                    for (a, b) in sf.iter_mut().flatten().zip(fa.iter().flatten()) {
                        *a += b;
                    }
                    for (a, b) in sm.iter_mut().flatten().zip(md.iter().flatten()) {
                        *a += b;
                    }
                }
            }
        }
        results.push(res);
    }
    let heatmap = match (heat, sum_maps) {
        (Some(h), Some((mut fa, mut md))) => {
            let k = n_maps as f64;
            fa.iter_mut().flatten().for_each(|x| *x /= k);
            md.iter_mut().flatten().for_each(|x| *x /= k);
            let points = sensing_grid(cfg, h.resolution).into_iter().map(|(a, e)| (a.to_degrees(), e.to_degrees())).collect();
            Some(HeatmapResult { resolution: h.resolution, samples_per_decision: h.samples_per_decision, points, fa, md })
        }
        _ => None,
    };
    let (mean_db, ci95_db) = mean_ci(&db);
    SweepPoint {
        value,
        mode,
        completed: db.len(),
        infeasible,
        failed,
        mean_db,
        ci95_db,
        feasibility_rate: db.len() as f64 / realizations as f64,
        realizations: results,
        trace,
        heatmap,
    }
}

/// Run the spec's mode on `realizations` paired seeds (per sweep value, if any).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<AggregateResult> {
    spec.validate()?;
    match &spec.sweep {
        None => Ok(AggregateResult {
            parameter: None,
            points: vec![run_point(&spec.scenario, &spec.settings, spec.mode, spec.realizations, spec.heatmap, None)],
        }),
        Some(s) => sweep(spec, s.parameter, &s.values),
    }
}

/// Re-run the experiment at each value of `parameter`, same seeds at every point.
pub fn sweep(spec: &ExperimentSpec, parameter: SweepParameter, values: &[f64]) -> Result<AggregateResult> {
    let spec = ExperimentSpec { sweep: Some(Sweep { parameter, values: values.to_vec() }), ..spec.clone() };
    spec.validate()?;
    let points = values
        .iter()
        .map(|&v| {
            let (cfg, mode) = apply_sweep_value(&spec.scenario, spec.mode, parameter, v);
            cfg.validate()?;
            Ok(run_point(&cfg, &spec.settings, mode, spec.realizations, spec.heatmap, Some(v)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateResult { parameter: Some(parameter), points })
}

/// Columns: `parameter,value,mode,realizations,completed,infeasible,failed,feasibility_rate,mean_max_detector_sinr_db,ci95_db`.
pub fn aggregate_csv(result: &AggregateResult) -> String {
    let mut s = String::from(
        "parameter,value,mode,realizations,completed,infeasible,failed,feasibility_rate,mean_max_detector_sinr_db,ci95_db\n",
    );
    for p in &result.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            result.parameter.map_or("none", |x| x.name()),
            p.value.map_or(String::new(), fmt_sig),
            p.mode.label(),
            p.realizations.len(),
            p.completed,
            p.infeasible,
            p.failed,
            fmt_sig(p.feasibility_rate),
            fmt_sig(p.mean_db),
            fmt_sig(p.ci95_db)
        );
    }
    s
}

/// Per-realization values: `value,realization,status,max_detector_sinr_db,final_nr`.
pub fn realizations_csv(result: &AggregateResult) -> String {
    let mut s = String::from("value,realization,status,max_detector_sinr_db,final_nr\n");
    for p in &result.points {
        let v = p.value.map_or(String::new(), fmt_sig);
        for (r, res) in p.realizations.iter().enumerate() {
            let line = match res {
                RealizationResult::Completed { max_detector_sinr_db, converged, final_nr } => format!(
                    "{v},{r},{},{},{final_nr}",
                    if *converged { "converged" } else { "degraded" },
                    fmt_sig(*max_detector_sinr_db)
                ),
                RealizationResult::Infeasible => format!("{v},{r},infeasible,,"),
                RealizationResult::Failed(_) => format!("{v},{r},failed,,"),
            };
            s.push_str(&line);
            s.push('\n');
        }
    }
    s
}

/// Long-form map: `azimuth_deg,elevation_deg,value`, azimuth fastest.
pub fn heatmap_csv(points: &[(f64, f64)], map: &[Vec<f64>]) -> String {
    let mut s = String::from("azimuth_deg,elevation_deg,value\n");
    let flat: Vec<f64> = map.iter().flatten().copied().collect();
    for ((az, el), v) in points.iter().zip(flat) {
        let _ = writeln!(s, "{},{},{}", fmt_sig(*az), fmt_sig(*el), fmt_sig(v));
    }
    s
}

/// Resolved configuration, settings, mode and crate version as JSON.
pub fn meta_json(cfg: &ScenarioConfig, settings: &AlgorithmSettings, extra: serde_json::Value) -> Result<String> {
    let v = serde_json::json!({
        "crate": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": cfg,
        "settings": settings,
        "run": extra,
    });
    Ok(serde_json::to_string_pretty(&v)?)
}
