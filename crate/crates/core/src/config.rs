//! Scenario parameters and the TOML configuration file that maps onto them.
//!
//! [`ScenarioConfig`] holds everything in linear SI units (watts, linear
//! ratios, metres).  The on-disk format, [`ScenarioFile`], uses dB/dBm where
//! engineers usually write them and is converted at ingestion.  Every field
//! of the file is optional; omitted fields take the reference defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithms::AlgorithmSettings;
use crate::error::{Error, Result};
use crate::linalg::{db_to_linear, dbm_to_watts, linear_to_db, watts_to_dbm};

/// Position given in polar form relative to the RIS reference element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPosition {
    pub distance: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

/// Rectangle in (azimuth, elevation) at a fixed range from the RIS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingRegion {
    pub distance: f64,
    pub azimuth_deg: (f64, f64),
    pub elevation_deg: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs: [f64; 3],
    pub ris: [f64; 3],
    /// Opposite corners of the cuboid users are dropped in.
    pub user_min: [f64; 3],
    pub user_max: [f64; 3],
    pub detector: PolarPosition,
    pub sensing: SensingRegion,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            bs: [0.0, 0.0, 0.0],
            ris: [10.0, 0.0, 0.0],
            user_min: [7.5, 10.0, 0.0],
            user_max: [12.5, 15.0, 2.0],
            detector: PolarPosition {
                distance: 8.0,
                azimuth_deg: 60.0,
                elevation_deg: 80.0,
            },
            sensing: SensingRegion {
                distance: 8.0,
                azimuth_deg: (45.0, 55.0),
                elevation_deg: (75.0, 85.0),
            },
        }
    }
}

/// All physical and algorithmic parameters of one scenario, linear units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// BS antennas `M`.
    pub antennas: usize,
    /// RIS grid `(N_x, N_y)`; `N = N_x * N_y`.
    pub ris_grid: (usize, usize),
    /// Communication users `K`.
    pub users: usize,
    /// Sensing samples as an (azimuth, elevation) grid; `L` is the product.
    pub sensing_grid: (usize, usize),
    /// Transmit power budget (W).
    pub p_max: f64,
    /// Adversarial detector transmit power ρ² (W).
    pub detector_power: f64,
    /// Target RCS ς² per location (m²).
    pub rcs: Vec<f64>,
    /// Sensing SINR thresholds per location (linear).
    pub gamma_s: Vec<f64>,
    /// Communication SINR thresholds per user (linear).
    pub gamma_c: Vec<f64>,
    /// Noise at the RIS sensing elements σ_s² (W).
    pub noise_s: f64,
    /// Noise at the adversarial detector σ_d² (W).
    pub noise_d: f64,
    /// Effective per-user noise σ̄_c² (W); already includes detector-interference moments.
    pub noise_c: Vec<f64>,
    /// Rician factor κ (linear).
    pub rician_k: f64,
    pub pathloss_exp: f64,
    /// Path gain at 1 m (linear).
    pub ref_gain: f64,
    /// Carrier wavelength λ_c (m).
    pub wavelength: f64,
    pub geometry: Geometry,
    /// Energy samples averaged per detection decision, `T_s`.
    pub samples_per_decision: usize,
    /// Size of the initial reflecting set `{0..n}`.
    pub initial_reflecting: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    /// Reference scenario: M=4, N=64 (8x8), K=4, L=9 (3x3).
    fn default() -> Self {
        let k = 4;
        let l = 9;
        let n = 64;
        Self {
            antennas: 4,
            ris_grid: (8, 8),
            users: k,
            sensing_grid: (3, 3),
            p_max: dbm_to_watts(40.0),
            detector_power: dbm_to_watts(30.0),
            rcs: vec![0.8; l],
            gamma_s: vec![db_to_linear(7.5); l],
            gamma_c: vec![db_to_linear(7.5); k],
            noise_s: dbm_to_watts(-70.0),
            noise_d: dbm_to_watts(-70.0),
            noise_c: vec![dbm_to_watts(-70.0); k],
            rician_k: db_to_linear(3.0),
            pathloss_exp: 2.0,
            ref_gain: db_to_linear(-30.0),
            wavelength: 0.1,
            geometry: Geometry::default(),
            samples_per_decision: 10,
            initial_reflecting: reflecting_fraction(n, 0.625),
            seed: 1,
        }
    }
}

/// `ceil(fraction * n)`, the size of the `{1..fraction*N}` reflecting sets.
pub fn reflecting_fraction(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Near-square factorization `n = nx * ny` with `nx <= ny`.
pub fn grid_for(n: usize) -> (usize, usize) {
    let mut best = (1, n);
    let mut a = 1;
    while a * a <= n {
        if n % a == 0 {
            best = (a, n / a);
        }
        a += 1;
    }
    best
}

impl ScenarioConfig {
    /// Desk-scale scenario used by the test suite: M=2, N=16, K=2, L=4.
    pub fn desk() -> Self {
        Self::default().with_dims(2, 16, 2, (2, 2))
    }

    /// Replace the dimensions, resizing per-index vectors with their first entry.
    pub fn with_dims(mut self, m: usize, n: usize, k: usize, sensing_grid: (usize, usize)) -> Self {
        let l = sensing_grid.0 * sensing_grid.1;
        self.antennas = m;
        self.users = k;
        self.sensing_grid = sensing_grid;
        self.rcs = vec![self.rcs.first().copied().unwrap_or(0.8); l];
        self.gamma_s = vec![self.gamma_s.first().copied().unwrap_or(1.0); l];
        self.gamma_c = vec![self.gamma_c.first().copied().unwrap_or(1.0); k];
        self.noise_c = vec![self.noise_c.first().copied().unwrap_or(1e-10); k];
        self.set_ris_elements(n);
        self
    }

    /// Change `N`, keeping the reflecting ratio of the initial set.
    pub fn set_ris_elements(&mut self, n: usize) {
        let old_n = self.n().max(1);
        let ratio = self.initial_reflecting as f64 / old_n as f64;
        self.ris_grid = grid_for(n);
        self.initial_reflecting = reflecting_fraction(n, ratio).clamp(1, n);
    }

    pub fn n(&self) -> usize {
        self.ris_grid.0 * self.ris_grid.1
    }

    pub fn l(&self) -> usize {
        self.sensing_grid.0 * self.sensing_grid.1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.antennas == 0 || self.users == 0 || self.n() == 0 || self.l() == 0 {
            return bad("M, N, K and L must all be at least 1");
        }
        if self.rcs.len() != self.l() || self.gamma_s.len() != self.l() {
            return bad("rcs and gamma_s must have one entry per sensing location");
        }
        if self.gamma_c.len() != self.users || self.noise_c.len() != self.users {
            return bad("gamma_c and noise_c must have one entry per user");
        }
        let positive = [
            self.p_max,
            self.detector_power,
            self.noise_s,
            self.noise_d,
            self.ref_gain,
            self.wavelength,
            self.geometry.detector.distance,
            self.geometry.sensing.distance,
        ];
        if positive.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return bad("powers, noise variances, gains, wavelength and distances must be > 0");
        }
        let per_index = self.rcs.iter().chain(&self.noise_c);
        if per_index.clone().any(|&x| !(x > 0.0)) {
            return bad("rcs and noise_c entries must be > 0");
        }
        if self.gamma_s.iter().chain(&self.gamma_c).any(|&x| !(x >= 0.0)) {
            return bad("SINR thresholds must be non-negative");
        }
        if !(self.rician_k >= 0.0) {
            return bad("Rician factor must be >= 0");
        }
        if self.samples_per_decision == 0 {
            return bad("samples_per_decision must be >= 1");
        }
        if self.initial_reflecting == 0 || self.initial_reflecting >= self.n() {
            return bad("initial reflecting set must leave at least one absorptive element");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    fn expand(&self, n: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            ScalarOrList::Scalar(x) => Ok(vec![*x; n]),
            ScalarOrList::List(v) if v.len() == n => Ok(v.clone()),
            ScalarOrList::List(v) => Err(Error::Config(format!(
                "{what}: expected {n} entries, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub antennas: Option<usize>,
    pub ris_grid: Option<(usize, usize)>,
    pub users: Option<usize>,
    pub sensing_grid: Option<(usize, usize)>,
    pub initial_reflecting: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    pub p_max_dbm: Option<f64>,
    pub detector_power_dbm: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    pub gamma_s_db: Option<ScalarOrList>,
    pub gamma_c_db: Option<ScalarOrList>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub sensing_dbm: Option<f64>,
    pub detector_dbm: Option<f64>,
    pub comm_dbm: Option<ScalarOrList>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub rcs_m2: Option<ScalarOrList>,
    pub samples_per_decision: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationSection {
    pub rician_k_db: Option<f64>,
    pub pathloss_exp: Option<f64>,
    pub ref_gain_db: Option<f64>,
    pub wavelength_m: Option<f64>,
}

/// On-disk configuration. Sections mirror the groups of [`ScenarioConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: Option<u64>,
    #[serde(default)]
    pub array: ArraySection,
    #[serde(default)]
    pub power: PowerSection,
    #[serde(default)]
    pub thresholds: ThresholdSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub target: TargetSection,
    #[serde(default)]
    pub propagation: PropagationSection,
    pub geometry: Option<Geometry>,
    pub algorithm: Option<AlgorithmSettings>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Resolve against the reference defaults.
    pub fn resolve(&self) -> Result<(ScenarioConfig, AlgorithmSettings)> {
        let mut cfg = ScenarioConfig::default();
        let a = &self.array;
        let m = a.antennas.unwrap_or(cfg.antennas);
        let k = a.users.unwrap_or(cfg.users);
        let grid = a.ris_grid.unwrap_or(cfg.ris_grid);
        let sgrid = a.sensing_grid.unwrap_or(cfg.sensing_grid);
        cfg = cfg.with_dims(m, grid.0 * grid.1, k, sgrid);
        cfg.ris_grid = grid;
        if let Some(r) = a.initial_reflecting {
            cfg.initial_reflecting = r;
        }
        let (l, n_users) = (cfg.l(), cfg.users);
        if let Some(x) = self.power.p_max_dbm {
            cfg.p_max = dbm_to_watts(x);
        }
        if let Some(x) = self.power.detector_power_dbm {
            cfg.detector_power = dbm_to_watts(x);
        }
        if let Some(g) = &self.thresholds.gamma_s_db {
            cfg.gamma_s = g.expand(l, "gamma_s_db")?.into_iter().map(db_to_linear).collect();
        }
        if let Some(g) = &self.thresholds.gamma_c_db {
            cfg.gamma_c = g.expand(n_users, "gamma_c_db")?.into_iter().map(db_to_linear).collect();
        }
        if let Some(x) = self.noise.sensing_dbm {
            cfg.noise_s = dbm_to_watts(x);
        }
        if let Some(x) = self.noise.detector_dbm {
            cfg.noise_d = dbm_to_watts(x);
        }
        if let Some(g) = &self.noise.comm_dbm {
            cfg.noise_c = g.expand(n_users, "comm_dbm")?.into_iter().map(dbm_to_watts).collect();
        }
        if let Some(r) = &self.target.rcs_m2 {
            cfg.rcs = r.expand(l, "rcs_m2")?;
        }
        if let Some(t) = self.target.samples_per_decision {
            cfg.samples_per_decision = t;
        }
        let p = &self.propagation;
        if let Some(x) = p.rician_k_db {
            cfg.rician_k = db_to_linear(x);
        }
        if let Some(x) = p.pathloss_exp {
            cfg.pathloss_exp = x;
        }
        if let Some(x) = p.ref_gain_db {
            cfg.ref_gain = db_to_linear(x);
        }
        if let Some(x) = p.wavelength_m {
            cfg.wavelength = x;
        }
        if let Some(g) = &self.geometry {
            cfg.geometry = g.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let settings = self.algorithm.clone().unwrap_or_default();
        settings.validate()?;
        Ok((cfg, settings))
    }

    /// File form of a resolved configuration (lossless up to dB rounding).
    pub fn from_config(cfg: &ScenarioConfig, settings: &AlgorithmSettings) -> Self {
        let db_list = |v: &[f64]| ScalarOrList::List(v.iter().map(|&x| linear_to_db(x)).collect());
        Self {
            seed: Some(cfg.seed),
            array: ArraySection {
                antennas: Some(cfg.antennas),
                ris_grid: Some(cfg.ris_grid),
                users: Some(cfg.users),
                sensing_grid: Some(cfg.sensing_grid),
                initial_reflecting: Some(cfg.initial_reflecting),
            },
            power: PowerSection {
                p_max_dbm: Some(watts_to_dbm(cfg.p_max)),
                detector_power_dbm: Some(watts_to_dbm(cfg.detector_power)),
            },
            thresholds: ThresholdSection {
                gamma_s_db: Some(db_list(&cfg.gamma_s)),
                gamma_c_db: Some(db_list(&cfg.gamma_c)),
            },
            noise: NoiseSection {
                sensing_dbm: Some(watts_to_dbm(cfg.noise_s)),
                detector_dbm: Some(watts_to_dbm(cfg.noise_d)),
                comm_dbm: Some(ScalarOrList::List(
                    cfg.noise_c.iter().map(|&x| watts_to_dbm(x)).collect(),
                )),
            },
            target: TargetSection {
                rcs_m2: Some(ScalarOrList::List(cfg.rcs.clone())),
                samples_per_decision: Some(cfg.samples_per_decision),
            },
            propagation: PropagationSection {
                rician_k_db: Some(linear_to_db(cfg.rician_k)),
                pathloss_exp: Some(cfg.pathloss_exp),
                ref_gain_db: Some(linear_to_db(cfg.ref_gain)),
                wavelength_m: Some(cfg.wavelength),
            },
            geometry: Some(cfg.geometry.clone()),
            algorithm: Some(settings.clone()),
        }
    }
}
