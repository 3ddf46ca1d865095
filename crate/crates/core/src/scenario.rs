//! Geometry, steering vectors and channel synthesis, plus the
//! reflecting/absorptive partition of RIS elements.
//!
//! Element `(n_x, n_y)` of an `N_x x N_y` planar array is stored at flat
//! index `n_x + N_x * n_y` (0-based, column-major).  Index sets of the
//! partition are kept sorted ascending.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::linalg::{c64, select_entries, select_rows, CMat, CVec, C64};

/// Planar-array response for a direction given by azimuth and elevation (radians).
pub fn steering_vector(azimuth: f64, elevation: f64, grid: (usize, usize)) -> CVec {
    let (nx, ny) = grid;
    let kx = azimuth.cos() * elevation.sin();
    let ky = azimuth.sin() * elevation.sin();
    CVec::from_fn(nx * ny, |idx, _| {
        let (ix, iy) = (idx % nx, idx / nx);
        C64::from_polar(1.0, PI * (ix as f64 * kx + iy as f64 * ky))
    })
}

/// Complex path gain `α` for a LoS link of the given length.
pub fn path_gain(distance: f64, cfg: &ScenarioConfig) -> Result<C64> {
    if !(distance > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be > 0, got {distance}")));
    }
    let power = cfg.ref_gain * distance.powf(-cfg.pathloss_exp);
    Ok(C64::from_polar(power.sqrt(), -2.0 * PI * distance / cfg.wavelength))
}

/// LoS channel `α a(ϑ, φ)` from the RIS towards a point.
pub fn los_channel(distance: f64, azimuth: f64, elevation: f64, cfg: &ScenarioConfig) -> Result<CVec> {
    let alpha = path_gain(distance, cfg)?;
    Ok(steering_vector(azimuth, elevation, cfg.ris_grid) * alpha)
}

fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `sqrt(gain) (sqrt(κ/(1+κ)) LoS + sqrt(1/(1+κ)) H_nlos)` with i.i.d. CN(0,1) NLoS entries.
pub fn rician_channel<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    los: &CMat,
    rician_k: f64,
    gain: f64,
    rng: &mut R,
) -> Result<CMat> {
    if los.shape() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "LoS component is {:?}, expected {:?}",
            los.shape(),
            (rows, cols)
        )));
    }
    if !(rician_k >= 0.0) {
        return Err(Error::InvalidArgument("Rician factor must be >= 0".into()));
    }
    let amp = gain.sqrt();
    if rician_k.is_infinite() {
        return Ok(los * C64::from(amp));
    }
    let w_los = (rician_k / (1.0 + rician_k)).sqrt();
    let w_nlos = (1.0 / (1.0 + rician_k)).sqrt();
    // Column-major draw order keeps realizations reproducible across shapes.
    let mut out = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            let nlos = standard_complex_normal(rng);
            out[(i, j)] = (los[(i, j)] * w_los + nlos * w_nlos) * amp;
        }
    }
    Ok(out)
}

/// Reflecting (`R`) and absorptive (`A`) index sets, 0-based and ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementPartition {
    n: usize,
    reflecting: Vec<usize>,
    absorptive: Vec<usize>,
}

impl ElementPartition {
    pub fn new(n: usize, reflecting: &[usize]) -> Result<Self> {
        let mut is_r = vec![false; n];
        for &i in reflecting {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if is_r[i] {
                return Err(Error::InvalidArgument(format!("duplicate reflecting index {i}")));
            }
            is_r[i] = true;
        }
        let reflecting = (0..n).filter(|&i| is_r[i]).collect();
        let absorptive = (0..n).filter(|&i| !is_r[i]).collect();
        Ok(Self { n, reflecting, absorptive })
    }

    /// `R = {0..nr}`, `A` the rest.
    pub fn leading(n: usize, nr: usize) -> Result<Self> {
        if nr > n {
            return Err(Error::IndexOutOfRange { index: nr, len: n });
        }
        Self::new(n, &(0..nr).collect::<Vec<_>>())
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn reflecting(&self) -> &[usize] {
        &self.reflecting
    }
    pub fn absorptive(&self) -> &[usize] {
        &self.absorptive
    }
    pub fn nr(&self) -> usize {
        self.reflecting.len()
    }
    pub fn na(&self) -> usize {
        self.absorptive.len()
    }

    /// Move the absorptive elements at the given positions of `A` into `R`.
    /// Returns the moved element indices (ascending).
    pub fn reassign(&mut self, positions_in_a: &[usize]) -> Result<Vec<usize>> {
        let mut moved = Vec::with_capacity(positions_in_a.len());
        for &p in positions_in_a {
            let idx = *self
                .absorptive
                .get(p)
                .ok_or(Error::IndexOutOfRange { index: p, len: self.absorptive.len() })?;
            moved.push(idx);
        }
        moved.sort_unstable();
        moved.dedup();
        let mut r = self.reflecting.clone();
        r.extend(&moved);
        *self = Self::new(self.n, &r)?;
        Ok(moved)
    }

    pub fn is_valid(&self) -> bool {
        let mut seen = vec![0u8; self.n];
        for &i in self.reflecting.iter().chain(&self.absorptive) {
            if i >= self.n {
                return false;
            }
            seen[i] += 1;
        }
        seen.iter().all(|&c| c == 1)
            && self.reflecting.windows(2).all(|w| w[0] < w[1])
            && self.absorptive.windows(2).all(|w| w[0] < w[1])
    }
}

/// Full-RIS channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// BS to RIS, `N x M`.
    pub g: CMat,
    /// RIS to user `k`, length `N`.
    pub h: Vec<CVec>,
    /// RIS to sensing location `ℓ` (LoS), length `N`.
    pub c: Vec<CVec>,
    /// RIS to adversarial detector (LoS), length `N`.
    pub e: CVec,
    /// Detector to location `ℓ` (LoS).
    pub d: Vec<C64>,
}

impl ChannelSet {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }
    pub fn m(&self) -> usize {
        self.g.ncols()
    }
}

/// Reflecting/absorptive views of a [`ChannelSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedChannels {
    pub gr: CMat,
    pub hr: Vec<CVec>,
    pub cr: Vec<CVec>,
    pub ca: Vec<CVec>,
    pub er: CVec,
    pub ea: CVec,
    pub d: Vec<C64>,
    pub partition: ElementPartition,
}

impl PartitionedChannels {
    pub fn m(&self) -> usize {
        self.gr.ncols()
    }
    pub fn k(&self) -> usize {
        self.hr.len()
    }
    pub fn l(&self) -> usize {
        self.cr.len()
    }
    pub fn nr(&self) -> usize {
        self.gr.nrows()
    }
    pub fn na(&self) -> usize {
        self.ea.len()
    }
}

pub fn partition_channels(ch: &ChannelSet, partition: &ElementPartition) -> Result<PartitionedChannels> {
    if partition.n() != ch.n() || !partition.is_valid() {
        return Err(Error::Dimension(format!(
            "partition over {} elements does not cover a {}-element RIS",
            partition.n(),
            ch.n()
        )));
    }
    let r = partition.reflecting();
    let a = partition.absorptive();
    Ok(PartitionedChannels {
        gr: select_rows(&ch.g, r),
        hr: ch.h.iter().map(|h| select_entries(h, r)).collect(),
        cr: ch.c.iter().map(|c| select_entries(c, r)).collect(),
        ca: ch.c.iter().map(|c| select_entries(c, a)).collect(),
        er: select_entries(&ch.e, r),
        ea: select_entries(&ch.e, a),
        d: ch.d.clone(),
        partition: partition.clone(),
    })
}

/// Azimuth/elevation (radians) of `to` seen from `from`.
pub fn direction(from: [f64; 3], to: [f64; 3]) -> (f64, f64, f64) {
    let v = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let dist = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let az = v[1].atan2(v[0]);
    let el = if dist > 0.0 { (v[2] / dist).clamp(-1.0, 1.0).acos() } else { 0.0 };
    (dist, az, el)
}

pub fn polar_to_cartesian(origin: [f64; 3], distance: f64, azimuth: f64, elevation: f64) -> [f64; 3] {
    [
        origin[0] + distance * azimuth.cos() * elevation.sin(),
        origin[1] + distance * azimuth.sin() * elevation.sin(),
        origin[2] + distance * elevation.cos(),
    ]
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Uniform `n_az x n_el` grid over the sensing rectangle, azimuth fastest.
/// Returns `(azimuth, elevation)` pairs in radians.
pub fn sensing_grid(cfg: &ScenarioConfig, resolution: (usize, usize)) -> Vec<(f64, f64)> {
    let s = &cfg.geometry.sensing;
    let az = linspace(s.azimuth_deg.0, s.azimuth_deg.1, resolution.0);
    let el = linspace(s.elevation_deg.0, s.elevation_deg.1, resolution.1);
    let mut out = Vec::with_capacity(az.len() * el.len());
    for e in &el {
        for a in &az {
            out.push((a.to_radians(), e.to_radians()));
        }
    }
    out
}

/// A sensed point's channels: `c` (RIS to point) and `d` (detector to point).
pub fn point_channels(cfg: &ScenarioConfig, azimuth: f64, elevation: f64) -> Result<(CVec, C64)> {
    let geo = &cfg.geometry;
    let range = geo.sensing.distance;
    let c = los_channel(range, azimuth, elevation, cfg)?;
    let det = detector_position(cfg);
    let point = polar_to_cartesian(geo.ris, range, azimuth, elevation);
    let (dist, _, _) = direction(det, point);
    Ok((c, path_gain(dist, cfg)?))
}

pub fn detector_position(cfg: &ScenarioConfig) -> [f64; 3] {
    let det = &cfg.geometry.detector;
    polar_to_cartesian(
        cfg.geometry.ris,
        det.distance,
        det.azimuth_deg.to_radians(),
        det.elevation_deg.to_radians(),
    )
}

/// One channel realization together with the geometry it was drawn from.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub channels: ChannelSet,
    pub partition: ElementPartition,
    /// `(azimuth, elevation)` of each sensing location, radians.
    pub sensing_angles: Vec<(f64, f64)>,
    pub user_positions: Vec<[f64; 3]>,
}

pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let geo = &cfg.geometry;
    let (n, m) = (cfg.n(), cfg.antennas);

    let user_positions: Vec<[f64; 3]> = (0..cfg.users)
        .map(|_| {
            let mut p = [0.0; 3];
            for (i, x) in p.iter_mut().enumerate() {
                let (lo, hi) = (geo.user_min[i].min(geo.user_max[i]), geo.user_min[i].max(geo.user_max[i]));
                *x = if hi > lo { rng.random_range(lo..hi) } else { lo };
            }
            p
        })
        .collect();

    // BS -> RIS: RIS-side response towards the BS times the BS ULA response.
    let (d_bs, az_ris_to_bs, el_ris_to_bs) = direction(geo.ris, geo.bs);
    let (_, az_bs_to_ris, el_bs_to_ris) = direction(geo.bs, geo.ris);
    let a_ris = steering_vector(az_ris_to_bs, el_ris_to_bs, cfg.ris_grid);
    let a_bs = steering_vector(az_bs_to_ris, el_bs_to_ris, (m, 1));
    let los_g = &a_ris * a_bs.transpose();
    let gain_g = cfg.ref_gain * d_bs.powf(-cfg.pathloss_exp);
    let g = rician_channel(n, m, &los_g, cfg.rician_k, gain_g, &mut rng)?;

    let mut h = Vec::with_capacity(cfg.users);
    for p in &user_positions {
        let (dist, az, el) = direction(geo.ris, *p);
        let los = CMat::from_column_slice(n, 1, steering_vector(az, el, cfg.ris_grid).as_slice());
        let gain = cfg.ref_gain * dist.powf(-cfg.pathloss_exp);
        let hk = rician_channel(n, 1, &los, cfg.rician_k, gain, &mut rng)?;
        h.push(hk.column(0).into_owned());
    }

    let sensing_angles = sensing_grid(cfg, cfg.sensing_grid);
    let mut c = Vec::with_capacity(sensing_angles.len());
    let mut d = Vec::with_capacity(sensing_angles.len());
    for &(az, el) in &sensing_angles {
        let (cl, dl) = point_channels(cfg, az, el)?;
        c.push(cl);
        d.push(dl);
    }
    let det = &geo.detector;
    let e = los_channel(det.distance, det.azimuth_deg.to_radians(), det.elevation_deg.to_radians(), cfg)?;

    Ok(Scenario {
        channels: ChannelSet { g, h, c, e, d },
        partition: ElementPartition::leading(n, cfg.initial_reflecting)?,
        sensing_angles,
        user_positions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn steering_reference_element_is_one() {
        for &(a, e) in &[(0.3, 1.1), (-2.0, 0.2), (1.0, 3.0)] {
            let v = steering_vector(a, e, (3, 2));
            assert_relative_eq!(v[0].re, 1.0, epsilon = 1e-15);
            assert_relative_eq!(v[0].im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn steering_direct_substitution() {
        let v = steering_vector(0.0, FRAC_PI_2, (2, 1));
        assert_relative_eq!(v[1].re, -1.0, epsilon = 1e-12);
        assert_relative_eq!(v[1].im, 0.0, epsilon = 1e-12);
        let v = steering_vector(0.0, PI / 6.0, (2, 1));
        assert_relative_eq!(v[1].re, 0.0, epsilon = 1e-12);
        assert_relative_eq!(v[1].im, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn steering_column_major_layout() {
        // element (n_x=0, n_y=1) of a 2x2 grid sits at flat index 2
        let (az, el) = (0.4, 0.9);
        let v = steering_vector(az, el, (2, 2));
        let expect = C64::from_polar(1.0, PI * az.sin() * el.sin());
        assert_relative_eq!(v[2].re, expect.re, epsilon = 1e-14);
        assert_relative_eq!(v[2].im, expect.im, epsilon = 1e-14);
    }

    #[test]
    fn los_magnitude_and_phase() {
        let cfg = ScenarioConfig::default();
        let c1 = los_channel(1.0, 0.2, 0.3, &cfg).unwrap();
        for z in c1.iter() {
            assert_relative_eq!(z.norm(), 1e-3f64.sqrt(), max_relative = 1e-12);
        }
        let c8 = los_channel(8.0, 60f64.to_radians(), 80f64.to_radians(), &cfg).unwrap();
        assert_relative_eq!(c8[0].norm(), (1e-3f64 / 64.0).sqrt(), max_relative = 1e-12);
        // phase of the reference entry is -2π d / λ (mod 2π)
        let expect = (-2.0 * PI * 8.0 / cfg.wavelength).rem_euclid(2.0 * PI);
        let got = c8[0].arg().rem_euclid(2.0 * PI);
        let diff = (got - expect).abs();
        assert!(diff < 1e-9 || (2.0 * PI - diff) < 1e-9, "phase {got} vs {expect}");
    }

    #[test]
    fn los_rejects_non_positive_distance() {
        let cfg = ScenarioConfig::default();
        assert!(los_channel(0.0, 0.0, 0.0, &cfg).is_err());
        assert!(los_channel(-1.0, 0.0, 0.0, &cfg).is_err());
    }

    #[test]
    fn rician_infinite_k_is_pure_los() {
        let los = CMat::from_fn(3, 2, |i, j| C64::from_polar(1.0, (i + 2 * j) as f64));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = rician_channel(3, 2, &los, f64::INFINITY, 4.0, &mut rng).unwrap();
        assert!((h - los * C64::from(2.0)).norm() < 1e-14);
    }

    #[test]
    fn rician_dimension_mismatch() {
        let los = CMat::zeros(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(rician_channel(3, 2, &los, 1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn partition_selection_semantics() {
        let ch = ChannelSet {
            g: CMat::from_fn(4, 2, |i, j| c64(i as f64, j as f64)),
            h: vec![CVec::from_fn(4, |i, _| c64(i as f64, 0.0))],
            c: vec![CVec::from_fn(4, |i, _| c64(0.0, i as f64))],
            e: CVec::from_fn(4, |i, _| c64(10.0 + i as f64, 0.0)),
            d: vec![c64(1.0, 0.0)],
        };
        // R = {1,3} in 1-based terms
        let p = ElementPartition::new(4, &[0, 2]).unwrap();
        let v = partition_channels(&ch, &p).unwrap();
        assert_eq!(v.gr.row(0), ch.g.row(0));
        assert_eq!(v.gr.row(1), ch.g.row(2));
        assert_eq!(v.ea.as_slice(), &[ch.e[1], ch.e[3]]);

        let all = partition_channels(&ch, &ElementPartition::leading(4, 4).unwrap()).unwrap();
        assert_eq!(all.gr, ch.g);
        assert_eq!(all.ca[0].len(), 0);

        let none = partition_channels(&ch, &ElementPartition::leading(4, 0).unwrap()).unwrap();
        assert_eq!(none.er.len(), 0);
        assert_eq!(none.ea, ch.e);
    }

    #[test]
    fn partition_rejects_bad_indices() {
        assert!(ElementPartition::new(4, &[4]).is_err());
        assert!(ElementPartition::new(4, &[1, 1]).is_err());
        let ch = build_scenario(&ScenarioConfig::desk()).unwrap().channels;
        assert!(partition_channels(&ch, &ElementPartition::leading(8, 2).unwrap()).is_err());
    }

    #[test]
    fn reassign_moves_elements() {
        let mut p = ElementPartition::leading(6, 2).unwrap();
        let moved = p.reassign(&[1, 3]).unwrap();
        assert_eq!(moved, vec![3, 5]);
        assert_eq!(p.reflecting(), &[0, 1, 3, 5]);
        assert_eq!(p.absorptive(), &[2, 4]);
        assert!(p.is_valid());
        assert!(p.reassign(&[5]).is_err());
    }

    #[test]
    fn default_scenario_geometry() {
        let cfg = ScenarioConfig::default();
        let sc = build_scenario(&cfg).unwrap();
        assert_eq!(sc.channels.c.len(), 9);
        assert_eq!(sc.channels.g.shape(), (64, 4));
        let expect = (cfg.ref_gain / 64.0).sqrt();
        for c in &sc.channels.c {
            assert_relative_eq!(c[5].norm(), expect, max_relative = 1e-12);
        }
        for p in &sc.user_positions {
            assert!(p[0] >= 7.5 && p[0] <= 12.5 && p[1] >= 10.0 && p[1] <= 15.0);
        }
    }

    #[test]
    fn single_location_sits_at_rectangle_center() {
        let mut cfg = ScenarioConfig::desk().with_dims(2, 16, 2, (1, 1));
        cfg.initial_reflecting = 10;
        let sc = build_scenario(&cfg).unwrap();
        assert_eq!(sc.sensing_angles.len(), 1);
        let (az, el) = sc.sensing_angles[0];
        assert_relative_eq!(az, 50f64.to_radians(), epsilon = 1e-12);
        assert_relative_eq!(el, 80f64.to_radians(), epsilon = 1e-12);
    }

    #[test]
    fn scenario_is_seed_deterministic() {
        let cfg = ScenarioConfig::desk();
        let a = build_scenario(&cfg).unwrap();
        let b = build_scenario(&cfg).unwrap();
        assert_eq!(a.channels, b.channels);
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(build_scenario(&other).unwrap().channels, a.channels);
    }
}
