//! Measured observables: arrival-time-window averaging over the source's
//! vertical spread, finite detector resolution, and fringe metrics.

use crate::aperture::{
    k_average_rule, rho_after_with_rule, DensityProfile, ProfileMeta, ProfileMode,
};
use crate::model::{ExperimentConfig, Grid1D};
use crate::quad::gauss_hermite;
use crate::wavepacket::{detector_arrival_time, slit_arrival_time};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("time window needs 0 < t_min < t_max (got [{t_min}, {t_max}])")]
    BadWindow { t_min: f64, t_max: f64 },
    #[error("no (z0, k0z) quadrature node arrives inside [{t_min}, {t_max}]")]
    UnsatisfiableWindow { t_min: f64, t_max: f64 },
    #[error("grid spacing {spacing} too coarse for resolution {resolution} (need < resolution/4)")]
    GridTooCoarse { spacing: f64, resolution: f64 },
    #[error("profile has {found} usable maxima, need at least {need}")]
    InsufficientStructure { found: usize, need: usize },
    #[error("malformed profile: {0}")]
    MalformedProfile(String),
    #[error(transparent)]
    Aperture(#[from] crate::aperture::ApertureError),
}

/// Accepted arrival-time interval of the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub t_min: f64,
    pub t_max: f64,
}

impl TimeWindow {
    pub fn new(t_min: f64, t_max: f64) -> Result<Self, DetectorError> {
        if !(t_min > 0.0) || !(t_max > t_min) {
            return Err(DetectorError::BadWindow { t_min, t_max });
        }
        Ok(Self { t_min, t_max })
    }

    /// Window used for the detector scenario, bracketing the 196 ms central
    /// arrival.
    pub fn default_detection() -> Self {
        Self { t_min: 0.17, t_max: 0.22 }
    }

    #[inline]
    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }
}

/// Default Gauss–Hermite sizes for the (z₀, k₀z) average.
pub const DEFAULT_WINDOW_QUAD: (usize, usize) = (16, 16);

/// One admitted (z₀, v₀z) node of the time-window average.
#[derive(Debug, Clone, Copy)]
pub struct WindowNode {
    pub z0: f64,
    pub v0z: f64,
    pub t1: f64,
    pub t2: f64,
    pub weight: f64,
}

/// The (z₀, k₀z) nodes whose packet-center arrival falls inside the window,
/// weights renormalized over the admitted set.
pub fn window_nodes(
    window: TimeWindow,
    quad: (usize, usize),
    config: &ExperimentConfig,
) -> Result<Vec<WindowNode>, DetectorError> {
    let (n_z0, n_k0z) = quad;
    let rz = gauss_hermite(n_z0);
    let rv = gauss_hermite(n_k0z);
    let sz = config.source.sigma_z;
    let sv = config.source.sigma_v_axis();
    let mut nodes = Vec::new();
    let mut total = 0.0;
    for (&xz, &wz) in rz.nodes.iter().zip(&rz.weights) {
        let z0 = std::f64::consts::SQRT_2 * sz * xz;
        for (&xv, &wv) in rv.nodes.iter().zip(&rv.weights) {
            let v0z = std::f64::consts::SQRT_2 * sv * xv;
            let t2 = match detector_arrival_time(z0, v0z, config) {
                Ok(t) => t,
                Err(_) => continue,
            };
            if !window.contains(t2) {
                continue;
            }
            let t1 = slit_arrival_time(z0, v0z, config)
                .map_err(crate::aperture::ApertureError::Model)?;
            let w = wz * wv;
            total += w;
            nodes.push(WindowNode { z0, v0z, t1, t2, weight: w });
        }
    }
    if nodes.is_empty() {
        return Err(DetectorError::UnsatisfiableWindow {
            t_min: window.t_min,
            t_max: window.t_max,
        });
    }
    for n in &mut nodes {
        n.weight /= total;
    }
    Ok(nodes)
}

/// Density at the detector averaged over initial vertical position and
/// velocity, restricted to arrivals inside `window`.
pub fn rho_time_window(
    x: f64,
    window: TimeWindow,
    config: &ExperimentConfig,
    quad: (usize, usize),
) -> Result<f64, DetectorError> {
    let nodes = window_nodes(window, quad, config)?;
    let rule = k_average_rule(config);
    let mut acc = 0.0;
    for n in &nodes {
        acc += n.weight
            * rho_after_with_rule(x, n.t2, n.t1, &rule, ProfileMode::Interference, config)?;
    }
    Ok(acc)
}

/// Full time-windowed profile on a grid (parallel over grid points).
pub fn rho_time_window_profile(
    grid: Grid1D,
    window: TimeWindow,
    config: &ExperimentConfig,
    quad: (usize, usize),
) -> Result<DensityProfile, DetectorError> {
    let nodes = window_nodes(window, quad, config)?;
    let rule = k_average_rule(config);
    let xs: Vec<f64> = grid.points().collect();
    let values: Result<Vec<f64>, DetectorError> = xs
        .par_iter()
        .map(|&x| {
            let mut acc = 0.0;
            for n in &nodes {
                acc += n.weight
                    * rho_after_with_rule(
                        x,
                        n.t2,
                        n.t1,
                        &rule,
                        ProfileMode::Interference,
                        config,
                    )?;
            }
            Ok(acc)
        })
        .collect();
    let t2c = detector_arrival_time(0.0, 0.0, config)
        .map_err(crate::aperture::ApertureError::Model)?;
    let meta = ProfileMeta {
        mode: ProfileMode::Interference,
        t: t2c,
        delta_z: config.slits.l2,
        k0z: 0.0,
        z0: 0.0,
        n_quad_slit: config.slits.n_quad_slit,
        n_quad_k: config.slits.n_quad_k,
    };
    Ok(DensityProfile::from_raw(grid, values?, meta))
}

/// Detector resolution of the reference experiment (m).
pub const DETECTOR_RESOLUTION: f64 = 80e-6;

/// Boxcar average of half-width resolution/2; edge samples renormalize over
/// the truncated window.
///
/// Each sample owns a grid cell of width h; the window weight of a sample is
/// the overlap of its cell with [x − w/2, x + w/2], so the discrete average
/// converges to the continuous one instead of carrying an (n·h vs w) width
/// bias. A window narrower than one cell degenerates to the identity.
pub fn detector_smooth(
    profile: &DensityProfile,
    resolution: f64,
) -> Result<DensityProfile, DetectorError> {
    let spacing = profile.grid.spacing();
    if resolution <= spacing {
        return Ok(profile.clone());
    }
    if !(spacing < resolution / 4.0) {
        return Err(DetectorError::GridTooCoarse { spacing, resolution });
    }
    let half = resolution / 2.0;
    let reach = ((half + 0.5 * spacing) / spacing).ceil() as usize;
    let n = profile.values.len();
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(reach);
            let hi = (i + reach).min(n - 1);
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for j in lo..=hi {
                let d = (j as f64 - i as f64).abs() * spacing;
                // overlap of the cell [d - h/2, d + h/2] with [0, half]
                let w = ((half - d) / spacing + 0.5).clamp(0.0, 1.0);
                acc += w * profile.values[j];
                wsum += w;
            }
            acc / wsum
        })
        .collect();
    // a moving average, not a re-normalization: mass is conserved up to edge
    // truncation
    Ok(DensityProfile { grid: profile.grid, values, meta: profile.meta })
}

/// Positions, pitch and contrast of interference fringes.
#[derive(Debug, Clone)]
pub struct FringeMetrics {
    /// Median gap between adjacent peaks (m).
    pub spacing: f64,
    /// (max − min)/(max + min) over the central three fringes.
    pub visibility: f64,
    /// Sub-grid interpolated peak positions, ascending (m).
    pub peak_positions: Vec<f64>,
}

/// Fraction of the global maximum a local maximum must reach to count as a
/// fringe peak.
pub const PEAK_THRESHOLD: f64 = 0.1;
/// Minimum usable peak count.
pub const MIN_PEAKS: usize = 5;

/// Locate fringe peaks by quadratic sub-grid interpolation and report their
/// median spacing and central visibility.
pub fn fringe_metrics(profile: &DensityProfile) -> Result<FringeMetrics, DetectorError> {
    let v = &profile.values;
    if v.len() < 5 {
        return Err(DetectorError::MalformedProfile(format!(
            "need at least 5 samples, got {}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(DetectorError::MalformedProfile("non-finite sample".into()));
    }
    let peak_floor = PEAK_THRESHOLD * v.iter().cloned().fold(f64::MIN, f64::max);
    let h = profile.grid.spacing();
    let mut peaks = Vec::new();
    for i in 1..v.len() - 1 {
        if v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] > peak_floor {
            let denom = v[i - 1] - 2.0 * v[i] + v[i + 1];
            let shift = if denom.abs() > 0.0 { 0.5 * (v[i - 1] - v[i + 1]) / denom } else { 0.0 };
            peaks.push(profile.grid.point(i) + shift.clamp(-0.5, 0.5) * h);
        }
    }
    if peaks.len() < MIN_PEAKS {
        return Err(DetectorError::InsufficientStructure { found: peaks.len(), need: MIN_PEAKS });
    }
    let mut gaps: Vec<f64> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let spacing = if gaps.len() % 2 == 1 {
        gaps[gaps.len() / 2]
    } else {
        0.5 * (gaps[gaps.len() / 2 - 1] + gaps[gaps.len() / 2])
    };

    // visibility over the central three fringes: the three peaks nearest the
    // grid center and the valleys between them
    let center = 0.5 * (profile.grid.min + profile.grid.max);
    let mut by_center: Vec<f64> = peaks.clone();
    by_center.sort_by(|a, b| (a - center).abs().partial_cmp(&(b - center).abs()).unwrap());
    let mut central: Vec<f64> = by_center.into_iter().take(3).collect();
    central.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = |x: f64| -> usize {
        (((x - profile.grid.min) / h).round() as isize).clamp(0, v.len() as isize - 1) as usize
    };
    let (i_lo, i_hi) = (idx(central[0]), idx(central[central.len() - 1]));
    let seg = &v[i_lo..=i_hi];
    let max = seg.iter().cloned().fold(f64::MIN, f64::max);
    let min = seg.iter().cloned().fold(f64::MAX, f64::min);
    let visibility = if max + min > 0.0 { (max - min) / (max + min) } else { 0.0 };

    Ok(FringeMetrics { spacing, visibility, peak_positions: peaks })
}

/// Serialize metrics as the flat `key = value` text block of the CLI output.
pub fn metrics_to_text(m: &FringeMetrics) -> String {
    let mut s = String::new();
    s.push_str(&format!("fringe_spacing_m = {}\n", m.spacing));
    s.push_str(&format!("visibility = {}\n", m.visibility));
    s.push_str(&format!("n_peaks = {}\n", m.peak_positions.len()));
    for (i, p) in m.peak_positions.iter().enumerate() {
        s.push_str(&format!("peak_{i}_m = {p}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aperture::trapezoid;
    use crate::model::default_shimizu_config;
    use std::f64::consts::PI;

    fn synthetic_profile(grid: Grid1D, f: impl Fn(f64) -> f64) -> DensityProfile {
        let values: Vec<f64> = grid.points().map(f).collect();
        let meta = ProfileMeta {
            mode: ProfileMode::Interference,
            t: 0.0,
            delta_z: 0.0,
            k0z: 0.0,
            z0: 0.0,
            n_quad_slit: 0,
            n_quad_k: 0,
        };
        DensityProfile { grid, values, meta }
    }

    #[test]
    fn window_admits_everything_when_unbounded() {
        let cfg = default_shimizu_config();
        let window = TimeWindow::new(1e-6, 1e6).unwrap();
        let nodes = window_nodes(window, (16, 16), &cfg).unwrap();
        assert_eq!(nodes.len(), 16 * 16);
        let total: f64 = nodes.iter().map(|n| n.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_spreads_reduce_to_central_slice() {
        let mut cfg = default_shimizu_config();
        cfg.source.sigma_z = 1e-12;
        cfg.source.sigma_v = 1e-12 * 3.0_f64.sqrt();
        let window = TimeWindow::new(0.17, 0.22).unwrap();
        let x = 1.1e-4;
        let windowed = rho_time_window(x, window, &cfg, (8, 8)).unwrap();
        let t1 = slit_arrival_time(0.0, 0.0, &cfg).unwrap();
        let t2 = detector_arrival_time(0.0, 0.0, &cfg).unwrap();
        let rule = k_average_rule(&cfg);
        let point =
            rho_after_with_rule(x, t2, t1, &rule, ProfileMode::Interference, &cfg).unwrap();
        assert!((windowed / point - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unsatisfiable_window_reported() {
        let cfg = default_shimizu_config();
        let window = TimeWindow::new(1e-3, 2e-3).unwrap(); // nothing arrives this early
        assert!(matches!(
            rho_time_window(0.0, window, &cfg, (8, 8)),
            Err(DetectorError::UnsatisfiableWindow { .. })
        ));
    }

    #[test]
    fn narrow_window_matches_dense_oracle_with_axial_nodes() {
        // odd node counts put a node at v0z = 0, the only column a 10 ms
        // window admits; even counts signal the window as unsatisfiable
        // (see below)
        let cfg = default_shimizu_config();
        let window = TimeWindow::new(0.19, 0.20).unwrap();
        let coarse = rho_time_window(0.0, window, &cfg, (17, 17)).unwrap();
        let dense = rho_time_window(0.0, window, &cfg, (65, 65)).unwrap();
        assert!((coarse / dense - 1.0).abs() < 0.05, "17x17 {coarse} vs 65x65 {dense}");
    }

    #[test]
    fn narrow_window_with_even_nodes_is_unsatisfiable() {
        let cfg = default_shimizu_config();
        let window = TimeWindow::new(0.19, 0.20).unwrap();
        assert!(matches!(
            rho_time_window(0.0, window, &cfg, DEFAULT_WINDOW_QUAD),
            Err(DetectorError::UnsatisfiableWindow { .. })
        ));
    }

    #[test]
    fn default_window_shape_converges_in_node_count() {
        // the default window admits few v0z columns; the normalized shape is
        // what downstream statistics consume and it is stable under node
        // refinement
        let cfg = default_shimizu_config();
        let window = TimeWindow::default_detection();
        let grid = Grid1D::symmetric(1.2e-3, 241).unwrap();
        let coarse = rho_time_window_profile(grid, window, &cfg, DEFAULT_WINDOW_QUAD).unwrap();
        let dense = rho_time_window_profile(grid, window, &cfg, (32, 32)).unwrap();
        let l1 = crate::aperture::profile_l1(&coarse, &dense);
        assert!(l1 < 0.05, "normalized shape L1 {l1}");
    }

    #[test]
    fn window_average_mirror_symmetric() {
        let cfg = default_shimizu_config();
        let window = TimeWindow::default_detection();
        let a = rho_time_window(2.3e-4, window, &cfg, DEFAULT_WINDOW_QUAD).unwrap();
        let b = rho_time_window(-2.3e-4, window, &cfg, DEFAULT_WINDOW_QUAD).unwrap();
        assert!((a / b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn boxcar_keeps_constants_and_mass() {
        let grid = Grid1D::symmetric(1e-3, 401).unwrap();
        let flat = synthetic_profile(grid, |_| 2.5);
        let sm = detector_smooth(&flat, DETECTOR_RESOLUTION).unwrap();
        for (&a, &b) in flat.values.iter().zip(&sm.values) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
        // interior mass is conserved: a bump well away from the edges
        let bump = synthetic_profile(grid, |x| (-x * x / (2.0 * (1e-4f64).powi(2))).exp());
        let sb = detector_smooth(&bump, DETECTOR_RESOLUTION).unwrap();
        assert!(
            (trapezoid(&grid, &sb.values) / trapezoid(&grid, &bump.values) - 1.0).abs() < 1e-3
        );
    }

    #[test]
    fn boxcar_attenuates_cosine_by_sinc_factor() {
        // 0.25 mm cosine fringe, 80 um window: amplitude factor
        // sin(pi w / L)/(pi w / L) = 0.8399 up to discretization
        let lambda = 0.25e-3;
        let grid = Grid1D::symmetric(2e-3, 1601).unwrap();
        let fringe = synthetic_profile(grid, |x| 1.0 + (2.0 * PI * x / lambda).cos());
        let sm = detector_smooth(&fringe, DETECTOR_RESOLUTION).unwrap();
        let n = sm.values.len();
        let seg = &sm.values[n / 3..2 * n / 3];
        let max = seg.iter().cloned().fold(f64::MIN, f64::max);
        let min = seg.iter().cloned().fold(f64::MAX, f64::min);
        let contrast = (max - min) / (max + min);
        let x = PI * DETECTOR_RESOLUTION / lambda;
        let expect = x.sin() / x;
        assert!((contrast - expect).abs() < 1e-3, "contrast {contrast} vs sinc {expect}");
        assert!(contrast > 0.8);
    }

    #[test]
    fn smoothing_idempotent_below_grid_scale() {
        let grid = Grid1D::symmetric(2e-3, 801).unwrap();
        let fringe = synthetic_profile(grid, |x| 1.0 + (2.0 * PI * x / 2.5e-4).cos());
        let once = detector_smooth(&fringe, DETECTOR_RESOLUTION).unwrap();
        // a second window narrower than one grid step is the identity
        let twice = detector_smooth(&once, 1e-6).unwrap();
        for (a, b) in once.values.iter().zip(&twice.values) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn too_coarse_grid_rejected() {
        let grid = Grid1D::symmetric(2e-3, 81).unwrap(); // 50 um spacing
        let p = synthetic_profile(grid, |_| 1.0);
        assert!(matches!(
            detector_smooth(&p, DETECTOR_RESOLUTION),
            Err(DetectorError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn fringe_metrics_recovers_synthetic_pitch() {
        let lambda = 2.5e-4;
        let grid = Grid1D::symmetric(1.5e-3, 1201).unwrap();
        let p = synthetic_profile(grid, |x| (PI * x / lambda).cos().powi(2));
        let m = fringe_metrics(&p).unwrap();
        assert!((m.spacing - lambda).abs() < grid.spacing(), "spacing {}", m.spacing);
        assert!(m.visibility > 0.99);
    }

    #[test]
    fn fringe_metrics_scale_invariant() {
        let lambda = 2.5e-4;
        let grid = Grid1D::symmetric(1.5e-3, 1201).unwrap();
        let p = synthetic_profile(grid, |x| (PI * x / lambda).cos().powi(2));
        let scaled = synthetic_profile(grid, |x| 7.3e4 * (PI * x / lambda).cos().powi(2));
        let a = fringe_metrics(&p).unwrap();
        let b = fringe_metrics(&scaled).unwrap();
        assert_eq!(a.spacing, b.spacing);
        assert_eq!(a.peak_positions.len(), b.peak_positions.len());
    }

    #[test]
    fn monotone_profile_lacks_structure() {
        let grid = Grid1D::symmetric(1e-3, 301).unwrap();
        let p = synthetic_profile(grid, |x| x + 2e-3);
        assert!(matches!(fringe_metrics(&p), Err(DetectorError::InsufficientStructure { .. })));
        let tiny = synthetic_profile(Grid1D::symmetric(1e-3, 2).unwrap(), |_| 1.0);
        assert!(matches!(fringe_metrics(&tiny), Err(DetectorError::MalformedProfile(_))));
    }
}
