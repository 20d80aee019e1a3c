//! Classical-limit study: rerun the detector-plane density and trajectory
//! ensemble with the Planck constant divided by η and watch both collapse
//! onto ballistic mechanics.
//!
//! All scaled runs use the axial stream (k₀x = k₀z = 0, z₀ = 0): the
//! classical image of that stream is simply the source Gaussian cut to the
//! two slit openings, which gives a closed-form baseline for the distance
//! metric.

use crate::aperture::{
    psi_after_slits, trapezoid, ApertureError, DensityProfile, ProfileMeta, ProfileMode,
};
use crate::bohm::{integrate_trajectory, passes_slit, BohmError, TrajectoryOptions};
use crate::detector::{detector_smooth, fringe_metrics, DetectorError, DETECTOR_RESOLUTION};
use crate::model::{ExperimentConfig, Grid1D, InitialConditions, SlitLabel};
use crate::quad::next_odd;
use crate::rng::CounterRng;
use crate::wavepacket::{detector_arrival_time, slit_arrival_time};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("divisors must be ascending with first = 1, got {0:?}")]
    BadDivisors(Vec<f64>),
    #[error(transparent)]
    Aperture(#[from] ApertureError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Bohm(#[from] BohmError),
    #[error(transparent)]
    Model(#[from] crate::model::ConfigError),
}

/// Outcome of the ħ-scaling ladder.
#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub divisors: Vec<f64>,
    /// Fringe pitch per η; `None` once the pattern loses resolvable peaks.
    pub fringe_spacings: Vec<Option<f64>>,
    /// Smoothed L1 distance to the classical baseline per η.
    pub classical_distance: Vec<f64>,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eta,fringe_spacing_m,classical_l1\n");
        for i in 0..self.divisors.len() {
            let spacing = match self.fringe_spacings[i] {
                Some(v) => format!("{v}"),
                None => String::new(),
            };
            s.push_str(&format!(
                "{},{},{}\n",
                self.divisors[i], spacing, self.classical_distance[i]
            ));
        }
        s
    }
}

/// Detector-plane density of the axial (k₀x = 0) stream, normalized on the
/// grid.
pub fn single_k_profile(
    grid: Grid1D,
    config: &ExperimentConfig,
) -> Result<DensityProfile, ApertureError> {
    let t1 = slit_arrival_time(0.0, 0.0, config)?;
    let t2 = detector_arrival_time(0.0, 0.0, config)?;
    let xs: Vec<f64> = grid.points().collect();
    let values: Result<Vec<f64>, ApertureError> = xs
        .par_iter()
        .map(|&x| Ok(psi_after_slits(x, t2, 0.0, t1, config)?.interference()))
        .collect();
    let meta = ProfileMeta {
        mode: ProfileMode::Interference,
        t: t2,
        delta_z: config.slits.l2,
        k0z: 0.0,
        z0: 0.0,
        n_quad_slit: config.slits.n_quad_slit,
        n_quad_k: 1,
    };
    Ok(DensityProfile::from_raw(grid, values?, meta))
}

/// Classical detector image of the axial stream: source Gaussian restricted
/// to the slit openings, normalized on the grid.
///
/// Values are cell averages of the truncated Gaussian, so the two lobes keep
/// their mass even on grids coarser than the slit width.
pub fn classical_density_k0(grid: Grid1D, config: &ExperimentConfig) -> DensityProfile {
    let s0 = config.source.sigma0;
    let h = grid.spacing();
    let cdf = |x: f64| 0.5 * (1.0 + libm::erf(x / (s0 * std::f64::consts::SQRT_2)));
    let slits = [config.slits.slit_a(), config.slits.slit_b()];
    let values: Vec<f64> = grid
        .points()
        .map(|x| {
            let (c_lo, c_hi) = (x - 0.5 * h, x + 0.5 * h);
            let mut mass = 0.0;
            for (lo, hi) in slits {
                let a = c_lo.max(lo);
                let b = c_hi.min(hi);
                if b > a {
                    mass += cdf(b) - cdf(a);
                }
            }
            mass / h
        })
        .collect();
    let meta = ProfileMeta {
        mode: ProfileMode::Classical,
        t: 0.0,
        delta_z: config.slits.l2,
        k0z: 0.0,
        z0: 0.0,
        n_quad_slit: 0,
        n_quad_k: 0,
    };
    DensityProfile::from_raw(grid, values, meta)
}

/// Config rescaled to ħ/η with the slit discretization grown ∝ √η, per the
/// oscillation budget of the scaled chirp.
pub fn scaled_config(eta: f64, config: &ExperimentConfig) -> Result<ExperimentConfig, ScalingError> {
    let mut scaled = config.with_h_divisor(eta)?;
    scaled.slits.n_quad_slit =
        next_odd((config.slits.n_quad_slit as f64 * eta.sqrt()).ceil() as usize);
    Ok(scaled)
}

/// Detector-plane density with the Planck constant divided by `eta`.
pub fn scaled_density(
    eta: f64,
    grid: Grid1D,
    config: &ExperimentConfig,
) -> Result<DensityProfile, ScalingError> {
    if !(eta >= 1.0) {
        return Err(ScalingError::BadDivisors(vec![eta]));
    }
    Ok(single_k_profile(grid, &scaled_config(eta, config)?)?)
}

/// Grid for one rung of the ladder: the interference envelope shrinks ∝ 1/η
/// toward the slit geometry, and the point count keeps the scaled fringe
/// pitch resolved (five points per fringe, capped at 24001).
pub fn scaled_grid(eta: f64, base: Grid1D, config: &ExperimentConfig) -> Grid1D {
    let aperture = config.slits.aperture_half_extent();
    let base_half = 0.5 * (base.max - base.min);
    let half = aperture + (base_half - aperture) / eta + 2.0 * DETECTOR_RESOLUTION;
    let t1 = slit_arrival_time(0.0, 0.0, config).expect("valid geometry");
    let t2 = detector_arrival_time(0.0, 0.0, config).expect("valid geometry");
    let pitch = 2.0 * std::f64::consts::PI * config.constants.hbar_eff() * (t2 - t1)
        / (config.constants.mass * config.slits.separation * eta);
    let n = ((2.0 * half / (pitch / 5.0)).ceil() as usize).clamp(base.n_points, 24001);
    Grid1D::symmetric(half, n).expect("valid grid")
}

/// 90th percentile of |x(t₂) − x_classical(t₂)| over an axial-stream
/// ensemble released inside the slits.
pub fn trajectory_collapse_p90(
    eta: f64,
    n: usize,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<f64, ScalingError> {
    let scaled = scaled_config(eta, config)?;
    let opts = TrajectoryOptions { spin: true, record_times: Vec::new() };
    // draw transverse positions until n of them pass the slits; the axial
    // stream has no velocity, so the classical impact is the start position
    let mut ics = Vec::with_capacity(n);
    let mut stream = 0u64;
    while ics.len() < n {
        let mut rng = CounterRng::new(seed, stream);
        stream += 1;
        let ic = InitialConditions {
            position: [
                rng.normal_scaled(0.0, scaled.source.sigma0),
                rng.normal_scaled(0.0, scaled.source.sigma0),
                0.0,
            ],
            wave_vector: [0.0; 3],
        };
        if passes_slit(&ic, &scaled) != SlitLabel::Blocked {
            ics.push(ic);
        }
    }
    let diffs: Result<Vec<f64>, BohmError> = ics
        .par_iter()
        .map(|ic| {
            let out = integrate_trajectory_scaled(ic, &scaled, &opts)?;
            Ok((out - ic.position[0]).abs())
        })
        .collect();
    let mut diffs = diffs?;
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(diffs[(0.9 * (diffs.len() - 1) as f64).round() as usize])
}

fn integrate_trajectory_scaled(
    ic: &InitialConditions,
    scaled: &ExperimentConfig,
    opts: &TrajectoryOptions,
) -> Result<f64, BohmError> {
    crate::bohm::integrate_trajectory_with(ic, scaled, opts).map(|o| o.impact.x)
}

/// Run the ladder: per divisor, a scaled density on its own grid, its fringe
/// pitch where resolvable, and the smoothed L1 distance to the classical
/// baseline.
pub fn scaling_report(
    divisors: &[f64],
    base_grid: Grid1D,
    config: &ExperimentConfig,
) -> Result<ScalingReport, ScalingError> {
    let ascending = divisors.windows(2).all(|w| w[0] < w[1]);
    if divisors.is_empty() || divisors[0] != 1.0 || !ascending {
        return Err(ScalingError::BadDivisors(divisors.to_vec()));
    }
    let mut fringe_spacings = Vec::with_capacity(divisors.len());
    let mut classical_distance = Vec::with_capacity(divisors.len());
    for &eta in divisors {
        let grid = scaled_grid(eta, base_grid, config);
        let profile = scaled_density(eta, grid, config)?;
        fringe_spacings.push(match fringe_metrics(&profile) {
            Ok(m) => Some(m.spacing),
            Err(DetectorError::InsufficientStructure { .. }) => None,
            Err(e) => return Err(e.into()),
        });
        classical_distance.push(classical_l1_distance(&profile, config)?);
    }
    Ok(ScalingReport { divisors: divisors.to_vec(), fringe_spacings, classical_distance })
}

/// Smoothed L1 distance between a profile and the classical baseline on the
/// profile's own grid. Both sides are detector-resolution boxcar averages
/// renormalized to probability densities, so the metric compares envelopes
/// rather than sub-resolution fringes.
pub fn classical_l1_distance(
    profile: &DensityProfile,
    config: &ExperimentConfig,
) -> Result<f64, ScalingError> {
    let classical = classical_density_k0(profile.grid, config);
    let sq = detector_smooth(profile, DETECTOR_RESOLUTION)?;
    let sc = detector_smooth(&classical, DETECTOR_RESOLUTION)?;
    let renorm = |p: &DensityProfile| -> Vec<f64> {
        let mass = trapezoid(&p.grid, &p.values);
        p.values.iter().map(|v| v / mass).collect()
    };
    let a = renorm(&sq);
    let b = renorm(&sc);
    let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
    Ok(trapezoid(&profile.grid, &diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_shimizu_config;

    #[test]
    fn unit_divisor_reproduces_baseline_bit_for_bit() {
        let cfg = default_shimizu_config();
        let grid = Grid1D::symmetric(1.5e-3, 301).unwrap();
        let scaled = scaled_density(1.0, grid, &cfg).unwrap();
        let mut base_cfg = cfg;
        base_cfg.slits.n_quad_slit = next_odd(cfg.slits.n_quad_slit);
        let direct = single_k_profile(grid, &base_cfg).unwrap();
        assert_eq!(scaled.values, direct.values);
    }

    #[test]
    fn divisor_validation() {
        let cfg = default_shimizu_config();
        let grid = Grid1D::symmetric(1e-3, 101).unwrap();
        assert!(matches!(
            scaling_report(&[5.0, 10.0], grid, &cfg),
            Err(ScalingError::BadDivisors(_))
        ));
        assert!(matches!(
            scaling_report(&[1.0, 1.0], grid, &cfg),
            Err(ScalingError::BadDivisors(_))
        ));
        assert!(scaled_density(0.5, grid, &cfg).is_err());
    }

    #[test]
    fn fringes_shrink_inversely_with_divisor() {
        let cfg = default_shimizu_config();
        let base = Grid1D::symmetric(2.4e-3, 961).unwrap();
        for eta in [1.0, 5.0] {
            let grid = scaled_grid(eta, base, &cfg);
            let prof = scaled_density(eta, grid, &cfg).unwrap();
            let m = fringe_metrics(&prof).unwrap();
            let t1 = slit_arrival_time(0.0, 0.0, &cfg).unwrap();
            let t2 = detector_arrival_time(0.0, 0.0, &cfg).unwrap();
            let theory = 2.0 * std::f64::consts::PI * cfg.constants.hbar_eff() * (t2 - t1)
                / (cfg.constants.mass * cfg.slits.separation * eta);
            assert!(
                (m.spacing / theory - 1.0).abs() < 0.08,
                "eta {eta}: spacing {} vs {theory}",
                m.spacing
            );
        }
    }

    #[test]
    fn classical_baseline_is_two_truncated_lobes() {
        let cfg = default_shimizu_config();
        let grid = Grid1D::symmetric(8e-6, 801).unwrap();
        let p = classical_density_k0(grid, &cfg);
        let at = |x: f64| p.values[((x - grid.min) / grid.spacing()).round() as usize];
        assert_eq!(at(0.0), 0.0);
        assert_eq!(at(-5e-6), 0.0);
        assert!(at(-3e-6) > 0.0 && at(3e-6) > 0.0);
        assert!((p.mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distance_to_classical_decreases_along_short_ladder() {
        let cfg = default_shimizu_config();
        let base = Grid1D::symmetric(2.4e-3, 961).unwrap();
        let report = scaling_report(&[1.0, 10.0, 100.0], base, &cfg).unwrap();
        assert!(report.classical_distance[0] > report.classical_distance[1]);
        assert!(report.classical_distance[1] > report.classical_distance[2]);
        // spacing * eta constant while resolvable
        let s0 = report.fringe_spacings[0].unwrap();
        let s1 = report.fringe_spacings[1].unwrap();
        assert!((s1 * 10.0 / s0 - 1.0).abs() < 0.15, "{s0} vs {}", s1 * 10.0);
    }

    #[test]
    fn report_serializes_with_absent_fringes() {
        let r = ScalingReport {
            divisors: vec![1.0, 1000.0],
            fringe_spacings: vec![Some(2.4e-4), None],
            classical_distance: vec![1.5, 0.01],
        };
        let csv = r.to_csv();
        assert!(csv.starts_with("eta,fringe_spacing_m,classical_l1\n"));
        assert!(csv.contains("\n1000,,0.01\n"));
    }

    #[test]
    fn trajectories_collapse_toward_classical() {
        let cfg = default_shimizu_config();
        let p1 = trajectory_collapse_p90(1.0, 12, 5, &cfg).unwrap();
        let p100 = trajectory_collapse_p90(100.0, 12, 5, &cfg).unwrap();
        assert!(
            p100 < p1,
            "p90 did not shrink: eta 1 gives {p1}, eta 100 gives {p100}"
        );
    }
}
