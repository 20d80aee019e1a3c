//! Guided trajectories in the velocity-field picture: every atom has a
//! definite position transported by
//!
//!   v = ∇S/m + (∇log ρ × s)/m
//!       = (ħ/mρ) [Im(ψ*∇ψ) + Re(ψ*∇ψ) × ŝ],     s = (0, 0, ħ/2),
//!
//! so an ensemble distributed as |ψ|² at release stays distributed as |ψ|²
//! all the way to the detector. Above the slits the field has a closed form;
//! below them the transverse velocity reduces to moment ratios of the same
//! slit integrand the density pipeline uses, and positions are advanced by
//! adaptive classic Runge–Kutta.

use crate::aperture::{slit_moments_budgeted, ApertureError, QuadBudget, SlitMoments};
use crate::model::{ExperimentConfig, InitialConditions, PhysicalConstants, SlitLabel};
use crate::rng::CounterRng;
use crate::wavepacket::{classical_z_time, detector_arrival_time, slit_arrival_time, SpreadState};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BohmError {
    #[error("density {rho} below node floor {floor}")]
    NodeProximity { rho: f64, floor: f64 },
    #[error("trajectory flagged: step shrank to {dt} s at t = {t} s without escaping a node")]
    FlaggedTrajectory { t: f64, dt: f64 },
    #[error("initial condition is blocked by the slit plate")]
    Blocked,
    #[error(transparent)]
    Aperture(#[from] ApertureError),
    #[error(transparent)]
    Model(#[from] crate::model::ConfigError),
}

/// Fixed vertical spin of the trapped atoms, s = (0, 0, ħ_eff/2).
#[derive(Debug, Clone, Copy)]
pub struct SpinVector {
    pub s: [f64; 3],
}

impl SpinVector {
    pub fn vertical(constants: &PhysicalConstants) -> Self {
        Self { s: [0.0, 0.0, 0.5 * constants.hbar_eff()] }
    }

    pub fn magnitude(&self) -> f64 {
        (self.s[0] * self.s[0] + self.s[1] * self.s[1] + self.s[2] * self.s[2]).sqrt()
    }

    /// Unit vector ŝ.
    pub fn direction(&self) -> [f64; 3] {
        let m = self.magnitude();
        [self.s[0] / m, self.s[1] / m, self.s[2] / m]
    }
}

/// Wavefunction value and gradient at one point.
#[derive(Debug, Clone, Copy)]
pub struct PsiSample {
    pub value: Complex64,
    pub grad: [Complex64; 3],
}

/// Guiding velocity from a wavefunction sample.
pub fn bohm_velocity(
    psi: &PsiSample,
    spin: &SpinVector,
    density_floor: f64,
    constants: &PhysicalConstants,
) -> Result<[f64; 3], BohmError> {
    let rho = psi.value.norm_sqr();
    if rho <= density_floor {
        return Err(BohmError::NodeProximity { rho, floor: density_floor });
    }
    let conj = psi.value.conj();
    let mut im = [0.0; 3];
    let mut re = [0.0; 3];
    for i in 0..3 {
        let d = conj * psi.grad[i];
        im[i] = d.im;
        re[i] = d.re;
    }
    let s_hat = spin.direction();
    let cross = [
        re[1] * s_hat[2] - re[2] * s_hat[1],
        re[2] * s_hat[0] - re[0] * s_hat[2],
        re[0] * s_hat[1] - re[1] * s_hat[0],
    ];
    let scale = constants.hbar_eff() / (constants.mass * rho);
    Ok([scale * (im[0] + cross[0]), scale * (im[1] + cross[1]), scale * (im[2] + cross[2])])
}

/// One sample of a path.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryState {
    pub position: [f64; 3],
    pub t: f64,
    pub initial: InitialConditions,
}

/// Arrival of one atom on the detection plane.
#[derive(Debug, Clone, Copy)]
pub struct ImpactRecord {
    pub x: f64,
    pub y: f64,
    pub t_arrival: f64,
    pub slit: SlitLabel,
}

/// Closed-form path above the slits.
///
/// The spin term turns the radial spreading of the packet into a rotation
/// about the vertical axis: in the transverse plane the deviation from the
/// drift is r·(σ₀(t)/σ₀)·(cos φ(t), sin φ(t)) with
/// φ(t) = φ₀ + arctan(ħt/2mσ₀²), a quarter turn as t → ∞, the sense fixed by
/// the ∇log ρ × s cross product with s = +ẑ ħ/2.
pub fn trajectory_before(
    ic: &InitialConditions,
    t: f64,
    config: &ExperimentConfig,
) -> TrajectoryState {
    debug_assert!(t >= 0.0);
    let [x0, y0, z0] = ic.position;
    let [v0x, v0y, v0z] = ic.velocity(&config.constants);
    let hbar = config.constants.hbar_eff();
    let m = config.constants.mass;
    let s0 = config.source.sigma0;
    let theta = hbar * t / (2.0 * m * s0 * s0);
    let growth = (1.0 + theta * theta).sqrt();
    let r = (x0 * x0 + y0 * y0).sqrt();
    let (x, y) = if r > 0.0 {
        let phi = y0.atan2(x0) + theta.atan();
        (v0x * t + r * growth * phi.cos(), v0y * t + r * growth * phi.sin())
    } else {
        (v0x * t, v0y * t)
    };
    let spread = SpreadState::at(t, config);
    let z = v0z * t
        + 0.5 * config.constants.g * t * t
        + z0 * spread.sigma_z_t / config.source.sigma_z;
    TrajectoryState { position: [x, y, z], t, initial: *ic }
}

/// Transverse velocity threshold (x̄ + 2σ₀(t₁))/t₁ of the geometric filter.
pub fn velocity_filter_threshold(config: &ExperimentConfig) -> f64 {
    let t1 = slit_arrival_time(0.0, 0.0, config).expect("valid geometry");
    let spread = SpreadState::at(t1, config);
    (config.slits.aperture_half_extent() + 2.0 * spread.sigma0_t) / t1
}

/// The necessary slit-crossing condition on the initial data:
/// |v₀x| ≤ (x̄ + 2σ₀(t₁))/t₁ and |y₀| ≤ 2σ₀.
pub fn passes_velocity_filter(ic: &InitialConditions, config: &ExperimentConfig) -> bool {
    let v0x = ic.velocity(&config.constants)[0];
    v0x.abs() <= velocity_filter_threshold(config)
        && ic.position[1].abs() <= 2.0 * config.source.sigma0
}

/// Exact geometric filter: transport the atom to the slit plane and classify
/// its position there.
pub fn passes_slit(ic: &InitialConditions, config: &ExperimentConfig) -> SlitLabel {
    let v0z = ic.velocity(&config.constants)[2];
    let t1 = match slit_arrival_time(ic.position[2], v0z, config) {
        Ok(t) => t,
        Err(_) => return SlitLabel::Blocked, // released below the plate
    };
    let state = trajectory_before(ic, t1, config);
    config.slits.classify(state.position[0])
}

/// After-slit transverse velocity for the symmetric k₀x = 0 stream:
/// v_x(x, t) = [x − Re(J₁/J₀)] / (t − t₁), the moment-ratio form of the
/// boundary-integral expression built from H and C over both slits.
pub fn velocity_after_x(
    x: f64,
    t: f64,
    t1: f64,
    config: &ExperimentConfig,
) -> Result<f64, BohmError> {
    after_slit_velocity_x(x, t, t1, 0.0, config).map(|v| v.v_x)
}

/// Transverse velocity and log-density gradient below the slits.
pub struct AfterSlitVelocity {
    pub v_x: f64,
    /// ∂ₓ log ρₓ, feeding the spin term of v_y.
    pub dlog_rho_dx: f64,
    /// |J₀| / ∫|f|, a scale-free fringe-depth measure in [0, 1].
    pub relative_amplitude: f64,
}

pub fn after_slit_velocity_x(
    x: f64,
    t: f64,
    t1: f64,
    k0x: f64,
    config: &ExperimentConfig,
) -> Result<AfterSlitVelocity, BohmError> {
    let m: SlitMoments =
        slit_moments_budgeted(x, t, t1, k0x, config, QuadBudget::Velocity, None)?;
    let floor = config.integrator.density_floor.sqrt();
    let rel = m.j0.norm() / m.abs_mass;
    if !(rel > floor) {
        return Err(BohmError::NodeProximity { rho: rel * rel, floor: floor * floor });
    }
    let ratio = m.j1 / m.j0;
    let dt = m.integrand.dt;
    Ok(AfterSlitVelocity {
        v_x: (x - ratio.re) / dt,
        dlog_rho_dx: 2.0 * m.integrand.chirp * ratio.im,
        relative_amplitude: rel,
    })
}

/// Options of the trajectory integrator.
#[derive(Debug, Clone)]
pub struct TrajectoryOptions {
    /// Include the spin term of the velocity law.
    pub spin: bool,
    /// Times at which to record states (ascending). Empty for impact-only
    /// runs.
    pub record_times: Vec<f64>,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { spin: true, record_times: Vec::new() }
    }
}

impl TrajectoryOptions {
    /// Recording schedule resolving both the fall and the first millimeters
    /// below the slits: uniform above, log-spaced below.
    pub fn with_standard_recording(config: &ExperimentConfig) -> Self {
        let t1 = slit_arrival_time(0.0, 0.0, config).expect("valid geometry");
        let t2 = detector_arrival_time(0.0, 0.0, config).expect("valid geometry");
        let mut times = Vec::new();
        let n_before = 40;
        for i in 0..n_before {
            times.push(t1 * i as f64 / n_before as f64);
        }
        let n_after = 220;
        let lo: f64 = 1e-6;
        let hi = (t2 - t1) * 1.05;
        for i in 0..=n_after {
            let f = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / n_after as f64).exp();
            times.push(t1 + f);
        }
        Self { spin: true, record_times: times }
    }
}

/// Everything one integrated atom produces.
#[derive(Debug, Clone)]
pub struct TrajectoryOutcome {
    pub states: Vec<TrajectoryState>,
    pub impact: ImpactRecord,
}

struct TransverseField<'a> {
    config: &'a ExperimentConfig,
    t1: f64,
    k0x: f64,
    spin: bool,
    v0x: f64,
    v0y: f64,
}

impl TransverseField<'_> {
    /// (vx, vy) below the slit plane; within the bridge after t₁ the
    /// slit-truncated field is approximated by the untruncated packet's
    /// phase gradient (edge waves have not yet reached the interior).
    fn velocity(&self, x: f64, y: f64, t: f64) -> Result<[f64; 2], BohmError> {
        let cfg = self.config;
        let hbar = cfg.constants.hbar_eff();
        let m = cfg.constants.mass;
        let s0 = cfg.source.sigma0;
        let spread = SpreadState::at(t, cfg);
        let sig_t_sq = spread.sigma0_t * spread.sigma0_t;
        // free-packet drift shared by both regimes (y is never constrained)
        let drift_y =
            self.v0y + (y - self.v0y * t) * hbar * hbar * t / (4.0 * m * m * s0 * s0 * sig_t_sq);
        let dlog_rho_dy = -(y - self.v0y * t) / sig_t_sq;

        if t - self.t1 <= cfg.integrator.frozen_bridge {
            let drift_x = self.v0x
                + (x - self.v0x * t) * hbar * hbar * t / (4.0 * m * m * s0 * s0 * sig_t_sq);
            let dlog_rho_dx = -(x - self.v0x * t) / sig_t_sq;
            let (sx, sy) = if self.spin {
                (0.5 * hbar / m * dlog_rho_dy, -0.5 * hbar / m * dlog_rho_dx)
            } else {
                (0.0, 0.0)
            };
            Ok([drift_x + sx, drift_y + sy])
        } else {
            let after = after_slit_velocity_x(x, t, self.t1, self.k0x, cfg)?;
            let (sx, sy) = if self.spin {
                (0.5 * hbar / m * dlog_rho_dy, -0.5 * hbar / m * after.dlog_rho_dx)
            } else {
                (0.0, 0.0)
            };
            Ok([after.v_x + sx, drift_y + sy])
        }
    }
}

/// Integrate one atom from release to the detection plane.
///
/// Above the slits the closed form is exact. Below them (x, y) advance by
/// classic fourth-order Runge–Kutta with Δt = clamp(c/|dv/dt|, dt_min, dt_max),
/// the vertical coordinate stays classical, and node-proximity events halve
/// the step down to 1e-10 s before flagging the trajectory.
pub fn integrate_trajectory(
    ic: &InitialConditions,
    config: &ExperimentConfig,
) -> Result<TrajectoryOutcome, BohmError> {
    integrate_trajectory_with(ic, config, &TrajectoryOptions::default())
}

pub fn integrate_trajectory_with(
    ic: &InitialConditions,
    config: &ExperimentConfig,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryOutcome, BohmError> {
    let slit = passes_slit(ic, config);
    if slit == SlitLabel::Blocked {
        return Err(BohmError::Blocked);
    }
    let p = config.integrator;
    let v = ic.velocity(&config.constants);
    let t1 = slit_arrival_time(ic.position[2], v[2], config)?;
    let t_end =
        classical_z_time(ic.position[2], v[2], config.slits.l1 + config.slits.l2, config)?;

    let mut states = Vec::with_capacity(opts.record_times.len());
    let mut record_iter = opts.record_times.iter().copied().peekable();
    while let Some(&rt) = record_iter.peek() {
        if rt > t1 {
            break;
        }
        record_iter.next();
        states.push(trajectory_before(ic, rt, config));
    }

    let field = TransverseField {
        config,
        t1,
        k0x: ic.wave_vector[0],
        spin: opts.spin,
        v0x: v[0],
        v0y: v[1],
    };

    let start = trajectory_before(ic, t1, config);
    let mut x = start.position[0];
    let mut y = start.position[1];
    let mut t = t1;
    let mut dt = p.dt_min;
    let z_at = |t: f64| {
        let spread = SpreadState::at(t, config);
        v[2] * t
            + 0.5 * config.constants.g * t * t
            + ic.position[2] * spread.sigma_z_t / config.source.sigma_z
    };

    while t < t_end {
        let dt_use = dt.min(t_end - t);
        let step = (|| -> Result<(f64, f64, f64), BohmError> {
            let k1 = field.velocity(x, y, t)?;
            let k2 = field.velocity(
                x + 0.5 * dt_use * k1[0],
                y + 0.5 * dt_use * k1[1],
                t + 0.5 * dt_use,
            )?;
            let k3 = field.velocity(
                x + 0.5 * dt_use * k2[0],
                y + 0.5 * dt_use * k2[1],
                t + 0.5 * dt_use,
            )?;
            let k4 = field.velocity(x + dt_use * k3[0], y + dt_use * k3[1], t + dt_use)?;
            let nx = x + dt_use / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            let ny = y + dt_use / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            let accel = ((k4[0] - k1[0]).powi(2) + (k4[1] - k1[1]).powi(2)).sqrt() / dt_use;
            Ok((nx, ny, accel))
        })();
        match step {
            Ok((nx, ny, accel)) => {
                x = nx;
                y = ny;
                t += dt_use;
                while let Some(&rt) = record_iter.peek() {
                    if rt > t {
                        break;
                    }
                    record_iter.next();
                    states.push(TrajectoryState { position: [x, y, z_at(t)], t, initial: *ic });
                }
                let target = if accel > 0.0 { p.step_constant / accel } else { p.dt_max };
                dt = target.clamp(p.dt_min, p.dt_max).min(2.0 * dt);
            }
            Err(BohmError::NodeProximity { .. }) => {
                dt *= 0.5;
                if dt < 1e-10 {
                    return Err(BohmError::FlaggedTrajectory { t, dt });
                }
            }
            Err(e) => return Err(e),
        }
    }

    let impact = ImpactRecord { x, y, t_arrival: t_end, slit };
    states.push(TrajectoryState {
        position: [x, y, config.slits.l1 + config.slits.l2],
        t: t_end,
        initial: *ic,
    });
    Ok(TrajectoryOutcome { states, impact })
}

/// Ballistic flight with gravity: the ħ = 0 baseline. The atom is absorbed at
/// the slit plate unless it crosses an opening, and flies straight below.
pub fn classical_trajectory(
    ic: &InitialConditions,
    config: &ExperimentConfig,
) -> (Vec<TrajectoryState>, Option<ImpactRecord>) {
    let v = ic.velocity(&config.constants);
    let [x0, y0, z0] = ic.position;
    let at = |t: f64| {
        [x0 + v[0] * t, y0 + v[1] * t, z0 + v[2] * t + 0.5 * config.constants.g * t * t]
    };
    let t1 = match classical_z_time(z0, v[2], config.slits.l1, config) {
        Ok(t) => t,
        Err(_) => return (Vec::new(), None),
    };
    let mut states: Vec<TrajectoryState> = (0..=20)
        .map(|i| {
            let t = t1 * i as f64 / 20.0;
            TrajectoryState { position: at(t), t, initial: *ic }
        })
        .collect();
    let slit = config.slits.classify(at(t1)[0]);
    if slit == SlitLabel::Blocked {
        return (states, None);
    }
    let t2 = classical_z_time(z0, v[2], config.slits.l1 + config.slits.l2, config)
        .expect("below-slit fall is well defined");
    for i in 1..=20 {
        let t = t1 + (t2 - t1) * i as f64 / 20.0;
        states.push(TrajectoryState { position: at(t), t, initial: *ic });
    }
    let p = at(t2);
    (states, Some(ImpactRecord { x: p[0], y: p[1], t_arrival: t2, slit }))
}

/// Draw `n` initial conditions: positions ~ N(0, (σ₀, σ₀, σ_z)), wave vectors
/// ~ N(0, σ_k per axis). Atom `i` always consumes stream `i` of `seed`, so
/// the ensemble is identical however it is later partitioned.
pub fn sample_source(n: usize, seed: u64, config: &ExperimentConfig) -> Vec<InitialConditions> {
    (0..n).map(|i| sample_one(seed, i as u64, config)).collect()
}

/// The `stream`-th atom of the ensemble addressed by `seed`.
pub fn sample_one(seed: u64, stream: u64, config: &ExperimentConfig) -> InitialConditions {
    assert!(
        !config.constants.is_classical(),
        "classical runs sample the quantum source and integrate ballistically"
    );
    let mut rng = CounterRng::new(seed, stream);
    let s = &config.source;
    InitialConditions {
        position: [
            rng.normal_scaled(0.0, s.sigma0),
            rng.normal_scaled(0.0, s.sigma0),
            rng.normal_scaled(0.0, s.sigma_z),
        ],
        wave_vector: [
            rng.normal_scaled(0.0, s.sigma_k),
            rng.normal_scaled(0.0, s.sigma_k),
            rng.normal_scaled(0.0, s.sigma_k),
        ],
    }
}

/// Ensemble result of an impact run.
#[derive(Debug, Clone)]
pub struct ImpactSummary {
    pub impacts: Vec<ImpactRecord>,
    /// Source atoms examined, including blocked ones.
    pub attempts: u64,
    /// Trajectories abandoned at a node after exhausting step halving.
    pub flagged: u64,
}

/// Simulate `n` detector impacts by rejection sampling of the source
/// conditioned on slit passage.
///
/// Candidates are scanned in blocks: the cheap geometric filter runs in
/// stream order, passing atoms integrate in parallel, and results are
/// appended in stream order, so the output is independent of thread count.
pub fn simulate_impacts(
    n: usize,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<ImpactSummary, BohmError> {
    simulate_impacts_filtered(n, seed, config, |_| true)
}

/// Impact run keeping only impacts that satisfy `keep` (e.g. a detector time
/// window); `n` counts kept impacts.
pub fn simulate_impacts_filtered(
    n: usize,
    seed: u64,
    config: &ExperimentConfig,
    keep: impl Fn(&ImpactRecord) -> bool + Sync,
) -> Result<ImpactSummary, BohmError> {
    const BLOCK: u64 = 1 << 17;
    let opts = TrajectoryOptions { spin: true, record_times: Vec::new() };
    let mut impacts = Vec::with_capacity(n);
    let mut attempts = 0u64;
    let mut flagged = 0u64;
    let mut block_start = 0u64;
    while impacts.len() < n {
        let passing: Vec<InitialConditions> = (block_start..block_start + BLOCK)
            .map(|i| sample_one(seed, i, config))
            .filter(|ic| passes_slit(ic, config) != SlitLabel::Blocked)
            .collect();
        attempts += BLOCK;
        let results: Vec<Result<TrajectoryOutcome, BohmError>> = passing
            .par_iter()
            .map(|ic| integrate_trajectory_with(ic, config, &opts))
            .collect();
        for r in results {
            match r {
                Ok(out) => {
                    if keep(&out.impact) {
                        impacts.push(out.impact);
                        if impacts.len() == n {
                            break;
                        }
                    }
                }
                Err(BohmError::FlaggedTrajectory { .. }) => flagged += 1,
                Err(e) => return Err(e),
            }
        }
        block_start += BLOCK;
    }
    Ok(ImpactSummary { impacts, attempts, flagged })
}
