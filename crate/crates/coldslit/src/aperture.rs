//! After-slit wavefunction and densities by quadrature of the kernel over the
//! two slit openings.
//!
//! Everything under the integral has the form exp(Q u² + L u) with complex Q
//! and L, so composite Simpson on uniform nodes can walk the integrand with
//! two complex multiplies per node instead of a complex exponential. An
//! oscillation guard counts kernel-chirp periods across each slit and refines
//! the node count before the rule is applied; refinements are recorded so a
//! run manifest can report the effective quadrature sizes.

use crate::model::{ExperimentConfig, Grid1D, SlitLabel};
use crate::quad::{gauss_legendre, next_odd, Rule};
use crate::wavepacket::{slit_arrival_time, SpreadState};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApertureError {
    #[error("after-slit field needs t > t1 (got t = {t}, t1 = {t1})")]
    BeforeSlit { t: f64, t1: f64 },
    #[error("oscillation guard would need {needed} nodes per slit (cap {cap})")]
    GuardCap { needed: usize, cap: usize },
    #[error("{0}")]
    Model(#[from] crate::model::ConfigError),
}

/// Nodes-per-chirp-period floor demanded by the oscillation guard.
pub const GUARD_NODES_PER_PERIOD: f64 = 8.0;
/// Nodes per period actually used when refining: Simpson error per period
/// scales as (2π/n)⁴, so 24 keeps the slit integral near 1e-5 relative.
pub const REFINE_NODES_PER_PERIOD: f64 = 24.0;
/// Hard cap on nodes per slit.
pub const MAX_SLIT_NODES: usize = 4_000_001;

/// Accuracy target of a slit quadrature.
///
/// Trajectory integration tolerates coarser velocities than the density
/// pipeline tolerates amplitudes: a relative velocity error ε during the
/// 10 μs edge-wave phase displaces an atom by ~ε·10⁻⁶ m, so the velocity
/// budget drops to the guard floor there and 16 nodes per period later,
/// while profiles always resolve to 24.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadBudget {
    Profile,
    Velocity,
}

impl QuadBudget {
    fn nodes_per_period(self, dt: f64) -> f64 {
        match self {
            QuadBudget::Profile => REFINE_NODES_PER_PERIOD,
            QuadBudget::Velocity => {
                if dt < 1e-5 {
                    GUARD_NODES_PER_PERIOD
                } else {
                    16.0
                }
            }
        }
    }
}

/// Largest per-slit node count any quadrature in this process has used, for
/// run manifests. Monotone; reset only by `reset_refinement_high_water`.
static REFINEMENT_HIGH_WATER: AtomicUsize = AtomicUsize::new(0);

pub fn refinement_high_water() -> usize {
    REFINEMENT_HIGH_WATER.load(Ordering::Relaxed)
}

pub fn reset_refinement_high_water() {
    REFINEMENT_HIGH_WATER.store(0, Ordering::Relaxed);
}

fn record_refinement(n: usize) {
    REFINEMENT_HIGH_WATER.fetch_max(n, Ordering::Relaxed);
}

/// The two slit contributions to the after-slit wavefunction.
#[derive(Debug, Clone, Copy)]
pub struct SlitAmplitudes {
    pub psi_a: Complex64,
    pub psi_b: Complex64,
}

impl SlitAmplitudes {
    /// Physical amplitude ψ_A + ψ_B.
    #[inline]
    pub fn total(&self) -> Complex64 {
        self.psi_a + self.psi_b
    }

    /// Interference density |ψ_A + ψ_B|².
    #[inline]
    pub fn interference(&self) -> f64 {
        self.total().norm_sqr()
    }

    /// Incoherent sum |ψ_A|² + |ψ_B|².
    #[inline]
    pub fn diffraction_sum(&self) -> f64 {
        self.psi_a.norm_sqr() + self.psi_b.norm_sqr()
    }
}

/// How a density profile was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileMode {
    Interference,
    DiffractionSum,
    Classical,
}

impl std::fmt::Display for ProfileMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProfileMode::Interference => write!(f, "interference"),
            ProfileMode::DiffractionSum => write!(f, "diffraction-sum"),
            ProfileMode::Classical => write!(f, "classical"),
        }
    }
}

/// Context a profile carries into its CSV header.
#[derive(Debug, Clone, Copy)]
pub struct ProfileMeta {
    pub mode: ProfileMode,
    pub t: f64,
    pub delta_z: f64,
    pub k0z: f64,
    pub z0: f64,
    pub n_quad_slit: usize,
    pub n_quad_k: usize,
}

/// Sampled 1-D probability density with its grid.
///
/// Values are non-negative and the trapezoid integral over the grid is
/// normalized to one whenever the raw mass is positive.
#[derive(Debug, Clone)]
pub struct DensityProfile {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub meta: ProfileMeta,
}

impl DensityProfile {
    pub fn from_raw(grid: Grid1D, mut values: Vec<f64>, meta: ProfileMeta) -> Self {
        let mass = trapezoid(&grid, &values);
        if mass > 0.0 {
            for v in &mut values {
                *v /= mass;
            }
        }
        Self { grid, values, meta }
    }

    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }
}

pub fn trapezoid(grid: &Grid1D, values: &[f64]) -> f64 {
    let h = grid.spacing();
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[values.len() - 1]))
}

/// Complex quadratic-exponent coefficients of the slit integrand at (x, t):
/// kernel(x,t;u,t₁) · ψ_x(u,t₁;k₀x) = const(x,t) · exp(Q u² + L u).
#[derive(Debug, Clone, Copy)]
pub struct SlitIntegrand {
    pub q: Complex64,
    pub l: Complex64,
    /// m / ħ(t − t₁), the chirp scale entering the prefactor.
    pub chirp: f64,
    pub dt: f64,
}

impl SlitIntegrand {
    pub fn new(x: f64, t: f64, t1: f64, k0x: f64, config: &ExperimentConfig) -> Self {
        let m = config.constants.mass;
        let hbar = config.constants.hbar_eff();
        let dt = t - t1;
        let chirp = m / (hbar * dt);
        // packet factor at the slit plane: -(u - c)^2 / (4 sigma0 s0(t1)) + i k0x (u - c/2)
        let spread = SpreadState::at(t1, config);
        let a_pkt = (4.0 * config.source.sigma0 * spread.s0).inv();
        let c = hbar * k0x / m * t1;
        let q = -a_pkt + Complex64::new(0.0, 0.5 * chirp);
        let l = 2.0 * a_pkt * c + Complex64::new(0.0, k0x - chirp * x);
        Self { q, l, chirp, dt }
    }

    /// Largest |dφ/du| over the interval endpoints.
    fn max_phase_slope(&self, lo: f64, hi: f64) -> f64 {
        let s_lo = 2.0 * self.q.im * lo + self.l.im;
        let s_hi = 2.0 * self.q.im * hi + self.l.im;
        s_lo.abs().max(s_hi.abs())
    }

    /// Chirp periods across one slit of width `w` whose farthest endpoint sits
    /// at the given bounds.
    fn periods(&self, lo: f64, hi: f64) -> f64 {
        self.max_phase_slope(lo, hi) * (hi - lo) / (2.0 * PI)
    }
}

/// Node count for one slit after the oscillation guard, from a requested
/// baseline `n_request`.
///
/// The refinement target (≥ the 8-per-period guard floor) keeps the
/// composite-Simpson error bounded at chirp-dominated depths, so doubling
/// the requested count never moves a converged density.
fn guarded_nodes(
    integrand: &SlitIntegrand,
    lo: f64,
    hi: f64,
    n_request: usize,
    budget: QuadBudget,
) -> Result<usize, ApertureError> {
    let periods = integrand.periods(lo, hi);
    let accuracy =
        (budget.nodes_per_period(integrand.dt) * periods).ceil() as usize + 33;
    debug_assert!(accuracy as f64 >= GUARD_NODES_PER_PERIOD * periods);
    let n = next_odd(n_request.max(accuracy));
    if n > MAX_SLIT_NODES {
        return Err(ApertureError::GuardCap { needed: n, cap: MAX_SLIT_NODES });
    }
    record_refinement(n);
    Ok(n)
}

/// Moments of exp(Q u² + L u) over one interval by composite Simpson.
///
/// Walks the integrand with first/second-difference recurrences of the
/// quadratic exponent; returns (J₀, J₁, ∫‖f‖ du) where ‖f‖ is the 1-norm
/// |Re f| + |Im f| — an upper envelope within √2 of |f|, cheap enough to
/// accumulate per node and sufficient for node-proximity floors.
pub fn interval_moments(
    q: Complex64,
    l: Complex64,
    lo: f64,
    hi: f64,
    n: usize,
) -> (Complex64, Complex64, f64) {
    debug_assert!(n >= 3 && n % 2 == 1);
    let h = (hi - lo) / (n - 1) as f64;
    // f(u_{j+1}) = f(u_j) * r_j,  r_{j+1} = r_j * s
    let mut f = (q * lo * lo + l * lo).exp();
    let mut r = (q * (2.0 * lo * h + h * h) + l * h).exp();
    let s = (2.0 * q * h * h).exp();
    let mut j0 = Complex64::default();
    let mut j1 = Complex64::default();
    let mut jabs = 0.0;
    let mut u = lo;
    for j in 0..n {
        let w = if j == 0 || j == n - 1 {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        j0 += f * w;
        j1 += f * (w * u);
        jabs += (f.re.abs() + f.im.abs()) * w;
        if j + 1 < n {
            f *= r;
            r *= s;
            u = lo + h * (j + 1) as f64;
        }
    }
    let scale = h / 3.0;
    (j0 * scale, j1 * scale, jabs * scale)
}

/// Zeroth and first moments of the slit integrand over both slits, plus the
/// total absolute mass ∫|f| (the node-proximity reference).
pub struct SlitMoments {
    pub j0: Complex64,
    pub j1: Complex64,
    pub abs_mass: f64,
    pub integrand: SlitIntegrand,
}

pub fn slit_moments(
    x: f64,
    t: f64,
    t1: f64,
    k0x: f64,
    config: &ExperimentConfig,
) -> Result<SlitMoments, ApertureError> {
    slit_moments_budgeted(x, t, t1, k0x, config, QuadBudget::Profile, None)
}

/// Moments under an explicit accuracy budget, optionally restricted to one
/// slit.
///
/// Under the velocity budget at small t − t₁, a slit with no stationary
/// phase point whose boundary-dominated contribution is provably below 10⁻³
/// of the stationary slit is skipped: its chirp count is enormous exactly
/// when its physical weight vanishes.
pub fn slit_moments_budgeted(
    x: f64,
    t: f64,
    t1: f64,
    k0x: f64,
    config: &ExperimentConfig,
    budget: QuadBudget,
    only: Option<SlitLabel>,
) -> Result<SlitMoments, ApertureError> {
    if !(t > t1) {
        return Err(ApertureError::BeforeSlit { t, t1 });
    }
    let integrand = SlitIntegrand::new(x, t, t1, k0x, config);
    let slits =
        [(SlitLabel::A, config.slits.slit_a()), (SlitLabel::B, config.slits.slit_b())];

    // magnitude of the u-envelope exp(alpha u^2 + Re(L) u) over an interval
    let log_env = |u: f64| integrand.q.re * u * u + integrand.l.re * u;
    let max_env = |lo: f64, hi: f64| {
        let vertex = -integrand.l.re / (2.0 * integrand.q.re);
        let mut m = log_env(lo).max(log_env(hi));
        if vertex > lo && vertex < hi {
            m = m.max(log_env(vertex));
        }
        m.exp()
    };
    let phase_slope = |u: f64| 2.0 * integrand.q.im * u + integrand.l.im;

    let mut drop: Option<SlitLabel> = None;
    if budget == QuadBudget::Velocity && only.is_none() && integrand.dt < 1e-5 {
        // find the slit holding the stationary point, if any
        let u_star = -integrand.l.im / (2.0 * integrand.q.im);
        let stationary =
            slits.iter().find(|(_, (lo, hi))| u_star >= *lo && u_star <= *hi).map(|s| s.0);
        if let Some(near) = stationary {
            let (_, (nlo, nhi)) = slits.iter().find(|(l, _)| *l == near).unwrap();
            let (far, (flo, fhi)) = slits.iter().find(|(l, _)| *l != near).unwrap();
            let s_lo = phase_slope(*flo);
            let s_hi = phase_slope(*fhi);
            if s_lo * s_hi > 0.0 {
                let kappa_min = s_lo.abs().min(s_hi.abs());
                let bound_far = 4.0 * max_env(*flo, *fhi) / kappa_min;
                let est_near = max_env(*nlo, *nhi)
                    * (nhi - nlo).min((std::f64::consts::PI / integrand.q.im.abs()).sqrt());
                if bound_far < 1e-3 * est_near {
                    drop = Some(*far);
                }
            }
        }
    }

    let mut j0 = Complex64::default();
    let mut j1 = Complex64::default();
    let mut abs_mass = 0.0;
    // the configured per-slit node count is the density discretization; pure
    // velocity evaluations take whatever the accuracy target demands
    let n_request = match budget {
        QuadBudget::Profile => config.slits.n_quad_slit,
        QuadBudget::Velocity => 3,
    };
    for (label, (lo, hi)) in slits {
        if let Some(keep) = only {
            if keep != label {
                continue;
            }
        }
        if drop == Some(label) {
            continue;
        }
        let n = guarded_nodes(&integrand, lo, hi, n_request, budget)?;
        let (a, b, c) = interval_moments(integrand.q, integrand.l, lo, hi, n);
        j0 += a;
        j1 += b;
        abs_mass += c;
    }
    Ok(SlitMoments { j0, j1, abs_mass, integrand })
}

/// After-slit amplitudes ψ_A, ψ_B at (x, t) for one incoming k₀x.
pub fn psi_after_slits(
    x: f64,
    t: f64,
    k0x: f64,
    t1: f64,
    config: &ExperimentConfig,
) -> Result<SlitAmplitudes, ApertureError> {
    if !(t > t1) {
        return Err(ApertureError::BeforeSlit { t, t1 });
    }
    let integrand = SlitIntegrand::new(x, t, t1, k0x, config);
    let pref = full_prefactor(x, t1, k0x, &integrand, config);
    let mut amps = [Complex64::default(); 2];
    for (i, (lo, hi)) in [config.slits.slit_a(), config.slits.slit_b()].into_iter().enumerate() {
        let n = guarded_nodes(&integrand, lo, hi, config.slits.n_quad_slit, QuadBudget::Profile)?;
        let (j0, _, _) = interval_moments(integrand.q, integrand.l, lo, hi, n);
        amps[i] = pref * j0;
    }
    Ok(SlitAmplitudes { psi_a: amps[0], psi_b: amps[1] })
}

/// Full constant factor of kernel × packet left out of exp(Qu² + Lu):
/// √(m/2πħΔt)·e^{−iπ/4}·e^{imx²/2ħΔt} · (2πs₀²(t₁))^{−1/4} · e^{−c²/4σ₀s₀ − ik₀x c/2}.
fn full_prefactor(
    x: f64,
    t1: f64,
    k0x: f64,
    integrand: &SlitIntegrand,
    config: &ExperimentConfig,
) -> Complex64 {
    let spread = SpreadState::at(t1, config);
    let m = config.constants.mass;
    let hbar = config.constants.hbar_eff();
    let c = hbar * k0x / m * t1;
    let kernel_part = Complex64::from_polar(
        (integrand.chirp / (2.0 * PI)).sqrt(),
        0.5 * integrand.chirp * x * x - PI / 4.0,
    );
    let cc = Complex64::new(c, 0.0);
    let packet_part = (2.0 * PI * spread.s0 * spread.s0).powf(-0.25)
        * (-cc * cc / (4.0 * config.source.sigma0 * spread.s0)
            - Complex64::new(0.0, 0.5 * k0x * c))
        .exp();
    kernel_part * packet_part
}

/// Bounds of the k₀x band admitted by the slits: beyond
/// |k| = m(x̄ + 4σ₀(t₁))/(ħ t₁) the packet misses both openings and its
/// transmitted amplitude is below e⁻⁸ of the peak.
pub fn k_band_cut(config: &ExperimentConfig) -> f64 {
    let t1 = slit_arrival_time(0.0, 0.0, config).expect("valid geometry");
    let spread = SpreadState::at(t1, config);
    let xbar = config.slits.aperture_half_extent();
    config.constants.mass * (xbar + 4.0 * spread.sigma0_t)
        / (config.constants.hbar_eff() * t1)
}

/// Quadrature for the k₀x average: Gauss–Legendre nodes over the admitted
/// band, weighted by the N(0, τ) density and normalized to a probability
/// measure.
pub fn k_average_rule(config: &ExperimentConfig) -> Rule {
    let kcut = k_band_cut(config);
    let tau = config.source.sigma_k;
    let base = gauss_legendre(config.slits.n_quad_k);
    let nodes: Vec<f64> = base.nodes.iter().map(|&x| kcut * x).collect();
    let mut weights: Vec<f64> = base
        .nodes
        .iter()
        .zip(&base.weights)
        .map(|(&x, &w)| {
            let k = kcut * x;
            w * (-k * k / (2.0 * tau * tau)).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Rule { nodes, weights }
}

/// Probability density after the slits at (x, t), averaged over the admitted
/// k₀x band with Gaussian weights (the (z₀, k₀z) pair fixes t₁).
pub fn rho_after(
    x: f64,
    t: f64,
    k0z: f64,
    z0: f64,
    config: &ExperimentConfig,
) -> Result<f64, ApertureError> {
    let v0z = config.constants.hbar_eff() * k0z / config.constants.mass;
    let t1 = slit_arrival_time(z0, v0z, config)?;
    let rule = k_average_rule(config);
    rho_after_with_rule(x, t, t1, &rule, ProfileMode::Interference, config)
}

/// k-averaged density with a caller-supplied rule (callers batching a grid
/// build the rule once).
pub fn rho_after_with_rule(
    x: f64,
    t: f64,
    t1: f64,
    rule: &Rule,
    mode: ProfileMode,
    config: &ExperimentConfig,
) -> Result<f64, ApertureError> {
    let mut total = 0.0;
    for (&k, &w) in rule.nodes.iter().zip(&rule.weights) {
        let amps = psi_after_slits(x, t, k, t1, config)?;
        let v = match mode {
            ProfileMode::Interference => amps.interference(),
            ProfileMode::DiffractionSum => amps.diffraction_sum(),
            ProfileMode::Classical => unreachable!("classical densities have no amplitudes"),
        };
        total += w * v;
    }
    Ok(total)
}

/// Time at which the packet center sits `delta_z` below the slits, per
/// Δz = ½g(t² − t₁²) with z₀ = 0, v₀z = 0.
pub fn time_at_depth(delta_z: f64, config: &ExperimentConfig) -> Result<f64, ApertureError> {
    if !(delta_z > 0.0) {
        return Err(ApertureError::Model(crate::model::ConfigError::Invalid(format!(
            "delta_z must be positive, got {delta_z}"
        ))));
    }
    let t1 = slit_arrival_time(0.0, 0.0, config)?;
    Ok((t1 * t1 + 2.0 * delta_z / config.constants.g).sqrt())
}

/// Density profile on `grid` at depth `delta_z` below the slits.
pub fn density_profile(
    grid: Grid1D,
    delta_z: f64,
    k0z: f64,
    z0: f64,
    mode: ProfileMode,
    config: &ExperimentConfig,
) -> Result<DensityProfile, ApertureError> {
    use rayon::prelude::*;
    let t = time_at_depth(delta_z, config)?;
    let v0z = config.constants.hbar_eff() * k0z / config.constants.mass;
    let t1 = slit_arrival_time(z0, v0z, config)?;
    let rule = k_average_rule(config);
    let xs: Vec<f64> = grid.points().collect();
    let values: Result<Vec<f64>, ApertureError> = xs
        .par_iter()
        .map(|&x| rho_after_with_rule(x, t, t1, &rule, mode, config))
        .collect();
    let meta = ProfileMeta {
        mode,
        t,
        delta_z,
        k0z,
        z0,
        n_quad_slit: config.slits.n_quad_slit,
        n_quad_k: config.slits.n_quad_k,
    };
    Ok(DensityProfile::from_raw(grid, values?, meta))
}

/// Both interference and diffraction-sum profiles from one quadrature sweep.
pub fn density_profile_pair(
    grid: Grid1D,
    delta_z: f64,
    k0z: f64,
    z0: f64,
    config: &ExperimentConfig,
) -> Result<(DensityProfile, DensityProfile), ApertureError> {
    use rayon::prelude::*;
    let t = time_at_depth(delta_z, config)?;
    let v0z = config.constants.hbar_eff() * k0z / config.constants.mass;
    let t1 = slit_arrival_time(z0, v0z, config)?;
    let rule = k_average_rule(config);
    let xs: Vec<f64> = grid.points().collect();
    let pairs: Result<Vec<(f64, f64)>, ApertureError> = xs
        .par_iter()
        .map(|&x| {
            let mut interference = 0.0;
            let mut sum = 0.0;
            for (&k, &w) in rule.nodes.iter().zip(&rule.weights) {
                let amps = psi_after_slits(x, t, k, t1, config)?;
                interference += w * amps.interference();
                sum += w * amps.diffraction_sum();
            }
            Ok((interference, sum))
        })
        .collect();
    let pairs = pairs?;
    let meta = |mode| ProfileMeta {
        mode,
        t,
        delta_z,
        k0z,
        z0,
        n_quad_slit: config.slits.n_quad_slit,
        n_quad_k: config.slits.n_quad_k,
    };
    let interference = DensityProfile::from_raw(
        grid,
        pairs.iter().map(|p| p.0).collect(),
        meta(ProfileMode::Interference),
    );
    let sum = DensityProfile::from_raw(
        grid,
        pairs.iter().map(|p| p.1).collect(),
        meta(ProfileMode::DiffractionSum),
    );
    Ok((interference, sum))
}

/// L1 distance between the normalized interference and diffraction-sum
/// profiles on `grid`; 0 for identical shapes, at most 2.
pub fn coherence_gap(
    grid: Grid1D,
    delta_z: f64,
    config: &ExperimentConfig,
) -> Result<f64, ApertureError> {
    let (interference, sum) = density_profile_pair(grid, delta_z, 0.0, 0.0, config)?;
    Ok(profile_l1(&interference, &sum))
}

/// L1 distance between two profiles sharing a grid.
pub fn profile_l1(a: &DensityProfile, b: &DensityProfile) -> f64 {
    assert_eq!(a.grid, b.grid, "profiles must share a grid");
    let diff: Vec<f64> =
        a.values.iter().zip(&b.values).map(|(&p, &q)| (p - q).abs()).collect();
    trapezoid(&a.grid, &diff)
}

/// Natural grid half-width for a depth: slit span plus three single-slit
/// diffraction lobes.
pub fn envelope_half_width(delta_z: f64, config: &ExperimentConfig) -> f64 {
    let t1 = slit_arrival_time(0.0, 0.0, config).expect("valid geometry");
    let t = (t1 * t1 + 2.0 * delta_z / config.constants.g).sqrt();
    let lobe = 2.0 * PI * config.constants.hbar_eff() * (t - t1)
        / (config.constants.mass * config.slits.width);
    config.slits.aperture_half_extent() + 3.0 * lobe + config.slits.width
}
