//! Physical constants, experiment geometry and source statistics.
//!
//! Everything downstream (kernels, quadratures, trajectories) reads from one
//! immutable [`ExperimentConfig`]. All quantities are SI; there are no unit
//! conversions anywhere in the numerics.

use thiserror::Error;

/// Reduced Planck constant (J·s), CODATA 2018.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant (J·s), exact by SI definition.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant (J/K), exact by SI definition.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Mass of a neon atom (kg).
pub const NEON_MASS: f64 = 3.349e-26;
/// Trap temperature of the cold-atom source (K).
pub const TRAP_TEMPERATURE: f64 = 2.5e-3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value for {key}: {value:?}")]
    InvalidValue { line: usize, key: String, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Fundamental constants scoped to one run.
///
/// `h_divisor` is the dimensionless η ≥ 1 of the classical-limit study: the
/// effective Planck constant for a run is ħ/η. The limit η = ∞ is a separate
/// flag, never a stored infinity, and code paths that would divide by the
/// effective ħ must check [`PhysicalConstants::is_classical`] first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub h_divisor: f64,
    pub mass: f64,
    pub g: f64,
    pub boltzmann: f64,
    classical: bool,
}

impl PhysicalConstants {
    pub fn new(hbar: f64, h_divisor: f64, mass: f64, g: f64) -> Result<Self, ConfigError> {
        if !(hbar > 0.0) || !(mass > 0.0) || !(g > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "hbar, mass, g must be positive (got {hbar}, {mass}, {g})"
            )));
        }
        if !(h_divisor >= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "hbar_divisor must be >= 1 (got {h_divisor})"
            )));
        }
        Ok(Self { hbar, h_divisor, mass, g, boltzmann: BOLTZMANN, classical: false })
    }

    /// Constants for the ħ → 0 limit: ballistic mechanics only.
    pub fn classical(mass: f64, g: f64) -> Self {
        Self { hbar: HBAR, h_divisor: 1.0, mass, g, boltzmann: BOLTZMANN, classical: true }
    }

    /// Effective ħ after scaling, ħ/η.
    #[inline]
    pub fn hbar_eff(&self) -> f64 {
        debug_assert!(!self.classical, "hbar_eff is undefined in classical mode");
        self.hbar / self.h_divisor
    }

    /// Effective h after scaling, 2πħ/η.
    #[inline]
    pub fn h_eff(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.hbar_eff()
    }

    #[inline]
    pub fn is_classical(&self) -> bool {
        self.classical
    }
}

/// Gaussian statistics of the atom cloud released from the trap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceModel {
    /// Transverse position spread σ₀ = σ_x = σ_y (m).
    pub sigma0: f64,
    /// Vertical position spread σ_z (m).
    pub sigma_z: f64,
    /// Per-axis wave-number spread τ = σ_k (1/m).
    pub sigma_k: f64,
    /// Total velocity spread σ_v = √(k_B T / m) (m/s); per-axis spread is σ_v/√3.
    pub sigma_v: f64,
}

impl SourceModel {
    /// Build the source from a trap temperature; σ_k = m σ_v / (√3 ħ_eff).
    pub fn from_temperature(
        temperature: f64,
        sigma0: f64,
        sigma_z: f64,
        constants: &PhysicalConstants,
    ) -> Result<Self, ConfigError> {
        if !(temperature > 0.0) {
            return Err(ConfigError::Invalid(format!("temperature must be positive, got {temperature}")));
        }
        let sigma_v = (constants.boltzmann * temperature / constants.mass).sqrt();
        let sigma_k = if constants.is_classical() {
            f64::NAN // never sampled; classical mode draws velocities directly
        } else {
            constants.mass * sigma_v / (3.0_f64.sqrt() * constants.hbar_eff())
        };
        let s = Self { sigma0, sigma_z, sigma_k, sigma_v };
        s.validate(constants)?;
        Ok(s)
    }

    fn validate(&self, constants: &PhysicalConstants) -> Result<(), ConfigError> {
        if !(self.sigma0 > 0.0) || !(self.sigma_z > 0.0) || !(self.sigma_v > 0.0) {
            return Err(ConfigError::Invalid("source spreads must be strictly positive".into()));
        }
        if !constants.is_classical() && !(self.sigma_k > 0.0) {
            return Err(ConfigError::Invalid("sigma_k must be strictly positive".into()));
        }
        Ok(())
    }

    /// Per-axis velocity spread σ_v/√3 (m/s); equals ħ_eff σ_k / m in quantum mode.
    #[inline]
    pub fn sigma_v_axis(&self) -> f64 {
        self.sigma_v / 3.0_f64.sqrt()
    }
}

/// Double-slit geometry and the two quadrature sizes of the density pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlitGeometry {
    /// Full slit width b (m); each slit spans ±b/2 around its center.
    pub width: f64,
    /// Center-to-center separation d (m).
    pub separation: f64,
    /// Source-to-slit drop l₁ (m).
    pub l1: f64,
    /// Slit-to-detector drop l₂ (m).
    pub l2: f64,
    /// Quadrature nodes per slit for the aperture integral.
    pub n_quad_slit: usize,
    /// Quadrature nodes for the k₀x average.
    pub n_quad_k: usize,
}

impl SlitGeometry {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.width > 0.0) || !(self.separation > self.width) {
            return Err(ConfigError::Invalid(format!(
                "need separation > width > 0 (got width {}, separation {})",
                self.width, self.separation
            )));
        }
        if !(self.l1 > 0.0) || !(self.l2 > 0.0) {
            return Err(ConfigError::Invalid("l1 and l2 must be positive".into()));
        }
        if self.n_quad_slit < 3 || self.n_quad_k < 2 {
            return Err(ConfigError::Invalid("quadrature sizes too small".into()));
        }
        Ok(())
    }

    /// Center of slit A, −d/2.
    #[inline]
    pub fn center_a(&self) -> f64 {
        -0.5 * self.separation
    }

    /// Center of slit B, +d/2.
    #[inline]
    pub fn center_b(&self) -> f64 {
        0.5 * self.separation
    }

    /// Open interval occupied by slit A.
    #[inline]
    pub fn slit_a(&self) -> (f64, f64) {
        (self.center_a() - 0.5 * self.width, self.center_a() + 0.5 * self.width)
    }

    /// Open interval occupied by slit B.
    #[inline]
    pub fn slit_b(&self) -> (f64, f64) {
        (self.center_b() - 0.5 * self.width, self.center_b() + 0.5 * self.width)
    }

    /// Half-extent of the open aperture region, (d+b)/2.
    #[inline]
    pub fn aperture_half_extent(&self) -> f64 {
        0.5 * (self.separation + self.width)
    }

    /// Which slit, if any, contains the transverse position `x`.
    pub fn classify(&self, x: f64) -> SlitLabel {
        let (a_lo, a_hi) = self.slit_a();
        let (b_lo, b_hi) = self.slit_b();
        if x > a_lo && x < a_hi {
            SlitLabel::A
        } else if x > b_lo && x < b_hi {
            SlitLabel::B
        } else {
            SlitLabel::Blocked
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlitLabel {
    A,
    B,
    Blocked,
}

impl std::fmt::Display for SlitLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SlitLabel::A => write!(f, "A"),
            SlitLabel::B => write!(f, "B"),
            SlitLabel::Blocked => write!(f, "blocked"),
        }
    }
}

/// Frozen initial state of one atom: position and wave vector at release.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialConditions {
    pub position: [f64; 3],
    pub wave_vector: [f64; 3],
}

impl InitialConditions {
    /// Initial velocity ħ_eff k / m.
    #[inline]
    pub fn velocity(&self, constants: &PhysicalConstants) -> [f64; 3] {
        let s = constants.hbar_eff() / constants.mass;
        [self.wave_vector[0] * s, self.wave_vector[1] * s, self.wave_vector[2] * s]
    }
}

/// Uniform 1-D sample grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub min: f64,
    pub max: f64,
    pub n_points: usize,
}

impl Grid1D {
    pub fn new(min: f64, max: f64, n_points: usize) -> Result<Self, ConfigError> {
        if !(min < max) {
            return Err(ConfigError::Invalid(format!("grid needs min < max (got {min}, {max})")));
        }
        if n_points < 2 {
            return Err(ConfigError::Invalid("grid needs at least 2 points".into()));
        }
        Ok(Self { min, max, n_points })
    }

    /// Symmetric grid on [−half, half].
    pub fn symmetric(half: f64, n_points: usize) -> Result<Self, ConfigError> {
        Self::new(-half, half, n_points)
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.n_points - 1) as f64
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        self.min + self.spacing() * i as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.point(i))
    }
}

/// Step-control parameters of the after-slit trajectory integrator.
///
/// These are code-level knobs with physical defaults; the on-disk config file
/// schema is fixed and does not carry them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorParams {
    /// Smallest admitted step (s).
    pub dt_min: f64,
    /// Largest admitted step (s).
    pub dt_max: f64,
    /// Velocity increment per step (m/s): dt = step_constant / |dv/dt|.
    pub step_constant: f64,
    /// Duration after t₁ over which the slit-truncated field is approximated
    /// by the free-packet phase gradient (edge waves have not yet reached the
    /// slit interior).
    pub frozen_bridge: f64,
    /// Relative density (|H|/∫|f|)² below which a point counts as node-adjacent.
    pub density_floor: f64,
}

impl Default for IntegratorParams {
    fn default() -> Self {
        Self {
            dt_min: 1e-8,
            dt_max: 1e-4,
            step_constant: 6e-4,
            frozen_bridge: 4e-7,
            density_floor: 1e-12,
        }
    }
}

/// Full description of one simulated run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub constants: PhysicalConstants,
    pub source: SourceModel,
    pub slits: SlitGeometry,
    pub seed: u64,
    pub integrator: IntegratorParams,
}

const CONFIG_KEYS: [&str; 13] = [
    "mass_kg",
    "g_ms2",
    "hbar_divisor",
    "sigma0_m",
    "sigmaz_m",
    "sigmak_per_m",
    "slit_width_m",
    "slit_separation_m",
    "l1_m",
    "l2_m",
    "n_quad_slit",
    "n_quad_k",
    "seed",
];

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.slits.validate()?;
        self.source.validate(&self.constants)?;
        let (_, a_hi) = self.slits.slit_a();
        let (b_lo, _) = self.slits.slit_b();
        if !(a_hi <= b_lo) {
            return Err(ConfigError::Invalid("slit intervals overlap".into()));
        }
        Ok(())
    }

    /// Rescaled copy with the Planck constant divided by `eta`.
    ///
    /// σ_k is recomputed from σ_v so the sampled velocity distribution is
    /// invariant under the scaling.
    pub fn with_h_divisor(&self, eta: f64) -> Result<Self, ConfigError> {
        let mut c = *self;
        c.constants = PhysicalConstants::new(self.constants.hbar, eta, self.constants.mass, self.constants.g)?;
        c.source.sigma_k =
            c.constants.mass * c.source.sigma_v / (3.0_f64.sqrt() * c.constants.hbar_eff());
        Ok(c)
    }

    /// Copy flagged for ħ = 0 ballistic mechanics.
    pub fn into_classical(&self) -> Self {
        let mut c = *self;
        c.constants = PhysicalConstants::classical(self.constants.mass, self.constants.g);
        c
    }

    /// Serialize to the plain-text `key = value` format, all 13 keys.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("mass_kg = {}\n", self.constants.mass));
        s.push_str(&format!("g_ms2 = {}\n", self.constants.g));
        s.push_str(&format!("hbar_divisor = {}\n", self.constants.h_divisor));
        s.push_str(&format!("sigma0_m = {}\n", self.source.sigma0));
        s.push_str(&format!("sigmaz_m = {}\n", self.source.sigma_z));
        s.push_str(&format!("sigmak_per_m = {}\n", self.source.sigma_k));
        s.push_str(&format!("slit_width_m = {}\n", self.slits.width));
        s.push_str(&format!("slit_separation_m = {}\n", self.slits.separation));
        s.push_str(&format!("l1_m = {}\n", self.slits.l1));
        s.push_str(&format!("l2_m = {}\n", self.slits.l2));
        s.push_str(&format!("n_quad_slit = {}\n", self.slits.n_quad_slit));
        s.push_str(&format!("n_quad_k = {}\n", self.slits.n_quad_k));
        s.push_str(&format!("seed = {}\n", self.seed));
        s
    }

    /// Parse the plain-text config format. Unknown keys are a hard error;
    /// keys not present keep their default value.
    pub fn from_config_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = default_shimizu_config();
        let mut seen: Vec<String> = Vec::new();
        let mut sigma_k_set = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !CONFIG_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line: line_no, key: key.to_string() });
            }
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey { line: line_no, key: key.to_string() });
            }
            seen.push(key.to_string());
            let bad = |k: &str, v: &str| ConfigError::InvalidValue {
                line: line_no,
                key: k.to_string(),
                value: v.to_string(),
            };
            let fval = || value.parse::<f64>().map_err(|_| bad(key, value));
            match key {
                "mass_kg" => cfg.constants.mass = fval()?,
                "g_ms2" => cfg.constants.g = fval()?,
                "hbar_divisor" => cfg.constants.h_divisor = fval()?,
                "sigma0_m" => cfg.source.sigma0 = fval()?,
                "sigmaz_m" => cfg.source.sigma_z = fval()?,
                "sigmak_per_m" => {
                    cfg.source.sigma_k = fval()?;
                    sigma_k_set = true;
                }
                "slit_width_m" => cfg.slits.width = fval()?,
                "slit_separation_m" => cfg.slits.separation = fval()?,
                "l1_m" => cfg.slits.l1 = fval()?,
                "l2_m" => cfg.slits.l2 = fval()?,
                "n_quad_slit" => {
                    cfg.slits.n_quad_slit = value.parse::<usize>().map_err(|_| bad(key, value))?
                }
                "n_quad_k" => {
                    cfg.slits.n_quad_k = value.parse::<usize>().map_err(|_| bad(key, value))?
                }
                "seed" => cfg.seed = value.parse::<u64>().map_err(|_| bad(key, value))?,
                _ => unreachable!(),
            }
        }
        cfg.constants =
            PhysicalConstants::new(cfg.constants.hbar, cfg.constants.h_divisor, cfg.constants.mass, cfg.constants.g)?;
        // A file that sets mass or divisor without sigma_k keeps the velocity
        // spread consistent with the stated temperature.
        if !sigma_k_set {
            cfg.source.sigma_k = cfg.constants.mass * cfg.source.sigma_v
                / (3.0_f64.sqrt() * cfg.constants.hbar_eff());
        }
        cfg.source.sigma_v =
            cfg.source.sigma_k * 3.0_f64.sqrt() * cfg.constants.hbar_eff() / cfg.constants.mass;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_config_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_config_text(&std::fs::read_to_string(path)?)
    }
}

/// Parameters of the 1992 laser-cooled-neon run: m = 3.349×10⁻²⁶ kg,
/// σ₀ = 10 μm, σ_z = 0.3 mm, b = 2 μm, d = 6 μm, l₁ = 76 mm, l₂ = 113 mm,
/// slit discretized into 200 nodes, k₀x average into 20 nodes.
///
/// g = 9.81 m/s² reproduces the 124 ms free fall to the slits.
pub fn default_shimizu_config() -> ExperimentConfig {
    let constants = PhysicalConstants::new(HBAR, 1.0, NEON_MASS, 9.81).expect("valid defaults");
    let source = SourceModel::from_temperature(TRAP_TEMPERATURE, 1e-5, 3e-4, &constants)
        .expect("valid defaults");
    let slits = SlitGeometry {
        width: 2e-6,
        separation: 6e-6,
        l1: 0.076,
        l2: 0.113,
        n_quad_slit: 200,
        n_quad_k: 20,
    };
    ExperimentConfig { constants, source, slits, seed: 42, integrator: IntegratorParams::default() }
}

/// de Broglie wavelength h_eff / (m v).
pub fn de_broglie_wavelength(speed: f64, constants: &PhysicalConstants) -> Result<f64, ConfigError> {
    if !(speed > 0.0) {
        return Err(ConfigError::Invalid(format!("speed must be positive, got {speed}")));
    }
    Ok(constants.h_eff() / (constants.mass * speed))
}
