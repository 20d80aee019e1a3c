//! Batch scenario runner: each scenario reproduces one stage of the
//! experiment end-to-end and writes CSV artifacts plus a manifest that pins
//! everything needed to reproduce the run byte-for-byte.

use crate::aperture::{
    self, density_profile_pair, envelope_half_width, profile_l1, DensityProfile, ProfileMode,
};
use crate::bohm::{
    classical_trajectory, integrate_trajectory_with, passes_slit, sample_one, simulate_impacts,
    ImpactRecord, TrajectoryOptions, TrajectoryOutcome,
};
use crate::csvio::{
    impacts_csv, keyed_text, matrix_csv, profile_csv, sha256_hex, trajectories_csv, Provenance,
};
use crate::detector::{
    detector_smooth, fringe_metrics, metrics_to_text, rho_time_window_profile, DetectorError,
    TimeWindow, DEFAULT_WINDOW_QUAD, DETECTOR_RESOLUTION,
};
use crate::model::{ExperimentConfig, Grid1D, InitialConditions, SlitLabel};
use crate::rng::CounterRng;
use crate::scaling::{classical_density_k0, scaled_config, scaled_grid, scaling_report, single_k_profile};
use crate::wavepacket::{detector_arrival_time, rho_transverse_before, slit_arrival_time, SpreadState};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(#[from] crate::model::ConfigError),
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("numeric guard: {0}")]
    Aperture(#[from] crate::aperture::ApertureError),
    #[error("numeric guard: {0}")]
    Detector(DetectorError),
    #[error("numeric guard: {0}")]
    Bohm(#[from] crate::bohm::BohmError),
    #[error("numeric guard: {0}")]
    Scaling(#[from] crate::scaling::ScalingError),
    #[error("statistical budget: {flagged} of {total} trajectories flagged (limit {limit})")]
    FlaggedBudget { flagged: u64, total: u64, limit: u64 },
    #[error("insufficient fringe structure: {0}")]
    Structure(DetectorError),
}

impl From<DetectorError> for RunError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::InsufficientStructure { .. } => RunError::Structure(e),
            other => RunError::Detector(other),
        }
    }
}

impl RunError {
    /// Process exit code: 2 config, 3 numeric guard, 4 statistical budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io { .. } => 2,
            RunError::Aperture(_)
            | RunError::Detector(_)
            | RunError::Bohm(_)
            | RunError::Scaling(_)
            | RunError::Structure(_) => 3,
            RunError::FlaggedBudget { .. } => 4,
        }
    }
}

/// The scenario catalog; each entry reproduces one published view of the
/// experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Transverse density evolution from release to the slit plane.
    BeforeDensity,
    /// Interference vs diffraction-sum profiles at six depths, plus gaps.
    Onset,
    /// Density maps from source to detector and zooms below the slits.
    EvolutionMap,
    /// Raw, time-windowed and resolution-smoothed detector profiles.
    Detector,
    /// Guided-path bundles through the slits.
    Trajectories,
    /// Individual arrival events on the detection plane.
    Impacts,
    /// The ħ/η classical-limit ladder.
    Scaling,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::BeforeDensity => "before-density",
            Scenario::Onset => "onset",
            Scenario::EvolutionMap => "evolution-map",
            Scenario::Detector => "detector",
            Scenario::Trajectories => "trajectories",
            Scenario::Impacts => "impacts",
            Scenario::Scaling => "scaling",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "before-density" => Scenario::BeforeDensity,
            "onset" => Scenario::Onset,
            "evolution-map" => Scenario::EvolutionMap,
            "detector" => Scenario::Detector,
            "trajectories" => Scenario::Trajectories,
            "impacts" => Scenario::Impacts,
            "scaling" => Scenario::Scaling,
            _ => return None,
        })
    }
}

/// Scenario-specific knobs from the command line.
#[derive(Debug, Clone)]
pub struct RunParams {
    /// Overrides the config-file seed when set.
    pub seed: Option<u64>,
    /// Ensemble size for trajectories/impacts.
    pub n: Option<usize>,
    /// Divisor ladder for the scaling scenario.
    pub eta: Vec<f64>,
    /// Ballistic dynamics instead of guided paths.
    pub classical: bool,
}

impl Default for RunParams {
    fn default() -> Self {
        Self { seed: None, n: None, eta: vec![1.0, 5.0, 10.0, 100.0, 1000.0], classical: false }
    }
}

/// Everything needed to reproduce a run, plus checksums of what it wrote.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub scenario: String,
    pub version: String,
    pub seed: u64,
    pub config_text: String,
    pub config_sha256: String,
    pub max_slit_nodes_used: usize,
    /// (sha256, relative file name), sorted by name.
    pub outputs: Vec<(String, String)>,
    /// Scenario-dependent counters (attempts, flagged, ...).
    pub notes: Vec<(String, String)>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# run manifest\n");
        s.push_str(&format!("scenario = {}\n", self.scenario));
        s.push_str(&format!("version = {}\n", self.version));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("config_sha256 = {}\n", self.config_sha256));
        s.push_str(&format!("max_slit_nodes_used = {}\n", self.max_slit_nodes_used));
        for (k, v) in &self.notes {
            s.push_str(&format!("{k} = {v}\n"));
        }
        for line in self.config_text.lines() {
            s.push_str(&format!("config.{line}\n"));
        }
        for (sha, name) in &self.outputs {
            s.push_str(&format!("output = {sha}  {name}\n"));
        }
        s
    }
}

struct Emitter {
    out_dir: PathBuf,
    prov: Provenance,
    outputs: Vec<(String, String)>,
}

impl Emitter {
    fn write(&mut self, name: &str, body: &str) -> Result<(), RunError> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, body).map_err(|source| RunError::Io { path, source })?;
        self.outputs.push((sha256_hex(body.as_bytes()), name.to_string()));
        Ok(())
    }
}

/// Execute a scenario and write its artifacts into `out_dir`.
pub fn run(
    scenario: Scenario,
    config: &ExperimentConfig,
    params: &RunParams,
    out_dir: &Path,
) -> Result<RunManifest, RunError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|source| RunError::Io { path: out_dir.to_path_buf(), source })?;
    let mut config = *config;
    if let Some(seed) = params.seed {
        config.seed = seed;
    }
    config.validate()?;
    aperture::reset_refinement_high_water();

    let config_text = config.to_config_text();
    let config_sha256 = sha256_hex(config_text.as_bytes());
    let mut em = Emitter {
        out_dir: out_dir.to_path_buf(),
        prov: Provenance { scenario: scenario.name().into(), config_sha256: config_sha256.clone() },
        outputs: Vec::new(),
    };
    let mut notes: Vec<(String, String)> = Vec::new();

    match scenario {
        Scenario::BeforeDensity => run_before_density(&config, &mut em)?,
        Scenario::Onset => run_onset(&config, &mut em)?,
        Scenario::EvolutionMap => run_evolution_map(&config, &mut em)?,
        Scenario::Detector => run_detector(&config, &mut em)?,
        Scenario::Trajectories => run_trajectories(&config, params, &mut em, &mut notes)?,
        Scenario::Impacts => run_impacts(&config, params, &mut em, &mut notes)?,
        Scenario::Scaling => run_scaling(&config, params, &mut em, &mut notes)?,
    }

    let mut outputs = em.outputs;
    outputs.sort_by(|a, b| a.1.cmp(&b.1));
    let manifest = RunManifest {
        scenario: scenario.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        config_text,
        config_sha256,
        max_slit_nodes_used: aperture::refinement_high_water(),
        outputs,
        notes,
    };
    let path = out_dir.join("manifest.txt");
    std::fs::write(&path, manifest.to_text()).map_err(|source| RunError::Io { path, source })?;
    Ok(manifest)
}

/// The six depths of the interference-onset study (m).
pub const ONSET_DEPTHS: [f64; 6] = [1e-6, 1e-5, 1e-4, 5e-4, 1e-3, 0.113];

fn depth_tag(dz: f64) -> String {
    format!("{:.0e}", dz).replace("e-", "em").replace('e', "ep")
}

fn run_before_density(config: &ExperimentConfig, em: &mut Emitter) -> Result<(), RunError> {
    let t1 = slit_arrival_time(0.0, 0.0, config)?;
    let eps = SpreadState::at(t1, config).eps0_t;
    let xs: Vec<f64> = Grid1D::symmetric(3.0 * eps, 241)?.points().collect();
    let rows: Vec<(f64, Vec<f64>)> = (0..=60)
        .map(|i| {
            let t = t1 * i as f64 / 60.0;
            let z = 0.5 * config.constants.g * t * t;
            (z, xs.iter().map(|&x| rho_transverse_before(x, t, config)).collect())
        })
        .collect();
    em.write("before_density_map.csv", &matrix_csv("z_m", &xs, &rows, &em.prov.clone()))
}

fn run_onset(config: &ExperimentConfig, em: &mut Emitter) -> Result<(), RunError> {
    let mut gaps = String::from("delta_z_m,gap\n");
    for dz in ONSET_DEPTHS {
        let grid = Grid1D::symmetric(envelope_half_width(dz, config), 801)?;
        let (interference, sum) = density_profile_pair(grid, dz, 0.0, 0.0, config)?;
        let gap = profile_l1(&interference, &sum);
        gaps.push_str(&format!("{dz},{gap}\n"));
        let tag = depth_tag(dz);
        em.write(
            &format!("onset_dz_{tag}_interference.csv"),
            &profile_csv(&interference, &em.prov.clone()),
        )?;
        em.write(
            &format!("onset_dz_{tag}_diffraction_sum.csv"),
            &profile_csv(&sum, &em.prov.clone()),
        )?;
    }
    em.write("onset_gaps.csv", &keyed_text(&gaps, &em.prov.clone()))
}

fn run_evolution_map(config: &ExperimentConfig, em: &mut Emitter) -> Result<(), RunError> {
    let t1 = slit_arrival_time(0.0, 0.0, config)?;
    let rule = aperture::k_average_rule(config);
    let g = config.constants.g;
    let l1 = config.slits.l1;

    let mut emit_map = |name: &str,
                        xs: &[f64],
                        depths: &[f64]|
     -> Result<(), RunError> {
        let rows: Result<Vec<(f64, Vec<f64>)>, RunError> = depths
            .iter()
            .map(|&z| {
                if z < l1 {
                    // above the slits: closed-form marginal at the fall time
                    let t = (2.0 * z / g).sqrt();
                    Ok((z, xs.iter().map(|&x| rho_transverse_before(x, t, config)).collect()))
                } else {
                    let dz = (z - l1).max(1e-7);
                    let t = (t1 * t1 + 2.0 * dz / g).sqrt();
                    let values: Result<Vec<f64>, _> = xs
                        .iter()
                        .map(|&x| {
                            aperture::rho_after_with_rule(
                                x,
                                t,
                                t1,
                                &rule,
                                ProfileMode::Interference,
                                config,
                            )
                        })
                        .collect();
                    Ok((z, values?))
                }
            })
            .collect();
        em.write(name, &matrix_csv("z_m", xs, &rows?, &em.prov.clone()))
    };

    // full drop: source to detector
    let xs_full: Vec<f64> = Grid1D::symmetric(2e-3, 161)?.points().collect();
    let depths_full: Vec<f64> = (0..=100)
        .map(|i| (config.slits.l1 + config.slits.l2) * i as f64 / 100.0)
        .collect();
    emit_map("evolution_map_full.csv", &xs_full, &depths_full)?;

    // first millimeter below the slits
    let xs_mm: Vec<f64> = Grid1D::symmetric(4e-5, 161)?.points().collect();
    let depths_mm: Vec<f64> = (1..=50).map(|i| l1 + 1e-3 * i as f64 / 50.0).collect();
    emit_map("evolution_map_first_mm.csv", &xs_mm, &depths_mm)?;

    // first hundred micrometers
    let xs_um: Vec<f64> = Grid1D::symmetric(1.5e-5, 161)?.points().collect();
    let depths_um: Vec<f64> = (1..=50).map(|i| l1 + 1e-4 * i as f64 / 50.0).collect();
    emit_map("evolution_map_first_100um.csv", &xs_um, &depths_um)
}

/// Grid used for detector-plane profiles.
pub fn detector_grid(config: &ExperimentConfig) -> Result<Grid1D, RunError> {
    let half = envelope_half_width(config.slits.l2, config).min(2.5e-3);
    Ok(Grid1D::symmetric(half, 1601)?)
}

fn run_detector(config: &ExperimentConfig, em: &mut Emitter) -> Result<(), RunError> {
    let grid = detector_grid(config)?;
    let raw = aperture::density_profile(grid, config.slits.l2, 0.0, 0.0, ProfileMode::Interference, config)?;
    em.write("detector_raw.csv", &profile_csv(&raw, &em.prov.clone()))?;
    let windowed =
        rho_time_window_profile(grid, TimeWindow::default_detection(), config, DEFAULT_WINDOW_QUAD)?;
    em.write("detector_windowed.csv", &profile_csv(&windowed, &em.prov.clone()))?;
    let smoothed = detector_smooth(&windowed, DETECTOR_RESOLUTION)?;
    em.write("detector_smoothed.csv", &profile_csv(&smoothed, &em.prov.clone()))?;
    let metrics = fringe_metrics(&raw)?;
    em.write("detector_metrics.txt", &keyed_text(&metrics_to_text(&metrics), &em.prov.clone()))
}

/// Sample the axial trajectory stream (x₀, y₀ random, z₀ = 0, k = 0)
/// conditioned on slit passage.
fn axial_passing_sample(
    n: usize,
    seed: u64,
    config: &ExperimentConfig,
) -> Vec<InitialConditions> {
    let mut ics = Vec::with_capacity(n);
    let mut stream = 0u64;
    while ics.len() < n {
        let mut rng = CounterRng::new(seed, stream);
        stream += 1;
        let ic = InitialConditions {
            position: [
                rng.normal_scaled(0.0, config.source.sigma0),
                rng.normal_scaled(0.0, config.source.sigma0),
                0.0,
            ],
            wave_vector: [0.0; 3],
        };
        if passes_slit(&ic, config) != SlitLabel::Blocked {
            ics.push(ic);
        }
    }
    ics
}

fn run_trajectories(
    config: &ExperimentConfig,
    params: &RunParams,
    em: &mut Emitter,
    notes: &mut Vec<(String, String)>,
) -> Result<(), RunError> {
    use rayon::prelude::*;
    let n = params.n.unwrap_or(100);
    let ics = axial_passing_sample(n, config.seed, config);
    if params.classical {
        let bundle: Vec<TrajectoryOutcome> = ics
            .iter()
            .filter_map(|ic| {
                let (states, impact) = classical_trajectory(ic, config);
                impact.map(|impact| TrajectoryOutcome { states, impact })
            })
            .collect();
        notes.push(("n_trajectories".into(), bundle.len().to_string()));
        return em.write("trajectories_classical.csv", &trajectories_csv(&bundle, &em.prov.clone()));
    }
    let opts = TrajectoryOptions::with_standard_recording(config);
    let results: Result<Vec<TrajectoryOutcome>, _> = ics
        .par_iter()
        .map(|ic| integrate_trajectory_with(ic, config, &opts))
        .collect();
    let bundle = results?;
    notes.push(("n_trajectories".into(), bundle.len().to_string()));
    em.write("trajectories.csv", &trajectories_csv(&bundle, &em.prov.clone()))
}

/// Flagged-trajectory budget: a run fails statistically if more than 1% of
/// the requested ensemble (and at least 2 atoms) hit unrecoverable nodes.
pub fn flagged_budget(n: usize) -> u64 {
    ((n as f64 * 0.01).ceil() as u64).max(2)
}

fn run_impacts(
    config: &ExperimentConfig,
    params: &RunParams,
    em: &mut Emitter,
    notes: &mut Vec<(String, String)>,
) -> Result<(), RunError> {
    let n = params.n.unwrap_or(5000);
    let impacts: Vec<ImpactRecord>;
    let attempts;
    let flagged;
    if params.classical {
        let mut kept = Vec::with_capacity(n);
        let mut stream = 0u64;
        while kept.len() < n {
            let ic = sample_one(config.seed, stream, config);
            stream += 1;
            if let (_, Some(imp)) = classical_trajectory(&ic, config) {
                kept.push(imp);
            }
        }
        impacts = kept;
        attempts = stream;
        flagged = 0;
    } else {
        let summary = simulate_impacts(n, config.seed, config)?;
        attempts = summary.attempts;
        flagged = summary.flagged;
        impacts = summary.impacts;
        let limit = flagged_budget(n);
        if flagged > limit {
            return Err(RunError::FlaggedBudget { flagged, total: n as u64, limit });
        }
    }
    notes.push(("attempts".into(), attempts.to_string()));
    notes.push(("flagged".into(), flagged.to_string()));
    let name = if params.classical { "impacts_classical.csv" } else { "impacts.csv" };
    em.write(name, &impacts_csv(&impacts, &em.prov.clone()))
}

fn run_scaling(
    config: &ExperimentConfig,
    params: &RunParams,
    em: &mut Emitter,
    notes: &mut Vec<(String, String)>,
) -> Result<(), RunError> {
    use rayon::prelude::*;
    let base = Grid1D::symmetric(2.4e-3, 961)?;
    let report = scaling_report(&params.eta, base, config)?;
    em.write("scaling_report.csv", &keyed_text(&report.to_csv(), &em.prov.clone()))?;
    for &eta in &params.eta {
        let grid = scaled_grid(eta, base, config);
        let scaled = scaled_config(eta, config)?;
        let profile = single_k_profile(grid, &scaled)?;
        let tag = format!("{eta}");
        em.write(&format!("scaling_density_eta_{tag}.csv"), &profile_csv(&profile, &em.prov.clone()))?;
        // small guided bundle per rung; the ladder itself carries the metrics
        let n_traj = params.n.unwrap_or(16).min(64);
        let ics = axial_passing_sample(n_traj, config.seed, &scaled);
        let opts = TrajectoryOptions { spin: true, record_times: standard_after_slit_times(&scaled) };
        let bundle: Result<Vec<TrajectoryOutcome>, _> = ics
            .par_iter()
            .map(|ic| integrate_trajectory_with(ic, &scaled, &opts))
            .collect();
        em.write(
            &format!("scaling_trajectories_eta_{tag}.csv"),
            &trajectories_csv(&bundle?, &em.prov.clone()),
        )?;
    }
    let classical = classical_density_k0(scaled_grid(*params.eta.last().unwrap(), base, config), config);
    em.write("scaling_classical_baseline.csv", &profile_csv(&classical, &em.prov.clone()))?;
    notes.push(("eta_ladder".into(), format!("{:?}", params.eta)));
    Ok(())
}

fn standard_after_slit_times(config: &ExperimentConfig) -> Vec<f64> {
    let t1 = slit_arrival_time(0.0, 0.0, config).expect("valid geometry");
    let t2 = detector_arrival_time(0.0, 0.0, config).expect("valid geometry");
    let mut times = vec![t1 * 0.5, t1 * 0.9];
    let n = 120;
    let lo: f64 = 1e-6;
    let hi = (t2 - t1) * 1.05;
    for i in 0..=n {
        let f = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / n as f64).exp();
        times.push(t1 + f);
    }
    times
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_shimizu_config;

    #[test]
    fn scenario_names_round_trip() {
        for s in [
            Scenario::BeforeDensity,
            Scenario::Onset,
            Scenario::EvolutionMap,
            Scenario::Detector,
            Scenario::Trajectories,
            Scenario::Impacts,
            Scenario::Scaling,
        ] {
            assert_eq!(Scenario::parse(s.name()), Some(s));
        }
        assert_eq!(Scenario::parse("unknown"), None);
    }

    #[test]
    fn exit_codes_are_distinct_and_actionable() {
        let cfg_err = RunError::Config(crate::model::ConfigError::Invalid("x".into()));
        assert_eq!(cfg_err.exit_code(), 2);
        let flag_err = RunError::FlaggedBudget { flagged: 10, total: 100, limit: 2 };
        assert_eq!(flag_err.exit_code(), 4);
        let win_err: RunError =
            DetectorError::UnsatisfiableWindow { t_min: 0.1, t_max: 0.2 }.into();
        assert_eq!(win_err.exit_code(), 3);
    }

    #[test]
    fn before_density_scenario_writes_map_and_manifest() {
        let cfg = default_shimizu_config();
        let dir = std::env::temp_dir().join("coldslit_test_before_density");
        let _ = std::fs::remove_dir_all(&dir);
        let manifest =
            run(Scenario::BeforeDensity, &cfg, &RunParams::default(), &dir).unwrap();
        assert_eq!(manifest.outputs.len(), 1);
        assert_eq!(manifest.outputs[0].1, "before_density_map.csv");
        let body = std::fs::read_to_string(dir.join("before_density_map.csv")).unwrap();
        assert_eq!(sha256_hex(body.as_bytes()), manifest.outputs[0].0);
        assert!(body.contains(&format!("# config_sha256: {}", manifest.config_sha256)));
        let manifest_text = std::fs::read_to_string(dir.join("manifest.txt")).unwrap();
        assert!(manifest_text.contains("scenario = before-density"));
        assert!(manifest_text.contains("config.mass_kg"));
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let cfg = default_shimizu_config();
        let params = RunParams { seed: Some(7), n: Some(6), ..RunParams::default() };
        let d1 = std::env::temp_dir().join("coldslit_det_a");
        let d2 = std::env::temp_dir().join("coldslit_det_b");
        for d in [&d1, &d2] {
            let _ = std::fs::remove_dir_all(d);
        }
        let m1 = run(Scenario::Trajectories, &cfg, &params, &d1).unwrap();
        let m2 = run(Scenario::Trajectories, &cfg, &params, &d2).unwrap();
        assert_eq!(m1.outputs, m2.outputs);
        for (sha, name) in &m1.outputs {
            let b1 = std::fs::read(d1.join(name)).unwrap();
            let b2 = std::fs::read(d2.join(name)).unwrap();
            assert_eq!(b1, b2);
            assert_eq!(&sha256_hex(&b1), sha);
        }
        for d in [&d1, &d2] {
            let _ = std::fs::remove_dir_all(d);
        }
    }
}
