//! The JSON run document and what it resolves to.

use std::path::{Path, PathBuf};

use bragg_cascade::cmt::{bragg_wavelength, GratingSpec};
use bragg_cascade::design::{DesignTarget, DEFAULT_MAX_SECTIONS};
use bragg_cascade::fabnoise::{Calibration, MonteCarlo, NoiseModel, Sensitivity, SweepMode, DEFAULT_CORRELATION_LENGTH, DEFAULT_MC_STEP, DEFAULT_TRIALS};
use bragg_cascade::modes::{DispersionModel, WaveguideGeometry};
use bragg_cascade::spectra::{BandwidthCriterion, MeasurementChain, OffbandWindow};
use bragg_cascade::tmm::{CascadeSpec, Composition, Link, Simulator};
use bragg_cascade::Error;
use serde::{Deserialize, Serialize};

use crate::failure::{Failure, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: WaveguideGeometry,
    #[serde(default)]
    pub dispersion: DispersionConfig,
    #[serde(default)]
    pub cascade: CascadeConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub chain: Option<MeasurementChain>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub design: Option<DesignConfig>,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

/// Where effective indices come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DispersionConfig {
    /// Effective-index solutions of `geometry` sampled every `step` nm and
    /// interpolated.
    GeometryTable { from: f64, to: f64, step: f64 },
    /// Effective-index solutions of `geometry` at every wavelength.
    Geometry,
    Constant { n_eff: Vec<f64> },
    Table { wavelengths: Vec<f64>, n_eff: Vec<Vec<f64>> },
}

impl Default for DispersionConfig {
    fn default() -> Self {
        DispersionConfig::GeometryTable {
            from: 1000.0,
            to: 2200.0,
            step: 1.0,
        }
    }
}

/// `count` identical sections joined by identical links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CascadeConfig {
    pub section: GratingSpec,
    pub count: usize,
    pub composition: Composition,
    pub link: Link,
    pub leakage: f64,
    /// Interconnect waveguide width, nm.
    pub link_width: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            section: GratingSpec::default(),
            count: 1,
            composition: Composition::Incoherent,
            link: Link::default(),
            leakage: 0.0,
            link_width: 400.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub sigma_width: f64,
    pub correlation_length: f64,
    pub wafer_bias_sigma: f64,
    /// Replace `sigma_width` by the value that meets this plateau.
    pub calibrate: Option<CalibrationConfig>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_width: 0.0,
            correlation_length: DEFAULT_CORRELATION_LENGTH,
            wafer_bias_sigma: 0.0,
            calibrate: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub target_db: f64,
    /// nm
    pub plateau_onset: f64,
    pub trials: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            target_db: 40.0,
            plateau_onset: 300_000.0,
            trials: DEFAULT_TRIALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Fine step around the notch, nm.
    pub step: f64,
    /// Off-band window; automatic when absent.
    pub window: Option<OffbandWindow>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            step: DEFAULT_MC_STEP,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub bandwidth: BandwidthCriterion,
    /// Wavelength of the mode report, nm.
    pub modes_wavelength: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            bandwidth: BandwidthCriterion::NullToNull,
            modes_wavelength: 1550.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Total grating lengths, nm, ascending.
    pub lengths: Vec<f64>,
    pub mode: SweepMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub target: DesignTarget,
    /// 1/nm
    pub kappa_min: f64,
    /// 1/nm
    pub kappa_max: f64,
    #[serde(default = "default_max_sections")]
    pub max_sections: usize,
}

fn default_max_sections() -> usize {
    DEFAULT_MAX_SECTIONS
}

/// Command-line flags that override the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub grid_step: Option<f64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Outcome<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Outcome<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Failure::Validation(format!("config {path}: {}", e.inner()))
        })
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(trials) = o.trials {
            self.trials = trials;
        }
        if let Some(step) = o.grid_step {
            self.grid.step = step;
        }
        if let Some(out) = &o.out {
            self.output_dir = Some(out.clone());
        }
    }

    pub fn validate(&self) -> Outcome<()> {
        let invalid = |m: &str| Err(Failure::Validation(m.to_string()));
        self.geometry.validate().map_err(|e| Failure::Validation(format!("geometry: {e}")))?;
        if self.cascade.count == 0 {
            return invalid("cascade.count must be >= 1");
        }
        if !(self.cascade.link_width > 0.0) {
            return invalid("cascade.link_width must be > 0");
        }
        self.cascade_spec()
            .validate()
            .map_err(|e| Failure::Validation(format!("cascade: {e}")))?;
        self.noise_model()
            .validate()
            .map_err(|e| Failure::Validation(format!("noise: {e}")))?;
        if let Some(c) = &self.noise.calibrate {
            if !(c.target_db > 0.0 && c.plateau_onset > 0.0 && c.trials >= 1) {
                return invalid("noise.calibrate needs target_db > 0, plateau_onset > 0 and trials >= 1");
            }
        }
        if let Some(chain) = &self.chain {
            chain.validate().map_err(|e| Failure::Validation(format!("chain: {e}")))?;
        }
        if !(self.grid.step > 0.0 && self.grid.step.is_finite()) {
            return invalid("grid.step must be > 0");
        }
        if let Some(w) = &self.grid.window {
            if w.ranges.is_empty() || w.ranges.iter().any(|(lo, hi)| !(lo < hi)) {
                return invalid("grid.window ranges must be non-empty with lo < hi");
            }
        }
        if self.trials == 0 {
            return invalid("trials must be >= 1");
        }
        if let DispersionConfig::GeometryTable { from, to, step } = self.dispersion {
            if !(from > 0.0 && to > from && step > 0.0) {
                return invalid("dispersion needs 0 < from < to and step > 0");
            }
        }
        if let Some(s) = &self.sweep {
            if s.lengths.is_empty() || s.lengths.windows(2).any(|w| w[1] <= w[0]) {
                return invalid("sweep.lengths must be non-empty and ascending");
            }
        }
        if let Some(d) = &self.design {
            d.target.validate().map_err(|e| Failure::Validation(format!("design.target: {e}")))?;
            if !(0.0 <= d.kappa_min && d.kappa_min <= d.kappa_max) {
                return invalid("design needs 0 <= kappa_min <= kappa_max");
            }
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("bragg-out"))
    }

    pub fn cascade_spec(&self) -> CascadeSpec {
        let c = &self.cascade;
        CascadeSpec {
            sections: vec![c.section; c.count],
            links: vec![c.link; c.count.saturating_sub(1)],
            composition: c.composition,
            leakage: c.leakage,
        }
    }

    /// Noise model before any calibration.
    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            sigma_width: self.noise.sigma_width,
            correlation_length: self.noise.correlation_length,
            wafer_bias_sigma: self.noise.wafer_bias_sigma,
            seed: self.seed,
        }
    }

    pub fn dispersion_model(&self) -> Result<DispersionModel, Error> {
        let exact = DispersionModel::geometry(self.geometry);
        let model = match &self.dispersion {
            DispersionConfig::GeometryTable { from, to, step } => {
                let n = ((to - from) / step).round() as usize;
                let wavelengths: Vec<f64> = (0..=n).map(|k| from + k as f64 * step).collect();
                exact.tabulate(&wavelengths, 2)?
            }
            DispersionConfig::Geometry => exact,
            DispersionConfig::Constant { n_eff } => DispersionModel::constant(n_eff),
            DispersionConfig::Table { wavelengths, n_eff } => DispersionModel::Table {
                wavelengths: wavelengths.clone(),
                n_eff: n_eff.clone(),
            },
        };
        model.validate()?;
        Ok(model)
    }
}

/// Everything a simulation command needs, resolved from a [`RunConfig`].
pub struct Setup {
    pub cascade: CascadeSpec,
    pub monte_carlo: MonteCarlo,
    pub noise: NoiseModel,
    pub calibration: Option<Calibration>,
}

impl Setup {
    pub fn resolve(config: &RunConfig) -> Outcome<Self> {
        let dispersion = config.dispersion_model()?;
        let section = &config.cascade.section;
        let lambda0 = bragg_wavelength(section, &dispersion)?.lambda0;
        let sensitivity =
            Sensitivity::from_geometry(&config.geometry, section.mode_pair, config.cascade.link_width, lambda0)?;
        let base = config.noise_model();
        let simulator = Simulator::new(dispersion, base.segmentation(section.period));
        let mut monte_carlo = MonteCarlo::new(simulator, sensitivity);
        monte_carlo.window = config.grid.window.clone();
        monte_carlo.bandwidth = Some(config.analysis.bandwidth);
        monte_carlo.chain = config.chain;
        monte_carlo.step = config.grid.step;

        let (noise, calibration) = match &config.noise.calibrate {
            Some(c) => {
                let cal = monte_carlo.calibrate_sigma(c.target_db, c.plateau_onset, section, c.trials, &base)?;
                (cal.model, Some(cal))
            }
            None => (base, None),
        };
        Ok(Self {
            cascade: config.cascade_spec(),
            monte_carlo,
            noise,
            calibration,
        })
    }
}
