//! Fabrication-noise realizations and Monte Carlo ensembles.
//!
//! Local width deviations follow a stationary Gaussian AR(1) process along
//! each section; one extra Gaussian offset per trial is shared by every
//! section and link of the chip. Widths convert to index-sum shifts through
//! a [`Sensitivity`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmt::{notch_estimate, GratingSpec, ModePair, NotchEstimate};
use crate::error::{ensure, Error, Result};
use crate::modes::{dneff_dwidth, DispersionModel, WaveguideGeometry};
use crate::spectra::{
    apply_measurement_chain, extract_bandwidth_nm, extract_rejection_db, notch_grid, BandwidthCriterion,
    MeasurementChain, OffbandWindow, Spectrum,
};
use crate::tmm::{CascadeSpec, Composition, Realization, Segmentation, Simulator};

/// nm
pub const DEFAULT_CORRELATION_LENGTH: f64 = 10_000.0;
pub const DEFAULT_TRIALS: usize = 200;
/// Monte Carlo wavelength step, nm.
pub const DEFAULT_MC_STEP: f64 = 0.01;
/// Step between grid points outside the notch, nm.
pub const COARSE_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Standard deviation of the local width deviation, nm.
    pub sigma_width: f64,
    /// nm
    pub correlation_length: f64,
    /// Standard deviation of the chip-wide width offset, nm.
    pub wafer_bias_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_width: 0.0,
            correlation_length: DEFAULT_CORRELATION_LENGTH,
            wafer_bias_sigma: 0.0,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn with_sigma(self, sigma_width: f64) -> Self {
        Self { sigma_width, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_width == 0.0 && self.wafer_bias_sigma == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.sigma_width >= 0.0 && self.sigma_width.is_finite(), || {
            format!("sigma_width must be >= 0, got {}", self.sigma_width)
        })?;
        ensure(self.wafer_bias_sigma >= 0.0 && self.wafer_bias_sigma.is_finite(), || {
            format!("wafer_bias_sigma must be >= 0, got {}", self.wafer_bias_sigma)
        })?;
        ensure(self.correlation_length > 0.0, || {
            format!("correlation_length must be > 0, got {}", self.correlation_length)
        })
    }

    /// Segmentation that resolves the correlation length: about a tenth of
    /// it, between one and three periods.
    pub fn segmentation(&self, period: f64) -> Segmentation {
        let len = (self.correlation_length / 10.0).clamp(period, 3.0 * period);
        Segmentation::Length(len)
    }

    fn rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        rng
    }
}

/// Index shift per nm of width deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sensitivity {
    /// Of the grating's forward-plus-backward index sum.
    pub section: f64,
    /// Of the interconnect's effective index.
    pub link: f64,
}

impl Sensitivity {
    pub fn from_geometry(
        geometry: &WaveguideGeometry,
        pair: ModePair,
        link_width: f64,
        wavelength: f64,
    ) -> Result<Self> {
        let (a, b) = pair.orders();
        let sa = dneff_dwidth(geometry, wavelength, a)?;
        let sb = if a == b { sa } else { dneff_dwidth(geometry, wavelength, b)? };
        Ok(Self {
            section: sa + sb,
            link: dneff_dwidth(&geometry.with_width(link_width), wavelength, 0)?,
        })
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// AR(1) width deviations, stationary from the first sample.
fn width_process(rng: &mut ChaCha8Rng, model: &NoiseModel, count: usize, step: f64) -> Vec<f64> {
    let rho = (-step / model.correlation_length).exp();
    let innovation = (1.0 - rho * rho).max(0.0).sqrt();
    let mut x = normal(rng);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        if k > 0 {
            x = rho * x + innovation * normal(rng);
        }
        out.push(model.sigma_width * x);
    }
    out
}

/// Per-segment index-sum shifts of every section and index deviations of
/// every link for one trial.
pub fn sample_cascade_realization(
    model: &NoiseModel,
    cascade: &CascadeSpec,
    trial: u64,
    sensitivity: Sensitivity,
    segmentation: Segmentation,
) -> Realization {
    let mut rng = model.rng(trial);
    let bias = model.wafer_bias_sigma * normal(&mut rng);
    let sections = cascade
        .sections
        .iter()
        .map(|s| {
            let n = segmentation.count(s);
            width_process(&mut rng, model, n, s.length / n as f64)
                .into_iter()
                .map(|w| sensitivity.section * (bias + w))
                .collect()
        })
        .collect();
    let links = cascade
        .links
        .iter()
        .map(|_| sensitivity.link * (bias + model.sigma_width * normal(&mut rng)))
        .collect();
    Realization {
        trial,
        sections,
        links,
    }
}

/// Per-segment index-sum shifts of a lone section.
pub fn sample_realization(
    model: &NoiseModel,
    spec: &GratingSpec,
    trial: u64,
    sensitivity: f64,
    segmentation: Segmentation,
) -> Vec<f64> {
    let cascade = CascadeSpec::single(*spec);
    let s = Sensitivity {
        section: sensitivity,
        link: 0.0,
    };
    let mut r = sample_cascade_realization(model, &cascade, trial, s, segmentation);
    r.sections.swap_remove(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub rejection_db: f64,
    pub bandwidth_nm: Option<f64>,
    /// Rejection read through the measurement chain, when one is set.
    pub measured_rejection_db: Option<f64>,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub trials: usize,
    pub median_rejection_db: f64,
    pub p5_rejection_db: f64,
    pub p25_rejection_db: f64,
    pub p75_rejection_db: f64,
    pub p95_rejection_db: f64,
    pub median_bandwidth_nm: Option<f64>,
    pub median_measured_rejection_db: Option<f64>,
    pub clipped_trials: usize,
    pub records: Vec<TrialRecord>,
}

/// Linear-interpolated percentile of sorted data, `p` in `[0, 100]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

fn median_of(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(percentile(&values, 50.0))
}

impl EnsembleStats {
    pub fn from_records(mut records: Vec<TrialRecord>) -> Result<Self> {
        ensure(!records.is_empty(), || "ensemble has no trials".into())?;
        records.sort_by_key(|r| r.trial);
        let mut rej: Vec<f64> = records.iter().map(|r| r.rejection_db).collect();
        rej.sort_by(f64::total_cmp);
        Ok(Self {
            trials: records.len(),
            median_rejection_db: percentile(&rej, 50.0),
            p5_rejection_db: percentile(&rej, 5.0),
            p25_rejection_db: percentile(&rej, 25.0),
            p75_rejection_db: percentile(&rej, 75.0),
            p95_rejection_db: percentile(&rej, 95.0),
            median_bandwidth_nm: median_of(records.iter().filter_map(|r| r.bandwidth_nm).collect()),
            median_measured_rejection_db: median_of(
                records.iter().filter_map(|r| r.measured_rejection_db).collect(),
            ),
            clipped_trials: records.iter().filter(|r| r.clipped).count(),
            records,
        })
    }
}

/// Everything an ensemble needs besides the cascade and the noise model.
#[derive(Debug, Clone)]
pub struct MonteCarlo {
    pub simulator: Simulator,
    pub sensitivity: Sensitivity,
    /// `None` places the window with [`OffbandWindow::for_notch`].
    pub window: Option<OffbandWindow>,
    pub bandwidth: Option<BandwidthCriterion>,
    pub chain: Option<MeasurementChain>,
    /// Fine grid step around the notch, nm.
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SweepMode {
    /// One grating of each length.
    SingleSection,
    /// `⌈length / section_length⌉` incoherently cascaded sections.
    IncoherentFixedSection { section_length: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: NoiseModel,
    pub onset_median_db: f64,
    pub noiseless_db: f64,
    pub evaluations: usize,
}

impl MonteCarlo {
    pub fn new(simulator: Simulator, sensitivity: Sensitivity) -> Self {
        Self {
            simulator,
            sensitivity,
            window: None,
            bandwidth: None,
            chain: None,
            step: DEFAULT_MC_STEP,
        }
    }

    fn dispersion(&self) -> &DispersionModel {
        &self.simulator.dispersion
    }

    /// Closed-form notch of `section` under this run's dispersion.
    pub fn notch(&self, section: &GratingSpec) -> Result<NotchEstimate> {
        notch_estimate(section, self.dispersion())
    }

    /// Grid and off-band window for `cascade` under `model`: fine sampling
    /// over the stopband widened by the scatter of the local Bragg
    /// wavelength, and a window clear of both.
    pub fn grid_for(&self, cascade: &CascadeSpec, model: &NoiseModel) -> Result<(Vec<f64>, OffbandWindow)> {
        cascade.validate()?;
        let first = &cascade.sections[0];
        let est = notch_estimate(first, self.dispersion())?;
        let widest = cascade
            .sections
            .iter()
            .map(|s| notch_estimate(s, self.dispersion()).map(|e| e.bandwidth_nm))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let index_sum = est.lambda0 / first.period * first.bragg_order as f64;
        let scatter = est.lambda0 * self.sensitivity.section.abs() * model.sigma_width.hypot(model.wafer_bias_sigma)
            / index_sum;
        let half = 0.75 * widest + 2.5 * scatter + 1.0;
        let window = match &self.window {
            Some(w) => w.clone(),
            None => {
                let inner = (3.0 * widest).max(widest + 4.0 * scatter).max(30.0);
                OffbandWindow::around(est.lambda0, inner, inner + 10.0)
            }
        };
        let grid = notch_grid(est.lambda0, half, self.step, &window, COARSE_STEP.max(self.step))?;
        Ok((grid, window))
    }

    /// Spectrum of one trial.
    pub fn trial_spectrum(&self, cascade: &CascadeSpec, model: &NoiseModel, trial: u64, grid: &[f64]) -> Result<Spectrum> {
        let realization = self.realization(cascade, model, trial);
        self.simulator.cascade_spectrum(cascade, grid, realization.as_ref())
    }

    fn realization(&self, cascade: &CascadeSpec, model: &NoiseModel, trial: u64) -> Option<Realization> {
        (!model.is_noiseless()).then(|| {
            sample_cascade_realization(model, cascade, trial, self.sensitivity, self.simulator.segmentation)
        })
    }

    fn record(&self, spectrum: &Spectrum, window: &OffbandWindow, trial: u64) -> Result<TrialRecord> {
        let rejection = extract_rejection_db(spectrum, window)?;
        let bandwidth_nm = match self.bandwidth {
            Some(c) => match extract_bandwidth_nm(spectrum, c, window) {
                Ok(b) => Some(b),
                Err(Error::NotchTooShallow { .. }) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        let (measured_rejection_db, clipped) = match &self.chain {
            Some(chain) => {
                let apparent = apply_measurement_chain(spectrum, chain)?.apparent_transmission();
                let r = extract_rejection_db(&apparent, window)?;
                (Some(r.db), r.clipped)
            }
            None => (None, false),
        };
        Ok(TrialRecord {
            trial,
            rejection_db: rejection.db,
            bandwidth_nm,
            measured_rejection_db,
            clipped,
        })
    }

    /// `trials` independent realizations on an automatic grid.
    pub fn run(&self, cascade: &CascadeSpec, model: &NoiseModel, trials: usize) -> Result<EnsembleStats> {
        let (grid, window) = self.grid_for(cascade, model)?;
        self.run_on(cascade, model, trials, &grid, &window)
    }

    /// `trials` independent realizations on `grid`.
    pub fn run_on(
        &self,
        cascade: &CascadeSpec,
        model: &NoiseModel,
        trials: usize,
        grid: &[f64],
        window: &OffbandWindow,
    ) -> Result<EnsembleStats> {
        ensure(trials >= 1, || "trials must be >= 1".into())?;
        model.validate()?;
        cascade.validate()?;
        let prepared = self.simulator.prepare(cascade, grid)?;
        if model.is_noiseless() {
            // Every trial is the same spectrum.
            let spectrum = self.simulator.spectrum_on(cascade, &prepared, None)?;
            let first = self.record(&spectrum, window, 0)?;
            let records = (0..trials as u64).map(|trial| TrialRecord { trial, ..first.clone() }).collect();
            return EnsembleStats::from_records(records);
        }
        let records = (0..trials as u64)
            .into_par_iter()
            .map(|trial| {
                let realization = self.realization(cascade, model, trial);
                let spectrum = self.simulator.spectrum_on(cascade, &prepared, realization.as_ref())?;
                self.record(&spectrum, window, trial)
            })
            .collect::<Result<Vec<_>>>()?;
        EnsembleStats::from_records(records)
    }

    /// Median rejection versus total length.
    pub fn saturation_curve(
        &self,
        section: &GratingSpec,
        lengths: &[f64],
        model: &NoiseModel,
        trials: usize,
        mode: SweepMode,
    ) -> Result<Vec<(f64, f64)>> {
        ensure(lengths.windows(2).all(|w| w[1] > w[0]), || "lengths must be ascending".into())?;
        lengths
            .iter()
            .map(|&length| {
                let cascade = match mode {
                    SweepMode::SingleSection => CascadeSpec::single(section.with_length(length)),
                    SweepMode::IncoherentFixedSection { section_length } => {
                        let l = section_length as f64;
                        let count = ((length / l) - 1e-9).ceil().max(1.0) as usize;
                        CascadeSpec::uniform(section.with_length(l), count, Composition::Incoherent)
                    }
                };
                Ok((length, self.run(&cascade, model, trials)?.median_rejection_db))
            })
            .collect()
    }

    /// Width noise that brings the median rejection of a `plateau_onset`-long
    /// section to `target_db`.
    ///
    /// Trials reuse the same random numbers at every candidate sigma, so the
    /// median is a smooth function of it.
    pub fn calibrate_sigma(
        &self,
        target_db: f64,
        plateau_onset: f64,
        spec: &GratingSpec,
        trials: usize,
        base: &NoiseModel,
    ) -> Result<Calibration> {
        ensure(target_db > 0.0, || "target rejection must be > 0".into())?;
        let cascade = CascadeSpec::single(spec.with_length(plateau_onset));
        let evaluations = std::cell::Cell::new(0);
        let median = |sigma: f64| -> Result<f64> {
            evaluations.set(evaluations.get() + 1);
            Ok(self.run(&cascade, &base.with_sigma(sigma), trials)?.median_rejection_db)
        };
        const TOL_DB: f64 = 0.05;

        let noiseless_db = median(0.0)?;
        if noiseless_db < target_db - TOL_DB {
            return Err(Error::CalibrationFailed(format!(
                "noiseless rejection {noiseless_db:.2} dB at {plateau_onset} nm is below the {target_db} dB target"
            )));
        }
        let done = |sigma: f64, onset_median_db: f64| Calibration {
            model: base.with_sigma(sigma),
            onset_median_db,
            noiseless_db,
            evaluations: evaluations.get(),
        };
        if noiseless_db - target_db <= TOL_DB {
            return Ok(done(0.0, noiseless_db));
        }

        let (mut lo, mut hi) = (0.0, 0.5);
        let mut at_hi = median(hi)?;
        while at_hi > target_db {
            lo = hi;
            hi *= 2.0;
            if hi > 1e3 {
                return Err(Error::CalibrationFailed(format!(
                    "median rejection stays above {target_db} dB for sigma up to 1000 nm"
                )));
            }
            at_hi = median(hi)?;
        }
        let mut best = (hi, at_hi);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let m = median(mid)?;
            if (m - target_db).abs() < (best.1 - target_db).abs() {
                best = (mid, m);
            }
            if (m - target_db).abs() <= TOL_DB || (hi - lo) <= 1e-6 * hi {
                break;
            }
            if m > target_db {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(done(best.0, best.1))
    }
}
