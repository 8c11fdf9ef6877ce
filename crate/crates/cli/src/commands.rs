use std::fs;
use std::path::Path;

use bragg_cascade::cmt::{bragg_wavelength, pair_group_index, ModePair};
use bragg_cascade::design::{period_for, solve_count_capped, solve_section};
use bragg_cascade::fabnoise::{EnsembleStats, TrialRecord};
use bragg_cascade::modes::{dneff_dwidth, effective_index_2d, group_index, DispersionModel};
use bragg_cascade::spectra::{
    apply_measurement_chain, extract_bandwidth_nm, extract_center_nm, extract_rejection_db, BandwidthCriterion,
    MeasurementChain, OffbandWindow, Spectrum,
};
use bragg_cascade::Error;
use serde::Serialize;

use crate::config::{RunConfig, Setup};
use crate::failure::{Failure, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub rejection_db: f64,
    pub offband_db: f64,
    pub min_db: f64,
    pub min_wavelength_nm: f64,
    pub clipped: bool,
    pub center_nm: Option<f64>,
    pub bandwidth_criterion: BandwidthCriterion,
    pub bandwidth_nm: Option<f64>,
    pub window: OffbandWindow,
    pub measured: Option<MeasuredMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasuredMetrics {
    pub chain: MeasurementChain,
    pub rejection_db: f64,
    pub clipped: bool,
}

pub fn metrics(
    spectrum: &Spectrum,
    window: &OffbandWindow,
    criterion: BandwidthCriterion,
    chain: Option<&MeasurementChain>,
) -> Outcome<Metrics> {
    let r = extract_rejection_db(spectrum, window)?;
    let bandwidth_nm = match extract_bandwidth_nm(spectrum, criterion, window) {
        Ok(b) => Some(b),
        Err(Error::NotchTooShallow { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let center_nm = match extract_center_nm(spectrum) {
        Ok(c) => Some(c),
        Err(Error::NoNotchFound) => None,
        Err(e) => return Err(e.into()),
    };
    let measured = match chain {
        Some(chain) => {
            let apparent = apply_measurement_chain(spectrum, chain)?.apparent_transmission();
            let m = extract_rejection_db(&apparent, window)?;
            Some(MeasuredMetrics {
                chain: *chain,
                rejection_db: m.db,
                clipped: m.clipped,
            })
        }
        None => None,
    };
    Ok(Metrics {
        rejection_db: r.db,
        offband_db: r.offband_db,
        min_db: r.min_db,
        min_wavelength_nm: r.min_wavelength,
        clipped: r.clipped,
        center_nm,
        bandwidth_criterion: criterion,
        bandwidth_nm,
        window: window.clone(),
        measured,
    })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Outcome<String> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    fs::write(dir.join(name), &text).map_err(|e| Failure::Io(format!("{name}: {e}")))?;
    Ok(text)
}

fn write_spectrum(dir: &Path, name: &str, spectrum: &Spectrum) -> Outcome<()> {
    let file = fs::File::create(dir.join(name)).map_err(|e| Failure::Io(format!("{name}: {e}")))?;
    spectrum.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}

fn prepare_dir(config: &RunConfig) -> Outcome<std::path::PathBuf> {
    let dir = config.output_dir();
    fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    write_json(&dir, "effective_config.json", config)?;
    Ok(dir)
}

fn write_calibration(dir: &Path, setup: &Setup) -> Outcome<()> {
    if let Some(cal) = &setup.calibration {
        write_json(dir, "calibration.json", cal)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ModeEntry {
    order: usize,
    guided: bool,
    n_eff: Option<f64>,
    group_index: Option<f64>,
    dneff_dwidth: Option<f64>,
    reason: Option<String>,
}

#[derive(Debug, Serialize)]
struct ModesReport {
    wavelength_nm: f64,
    modes: Vec<ModeEntry>,
    hybrid_lambda0_nm: Option<f64>,
    fundamental_lambda0_nm: Option<f64>,
}

pub fn modes(config: &RunConfig) -> Outcome<String> {
    let dir = prepare_dir(config)?;
    let l = config.analysis.modes_wavelength;
    let exact = DispersionModel::geometry(config.geometry);
    let modes = (0..2)
        .map(|order| match effective_index_2d(&config.geometry, l, order) {
            Ok(m) => Ok(ModeEntry {
                order,
                guided: true,
                n_eff: Some(m.n_eff),
                group_index: Some(group_index(&exact, l, order)?),
                dneff_dwidth: dneff_dwidth(&config.geometry, l, order).ok(),
                reason: None,
            }),
            Err(e @ Error::NoGuidedMode { .. }) => Ok(ModeEntry {
                order,
                guided: false,
                n_eff: None,
                group_index: None,
                dneff_dwidth: None,
                reason: Some(e.to_string()),
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let lambda0 = |pair| {
        let spec = bragg_cascade::cmt::GratingSpec {
            mode_pair: pair,
            ..config.cascade.section
        };
        bragg_wavelength(&spec, &exact).ok().map(|b| b.lambda0)
    };
    let report = ModesReport {
        wavelength_nm: l,
        modes,
        hybrid_lambda0_nm: lambda0(ModePair::Hybrid),
        fundamental_lambda0_nm: lambda0(ModePair::Fundamental),
    };
    write_json(&dir, "modes.json", &report)
}

pub fn simulate(config: &RunConfig) -> Outcome<String> {
    let dir = prepare_dir(config)?;
    let setup = Setup::resolve(config)?;
    write_calibration(&dir, &setup)?;
    let mc = &setup.monte_carlo;
    let (grid, window) = mc.grid_for(&setup.cascade, &setup.noise)?;
    let spectrum = mc.trial_spectrum(&setup.cascade, &setup.noise, 0, &grid)?;
    write_spectrum(&dir, "spectrum.csv", &spectrum)?;
    if let Some(chain) = &config.chain {
        let apparent = apply_measurement_chain(&spectrum, chain)?.apparent_transmission();
        write_spectrum(&dir, "measured.csv", &apparent)?;
    }
    let m = metrics(&spectrum, &window, config.analysis.bandwidth, config.chain.as_ref())?;
    write_json(&dir, "metrics.json", &m)
}

#[derive(Debug, Serialize)]
struct EnsembleSummary<'a> {
    trials: usize,
    median_rejection_db: f64,
    p5_rejection_db: f64,
    p25_rejection_db: f64,
    p75_rejection_db: f64,
    p95_rejection_db: f64,
    median_bandwidth_nm: Option<f64>,
    median_measured_rejection_db: Option<f64>,
    clipped_trials: usize,
    sigma_width: f64,
    saturation: Option<&'a [(f64, f64)]>,
}

pub fn montecarlo(config: &RunConfig) -> Outcome<String> {
    let dir = prepare_dir(config)?;
    let setup = Setup::resolve(config)?;
    write_calibration(&dir, &setup)?;
    let mc = &setup.monte_carlo;
    let (grid, window) = mc.grid_for(&setup.cascade, &setup.noise)?;
    let stats: EnsembleStats = mc.run_on(&setup.cascade, &setup.noise, config.trials, &grid, &window)?;
    write_json(&dir, "ensemble.json", &stats)?;
    write_trials(&dir, &stats.records)?;

    let saturation = match &config.sweep {
        Some(sweep) => {
            let curve =
                mc.saturation_curve(&config.cascade.section, &sweep.lengths, &setup.noise, config.trials, sweep.mode)?;
            let mut w = csv::Writer::from_path(dir.join("saturation.csv"))?;
            w.write_record(["length_nm", "median_rejection_db"])?;
            for (l, r) in &curve {
                w.write_record([l.to_string(), r.to_string()])?;
            }
            w.flush()?;
            Some(curve)
        }
        None => None,
    };
    let summary = EnsembleSummary {
        trials: stats.trials,
        median_rejection_db: stats.median_rejection_db,
        p5_rejection_db: stats.p5_rejection_db,
        p25_rejection_db: stats.p25_rejection_db,
        p75_rejection_db: stats.p75_rejection_db,
        p95_rejection_db: stats.p95_rejection_db,
        median_bandwidth_nm: stats.median_bandwidth_nm,
        median_measured_rejection_db: stats.median_measured_rejection_db,
        clipped_trials: stats.clipped_trials,
        sigma_width: setup.noise.sigma_width,
        saturation: saturation.as_deref(),
    };
    Ok(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")
}

fn write_trials(dir: &Path, records: &[TrialRecord]) -> Outcome<()> {
    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    w.write_record(["trial", "rejection_db", "bandwidth_nm", "measured_rejection_db", "clipped"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.rejection_db.to_string(),
            opt(r.bandwidth_nm),
            opt(r.measured_rejection_db),
            r.clipped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn design(config: &RunConfig) -> Outcome<String> {
    let d = config
        .design
        .as_ref()
        .ok_or_else(|| Failure::Validation("config .design: required by the design command".into()))?;
    let dir = prepare_dir(config)?;
    let setup = Setup::resolve(config)?;
    write_calibration(&dir, &setup)?;
    let mc = &setup.monte_carlo;
    let dispersion = &mc.simulator.dispersion;
    let template = config.cascade.section;
    let center = d.target.center_nm;
    let template = bragg_cascade::cmt::GratingSpec {
        period: period_for(&template, dispersion, center)?,
        ..template
    };
    let ng = pair_group_index(template.mode_pair, dispersion, center)?;
    let section = solve_section(&d.target, ng, (d.kappa_min, d.kappa_max), &template)?;
    let result = solve_count_capped(&d.target, &section, &setup.noise, config.trials, mc, d.max_sections)?;
    write_json(&dir, "design.json", &result)
}

/// Options of the analyze command beyond the shared flags.
#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    pub window: Option<OffbandWindow>,
    /// Clip floor in dB of transmission.
    pub floor_db: Option<f64>,
    pub bandwidth: Option<BandwidthCriterion>,
}

pub fn analyze(
    path: &Path,
    config: Option<&RunConfig>,
    options: &AnalyzeOptions,
    out: Option<&Path>,
) -> Outcome<String> {
    let file = fs::File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut spectrum = Spectrum::read_csv(std::io::BufReader::new(file))?;
    if let Some(floor) = options.floor_db {
        spectrum.metadata.clip_floor = Some(10f64.powf(floor / 10.0));
    }

    let (window, criterion, chain) = match config {
        Some(c) => {
            let setup = Setup::resolve(c)?;
            let (_, window) = setup.monte_carlo.grid_for(&setup.cascade, &setup.noise)?;
            (window, c.analysis.bandwidth, c.chain)
        }
        None => {
            let center = extract_center_nm(&spectrum)?;
            (OffbandWindow::default_for(center), BandwidthCriterion::NullToNull, None)
        }
    };
    let window = options.window.clone().unwrap_or(window);
    let criterion = options.bandwidth.unwrap_or(criterion);
    let m = metrics(&spectrum, &window, criterion, chain.as_ref())?;
    let text = serde_json::to_string_pretty(&m).expect("metrics serialize") + "\n";
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        write_json(dir, "metrics.json", &m)?;
    }
    Ok(text)
}
