//! Sampled spectra, notch metrics and the detector model.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::tmm::Composition;

pub const CSV_HEADER: [&str; 3] = ["wavelength_nm", "transmission_linear", "transmission_db"];

/// Source power of the tunable laser, dBm.
pub const DEFAULT_SOURCE_DBM: f64 = 10.0;
/// Floor of the swept-laser detection system, dBm.
pub const CT400_FLOOR_DBM: f64 = -75.0;
/// Floor of the high-sensitivity spectrum-analyser detector, dBm.
pub const OSA_FLOOR_DBM: f64 = -90.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SpectrumMetadata {
    pub composition: Option<Composition>,
    pub realization: Option<u64>,
    pub cascade_hash: Option<String>,
    /// Linear transmission level at which a detector clipped the readings.
    pub clip_floor: Option<f64>,
}

/// Power transmission sampled on a strictly increasing wavelength grid (nm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub wavelengths: Vec<f64>,
    pub transmission: Vec<f64>,
    pub metadata: SpectrumMetadata,
}

impl Spectrum {
    pub fn new(wavelengths: Vec<f64>, transmission: Vec<f64>) -> Result<Self> {
        let s = Spectrum {
            wavelengths,
            transmission,
            metadata: SpectrumMetadata::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.wavelengths.len() == self.transmission.len(), || {
            "wavelength and transmission lengths differ".into()
        })?;
        ensure(!self.wavelengths.is_empty(), || "spectrum is empty".into())?;
        ensure(self.wavelengths.windows(2).all(|w| w[1] > w[0]), || {
            "wavelengths must be strictly increasing".into()
        })?;
        ensure(self.transmission.iter().all(|t| (0.0..=1.0).contains(t)), || {
            "transmission must lie in [0, 1]".into()
        })
    }

    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }

    pub fn transmission_db(&self) -> Vec<f64> {
        self.transmission.iter().map(|t| to_db(*t)).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(CSV_HEADER).map_err(io)?;
        for (l, t) in self.wavelengths.iter().zip(&self.transmission) {
            w.write_record([l.to_string(), t.to_string(), to_db(*t).to_string()])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parse the three-column CSV written by [`Spectrum::write_csv`]. The dB
    /// column is informational; the linear column is authoritative.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers().map_err(|e| Error::SpectrumParse {
            line: 1,
            message: e.to_string(),
        })?;
        if header.iter().map(str::trim).ne(CSV_HEADER) {
            return Err(Error::SpectrumParse {
                line: 1,
                message: format!("expected header {}", CSV_HEADER.join(",")),
            });
        }
        let mut wavelengths = Vec::new();
        let mut transmission = Vec::new();
        for record in r.records() {
            let record = record.map_err(|e| Error::SpectrumParse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| Error::SpectrumParse { line, message };
            if record.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", record.len())));
            }
            let field = |i: usize| {
                record[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("column {}: {e}", CSV_HEADER[i])))
            };
            let (l, t) = (field(0)?, field(1)?);
            if !(0.0..=1.0).contains(&t) {
                return Err(bad(format!("transmission {t} outside [0, 1]")));
            }
            if let Some(&prev) = wavelengths.last() {
                if l <= prev {
                    return Err(bad("wavelengths must be strictly increasing".into()));
                }
            }
            wavelengths.push(l);
            transmission.push(t);
        }
        if wavelengths.is_empty() {
            return Err(Error::SpectrumParse {
                line: 2,
                message: "no data rows".into(),
            });
        }
        Spectrum::new(wavelengths, transmission)
    }
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Laser, facet coupling and detector between the chip and the reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementChain {
    pub source_power_dbm: f64,
    /// Per facet.
    pub coupling_loss_db: f64,
    pub detector_floor_dbm: f64,
}

impl Default for MeasurementChain {
    fn default() -> Self {
        Self::ct400()
    }
}

impl MeasurementChain {
    pub fn ct400() -> Self {
        Self {
            source_power_dbm: DEFAULT_SOURCE_DBM,
            coupling_loss_db: 0.0,
            detector_floor_dbm: CT400_FLOOR_DBM,
        }
    }

    pub fn osa() -> Self {
        Self {
            detector_floor_dbm: OSA_FLOOR_DBM,
            ..Self::ct400()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.detector_floor_dbm < self.source_power_dbm, || {
            "detector floor must lie below the source power".into()
        })?;
        ensure(self.coupling_loss_db >= 0.0, || "coupling loss must be >= 0".into())?;
        ensure(
            self.detector_floor_dbm < self.source_power_dbm - 2.0 * self.coupling_loss_db,
            || "coupling loss pushes the off-chip level below the detector floor".into(),
        )
    }

    /// Power reaching the detector for unit transmission, dBm.
    pub fn launch_dbm(&self) -> f64 {
        self.source_power_dbm - 2.0 * self.coupling_loss_db
    }

    /// Largest rejection the chain can display, dB.
    pub fn dynamic_range_db(&self) -> f64 {
        self.launch_dbm() - self.detector_floor_dbm
    }
}

/// Detector readings in dBm, already clipped at the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredSpectrum {
    pub wavelengths: Vec<f64>,
    pub power_dbm: Vec<f64>,
    pub chain: MeasurementChain,
    pub metadata: SpectrumMetadata,
}

impl MeasuredSpectrum {
    /// Reading relative to the off-chip launch level, as a transmission
    /// spectrum carrying the clip floor.
    pub fn apparent_transmission(&self) -> Spectrum {
        let launch = self.chain.launch_dbm();
        let lin = |p: f64| 10f64.powf((p - launch) / 10.0).min(1.0);
        Spectrum {
            wavelengths: self.wavelengths.clone(),
            transmission: self.power_dbm.iter().map(|&p| lin(p)).collect(),
            metadata: SpectrumMetadata {
                clip_floor: Some(lin(self.chain.detector_floor_dbm)),
                ..self.metadata.clone()
            },
        }
    }
}

/// `max(source − 2·coupling + 10·log10 T, floor)` at every wavelength.
pub fn apply_measurement_chain(spectrum: &Spectrum, chain: &MeasurementChain) -> Result<MeasuredSpectrum> {
    chain.validate()?;
    let launch = chain.launch_dbm();
    let power_dbm = spectrum
        .transmission
        .iter()
        .map(|&t| (launch + to_db(t)).max(chain.detector_floor_dbm))
        .collect();
    Ok(MeasuredSpectrum {
        wavelengths: spectrum.wavelengths.clone(),
        power_dbm,
        chain: *chain,
        metadata: spectrum.metadata.clone(),
    })
}

/// Wavelength ranges (nm, inclusive) that define the off-band level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffbandWindow {
    pub ranges: Vec<(f64, f64)>,
}

impl OffbandWindow {
    /// Both sides of `center`, between `inner` and `outer` nm away.
    pub fn around(center: f64, inner: f64, outer: f64) -> Self {
        Self {
            ranges: vec![(center - outer, center - inner), (center + inner, center + outer)],
        }
    }

    /// `center ± 30–40 nm`.
    pub fn default_for(center: f64) -> Self {
        Self::around(center, 30.0, 40.0)
    }

    /// Default window pushed clear of a notch `bandwidth` nm wide: it starts
    /// at `max(30, 3·bandwidth)` nm from `center` and spans 10 nm.
    pub fn for_notch(center: f64, bandwidth: f64) -> Self {
        let inner = (3.0 * bandwidth).max(30.0);
        Self::around(center, inner, inner + 10.0)
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        let lo = self.ranges.iter().map(|r| r.0).reduce(f64::min)?;
        let hi = self.ranges.iter().map(|r| r.1).reduce(f64::max)?;
        Some((lo, hi))
    }

    pub fn contains(&self, wavelength: f64) -> bool {
        self.ranges.iter().any(|&(lo, hi)| (lo..=hi).contains(&wavelength))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub db: f64,
    pub offband_db: f64,
    pub min_db: f64,
    pub min_wavelength: f64,
    /// The minimum sits on a detector floor.
    pub clipped: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn offband_level(db: &[f64], spectrum: &Spectrum, window: &OffbandWindow) -> Result<f64> {
    let mut off: Vec<f64> = spectrum
        .wavelengths
        .iter()
        .zip(db)
        .filter(|(l, _)| window.contains(**l))
        .map(|(_, d)| *d)
        .collect();
    if off.is_empty() {
        return Err(Error::WindowOutOfRange);
    }
    Ok(median(&mut off))
}

/// Index of the lowest in-band sample.
fn inband_minimum(db: &[f64], spectrum: &Spectrum, window: &OffbandWindow) -> Result<usize> {
    spectrum
        .wavelengths
        .iter()
        .zip(db)
        .enumerate()
        .filter(|(_, (l, _))| !window.contains(**l))
        .min_by(|a, b| a.1 .1.total_cmp(b.1 .1))
        .map(|(i, _)| i)
        .ok_or(Error::WindowOutOfRange)
}

/// Off-band median level minus the deepest in-band level, in dB.
pub fn extract_rejection_db(spectrum: &Spectrum, window: &OffbandWindow) -> Result<Rejection> {
    let db = spectrum.transmission_db();
    let offband_db = offband_level(&db, spectrum, window)?;
    let i = inband_minimum(&db, spectrum, window)?;
    let min_db = db[i];
    let clipped = spectrum
        .metadata
        .clip_floor
        .is_some_and(|floor| spectrum.transmission[i] <= floor * (1.0 + 1e-9));
    Ok(Rejection {
        db: offband_db - min_db,
        offband_db,
        min_db,
        min_wavelength: spectrum.wavelengths[i],
        clipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthCriterion {
    /// Width at 3 dB below the off-band level.
    #[serde(rename = "3db")]
    ThreeDb,
    /// Distance between the transmission maxima flanking the main notch.
    NullToNull,
}

/// Notch width in nm.
pub fn extract_bandwidth_nm(
    spectrum: &Spectrum,
    criterion: BandwidthCriterion,
    window: &OffbandWindow,
) -> Result<f64> {
    let db = spectrum.transmission_db();
    let i = inband_minimum(&db, spectrum, window)?;
    let x = &spectrum.wavelengths;
    let offband = offband_level(&db, spectrum, window)?;
    let depth = offband - db[i];
    let needed = match criterion {
        BandwidthCriterion::ThreeDb => 3.0,
        BandwidthCriterion::NullToNull => 0.1,
    };
    if !(depth >= needed) {
        return Err(Error::NotchTooShallow { depth_db: depth });
    }
    match criterion {
        BandwidthCriterion::ThreeDb => {
            let level = offband - 3.0;
            let crossing = |step: isize| -> Result<f64> {
                let mut j = i as isize;
                loop {
                    let k = j + step;
                    if k < 0 || k as usize >= db.len() {
                        return Err(Error::InvalidInput("3 dB edge lies outside the grid".into()));
                    }
                    let (j_, k_) = (j as usize, k as usize);
                    if db[k_] >= level {
                        let t = (level - db[j_]) / (db[k_] - db[j_]);
                        return Ok(x[j_] + t * (x[k_] - x[j_]));
                    }
                    j = k;
                }
            };
            Ok(crossing(1)? - crossing(-1)?)
        }
        BandwidthCriterion::NullToNull => {
            let t = &spectrum.transmission;
            let edge = |step: isize| -> Result<f64> {
                let mut j = i as isize;
                loop {
                    let k = j + step;
                    if k < 0 || k as usize >= t.len() {
                        return Err(Error::InvalidInput("spectral null lies outside the grid".into()));
                    }
                    if t[k as usize] <= t[j as usize] {
                        let j = j as usize;
                        return Ok(vertex(x, t, j).unwrap_or(x[j]));
                    }
                    j = k;
                }
            };
            Ok(edge(1)? - edge(-1)?)
        }
    }
}

/// Vertex of the parabola through samples `j − 1, j, j + 1`.
fn vertex(x: &[f64], y: &[f64], j: usize) -> Option<f64> {
    if j == 0 || j + 1 >= x.len() {
        return None;
    }
    let (x0, x1, x2) = (x[j - 1], x[j], x[j + 1]);
    let (y0, y1, y2) = (y[j - 1], y[j], y[j + 1]);
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if den == 0.0 || !den.is_finite() || !num.is_finite() {
        return None;
    }
    let v = x1 - 0.5 * num / den;
    (x0..=x2).contains(&v).then_some(v)
}

/// Wavelength of minimum transmission with parabolic refinement.
pub fn extract_center_nm(spectrum: &Spectrum) -> Result<f64> {
    let db = spectrum.transmission_db();
    let (lo, hi) = db
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi - lo >= 0.1) {
        return Err(Error::NoNotchFound);
    }
    let i = db
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty spectrum");
    Ok(vertex(&spectrum.wavelengths, &db, i).unwrap_or(spectrum.wavelengths[i]))
}

/// Uniform grid `center ± half_span` with `center` on a grid point.
pub fn uniform_grid(center: f64, half_span: f64, step: f64) -> Vec<f64> {
    let n = (half_span / step).round() as i64;
    (-n..=n).map(|k| center + k as f64 * step).collect()
}

/// Grid over the span of `window`: `fine_step` within `center ± fine_half_span`
/// and `coarse_step` elsewhere.
pub fn notch_grid(
    center: f64,
    fine_half_span: f64,
    fine_step: f64,
    window: &OffbandWindow,
    coarse_step: f64,
) -> Result<Vec<f64>> {
    ensure(fine_step > 0.0 && coarse_step > 0.0, || "grid steps must be > 0".into())?;
    let (lo, hi) = window.span().ok_or(Error::WindowOutOfRange)?;
    let (lo, hi) = (lo.min(center - fine_half_span), hi.max(center + fine_half_span));
    let mut grid = uniform_grid(center, fine_half_span, fine_step);
    let (f_lo, f_hi) = (grid[0], grid[grid.len() - 1]);
    let n = ((hi - lo) / coarse_step).ceil() as usize;
    grid.extend(
        (0..=n)
            .map(|k| (lo + k as f64 * coarse_step).min(hi))
            .filter(|&l| l < f_lo - 0.5 * fine_step || l > f_hi + 0.5 * fine_step),
    );
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}
