//! Transfer-matrix propagation through perturbed gratings and cascades.
//!
//! A [`TransferMatrix`] maps `(a, b)` at the entry of an element to `(a, b)`
//! at its exit, with the same amplitude convention as [`crate::cmt`]. For a
//! uniform segment of length `ℓ`,
//!
//! ```text
//! M = [[c − iδS, −iκS],
//!      [  iκS,  c + iδS]],   c = cosh γℓ,  S = sinh(γℓ)/γ,  γ² = κ² − δ²
//! ```
//!
//! Every lossless element has the form `[[A, B], [B̄, Ā]]` with
//! `|A|² − |B|² = 1`; the hot loops carry only `(A, B)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmt::{detuning_from_index_sum, GratingSpec, ModePair};
use crate::error::{ensure, Error, Result};
use crate::modes::DispersionModel;
use crate::spectra::{Spectrum, SpectrumMetadata};

/// Default interconnect length, nm.
pub const DEFAULT_LINK_LENGTH: f64 = 20_000.0;
/// TE0 effective index of the 400 nm interconnect near 1550 nm.
pub const DEFAULT_LINK_INDEX: f64 = 2.513;

/// A piece of grating with constant coupling and index perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// nm
    pub length: f64,
    /// 1/nm
    pub local_kappa: f64,
    /// Shift of the forward-plus-backward index sum.
    pub delta_neff_perturbation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix(pub [[Complex64; 2]; 2]);

impl TransferMatrix {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        TransferMatrix([[one, zero], [zero, one]])
    }

    /// Uniform section of length `length` at detuning `delta`.
    pub fn uniform(length: f64, kappa: f64, delta: f64) -> Self {
        Lossless::uniform(length, kappa, delta).into()
    }

    /// Plain propagation through phase `phase` (a link).
    pub fn propagation(phase: f64) -> Self {
        Lossless::propagation(phase).into()
    }

    /// `self` followed by `next`, i.e. the product `next · self`.
    pub fn then(&self, next: &TransferMatrix) -> TransferMatrix {
        let (a, b) = (&next.0, &self.0);
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        TransferMatrix(out)
    }

    pub fn determinant(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Reflection and transmission amplitudes for launch from the entry side.
    pub fn scattering(&self) -> (Complex64, Complex64) {
        let m = &self.0;
        let r = -m[1][0] / m[1][1];
        let t = self.determinant() / m[1][1];
        (r, t)
    }

    pub fn transmission(&self) -> f64 {
        self.scattering().1.norm_sqr()
    }

    pub fn reflection(&self) -> f64 {
        self.scattering().0.norm_sqr()
    }
}

/// Compact `[[A, B], [B̄, Ā]]` form of a lossless element.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Lossless {
    a: Complex64,
    b: Complex64,
}

impl Lossless {
    const IDENTITY: Lossless = Lossless {
        a: Complex64::new(1.0, 0.0),
        b: Complex64::new(0.0, 0.0),
    };

    #[inline]
    fn uniform(length: f64, kappa: f64, delta: f64) -> Self {
        let g2 = kappa * kappa - delta * delta;
        let x = g2 * length * length;
        let (c, s) = if x.abs() < 1e-6 {
            (1.0 + x / 2.0 + x * x / 24.0, length * (1.0 + x / 6.0 + x * x / 120.0))
        } else if g2 > 0.0 {
            let g = g2.sqrt();
            let e = (g * length).exp();
            let inv = 1.0 / e;
            (0.5 * (e + inv), 0.5 * (e - inv) / g)
        } else {
            let q = (-g2).sqrt();
            let (sin, cos) = (q * length).sin_cos();
            (cos, sin / q)
        };
        Lossless {
            a: Complex64::new(c, -delta * s),
            b: Complex64::new(0.0, -kappa * s),
        }
    }

    #[inline]
    fn propagation(phase: f64) -> Self {
        let (sin, cos) = phase.sin_cos();
        Lossless {
            a: Complex64::new(cos, -sin),
            b: Complex64::new(0.0, 0.0),
        }
    }

    /// `self` followed by `next`.
    #[inline]
    fn then(self, next: Lossless) -> Lossless {
        Lossless {
            a: next.a * self.a + next.b * self.b.conj(),
            b: next.a * self.b + next.b * self.a.conj(),
        }
    }

    #[inline]
    fn transmission(&self) -> f64 {
        1.0 / self.a.norm_sqr()
    }

    #[inline]
    fn reflection(&self) -> f64 {
        self.b.norm_sqr() / self.a.norm_sqr()
    }
}

impl From<Lossless> for TransferMatrix {
    fn from(m: Lossless) -> Self {
        TransferMatrix([[m.a, m.b], [m.b.conj(), m.a.conj()]])
    }
}

/// How a grating is cut into piecewise-uniform segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Segmentation {
    /// One segment per grating period.
    #[default]
    PerPeriod,
    /// Whole periods per segment, as close as possible to this length (nm).
    Length(f64),
    /// A fixed number of equal segments.
    Count(usize),
}

impl Segmentation {
    pub fn count(&self, spec: &GratingSpec) -> usize {
        match *self {
            Segmentation::PerPeriod => spec.period_count(),
            Segmentation::Length(len) => {
                let periods_per_segment = (len / spec.period).round().max(1.0);
                ((spec.period_count() as f64 / periods_per_segment).round() as usize).max(1)
            }
            Segmentation::Count(n) => n.max(1),
        }
    }

    pub fn segment_length(&self, spec: &GratingSpec) -> f64 {
        spec.length / self.count(spec) as f64
    }
}

/// Matrix of one segment; `spec` supplies the grating period, order and
/// mode pair.
pub fn segment_matrix(
    segment: &Segment,
    wavelength: f64,
    spec: &GratingSpec,
    dispersion: &DispersionModel,
) -> Result<TransferMatrix> {
    ensure(segment.length > 0.0, || "segment length must be > 0".into())?;
    let sum = spec.mode_pair.index_sum(dispersion, wavelength)?;
    let delta = detuning_from_index_sum(wavelength, sum + segment.delta_neff_perturbation, spec);
    Ok(TransferMatrix::uniform(segment.length, segment.local_kappa, delta))
}

/// Ordered product of the perturbed segment matrices of one grating.
///
/// `perturbation` holds one index-sum shift per segment; an empty slice
/// means no perturbation.
pub fn grating_matrix(
    spec: &GratingSpec,
    segmentation: Segmentation,
    wavelength: f64,
    perturbation: &[f64],
    dispersion: &DispersionModel,
) -> Result<TransferMatrix> {
    spec.validate()?;
    let sum = spec.mode_pair.index_sum(dispersion, wavelength)?;
    let n = segmentation.count(spec);
    check_segments(n, perturbation)?;
    Ok(grating_lossless(spec, n, wavelength, sum, perturbation).into())
}

fn check_segments(expected: usize, perturbation: &[f64]) -> Result<()> {
    if perturbation.is_empty() || perturbation.len() == expected {
        Ok(())
    } else {
        Err(Error::SegmentationMismatch {
            expected,
            got: perturbation.len(),
        })
    }
}

#[inline]
fn grating_lossless(spec: &GratingSpec, segments: usize, wavelength: f64, index_sum: f64, perturbation: &[f64]) -> Lossless {
    let base = detuning_from_index_sum(wavelength, index_sum, spec);
    let len = spec.length / segments as f64;
    if perturbation.is_empty() {
        return Lossless::uniform(spec.length, spec.kappa, base);
    }
    let scale = PI / wavelength;
    perturbation.iter().fold(Lossless::IDENTITY, |acc, &dn| {
        acc.then(Lossless::uniform(len, spec.kappa, base + scale * dn))
    })
}

/// Composition law between cascade sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Composition {
    /// Amplitudes multiply through the links; back-reflections interfere.
    Coherent,
    /// Back-reflections are radiated in the links; powers multiply.
    Incoherent,
}

impl Composition {
    pub fn as_str(self) -> &'static str {
        match self {
            Composition::Coherent => "coherent",
            Composition::Incoherent => "incoherent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkPhaseTreatment {
    ExplicitPhase,
    Ignored,
}

/// Single-mode interconnect between two sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Link {
    /// nm
    pub length: f64,
    /// Forward power loss, dB.
    pub loss_db: f64,
    /// Effective index used to derive the link phase.
    pub n_eff: f64,
    /// Fixed phase in radians, overriding `n_eff·length`.
    pub phase: Option<f64>,
}

impl Default for Link {
    fn default() -> Self {
        Self {
            length: DEFAULT_LINK_LENGTH,
            loss_db: 0.0,
            n_eff: DEFAULT_LINK_INDEX,
            phase: None,
        }
    }
}

impl Link {
    /// Propagation phase at `wavelength` with an optional index deviation.
    pub fn phase_at(&self, wavelength: f64, index_offset: f64) -> f64 {
        match self.phase {
            Some(p) => p + 2.0 * PI * index_offset * self.length / wavelength,
            None => 2.0 * PI * (self.n_eff + index_offset) * self.length / wavelength,
        }
    }

    fn power_transmission(&self) -> f64 {
        10f64.powf(-self.loss_db / 10.0)
    }
}

/// Ordered sections, the links between them and the composition law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeSpec {
    pub sections: Vec<GratingSpec>,
    pub links: Vec<Link>,
    pub composition: Composition,
    /// Fraction of back-reflected power that survives one link pass
    /// (incoherent law only).
    #[serde(default)]
    pub leakage: f64,
}

impl CascadeSpec {
    /// `count` copies of `section` joined by default links.
    pub fn uniform(section: GratingSpec, count: usize, composition: Composition) -> Self {
        Self {
            sections: vec![section; count],
            links: vec![Link::default(); count.saturating_sub(1)],
            composition,
            leakage: 0.0,
        }
    }

    pub fn single(section: GratingSpec) -> Self {
        Self::uniform(section, 1, Composition::Incoherent)
    }

    pub fn with_composition(&self, composition: Composition) -> Self {
        Self {
            composition,
            ..self.clone()
        }
    }

    pub fn total_grating_length(&self) -> f64 {
        self.sections.iter().map(|s| s.length).sum()
    }

    pub fn link_phase_treatment(&self) -> LinkPhaseTreatment {
        match self.composition {
            Composition::Coherent => LinkPhaseTreatment::ExplicitPhase,
            Composition::Incoherent => LinkPhaseTreatment::Ignored,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(!self.sections.is_empty(), || "cascade needs at least one section".into())?;
        ensure(self.links.len() + 1 == self.sections.len(), || {
            format!(
                "cascade with {} sections needs {} links, got {}",
                self.sections.len(),
                self.sections.len() - 1,
                self.links.len()
            )
        })?;
        ensure((0.0..=1.0).contains(&self.leakage), || {
            format!("leakage must lie in [0, 1], got {}", self.leakage)
        })?;
        for link in &self.links {
            ensure(link.length >= 0.0 && link.loss_db >= 0.0, || {
                "link length and loss must be non-negative".into()
            })?;
        }
        self.sections.iter().try_for_each(GratingSpec::validate)
    }
}

/// Coherent composition at one wavelength: `(T, R)` in power.
///
/// `perturbations` holds one per-segment list per section (empty lists mean
/// unperturbed); `link_phases` one phase per link in radians.
pub fn coherent_cascade(
    cascade: &CascadeSpec,
    segmentation: Segmentation,
    wavelength: f64,
    perturbations: &[Vec<f64>],
    link_phases: &[f64],
    dispersion: &DispersionModel,
) -> Result<(f64, f64)> {
    if cascade.composition != Composition::Coherent {
        return Err(Error::CompositionMismatch(cascade.composition.as_str()));
    }
    cascade.validate()?;
    ensure(link_phases.len() == cascade.links.len(), || {
        format!("expected {} link phases, got {}", cascade.links.len(), link_phases.len())
    })?;
    let sums = IndexSums::at(cascade, dispersion, wavelength)?;
    let mut acc = Lossless::IDENTITY;
    for (i, section) in cascade.sections.iter().enumerate() {
        let pert = perturbations.get(i).map(Vec::as_slice).unwrap_or(&[]);
        let n = segmentation.count(section);
        check_segments(n, pert)?;
        if i > 0 {
            acc = acc.then(Lossless::propagation(link_phases[i - 1]));
        }
        acc = acc.then(grating_lossless(section, n, wavelength, sums.get(section.mode_pair), pert));
    }
    Ok((acc.transmission(), acc.reflection()))
}

/// Product of section power transmissions.
pub fn incoherent_cascade(section_transmissions: &[f64]) -> Result<f64> {
    for &t in section_transmissions {
        ensure((0.0..=1.0).contains(&t), || format!("power transmission {t} outside [0, 1]"))?;
    }
    Ok(section_transmissions.iter().product())
}

/// Incoherent chain with link losses and partial survival of back-reflected
/// power. Each entry of `sections` is `(T, R)`; returns `(T, R)` of the whole.
///
/// With zero leakage and lossless links this reduces to
/// [`incoherent_cascade`].
pub fn incoherent_chain(sections: &[(f64, f64)], links: &[Link], leakage: f64) -> Result<(f64, f64)> {
    ensure(!sections.is_empty(), || "no sections".into())?;
    ensure(links.len() + 1 == sections.len(), || "link count must be sections − 1".into())?;
    let (mut t, mut r_left) = sections[0];
    let mut r_right = r_left;
    for ((tb, rb), link) in sections[1..].iter().zip(links) {
        let eta = link.power_transmission();
        let round_trip = eta * eta * leakage * rb * r_right;
        let gain = 1.0 / (1.0 - round_trip);
        let t_new = t * eta * tb * gain;
        r_left += t * t * eta * eta * leakage * rb * gain;
        r_right = rb + tb * tb * eta * eta * leakage * r_right * gain;
        t = t_new;
    }
    Ok((t, r_left))
}

/// Index sums of the mode pairs a cascade needs, at one wavelength.
#[derive(Debug, Clone, Copy)]
struct IndexSums {
    fundamental: f64,
    hybrid: f64,
}

impl IndexSums {
    fn at(cascade: &CascadeSpec, dispersion: &DispersionModel, wavelength: f64) -> Result<Self> {
        let needs = |pair| cascade.sections.iter().any(|s| s.mode_pair == pair);
        Ok(IndexSums {
            fundamental: if needs(ModePair::Fundamental) {
                ModePair::Fundamental.index_sum(dispersion, wavelength)?
            } else {
                f64::NAN
            },
            hybrid: if needs(ModePair::Hybrid) {
                ModePair::Hybrid.index_sum(dispersion, wavelength)?
            } else {
                f64::NAN
            },
        })
    }

    fn get(&self, pair: ModePair) -> f64 {
        match pair {
            ModePair::Fundamental => self.fundamental,
            ModePair::Hybrid => self.hybrid,
        }
    }
}

/// One sampled set of fabrication perturbations for a cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Realization {
    pub trial: u64,
    /// Per section, one index-sum shift per segment.
    pub sections: Vec<Vec<f64>>,
    /// Per link, the effective-index deviation of the interconnect.
    pub links: Vec<f64>,
}

/// Wavelength grid with the dispersion already evaluated.
#[derive(Debug, Clone)]
pub struct PreparedGrid {
    wavelengths: Vec<f64>,
    sums: Vec<IndexSums>,
}

impl PreparedGrid {
    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }
}

/// Dispersion and segmentation shared by every spectrum of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    pub dispersion: DispersionModel,
    pub segmentation: Segmentation,
}

impl Simulator {
    pub fn new(dispersion: DispersionModel, segmentation: Segmentation) -> Self {
        Self {
            dispersion,
            segmentation,
        }
    }

    /// Evaluate the dispersion of `cascade` on `grid` once.
    pub fn prepare(&self, cascade: &CascadeSpec, grid: &[f64]) -> Result<PreparedGrid> {
        ensure(!grid.is_empty(), || "wavelength grid is empty".into())?;
        ensure(grid.windows(2).all(|w| w[1] > w[0]), || {
            "wavelength grid must be strictly increasing".into()
        })?;
        let sums = grid
            .par_iter()
            .map(|&l| IndexSums::at(cascade, &self.dispersion, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedGrid {
            wavelengths: grid.to_vec(),
            sums,
        })
    }

    /// Spectrum of `cascade` on `grid`, optionally under a realization.
    pub fn cascade_spectrum(
        &self,
        cascade: &CascadeSpec,
        grid: &[f64],
        realization: Option<&Realization>,
    ) -> Result<Spectrum> {
        let prepared = self.prepare(cascade, grid)?;
        self.spectrum_on(cascade, &prepared, realization)
    }

    /// As [`Self::cascade_spectrum`] on a grid from [`Self::prepare`].
    pub fn spectrum_on(
        &self,
        cascade: &CascadeSpec,
        prepared: &PreparedGrid,
        realization: Option<&Realization>,
    ) -> Result<Spectrum> {
        cascade.validate()?;
        let counts: Vec<usize> = cascade.sections.iter().map(|s| self.segmentation.count(s)).collect();
        let empty = Realization::default();
        let real = realization.unwrap_or(&empty);
        let pert = |i: usize| real.sections.get(i).map(Vec::as_slice).unwrap_or(&[]);
        for (i, &n) in counts.iter().enumerate() {
            check_segments(n, pert(i))?;
        }
        let link_offset = |i: usize| real.links.get(i).copied().unwrap_or(0.0);

        let transmission: Vec<f64> = prepared
            .wavelengths
            .par_iter()
            .zip(prepared.sums.par_iter())
            .map(|(&l, sums)| {
                let section = |i: usize| {
                    let s = &cascade.sections[i];
                    grating_lossless(s, counts[i], l, sums.get(s.mode_pair), pert(i))
                };
                match cascade.composition {
                    Composition::Coherent => {
                        let mut acc = section(0);
                        for (i, link) in cascade.links.iter().enumerate() {
                            acc = acc.then(Lossless::propagation(link.phase_at(l, link_offset(i))));
                            acc = acc.then(section(i + 1));
                        }
                        acc.transmission()
                    }
                    Composition::Incoherent => {
                        let parts: Vec<(f64, f64)> = (0..cascade.sections.len())
                            .map(|i| {
                                let m = section(i);
                                (m.transmission(), m.reflection())
                            })
                            .collect();
                        let (t, _) = incoherent_chain(&parts, &cascade.links, cascade.leakage)
                            .expect("validated cascade");
                        t
                    }
                }
            })
            .collect();

        Ok(Spectrum {
            wavelengths: prepared.wavelengths.clone(),
            transmission: transmission.into_iter().map(|t| t.clamp(0.0, 1.0)).collect(),
            metadata: SpectrumMetadata {
                composition: Some(cascade.composition),
                realization: realization.map(|r| r.trial),
                cascade_hash: Some(cascade_hash(cascade)),
                clip_floor: None,
            },
        })
    }
}

/// Stable FNV-1a digest of the cascade description.
pub fn cascade_hash(cascade: &CascadeSpec) -> String {
    let text = serde_json::to_string(cascade).expect("cascade serializes");
    let hash = text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    });
    format!("{hash:016x}")
}
