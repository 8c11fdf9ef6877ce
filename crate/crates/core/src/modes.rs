//! Guided TE modes of slab and channel waveguides.
//!
//! Slab modes come from the asymmetric three-layer TE dispersion relation
//!
//! ```text
//! kx·d = m·π + atan(γa/kx) + atan(γb/kx)
//! kx = k0·sqrt(n_core² − n²),  γ = k0·sqrt(n² − n_clad²)
//! ```
//!
//! Channel waveguides use the effective-index method: the vertical slab is
//! solved first and its index becomes the core of a lateral slab bounded by
//! the side cladding. A lateral solution whose index falls below any of the
//! cladding indices would leak into that cladding (the buried oxide in
//! practice), so it is reported as unguided.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Crystalline silicon near 1550 nm.
pub const N_SILICON: f64 = 3.476;
/// Thermal oxide near 1550 nm.
pub const N_SILICA: f64 = 1.444;
pub const N_AIR: f64 = 1.0;

/// Number of uniform samples used to bracket a slab root.
pub const SCAN_POINTS: usize = 2000;
const ROOT_TOLERANCE: f64 = 1e-13;

/// Default wavelength step (nm) for the group-index central difference.
pub const GROUP_INDEX_STEP: f64 = 0.1;
/// Default width step (nm) for the width sensitivity.
pub const WIDTH_STEP: f64 = 1.0;

/// Rectangular channel waveguide cross-section. Lengths in nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveguideGeometry {
    pub core_thickness: f64,
    pub core_width: f64,
    pub n_core: f64,
    pub n_top: f64,
    pub n_bottom: f64,
    pub n_side: f64,
}

impl Default for WaveguideGeometry {
    /// 220 nm silicon on oxide, air above and beside, 1150 nm wide.
    fn default() -> Self {
        Self {
            core_thickness: 220.0,
            core_width: 1150.0,
            n_core: N_SILICON,
            n_top: N_AIR,
            n_bottom: N_SILICA,
            n_side: N_AIR,
        }
    }
}

impl WaveguideGeometry {
    pub fn with_width(self, core_width: f64) -> Self {
        Self { core_width, ..self }
    }

    pub fn with_thickness(self, core_thickness: f64) -> Self {
        Self {
            core_thickness,
            ..self
        }
    }

    /// Highest cladding index; guided modes must lie above it.
    pub fn max_cladding_index(&self) -> f64 {
        self.n_top.max(self.n_bottom).max(self.n_side)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.core_thickness > 0.0 && self.core_thickness.is_finite(), || {
            format!("core_thickness must be > 0, got {}", self.core_thickness)
        })?;
        ensure(self.core_width > 0.0 && self.core_width.is_finite(), || {
            format!("core_width must be > 0, got {}", self.core_width)
        })?;
        ensure(self.n_core > self.max_cladding_index(), || {
            format!(
                "n_core ({}) must exceed every cladding index (max {})",
                self.n_core,
                self.max_cladding_index()
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Polarization {
    Te,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSolution {
    pub n_eff: f64,
    pub mode_order: usize,
    /// nm
    pub wavelength: f64,
    pub polarization: Polarization,
}

/// Transverse phase mismatch of the TE slab dispersion relation, in radians.
///
/// Zero at a guided mode of the given order; strictly decreasing in `n_eff`
/// on `(max(n_a, n_b), n_core)`.
pub fn slab_te_residual(
    n_core: f64,
    n_a: f64,
    n_b: f64,
    thickness: f64,
    wavelength: f64,
    order: usize,
    n_eff: f64,
) -> f64 {
    let k0 = 2.0 * std::f64::consts::PI / wavelength;
    let n2 = n_eff * n_eff;
    let kx = k0 * (n_core * n_core - n2).max(0.0).sqrt();
    let gamma_a = k0 * (n2 - n_a * n_a).max(0.0).sqrt();
    let gamma_b = k0 * (n2 - n_b * n_b).max(0.0).sqrt();
    kx * thickness
        - gamma_a.atan2(kx)
        - gamma_b.atan2(kx)
        - order as f64 * std::f64::consts::PI
}

/// Solve a three-layer slab for the TE mode of the given order.
///
/// The root is bracketed by a uniform scan of [`SCAN_POINTS`] samples over
/// the guided range and refined by bisection.
pub fn solve_slab_te(
    n_core: f64,
    n_clad_a: f64,
    n_clad_b: f64,
    thickness: f64,
    wavelength: f64,
    mode_order: usize,
) -> Result<ModeSolution> {
    ensure(thickness > 0.0 && thickness.is_finite(), || {
        format!("slab thickness must be > 0, got {thickness}")
    })?;
    ensure(wavelength > 0.0 && wavelength.is_finite(), || {
        format!("wavelength must be > 0, got {wavelength}")
    })?;
    let lo = n_clad_a.max(n_clad_b);
    ensure(n_core > lo, || {
        format!("n_core ({n_core}) must exceed cladding indices ({n_clad_a}, {n_clad_b})")
    })?;

    let f = |n: f64| slab_te_residual(n_core, n_clad_a, n_clad_b, thickness, wavelength, mode_order, n);
    let step = (n_core - lo) / SCAN_POINTS as f64;
    let mut bracket = None;
    let mut prev = (lo, f(lo));
    for i in 1..=SCAN_POINTS {
        let n = if i == SCAN_POINTS { n_core } else { lo + step * i as f64 };
        let cur = (n, f(n));
        if prev.1 > 0.0 && cur.1 <= 0.0 {
            bracket = Some((prev.0, cur.0));
            break;
        }
        prev = cur;
    }
    let (mut a, mut b) = bracket.ok_or(Error::NoGuidedMode {
        order: mode_order,
        wavelength,
        reason: "below cutoff",
    })?;

    while b - a > ROOT_TOLERANCE {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if f(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(ModeSolution {
        n_eff: 0.5 * (a + b),
        mode_order,
        wavelength,
        polarization: Polarization::Te,
    })
}

/// Effective index of lateral mode TE`mode_order` by the effective-index
/// method.
pub fn effective_index_2d(
    geometry: &WaveguideGeometry,
    wavelength: f64,
    mode_order: usize,
) -> Result<ModeSolution> {
    geometry.validate()?;
    let vertical = solve_slab_te(
        geometry.n_core,
        geometry.n_top,
        geometry.n_bottom,
        geometry.core_thickness,
        wavelength,
        0,
    )?;
    if vertical.n_eff <= geometry.n_side {
        return Err(Error::NoGuidedMode {
            order: mode_order,
            wavelength,
            reason: "vertical slab index below side cladding",
        });
    }
    let lateral = solve_slab_te(
        vertical.n_eff,
        geometry.n_side,
        geometry.n_side,
        geometry.core_width,
        wavelength,
        mode_order,
    )?;
    if lateral.n_eff <= geometry.max_cladding_index() {
        return Err(Error::NoGuidedMode {
            order: mode_order,
            wavelength,
            reason: "leaks into cladding",
        });
    }
    Ok(lateral)
}

/// Rule mapping `(wavelength, mode_order)` to an effective index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DispersionModel {
    /// Wavelength-independent index per mode order.
    Constant { n_eff: Vec<f64> },
    /// Piecewise-linear table; `n_eff[order][i]` at `wavelengths[i]`.
    Table {
        wavelengths: Vec<f64>,
        n_eff: Vec<Vec<f64>>,
    },
    /// Effective-index method on a channel geometry.
    Geometry { geometry: WaveguideGeometry },
    /// Another model with every index raised by `delta`.
    Offset {
        base: Box<DispersionModel>,
        delta: f64,
    },
}

impl DispersionModel {
    pub fn constant(n_eff: &[f64]) -> Self {
        DispersionModel::Constant {
            n_eff: n_eff.to_vec(),
        }
    }

    pub fn geometry(geometry: WaveguideGeometry) -> Self {
        DispersionModel::Geometry { geometry }
    }

    pub fn offset(self, delta: f64) -> Self {
        DispersionModel::Offset {
            base: Box::new(self),
            delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DispersionModel::Constant { n_eff } => {
                ensure(!n_eff.is_empty(), || "constant dispersion needs at least one index".into())?;
                ensure(n_eff.iter().all(|n| *n > 0.0 && n.is_finite()), || {
                    "constant indices must be positive".into()
                })
            }
            DispersionModel::Table { wavelengths, n_eff } => {
                ensure(wavelengths.len() >= 2, || "dispersion table needs two wavelengths".into())?;
                ensure(wavelengths.windows(2).all(|w| w[1] > w[0]), || {
                    "dispersion table wavelengths must increase".into()
                })?;
                ensure(!n_eff.is_empty(), || "dispersion table has no modes".into())?;
                ensure(n_eff.iter().all(|row| row.len() == wavelengths.len()), || {
                    "every dispersion table row must match the wavelength count".into()
                })
            }
            DispersionModel::Geometry { geometry } => geometry.validate(),
            DispersionModel::Offset { base, delta } => {
                ensure(delta.is_finite(), || "index offset must be finite".into())?;
                base.validate()
            }
        }
    }

    pub fn n_eff(&self, wavelength: f64, mode_order: usize) -> Result<f64> {
        match self {
            DispersionModel::Constant { n_eff } => n_eff.get(mode_order).copied().ok_or(Error::NoGuidedMode {
                order: mode_order,
                wavelength,
                reason: "order not tabulated",
            }),
            DispersionModel::Table { wavelengths, n_eff } => {
                let row = n_eff.get(mode_order).ok_or(Error::NoGuidedMode {
                    order: mode_order,
                    wavelength,
                    reason: "order not tabulated",
                })?;
                interpolate(wavelengths, row, wavelength)
            }
            DispersionModel::Geometry { geometry } => {
                effective_index_2d(geometry, wavelength, mode_order).map(|m| m.n_eff)
            }
            DispersionModel::Offset { base, delta } => Ok(base.n_eff(wavelength, mode_order)? + delta),
        }
    }

    /// Sample this model into a table over `wavelengths` for the given orders.
    pub fn tabulate(&self, wavelengths: &[f64], orders: usize) -> Result<DispersionModel> {
        let n_eff = (0..orders)
            .map(|order| wavelengths.iter().map(|&l| self.n_eff(l, order)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(DispersionModel::Table {
            wavelengths: wavelengths.to_vec(),
            n_eff,
        })
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Result<f64> {
    let (first, last) = (xs[0], xs[xs.len() - 1]);
    if !(first..=last).contains(&x) {
        return Err(Error::InvalidInput(format!(
            "wavelength {x} nm outside dispersion table [{first}, {last}]"
        )));
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    Ok(ys[i - 1] + t * (ys[i] - ys[i - 1]))
}

/// Group index `n_g = n − λ·dn/dλ` by central difference with the default step.
pub fn group_index(dispersion: &DispersionModel, wavelength: f64, mode_order: usize) -> Result<f64> {
    group_index_with_step(dispersion, wavelength, mode_order, GROUP_INDEX_STEP)
}

pub fn group_index_with_step(
    dispersion: &DispersionModel,
    wavelength: f64,
    mode_order: usize,
    step: f64,
) -> Result<f64> {
    ensure(step > 0.0 && step < wavelength, || format!("invalid step {step}"))?;
    let n = dispersion.n_eff(wavelength, mode_order)?;
    let up = dispersion.n_eff(wavelength + step, mode_order)?;
    let down = dispersion.n_eff(wavelength - step, mode_order)?;
    Ok(n - wavelength * (up - down) / (2.0 * step))
}

/// Width sensitivity `dn_eff/dW` in 1/nm, central difference with a 1 nm step.
pub fn dneff_dwidth(geometry: &WaveguideGeometry, wavelength: f64, mode_order: usize) -> Result<f64> {
    let h = WIDTH_STEP;
    ensure(geometry.core_width > h, || "core_width too small for the width step".into())?;
    let wide = effective_index_2d(&geometry.with_width(geometry.core_width + h), wavelength, mode_order)?;
    let narrow = effective_index_2d(&geometry.with_width(geometry.core_width - h), wavelength, mode_order)?;
    Ok((wide.n_eff - narrow.n_eff) / (2.0 * h))
}
