//! Closed-form coupled-mode results for a uniform grating section.
//!
//! Conventions: lengths in nm, `kappa` and detuning in 1/nm. The forward
//! amplitude `a` and backward amplitude `b` obey
//!
//! ```text
//! da/dz = −i·δ·a − i·κ·b
//! db/dz =  i·κ·a + i·δ·b
//! ```
//!
//! which gives, with `γ² = κ² − δ²` and launch from `z = 0`,
//!
//! ```text
//! t = γ / (γ·cosh γL + i·δ·sinh γL)
//! r = −i·κ·sinh γL / (γ·cosh γL + i·δ·sinh γL)
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::modes::{effective_index_2d, group_index, DispersionModel, WaveguideGeometry};

/// Default search window for the phase-matching root, nm.
pub const BRAGG_WINDOW: (f64, f64) = (1200.0, 1700.0);
const BRAGG_SCAN_POINTS: usize = 500;

/// Which pair of modes the grating couples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModePair {
    /// TE0 forward to TE0 backward.
    Fundamental,
    /// TE0 forward to TE1 backward.
    Hybrid,
}

impl ModePair {
    /// Lateral orders of the forward and backward modes.
    pub fn orders(self) -> (usize, usize) {
        match self {
            ModePair::Fundamental => (0, 0),
            ModePair::Hybrid => (0, 1),
        }
    }

    /// Sum of forward and backward effective indices at `wavelength`.
    pub fn index_sum(self, dispersion: &DispersionModel, wavelength: f64) -> Result<f64> {
        let (a, b) = self.orders();
        let na = dispersion.n_eff(wavelength, a)?;
        let nb = if a == b { na } else { dispersion.n_eff(wavelength, b)? };
        Ok(na + nb)
    }
}

/// One uniform Bragg grating section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GratingSpec {
    /// nm
    pub period: f64,
    /// Teeth fraction of the period.
    pub duty_cycle: f64,
    /// nm
    pub length: f64,
    /// 1/nm
    pub kappa: f64,
    pub bragg_order: u32,
    pub mode_pair: ModePair,
    /// nm
    pub avg_width: f64,
    /// nm
    pub corrugation: f64,
}

impl Default for GratingSpec {
    /// Shifted-teeth hybrid grating: 290 nm period, 50 % duty, 1150 nm
    /// average width, 50 nm corrugation, one 250 µm section.
    fn default() -> Self {
        Self {
            period: 290.0,
            duty_cycle: 0.5,
            length: 250_000.0,
            kappa: DEFAULT_KAPPA,
            bragg_order: 1,
            mode_pair: ModePair::Hybrid,
            avg_width: 1150.0,
            corrugation: 50.0,
        }
    }
}

/// Default coupling coefficient, 1/nm (0.02 /µm).
pub const DEFAULT_KAPPA: f64 = 2.0e-5;

impl GratingSpec {
    pub fn with_length(self, length: f64) -> Self {
        Self { length, ..self }
    }

    pub fn with_kappa(self, kappa: f64) -> Self {
        Self { kappa, ..self }
    }

    pub fn teeth_length(&self) -> f64 {
        self.duty_cycle * self.period
    }

    pub fn gap_length(&self) -> f64 {
        self.period - self.teeth_length()
    }

    /// Number of whole periods, at least one.
    pub fn period_count(&self) -> usize {
        ((self.length / self.period).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.period > 0.0 && self.period.is_finite(), || {
            format!("period must be > 0, got {}", self.period)
        })?;
        ensure(self.duty_cycle > 0.0 && self.duty_cycle < 1.0, || {
            format!("duty_cycle must lie in (0, 1), got {}", self.duty_cycle)
        })?;
        ensure(self.length >= self.period && self.length.is_finite(), || {
            format!("length ({}) must be at least one period ({})", self.length, self.period)
        })?;
        ensure(self.kappa >= 0.0 && self.kappa.is_finite(), || {
            format!("kappa must be >= 0, got {}", self.kappa)
        })?;
        ensure(self.bragg_order >= 1, || "bragg_order must be >= 1".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BraggSolution {
    /// nm
    pub lambda0: f64,
    /// Forward-mode index at `lambda0`.
    pub n1: f64,
    /// Backward-mode index at `lambda0`.
    pub n2: f64,
    /// Phase-matching residual at `lambda0`, nm.
    pub residual: f64,
    pub window: (f64, f64),
}

/// `Λ·(n1 + n2)/p − λ`; zero at the Bragg wavelength.
pub fn phase_matching_residual(spec: &GratingSpec, dispersion: &DispersionModel, wavelength: f64) -> Result<f64> {
    let sum = spec.mode_pair.index_sum(dispersion, wavelength)?;
    Ok(spec.period * sum / spec.bragg_order as f64 - wavelength)
}

/// Self-consistent Bragg wavelength in the default window.
pub fn bragg_wavelength(spec: &GratingSpec, dispersion: &DispersionModel) -> Result<BraggSolution> {
    bragg_wavelength_in(spec, dispersion, BRAGG_WINDOW)
}

pub fn bragg_wavelength_in(
    spec: &GratingSpec,
    dispersion: &DispersionModel,
    window: (f64, f64),
) -> Result<BraggSolution> {
    spec.validate()?;
    let (lo, hi) = window;
    ensure(lo > 0.0 && hi > lo, || format!("invalid window [{lo}, {hi}]"))?;
    let f = |l: f64| phase_matching_residual(spec, dispersion, l);

    let step = (hi - lo) / BRAGG_SCAN_POINTS as f64;
    let mut prev = (lo, f(lo)?);
    let mut bracket = None;
    for i in 1..=BRAGG_SCAN_POINTS {
        let l = if i == BRAGG_SCAN_POINTS { hi } else { lo + step * i as f64 };
        let cur = (l, f(l)?);
        if prev.1 == 0.0 {
            bracket = Some((prev.0, prev.0));
            break;
        }
        if prev.1.signum() != cur.1.signum() {
            bracket = Some((prev.0, cur.0));
            break;
        }
        prev = cur;
    }
    let (mut a, mut b) = bracket.ok_or(Error::NoResonanceInWindow { lo, hi })?;
    let mut fa = f(a)?;
    while b - a > 1e-12 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            a = mid;
            b = mid;
            break;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    let lambda0 = 0.5 * (a + b);
    let (o1, o2) = spec.mode_pair.orders();
    Ok(BraggSolution {
        lambda0,
        n1: dispersion.n_eff(lambda0, o1)?,
        n2: dispersion.n_eff(lambda0, o2)?,
        residual: f(lambda0)?,
        window,
    })
}

/// Peak rejection `−10·log10(1 − tanh²(κL))` in dB.
pub fn peak_rejection_db(kappa: f64, length: f64) -> f64 {
    // 1 − tanh² = 1/cosh², so the rejection is 20·log10(cosh κL).
    let x = (kappa * length).abs();
    20.0 * (x / std::f64::consts::LN_10 + ((1.0 + (-2.0 * x).exp()) / 2.0).log10())
}

/// Coupling-length product `κL` that yields `rejection_db` at resonance.
pub fn kappa_length_for_rejection(rejection_db: f64) -> f64 {
    10f64.powf(rejection_db.max(0.0) / 20.0).acosh()
}

/// Null-to-null bandwidth `λ0²/(π·n_g)·sqrt(κ² + π²/L²)` in nm.
pub fn bandwidth_nm(lambda0: f64, group_index: f64, kappa: f64, length: f64) -> f64 {
    lambda0 * lambda0 / (PI * group_index) * (kappa * kappa + PI * PI / (length * length)).sqrt()
}

/// Inverse of [`bandwidth_nm`] for the coupling coefficient.
pub fn kappa_from_bandwidth(delta_lambda: f64, lambda0: f64, group_index: f64, length: f64) -> Result<f64> {
    let scaled = delta_lambda * PI * group_index / (lambda0 * lambda0);
    let limit = PI / length;
    let k2 = scaled * scaled - limit * limit;
    if k2 < -1e-12 * limit * limit || !k2.is_finite() {
        return Err(Error::BandwidthBelowLengthLimit {
            bandwidth: delta_lambda,
            limit: lambda0 * lambda0 / (group_index * length),
        });
    }
    Ok(k2.max(0.0).sqrt())
}

/// Rough first-order estimate `κ ≈ 2·Δn·sin(π·D)/λ0` for a rectangular
/// corrugation whose wide and narrow parts differ in index by `delta_n`.
///
/// Only a starting point: the shifted-teeth hybrid coupling depends on
/// modal overlaps this estimate ignores.
pub fn kappa_perturbative(lambda0: f64, delta_n: f64, duty_cycle: f64) -> f64 {
    2.0 * delta_n.abs() * (PI * duty_cycle).sin() / lambda0
}

/// [`kappa_perturbative`] with `Δn` taken from the fundamental-mode index of
/// the wide and narrow grating widths.
pub fn kappa_perturbative_from_geometry(
    geometry: &WaveguideGeometry,
    spec: &GratingSpec,
    lambda0: f64,
) -> Result<f64> {
    let half = 0.5 * spec.corrugation;
    let wide = effective_index_2d(&geometry.with_width(spec.avg_width + half), lambda0, 0)?;
    let narrow = effective_index_2d(&geometry.with_width(spec.avg_width - half), lambda0, 0)?;
    Ok(kappa_perturbative(lambda0, wide.n_eff - narrow.n_eff, spec.duty_cycle))
}

/// Detuning `π·(n1 + n2)/λ − π·p/Λ` in 1/nm.
pub fn detuning(wavelength: f64, spec: &GratingSpec, dispersion: &DispersionModel) -> Result<f64> {
    let sum = spec.mode_pair.index_sum(dispersion, wavelength)?;
    Ok(detuning_from_index_sum(wavelength, sum, spec))
}

pub(crate) fn detuning_from_index_sum(wavelength: f64, index_sum: f64, spec: &GratingSpec) -> f64 {
    PI * index_sum / wavelength - PI * spec.bragg_order as f64 / spec.period
}

/// Reflection and transmission amplitudes of a uniform grating at detuning `delta`.
pub fn uniform_grating_response(spec: &GratingSpec, delta: f64) -> (Complex64, Complex64) {
    let kappa = spec.kappa;
    let length = spec.length;
    let gamma = Complex64::new(kappa * kappa - delta * delta, 0.0).sqrt();
    let gl = gamma * length;
    // cosh(γL) and sinh(γL)/γ, with the series form near γ = 0.
    let (cosh, sinh_over_gamma) = if gl.norm() < 1e-3 {
        let g2 = gl * gl;
        (
            1.0 + g2 / 2.0 + g2 * g2 / 24.0,
            length * (1.0 + g2 / 6.0 + g2 * g2 / 120.0),
        )
    } else {
        (gl.cosh(), gl.sinh() / gamma)
    };
    let i = Complex64::i();
    let denom = cosh + i * delta * sinh_over_gamma;
    let t = 1.0 / denom;
    let r = -i * kappa * sinh_over_gamma / denom;
    (r, t)
}

/// Group index seen by the detuning: the mean of the two modes' group indices.
pub fn pair_group_index(pair: ModePair, dispersion: &DispersionModel, wavelength: f64) -> Result<f64> {
    let (a, b) = pair.orders();
    let ga = group_index(dispersion, wavelength, a)?;
    let gb = if a == b { ga } else { group_index(dispersion, wavelength, b)? };
    Ok(0.5 * (ga + gb))
}

/// Closed-form resonance, bandwidth and depth of one section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NotchEstimate {
    pub lambda0: f64,
    pub group_index: f64,
    /// Null-to-null, nm.
    pub bandwidth_nm: f64,
    pub rejection_db: f64,
}

pub fn notch_estimate(spec: &GratingSpec, dispersion: &DispersionModel) -> Result<NotchEstimate> {
    let lambda0 = bragg_wavelength(spec, dispersion)?.lambda0;
    let group_index = pair_group_index(spec.mode_pair, dispersion, lambda0)?;
    Ok(NotchEstimate {
        lambda0,
        group_index,
        bandwidth_nm: bandwidth_nm(lambda0, group_index, spec.kappa, spec.length),
        rejection_db: peak_rejection_db(spec.kappa, spec.length),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant_hybrid() -> (GratingSpec, DispersionModel) {
        (GratingSpec::default(), DispersionModel::constant(&[2.75, 2.55]))
    }

    #[test]
    fn fundamental_constant_dispersion() {
        let spec = GratingSpec {
            mode_pair: ModePair::Fundamental,
            ..GratingSpec::default()
        };
        let sol = bragg_wavelength(&spec, &DispersionModel::constant(&[2.672])).unwrap();
        assert_relative_eq!(sol.lambda0, 2.0 * 290.0 * 2.672, epsilon = 1e-9);
        assert!(sol.residual.abs() < 1e-9);
    }

    #[test]
    fn hybrid_constant_dispersion() {
        let (spec, disp) = constant_hybrid();
        let sol = bragg_wavelength(&spec, &disp).unwrap();
        assert_relative_eq!(sol.lambda0, 1537.0, epsilon = 1e-9);
        assert_eq!((sol.n1, sol.n2), (2.75, 2.55));
    }

    #[test]
    fn no_resonance_outside_window() {
        let (spec, disp) = constant_hybrid();
        assert!(matches!(
            bragg_wavelength_in(&spec, &disp, (1600.0, 1700.0)),
            Err(Error::NoResonanceInWindow { .. })
        ));
    }

    #[test]
    fn peak_rejection_values() {
        assert_eq!(peak_rejection_db(0.0, 1000.0), 0.0);
        let r = (2.0f64).tanh().powi(2);
        assert_relative_eq!(peak_rejection_db(1e-3, 2000.0), -10.0 * (1.0 - r).log10(), epsilon = 1e-12);
        assert!((peak_rejection_db(1e-3, 2000.0) - 11.50).abs() < 0.01);
        // Large κL stays finite.
        assert!(peak_rejection_db(1.0, 1000.0).is_finite());
    }

    #[test]
    fn forty_db_needs_kappa_length_of_about_5_3() {
        let x = kappa_length_for_rejection(40.0);
        assert_relative_eq!(x, (1.0 - 1e-4f64).sqrt().atanh(), epsilon = 1e-9);
        assert!((x - 5.30).abs() < 0.005);
        assert_relative_eq!(peak_rejection_db(x, 1.0), 40.0, epsilon = 1e-9);
    }

    #[test]
    fn bandwidth_limits() {
        let (l0, ng) = (1550.0, 4.0);
        let huge = 1e12;
        assert_relative_eq!(
            bandwidth_nm(l0, ng, 2e-4, huge),
            l0 * l0 * 2e-4 / (PI * ng),
            max_relative = 1e-9
        );
        assert_relative_eq!(bandwidth_nm(l0, ng, 0.0, 50_000.0), l0 * l0 / (ng * 50_000.0), max_relative = 1e-12);
    }

    #[test]
    fn kappa_from_bandwidth_round_trip_and_errors() {
        let (l0, ng, len) = (1550.0, 4.0, 50_000.0);
        let bw = bandwidth_nm(l0, ng, 2e-4, len);
        assert_relative_eq!(kappa_from_bandwidth(bw, l0, ng, len).unwrap(), 2e-4, max_relative = 1e-12);
        let edge = l0 * l0 / (ng * len);
        assert_eq!(kappa_from_bandwidth(edge, l0, ng, len).unwrap(), 0.0);
        assert!(matches!(
            kappa_from_bandwidth(0.9 * edge, l0, ng, len),
            Err(Error::BandwidthBelowLengthLimit { .. })
        ));
    }

    #[test]
    fn response_special_cases() {
        let spec = GratingSpec::default().with_kappa(4e-5).with_length(50_000.0);
        let (r, _) = uniform_grating_response(&spec, 0.0);
        assert_relative_eq!(r.norm_sqr(), (spec.kappa * spec.length).tanh().powi(2), epsilon = 1e-14);

        let (r, t) = uniform_grating_response(&spec.with_kappa(0.0), 3e-5);
        assert_eq!(r.norm(), 0.0);
        assert_relative_eq!(t.norm(), 1.0, epsilon = 1e-14);

        let null = (spec.kappa.powi(2) + (PI / spec.length).powi(2)).sqrt();
        for d in [null, -null] {
            let (r, _) = uniform_grating_response(&spec, d);
            assert!(r.norm_sqr() < 1e-20, "{}", r.norm_sqr());
        }
    }

    #[test]
    fn response_continuous_across_band_edge() {
        let spec = GratingSpec::default().with_kappa(4e-5).with_length(50_000.0);
        let (a, _) = uniform_grating_response(&spec, spec.kappa * (1.0 - 1e-9));
        let (b, _) = uniform_grating_response(&spec, spec.kappa * (1.0 + 1e-9));
        let (c, _) = uniform_grating_response(&spec, spec.kappa);
        assert!((a - b).norm() < 1e-8);
        assert!((a - c).norm() < 1e-8);
    }

    #[test]
    fn detuning_sign_and_zero() {
        let (spec, disp) = constant_hybrid();
        assert!(detuning(1537.0, &spec, &disp).unwrap().abs() < 1e-15);
        assert!(detuning(1538.0, &spec, &disp).unwrap() < 0.0);
    }

    #[test]
    fn grating_spec_validation() {
        let spec = GratingSpec::default();
        assert_eq!(spec.teeth_length(), 145.0);
        assert_eq!(spec.gap_length(), 145.0);
        assert!(spec.validate().is_ok());
        assert!(spec.with_length(100.0).validate().is_err());
        assert!(spec.with_kappa(-1.0).validate().is_err());
        assert!(GratingSpec { duty_cycle: 1.0, ..spec }.validate().is_err());
    }
}
