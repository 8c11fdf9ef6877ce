//! Choose section coupling, length and count for a rejection and bandwidth target.

use serde::{Deserialize, Serialize};

use crate::cmt::{bandwidth_nm, peak_rejection_db, GratingSpec};
use crate::error::{ensure, Error, Result};
use crate::fabnoise::{MonteCarlo, NoiseModel};
use crate::modes::DispersionModel;
use crate::tmm::{CascadeSpec, Composition};

/// Longest section considered when the target sets no length limit, nm.
pub const DEFAULT_MAX_SECTION_LENGTH: f64 = 5_000_000.0;
pub const DEFAULT_MAX_SECTIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignTarget {
    pub min_rejection_db: f64,
    /// Null-to-null, nm.
    pub bandwidth_nm: f64,
    /// Allowed relative bandwidth error.
    #[serde(default = "default_tolerance")]
    pub bandwidth_tolerance: f64,
    pub center_nm: f64,
    #[serde(default)]
    pub max_total_length: Option<f64>,
}

fn default_tolerance() -> f64 {
    0.05
}

impl DesignTarget {
    pub fn validate(&self) -> Result<()> {
        ensure(self.min_rejection_db > 0.0, || "min_rejection_db must be > 0".into())?;
        ensure(self.bandwidth_nm > 0.0, || "bandwidth_nm must be > 0".into())?;
        ensure(self.center_nm > 0.0, || "center_nm must be > 0".into())?;
        ensure((0.0..1.0).contains(&self.bandwidth_tolerance), || {
            "bandwidth_tolerance must lie in [0, 1)".into()
        })?;
        if let Some(l) = self.max_total_length {
            ensure(l > 0.0, || "max_total_length must be > 0".into())?;
        }
        Ok(())
    }

    fn max_length(&self) -> f64 {
        self.max_total_length.unwrap_or(DEFAULT_MAX_SECTION_LENGTH)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeDesign {
    pub section: GratingSpec,
    pub section_count: usize,
    /// Per section.
    pub noiseless_rejection_db: f64,
    /// Per section.
    pub median_section_rejection_db: f64,
    pub median_rejection_db: f64,
    pub p25_rejection_db: f64,
    pub predicted_bandwidth_nm: f64,
}

/// Section on the bandwidth level set of `target`, with the largest
/// coupling coefficient in `kappa_bounds` that fits within the length limit.
///
/// Other fields come from `template`.
pub fn solve_section(
    target: &DesignTarget,
    group_index: f64,
    kappa_bounds: (f64, f64),
    template: &GratingSpec,
) -> Result<GratingSpec> {
    target.validate()?;
    let (k_lo, k_hi) = kappa_bounds;
    ensure(0.0 <= k_lo && k_lo <= k_hi, || format!("invalid kappa bounds [{k_lo}, {k_hi}]"))?;
    ensure(group_index > 0.0, || "group index must be > 0".into())?;

    let lambda0 = target.center_nm;
    let l_max = target.max_length();
    let l_min = template.period;
    ensure(l_max >= l_min, || "length limit is shorter than one period".into())?;
    let scaled = target.bandwidth_nm * std::f64::consts::PI * group_index / (lambda0 * lambda0);
    let limit = std::f64::consts::PI / l_max;
    if scaled <= limit {
        return Err(Error::InfeasibleTarget(format!(
            "{} nm is narrower than any section up to {l_max} nm allows",
            target.bandwidth_nm
        )));
    }
    let kappa = k_hi.min((scaled * scaled - limit * limit).sqrt());
    if kappa < k_lo {
        return Err(Error::InfeasibleTarget(format!(
            "{} nm needs kappa below {k_lo} /nm",
            target.bandwidth_nm
        )));
    }

    let excess = |l: f64| bandwidth_nm(lambda0, group_index, kappa, l) - target.bandwidth_nm;
    if excess(l_min) < 0.0 {
        return Err(Error::InfeasibleTarget(format!(
            "{} nm is wider than a one-period section gives",
            target.bandwidth_nm
        )));
    }
    let (mut a, mut b) = (l_min, l_max);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if excess(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let length = if excess(a).abs() <= excess(b).abs() { a } else { b };
    let achieved = bandwidth_nm(lambda0, group_index, kappa, length);
    if (achieved - target.bandwidth_nm).abs() > target.bandwidth_tolerance * target.bandwidth_nm {
        return Err(Error::InfeasibleTarget(format!(
            "closest bandwidth {achieved} nm misses {} nm",
            target.bandwidth_nm
        )));
    }
    Ok(GratingSpec {
        kappa,
        length,
        ..*template
    })
}

/// Period that places the resonance of `spec` at `center`.
pub fn period_for(spec: &GratingSpec, dispersion: &DispersionModel, center: f64) -> Result<f64> {
    let sum = spec.mode_pair.index_sum(dispersion, center)?;
    Ok(spec.bragg_order as f64 * center / sum)
}

/// Smallest incoherent cascade of `section` whose 25th-percentile rejection
/// meets the target, starting one section above the median estimate.
pub fn solve_count(
    target: &DesignTarget,
    section: &GratingSpec,
    noise: &NoiseModel,
    trials: usize,
    monte_carlo: &MonteCarlo,
) -> Result<CascadeDesign> {
    solve_count_capped(target, section, noise, trials, monte_carlo, DEFAULT_MAX_SECTIONS)
}

pub fn solve_count_capped(
    target: &DesignTarget,
    section: &GratingSpec,
    noise: &NoiseModel,
    trials: usize,
    monte_carlo: &MonteCarlo,
    max_sections: usize,
) -> Result<CascadeDesign> {
    target.validate()?;
    let single = monte_carlo.run(&CascadeSpec::single(*section), noise, trials)?;
    let per_section = single.median_rejection_db;
    if !(per_section > 0.0) {
        return Err(Error::InfeasibleTarget("sections show no rejection".into()));
    }
    let first = (target.min_rejection_db / per_section * (1.0 - 1e-3)).ceil() as usize + 1;
    if first > max_sections {
        return Err(Error::InfeasibleTarget(format!(
            "{} dB needs {first} sections of {per_section:.2} dB, cap is {max_sections}",
            target.min_rejection_db
        )));
    }
    for count in first..=max_sections {
        let cascade = CascadeSpec::uniform(*section, count, Composition::Incoherent);
        let stats = monte_carlo.run(&cascade, noise, trials)?;
        if stats.p25_rejection_db >= target.min_rejection_db {
            return Ok(CascadeDesign {
                section: *section,
                section_count: count,
                noiseless_rejection_db: peak_rejection_db(section.kappa, section.length),
                median_section_rejection_db: per_section,
                median_rejection_db: stats.median_rejection_db,
                p25_rejection_db: stats.p25_rejection_db,
                predicted_bandwidth_nm: monte_carlo.notch(section)?.bandwidth_nm,
            });
        }
    }
    Err(Error::InfeasibleTarget(format!(
        "25th percentile stays below {} dB up to {max_sections} sections",
        target.min_rejection_db
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn target(bandwidth_nm: f64) -> DesignTarget {
        DesignTarget {
            min_rejection_db: 80.0,
            bandwidth_nm,
            bandwidth_tolerance: 0.05,
            center_nm: 1550.0,
            max_total_length: None,
        }
    }

    #[test]
    fn fixed_kappa_inverts_bandwidth() {
        let (ng, kappa) = (4.0, 2e-4);
        let asym = 1550.0 * 1550.0 * kappa / (std::f64::consts::PI * ng);
        let t = target(asym * 1.01);
        let s = solve_section(&t, ng, (kappa, kappa), &GratingSpec::default()).unwrap();
        assert_eq!(s.kappa, kappa);
        assert_relative_eq!(bandwidth_nm(1550.0, ng, kappa, s.length), t.bandwidth_nm, max_relative = 1e-9);
    }

    #[test]
    fn bandwidth_below_asymptote_is_infeasible() {
        let (ng, kappa) = (4.0, 2e-4);
        let asym = 1550.0 * 1550.0 * kappa / (std::f64::consts::PI * ng);
        let t = target(asym * 0.9);
        assert!(matches!(
            solve_section(&t, ng, (kappa, 3e-4), &GratingSpec::default()),
            Err(Error::InfeasibleTarget(_))
        ));
    }

    #[test]
    fn largest_kappa_is_preferred() {
        let t = target(20.0);
        let s = solve_section(&t, 4.0, (1e-5, 5e-5), &GratingSpec::default()).unwrap();
        assert_eq!(s.kappa, 5e-5);
    }

    #[test]
    fn length_limit_lowers_kappa() {
        let ng = 4.0;
        let t = DesignTarget {
            max_total_length: Some(100_000.0),
            ..target(1550.0 * 1550.0 * 1e-4 / (std::f64::consts::PI * ng) * 1.001)
        };
        let s = solve_section(&t, ng, (1e-6, 1e-4), &GratingSpec::default()).unwrap();
        assert!(s.kappa < 1e-4);
        assert!(s.length <= 100_000.0 * (1.0 + 1e-12));
        assert_relative_eq!(bandwidth_nm(1550.0, ng, s.kappa, s.length), t.bandwidth_nm, max_relative = 1e-9);
    }

    #[test]
    fn period_for_constant_dispersion() {
        let d = DispersionModel::constant(&[2.75, 2.55]);
        let p = period_for(&GratingSpec::default(), &d, 1537.0).unwrap();
        assert_relative_eq!(p, 290.0, max_relative = 1e-12);
    }
}
