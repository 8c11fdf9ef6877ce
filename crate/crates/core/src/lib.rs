//! Simulation and design of cascaded waveguide Bragg notch filters.
//!
//! Lengths are in nm, coupling coefficients and detunings in 1/nm.
//!
//! * [`modes`]: slab and effective-index mode solving.
//! * [`cmt`]: closed-form uniform-grating results.
//! * [`tmm`]: transfer matrices, perturbed gratings and cascades.
//! * [`fabnoise`]: fabrication-noise realizations and Monte Carlo.
//! * [`spectra`]: spectrum I/O, metrics and the detector model.
//! * [`design`]: section and cascade sizing.

pub mod cmt;
pub mod design;
pub mod error;
pub mod fabnoise;
pub mod modes;
pub mod spectra;
pub mod tmm;

pub use cmt::{GratingSpec, ModePair};
pub use error::{Error, Result};
pub use fabnoise::{EnsembleStats, MonteCarlo, NoiseModel, Sensitivity};
pub use modes::{DispersionModel, WaveguideGeometry};
pub use spectra::{MeasurementChain, OffbandWindow, Spectrum};
pub use tmm::{CascadeSpec, Composition, Simulator};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/modes.md")]
    mod modes {}
    #[doc = include_str!("../../../book/src/uniform-gratings.md")]
    mod uniform_gratings {}
    #[doc = include_str!("../../../book/src/cascades.md")]
    mod cascades {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/spectra.md")]
    mod spectra {}
    #[doc = include_str!("../../../book/src/design.md")]
    mod design {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
