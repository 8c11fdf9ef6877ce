use bragg_cascade::cmt::{notch_estimate, GratingSpec};
use bragg_cascade::modes::DispersionModel;
use bragg_cascade::spectra::{
    apply_measurement_chain, extract_bandwidth_nm, extract_rejection_db, notch_grid, BandwidthCriterion,
    MeasurementChain, OffbandWindow, Spectrum,
};
use bragg_cascade::tmm::{CascadeSpec, Composition, Segmentation, Simulator};
use bragg_cascade::Error;
use proptest::prelude::*;

fn simulate(cascade: &CascadeSpec, step: f64) -> (Spectrum, OffbandWindow) {
    let d = DispersionModel::constant(&[2.75, 2.55]);
    let est = notch_estimate(&cascade.sections[0], &d).unwrap();
    let window = OffbandWindow::for_notch(est.lambda0, est.bandwidth_nm);
    let grid = notch_grid(est.lambda0, est.bandwidth_nm, step, &window, 0.5).unwrap();
    let sim = Simulator::new(d, Segmentation::PerPeriod);
    (sim.cascade_spectrum(cascade, &grid, None).unwrap(), window)
}

#[test]
fn metrics_are_stable_under_grid_refinement() {
    let cascade = CascadeSpec::uniform(GratingSpec::default(), 3, Composition::Incoherent);
    let (coarse, window) = simulate(&cascade, 0.02);
    let (fine, _) = simulate(&cascade, 0.01);
    let r = |s: &Spectrum| extract_rejection_db(s, &window).unwrap().db;
    assert!((r(&coarse) - r(&fine)).abs() < 0.1, "{} vs {}", r(&coarse), r(&fine));
    for criterion in [BandwidthCriterion::ThreeDb, BandwidthCriterion::NullToNull] {
        let b = |s: &Spectrum| extract_bandwidth_nm(s, criterion, &window).unwrap();
        assert!((b(&coarse) / b(&fine) - 1.0).abs() < 0.005, "{criterion:?}: {} vs {}", b(&coarse), b(&fine));
    }
}

#[test]
fn detector_floor_caps_and_flags_deep_notches() {
    let cascade = CascadeSpec::uniform(GratingSpec::default(), 4, Composition::Incoherent);
    let (spectrum, window) = simulate(&cascade, 0.01);
    let truth = extract_rejection_db(&spectrum, &window).unwrap();
    for chain in [MeasurementChain::ct400(), MeasurementChain::osa()] {
        let apparent = apply_measurement_chain(&spectrum, &chain).unwrap().apparent_transmission();
        let seen = extract_rejection_db(&apparent, &window).unwrap();
        assert!(seen.clipped);
        assert!(seen.db <= chain.dynamic_range_db() + 1e-9);
        assert!(seen.db < truth.db);
    }
}

#[test]
fn shallow_notch_stays_unclipped() {
    let cascade = CascadeSpec::single(GratingSpec::default().with_length(50_000.0));
    let (spectrum, window) = simulate(&cascade, 0.01);
    let truth = extract_rejection_db(&spectrum, &window).unwrap();
    let apparent = apply_measurement_chain(&spectrum, &MeasurementChain::ct400()).unwrap().apparent_transmission();
    let seen = extract_rejection_db(&apparent, &window).unwrap();
    assert!(!seen.clipped);
    assert!((seen.db - truth.db).abs() < 1e-6);
}

#[test]
fn malformed_row_names_its_line() {
    let text = "wavelength_nm,transmission_linear,transmission_db\n1550,0.5,-3.0103\n1551,oops,0\n";
    match Spectrum::read_csv(text.as_bytes()) {
        Err(Error::SpectrumParse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(
        start in 1000.0f64..2000.0,
        steps in prop::collection::vec(1e-6f64..1.0, 1..50),
        seed in prop::collection::vec(0.0f64..=1.0, 50),
    ) {
        let mut wavelengths = vec![start];
        for s in &steps {
            let next = wavelengths.last().unwrap() + s;
            wavelengths.push(next);
        }
        let transmission = seed[..wavelengths.len()].to_vec();
        let spectrum = Spectrum::new(wavelengths, transmission).unwrap();
        let mut buf = Vec::new();
        spectrum.write_csv(&mut buf).unwrap();
        let back = Spectrum::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.wavelengths, spectrum.wavelengths);
        prop_assert_eq!(back.transmission, spectrum.transmission);
    }
}
