use bragg_cascade::cmt::GratingSpec;
use bragg_cascade::fabnoise::{sample_cascade_realization, sample_realization, MonteCarlo, NoiseModel, Sensitivity};
use bragg_cascade::modes::DispersionModel;
use bragg_cascade::spectra::BandwidthCriterion;
use bragg_cascade::tmm::{CascadeSpec, Composition, Segmentation, Simulator};
use bragg_cascade::Error;

const SENSITIVITY: Sensitivity = Sensitivity {
    section: 4.7e-4,
    link: 1.1e-3,
};

fn monte_carlo(model: &NoiseModel) -> MonteCarlo {
    let sim = Simulator::new(
        DispersionModel::constant(&[2.75, 2.55]),
        model.segmentation(GratingSpec::default().period),
    );
    let mut mc = MonteCarlo::new(sim, SENSITIVITY);
    mc.step = 0.05;
    mc
}

fn model(sigma: f64) -> NoiseModel {
    NoiseModel::noiseless().with_sigma(sigma).with_seed(7)
}

#[test]
fn width_process_has_the_requested_statistics() {
    let m = model(2.0);
    let spec = GratingSpec::default().with_length(10_000.0 * 870.0);
    let seg = Segmentation::Length(870.0);
    let rho = (-870.0 / m.correlation_length).exp();
    let (mut sum2, mut lag, mut count) = (0.0, 0.0, 0usize);
    for trial in 0..10 {
        let x = sample_realization(&m, &spec, trial, 1.0, seg);
        assert_eq!(x.len(), 10_000);
        sum2 += x.iter().map(|v| v * v).sum::<f64>();
        lag += x.windows(2).map(|w| w[0] * w[1]).sum::<f64>();
        count += x.len();
    }
    let variance = sum2 / count as f64;
    assert!((variance / 4.0 - 1.0).abs() < 0.05, "variance {variance}");
    let correlation = lag / (count - 10) as f64 / variance;
    assert!((correlation - rho).abs() < 0.02, "lag-1 {correlation} vs {rho}");
}

#[test]
fn realizations_are_reproducible_and_scale_with_sigma() {
    let cascade = CascadeSpec::uniform(GratingSpec::default(), 3, Composition::Incoherent);
    let seg = Segmentation::Length(870.0);
    let one = sample_cascade_realization(&model(1.0), &cascade, 5, SENSITIVITY, seg);
    assert_eq!(one, sample_cascade_realization(&model(1.0), &cascade, 5, SENSITIVITY, seg));
    assert_ne!(one, sample_cascade_realization(&model(1.0), &cascade, 6, SENSITIVITY, seg));
    let three = sample_cascade_realization(&model(3.0), &cascade, 5, SENSITIVITY, seg);
    for (a, b) in one.sections.iter().flatten().zip(three.sections.iter().flatten()) {
        assert!((3.0 * a - b).abs() < 1e-15);
    }
}

#[test]
fn rejection_degrades_with_noise() {
    let spec = GratingSpec::default();
    let medians: Vec<f64> = [2.0, 8.0, 24.0]
        .iter()
        .map(|&s| {
            let m = model(s);
            monte_carlo(&m).run(&CascadeSpec::single(spec), &m, 100).unwrap().median_rejection_db
        })
        .collect();
    assert!(medians[1] <= medians[0] + 1.0 && medians[2] <= medians[1] + 1.0, "{medians:?}");
    assert!(medians[2] < medians[0]);
}

#[test]
fn wafer_bias_alone_keeps_the_bandwidth() {
    let spec = GratingSpec::default();
    let cascade = CascadeSpec::single(spec);
    let run = |m: NoiseModel| {
        let mut mc = monte_carlo(&m);
        mc.bandwidth = Some(BandwidthCriterion::NullToNull);
        mc.step = 0.01;
        mc.run(&cascade, &m, 40).unwrap().median_bandwidth_nm.unwrap()
    };
    let clean = run(NoiseModel::noiseless());
    let biased = run(NoiseModel {
        wafer_bias_sigma: 5.0,
        ..model(0.0)
    });
    assert!((biased / clean - 1.0).abs() < 0.02, "{biased} vs {clean}");
}

#[test]
fn noiseless_ensemble_has_no_spread() {
    let m = NoiseModel::noiseless();
    let stats = monte_carlo(&m).run(&CascadeSpec::single(GratingSpec::default()), &m, 25).unwrap();
    assert_eq!(stats.p5_rejection_db, stats.p95_rejection_db);
    assert_eq!(stats.trials, 25);
}

#[test]
fn calibration_at_the_noiseless_level_needs_no_noise() {
    let spec = GratingSpec::default();
    let m = model(0.0);
    let mc = monte_carlo(&m);
    let clean = mc
        .run(&CascadeSpec::single(spec.with_length(300_000.0)), &NoiseModel::noiseless(), 1)
        .unwrap()
        .median_rejection_db;
    let cal = mc.calibrate_sigma(clean, 300_000.0, &spec, 20, &m).unwrap();
    assert_eq!(cal.model.sigma_width, 0.0);
    assert!(matches!(
        mc.calibrate_sigma(clean + 5.0, 300_000.0, &spec, 20, &m),
        Err(Error::CalibrationFailed(_))
    ));
}
