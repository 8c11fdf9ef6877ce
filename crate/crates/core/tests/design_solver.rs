use bragg_cascade::cmt::{kappa_length_for_rejection, notch_estimate, GratingSpec};
use bragg_cascade::design::{solve_count, solve_count_capped, solve_section, DesignTarget};
use bragg_cascade::fabnoise::{MonteCarlo, NoiseModel, Sensitivity};
use bragg_cascade::modes::DispersionModel;
use bragg_cascade::tmm::{Segmentation, Simulator};
use bragg_cascade::Error;

fn dispersion() -> DispersionModel {
    DispersionModel::constant(&[2.75, 2.55])
}

fn monte_carlo() -> MonteCarlo {
    let sim = Simulator::new(dispersion(), Segmentation::Length(870.0));
    let mut mc = MonteCarlo::new(sim, Sensitivity { section: 4.7e-4, link: 1.1e-3 });
    mc.step = 0.05;
    mc
}

fn ten_db_section() -> GratingSpec {
    let length = 250_000.0;
    GratingSpec::default()
        .with_length(length)
        .with_kappa(kappa_length_for_rejection(10.0) / length)
}

fn target(min_rejection_db: f64) -> DesignTarget {
    DesignTarget {
        min_rejection_db,
        bandwidth_nm: 5.0,
        bandwidth_tolerance: 0.05,
        center_nm: 1537.0,
        max_total_length: None,
    }
}

#[test]
fn count_follows_from_noiseless_section_rejection() {
    let d = solve_count(&target(80.0), &ten_db_section(), &NoiseModel::noiseless(), 5, &monte_carlo()).unwrap();
    assert_eq!(d.section_count, 9);
    assert!((d.median_section_rejection_db - 10.0).abs() < 0.01);
    assert!(d.p25_rejection_db >= 80.0);
}

#[test]
fn count_beyond_cap_is_infeasible() {
    let r = solve_count_capped(&target(400.0), &ten_db_section(), &NoiseModel::noiseless(), 5, &monte_carlo(), 32);
    assert!(matches!(r, Err(Error::InfeasibleTarget(_))));
}

#[test]
fn count_grows_with_target() {
    let counts: Vec<usize> = [20.0, 45.0, 70.0, 95.0]
        .iter()
        .map(|&t| {
            solve_count(&target(t), &ten_db_section(), &NoiseModel::noiseless(), 5, &monte_carlo())
                .unwrap()
                .section_count
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[1] >= w[0]), "{counts:?}");
    assert!(counts[3] > counts[0]);
}

#[test]
fn default_section_is_recovered_from_its_bandwidth() {
    let spec = GratingSpec::default();
    let est = notch_estimate(&spec, &dispersion()).unwrap();
    let t = DesignTarget {
        bandwidth_nm: est.bandwidth_nm,
        center_nm: est.lambda0,
        ..target(80.0)
    };
    let s = solve_section(&t, est.group_index, (spec.kappa, spec.kappa), &spec).unwrap();
    assert!((s.length / spec.length - 1.0).abs() < 1e-9, "{}", s.length);
}
