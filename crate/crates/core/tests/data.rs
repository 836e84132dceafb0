use std::io::Write;
use std::path::PathBuf;

use ncorm::data::{
    design_i_probability, design_ii_weights, ingest_csv, simulate, CsvColumns, RegressorKind,
    Simulation,
};
use ncorm::diagnostics::mean_se;
use ncorm::rng::seeded;
use ncorm::{Error, Location};
use tempfile::NamedTempFile;

fn cols(y: &str, x: &[&str], kind: RegressorKind) -> CsvColumns {
    CsvColumns {
        responses: vec![y.into()],
        regressors: x.iter().map(|s| s.to_string()).collect(),
        kind,
    }
}

fn csv(text: &str) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn three_rows_parse() {
    let f = csv("x,y\n0.1,1.0\n0.2,2.0\n0.3,3.0\n");
    let d = ingest_csv(f.path(), &cols("y", &["x"], RegressorKind::Continuous)).unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(d.site_count(), 3);
    assert_eq!(d.y[2], vec![3.0]);
}

#[test]
fn missing_cell_reports_its_line() {
    let f = csv("x,y\n0.1,1.0\n0.2,\n0.3,3.0\n");
    match ingest_csv(f.path(), &cols("y", &["x"], RegressorKind::Continuous)) {
        Err(Error::DataLine { line, message }) => {
            assert_eq!(line, 3);
            assert!(message.contains("`y`"), "{message}");
        }
        other => panic!("expected a line error, got {other:?}"),
    }
}

#[test]
fn non_numeric_cell_names_its_column() {
    let f = csv("x,y\n0.1,1.0\nabc,2.0\n");
    let err = ingest_csv(f.path(), &cols("y", &["x"], RegressorKind::Continuous)).unwrap_err();
    assert!(matches!(err, Error::DataLine { line: 3, .. }));
    assert!(err.to_string().contains("`x`"));
}

#[test]
fn short_row_is_rejected_with_line() {
    let f = csv("x,y\n0.1,1.0\n0.2\n");
    let err = ingest_csv(f.path(), &cols("y", &["x"], RegressorKind::Continuous)).unwrap_err();
    assert!(matches!(err, Error::DataLine { line: 3, .. }), "{err}");
}

#[test]
fn single_row_is_too_few() {
    let f = csv("x,y\n0.1,1.0\n");
    assert!(ingest_csv(f.path(), &cols("y", &["x"], RegressorKind::Continuous)).is_err());
}

#[test]
fn motorcycle_fixture_has_one_regressor_and_one_response() {
    let d = ingest_csv(
        &fixture("mcycle.csv"),
        &cols("accel", &["times"], RegressorKind::Continuous),
    )
    .unwrap();
    assert_eq!(d.len(), 133);
    assert_eq!(d.response_dim(), 1);
    assert!(matches!(&d.x[0], Location::Point(p) if p.len() == 1));
    // repeated times collapse onto shared sites
    assert!(d.site_count() < d.len());
}

#[test]
fn categorical_levels_form_cells() {
    let f = csv("dose,sex,y\nlo,f,1\nhi,f,2\nlo,m,3\nlo,f,4\n");
    let d = ingest_csv(f.path(), &cols("y", &["dose", "sex"], RegressorKind::Categorical)).unwrap();
    assert_eq!(d.site_count(), 3);
    assert_eq!(d.site_of[0], d.site_of[3]);
    let levels = d.levels.unwrap();
    assert_eq!(levels[0], vec!["lo", "hi"]);
    assert_eq!(levels[1], vec!["f", "m"]);
}

#[test]
fn design_one_component_frequency() {
    // at x = 0.25, sin(2πx) = 1
    let p = design_i_probability(0.25, 2.0);
    let e2 = 2f64.exp();
    assert!((p - e2 / (1.0 + e2)).abs() < 1e-12);
    assert!((p - 0.8808).abs() < 1e-4);

    let data = simulate(Simulation::I { sigma: 0.1, r: 2.0 }, 100_000, &mut seeded(3)).unwrap();
    let xs: Vec<f64> = data.x.iter().map(|l| match l {
        Location::Point(p) => p[0],
        _ => unreachable!(),
    }).collect();
    // with σ = 0.1 the component is recovered from the sign of y
    let hits: Vec<f64> = data.y.iter().map(|y| (y[0] < 0.0) as u8 as f64).collect();
    let expected: Vec<f64> = xs.iter().map(|&x| design_i_probability(x, 2.0)).collect();
    let (m, se) = mean_se(&hits);
    let target = expected.iter().sum::<f64>() / expected.len() as f64;
    assert!((m - target).abs() < 3.0 * se, "{m} vs {target}");
}

#[test]
fn design_two_weights_are_a_distribution() {
    for i in 0..=100 {
        let w = design_ii_weights(i as f64 / 100.0);
        assert!(w.iter().all(|&v| v >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn design_three_homoscedastic_noise() {
    let data = simulate(
        Simulation::III { a: 0.0, b: 1.0, c: false, d: false },
        100_000,
        &mut seeded(5),
    )
    .unwrap();
    let resid: Vec<f64> = data
        .x
        .iter()
        .zip(&data.y)
        .map(|(l, y)| match l {
            Location::Point(p) => y[0] - (2.0 * std::f64::consts::PI * p[0]).sin(),
            _ => unreachable!(),
        })
        .collect();
    let sd = ncorm::diagnostics::variance(&resid).sqrt();
    assert!((sd - 0.1).abs() < 0.002, "{sd}");
}

#[test]
fn regressors_are_uniform_on_the_unit_interval() {
    let data = simulate(Simulation::II { sigma: 0.5 }, 20_000, &mut seeded(9)).unwrap();
    let xs: Vec<f64> = data.x.iter().map(|l| match l {
        Location::Point(p) => p[0],
        _ => unreachable!(),
    }).collect();
    assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
    let (d, p) = ncorm::diagnostics::ks_test(&xs, |x| x.clamp(0.0, 1.0));
    assert!(p > 0.001, "D = {d}");
}

#[test]
fn written_csv_reads_back() {
    let data = simulate(Simulation::I { sigma: 0.5, r: 1.0 }, 50, &mut seeded(1)).unwrap();
    let f = NamedTempFile::new().unwrap();
    data.write_csv(f.path()).unwrap();
    let back = ingest_csv(f.path(), &cols("y", &["x"], RegressorKind::Continuous)).unwrap();
    assert_eq!(back.len(), 50);
    for (a, b) in back.y.iter().zip(&data.y) {
        assert!((a[0] - b[0]).abs() < 1e-12);
    }
}
