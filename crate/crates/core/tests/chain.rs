use ncorm::archive::{collect_chain, fit, read_archive, Schedule};
use ncorm::config::RunConfig;
use ncorm::cv::{fold_assignment, lps_cross_validation};
use ncorm::data::{ingest_csv, simulate, CsvColumns, RegressorKind, Simulation};
use ncorm::rng::seeded;

fn short(iterations: usize, burn_in: usize, thin: usize) -> RunConfig {
    let mut c = RunConfig::default();
    c.sampler.iterations = iterations;
    c.sampler.burn_in = burn_in;
    c.sampler.thin = thin;
    c.sampler.v_updates = Some(5);
    c
}

#[test]
fn long_schedule_keeps_ten_thousand_states() {
    let s = Schedule { iterations: 33_000, burn_in: 3_000, thin: 3 };
    assert_eq!(s.retained(), 10_000);
    assert_eq!((1..=33_000).filter(|&t| s.keeps(t)).count(), 10_000);
    assert!(!s.keeps(3_000) && s.keeps(3_003));
}

#[test]
fn fit_writes_one_record_per_retained_sweep() {
    let data = simulate(Simulation::I { sigma: 0.5, r: 1.0 }, 20, &mut seeded(3)).unwrap();
    let config = short(100, 10, 3);
    let dir = tempfile::tempdir().unwrap();
    let out = fit(&config, &data, dir.path()).unwrap();
    let (header, records) = read_archive(&out.archives[0]).unwrap();
    assert_eq!(records.len(), 30);
    let back = header.dataset().unwrap();
    assert_eq!((back.x, back.y), (data.x.clone(), data.y.clone()));
    assert!(records.windows(2).all(|w| w[1].iteration == w[0].iteration + 3));

    let trace = std::fs::read_to_string(&out.traces[0]).unwrap();
    let mut lines = trace.lines();
    let cols: Vec<_> = lines.next().unwrap().split(',').collect();
    assert_eq!(&cols[..3], &["iteration", "K", "M"]);
    assert!(cols.iter().any(|c| c.starts_with("tau.")));
    assert!(cols.iter().any(|c| c.starts_with("acceptance.")));
    assert_eq!(lines.count(), 30);
    assert!(std::fs::read_to_string(&out.report).unwrap().contains("acceptance"));
}

#[test]
fn archives_are_byte_identical_for_a_fixed_seed() {
    let data = simulate(Simulation::I { sigma: 0.5, r: 1.0 }, 25, &mut seeded(4)).unwrap();
    let mut config = short(60, 20, 2);
    config.sampler.chains = 2;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = fit(&config, &data, a.path()).unwrap();
    config.sampler.parallel = false;
    let second = fit(&config, &data, b.path()).unwrap();
    for (x, y) in first.archives.iter().zip(&second.archives) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    // distinct chains get distinct seeds
    assert_ne!(
        std::fs::read(&first.archives[0]).unwrap(),
        std::fs::read(&first.archives[1]).unwrap()
    );
}

#[test]
fn corrupt_archives_are_rejected() {
    let data = simulate(Simulation::I { sigma: 0.5, r: 1.0 }, 10, &mut seeded(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = fit(&short(20, 10, 5), &data, dir.path()).unwrap();
    let text = std::fs::read_to_string(&out.archives[0]).unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, text.replacen("\"alloc\":[", "\"alloc\":[99,", 1)).unwrap();
    assert!(read_archive(&bad).is_err());
    std::fs::write(&bad, "").unwrap();
    assert!(read_archive(&bad).is_err());
}

#[test]
fn motorcycle_fit_mixes_at_moderate_acceptance() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/mcycle.csv");
    let cols = CsvColumns { responses: vec!["accel".into()], regressors: vec!["times".into()], kind: RegressorKind::Continuous };
    let mut data = ingest_csv(path.as_ref(), &cols).unwrap();
    assert_eq!(data.len(), 133);
    // standardize so the default kernel and grid apply
    let (m, s) = (data.mean()[0], data.covariance()[0].sqrt());
    for y in &mut data.y {
        y[0] = (y[0] - m) / s;
    }
    let config = short(300, 100, 2);
    let model = config.model_for(&data).unwrap();
    let (states, summary) = collect_chain(model, data, Schedule { iterations: 300, burn_in: 100, thin: 2 }, 8).unwrap();
    assert_eq!(states.len(), 100);
    for (name, rate) in &summary.acceptance {
        if rate.is_finite() && (name == "scores" || name == "v") {
            assert!((0.1..=0.6).contains(rate), "{name}: {rate}");
        }
    }
    assert!(states.iter().all(|s| s.k() >= 2), "one cluster cannot fit the curve");
}

#[test]
fn folds_partition_the_data_deterministically() {
    let f = fold_assignment(23, 5, 9);
    assert_eq!(f, fold_assignment(23, 5, 9));
    assert_ne!(f, fold_assignment(23, 5, 10));
    let mut sizes = [0usize; 5];
    for &k in &f {
        sizes[k] += 1;
    }
    assert_eq!(sizes.iter().sum::<usize>(), 23);
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
}

#[test]
fn cross_validation_scores_every_point_once() {
    let data = simulate(Simulation::I { sigma: 0.5, r: 1.0 }, 24, &mut seeded(6)).unwrap();
    let config = short(60, 20, 2);
    let r = lps_cross_validation(&config, &data, 4, 2).unwrap();
    assert_eq!(r.log_densities.len(), 24);
    assert!(r.log_densities.iter().all(|l| l.is_finite()));
    assert_eq!(r.fold_lps.len(), 4);
    let by_fold = r.fold_lps.iter().sum::<f64>() / 4.0;
    assert!((by_fold - r.lps).abs() < 1e-12, "equal folds average to the total");
    let again = lps_cross_validation(&config, &data, 4, 2).unwrap();
    assert_eq!(again.lps, r.lps);
    assert!(lps_cross_validation(&config, &data, 1, 2).is_err());
}

#[test]
fn a_kernel_far_too_narrow_scores_badly() {
    use ncorm::kernel::KernelSpec;
    let data = simulate(Simulation::I { sigma: 0.5, r: 1.0 }, 20, &mut seeded(7)).unwrap();
    let mut config = short(40, 20, 2);
    config.kernel = Some(KernelSpec::UnivariateNormal { mu: 10.0, sigma2: 1e-4, mix_fraction: 0.5 });
    config.updates.kernel_location = false;
    config.updates.kernel_scale = false;
    config.updates.kernel_mix = false;
    let r = lps_cross_validation(&config, &data, 4, 3).unwrap();
    assert!(r.lps > 100.0, "lps {}", r.lps);
}
