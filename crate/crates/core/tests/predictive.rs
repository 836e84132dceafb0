use ncorm::archive::{collect_chain, Schedule};
use ncorm::config::RunConfig;
use ncorm::data::Dataset;
use ncorm::kernel::KernelSpec;
use ncorm::parallel::Execution;
use ncorm::predictive::{check_location, predictive_density};
use ncorm::rng::seeded;
use ncorm::sampler::{ChainState, Cluster};
use ncorm::{Error, LevySpec, Location, ScoreParams};
use rand_distr::{Distribution, Normal};

fn grid(lo: f64, hi: f64, m: usize) -> Vec<Vec<f64>> {
    (0..m).map(|i| vec![lo + (hi - lo) * i as f64 / (m - 1) as f64]).collect()
}

fn trapezoid(ys: &[Vec<f64>], f: &[f64]) -> f64 {
    ys.windows(2)
        .zip(f.windows(2))
        .map(|(y, v)| 0.5 * (y[1][0] - y[0][0]) * (v[0] + v[1]))
        .sum()
}

fn points(xs: &[f64]) -> Vec<Location> {
    xs.iter().map(|&x| Location::Point(vec![x])).collect()
}

#[test]
fn one_dominant_cluster_gives_the_conjugate_predictive() {
    let y = [0.4, -0.2, 1.1, 0.7, 0.3, 0.9];
    let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let data = Dataset::new(y.iter().map(|&v| vec![v]).collect(), points(&x)).unwrap();
    let (mu, sigma2, a) = (0.0, 2.0, 0.3);
    let kernel = KernelSpec::UnivariateNormal { mu, sigma2, mix_fraction: a };
    let mut cluster = Cluster::new(1e4, vec![0.0; 6], 1);
    for (i, yi) in y.iter().enumerate() {
        cluster.add(&[*yi], data.site_of[i]);
    }
    let state = ChainState {
        alloc: vec![0; 6],
        clusters: vec![cluster],
        v: vec![0.1; 6],
        mass: 1e-8,
        levy: LevySpec::gamma(),
        score_params: ScoreParams::GaussianProcess { variance: 0.5, lengthscale: 1.0 },
        kernel,
        log_lhat: vec![0.0; 6],
    };
    state.check(&data).unwrap();

    // normal-normal conjugacy worked by hand
    let n = y.len() as f64;
    let (s2, t2) = (a * sigma2, (1.0 - a) * sigma2);
    let prec = 1.0 / t2 + n / s2;
    let mean = (mu / t2 + y.iter().sum::<f64>() / s2) / prec;
    let sd = (s2 + 1.0 / prec).sqrt();
    let oracle = |v: f64| {
        let z = (v - mean) / sd;
        (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    };

    let ys = grid(-3.0, 4.0, 71);
    let dens = predictive_density(
        &[state],
        &data,
        &points(&[0.35, 0.9]),
        &ys,
        10,
        &mut seeded(1),
        Execution::Sequential,
    )
    .unwrap();
    for row in &dens {
        for (yv, d) in ys.iter().zip(row) {
            assert!((d - oracle(yv[0])).abs() < 1e-6, "{d} vs {}", oracle(yv[0]));
        }
    }
}

fn heteroscedastic() -> Dataset {
    let mut rng = seeded(21);
    let n = 80;
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for i in 0..n {
        let xi = (i as f64 + 0.5) / n as f64;
        let sd = if xi < 0.5 { 0.1 } else { 1.5 };
        y.push(vec![Normal::new(0.0, sd).unwrap().sample(&mut rng)]);
        x.push(Location::Point(vec![xi]));
    }
    Dataset::new(y, x).unwrap()
}

fn short_fit(data: &Dataset, seed: u64) -> Vec<ChainState> {
    let mut cfg = RunConfig::default();
    cfg.sampler.v_updates = Some(10);
    let model = cfg.model_for(data).unwrap();
    let schedule = Schedule { iterations: 400, burn_in: 200, thin: 5 };
    collect_chain(model, data.clone(), schedule, seed).unwrap().0
}

#[test]
fn densities_integrate_to_one_and_follow_the_noise_level() {
    let data = heteroscedastic();
    let states = short_fit(&data, 4);
    let ys = grid(-9.0, 9.0, 1801);
    let dens = predictive_density(
        &states,
        &data,
        &points(&[0.25, 0.75]),
        &ys,
        10,
        &mut seeded(2),
        Execution::Parallel,
    )
    .unwrap();
    let mut sds = vec![];
    for row in &dens {
        let total = trapezoid(&ys, row);
        assert!((total - 1.0).abs() < 0.01, "mass {total}");
        let m = trapezoid(&ys, &ys.iter().zip(row).map(|(y, d)| y[0] * d).collect::<Vec<_>>());
        let v = trapezoid(
            &ys,
            &ys.iter().zip(row).map(|(y, d)| (y[0] - m).powi(2) * d).collect::<Vec<_>>(),
        );
        sds.push(v.sqrt());
    }
    assert!(sds[1] > sds[0], "sd at the noisy end {} vs quiet end {}", sds[1], sds[0]);
}

#[test]
fn cells_outside_the_level_set_are_rejected() {
    let mut data = Dataset::new(
        vec![vec![0.0], vec![1.0], vec![2.0]],
        vec![Location::Cell(0, 0), Location::Cell(1, 0), Location::Cell(0, 1)],
    )
    .unwrap();
    data.levels = Some([vec!["a".into(), "b".into()], vec!["u".into(), "v".into()]]);
    assert!(check_location(&data, &Location::Cell(1, 1)).is_ok());
    assert!(matches!(check_location(&data, &Location::Cell(2, 0)), Err(Error::Domain(_))));
    assert!(matches!(check_location(&data, &Location::Point(vec![0.5])), Err(Error::Domain(_))));
}

#[test]
fn empty_state_list_is_an_error() {
    let data = heteroscedastic();
    let out = predictive_density(
        &[],
        &data,
        &points(&[0.5]),
        &grid(0.0, 1.0, 3),
        5,
        &mut seeded(1),
        Execution::Sequential,
    );
    assert!(out.is_err());
}
