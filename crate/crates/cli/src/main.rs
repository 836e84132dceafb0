use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ncorm::archive::{fit, read_archive};
use ncorm::config::RunConfig;
use ncorm::cv::lps_cross_validation;
use ncorm::data::{ingest_csv, simulate, Dataset, Simulation};
use ncorm::geweke::{geweke_check, GewekeConfig};
use ncorm::predictive::log_predictive_grid;
use ncorm::rng::seeded;
use ncorm::sampler::Fault;
use ncorm::validation::{dominance_violations, exponential_fixture, log_grid, reference_specs};
use ncorm::{Error, Location};

#[derive(Parser)]
#[command(name = "ncorm", version, about = "Density regression with NCoRM mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampler and write archives, traces and a run report.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `data.path`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `sampler.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Posterior mean predictive densities on an (x, y) grid.
    Predict {
        /// Archives to pool; all must share the same data.
        #[arg(long, required = true, num_args = 1..)]
        archive: Vec<PathBuf>,
        /// Supplies `output.grid.*`; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Regressor values (`row:col` labels for categorical data).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Vec<String>,
        #[arg(long, allow_negative_numbers = true)]
        y_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        y_max: Option<f64>,
        #[arg(long)]
        y_points: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a simulated data set.
    Simulate {
        #[arg(long, value_enum)]
        design: Design,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 0.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long)]
        jumps: bool,
        #[arg(long)]
        heteroscedastic: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated log predictive score.
    Cv {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Overrides `cv.folds`.
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimator, bound and joint-distribution self-checks.
    Check {
        /// Sweeps of the joint-distribution check.
        #[arg(long, default_value_t = 100_000)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also run the corrupted-sampler control, which must fail.
        #[arg(long)]
        negative_control: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Design {
    I,
    Ii,
    Iii,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidSpec(_) | Error::Domain(_) => 2,
        Error::Data(_) | Error::DataLine { .. } | Error::Io(_) => 3,
        _ if e.is_numerical() => 4,
        _ => 1,
    }
}

fn load_data(config: &RunConfig, path: Option<PathBuf>) -> Result<(Dataset, PathBuf), Error> {
    let path = path
        .or_else(|| config.data.path.clone())
        .ok_or_else(|| Error::Config("no data file: set `data.path` or pass --data".into()))?;
    let data = ingest_csv(&path, &config.data.columns())?;
    Ok((data, path))
}

fn parse_x(data: &Dataset, label: &str) -> Result<Location, Error> {
    match &data.levels {
        Some(levels) => {
            let (r, c) = label
                .split_once(':')
                .ok_or_else(|| Error::Domain(format!("expected `row:col`, got `{label}`")))?;
            let find = |f: usize, l: &str| {
                levels[f]
                    .iter()
                    .position(|v| v == l)
                    .ok_or_else(|| Error::Domain(format!("level `{l}` is not in the data")))
            };
            Ok(Location::Cell(find(0, r)?, find(1, c)?))
        }
        None => {
            let p = label
                .split(';')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Domain(format!("bad regressor value `{label}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Location::Point(p))
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Fit {
            config,
            data,
            out,
            seed,
        } => {
            let mut cfg = RunConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.sampler.seed = s;
            }
            let (data, _) = load_data(&cfg, data)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let result = fit(&cfg, &data, &dir)?;
            for (path, s) in result.archives.iter().zip(&result.summaries) {
                println!(
                    "{}: {} states in {:.1} s",
                    path.display(),
                    s.retained,
                    s.wall.as_secs_f64()
                );
            }
            println!("report: {}", result.report.display());
        }
        Command::Predict {
            archive,
            config,
            x,
            y_min,
            y_max,
            y_points,
            seed,
            out,
        } => {
            let cfg = match config {
                Some(p) => RunConfig::from_path(&p)?,
                None => RunConfig::default(),
            };
            let mut states = Vec::new();
            let mut data = None;
            let mut fitted_to = None;
            for path in &archive {
                let (header, records) = read_archive(path)?;
                if let Some(h) = &fitted_to {
                    if *h != (header.x.clone(), header.y.clone()) {
                        return Err(Error::Data("archives were fitted to different data".into()));
                    }
                } else {
                    fitted_to = Some((header.x.clone(), header.y.clone()));
                    data = Some(header.dataset()?);
                }
                states.extend(records.into_iter().map(|r| r.state));
            }
            let data = data.expect("at least one archive");
            let labels = if x.is_empty() { cfg.grid.x.clone() } else { x };
            if labels.is_empty() {
                return Err(Error::Config("no grid x values: pass --x or set `output.grid.x`".into()));
            }
            if data.response_dim() != 1 {
                return Err(Error::Config("grid prediction needs a univariate response".into()));
            }
            let xs = labels
                .iter()
                .map(|l| parse_x(&data, l))
                .collect::<Result<Vec<_>, _>>()?;
            let lo = y_min.unwrap_or(cfg.grid.y_min);
            let hi = y_max.unwrap_or(cfg.grid.y_max);
            let m = y_points.unwrap_or(cfg.grid.y_points);
            if m < 2 || hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Config("need y_max > y_min and at least two y points".into()));
            }
            let ys: Vec<Vec<f64>> = (0..m)
                .map(|i| vec![lo + (hi - lo) * i as f64 / (m - 1) as f64])
                .collect();
            let grid = log_predictive_grid(
                &states,
                &data,
                &xs,
                &ys,
                cfg.grid.remainder_draws,
                seed,
                cfg.execution(),
            )?;
            let mut w = csv_writer(&out)?;
            w.write_record(["x", "y", "density"]).map_err(csv_err)?;
            for (label, row) in labels.iter().zip(&grid) {
                for (y, lp) in ys.iter().zip(row) {
                    w.write_record([label.clone(), y[0].to_string(), lp.exp().to_string()])
                        .map_err(csv_err)?;
                }
            }
            w.flush()?;
            println!("{} states, {} grid points -> {}", states.len(), labels.len() * m, out.display());
        }
        Command::Simulate {
            design,
            n,
            sigma,
            r,
            a,
            b,
            jumps,
            heteroscedastic,
            seed,
            out,
        } => {
            let design = match design {
                Design::I => Simulation::I { sigma, r },
                Design::Ii => Simulation::II { sigma },
                Design::Iii => Simulation::III {
                    a,
                    b,
                    c: jumps,
                    d: heteroscedastic,
                },
            };
            let data = simulate(design, n, &mut seeded(seed))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            data.write_csv(&out)?;
            println!("{n} observations -> {}", out.display());
        }
        Command::Cv {
            config,
            data,
            folds,
            seed,
            out,
        } => {
            let cfg = RunConfig::from_path(&config)?;
            let (data, path) = load_data(&cfg, data)?;
            let folds = folds.unwrap_or(cfg.folds);
            let seed = seed.unwrap_or(cfg.sampler.seed);
            let result = lps_cross_validation(&cfg, &data, folds, seed)?;
            let mut w = csv_writer(&out)?;
            w.write_record(["dataset", "params", "LPS", "SE"]).map_err(csv_err)?;
            let params = format!(
                "family={:?};folds={folds};seed={seed};iterations={};burn_in={};thin={}",
                cfg.levy.family, cfg.sampler.iterations, cfg.sampler.burn_in, cfg.sampler.thin
            );
            w.write_record([
                path.display().to_string(),
                params,
                result.lps.to_string(),
                result.se.to_string(),
            ])
            .map_err(csv_err)?;
            w.flush()?;
            println!("LPS {:.4} (SE {:.4})", result.lps, result.se);
        }
        Command::Check {
            iterations,
            seed,
            negative_control,
        } => return check(iterations, seed, negative_control),
    }
    Ok(ExitCode::SUCCESS)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn check(iterations: usize, seed: u64, negative_control: bool) -> Result<ExitCode, Error> {
    let mut all = true;

    let a = 8.0;
    let fx = exponential_fixture(100_000, a, seed)?;
    let target = (-1f64).exp();
    let var_target = (-2f64).exp() * ((1.0 / a).exp() - 1.0);
    let unbiased = (fx.mean - target).abs() < 3.0 * fx.std_error;
    let var_ok = (fx.variance / var_target - 1.0).abs() < 0.05;
    println!(
        "{} estimator mean {:.6} vs {:.6} (SE {:.1e})",
        verdict(unbiased),
        fx.mean,
        target,
        fx.std_error
    );
    println!("{} estimator variance {:.6} vs {:.6}", verdict(var_ok), fx.variance, var_target);
    all &= unbiased && var_ok;

    let grid = log_grid(1e-6, 50.0, 1000);
    for (name, spec) in reference_specs() {
        let bad = dominance_violations(&spec, &grid);
        println!("{} bound dominance, {name}: {} violations", verdict(bad.is_empty()), bad.len());
        all &= bad.is_empty();
    }

    let report = geweke_check(&GewekeConfig::fixture(iterations, seed))?;
    let ok = report.max_abs_z() < 4.0;
    println!("{} joint-distribution check ({iterations} sweeps)", verdict(ok));
    for s in &report.stats {
        println!(
            "    {:<16} marginal {:>9.4}  chain {:>9.4}  z {:>6.2}",
            s.name, s.marginal_mean, s.chain_mean, s.z
        );
    }
    all &= ok;

    if negative_control {
        let mut cfg = GewekeConfig::fixture(iterations.min(5_000), seed);
        cfg.warmup = 1_000;
        cfg.fault = Some(Fault::DropMassLaplaceRatio);
        let z = geweke_check(&cfg)?.max_abs_z();
        let detected = z > 4.0;
        println!("{} corrupted sampler detected (max |z| {z:.1})", verdict(detected));
        all &= detected;
    }
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
