//! Chain execution and on-disk outputs.
//!
//! An archive is JSON lines: a header carrying the data and schedule, then
//! one record per retained state. It holds no timing, so a fixed seed gives
//! identical bytes. Traces are CSV with columns `iteration, K, M, tau.*,
//! xi.*, acceptance.*`; acceptance columns are rates since the previous
//! retained record.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::sampler::{ChainState, Counters, Model, Sampler};
use crate::score::Location;

pub const FORMAT: &str = "ncorm-archive/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Schedule {
    pub fn retained(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    /// Whether sweep `t` (1-based) is kept.
    pub fn keeps(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in).is_multiple_of(self.thin)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub format: String,
    pub chain: usize,
    pub seed: u64,
    pub schedule: Schedule,
    pub a: f64,
    pub response_dim: usize,
    pub x: Vec<Location>,
    pub y: Vec<Vec<f64>>,
    pub levels: Option<[Vec<String>; 2]>,
}

impl ArchiveHeader {
    pub fn dataset(&self) -> Result<Dataset> {
        let mut d = Dataset::with_dim(self.y.clone(), self.x.clone(), self.response_dim)?;
        d.levels = self.levels.clone();
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub iteration: u64,
    pub state: ChainState,
}

#[derive(Clone, Debug)]
pub struct ChainSummary {
    pub seed: u64,
    pub retained: usize,
    pub wall: Duration,
    pub block_times: Vec<(String, Duration)>,
    /// Post-burn-in acceptance rate by block; NaN for blocks never proposed.
    pub acceptance: Vec<(String, f64)>,
    pub counters: Counters,
}

/// Seed of chain `c` in a family started from `seed`.
pub fn chain_seed(seed: u64, chain: usize) -> u64 {
    if chain == 0 {
        seed
    } else {
        substream(seed, chain as u64).random()
    }
}

/// Runs `schedule.iterations` sweeps, adapting during burn-in only, and
/// hands each retained state to `keep` with the windowed acceptance rates.
pub fn run_chain<F>(
    model: Model,
    data: Dataset,
    schedule: Schedule,
    seed: u64,
    mut keep: F,
) -> Result<ChainSummary>
where
    F: FnMut(u64, &ChainState, &[(String, f64)]) -> Result<()>,
{
    if schedule.thin == 0 || schedule.iterations <= schedule.burn_in {
        return Err(Error::Config("schedule needs iterations > burn-in and thin ≥ 1".into()));
    }
    let start = Instant::now();
    let mut sampler = Sampler::new(model, data, seed)?;
    let mut at_burn_in = sampler.acceptance_totals();
    let mut retained = 0;
    for t in 1..=schedule.iterations {
        sampler.sweep()?;
        if t == schedule.burn_in {
            sampler.set_adapting(false);
            sampler.take_acceptance();
            at_burn_in = sampler.acceptance_totals();
        }
        if schedule.keeps(t) {
            let rates = sampler.take_acceptance();
            keep(t as u64, sampler.state(), &rates)?;
            retained += 1;
        }
    }
    let acceptance = sampler
        .acceptance_totals()
        .into_iter()
        .zip(at_burn_in)
        .map(|((name, a, p), (_, a0, p0))| {
            let p = p - p0;
            (name, if p == 0 { f64::NAN } else { (a - a0) as f64 / p as f64 })
        })
        .collect();
    Ok(ChainSummary {
        seed,
        retained,
        wall: start.elapsed(),
        block_times: sampler
            .block_times()
            .iter()
            .map(|(n, d)| (n.to_string(), *d))
            .collect(),
        acceptance,
        counters: sampler.counters(),
    })
}

/// Convenience wrapper collecting the retained states in memory.
pub fn collect_chain(
    model: Model,
    data: Dataset,
    schedule: Schedule,
    seed: u64,
) -> Result<(Vec<ChainState>, ChainSummary)> {
    let mut states = Vec::with_capacity(schedule.retained());
    let summary = run_chain(model, data, schedule, seed, |_, s, _| {
        states.push(s.clone());
        Ok(())
    })?;
    Ok((states, summary))
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Data(format!("archive: {e}"))
}

fn trace_header(state: &ChainState, rates: &[(String, f64)]) -> Vec<String> {
    let mut cols = vec!["iteration".to_string(), "K".into(), "M".into()];
    cols.extend(state.score_params.names().iter().map(|n| format!("tau.{n}")));
    cols.push("xi.sigma".into());
    cols.push("xi.gamma_shape".into());
    cols.extend(rates.iter().map(|(n, _)| format!("acceptance.{n}")));
    cols
}

fn trace_row(t: u64, state: &ChainState, rates: &[(String, f64)]) -> Vec<String> {
    let mut row = vec![t.to_string(), state.k().to_string(), state.mass.to_string()];
    row.extend(state.score_params.values().iter().map(f64::to_string));
    row.push(state.levy.sigma.to_string());
    row.push(state.levy.gamma_shape.to_string());
    row.extend(rates.iter().map(|(_, r)| r.to_string()));
    row
}

#[derive(Clone, Debug)]
pub struct FitOutput {
    pub archives: Vec<PathBuf>,
    pub traces: Vec<PathBuf>,
    pub report: PathBuf,
    pub summaries: Vec<ChainSummary>,
}

/// Runs every configured chain, writing `chain{c}.jsonl`, `trace{c}.csv` and
/// `report.txt` into `dir`.
pub fn fit(config: &RunConfig, data: &Dataset, dir: &Path) -> Result<FitOutput> {
    std::fs::create_dir_all(dir)?;
    let s = &config.sampler;
    let schedule = Schedule {
        iterations: s.iterations,
        burn_in: s.burn_in,
        thin: s.thin,
    };
    let mut out = FitOutput {
        archives: vec![],
        traces: vec![],
        report: dir.join("report.txt"),
        summaries: vec![],
    };
    for c in 0..s.chains {
        let seed = chain_seed(s.seed, c);
        let model = config.model_for(data)?;
        let archive_path = dir.join(format!("chain{c}.jsonl"));
        let trace_path = dir.join(format!("trace{c}.csv"));
        let mut archive = BufWriter::new(File::create(&archive_path)?);
        let header = ArchiveHeader {
            format: FORMAT.into(),
            chain: c,
            seed,
            schedule,
            a: model.a,
            response_dim: data.response_dim(),
            x: data.x.clone(),
            y: data.y.clone(),
            levels: data.levels.clone(),
        };
        serde_json::to_writer(&mut archive, &header).map_err(json_err)?;
        archive.write_all(b"\n")?;
        let mut trace = csv::Writer::from_path(&trace_path)
            .map_err(|e| Error::Data(format!("{}: {e}", trace_path.display())))?;
        let mut first = true;
        let summary = run_chain(model, data.clone(), schedule, seed, |t, state, rates| {
            serde_json::to_writer(
                &mut archive,
                &ArchiveRecord {
                    iteration: t,
                    state: state.clone(),
                },
            )
            .map_err(json_err)?;
            archive.write_all(b"\n")?;
            let csv_err = |e: csv::Error| Error::Data(format!("trace: {e}"));
            if first {
                trace.write_record(trace_header(state, rates)).map_err(csv_err)?;
                first = false;
            }
            trace.write_record(trace_row(t, state, rates)).map_err(csv_err)?;
            Ok(())
        })?;
        archive.flush()?;
        trace.flush()?;
        out.archives.push(archive_path);
        out.traces.push(trace_path);
        out.summaries.push(summary);
    }
    write_report(&out.report, config, data, &out.summaries)?;
    Ok(out)
}

pub fn read_archive(path: &Path) -> Result<(ArchiveHeader, Vec<ArchiveRecord>)> {
    let file = File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Data("archive is empty".into()))??;
    let header: ArchiveHeader = serde_json::from_str(&first).map_err(json_err)?;
    if header.format != FORMAT {
        return Err(Error::Data(format!("unsupported archive format `{}`", header.format)));
    }
    let data = header.dataset()?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let record: ArchiveRecord = serde_json::from_str(&line).map_err(|e| Error::DataLine {
            line: i + 2,
            message: e.to_string(),
        })?;
        record.state.check(&data).map_err(|e| Error::DataLine {
            line: i + 2,
            message: e,
        })?;
        records.push(record);
    }
    Ok((header, records))
}

fn write_report(path: &Path, config: &RunConfig, data: &Dataset, chains: &[ChainSummary]) -> Result<()> {
    let s = &config.sampler;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "observations: {} (sites {})", data.len(), data.site_count())?;
    writeln!(w, "levy family: {:?}", config.levy.family)?;
    writeln!(
        w,
        "schedule: {} iterations, burn-in {}, thin {}, retained {} per chain",
        s.iterations,
        s.burn_in,
        s.thin,
        s.retained()
    )?;
    writeln!(w, "estimator a: {}", s.a)?;
    for (c, sum) in chains.iter().enumerate() {
        writeln!(w)?;
        writeln!(w, "chain {c}: seed {}", sum.seed)?;
        writeln!(w, "  wall time: {:.3} s", sum.wall.as_secs_f64())?;
        writeln!(
            w,
            "  laplace estimates: {} (proposals touching the functional: {})",
            sum.counters.estimates, sum.counters.laplace_proposals
        )?;
        writeln!(w, "  post-burn-in acceptance:")?;
        for (name, r) in &sum.acceptance {
            if r.is_finite() {
                writeln!(w, "    {name:<16} {r:.3}")?;
            }
        }
        writeln!(w, "  time by block:")?;
        for (name, d) in &sum.block_times {
            writeln!(w, "    {name:<16} {:.3} s", d.as_secs_f64())?;
        }
    }
    w.flush()?;
    Ok(())
}
