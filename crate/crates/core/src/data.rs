//! Observations, CSV ingestion and the simulated benchmark data.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::Location;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegressorKind {
    Continuous,
    /// Two categorical factors forming a two-way layout.
    Categorical,
}

/// Responses `y` (n×p) with regressor locations. Observations sharing a
/// location share a site, and sites carry the score process.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub y: Vec<Vec<f64>>,
    pub x: Vec<Location>,
    pub sites: Arc<Vec<Location>>,
    pub site_of: Vec<usize>,
    /// Level labels of the two factors when the regressor is categorical.
    pub levels: Option<[Vec<String>; 2]>,
    response_dim: usize,
}

fn location_key(loc: &Location) -> Vec<u64> {
    match loc {
        Location::Point(p) => p.iter().map(|v| (v + 0.0).to_bits()).collect(),
        Location::Cell(a, b) => vec![u64::MAX, *a as u64, *b as u64],
    }
}

impl Dataset {
    pub fn new(y: Vec<Vec<f64>>, x: Vec<Location>) -> Result<Self> {
        let p = y.first().map_or(1, |r| r.len());
        Self::with_dim(y, x, p)
    }

    pub fn with_dim(y: Vec<Vec<f64>>, x: Vec<Location>, response_dim: usize) -> Result<Self> {
        if y.len() != x.len() {
            return Err(Error::Data(format!("{} responses but {} regressors", y.len(), x.len())));
        }
        if y.iter().any(|r| r.len() != response_dim) {
            return Err(Error::Data("responses have inconsistent dimension".into()));
        }
        if y.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("responses must be finite".into()));
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut sites = Vec::new();
        let mut site_of = Vec::with_capacity(x.len());
        for loc in &x {
            if let Location::Point(p) = loc {
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data("regressors must be finite".into()));
                }
            }
            let next = sites.len();
            let s = *index.entry(location_key(loc)).or_insert(next);
            if s == next {
                sites.push(loc.clone());
            }
            site_of.push(s);
        }
        Ok(Dataset {
            y,
            x,
            sites: Arc::new(sites),
            site_of,
            levels: None,
            response_dim,
        })
    }

    pub fn empty(response_dim: usize) -> Self {
        Dataset::with_dim(vec![], vec![], response_dim).expect("empty data is valid")
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn response_dim(&self) -> usize {
        self.response_dim
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    /// Observations at `indices`, with sites rebuilt.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let y = indices.iter().map(|&i| self.y[i].clone()).collect();
        let x = indices.iter().map(|&i| self.x[i].clone()).collect();
        let mut d = Dataset::with_dim(y, x, self.response_dim).expect("subset of valid data");
        d.levels = self.levels.clone();
        d
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        (0..self.response_dim)
            .map(|j| self.y.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }

    /// Sample covariance, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let p = self.response_dim;
        let m = self.mean();
        let denom = (self.len().max(2) - 1) as f64;
        let mut c = vec![0.0; p * p];
        for r in &self.y {
            for i in 0..p {
                for j in 0..p {
                    c[i * p + j] += (r[i] - m[i]) * (r[j] - m[j]) / denom;
                }
            }
        }
        c
    }

    /// Writes `x…, y…` columns with a header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        let q = match self.x.first() {
            Some(Location::Point(p)) => p.len(),
            Some(Location::Cell(..)) => 2,
            None => 1,
        };
        let mut header: Vec<String> = if q == 1 {
            vec!["x".into()]
        } else {
            (1..=q).map(|j| format!("x{j}")).collect()
        };
        if self.response_dim == 1 {
            header.push("y".into());
        } else {
            header.extend((1..=self.response_dim).map(|j| format!("y{j}")));
        }
        w.write_record(&header).map_err(csv_io)?;
        for (x, y) in self.x.iter().zip(&self.y) {
            let mut row: Vec<String> = match x {
                Location::Point(p) => p.iter().map(|v| format!("{v}")).collect(),
                Location::Cell(a, b) => match &self.levels {
                    Some(l) => vec![l[0][*a].clone(), l[1][*b].clone()],
                    None => vec![a.to_string(), b.to_string()],
                },
            };
            row.extend(y.iter().map(|v| format!("{v}")));
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

/// Column selection for [`ingest_csv`].
#[derive(Clone, Debug)]
pub struct CsvColumns {
    pub responses: Vec<String>,
    pub regressors: Vec<String>,
    pub kind: RegressorKind,
}

/// Reads a headed CSV. Errors carry the file line number and column name.
pub fn ingest_csv(path: &Path, cols: &CsvColumns) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Error::DataLine {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column `{name}` not found in header")))
    };
    let ycols: Vec<usize> = cols.responses.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let xcols: Vec<usize> = cols.regressors.iter().map(|c| find(c)).collect::<Result<_>>()?;
    if ycols.is_empty() || xcols.is_empty() {
        return Err(Error::Data("at least one response and one regressor column are required".into()));
    }
    if cols.kind == RegressorKind::Categorical && xcols.len() != 2 {
        return Err(Error::Data("categorical regressors need exactly two factor columns".into()));
    }

    let mut ys = Vec::new();
    let mut raw_x: Vec<Vec<String>> = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::DataLine {
                line,
                message: match e.kind() {
                    csv::ErrorKind::UnequalLengths {
                        expected_len, len, ..
                    } => format!("expected {expected_len} fields, found {len}"),
                    _ => e.to_string(),
                },
            }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut row = Vec::with_capacity(ycols.len());
        for (&c, name) in ycols.iter().zip(&cols.responses) {
            row.push(parse_cell(record.get(c), name, line)?);
        }
        ys.push(row);
        raw_x.push(
            xcols
                .iter()
                .zip(&cols.regressors)
                .map(|(&c, name)| match record.get(c) {
                    Some(s) if !s.is_empty() => Ok(s.to_string()),
                    _ => Err(Error::DataLine {
                        line,
                        message: format!("missing value in column `{name}`"),
                    }),
                })
                .collect::<Result<_>>()?,
        );
        lines.push(line);
    }
    if ys.len() < 2 {
        return Err(Error::Data(format!("need at least 2 observations, found {}", ys.len())));
    }

    match cols.kind {
        RegressorKind::Continuous => {
            let mut x = Vec::with_capacity(raw_x.len());
            for (row, &line) in raw_x.iter().zip(&lines) {
                let p = row
                    .iter()
                    .zip(&cols.regressors)
                    .map(|(s, name)| parse_cell(Some(s), name, line))
                    .collect::<Result<Vec<f64>>>()?;
                x.push(Location::Point(p));
            }
            Dataset::with_dim(ys, x, ycols.len())
        }
        RegressorKind::Categorical => {
            let mut levels: [Vec<String>; 2] = [vec![], vec![]];
            let mut x = Vec::with_capacity(raw_x.len());
            for row in &raw_x {
                let mut idx = [0usize; 2];
                for f in 0..2 {
                    idx[f] = match levels[f].iter().position(|l| *l == row[f]) {
                        Some(i) => i,
                        None => {
                            levels[f].push(row[f].clone());
                            levels[f].len() - 1
                        }
                    };
                }
                x.push(Location::Cell(idx[0], idx[1]));
            }
            let mut d = Dataset::with_dim(ys, x, ycols.len())?;
            d.levels = Some(levels);
            Ok(d)
        }
    }
}

fn parse_cell(cell: Option<&str>, column: &str, line: usize) -> Result<f64> {
    let s = cell.unwrap_or("");
    if s.is_empty() {
        return Err(Error::DataLine {
            line,
            message: format!("missing value in column `{column}`"),
        });
    }
    let v: f64 = s.parse().map_err(|_| Error::DataLine {
        line,
        message: format!("non-numeric value `{s}` in column `{column}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::DataLine {
            line,
            message: format!("non-finite value in column `{column}`"),
        });
    }
    Ok(v)
}

/// The three simulated regression designs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Simulation {
    /// Two-component mixture at ±1 with logistic weights.
    I { sigma: f64, r: f64 },
    /// Four-component mixture at ±1, ±2.
    II { sigma: f64 },
    /// Nonlinear mean with optional jumps (`c`) and heteroscedasticity (`d`).
    III { a: f64, b: f64, c: bool, d: bool },
}

/// `p(s = 1 | x)` for design I.
pub fn design_i_probability(x: f64, r: f64) -> f64 {
    let e = r * (2.0 * PI * x).sin();
    1.0 / (1.0 + (-e).exp())
}

/// Normalized component weights for design II.
pub fn design_ii_weights(x: f64) -> [f64; 4] {
    let raw = [
        (2.0 * (2.0 * PI * x).sin()).exp(),
        0.5 + 0.4 * (x - 0.5),
        0.5 - 2.0 * (x - 0.5) * (x - 0.5),
        1.0,
    ];
    let total: f64 = raw.iter().sum();
    raw.map(|w| w / total)
}

pub fn design_iii_mean(x: f64, a: f64, b: f64, c: bool) -> f64 {
    let g = if x < a || x > b {
        0.0
    } else {
        (2.0 * PI * (x - a) / (b - a)).sin()
    };
    let h = if !c {
        0.0
    } else if x < 1.0 / 3.0 {
        -2.0
    } else if x < 0.75 {
        -0.75
    } else {
        0.0
    };
    g + h
}

pub fn design_iii_sd(x: f64, d: bool) -> f64 {
    if d {
        0.1 * 0.15 * (1.0 + 19.0 * (2.0 * PI * x).sin().abs())
    } else {
        0.1
    }
}

pub fn simulate<R: Rng + ?Sized>(design: Simulation, n: usize, rng: &mut R) -> Result<Dataset> {
    match design {
        Simulation::I { sigma, .. } | Simulation::II { sigma } if !(sigma > 0.0) => {
            return Err(Error::Config("simulation sigma must be positive".into()));
        }
        Simulation::III { a, b, .. } if !(a < b) => {
            return Err(Error::Config("simulation requires a < b".into()));
        }
        _ => {}
    }
    let mut ys = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random();
        let e: f64 = StandardNormal.sample(rng);
        let u: f64 = rng.random();
        let y = match design {
            Simulation::I { sigma, r } => {
                let mean = if u < design_i_probability(x, r) { -1.0 } else { 1.0 };
                mean + sigma * e
            }
            Simulation::II { sigma } => {
                let w = design_ii_weights(x);
                let means = [-1.0, 1.0, -2.0, 2.0];
                let mut acc = 0.0;
                let mut mean = means[3];
                for (wi, mi) in w.iter().zip(means) {
                    acc += wi;
                    if u < acc {
                        mean = mi;
                        break;
                    }
                }
                mean + sigma * e
            }
            Simulation::III { a, b, c, d } => design_iii_mean(x, a, b, c) + design_iii_sd(x, d) * e,
        };
        ys.push(vec![y]);
        xs.push(Location::Point(vec![x]));
    }
    Dataset::with_dim(ys, xs, 1)
}
