//! Run configuration.
//!
//! A TOML file whose keys are flattened to dotted names, so
//! `sampler.iterations = 500` and a `[sampler]` table with `iterations = 500`
//! are equivalent. Unknown keys are rejected. See the README for the full
//! key reference.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::{CsvColumns, Dataset, RegressorKind};
use crate::error::{Error, Result};
use crate::estimator::DEFAULT_A;
use crate::kernel::KernelSpec;
use crate::levy::LevySpec;
use crate::parallel::Execution;
use crate::predictive::DEFAULT_REMAINDER_DRAWS;
use crate::prior::Prior;
use crate::sampler::{Model, Priors, Updates, DEFAULT_MAX_POINTS};
use crate::score::ScoreParams;

#[derive(Clone, Debug, PartialEq)]
pub enum ScoreKind {
    /// Chosen from the regressor type.
    Auto,
    GaussianProcess,
    AnovaTwoWay,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub a: f64,
    pub max_points: f64,
    pub v_updates: Option<usize>,
    pub initial_clusters: usize,
    pub parallel: bool,
}

impl SamplerConfig {
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    /// Regressor values; for categorical data, `row:col` level labels.
    pub x: Vec<String>,
    pub y_min: f64,
    pub y_max: f64,
    pub y_points: usize,
    pub remainder_draws: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub responses: Vec<String>,
    pub regressors: Vec<String>,
    pub kind: RegressorKind,
}

impl DataConfig {
    pub fn columns(&self) -> CsvColumns {
        CsvColumns {
            responses: self.responses.clone(),
            regressors: self.regressors.clone(),
            kind: self.kind,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub levy: LevySpec,
    pub score_kind: ScoreKind,
    /// Starting score hyperparameters, keyed by name; missing ones default to 1.
    pub score_start: BTreeMap<String, f64>,
    pub kernel: Option<KernelSpec>,
    pub mass: f64,
    pub priors: BTreeMap<String, Prior>,
    pub updates: Updates,
    pub sampler: SamplerConfig,
    pub grid: GridConfig,
    pub data: DataConfig,
    pub output_dir: PathBuf,
    pub folds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            levy: LevySpec::gamma(),
            score_kind: ScoreKind::Auto,
            score_start: BTreeMap::new(),
            kernel: None,
            mass: 1.0,
            priors: BTreeMap::new(),
            updates: Updates::default(),
            sampler: SamplerConfig {
                iterations: 33_000,
                burn_in: 3_000,
                thin: 3,
                seed: 1,
                chains: 1,
                a: DEFAULT_A,
                max_points: DEFAULT_MAX_POINTS,
                v_updates: None,
                initial_clusters: 5,
                parallel: true,
            },
            grid: GridConfig {
                x: vec![],
                y_min: -3.0,
                y_max: 3.0,
                y_points: 101,
                remainder_draws: DEFAULT_REMAINDER_DRAWS,
            },
            data: DataConfig {
                path: None,
                responses: vec!["y".into()],
                regressors: vec!["x".into()],
                kind: RegressorKind::Continuous,
            },
            output_dir: PathBuf::from("out"),
            folds: 10,
        }
    }
}

type Flat = BTreeMap<String, toml::Value>;

fn flatten(prefix: &str, table: &toml::Table, out: &mut Flat) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn bad(key: &str, want: &str) -> Error {
    Error::Config(format!("`{key}` must be {want}"))
}

struct Keys(Flat);

impl Keys {
    fn take(&mut self, key: &str) -> Option<toml::Value> {
        self.0.remove(key)
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(f)),
            Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
            Some(_) => Err(bad(key, "a number")),
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if i >= 0 => Ok(Some(i as usize)),
            Some(_) => Err(bad(key, "a non-negative integer")),
        }
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(b)),
            Some(_) => Err(bad(key, "true or false")),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(bad(key, "a string")),
        }
    }

    fn strings(&mut self, key: &str) -> Result<Option<Vec<String>>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(vec![s])),
            Some(toml::Value::Array(a)) => a
                .into_iter()
                .map(|v| match v {
                    toml::Value::String(s) => Ok(s),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    toml::Value::Integer(i) => Ok(i.to_string()),
                    _ => Err(bad(key, "a list of strings or numbers")),
                })
                .collect::<Result<_>>()
                .map(Some),
            Some(_) => Err(bad(key, "a list")),
        }
    }

    fn numbers(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(vec![f])),
            Some(toml::Value::Integer(i)) => Ok(Some(vec![i as f64])),
            Some(toml::Value::Array(a)) => a
                .into_iter()
                .map(|v| match v {
                    toml::Value::Float(f) => Ok(f),
                    toml::Value::Integer(i) => Ok(i as f64),
                    _ => Err(bad(key, "a list of numbers")),
                })
                .collect::<Result<_>>()
                .map(Some),
            Some(_) => Err(bad(key, "a list of numbers")),
        }
    }

    fn prior(&mut self, base: &str) -> Result<Option<Prior>> {
        let dist = self.string(&format!("{base}.dist"))?;
        let shape = self.f64(&format!("{base}.shape"))?;
        let rate = self.f64(&format!("{base}.rate"))?;
        let scale = self.f64(&format!("{base}.scale"))?;
        let low = self.f64(&format!("{base}.low"))?;
        let high = self.f64(&format!("{base}.high"))?;
        let Some(dist) = dist else {
            if [shape, rate, scale, low, high].iter().any(Option::is_some) {
                return Err(Error::Config(format!("`{base}.dist` is required")));
            }
            return Ok(None);
        };
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Config(format!("`{base}.{name}` is required")))
        };
        let p = match dist.as_str() {
            "gamma" => Prior::Gamma {
                shape: need(shape, "shape")?,
                rate: need(rate, "rate")?,
            },
            "inverse_gamma" => Prior::InverseGamma {
                shape: need(shape, "shape")?,
                scale: need(scale, "scale")?,
            },
            "uniform" => Prior::Uniform {
                low: need(low, "low")?,
                high: need(high, "high")?,
            },
            other => return Err(Error::Config(format!("unknown prior `{other}` at `{base}`"))),
        };
        p.validate().map_err(|e| Error::Config(format!("{base}: {e}")))?;
        Ok(Some(p))
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let mut flat = Flat::new();
        flatten("", &table, &mut flat);
        let mut k = Keys(flat);
        let mut c = RunConfig::default();

        let family = k.string("model.levy.family")?.unwrap_or_else(|| "gamma".into());
        let sigma = k.f64("model.levy.sigma")?;
        let lambda = k.f64("model.levy.lambda")?.unwrap_or(1.0);
        let gamma_shape = k.f64("model.levy.gamma_shape")?;
        let spec = match family.as_str() {
            "gamma" => Ok(LevySpec::gamma()),
            "generalized_gamma" => LevySpec::generalized_gamma(sigma.unwrap_or(0.5), lambda),
            "stable_beta" => {
                LevySpec::stable_beta(sigma.unwrap_or(0.5), gamma_shape.unwrap_or(1.0), lambda)
            }
            "beta" => LevySpec::beta(gamma_shape.unwrap_or(1.0)),
            other => return Err(Error::Config(format!("unknown Lévy family `{other}`"))),
        };
        c.levy = spec.map_err(|e| Error::Config(e.to_string()))?;
        if let Some(b) = k.f64("model.levy.breakpoint")? {
            c.levy = c.levy.with_breakpoint(b).map_err(|e| Error::Config(e.to_string()))?;
        }

        c.score_kind = match k.string("model.score.kind")?.as_deref() {
            None | Some("auto") => ScoreKind::Auto,
            Some("gp") => ScoreKind::GaussianProcess,
            Some("anova") => ScoreKind::AnovaTwoWay,
            Some(other) => return Err(Error::Config(format!("unknown score kind `{other}`"))),
        };
        for name in ["variance", "lengthscale", "row_variance", "col_variance", "cell_variance"] {
            if let Some(v) = k.f64(&format!("model.score.{name}"))? {
                if !(v > 0.0) {
                    return Err(bad(&format!("model.score.{name}"), "positive"));
                }
                c.score_start.insert(name.into(), v);
            }
        }

        let kernel_kind = k.string("model.kernel.kind")?;
        let mu = k.numbers("model.kernel.mu")?;
        let sigma2 = k.f64("model.kernel.sigma2")?;
        let mix = k.f64("model.kernel.mix_fraction")?;
        let lambda_shrink = k.f64("model.kernel.lambda")?;
        let nu = k.f64("model.kernel.nu")?;
        let psi = k.numbers("model.kernel.psi")?;
        c.kernel = match kernel_kind.as_deref() {
            None => None,
            Some("normal") => Some(KernelSpec::UnivariateNormal {
                mu: mu.as_ref().and_then(|m| m.first().copied()).unwrap_or(0.0),
                sigma2: sigma2.unwrap_or(1.0),
                mix_fraction: mix.unwrap_or(0.5),
            }),
            Some("mvnormal") => {
                let mu0 = mu.ok_or_else(|| Error::Config("`model.kernel.mu` is required".into()))?;
                let p = mu0.len();
                let psi = psi.unwrap_or_else(|| {
                    (0..p * p).map(|i| if i % (p + 1) == 0 { 1.0 } else { 0.0 }).collect()
                });
                Some(KernelSpec::MultivariateNormal {
                    mu0,
                    lambda_shrink: lambda_shrink.unwrap_or(0.1),
                    nu_df: nu.unwrap_or(p as f64 + 2.0),
                    psi,
                })
            }
            Some(other) => return Err(Error::Config(format!("unknown kernel `{other}`"))),
        };
        if let Some(kernel) = &c.kernel {
            kernel.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(m) = k.f64("model.mass")? {
            c.mass = m;
        }

        for name in [
            "mass",
            "sigma",
            "gamma_shape",
            "mix_fraction",
            "tau.variance",
            "tau.lengthscale",
            "tau.row_variance",
            "tau.col_variance",
            "tau.cell_variance",
        ] {
            if let Some(p) = k.prior(&format!("prior.{name}"))? {
                c.priors.insert(name.into(), p);
            }
        }

        let u = &mut c.updates;
        for (name, slot) in [
            ("allocation", &mut u.allocation),
            ("jumps", &mut u.jumps),
            ("scores", &mut u.scores),
            ("v", &mut u.v),
            ("v_interweave", &mut u.v_interweave),
            ("sigma", &mut u.sigma),
            ("gamma_shape", &mut u.gamma_shape),
            ("mass", &mut u.mass),
            ("tau", &mut u.tau),
            ("tau_interweave", &mut u.tau_interweave),
            ("kernel_location", &mut u.kernel_location),
            ("kernel_scale", &mut u.kernel_scale),
            ("kernel_mix", &mut u.kernel_mix),
        ] {
            if let Some(b) = k.bool(&format!("update.{name}"))? {
                *slot = b;
            }
        }

        let s = &mut c.sampler;
        if let Some(v) = k.usize("sampler.iterations")? {
            s.iterations = v;
        }
        if let Some(v) = k.usize("sampler.burn_in")? {
            s.burn_in = v;
        }
        if let Some(v) = k.usize("sampler.thin")? {
            s.thin = v;
        }
        if let Some(v) = k.usize("sampler.seed")? {
            s.seed = v as u64;
        }
        if let Some(v) = k.usize("sampler.chains")? {
            s.chains = v;
        }
        if let Some(v) = k.usize("sampler.initial_clusters")? {
            s.initial_clusters = v;
        }
        if let Some(v) = k.usize("sampler.v_updates")? {
            s.v_updates = Some(v);
        }
        if let Some(v) = k.bool("sampler.parallel")? {
            s.parallel = v;
        }
        if let Some(v) = k.f64("estimator.a")? {
            s.a = v;
        }
        if let Some(v) = k.f64("estimator.max_points")? {
            s.max_points = v;
        }

        if let Some(v) = k.string("data.path")? {
            c.data.path = Some(PathBuf::from(v));
        }
        if let Some(v) = k.strings("data.responses")? {
            c.data.responses = v;
        }
        if let Some(v) = k.strings("data.regressors")? {
            c.data.regressors = v;
        }
        match k.string("data.kind")?.as_deref() {
            None | Some("continuous") => {}
            Some("categorical") => c.data.kind = RegressorKind::Categorical,
            Some(other) => return Err(Error::Config(format!("unknown regressor kind `{other}`"))),
        }

        if let Some(v) = k.string("output.dir")? {
            c.output_dir = PathBuf::from(v);
        }
        if let Some(v) = k.strings("output.grid.x")? {
            c.grid.x = v;
        }
        if let Some(v) = k.f64("output.grid.y_min")? {
            c.grid.y_min = v;
        }
        if let Some(v) = k.f64("output.grid.y_max")? {
            c.grid.y_max = v;
        }
        if let Some(v) = k.usize("output.grid.y_points")? {
            c.grid.y_points = v;
        }
        if let Some(v) = k.usize("output.grid.remainder_draws")? {
            c.grid.remainder_draws = v;
        }
        if let Some(v) = k.usize("cv.folds")? {
            c.folds = v;
        }

        if let Some(key) = k.0.keys().next() {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sampler;
        if s.iterations <= s.burn_in {
            return Err(Error::Config("sampler.iterations must exceed sampler.burn_in".into()));
        }
        if s.thin == 0 {
            return Err(Error::Config("sampler.thin must be at least 1".into()));
        }
        if s.chains == 0 {
            return Err(Error::Config("sampler.chains must be at least 1".into()));
        }
        if !(s.a > 1.0) {
            return Err(Error::Config("estimator.a must exceed 1".into()));
        }
        if !(self.mass > 0.0) {
            return Err(Error::Config("model.mass must be positive".into()));
        }
        if self.grid.y_points < 2 || !(self.grid.y_max > self.grid.y_min) {
            return Err(Error::Config("output.grid needs y_max > y_min and y_points ≥ 2".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("cv.folds must be at least 2".into()));
        }
        Ok(())
    }

    /// The model for `data`: the score family follows the regressor type
    /// unless fixed, and the kernel defaults to one centred on the data.
    pub fn model_for(&self, data: &Dataset) -> Result<Model> {
        let categorical = data.levels.is_some();
        let kind = match self.score_kind {
            ScoreKind::Auto if categorical => ScoreKind::AnovaTwoWay,
            ScoreKind::Auto => ScoreKind::GaussianProcess,
            ref k => k.clone(),
        };
        let start = |name: &str| self.score_start.get(name).copied().unwrap_or(1.0);
        let score_params = match kind {
            ScoreKind::AnovaTwoWay => ScoreParams::AnovaTwoWay {
                row_variance: start("row_variance"),
                col_variance: start("col_variance"),
                cell_variance: start("cell_variance"),
            },
            _ => ScoreParams::GaussianProcess {
                variance: start("variance"),
                lengthscale: start("lengthscale"),
            },
        };
        let kernel = match &self.kernel {
            Some(k) => k.clone(),
            None => default_kernel(data),
        };
        let mut model = Model::new(self.levy.clone(), score_params.clone(), kernel);
        model.mass = self.mass;
        model.priors = self.priors_for(&score_params);
        model.updates = self.updates.clone();
        model.a = self.sampler.a;
        model.max_points = self.sampler.max_points;
        model.v_updates = self.sampler.v_updates;
        model.initial_clusters = self.sampler.initial_clusters;
        model.execution = self.execution();
        model.validate(data).map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        Ok(model)
    }

    pub fn execution(&self) -> Execution {
        if self.sampler.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    fn priors_for(&self, params: &ScoreParams) -> Priors {
        let mut p = Priors::defaults_for(params);
        let get = |k: &str| self.priors.get(k).copied();
        p.mass = get("mass").unwrap_or(p.mass);
        p.sigma = get("sigma").unwrap_or(p.sigma);
        p.gamma_shape = get("gamma_shape").unwrap_or(p.gamma_shape);
        p.mix_fraction = get("mix_fraction").unwrap_or(p.mix_fraction);
        for (slot, name) in p.tau.iter_mut().zip(params.names()) {
            if let Some(q) = get(&format!("tau.{name}")) {
                *slot = q;
            }
        }
        p
    }
}

/// Normal kernel at the sample mean with the sample variance as total scale.
pub fn default_kernel(data: &Dataset) -> KernelSpec {
    let p = data.response_dim();
    if data.len() < 2 {
        return if p == 1 {
            KernelSpec::UnivariateNormal {
                mu: 0.0,
                sigma2: 1.0,
                mix_fraction: 0.5,
            }
        } else {
            KernelSpec::MultivariateNormal {
                mu0: vec![0.0; p],
                lambda_shrink: 0.1,
                nu_df: p as f64 + 2.0,
                psi: (0..p * p).map(|i| if i % (p + 1) == 0 { 1.0 } else { 0.0 }).collect(),
            }
        };
    }
    let mean = data.mean();
    let cov = data.covariance();
    if p == 1 {
        KernelSpec::UnivariateNormal {
            mu: mean[0],
            sigma2: cov[0].max(1e-12),
            mix_fraction: 0.5,
        }
    } else {
        KernelSpec::MultivariateNormal {
            mu0: mean,
            lambda_shrink: 0.1,
            nu_df: p as f64 + 2.0,
            psi: cov,
        }
    }
}
