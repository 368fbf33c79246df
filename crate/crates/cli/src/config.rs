//! Experiment file schema.

use std::path::{Path, PathBuf};

use chaoslab::apps::breuer_major::{BmExperiment, KernelShape, Polynomial};
use chaoslab::apps::neural_net::{Activation, InputFamily, NnExperiment};
use chaoslab::apps::spde::{PamChaosModel, SpdeExperiment};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "ThreadsRepr", into = "ThreadsRepr")]
pub enum Threads {
    Count(usize),
    #[default]
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ThreadsRepr {
    Count(usize),
    Word(String),
}

impl TryFrom<ThreadsRepr> for Threads {
    type Error = String;

    fn try_from(r: ThreadsRepr) -> Result<Self, String> {
        match r {
            ThreadsRepr::Count(n) => Ok(Threads::Count(n)),
            ThreadsRepr::Word(w) if w == "auto" => Ok(Threads::Auto),
            ThreadsRepr::Word(w) => Err(format!("expected \"auto\" or an integer, got {w:?}")),
        }
    }
}

impl From<Threads> for ThreadsRepr {
    fn from(t: Threads) -> Self {
        match t {
            Threads::Count(n) => ThreadsRepr::Count(n),
            Threads::Auto => ThreadsRepr::Word("auto".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    #[serde(default)]
    pub threads: Threads,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub selftest: SelftestConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub breuer_major: BreuerMajorConfig,
    #[serde(default)]
    pub neural_net: NeuralNetConfig,
    #[serde(default)]
    pub spde: SpdeConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelftestConfig {
    pub n_functionals: usize,
    pub dim_h: usize,
    pub dim_v: usize,
    pub max_order: usize,
    pub semigroup_times: [f64; 2],
    pub n_mc: usize,
    pub mehler_times: Vec<f64>,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        Self {
            n_functionals: 50,
            dim_h: 6,
            dim_v: 4,
            max_order: 4,
            semigroup_times: [0.3, 0.7],
            n_mc: 100_000,
            mehler_times: vec![0.1, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub n_functionals: usize,
    pub dim_h: usize,
    pub dim_v: usize,
    pub max_order: usize,
    pub n_mc_msbc: usize,
    pub n_mc_second_order: usize,
    pub n_mc_d2: usize,
    pub n_mc_gamma: usize,
    pub dictionary_size: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            n_functionals: 50,
            dim_h: 3,
            dim_v: 2,
            max_order: 3,
            n_mc_msbc: 10_000,
            n_mc_second_order: 2_000,
            n_mc_d2: 10_000,
            n_mc_gamma: 10_000,
            dictionary_size: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreuerMajorConfig {
    pub shape: KernelShape,
    /// Monomial coefficients of `f`, lowest degree first.
    pub f: Vec<f64>,
    pub horizons: Vec<f64>,
    pub k_nodes: usize,
    pub n_mc: usize,
    pub dt: f64,
    pub hermite_order: usize,
    pub dictionary_size: usize,
    pub majorization_horizon: f64,
}

impl Default for BreuerMajorConfig {
    fn default() -> Self {
        let d = BmExperiment::default();
        Self {
            shape: d.shape,
            f: d.f.coeffs,
            horizons: d.horizons,
            k_nodes: d.k_nodes,
            n_mc: d.n_mc,
            dt: d.dt,
            hermite_order: d.hermite_order,
            dictionary_size: d.dictionary_size,
            majorization_horizon: d.majorization_horizon,
        }
    }
}

impl BreuerMajorConfig {
    pub fn experiment(&self) -> BmExperiment {
        BmExperiment {
            shape: self.shape,
            f: Polynomial::new(self.f.clone()),
            horizons: self.horizons.clone(),
            k_nodes: self.k_nodes,
            n_mc: self.n_mc,
            dt: self.dt,
            hermite_order: self.hermite_order,
            dictionary_size: self.dictionary_size,
            majorization_horizon: self.majorization_horizon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationName {
    Tanh,
    Identity,
    Square,
    Hermite2,
    Cos,
}

impl ActivationName {
    pub fn activation(self) -> Activation {
        match self {
            ActivationName::Tanh => Activation::Tanh,
            ActivationName::Identity => Activation::Identity,
            ActivationName::Square => Activation::Square,
            ActivationName::Hermite2 => Activation::Hermite2,
            ActivationName::Cos => Activation::Cos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputName {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralNetConfig {
    pub activation: ActivationName,
    pub input: InputName,
    pub nu_nodes: usize,
    pub widths: Vec<usize>,
    pub covariance_widths: Vec<usize>,
    pub n_mc: usize,
    pub dictionary_size: usize,
    /// Also run the identity activation and check that both bound and
    /// distance vanish.
    pub linear_check: bool,
}

impl Default for NeuralNetConfig {
    fn default() -> Self {
        let d = NnExperiment::default();
        Self {
            activation: ActivationName::Tanh,
            input: InputName::Uniform,
            nu_nodes: d.nu_nodes,
            widths: d.widths,
            covariance_widths: d.covariance_widths,
            n_mc: d.n_mc,
            dictionary_size: d.dictionary_size,
            linear_check: true,
        }
    }
}

impl NeuralNetConfig {
    pub fn experiment(&self, activation: Activation) -> NnExperiment {
        NnExperiment {
            activation,
            family: match self.input {
                InputName::Uniform => InputFamily::Uniform,
                InputName::Gaussian => InputFamily::Gaussian,
            },
            nu_nodes: self.nu_nodes,
            widths: self.widths.clone(),
            covariance_widths: self.covariance_widths.clone(),
            n_mc: self.n_mc,
            dictionary_size: self.dictionary_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdeConfig {
    pub horizon: f64,
    pub n_trunc: usize,
    pub time_nodes: usize,
    pub k_nodes: usize,
    pub const_a: f64,
    pub const_b: f64,
    pub radii: Vec<f64>,
}

impl Default for SpdeConfig {
    fn default() -> Self {
        let d = SpdeExperiment::default();
        Self {
            horizon: d.model.horizon,
            n_trunc: d.model.n_trunc,
            time_nodes: d.model.time_nodes,
            k_nodes: d.model.k_nodes,
            const_a: d.model.const_a,
            const_b: d.model.const_b,
            radii: d.radii,
        }
    }
}

impl SpdeConfig {
    pub fn experiment(&self) -> SpdeExperiment {
        SpdeExperiment {
            model: PamChaosModel {
                horizon: self.horizon,
                n_trunc: self.n_trunc,
                time_nodes: self.time_nodes,
                k_nodes: self.k_nodes,
                const_a: self.const_a,
                const_b: self.const_b,
            },
            radii: self.radii.clone(),
        }
    }
}

fn positive(key: &str, n: usize) -> Result<(), ConfigError> {
    if n == 0 {
        return Err(invalid(key, "must be positive"));
    }
    Ok(())
}

fn at_least(key: &str, n: usize, min: usize) -> Result<(), ConfigError> {
    if n < min {
        return Err(invalid(key, format!("must be at least {min}, got {n}")));
    }
    Ok(())
}

fn positive_f(key: &str, x: f64) -> Result<(), ConfigError> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(key, format!("must be positive and finite, got {x}")));
    }
    Ok(())
}

fn increasing(key: &str, xs: &[f64], min_len: usize) -> Result<(), ConfigError> {
    if xs.len() < min_len {
        return Err(invalid(key, format!("needs at least {min_len} entries")));
    }
    for x in xs {
        positive_f(key, *x)?;
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(key, "must be strictly increasing"));
    }
    Ok(())
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every numeric key against the module preconditions.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Threads::Count(n) = self.threads {
            positive("threads", n)?;
        }

        let s = &self.selftest;
        positive("selftest.n_functionals", s.n_functionals)?;
        positive("selftest.dim_h", s.dim_h)?;
        positive("selftest.dim_v", s.dim_v)?;
        at_least("selftest.max_order", s.max_order, 2)?;
        at_least("selftest.n_mc", s.n_mc, 2)?;
        for t in s.semigroup_times.iter().chain(&s.mehler_times) {
            if !(*t >= 0.0 && t.is_finite()) {
                return Err(invalid("selftest.times", format!("times must be nonnegative, got {t}")));
            }
        }

        let b = &self.bounds;
        positive("bounds.n_functionals", b.n_functionals)?;
        positive("bounds.dim_h", b.dim_h)?;
        positive("bounds.dim_v", b.dim_v)?;
        positive("bounds.max_order", b.max_order)?;
        at_least("bounds.n_mc_msbc", b.n_mc_msbc, 2)?;
        positive("bounds.n_mc_second_order", b.n_mc_second_order)?;
        at_least("bounds.n_mc_d2", b.n_mc_d2, 4)?;
        at_least("bounds.n_mc_gamma", b.n_mc_gamma, 2)?;
        positive("bounds.dictionary_size", b.dictionary_size)?;

        let bm = &self.breuer_major;
        increasing("breuer_major.horizons", &bm.horizons, 2)?;
        positive("breuer_major.k_nodes", bm.k_nodes)?;
        at_least("breuer_major.n_mc", bm.n_mc, 4)?;
        positive_f("breuer_major.dt", bm.dt)?;
        // Support of g is one unit long; the taps need 16 points across it.
        if bm.dt > 1.0 / 16.0 {
            return Err(invalid("breuer_major.dt", "must be at most 1/16"));
        }
        positive("breuer_major.hermite_order", bm.hermite_order)?;
        positive("breuer_major.dictionary_size", bm.dictionary_size)?;
        positive_f("breuer_major.majorization_horizon", bm.majorization_horizon)?;
        if bm.f.is_empty() || bm.f.iter().any(|a| !a.is_finite()) {
            return Err(invalid("breuer_major.f", "needs finite coefficients"));
        }
        if Polynomial::new(bm.f.clone()).degree() + 1 > bm.hermite_order {
            return Err(invalid("breuer_major.hermite_order", "must exceed the degree of f"));
        }

        let nn = &self.neural_net;
        positive("neural_net.nu_nodes", nn.nu_nodes)?;
        if nn.widths.len() < 2 || nn.widths.contains(&0) {
            return Err(invalid("neural_net.widths", "needs at least two positive widths"));
        }
        if nn.covariance_widths.is_empty() || nn.covariance_widths.contains(&0) {
            return Err(invalid("neural_net.covariance_widths", "needs positive widths"));
        }
        at_least("neural_net.n_mc", nn.n_mc, 4)?;
        positive("neural_net.dictionary_size", nn.dictionary_size)?;

        let sp = &self.spde;
        positive_f("spde.horizon", sp.horizon)?;
        if !(2..=4).contains(&sp.n_trunc) {
            return Err(invalid("spde.n_trunc", "must lie in 2..=4"));
        }
        positive("spde.time_nodes", sp.time_nodes)?;
        positive("spde.k_nodes", sp.k_nodes)?;
        if !(sp.const_a >= 0.0 && sp.const_a.is_finite()) || !sp.const_b.is_finite() {
            return Err(invalid("spde.const_a", "majorant constants must be finite with a ≥ 0"));
        }
        increasing("spde.radii", &sp.radii, 2)?;
        Ok(())
    }
}
