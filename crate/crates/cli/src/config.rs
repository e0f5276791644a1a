//! Run configuration files.
//!
//! The format is line based: `key = value`, `#` starts a comment, blank lines
//! are ignored. `layer` and `component` may repeat and are kept in order; every
//! other key may appear once. Layer lines read
//! `layer = <gaussian|nb|tree> [repeat=N] [param=value ...]`.
//!
//! ```text
//! data = moons
//! n_train = 1000
//! n_test = 500
//! seed = 7
//! eps = 0.1
//! trace = true
//! layer = gaussian
//! layer = nb repeat=15 frame=mswd
//! layer = tree kappa=0.9 max_leaf_nodes=10
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use baryflow::datasets::{GaussianComponent, GeneratorKind};
use baryflow::gaussian::GaussianConfig;
use baryflow::nb::{FrameSource, NbConfig};
use baryflow::tree::{NodeWeighting, TreeConfig};
use baryflow::LayerConfig;

use crate::error::CliError;

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Generator {
        kind: GeneratorKind,
        n_train: Option<usize>,
        n_test: Option<usize>,
        k: Option<usize>,
        noise: Option<f64>,
        seed: Option<u64>,
        components: Vec<GaussianComponent>,
    },
    Csv {
        train: PathBuf,
        test: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub weights: Option<Vec<f64>>,
    pub schedule: Vec<LayerConfig>,
    pub seed: u64,
    pub eps: f64,
    pub max_iter: usize,
    pub trace: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Generator {
                kind: GeneratorKind::Moons,
                n_train: None,
                n_test: None,
                k: None,
                noise: None,
                seed: None,
                components: Vec::new(),
            },
            weights: None,
            schedule: Vec::new(),
            seed: 0,
            eps: 0.1,
            max_iter: 100,
            trace: false,
            out: PathBuf::from("."),
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> CliError {
    CliError::Config {
        line,
        message: message.into(),
    }
}

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| err(line, format!("`{key}`: cannot parse `{}`", value.trim())))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(err(
            line,
            format!("`{key}`: expected true or false, got `{other}`"),
        )),
    }
}

fn parse_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value.split(',').map(|v| parse(line, key, v)).collect()
}

fn params(line: usize, tokens: &[&str]) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for t in tokens {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected param=value, got `{t}`")))?;
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(err(line, format!("parameter `{k}` given twice")));
        }
    }
    Ok(out)
}

/// Parses one `layer` value into `repeat` copies of a layer config.
pub fn parse_layer(line: usize, value: &str) -> Result<Vec<LayerConfig>, CliError> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    let Some((kind, rest)) = tokens.split_first() else {
        return Err(err(line, "`layer` needs a kind"));
    };
    let mut p = params(line, rest)?;
    let repeat: usize = p
        .remove("repeat")
        .map_or(Ok(1), |v| parse(line, "repeat", &v))?;
    if repeat == 0 {
        return Err(err(line, "`repeat` must be at least 1"));
    }
    let mut take = |key: &str| p.remove(key);
    let layer = match *kind {
        "gaussian" => {
            let mut c = GaussianConfig::default();
            if let Some(v) = take("reg") {
                c.reg = parse(line, "reg", &v)?;
            }
            if let Some(v) = take("tol") {
                c.tol = parse(line, "tol", &v)?;
            }
            if let Some(v) = take("max_iter") {
                c.max_iter = parse(line, "max_iter", &v)?;
            }
            LayerConfig::Gaussian(c)
        }
        "nb" => {
            let mut c = NbConfig::default();
            if let Some(v) = take("frame") {
                c.frame = v
                    .parse::<FrameSource>()
                    .map_err(|e| err(line, e.to_string()))?;
            }
            if let Some(v) = take("m") {
                c.m = Some(parse(line, "m", &v)?);
            }
            if let Some(v) = take("bins") {
                c.density.bins = parse(line, "bins", &v)?;
            }
            if let Some(v) = take("alpha") {
                c.density.alpha = parse(line, "alpha", &v)?;
            }
            if let Some(v) = take("std_floor") {
                c.density.std_floor = parse(line, "std_floor", &v)?;
            }
            if let Some(v) = take("p") {
                c.mswd.p = parse(line, "p", &v)?;
            }
            if let Some(v) = take("opt_iter") {
                c.mswd.max_iter = parse(line, "opt_iter", &v)?;
            }
            if let Some(v) = take("step") {
                c.mswd.initial_step = parse(line, "step", &v)?;
            }
            if let Some(v) = take("shrink") {
                c.mswd.shrink = parse(line, "shrink", &v)?;
            }
            if let Some(v) = take("halvings") {
                c.mswd.max_halvings = parse(line, "halvings", &v)?;
            }
            if let Some(v) = take("opt_tol") {
                c.mswd.tol = parse(line, "opt_tol", &v)?;
            }
            LayerConfig::Nb(c)
        }
        "tree" => {
            let mut c = TreeConfig::default();
            if let Some(v) = take("max_leaf_nodes") {
                c.max_leaf_nodes = parse(line, "max_leaf_nodes", &v)?;
            }
            if let Some(v) = take("min_samples_leaf") {
                c.min_samples_leaf = parse(line, "min_samples_leaf", &v)?;
            }
            if let Some(v) = take("kappa") {
                c.kappa = parse(line, "kappa", &v)?;
            }
            if let Some(v) = take("preprocess") {
                c.preprocess = parse_bool(line, "preprocess", &v)?;
            }
            if let Some(v) = take("weighting") {
                c.weighting = match v.as_str() {
                    "class_weighted" => NodeWeighting::ClassWeighted,
                    "mass_only" => NodeWeighting::MassOnly,
                    other => return Err(err(line, format!("unknown weighting `{other}`"))),
                };
            }
            LayerConfig::Tree(c)
        }
        other => return Err(err(line, format!("unknown layer kind `{other}`"))),
    };
    if let Some(k) = p.keys().next() {
        return Err(err(
            line,
            format!("unknown parameter `{k}` for {kind} layer"),
        ));
    }
    Ok(vec![layer; repeat])
}

fn parse_component(line: usize, value: &str) -> Result<GaussianComponent, CliError> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    let mut p = params(line, &tokens)?;
    let mean = p
        .remove("mean")
        .ok_or_else(|| err(line, "component needs mean="))?;
    let mean = parse_list(line, "mean", &mean)?;
    let cov = p
        .remove("cov")
        .ok_or_else(|| err(line, "component needs cov="))?;
    let cov = parse_list(line, "cov", &cov)?;
    if let Some(k) = p.keys().next() {
        return Err(err(line, format!("unknown component parameter `{k}`")));
    }
    let d = mean.len();
    if cov.len() != d * d {
        return Err(err(
            line,
            format!(
                "cov needs {} entries for a {d}-dimensional mean, got {}",
                d * d,
                cov.len()
            ),
        ));
    }
    Ok(GaussianComponent {
        mean,
        cov: cov.chunks(d).map(<[f64]>::to_vec).collect(),
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let (mut kind, mut n_train, mut n_test, mut k, mut noise, mut data_seed) =
            (None, None, None, None, None, None);
        let (mut train, mut test) = (None, None);
        let mut components = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(err(line, format!("`{key}` has no value")));
            }
            if key != "layer" && key != "component" {
                if let Some(prev) = seen.insert(key.to_string(), line) {
                    return Err(err(line, format!("`{key}` already set on line {prev}")));
                }
            }
            match key {
                "layer" => cfg.schedule.extend(parse_layer(line, value)?),
                "component" => components.push(parse_component(line, value)?),
                "data" => {
                    kind = Some(
                        value
                            .parse::<GeneratorKind>()
                            .map_err(|e| err(line, e.to_string()))?,
                    )
                }
                "train" => train = Some(base.join(value)),
                "test" => test = Some(base.join(value)),
                "n_train" => n_train = Some(parse(line, key, value)?),
                "n_test" => n_test = Some(parse(line, key, value)?),
                "k" => k = Some(parse(line, key, value)?),
                "noise" => noise = Some(parse(line, key, value)?),
                "data_seed" => data_seed = Some(parse(line, key, value)?),
                "weights" => cfg.weights = Some(parse_list(line, key, value)?),
                "seed" => cfg.seed = parse(line, key, value)?,
                "eps" => cfg.eps = parse(line, key, value)?,
                "max_iter" => cfg.max_iter = parse(line, key, value)?,
                "trace" => cfg.trace = parse_bool(line, key, value)?,
                "out" => cfg.out = base.join(value),
                other => return Err(err(line, format!("unknown key `{other}`"))),
            }
        }
        let generator_keys = ["data", "n_train", "n_test", "k", "noise", "data_seed"];
        cfg.data = match train {
            Some(train) => {
                if let Some(key) = generator_keys.iter().find(|key| seen.contains_key(**key)) {
                    return Err(err(
                        seen[*key],
                        format!("`{key}` cannot be combined with `train`"),
                    ));
                }
                DataSource::Csv { train, test }
            }
            None => {
                if let Some(&line) = seen.get("test") {
                    return Err(err(line, "`test` needs `train`"));
                }
                DataSource::Generator {
                    kind: kind.unwrap_or(GeneratorKind::Moons),
                    n_train,
                    n_test,
                    k,
                    noise,
                    seed: data_seed,
                    components,
                }
            }
        };
        Ok(cfg)
    }
}
