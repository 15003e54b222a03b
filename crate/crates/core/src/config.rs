//! Plain-text `key = value` experiment configuration.
//!
//! Lines starting with `#` are comments. Rule lists are separated by `;`,
//! number lists by `,`, and a number range may be written `start:stop:step`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bagging::{as_simple_weighting, BagConfig, Weighting};
use crate::data::Dataset;
use crate::dynamics::{
    cv_sindy, generate_lv_dataset, lv_true_model, sindy_dataset, sindy_selector, DerivativeScheme, LVConfig,
    SindyCv, Trajectory, PAPER_LAMBDA_GRID, PAPER_OMEGA_GRID,
};
use crate::error::{Error, Result};
use crate::experiments::{
    generate_regression_dataset, glasso_cv, load_flow_cytometry, GlassoCv, GlassoCvOptions, RegressionGenConfig,
};
use crate::harness::{bag_sweep, run_trials, serialize_report, ExperimentReport, HarnessConfig, ProcedureSpec, TrialSource};
use crate::learners::{glasso_selector, lasso_selector, GlassoOptions};
use crate::model::{ModelId, ModelShape};
use crate::rules::Rule;
use crate::theory::Sampling;
use crate::weights::Universe;

/// Parsed `key = value` pairs that remember which keys were read.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            let k = k.trim().to_string();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", no + 1)));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::Config(format!("`{key} = {v}`: {e}"))),
        }
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }
}

pub fn parse_rules(list: &str) -> Result<Vec<Rule>> {
    list.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

/// `a, b, c` or `start:stop:step` (inclusive of `stop` up to rounding).
pub fn parse_number_list(list: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("bad number list `{list}`"));
    let parts: Vec<&str> = list.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let [a, b, step] = [parts[0], parts[1], parts[2]].map(|p| p.parse::<f64>());
        let (a, b, step) = (a.map_err(|_| bad())?, b.map_err(|_| bad())?, step.map_err(|_| bad())?);
        if !(step > 0.0) || b < a {
            return Err(bad());
        }
        let count = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|i| a + i as f64 * step).collect());
    }
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| bad()))
        .collect()
}

fn parse_counts(list: &str) -> Result<Vec<usize>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| Error::Config(format!("bad count `{s}`"))))
        .collect()
}

/// Factor taking `lasso.lambda` to the penalty of the mean-squared-error
/// objective. `half` reads it against `(1/2n)|y - Xb|^2`, `mean` against
/// `(1/n)|y - Xb|^2`.
fn lasso_scale(scaling: Option<&str>) -> Result<f64> {
    match scaling.unwrap_or("half") {
        "half" => Ok(2.0),
        "mean" => Ok(1.0),
        other => Err(Error::Config(format!("unknown lasso scaling `{other}`"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Regression,
    Lv,
    Graph,
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(ExperimentKind::Regression),
            "lv" => Ok(ExperimentKind::Lv),
            "graph" => Ok(ExperimentKind::Graph),
            _ => Err(Error::Config(format!("unknown experiment `{s}`"))),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Regression => "regression",
            ExperimentKind::Lv => "lv",
            ExperimentKind::Graph => "graph",
        })
    }
}

const COMMON_KEYS: &[&str] = &[
    "trials",
    "seed",
    "bag.K",
    "bag.B",
    "bag.replace",
    "rules",
    "base_rules",
    "loo.reuse_bags",
    "sweep.B",
];
const REGRESSION_KEYS: &[&str] = &[
    "reg.n",
    "reg.d",
    "reg.noise_sd",
    "reg.block_correlation",
    "lasso.lambda",
    "lasso.scaling",
    "support.threshold",
];
const LV_KEYS: &[&str] = &[
    "lv.n_points",
    "lv.t_max",
    "lv.noise_sd",
    "lv.derivatives",
    "lv.cv",
    "stridge.lambda",
    "stridge.omega",
];
const GRAPH_KEYS: &[&str] = &[
    "cyto.path",
    "glasso.lambda",
    "glasso.cv_grid",
    "glasso.cv_folds",
    "glasso.cv_penalty",
    "glasso.penalize_diagonal",
    "support.threshold",
];

#[derive(Clone, Debug, PartialEq)]
pub enum Setting {
    Regression {
        generator: RegressionGenConfig,
        /// penalty on the `(1/n)|y - Xb|^2 + lambda |b|_1` objective, after
        /// converting from the configured scaling
        lambda: f64,
        threshold: f64,
    },
    Lv {
        generator: LVConfig,
        lambda: f64,
        omega: f64,
        scheme: DerivativeScheme,
        cross_validate: bool,
    },
    Graph {
        path: PathBuf,
        /// `None` picks the penalty by cross-validation over `cv_grid`
        lambda: Option<f64>,
        cv_grid: Vec<f64>,
        cv_folds: usize,
        cv_penalty: bool,
        glasso: GlassoOptions,
        threshold: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub trials: usize,
    pub seed: u64,
    pub bag: BagConfig,
    pub rules: Vec<Rule>,
    pub base_rules: Vec<Rule>,
    pub reuse_bags: bool,
    pub sweep_bags: Vec<usize>,
    pub setting: Setting,
    pub values: KeyValues,
}

impl ExperimentConfig {
    pub fn from_key_values(kind: ExperimentKind, kv: KeyValues) -> Result<Self> {
        let extra = match kind {
            ExperimentKind::Regression => REGRESSION_KEYS,
            ExperimentKind::Lv => LV_KEYS,
            ExperimentKind::Graph => GRAPH_KEYS,
        };
        let known: Vec<&str> = COMMON_KEYS.iter().chain(extra).copied().collect();
        kv.reject_unknown(&known)?;
        let (trials, bag_size, rules, base_rules) = match kind {
            ExperimentKind::Regression => (
                50,
                25,
                "argmax; topk:k=2; infargmax:eps=0.8; ip:tau=0.3",
                "argmax",
            ),
            ExperimentKind::Lv => (25, 17, "argmax; topk:k=2; infargmax:eps=0.09; ip:tau=0.63", "argmax"),
            ExperimentKind::Graph => (1, 700, "argmax; ip:tau=0.5; topk:k=2; infargmax:eps=0.02", "argmax"),
        };
        let setting = match kind {
            ExperimentKind::Regression => {
                let small = RegressionGenConfig::small_n();
                let n = kv.get("reg.n", small.n)?;
                let default_noise = if n >= 300 { 0.5 } else { small.noise_sd };
                Setting::Regression {
                    generator: RegressionGenConfig {
                        n,
                        d: kv.get("reg.d", small.d)?,
                        noise_sd: kv.get("reg.noise_sd", default_noise)?,
                        block_correlation: kv.get("reg.block_correlation", small.block_correlation)?,
                        ..small
                    },
                    lambda: kv.get("lasso.lambda", 0.5)? * lasso_scale(kv.raw("lasso.scaling"))?,
                    threshold: kv.get("support.threshold", 0.0)?,
                }
            }
            ExperimentKind::Lv => {
                let base = LVConfig::default();
                let scheme = match kv.raw("lv.derivatives").unwrap_or("fd4") {
                    "fd4" => DerivativeScheme::FourthOrder,
                    "fd2" => DerivativeScheme::SecondOrder,
                    other => return Err(Error::Config(format!("unknown derivative scheme `{other}`"))),
                };
                Setting::Lv {
                    generator: LVConfig {
                        n_points: kv.get("lv.n_points", base.n_points)?,
                        t_max: kv.get("lv.t_max", base.t_max)?,
                        noise_sd: kv.get("lv.noise_sd", base.noise_sd)?,
                        ..base
                    },
                    lambda: kv.get("stridge.lambda", 0.01)?,
                    omega: kv.get("stridge.omega", 0.18)?,
                    scheme,
                    cross_validate: kv.get("lv.cv", false)?,
                }
            }
            ExperimentKind::Graph => Setting::Graph {
                path: PathBuf::from(
                    kv.raw("cyto.path")
                        .ok_or_else(|| Error::Config("`cyto.path` is required".into()))?,
                ),
                lambda: kv.raw("glasso.lambda").map(|_| kv.get("glasso.lambda", 0.0)).transpose()?,
                cv_grid: parse_number_list(kv.raw("glasso.cv_grid").unwrap_or("1:500:1"))?,
                cv_folds: kv.get("glasso.cv_folds", 5)?,
                cv_penalty: kv.get("glasso.cv_penalty", true)?,
                glasso: GlassoOptions {
                    penalize_diagonal: kv.get("glasso.penalize_diagonal", true)?,
                    ..Default::default()
                },
                threshold: kv.get("support.threshold", 1e-8)?,
            },
        };
        let cfg = ExperimentConfig {
            kind,
            trials: kv.get("trials", trials)?,
            seed: kv.get("seed", 0)?,
            bag: BagConfig {
                bag_size: kv.get("bag.K", bag_size)?,
                bags: kv.get("bag.B", 1000)?,
                sampling: Sampling::from_replace(kv.get("bag.replace", false)?),
                master_seed: 0,
            },
            rules: parse_rules(kv.raw("rules").unwrap_or(rules))?,
            base_rules: parse_rules(kv.raw("base_rules").unwrap_or(base_rules))?,
            reuse_bags: kv.get("loo.reuse_bags", true)?,
            sweep_bags: parse_counts(kv.raw("sweep.B").unwrap_or(""))?,
            setting,
            values: kv,
        };
        if cfg.trials == 0 || cfg.bag.bags == 0 || cfg.bag.bag_size == 0 {
            return Err(Error::Config("trials, bag.K and bag.B must be positive".into()));
        }
        if cfg.kind == ExperimentKind::Graph && cfg.trials != 1 {
            return Err(Error::Config("the graph experiment has a single dataset; set trials = 1".into()));
        }
        Ok(cfg)
    }

    pub fn parse(kind: ExperimentKind, text: &str) -> Result<Self> {
        Self::from_key_values(kind, KeyValues::parse(text)?)
    }

    fn harness(&self) -> HarnessConfig {
        let mut procedures = Vec::new();
        if !self.base_rules.is_empty() {
            procedures.push(ProcedureSpec {
                name: "base".into(),
                bag: None,
                rules: self.base_rules.clone(),
            });
        }
        if !self.rules.is_empty() {
            procedures.push(ProcedureSpec {
                name: "bagged".into(),
                bag: Some(self.bag),
                rules: self.rules.clone(),
            });
        }
        HarnessConfig {
            trials: self.trials,
            seed: self.seed,
            procedures,
            reuse_bags: self.reuse_bags,
        }
    }
}

type Selector = Box<dyn Fn(&Dataset) -> Result<ModelId> + Sync>;

struct Source {
    make: Box<dyn Fn(u64) -> Result<Dataset> + Sync>,
    base: crate::bagging::SimpleWeighting<Selector>,
    shape: ModelShape,
    universe: Universe,
    truth: Option<ModelId>,
}

impl TrialSource for Source {
    fn dataset(&self, seed: u64) -> Result<Dataset> {
        (self.make)(seed)
    }
    fn base(&self) -> &dyn Weighting {
        &self.base
    }
    fn shape(&self) -> ModelShape {
        self.shape
    }
    fn universe(&self) -> Universe {
        self.universe
    }
    fn truth(&self) -> Option<ModelId> {
        self.truth.clone()
    }
}

fn source(
    make: Box<dyn Fn(u64) -> Result<Dataset> + Sync>,
    selector: Selector,
    shape: ModelShape,
    truth: Option<ModelId>,
) -> Source {
    let universe = Universe::power_set(shape.feature_count());
    Source {
        make,
        base: as_simple_weighting(selector, universe),
        shape,
        universe,
        truth,
    }
}

/// A finished experiment with its side products.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    /// first trial's trajectory, for the LV experiment
    pub trajectory: Option<Trajectory>,
    pub sindy_cv: Option<SindyCv>,
    pub glasso_cv: Option<GlassoCv>,
}

impl ExperimentRun {
    pub fn write(&self, dir: &Path) -> Result<()> {
        serialize_report(&self.report, dir)?;
        if let Some(t) = &self.trajectory {
            t.write_csv(&dir.join("trajectory.csv"))?;
        }
        if let Some(cv) = &self.sindy_cv {
            cv.write_table_csv(&dir.join("sindy_cv.csv"))?;
        }
        if let Some(cv) = &self.glasso_cv {
            let mut w = csv::Writer::from_path(dir.join("glasso_cv.csv"))?;
            w.write_record(["lambda", "score"])?;
            for (l, s) in &cv.table {
                w.write_record([l.to_string(), s.to_string()])?;
            }
            w.flush().map_err(|e| Error::io(dir, e))?;
        }
        Ok(())
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    let mut trajectory = None;
    let mut sindy = None;
    let mut glasso = None;
    let mut snapshot = cfg.values.clone();
    let src = match &cfg.setting {
        Setting::Regression {
            generator,
            lambda,
            threshold,
        } => {
            let g = generator.clone();
            source(
                Box::new(move |seed| generate_regression_dataset(&g, seed)),
                Box::new(lasso_selector(*lambda, *threshold)),
                ModelShape::Variables { d: generator.d },
                Some(generator.truth()),
            )
        }
        Setting::Lv {
            generator,
            lambda,
            omega,
            scheme,
            cross_validate,
        } => {
            let first = generate_lv_dataset(generator, cfg.seed)?;
            if *cross_validate {
                sindy = Some(cv_sindy(&first, &PAPER_LAMBDA_GRID, &PAPER_OMEGA_GRID, 5, *scheme)?);
            }
            trajectory = Some(first);
            let (g, s) = (*generator, *scheme);
            source(
                Box::new(move |seed| sindy_dataset(&generate_lv_dataset(&g, seed)?, s)),
                Box::new(sindy_selector(*lambda, *omega)),
                ModelShape::Equations { dims: 2, terms: 6 },
                Some(lv_true_model()),
            )
        }
        Setting::Graph {
            path,
            lambda,
            cv_grid,
            cv_folds,
            cv_penalty,
            glasso: opts,
            threshold,
        } => {
            let data = load_flow_cytometry(path)?.data;
            let lambda = match lambda {
                Some(l) => *l,
                None => {
                    let cv = glasso_cv(
                        &data,
                        cv_grid,
                        &GlassoCvOptions {
                            folds: *cv_folds,
                            seed: cfg.seed,
                            include_penalty: *cv_penalty,
                            glasso: *opts,
                        },
                    )?;
                    let l = cv.lambda;
                    glasso = Some(cv);
                    snapshot.set("glasso.lambda", l);
                    l
                }
            };
            let nodes = data.d();
            source(
                Box::new(move |_| Ok(data.clone())),
                Box::new(glasso_selector(lambda, *opts, *threshold)),
                ModelShape::Graph { nodes },
                None,
            )
        }
    };
    let harness = cfg.harness();
    let reports = run_trials(&src, &harness)?;
    let sweep = if cfg.sweep_bags.is_empty() {
        Vec::new()
    } else {
        bag_sweep(&src, &harness, &cfg.sweep_bags)?
    };
    let mut config = snapshot.entries().clone();
    config.insert("experiment".into(), cfg.kind.to_string());
    Ok(ExperimentRun {
        report: ExperimentReport {
            experiment: cfg.kind.to_string(),
            config,
            trials: cfg.trials,
            seed: cfg.seed,
            reports,
            sweep,
        },
        trajectory,
        sindy_cv: sindy,
        glasso_cv: glasso,
    })
}
