//! Leave-one-out stability of selection procedures across repeated trials.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bagging::{bagged_weights, BagConfig, Bagged, Weighting};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelId, ModelShape, SelectionSet};
use crate::rules::{Rule, SelectionFlags};
use crate::theory::theoretical_delta;
use crate::weights::{Universe, WeightVector};

/// Number of leading models of the full-data weights kept per trial.
pub const TOP_MODELS_KEPT: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcedureSpec {
    pub name: String,
    /// `None` runs the base algorithm on the data directly
    pub bag: Option<BagConfig>,
    pub rules: Vec<Rule>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagCounts {
    pub tie_broken: usize,
    pub short: usize,
    pub phantom: usize,
}

impl FlagCounts {
    fn add(&mut self, f: SelectionFlags) {
        self.tie_broken += usize::from(f.tie_broken);
        self.short += usize::from(f.short);
        self.phantom += usize::from(f.phantom);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub full_selection: SelectionSet,
    pub loo_selections: Vec<SelectionSet>,
    pub delta: f64,
    pub set_size: usize,
    pub contains_truth: Option<bool>,
    /// flags raised over the full-data and every leave-one-out selection
    pub flags: FlagCounts,
    pub top_models: Vec<(ModelId, f64)>,
}

impl TrialResult {
    /// Fraction of leave-one-out selections disjoint from the full selection.
    pub fn recompute_delta(&self) -> f64 {
        disjoint_fraction(&self.full_selection, &self.loo_selections)
    }
}

fn disjoint_fraction(full: &SelectionSet, loo: &[SelectionSet]) -> f64 {
    let misses = loo.iter().filter(|s| !s.overlaps(full)).count();
    misses as f64 / loo.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub delta: f64,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub procedure: String,
    pub rule: String,
    /// inflation actually used by an inflated-argmax rule
    pub epsilon: Option<f64>,
    /// worst-case instability guaranteed for that inflation
    pub theoretical_delta: Option<f64>,
    pub bag: Option<BagConfig>,
    pub trials: Vec<TrialResult>,
    pub cdf: Vec<CdfPoint>,
    pub utility_weighted_accuracy: Option<f64>,
    pub median_set_size: f64,
    pub max_delta: f64,
    pub mean_delta: f64,
}

/// Step function `F(x) = #{delta_j <= x} / N` at the observed values and at 0 and 1.
pub fn empirical_cdf(deltas: &[f64]) -> Result<Vec<CdfPoint>> {
    if deltas.is_empty() {
        return Err(Error::EmptyInput("instability values"));
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut points: Vec<f64> = sorted.clone();
    points.push(0.0);
    points.push(1.0);
    points.sort_by(f64::total_cmp);
    points.dedup();
    let n = sorted.len() as f64;
    Ok(points
        .into_iter()
        .map(|x| CdfPoint {
            delta: x,
            fraction: sorted.partition_point(|&d| d <= x) as f64 / n,
        })
        .collect())
}

/// Mean over selections of `1{truth in set} / |set|`.
pub fn utility_weighted_accuracy<'a, I>(selections: I, truth: &ModelId) -> f64
where
    I: IntoIterator<Item = &'a SelectionSet>,
{
    let (sum, count) = selections.into_iter().fold((0.0, 0usize), |(s, c), set| {
        let hit = if set.contains(truth) { 1.0 / set.len() as f64 } else { 0.0 };
        (s + hit, c + 1)
    });
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Weights on the full data and on every leave-one-out dataset.
pub fn loo_weights(weighting: &dyn Weighting, data: &Dataset) -> Result<(WeightVector, Vec<WeightVector>)> {
    if data.n() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: data.n(),
        });
    }
    let full = weighting.weights(data)?;
    let loo = (0..data.n())
        .into_par_iter()
        .map(|i| {
            weighting.weights(&data.without_row(i)).map_err(|e| Error::Fold {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok((full, loo))
}

struct RuleOutcome {
    full: SelectionSet,
    loo: Vec<SelectionSet>,
    flags: FlagCounts,
}

fn apply_rule(rule: &Rule, shape: ModelShape, full: &WeightVector, loo: &[WeightVector]) -> Result<RuleOutcome> {
    let mut flags = FlagCounts::default();
    let first = rule.apply(full, shape)?;
    flags.add(first.flags);
    let mut sets = Vec::with_capacity(loo.len());
    for w in loo {
        let s = rule.apply(w, shape)?;
        flags.add(s.flags);
        sets.push(s.set);
    }
    Ok(RuleOutcome {
        full: first.set,
        loo: sets,
        flags,
    })
}

/// Runs a resolved rule on `data` and on each `D \ {i}`.
pub fn loo_stability(
    weighting: &dyn Weighting,
    rule: &Rule,
    shape: ModelShape,
    data: &Dataset,
    truth: Option<&ModelId>,
) -> Result<TrialResult> {
    let (full, loo) = loo_weights(weighting, data)?;
    let out = apply_rule(rule, shape, &full, &loo)?;
    Ok(trial_result(0, 0, out, truth, &full))
}

fn trial_result(trial: usize, seed: u64, out: RuleOutcome, truth: Option<&ModelId>, full: &WeightVector) -> TrialResult {
    TrialResult {
        trial,
        seed,
        delta: disjoint_fraction(&out.full, &out.loo),
        set_size: out.full.len(),
        contains_truth: truth.map(|t| out.full.contains(t)),
        full_selection: out.full,
        loo_selections: out.loo,
        flags: out.flags,
        top_models: full
            .ranked()
            .into_iter()
            .take(TOP_MODELS_KEPT)
            .map(|(m, w)| (m.clone(), w))
            .collect(),
    }
}

/// A family of datasets with a fixed model space and base algorithm.
pub trait TrialSource: Sync {
    fn dataset(&self, seed: u64) -> Result<Dataset>;
    fn base(&self) -> &dyn Weighting;
    fn shape(&self) -> ModelShape;
    fn universe(&self) -> Universe;
    fn truth(&self) -> Option<ModelId>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub trials: usize,
    pub seed: u64,
    pub procedures: Vec<ProcedureSpec>,
    /// reuse the same bag streams on the full data and every leave-one-out
    /// dataset; otherwise each fold gets its own master seed
    pub reuse_bags: bool,
}

/// SplitMix64 finalizer, used to derive per-fold master seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rules of one procedure resolved against the trial's sample size.
fn resolve_rules(spec: &ProcedureSpec, n: usize, universe: Universe) -> Result<Vec<(Rule, Option<f64>)>> {
    spec.rules
        .iter()
        .map(|rule| {
            let params = spec.bag.map(|b| b.theorem_params(n, universe));
            let resolved = rule.resolve(params.as_ref())?;
            let bound = match (resolved, params) {
                (Rule::Inflated(eps), Some(p)) => Some(theoretical_delta(eps, &p)?),
                _ => None,
            };
            Ok((resolved, bound))
        })
        .collect()
}

type TrialOutputs = Vec<Vec<(TrialResult, Rule, Option<f64>)>>;

fn run_one_trial(source: &dyn TrialSource, cfg: &HarnessConfig, j: usize) -> Result<TrialOutputs> {
    let seed = cfg.seed.wrapping_add(j as u64);
    let data = source.dataset(seed)?;
    let n = data.n();
    let truth = source.truth();
    let mut per_procedure = Vec::new();
    for spec in &cfg.procedures {
        let rules = resolve_rules(spec, n, source.universe())?;
        let (full, loo) = match spec.bag {
            None => loo_weights(source.base(), &data)?,
            Some(mut bag) => {
                bag.master_seed = seed;
                if cfg.reuse_bags {
                    loo_weights(
                        &Bagged {
                            base: source.base(),
                            config: bag,
                        },
                        &data,
                    )?
                } else {
                    let full = bagged_weights(source.base(), &data, &bag)?;
                    let loo = (0..n)
                        .into_par_iter()
                        .map(|i| {
                            let fold_bag = BagConfig {
                                master_seed: mix(seed ^ mix(i as u64 + 1)),
                                ..bag
                            };
                            bagged_weights(source.base(), &data.without_row(i), &fold_bag).map_err(|e| Error::Fold {
                                index: i,
                                source: Box::new(e),
                            })
                        })
                        .collect::<Result<_>>()?;
                    (full, loo)
                }
            }
        };
        let mut outs = Vec::new();
        for (rule, bound) in rules {
            let out = apply_rule(&rule, source.shape(), &full, &loo)?;
            outs.push((trial_result(j, seed, out, truth.as_ref(), &full), rule, bound));
        }
        per_procedure.push(outs);
    }
    Ok(per_procedure)
}

/// One report per (procedure, rule), trials evaluated on shared data with
/// weights computed once per dataset.
pub fn run_trials(source: &dyn TrialSource, cfg: &HarnessConfig) -> Result<Vec<StabilityReport>> {
    if cfg.trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let outputs: Vec<TrialOutputs> = (0..cfg.trials)
        .into_par_iter()
        .map(|j| run_one_trial(source, cfg, j))
        .collect::<Result<_>>()?;
    let truth = source.truth();
    let mut reports = Vec::new();
    for (p, spec) in cfg.procedures.iter().enumerate() {
        for r in 0..spec.rules.len() {
            let mut trials = Vec::with_capacity(cfg.trials);
            let mut epsilon = None;
            let mut bound: Option<f64> = None;
            for out in &outputs {
                let (t, rule, b) = &out[p][r];
                if let Rule::Inflated(e) = rule {
                    epsilon = Some(*e);
                }
                // the sample size is shared by all trials, so is the bound
                bound = *b;
                trials.push(t.clone());
            }
            reports.push(summarize(spec, spec.rules[r], epsilon, bound, trials, truth.as_ref())?);
        }
    }
    Ok(reports)
}

fn summarize(
    spec: &ProcedureSpec,
    rule: Rule,
    epsilon: Option<f64>,
    bound: Option<f64>,
    trials: Vec<TrialResult>,
    truth: Option<&ModelId>,
) -> Result<StabilityReport> {
    let deltas: Vec<f64> = trials.iter().map(|t| t.delta).collect();
    let mut sizes: Vec<f64> = trials.iter().map(|t| t.set_size as f64).collect();
    Ok(StabilityReport {
        procedure: spec.name.clone(),
        rule: rule.to_string(),
        epsilon,
        theoretical_delta: bound,
        bag: spec.bag,
        cdf: empirical_cdf(&deltas)?,
        utility_weighted_accuracy: truth.map(|t| utility_weighted_accuracy(trials.iter().map(|t| &t.full_selection), t)),
        median_set_size: median(&mut sizes),
        max_delta: deltas.iter().copied().fold(0.0, f64::max),
        mean_delta: deltas.iter().sum::<f64>() / deltas.len() as f64,
        trials,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub bags: usize,
    pub reports: Vec<StabilityReport>,
}

/// `run_trials` for every bag count, with the same data seeds. Procedures
/// without bagging are left out.
pub fn bag_sweep(source: &dyn TrialSource, cfg: &HarnessConfig, bag_counts: &[usize]) -> Result<Vec<SweepEntry>> {
    if bag_counts.is_empty() {
        return Err(Error::EmptyInput("bag counts"));
    }
    bag_counts
        .iter()
        .map(|&b| {
            let mut c = cfg.clone();
            c.procedures.retain(|p| p.bag.is_some());
            if c.procedures.is_empty() {
                return Err(Error::Config("a bag sweep needs a bagged procedure".into()));
            }
            for p in &mut c.procedures {
                if let Some(bag) = &mut p.bag {
                    bag.bags = b;
                }
            }
            Ok(SweepEntry {
                bags: b,
                reports: run_trials(source, &c)?,
            })
        })
        .collect()
}

/// Everything needed to reproduce and redraw one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    /// the parsed configuration, key by key
    pub config: std::collections::BTreeMap<String, String>,
    pub trials: usize,
    pub seed: u64,
    pub reports: Vec<StabilityReport>,
    pub sweep: Vec<SweepEntry>,
}

pub const REPORT_JSON: &str = "report.json";

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn labelled(report: &ExperimentReport) -> Vec<(Option<usize>, &StabilityReport)> {
    let mut all: Vec<(Option<usize>, &StabilityReport)> = report.reports.iter().map(|r| (None, r)).collect();
    for e in &report.sweep {
        all.extend(e.reports.iter().map(|r| (Some(e.bags), r)));
    }
    all
}

/// Writes `report.json` plus `summary.csv`, `cdf.csv` and `trials.csv` into `dir`.
pub fn serialize_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_vec_pretty(report)?;
    write_file(&dir.join(REPORT_JSON), &json)?;

    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let bags = |b: Option<usize>| b.map_or(String::new(), |x| x.to_string());

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "sweep_bags",
        "procedure",
        "rule",
        "epsilon",
        "theoretical_delta",
        "utility_weighted_accuracy",
        "median_set_size",
        "max_delta",
        "mean_delta",
    ])?;
    for (b, r) in labelled(report) {
        w.write_record([
            bags(b),
            r.procedure.clone(),
            r.rule.clone(),
            opt(r.epsilon),
            opt(r.theoretical_delta),
            opt(r.utility_weighted_accuracy),
            r.median_set_size.to_string(),
            r.max_delta.to_string(),
            r.mean_delta.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv::Writer::from_path(dir.join("cdf.csv"))?;
    w.write_record(["sweep_bags", "procedure", "rule", "delta", "fraction"])?;
    for (b, r) in labelled(report) {
        for p in &r.cdf {
            w.write_record([
                bags(b),
                r.procedure.clone(),
                r.rule.clone(),
                p.delta.to_string(),
                p.fraction.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    w.write_record([
        "sweep_bags",
        "procedure",
        "rule",
        "trial",
        "seed",
        "delta",
        "set_size",
        "contains_truth",
        "selection",
    ])?;
    for (b, r) in labelled(report) {
        for t in &r.trials {
            w.write_record([
                bags(b),
                r.procedure.clone(),
                r.rule.clone(),
                t.trial.to_string(),
                t.seed.to_string(),
                t.delta.to_string(),
                t.set_size.to_string(),
                t.contains_truth.map_or(String::new(), |c| c.to_string()),
                t.full_selection.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(dir, e))?;
    Ok(())
}

pub fn read_report(dir: &Path) -> Result<ExperimentReport> {
    let path = dir.join(REPORT_JSON);
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&text)?)
}
