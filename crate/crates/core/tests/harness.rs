//! Leave-one-out harness against hand-computed and sequential oracles.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use stasel_core::bagging::{as_simple_weighting, draw_bag, SimpleWeighting};
use stasel_core::experiments::{generate_regression_dataset, RegressionGenConfig};
use stasel_core::harness::{
    empirical_cdf, loo_stability, read_report, run_trials, serialize_report, ExperimentReport, HarnessConfig,
    ProcedureSpec, StabilityReport, TrialSource,
};
use stasel_core::learners::lasso_selector;
use stasel_core::theory::Sampling;
use stasel_core::{normalize, BagConfig, Dataset, ModelId, ModelShape, Result, Rule, Universe, Weighting};

type Select = Box<dyn Fn(&Dataset) -> Result<ModelId> + Sync>;

struct Toy {
    base: SimpleWeighting<Select>,
    rows: usize,
}

impl Toy {
    fn new(rows: usize, select: Select) -> Self {
        Toy {
            base: as_simple_weighting(select, Universe::power_set(3)),
            rows,
        }
    }
}

impl TrialSource for Toy {
    fn dataset(&self, seed: u64) -> Result<Dataset> {
        let x = DMatrix::from_fn(self.rows, 1, |i, _| ((i as u64 * 7 + seed) % 11) as f64);
        Dataset::new(x, None)
    }
    fn base(&self) -> &dyn Weighting {
        &self.base
    }
    fn shape(&self) -> ModelShape {
        ModelShape::Variables { d: 3 }
    }
    fn universe(&self) -> Universe {
        Universe::power_set(3)
    }
    fn truth(&self) -> Option<ModelId> {
        Some(ModelId::variables([0]))
    }
}

fn v(i: usize) -> ModelId {
    ModelId::variables([i])
}

fn all_rules() -> Vec<Rule> {
    ["argmax", "topk:k=2", "infargmax:eps=0.3", "ip:tau=0.5"]
        .iter()
        .map(|r| r.parse().unwrap())
        .collect()
}

fn config(trials: usize, bag: Option<BagConfig>) -> HarnessConfig {
    HarnessConfig {
        trials,
        seed: 3,
        procedures: vec![ProcedureSpec {
            name: "p".into(),
            bag,
            rules: all_rules(),
        }],
        reuse_bags: true,
    }
}

fn small_bag(bags: usize) -> BagConfig {
    BagConfig {
        bag_size: 4,
        bags,
        sampling: Sampling::WithoutReplacement,
        master_seed: 0,
    }
}

#[test]
fn constant_selector_is_perfectly_stable() {
    let toy = Toy::new(6, Box::new(|_| Ok(v(1))));
    for bag in [None, Some(small_bag(10))] {
        for r in run_trials(&toy, &config(4, bag)).unwrap() {
            assert_eq!(r.max_delta, 0.0, "{}", r.rule);
            assert_eq!(r.utility_weighted_accuracy, Some(0.0));
        }
    }
}

#[test]
fn selector_keyed_on_sample_size_is_maximally_unstable() {
    let toy = Toy::new(6, Box::new(|d| Ok(v(d.n() % 2))));
    let reports = run_trials(&toy, &config(2, None)).unwrap();
    let argmax = &reports[0];
    assert_eq!(argmax.max_delta, 1.0);
    assert_eq!(argmax.mean_delta, 1.0);
    assert_eq!(argmax.cdf, empirical_cdf(&[1.0, 1.0]).unwrap());
}

#[test]
fn three_sample_toy() {
    // the selected variable is the row index of the minimum, capped at 1
    let data = Dataset::new(DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]), None).unwrap();
    let base = as_simple_weighting(
        |d: &Dataset| {
            let col = d.x().column(0);
            Ok(v((col.min() as usize).min(1)))
        },
        Universe::Finite(8),
    );
    let t = loo_stability(&base, &Rule::Argmax, ModelShape::Variables { d: 3 }, &data, Some(&v(0))).unwrap();
    // removing row 0 moves the minimum to 1; the other two folds keep it
    assert_eq!(t.loo_selections.len(), 3);
    assert!((t.delta - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(t.contains_truth, Some(true));
    assert_eq!(t.recompute_delta(), t.delta);
}

#[test]
fn argmax_and_top_one_agree() {
    // two models and an odd bag count rule out ties
    let toy = Toy::new(7, Box::new(|d| Ok(v((d.x().column(0).sum() as usize) % 2))));
    let mut cfg = config(5, Some(small_bag(13)));
    cfg.procedures[0].rules = vec![Rule::Argmax, Rule::TopK(1)];
    let reports = run_trials(&toy, &cfg).unwrap();
    assert!(reports[1].trials.iter().all(|t| t.flags.tie_broken == 0));
    for (a, b) in reports[0].trials.iter().zip(&reports[1].trials) {
        assert_eq!(a.full_selection, b.full_selection);
        assert_eq!(a.loo_selections, b.loo_selections);
        assert_eq!(a.delta, b.delta);
    }
    assert_eq!(reports[0].cdf, reports[1].cdf);
}

/// Bagged weights, one bag at a time, without the library's aggregation.
fn sequential_bagged(data: &Dataset, cfg: &BagConfig, select: &dyn Fn(&Dataset) -> Result<ModelId>) -> stasel_core::WeightVector {
    let mut counts: BTreeMap<ModelId, f64> = BTreeMap::new();
    for b in 0..cfg.bags {
        let rows = draw_bag(data.n(), cfg, b).unwrap();
        *counts.entry(select(&data.select_rows(&rows)).unwrap()).or_default() += 1.0;
    }
    normalize(counts, Universe::power_set(data.d())).unwrap()
}

#[test]
fn matches_sequential_reimplementation() {
    let gen = RegressionGenConfig::small_n();
    struct Reg {
        gen: RegressionGenConfig,
        base: SimpleWeighting<Select>,
    }
    impl TrialSource for Reg {
        fn dataset(&self, seed: u64) -> Result<Dataset> {
            generate_regression_dataset(&self.gen, seed)
        }
        fn base(&self) -> &dyn Weighting {
            &self.base
        }
        fn shape(&self) -> ModelShape {
            ModelShape::Variables { d: self.gen.d }
        }
        fn universe(&self) -> Universe {
            Universe::power_set(self.gen.d)
        }
        fn truth(&self) -> Option<ModelId> {
            Some(self.gen.truth())
        }
    }
    let src = Reg {
        gen: gen.clone(),
        base: as_simple_weighting(Box::new(lasso_selector(0.5, 0.0)), Universe::power_set(gen.d)),
    };
    let bag = BagConfig {
        bag_size: 25,
        bags: 15,
        sampling: Sampling::WithoutReplacement,
        master_seed: 0,
    };
    let cfg = config(2, Some(bag));
    let reports = run_trials(&src, &cfg).unwrap();
    let select = lasso_selector(0.5, 0.0);
    for j in 0..2 {
        let seed = cfg.seed + j as u64;
        let data = generate_regression_dataset(&gen, seed).unwrap();
        let bag = BagConfig { master_seed: seed, ..bag };
        let full = sequential_bagged(&data, &bag, &select);
        let loo: Vec<_> = (0..data.n())
            .map(|i| sequential_bagged(&data.without_row(i), &bag, &select))
            .collect();
        for (r, rule) in reports.iter().zip(all_rules()) {
            let shape = src.shape();
            let want_full = rule.apply(&full, shape).unwrap().set;
            let misses = loo
                .iter()
                .filter(|w| !rule.apply(w, shape).unwrap().set.overlaps(&want_full))
                .count();
            let t = &r.trials[j];
            assert_eq!(t.full_selection, want_full, "{rule}");
            assert_eq!(t.delta, misses as f64 / data.n() as f64, "{rule}");
        }
    }
}

fn sample_report() -> ExperimentReport {
    let toy = Toy::new(6, Box::new(|d| Ok(v((d.x().column(0).sum() as usize) % 3))));
    let mut cfg = config(3, Some(small_bag(9)));
    cfg.procedures.insert(
        0,
        ProcedureSpec {
            name: "base".into(),
            bag: None,
            rules: vec![Rule::Argmax],
        },
    );
    let reports = run_trials(&toy, &cfg).unwrap();
    let sweep = stasel_core::harness::bag_sweep(&toy, &cfg, &[3, 6]).unwrap();
    ExperimentReport {
        experiment: "toy".into(),
        config: BTreeMap::from([("trials".to_string(), "3".to_string())]),
        trials: 3,
        seed: cfg.seed,
        reports,
        sweep,
    }
}

#[test]
fn json_round_trip_and_csv_rows() {
    let report = sample_report();
    let dir = tempfile::tempdir().unwrap();
    serialize_report(&report, dir.path()).unwrap();
    assert_eq!(read_report(dir.path()).unwrap(), report);

    let all: Vec<&StabilityReport> = report
        .reports
        .iter()
        .chain(report.sweep.iter().flat_map(|e| &e.reports))
        .collect();
    let rows = |name: &str| {
        csv::Reader::from_path(dir.path().join(name))
            .unwrap()
            .records()
            .count()
    };
    assert_eq!(rows("summary.csv"), all.len());
    assert_eq!(rows("trials.csv"), all.len() * report.trials);
    assert_eq!(rows("cdf.csv"), all.iter().map(|r| r.cdf.len()).sum::<usize>());
}

/// Field layout of report.json, compared against a checked-in fixture.
fn schema(value: &serde_json::Value, path: &str, out: &mut Vec<String>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                // config keys are data, not schema
                if path == "config" {
                    continue;
                }
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                out.push(p.clone());
                schema(v, &p, out);
            }
        }
        serde_json::Value::Array(items) => {
            if let Some(first) = items.first() {
                schema(first, &format!("{path}[]"), out);
            }
        }
        _ => {}
    }
}

#[test]
fn report_schema_matches_golden_file() {
    let value = serde_json::to_value(sample_report()).unwrap();
    let mut fields = Vec::new();
    schema(&value, "", &mut fields);
    fields.sort();
    fields.dedup();
    let golden = include_str!("fixtures/report_schema.txt");
    let want: Vec<&str> = golden.lines().filter(|l| !l.is_empty()).collect();
    assert_eq!(fields, want);
}

#[test]
fn worker_count_does_not_change_the_report() {
    let render = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| serde_json::to_vec(&sample_report()).unwrap())
    };
    let one = render(1);
    assert_eq!(one, render(2));
    assert_eq!(one, render(5));
}

#[test]
fn fresh_fold_bags_are_deterministic_and_differ_from_reuse() {
    let toy = Toy::new(8, Box::new(|d| Ok(v((d.x().column(0).sum() as usize) % 3))));
    let mut cfg = config(3, Some(small_bag(7)));
    let reused = run_trials(&toy, &cfg).unwrap();
    cfg.reuse_bags = false;
    let fresh = run_trials(&toy, &cfg).unwrap();
    assert_eq!(fresh, run_trials(&toy, &cfg).unwrap());
    assert_ne!(fresh, reused);
    // the full-data weights use the trial seed either way
    for (a, b) in fresh.iter().zip(&reused) {
        for (x, y) in a.trials.iter().zip(&b.trials) {
            assert_eq!(x.full_selection, y.full_selection);
        }
    }
}

#[test]
fn delta_rule_respects_its_bound() {
    let toy = Toy::new(10, Box::new(|d| Ok(v((d.x().column(0).sum() as usize) % 3))));
    let mut cfg = config(
        4,
        Some(BagConfig {
            bag_size: 5,
            bags: 2000,
            sampling: Sampling::WithoutReplacement,
            master_seed: 0,
        }),
    );
    cfg.procedures[0].rules = vec!["infargmax:delta=0.5".parse().unwrap()];
    let r = &run_trials(&toy, &cfg).unwrap()[0];
    let bound = r.theoretical_delta.unwrap();
    assert!((bound - 0.5).abs() < 1e-12);
    assert!(r.epsilon.unwrap() > 0.0);
    assert!(r.max_delta <= bound);
}

#[test]
fn loo_requires_two_rows() {
    let toy = Toy::new(1, Box::new(|_| Ok(v(0))));
    assert!(run_trials(&toy, &config(1, None)).is_err());
}
