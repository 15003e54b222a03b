use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stasel_core::config::{ExperimentConfig, ExperimentKind, KeyValues};
use stasel_core::harness::{read_report, ExperimentReport};
use stasel_core::theory::{solve_epsilon, Sampling, TheoremParams};
use stasel_core::weights::read_weights_csv;
use stasel_core::{Error, ModelShape, Rule, Universe};

#[derive(Parser)]
#[command(name = "stasel", version, about = "Stable set-valued model selection")]
struct Cli {
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inflation epsilon guaranteeing instability at most delta
    Epsilon {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        n: usize,
        /// bag size
        #[arg(long = "K")]
        bag_size: usize,
        /// number of bags
        #[arg(long = "B")]
        bags: usize,
        /// bootstrap instead of subsampling
        #[arg(long)]
        replace: bool,
        /// number of candidate models, or `inf`
        #[arg(long, default_value = "inf")]
        universe: Universe,
        /// drop the Monte Carlo term (infinitely many bags)
        #[arg(long)]
        mc_off: bool,
    },
    /// Apply a selection rule to a `model,weight` CSV
    Select {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        rule: Rule,
        /// `variables:D`, `equations:DxT` or `graph:N`; inferred when omitted
        #[arg(long)]
        shape: Option<ModelShape>,
        #[arg(long, default_value = "inf")]
        universe: Universe,
    },
    /// Run a stability experiment
    Exp(ExpArgs),
    /// Run an experiment and repeat it over several bag counts
    SweepBags {
        #[command(flatten)]
        exp: ExpArgs,
        /// comma-separated bag counts
        #[arg(long = "B", required = true)]
        bags: String,
    },
    /// Summarize a report directory
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct ExpArgs {
    /// regression, lv or graph
    kind: ExperimentKind,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// override a config key, `key=value`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(w);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| run(cli.command)),
        Err(e) => Err(Error::Config(e.to_string())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Epsilon {
            delta,
            n,
            bag_size,
            bags,
            replace,
            universe,
            mc_off,
        } => {
            let params = TheoremParams {
                n,
                bag_size,
                bags,
                universe,
                sampling: Sampling::from_replace(replace),
                include_monte_carlo_term: !mc_off,
            };
            println!("{}", solve_epsilon(delta, &params)?);
            Ok(())
        }
        Command::Select {
            weights,
            rule,
            shape,
            universe,
        } => {
            let w = read_weights_csv(&weights, universe)?;
            let shape = match shape {
                Some(s) => s,
                None => ModelShape::infer(w.iter().map(|(m, _)| m))
                    .ok_or_else(|| Error::Config("cannot infer a shape from mixed model kinds".into()))?,
            };
            let selection = rule.resolve(None)?.apply(&w, shape)?;
            for m in selection.set.iter() {
                println!("{m}");
            }
            let f = selection.flags;
            if f.tie_broken || f.short || f.phantom {
                eprintln!("flags: tie_broken={} short={} phantom={}", f.tie_broken, f.short, f.phantom);
            }
            Ok(())
        }
        Command::Exp(args) => run_exp(args, None),
        Command::SweepBags { exp, bags } => run_exp(exp, Some(bags)),
        Command::Report { input } => {
            print_summary(&read_report(&input)?);
            Ok(())
        }
    }
}

fn run_exp(args: ExpArgs, sweep: Option<String>) -> Result<(), Error> {
    let mut kv = match &args.config {
        Some(path) => KeyValues::read(path)?,
        None => KeyValues::default(),
    };
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
        kv.set(k.trim(), v.trim());
    }
    if let Some(b) = sweep {
        kv.set("sweep.B", b);
    }
    let cfg = ExperimentConfig::from_key_values(args.kind, kv)?;
    let run = stasel_core::config::run_experiment(&cfg)?;
    create_dir(&args.out)?;
    run.write(&args.out)?;
    print_summary(&run.report);
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn print_summary(report: &ExperimentReport) {
    println!("experiment {} trials {} seed {}", report.experiment, report.trials, report.seed);
    println!(
        "{:<8} {:<28} {:>9} {:>9} {:>9} {:>8} {:>8}",
        "proc", "rule", "max_d", "mean_d", "bound", "med_size", "uwa"
    );
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    for r in &report.reports {
        println!(
            "{:<8} {:<28} {:>9.4} {:>9.4} {:>9} {:>8} {:>8}",
            r.procedure,
            r.rule,
            r.max_delta,
            r.mean_delta,
            opt(r.theoretical_delta),
            r.median_set_size,
            opt(r.utility_weighted_accuracy)
        );
    }
    for entry in &report.sweep {
        for r in &entry.reports {
            println!(
                "B={:<6} {:<8} {:<28} max_d {:.4} mean_d {:.4}",
                entry.bags, r.procedure, r.rule, r.max_delta, r.mean_delta
            );
        }
    }
}
