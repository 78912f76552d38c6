use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use proxycrowd::io::config::{BoundGrid, HistogramConfig, PolicyGrid};
use proxycrowd::io::report::parse_fraction_list;
use proxycrowd::io::{save_dataset, Analysis, Experiment, ExperimentConfig, PopulationSpec, RunOptions};
use proxycrowd::rng::seeded;
use proxycrowd::{AggregationRule, Budget, DistanceMetric, Error, Fraction, Result, SyntheticBinaryPopulation};

/// Proxy crowdsourcing simulations: leaders, followers and weighted
/// aggregation.
#[derive(Parser)]
#[command(name = "proxycrowd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials; overrides the config.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct PopulationArgs {
    /// Dataset CSV; when absent a synthetic binary population is used.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Domain of the dataset, e.g. binary, categorical:a;b;c, continuous:1000.
    #[arg(long, default_value = "binary")]
    domain: String,
    /// Lower end of the synthetic competence interval.
    #[arg(long)]
    low: Option<f64>,
    /// Upper end of the synthetic competence interval.
    #[arg(long)]
    high: Option<f64>,
    /// Questions of the synthetic survey.
    #[arg(long, default_value_t = 25)]
    questions: usize,
}

#[derive(Args, Clone)]
struct RuleArgs {
    /// weighted_plurality, weighted_mean, weighted_median or weighted_sum.
    #[arg(long)]
    rule: Option<String>,
    /// hamming or l1.
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every analysis of a JSON experiment config.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Loss of PCS over a list of beta values against CS.
    SweepBeta {
        #[command(flatten)]
        population: PopulationArgs,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long, default_value = "0.2")]
        alpha: Fraction,
        /// Comma-separated, fractions like 1/3 allowed.
        #[arg(long, default_value = "0,0.1,0.2,1/3,0.4,0.5,0.6,0.7,0.8")]
        betas: String,
        #[arg(long, default_value = "12k")]
        budget: Budget,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Mean leader weight by leader rank.
    Weights {
        #[command(flatten)]
        population: PopulationArgs,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long, default_value = "0.2")]
        alpha: Fraction,
        #[arg(long, default_value = "0.375")]
        beta: Fraction,
        #[arg(long, default_value = "16k")]
        budget: Budget,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Histogram of individual worker errors.
    Histogram {
        #[command(flatten)]
        population: PopulationArgs,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Workers drawn from a synthetic population.
        #[arg(long, default_value_t = 1000)]
        workers: usize,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Exact misdirection probability against its exponential bound over
    /// a grid; --trials adds a Monte Carlo estimate with that many samples.
    BoundCheck {
        #[arg(long, default_value = "0.6,0.7,0.8,0.9")]
        p_high: String,
        #[arg(long, default_value = "0.55,0.6,0.7")]
        p_low: String,
        #[arg(long, default_value = "0.55,0.7,0.9")]
        p_follower: String,
        #[arg(long, default_value = "1,2,5,10,20")]
        follower_questions: String,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic binary dataset file (--trials is ignored).
    GenSynthetic {
        #[arg(long)]
        low: f64,
        #[arg(long)]
        high: f64,
        #[arg(long, default_value_t = 25)]
        questions: usize,
        #[arg(long, default_value_t = 100)]
        workers: usize,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

const DEFAULT_SEED: u64 = 1;

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad {what} value {v:?}")))
        })
        .collect()
}

fn parse_named<T: serde::de::DeserializeOwned>(name: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| Error::InvalidInput(format!("unknown name {name:?}")))
}

impl PopulationArgs {
    fn spec(&self) -> Result<PopulationSpec> {
        match (&self.dataset, self.low, self.high) {
            (Some(path), None, None) => Ok(PopulationSpec::Dataset {
                path: path.clone(),
                domain: self.domain.clone(),
            }),
            (None, Some(low), Some(high)) => Ok(PopulationSpec::Synthetic {
                low,
                high,
                questions: self.questions,
            }),
            _ => Err(Error::InvalidInput(
                "give either --dataset or both --low and --high".to_string(),
            )),
        }
    }
}

fn base_config(population: PopulationSpec, common: &Common, analysis: Analysis) -> ExperimentConfig {
    ExperimentConfig {
        population,
        metric: None,
        rule: None,
        grid: None,
        trials: common.trials.unwrap_or(proxycrowd::evaluation::DEFAULT_TRIALS),
        seed: common.seed.unwrap_or(DEFAULT_SEED),
        output_dir: None,
        skip_infeasible: false,
        analyses: vec![analysis],
        histogram: HistogramConfig::default(),
        bound_check: BoundGrid::default(),
        record_timing: false,
    }
}

fn with_rule(mut config: ExperimentConfig, rule: &RuleArgs) -> Result<ExperimentConfig> {
    config.rule = rule.rule.as_deref().map(parse_named::<AggregationRule>).transpose()?;
    config.metric = rule.metric.as_deref().map(parse_named::<DistanceMetric>).transpose()?;
    Ok(config)
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::InvalidInput("thread count must be positive".to_string()));
        }
        builder = builder.num_threads(t);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))
}

fn emit_table(config: ExperimentConfig, threads: Option<usize>, output: Option<PathBuf>) -> Result<()> {
    let analysis = config.analyses[0];
    let experiment = Experiment::prepare(config)?;
    let table = pool(threads)?.install(|| experiment.table(analysis))?;
    match output {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            table.write_csv(&mut out)?;
            out.flush()?;
        }
        None => table.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            output_dir,
            common,
        } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            if let Some(trials) = common.trials {
                config.trials = trials;
            }
            if output_dir.is_some() {
                config.output_dir = output_dir;
            }
            let bundle = proxycrowd::io::run_experiment_with(config, RunOptions { threads: common.threads })?;
            for file in &bundle.manifest.files {
                println!("{}\t{} rows", bundle.output_dir.join(&file.name).display(), file.rows);
            }
            Ok(())
        }
        Command::SweepBeta {
            population,
            rule,
            alpha,
            betas,
            budget,
            output,
            common,
        } => {
            let mut config = with_rule(base_config(population.spec()?, &common, Analysis::Sweep), &rule)?;
            config.grid = Some(PolicyGrid {
                alpha: vec![alpha],
                beta: parse_fraction_list(&betas)?,
                budget: vec![budget],
            });
            config.skip_infeasible = true;
            emit_table(config, common.threads, output)
        }
        Command::Weights {
            population,
            rule,
            alpha,
            beta,
            budget,
            output,
            common,
        } => {
            let mut config = with_rule(base_config(population.spec()?, &common, Analysis::WeightByRank), &rule)?;
            config.grid = Some(PolicyGrid {
                alpha: vec![alpha],
                beta: vec![beta],
                budget: vec![budget],
            });
            emit_table(config, common.threads, output)
        }
        Command::Histogram {
            population,
            bins,
            workers,
            output,
            common,
        } => {
            let mut config = base_config(population.spec()?, &common, Analysis::Histogram);
            config.histogram = HistogramConfig { bins, workers };
            emit_table(config, common.threads, output)
        }
        Command::BoundCheck {
            p_high,
            p_low,
            p_follower,
            follower_questions,
            output,
            common,
        } => {
            let population = PopulationSpec::Synthetic {
                low: 0.5,
                high: 1.0,
                questions: 1,
            };
            let mut config = base_config(population, &common, Analysis::BoundCheck);
            config.bound_check = BoundGrid {
                p_high: parse_list(&p_high, "p_high")?,
                p_low: parse_list(&p_low, "p_low")?,
                p_follower: parse_list(&p_follower, "p_follower")?,
                follower_questions: parse_list(&follower_questions, "follower_questions")?,
                mc_samples: common.trials.unwrap_or(0),
            };
            emit_table(config, common.threads, output)
        }
        Command::GenSynthetic {
            low,
            high,
            questions,
            workers,
            output,
            common,
        } => {
            if workers == 0 {
                return Err(Error::InvalidInput("at least one worker is required".to_string()));
            }
            let synthetic = SyntheticBinaryPopulation::new(low, high, questions)?;
            let population = synthetic.materialize(workers, &mut seeded(common.seed.unwrap_or(DEFAULT_SEED)))?;
            save_dataset(&output, &population)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
