//! Validated experiments, their CSV tables and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::aggregation::AggregationRule;
use crate::domain::{AnswerDomain, DistanceMetric};
use crate::error::{Error, Result};
use crate::evaluation::{
    estimate_all_followers_loss, estimate_loss, sweep_beta, weight_by_rank, weighted_vs_unweighted,
    SweepOutcome,
};
use crate::fraction::Fraction;
use crate::io::config::{Analysis, ExperimentConfig, PopulationSpec};
use crate::io::dataset::load_dataset;
use crate::policy::{all_followers_policy, plan, AllFollowersPolicy, Budget, Policy, PolicyPlan};
use crate::population::{error_histogram, EmpiricalPopulation, Population, SyntheticBinaryPopulation};
use crate::rng::seeded;
use crate::theory::{bound_check_grid, CompetencePair, MAX_EXACT_QUESTIONS};

/// A CSV table. Every row ends with the seed and config hash.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        let mut header: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
        header.push("seed".into());
        header.push("config_hash".into());
        Self {
            name: name.to_string(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        csv.write_record(&self.header)?;
        for row in &self.rows {
            csv.write_record(row)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }
}

enum LoadedPopulation {
    Synthetic(SyntheticBinaryPopulation),
    Empirical(EmpiricalPopulation),
}

impl LoadedPopulation {
    fn as_dyn(&self) -> &dyn Population {
        match self {
            LoadedPopulation::Synthetic(p) => p,
            LoadedPopulation::Empirical(p) => p,
        }
    }
}

struct GridPoint {
    policy: Policy,
    plan: PolicyPlan,
}

/// A config whose every requested analysis has been checked up front.
pub struct Experiment {
    config: ExperimentConfig,
    hash: String,
    population: LoadedPopulation,
    metric: DistanceMetric,
    rule: AggregationRule,
    analyses: Vec<Analysis>,
    budgets: Vec<Budget>,
    points: Vec<GridPoint>,
    all_followers: Vec<AllFollowersPolicy>,
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        if config.trials == 0 {
            return Err(config_error("trials must be at least 1"));
        }
        if config.analyses.is_empty() {
            return Err(config_error("no analyses requested"));
        }
        let mut analyses = config.analyses.clone();
        analyses.sort();
        analyses.dedup();

        let domain = config.domain()?;
        let metric = config.metric()?;
        let rule = config.rule()?;
        domain.check_metric(metric)?;
        rule.check_domain(&domain)?;
        let population = match &config.population {
            PopulationSpec::Synthetic { low, high, questions } => {
                LoadedPopulation::Synthetic(SyntheticBinaryPopulation::new(*low, *high, *questions)?)
            }
            PopulationSpec::Dataset { path, .. } => {
                LoadedPopulation::Empirical(load_dataset(path, &domain)?.population)
            }
        };
        let k = population.as_dyn().question_count();

        let mut budgets = Vec::new();
        let mut points = Vec::new();
        let mut all_followers = Vec::new();
        if analyses.iter().any(|a| a.needs_grid()) {
            let grid = config
                .grid
                .as_ref()
                .ok_or_else(|| config_error("the requested analyses need a policy grid"))?;
            if grid.alpha.is_empty() || grid.beta.is_empty() || grid.budget.is_empty() {
                return Err(config_error("policy grid lists must be non-empty"));
            }
            let reject = |e: Error| -> Result<()> {
                match e {
                    Error::InfeasiblePolicy(_) if config.skip_infeasible => {
                        info!("skipping {e}");
                        Ok(())
                    }
                    Error::InfeasiblePolicy(msg) => Err(config_error(format!("infeasible grid point: {msg}"))),
                    other => Err(other),
                }
            };
            for &budget in &grid.budget {
                let cs = Policy::cs(budget, rule, metric);
                match plan(&cs, k) {
                    Ok(_) => budgets.push(budget),
                    Err(e) => {
                        reject(e)?;
                        continue;
                    }
                }
                for &alpha in &grid.alpha {
                    for &beta in &grid.beta {
                        let policy = Policy::pcs(alpha, beta, budget, rule, metric);
                        match plan(&policy, k) {
                            Ok(p) => points.push(GridPoint { policy, plan: p }),
                            Err(e) => reject(e)?,
                        }
                    }
                    if analyses.contains(&Analysis::AllFollowers) {
                        let af = all_followers_policy(alpha, budget, rule, metric);
                        match af.plan(k) {
                            Ok(_) => all_followers.push(af),
                            Err(e) => reject(e)?,
                        }
                    }
                }
            }
        }
        if analyses.contains(&Analysis::WeightByRank) && !points.iter().any(|p| p.plan.n > 0) {
            return Err(config_error("weight-by-rank needs a grid point with followers"));
        }
        if analyses.contains(&Analysis::Histogram) {
            if config.histogram.bins == 0 || config.histogram.workers == 0 {
                return Err(config_error("histogram bins and workers must be positive"));
            }
        }
        if analyses.contains(&Analysis::BoundCheck) {
            let g = &config.bound_check;
            if let Some(q) = g.follower_questions.iter().find(|&&q| q > MAX_EXACT_QUESTIONS) {
                return Err(Error::UnsupportedSize(format!(
                    "bound check supports at most {MAX_EXACT_QUESTIONS} follower questions, got {q}"
                )));
            }
            let probabilities = g.p_high.iter().chain(&g.p_low).chain(&g.p_follower);
            if let Some(p) = probabilities.clone().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(config_error(format!("bound grid value {p} is not a probability")));
            }
            if g.follower_questions.contains(&0) {
                return Err(config_error("bound grid follower question counts must be positive"));
            }
            let any_valid = g.p_high.iter().any(|&h| {
                g.p_low.iter().any(|&l| {
                    g.p_follower
                        .iter()
                        .any(|&z| CompetencePair::new(h, l, z, g.follower_questions.first().copied().unwrap_or(1)).is_ok())
                })
            });
            if !any_valid || g.follower_questions.is_empty() {
                return Err(config_error("bound grid has no valid competence ordering"));
            }
        }

        Ok(Self {
            hash: config.hash(),
            config,
            population,
            metric,
            rule,
            analyses,
            budgets,
            points,
            all_followers,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn analyses(&self) -> &[Analysis] {
        &self.analyses
    }

    pub fn domain(&self) -> &AnswerDomain {
        self.population.as_dyn().domain()
    }

    fn push(&self, table: &mut Table, mut row: Vec<String>) {
        row.push(self.config.seed.to_string());
        row.push(self.hash.clone());
        table.rows.push(row);
    }

    pub fn table(&self, analysis: Analysis) -> Result<Table> {
        let start = Instant::now();
        let table = match analysis {
            Analysis::Loss => self.loss_table(),
            Analysis::Sweep => self.sweep_table(),
            Analysis::WeightByRank => self.weight_by_rank_table(),
            Analysis::Histogram => self.histogram_table(),
            Analysis::BoundCheck => self.bound_check_table(),
            Analysis::WeightedVsUnweighted => self.weighted_vs_unweighted_table(),
            Analysis::AllFollowers => self.all_followers_table(),
        }?;
        info!("{}: {} rows in {:.2?}", analysis.table_name(), table.rows.len(), start.elapsed());
        Ok(table)
    }

    fn pcs_points(&self, budget: Budget) -> impl Iterator<Item = &GridPoint> {
        self.points
            .iter()
            .filter(move |p| p.policy.budget == budget && !p.policy.is_cs())
    }

    fn loss_table(&self) -> Result<Table> {
        let mut t = Table::new(
            "loss",
            &["policy", "alpha", "beta", "budget", "m", "n", "q", "mean_loss", "std_dev", "std_error", "trials"],
        );
        let pop = self.population.as_dyn();
        let (trials, seed) = (self.config.trials, self.config.seed);
        for &budget in &self.budgets {
            let cs = Policy::cs(budget, self.rule, self.metric);
            let cs_plan = plan(&cs, pop.question_count())?;
            let mut entries = vec![(cs, cs_plan)];
            entries.extend(self.pcs_points(budget).map(|p| (p.policy, p.plan)));
            for (policy, p) in entries {
                let est = estimate_loss(&policy, pop, trials, seed)?;
                self.push(
                    &mut t,
                    vec![
                        est.policy,
                        policy.alpha.to_string(),
                        policy.beta.to_string(),
                        budget.to_string(),
                        p.m.to_string(),
                        p.n.to_string(),
                        p.q.to_string(),
                        est.mean.to_string(),
                        est.std_dev.to_string(),
                        est.std_error.to_string(),
                        est.trials.to_string(),
                    ],
                );
            }
        }
        Ok(t)
    }

    fn sweep_table(&self) -> Result<Table> {
        let mut t = Table::new(
            "sweep",
            &[
                "alpha", "budget", "beta", "policy", "status", "m", "n", "q", "mean_loss", "std_error",
                "cs_mean_loss", "cs_std_error", "is_argmin",
            ],
        );
        let grid = self.config.grid.as_ref().expect("validated grid");
        let pop = self.population.as_dyn();
        for &budget in &self.budgets {
            for &alpha in &grid.alpha {
                let result = sweep_beta(
                    alpha,
                    &grid.beta,
                    budget,
                    self.rule,
                    self.metric,
                    pop,
                    self.config.trials,
                    self.config.seed,
                )?;
                for (i, point) in result.points.iter().enumerate() {
                    let mut row = vec![
                        alpha.to_string(),
                        budget.to_string(),
                        point.value.to_string(),
                        point.policy.to_string(),
                    ];
                    match &point.outcome {
                        SweepOutcome::Estimated { plan, loss } => row.extend([
                            "estimated".to_string(),
                            plan.m.to_string(),
                            plan.n.to_string(),
                            plan.q.to_string(),
                            loss.mean.to_string(),
                            loss.std_error.to_string(),
                        ]),
                        SweepOutcome::Infeasible { .. } => {
                            row.push("infeasible".to_string());
                            row.extend(std::iter::repeat(String::new()).take(5));
                        }
                    }
                    row.extend([
                        result.baseline.mean.to_string(),
                        result.baseline.std_error.to_string(),
                        (result.argmin == Some(i)).to_string(),
                    ]);
                    self.push(&mut t, row);
                }
            }
        }
        Ok(t)
    }

    fn weight_by_rank_table(&self) -> Result<Table> {
        let mut t = Table::new(
            "weight_by_rank",
            &["policy", "alpha", "beta", "budget", "m", "n", "rank", "mean_weight", "std_error", "trials"],
        );
        let pop = self.population.as_dyn();
        for point in self.points.iter().filter(|p| p.plan.n > 0) {
            let table = weight_by_rank(&point.policy, pop, self.config.trials, self.config.seed)?;
            for rank in 0..table.m {
                self.push(
                    &mut t,
                    vec![
                        table.policy.clone(),
                        point.policy.alpha.to_string(),
                        point.policy.beta.to_string(),
                        point.policy.budget.to_string(),
                        table.m.to_string(),
                        table.n.to_string(),
                        (rank + 1).to_string(),
                        table.mean_weight[rank].to_string(),
                        table.std_error[rank].to_string(),
                        table.trials.to_string(),
                    ],
                );
            }
        }
        Ok(t)
    }

    fn weighted_vs_unweighted_table(&self) -> Result<Table> {
        let mut t = Table::new(
            "weighted_vs_unweighted",
            &[
                "policy", "alpha", "beta", "budget", "m", "n", "weighted_mean_loss", "weighted_std_error",
                "unweighted_mean_loss", "unweighted_std_error", "mean_difference", "difference_std_error",
                "trials",
            ],
        );
        let pop = self.population.as_dyn();
        for point in &self.points {
            let paired = weighted_vs_unweighted(&point.policy, pop, self.config.trials, self.config.seed)?;
            self.push(
                &mut t,
                vec![
                    point.policy.to_string(),
                    point.policy.alpha.to_string(),
                    point.policy.beta.to_string(),
                    point.policy.budget.to_string(),
                    point.plan.m.to_string(),
                    point.plan.n.to_string(),
                    paired.weighted.mean.to_string(),
                    paired.weighted.std_error.to_string(),
                    paired.unweighted.mean.to_string(),
                    paired.unweighted.std_error.to_string(),
                    paired.difference.mean.to_string(),
                    paired.difference.std_error.to_string(),
                    paired.difference.count.to_string(),
                ],
            );
        }
        Ok(t)
    }

    fn all_followers_table(&self) -> Result<Table> {
        let mut t = Table::new(
            "all_followers",
            &[
                "policy", "alpha", "budget", "n", "q", "mean_loss", "std_error", "cs_mean_loss", "cs_std_error",
                "uncovered_questions", "trials_with_uncovered", "trials",
            ],
        );
        let pop = self.population.as_dyn();
        let (trials, seed) = (self.config.trials, self.config.seed);
        for af in &self.all_followers {
            let (n, q) = af.plan(pop.question_count())?;
            let est = estimate_all_followers_loss(af, pop, trials, seed)?;
            let cs = estimate_loss(&Policy::cs(af.budget, self.rule, self.metric), pop, trials, seed)?;
            self.push(
                &mut t,
                vec![
                    est.loss.policy.clone(),
                    af.alpha.to_string(),
                    af.budget.to_string(),
                    n.to_string(),
                    q.to_string(),
                    est.loss.mean.to_string(),
                    est.loss.std_error.to_string(),
                    cs.mean.to_string(),
                    cs.std_error.to_string(),
                    est.uncovered_questions.to_string(),
                    est.trials_with_uncovered.to_string(),
                    est.loss.trials.to_string(),
                ],
            );
        }
        Ok(t)
    }

    fn histogram_table(&self) -> Result<Table> {
        let mut t = Table::new(
            "histogram",
            &["bin", "lower", "upper", "count", "workers", "mean_error", "std_dev"],
        );
        let materialized;
        let empirical = match &self.population {
            LoadedPopulation::Empirical(p) => p,
            LoadedPopulation::Synthetic(s) => {
                materialized = s.materialize(self.config.histogram.workers, &mut seeded(self.config.seed))?;
                &materialized
            }
        };
        let h = error_histogram(empirical, self.metric, self.config.histogram.bins)?;
        for (bin, count) in h.counts.iter().enumerate() {
            self.push(
                &mut t,
                vec![
                    bin.to_string(),
                    h.bin_lower(bin).to_string(),
                    h.bin_lower(bin + 1).to_string(),
                    count.to_string(),
                    h.errors.len().to_string(),
                    h.mean.to_string(),
                    h.std_dev.to_string(),
                ],
            );
        }
        Ok(t)
    }

    fn bound_check_table(&self) -> Result<Table> {
        let mut t = Table::new(
            "bound_check",
            &[
                "p_high", "p_low", "p_follower", "follower_questions", "bound", "exact", "dominates",
                "mc_estimate", "mc_std_error", "mc_samples",
            ],
        );
        let g = &self.config.bound_check;
        let rows = bound_check_grid(
            &g.p_high,
            &g.p_low,
            &g.p_follower,
            &g.follower_questions,
            g.mc_samples,
            self.config.seed,
        )?;
        for r in rows {
            let (mc, mc_se, mc_n) = match r.mc {
                Some(mc) => (mc.probability.to_string(), mc.std_error.to_string(), mc.samples.to_string()),
                None => (String::new(), String::new(), "0".to_string()),
            };
            self.push(
                &mut t,
                vec![
                    r.input.p_high.to_string(),
                    r.input.p_low.to_string(),
                    r.input.p_follower.to_string(),
                    r.input.follower_questions.to_string(),
                    r.bound.to_string(),
                    r.exact.to_string(),
                    r.dominates.to_string(),
                    mc,
                    mc_se,
                    mc_n,
                ],
            );
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestFile {
    pub name: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub trials: usize,
    pub config: ExperimentConfig,
    pub files: Vec<ManifestFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub output_dir: PathBuf,
    pub tables: Vec<Table>,
    pub manifest: Manifest,
}

impl ReportBundle {
    pub fn table(&self, analysis: Analysis) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == analysis.table_name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

pub fn run_experiment(config: ExperimentConfig) -> Result<ReportBundle> {
    run_experiment_with(config, RunOptions::default())
}

/// Validates the whole config, computes every table, then writes the tables
/// and `manifest.json` into the output directory. Nothing is written when
/// validation or computation fails.
pub fn run_experiment_with(config: ExperimentConfig, options: RunOptions) -> Result<ReportBundle> {
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = options.threads {
        if threads == 0 {
            return Err(config_error("thread count must be positive"));
        }
        builder = builder.num_threads(threads);
    }
    let pool = builder
        .build()
        .map_err(|e| config_error(format!("cannot start thread pool: {e}")))?;

    let experiment = Experiment::prepare(config)?;
    let output_dir = experiment.config.output_dir();
    let tables = pool.install(|| {
        experiment
            .analyses
            .iter()
            .map(|&a| experiment.table(a))
            .collect::<Result<Vec<_>>>()
    })?;

    fs::create_dir_all(&output_dir)?;
    let mut files = Vec::with_capacity(tables.len());
    for table in &tables {
        let bytes = table.to_csv_bytes()?;
        fs::write(output_dir.join(table.file_name()), &bytes)?;
        files.push(ManifestFile {
            name: table.file_name(),
            rows: table.rows.len(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let config = &experiment.config;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: experiment.hash.clone(),
        seed: config.seed,
        trials: config.trials,
        config: config.canonical(),
        files,
        wall_time_seconds: config.record_timing.then(|| start.elapsed().as_secs_f64()),
    };
    write_manifest(&output_dir, &manifest)?;
    Ok(ReportBundle {
        output_dir,
        tables,
        manifest,
    })
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

/// `values` parsed as exact fractions, for command-line lists like
/// `0,1/3,0.5`.
pub fn parse_fraction_list(values: &str) -> Result<Vec<Fraction>> {
    values.split(',').map(|v| v.trim().parse()).collect()
}
