//! Monte Carlo evaluation of policies.
//!
//! Trial `t` of a run with master seed `s` always draws from
//! `substream(s, t)`. Trials run in parallel and their results are reduced
//! in trial order, so every estimate is a pure function of its arguments
//! regardless of thread count.

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{individual_error, restricted_distance};
use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::policy::{plan, sample_instance, AllFollowersPolicy, Policy, PolicyPlan};
use crate::population::Population;
use crate::rng::{substream, SimRng};
use crate::weighting::WeightVector;

/// Number of sampled instances per estimate unless configured otherwise.
pub const DEFAULT_TRIALS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator; 0 for a single sample).
    pub std_dev: f64,
    pub std_error: f64,
    pub count: usize,
}

impl SampleStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let count = samples.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std_dev: f64::NAN,
                std_error: f64::NAN,
                count,
            };
        }
        let n = count as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std_dev = if count > 1 {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_dev,
            std_error: std_dev / n.sqrt(),
            count,
        }
    }
}

/// Mean aggregated error of a policy over sampled instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossEstimate {
    pub policy: String,
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
    pub trials: usize,
    pub seed: u64,
}

impl LossEstimate {
    fn from_losses(policy: String, losses: &[f64], seed: u64) -> Self {
        let s = SampleStats::from_samples(losses);
        Self {
            policy,
            mean: s.mean,
            std_dev: s.std_dev,
            std_error: s.std_error,
            trials: s.count,
            seed,
        }
    }

    /// `sqrt(se_a^2 + se_b^2)` for comparing two independent estimates.
    pub fn combined_std_error(&self, other: &LossEstimate) -> f64 {
        self.std_error.hypot(other.std_error)
    }
}

/// Runs `trial` once per index with its own substream, in parallel, and
/// returns results in trial order.
pub fn run_trials<T, F>(trials: usize, seed: u64, trial: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> Result<T> + Sync,
{
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    (0..trials)
        .into_par_iter()
        .map(|t| trial(t, &mut substream(seed, t as u64)))
        .collect()
}

fn checked_plan<P: Population + ?Sized>(policy: &Policy, population: &P) -> Result<PolicyPlan> {
    population.domain().check_metric(policy.metric)?;
    policy.rule.check_domain(population.domain())?;
    plan(policy, population.question_count())
}

/// Mean over `trials` instances of the distance from the aggregate to the
/// population's ground truth.
pub fn estimate_loss<P: Population + ?Sized>(
    policy: &Policy,
    population: &P,
    trials: usize,
    seed: u64,
) -> Result<LossEstimate> {
    let plan = checked_plan(policy, population)?;
    let truth = population.truth();
    let losses = run_trials(trials, seed, |_, rng| {
        let instance = sample_instance(&plan, population, rng)?;
        let (answer, _) = instance.aggregate(policy.rule, policy.metric, rng)?;
        restricted_distance(&answer, truth.vector(), policy.metric)
    })?;
    Ok(LossEstimate::from_losses(policy.to_string(), &losses, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllFollowersEstimate {
    pub loss: LossEstimate,
    /// Questions summed over trials that no sampled worker answered.
    pub uncovered_questions: u64,
    pub trials_with_uncovered: usize,
}

pub fn estimate_all_followers_loss<P: Population + ?Sized>(
    policy: &AllFollowersPolicy,
    population: &P,
    trials: usize,
    seed: u64,
) -> Result<AllFollowersEstimate> {
    population.domain().check_metric(policy.metric)?;
    policy.rule.check_domain(population.domain())?;
    policy.plan(population.question_count())?;
    let truth = population.truth();
    let outcomes = run_trials(trials, seed, |_, rng| {
        let out = policy.execute(population, rng)?;
        let loss = restricted_distance(&out.answer, truth.vector(), policy.metric)?;
        Ok((loss, out.uncovered))
    })?;
    let losses: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    Ok(AllFollowersEstimate {
        loss: LossEstimate::from_losses(policy.to_string(), &losses, seed),
        uncovered_questions: outcomes.iter().map(|o| o.1 as u64).sum(),
        trials_with_uncovered: outcomes.iter().filter(|o| o.1 > 0).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha,
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOutcome {
    Estimated { plan: PolicyPlan, loss: LossEstimate },
    Infeasible { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: Fraction,
    pub policy: Policy,
    pub outcome: SweepOutcome,
}

impl SweepPoint {
    pub fn loss(&self) -> Option<&LossEstimate> {
        match &self.outcome {
            SweepOutcome::Estimated { loss, .. } => Some(loss),
            SweepOutcome::Infeasible { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    /// CS at the same budget, estimated with the same seed.
    pub baseline: LossEstimate,
    /// Index of the feasible point with the lowest mean loss.
    pub argmin: Option<usize>,
}

impl SweepResult {
    pub fn losses(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.loss().map(|l| l.mean)).collect()
    }
}

/// Loss of `base` with `axis` replaced by each of `values`. Infeasible points
/// are recorded, not fatal. All points share the seed, so each is a matched
/// comparison with the baseline.
pub fn sweep<P: Population + ?Sized>(
    base: &Policy,
    axis: SweepAxis,
    values: &[Fraction],
    population: &P,
    trials: usize,
    seed: u64,
) -> Result<SweepResult> {
    let baseline = estimate_loss(&base.baseline(), population, trials, seed)?;
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let mut policy = *base;
        match axis {
            SweepAxis::Alpha => policy.alpha = value,
            SweepAxis::Beta => policy.beta = value,
        }
        let outcome = match checked_plan(&policy, population) {
            Ok(plan) => SweepOutcome::Estimated {
                plan,
                loss: estimate_loss(&policy, population, trials, seed)?,
            },
            Err(e @ Error::InfeasiblePolicy(_)) => SweepOutcome::Infeasible {
                reason: e.to_string(),
            },
            Err(e) => return Err(e),
        };
        points.push(SweepPoint {
            value,
            policy,
            outcome,
        });
    }
    let argmin = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.loss().map(|l| (i, l.mean)))
        .fold(None, |best: Option<(usize, f64)>, (i, m)| match best {
            Some((_, b)) if b <= m => best,
            _ => Some((i, m)),
        })
        .map(|(i, _)| i);
    Ok(SweepResult {
        axis,
        points,
        baseline,
        argmin,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn sweep_beta<P: Population + ?Sized>(
    alpha: Fraction,
    betas: &[Fraction],
    budget: crate::policy::Budget,
    rule: crate::aggregation::AggregationRule,
    metric: crate::domain::DistanceMetric,
    population: &P,
    trials: usize,
    seed: u64,
) -> Result<SweepResult> {
    let base = Policy::pcs(alpha, Fraction::ZERO, budget, rule, metric);
    sweep(&base, SweepAxis::Beta, betas, population, trials, seed)
}

/// Mean leader weight by individual-error rank (rank 1 = lowest error).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightByRankTable {
    pub policy: String,
    pub m: usize,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub mean_weight: Vec<f64>,
    pub std_error: Vec<f64>,
    #[serde(skip)]
    per_trial: Vec<Vec<f64>>,
}

impl WeightByRankTable {
    /// Weights sorted by rank, one row per trial.
    pub fn per_trial(&self) -> &[Vec<f64>] {
        &self.per_trial
    }

    /// Per-trial paired difference `w[rank a] - w[rank b]` (1-based ranks).
    pub fn rank_gap(&self, a: usize, b: usize) -> Result<SampleStats> {
        if a == 0 || b == 0 || a > self.m || b > self.m {
            return Err(Error::invalid(format!("ranks must lie in 1..={}", self.m)));
        }
        let diffs: Vec<f64> = self.per_trial.iter().map(|r| r[a - 1] - r[b - 1]).collect();
        Ok(SampleStats::from_samples(&diffs))
    }
}

pub fn weight_by_rank<P: Population + ?Sized>(
    policy: &Policy,
    population: &P,
    trials: usize,
    seed: u64,
) -> Result<WeightByRankTable> {
    let plan = checked_plan(policy, population)?;
    if plan.n == 0 {
        return Err(Error::invalid(format!(
            "{policy} has no followers; every leader would weigh 1"
        )));
    }
    let truth = population.truth();
    let expected_total = BigRational::from_integer(BigInt::from(plan.m + plan.n));
    let rows = run_trials(trials, seed, |t, rng| {
        let instance = sample_instance(&plan, population, rng)?;
        let weights = instance.weights(policy.metric)?;
        if weights.total() != expected_total {
            return Err(Error::invalid(format!("trial {t}: weights do not sum to m + n")));
        }
        let errors = instance
            .leaders
            .iter()
            .map(|l| individual_error(l, truth, policy.metric))
            .collect::<Result<Vec<_>>>()?;
        let mut order: Vec<usize> = (0..plan.m).collect();
        // stable: equal errors keep sampled order
        order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]));
        Ok(order.into_iter().map(|j| weights.as_f64()[j]).collect::<Vec<f64>>())
    })?;
    let (mean_weight, std_error) = (0..plan.m)
        .map(|r| {
            let col: Vec<f64> = rows.iter().map(|row| row[r]).collect();
            let s = SampleStats::from_samples(&col);
            (s.mean, s.std_error)
        })
        .unzip();
    Ok(WeightByRankTable {
        policy: policy.to_string(),
        m: plan.m,
        n: plan.n,
        trials,
        seed,
        mean_weight,
        std_error,
        per_trial: rows,
    })
}

/// The same sampled leaders aggregated with and without follower weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedLoss {
    pub weighted: LossEstimate,
    pub unweighted: LossEstimate,
    /// Per-trial `weighted - unweighted`.
    pub difference: SampleStats,
}

pub fn weighted_vs_unweighted<P: Population + ?Sized>(
    policy: &Policy,
    population: &P,
    trials: usize,
    seed: u64,
) -> Result<PairedLoss> {
    let plan = checked_plan(policy, population)?;
    let truth = population.truth();
    let pairs = run_trials(trials, seed, |_, rng| {
        let instance = sample_instance(&plan, population, rng)?;
        let weights = instance.weights(policy.metric)?;
        // both aggregations see the same tie-breaking stream
        let mut tie_rng = rng.clone();
        let weighted = policy.rule.aggregate(&weights, &instance.leaders, rng)?;
        let unweighted = policy
            .rule
            .aggregate(&WeightVector::unit(plan.m), &instance.leaders, &mut tie_rng)?;
        Ok((
            restricted_distance(&weighted, truth.vector(), policy.metric)?,
            restricted_distance(&unweighted, truth.vector(), policy.metric)?,
        ))
    })?;
    let weighted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let unweighted: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    Ok(PairedLoss {
        weighted: LossEstimate::from_losses(policy.to_string(), &weighted, seed),
        unweighted: LossEstimate::from_losses(format!("{policy} unweighted"), &unweighted, seed),
        difference: SampleStats::from_samples(&diff),
    })
}
