//! Crowdsourcing policies: budget arithmetic, instance sampling and
//! end-to-end execution.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::RngCore;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::aggregation::AggregationRule;
use crate::domain::{AnswerVector, DistanceMetric, PartialAnswerVector};
use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::population::Population;
use crate::weighting::{compute_weights, WeightVector};

/// Total number of purchasable answers, either absolute or as a multiple of
/// the question count (`"12k"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Budget {
    Answers(u64),
    CompleteVectors(u64),
}

impl Budget {
    pub fn answers(&self, k: usize) -> u64 {
        match *self {
            Budget::Answers(b) => b,
            Budget::CompleteVectors(c) => c * k as u64,
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Answers(b) => write!(f, "{b}"),
            Budget::CompleteVectors(c) => write!(f, "{c}k"),
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("cannot parse budget {s:?}"));
        match s.strip_suffix('k') {
            Some(c) => c.trim().parse().map(Budget::CompleteVectors).map_err(|_| bad()),
            None => s.parse().map(Budget::Answers).map_err(|_| bad()),
        }
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Budget::Answers(b) => serializer.serialize_u64(*b),
            Budget::CompleteVectors(_) => serializer.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct BudgetVisitor;

        impl Visitor<'_> for BudgetVisitor {
            type Value = Budget;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an answer count or a string like \"12k\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Budget, E> {
                Ok(Budget::Answers(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Budget, E> {
                u64::try_from(v).map(Budget::Answers).map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Budget, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(BudgetVisitor)
    }
}

/// `PCS_{alpha,beta}(B)`: a share `beta` of budget `B` buys followers who each
/// answer `floor(alpha k)` questions; the rest buys complete leaders.
/// `alpha = beta = 0` is plain crowdsourcing (CS).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub alpha: Fraction,
    pub beta: Fraction,
    pub budget: Budget,
    pub rule: AggregationRule,
    pub metric: DistanceMetric,
}

impl Policy {
    pub fn cs(budget: Budget, rule: AggregationRule, metric: DistanceMetric) -> Self {
        Self {
            alpha: Fraction::ZERO,
            beta: Fraction::ZERO,
            budget,
            rule,
            metric,
        }
    }

    pub fn pcs(
        alpha: Fraction,
        beta: Fraction,
        budget: Budget,
        rule: AggregationRule,
        metric: DistanceMetric,
    ) -> Self {
        Self {
            alpha,
            beta,
            budget,
            rule,
            metric,
        }
    }

    pub fn is_cs(&self) -> bool {
        self.beta.is_zero()
    }

    /// The same budget, rule and metric with no followers.
    pub fn baseline(&self) -> Self {
        Self::cs(self.budget, self.rule, self.metric)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.alpha.is_zero() && self.beta.is_zero() {
            write!(f, "CS({})", self.budget)
        } else {
            write!(f, "PCS_{{{},{}}}({})", self.alpha, self.beta, self.budget)
        }
    }
}

/// Worker counts a policy buys for a survey of `k` questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct PolicyPlan {
    /// Leaders.
    pub m: usize,
    /// Followers.
    pub n: usize,
    /// Questions per follower, `floor(alpha k)`.
    pub q: usize,
    pub k: usize,
}

impl PolicyPlan {
    pub fn cost(&self) -> u64 {
        (self.m * self.k + self.n * self.q) as u64
    }
}

/// `m = floor((1 - beta) B / k)`, then `n = floor(beta B / floor(alpha k))`.
pub fn plan(policy: &Policy, k: usize) -> Result<PolicyPlan> {
    if k == 0 {
        return Err(Error::invalid("survey must have at least one question"));
    }
    if policy.beta == Fraction::ONE {
        return Err(Error::infeasible("beta must be below 1 so that some leader is bought"));
    }
    let budget = policy.budget.answers(k);
    if budget < k as u64 {
        return Err(Error::infeasible(format!(
            "budget {budget} cannot buy one leader answering {k} questions"
        )));
    }
    let q = policy.alpha.floor_mul(k as u64) as usize;
    let m = (policy.beta.complement().floor_mul(budget) / k as u64) as usize;
    if m == 0 {
        return Err(Error::infeasible(format!(
            "{policy} leaves less than {k} answers for leaders"
        )));
    }
    let n = if policy.beta.is_zero() {
        0
    } else {
        if q == 0 {
            return Err(Error::infeasible(format!(
                "{policy}: followers would answer floor(alpha k) = 0 of {k} questions"
            )));
        }
        (policy.beta.floor_mul(budget) / q as u64) as usize
    };
    Ok(PolicyPlan { m, n, q, k })
}

/// Sampled leaders and followers.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub leaders: Vec<AnswerVector>,
    pub followers: Vec<PartialAnswerVector>,
}

impl Instance {
    pub fn new(leaders: Vec<AnswerVector>, followers: Vec<PartialAnswerVector>) -> Self {
        Self { leaders, followers }
    }

    pub fn weights(&self, metric: DistanceMetric) -> Result<WeightVector> {
        compute_weights(&self.leaders, &self.followers, metric)
    }

    /// Weights the leaders by their followers and aggregates them.
    pub fn aggregate<R: RngCore + ?Sized>(
        &self,
        rule: AggregationRule,
        metric: DistanceMetric,
        rng: &mut R,
    ) -> Result<(AnswerVector, WeightVector)> {
        let weights = self.weights(metric)?;
        let answer = rule.aggregate(&weights, &self.leaders, rng)?;
        Ok((answer, weights))
    }
}

/// Reduces a worker to `q` uniformly chosen questions.
pub fn mask_worker<R: RngCore + ?Sized>(worker: &AnswerVector, q: usize, rng: &mut R) -> PartialAnswerVector {
    let k = worker.len();
    if q >= k {
        return worker.to_partial();
    }
    let kept = index::sample(&mut *rng, k, q).into_vec();
    worker.masked(&kept)
}

/// Leaders first, then followers; every worker is drawn independently with
/// replacement.
pub fn sample_instance<P, R>(plan: &PolicyPlan, population: &P, rng: &mut R) -> Result<Instance>
where
    P: Population + ?Sized,
    R: RngCore,
{
    if population.question_count() != plan.k {
        return Err(Error::invalid(format!(
            "plan is for {} questions, population has {}",
            plan.k,
            population.question_count()
        )));
    }
    let leaders = (0..plan.m).map(|_| population.draw_worker(rng)).collect();
    let followers = (0..plan.n)
        .map(|_| {
            let w = population.draw_worker(rng);
            mask_worker(&w, plan.q, rng)
        })
        .collect();
    Ok(Instance { leaders, followers })
}

fn check_policy<P: Population + ?Sized>(policy: &Policy, population: &P) -> Result<PolicyPlan> {
    population.domain().check_metric(policy.metric)?;
    policy.rule.check_domain(population.domain())?;
    plan(policy, population.question_count())
}

/// plan, sample, weight, aggregate.
pub fn execute<P, R>(policy: &Policy, population: &P, rng: &mut R) -> Result<AnswerVector>
where
    P: Population + ?Sized,
    R: RngCore,
{
    let plan = check_policy(policy, population)?;
    let instance = sample_instance(&plan, population, rng)?;
    Ok(instance.aggregate(policy.rule, policy.metric, rng)?.0)
}

/// Whole budget spent on partial workers, aggregated with unit weights per
/// question over whoever answered it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AllFollowersPolicy {
    pub alpha: Fraction,
    pub budget: Budget,
    pub rule: AggregationRule,
    pub metric: DistanceMetric,
}

/// Outcome of one all-followers run.
#[derive(Debug, Clone, PartialEq)]
pub struct AllFollowersOutcome {
    pub answer: AnswerVector,
    /// Questions no sampled worker answered; filled by the fallback rule.
    pub uncovered: usize,
}

pub fn all_followers_policy(
    alpha: Fraction,
    budget: Budget,
    rule: AggregationRule,
    metric: DistanceMetric,
) -> AllFollowersPolicy {
    AllFollowersPolicy {
        alpha,
        budget,
        rule,
        metric,
    }
}

impl AllFollowersPolicy {
    /// `(workers, questions per worker)`.
    pub fn plan(&self, k: usize) -> Result<(usize, usize)> {
        if k == 0 {
            return Err(Error::invalid("survey must have at least one question"));
        }
        let q = self.alpha.floor_mul(k as u64) as usize;
        if q == 0 {
            return Err(Error::infeasible(format!(
                "all-followers: floor(alpha k) = 0 for alpha = {} and k = {k}",
                self.alpha
            )));
        }
        let n = (self.budget.answers(k) / q as u64) as usize;
        if n == 0 {
            return Err(Error::infeasible("all-followers budget buys no worker"));
        }
        Ok((n, q))
    }

    pub fn sample<P, R>(&self, population: &P, rng: &mut R) -> Result<Vec<PartialAnswerVector>>
    where
        P: Population + ?Sized,
        R: RngCore,
    {
        let (n, q) = self.plan(population.question_count())?;
        Ok((0..n)
            .map(|_| {
                let w = population.draw_worker(rng);
                mask_worker(&w, q, rng)
            })
            .collect())
    }

    pub fn execute<P, R>(&self, population: &P, rng: &mut R) -> Result<AllFollowersOutcome>
    where
        P: Population + ?Sized,
        R: RngCore,
    {
        population.domain().check_metric(self.metric)?;
        let workers = self.sample(population, rng)?;
        let (answer, uncovered) = self.rule.aggregate_partial(&workers, population.domain(), rng)?;
        Ok(AllFollowersOutcome { answer, uncovered })
    }
}

impl fmt::Display for AllFollowersPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AllFollowers_{{{}}}({})", self.alpha, self.budget)
    }
}
