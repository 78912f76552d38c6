//! Follower-to-leader weighting.
//!
//! Every leader starts with weight 1. Each follower finds the leaders at
//! minimum restricted distance and splits one unit of weight equally among
//! them. Weights are accumulated exactly as rationals, so the total is
//! always exactly `m + n`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::domain::{restricted_distance, AnswerVector, DistanceMetric, PartialAnswerVector};
use crate::error::{Error, Result};

/// Indices (0-based, ascending) of every leader attaining the minimum
/// distance to a follower.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NearestSet(Vec<usize>);

impl NearestSet {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, leader: usize) -> bool {
        self.0.binary_search(&leader).is_ok()
    }
}

pub fn nearest_leaders(
    leaders: &[AnswerVector],
    follower: &PartialAnswerVector,
    metric: DistanceMetric,
) -> Result<NearestSet> {
    if leaders.is_empty() {
        return Err(Error::invalid("nearest leaders requested from an empty leader set"));
    }
    let mut best = f64::INFINITY;
    let mut set = Vec::new();
    for (j, leader) in leaders.iter().enumerate() {
        let d = restricted_distance(leader, follower, metric)?;
        if d < best {
            best = d;
            set.clear();
            set.push(j);
        } else if d == best {
            set.push(j);
        }
    }
    Ok(NearestSet(set))
}

/// Per-leader weights, held exactly and as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    exact: Vec<BigRational>,
    approx: Vec<f64>,
    integral: bool,
}

impl WeightVector {
    /// All weights 1, as for unweighted aggregation.
    pub fn unit(m: usize) -> Self {
        Self {
            exact: vec![BigRational::one(); m],
            approx: vec![1.0; m],
            integral: true,
        }
    }

    /// Weights from integers, mainly for tests and duplication checks.
    pub fn from_integers(weights: impl IntoIterator<Item = u64>) -> Self {
        Self::from_exact(
            weights
                .into_iter()
                .map(|w| BigRational::from_integer(BigInt::from(w)))
                .collect(),
        )
    }

    /// Weights given as `(numerator, denominator)` pairs.
    pub fn from_ratios(weights: impl IntoIterator<Item = (i64, i64)>) -> Self {
        Self::from_exact(
            weights
                .into_iter()
                .map(|(n, d)| BigRational::new(BigInt::from(n), BigInt::from(d)))
                .collect(),
        )
    }

    pub fn from_exact(exact: Vec<BigRational>) -> Self {
        let approx = exact.iter().map(|w| w.to_f64().unwrap_or(f64::NAN)).collect();
        let integral = exact.iter().all(|w| w.is_integer());
        Self {
            exact,
            approx,
            integral,
        }
    }

    pub fn len(&self) -> usize {
        self.exact.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty()
    }

    pub fn exact(&self) -> &[BigRational] {
        &self.exact
    }

    pub fn as_f64(&self) -> &[f64] {
        &self.approx
    }

    /// Whether every weight is a whole number, in which case `f64` sums of
    /// weights are exact.
    pub fn is_integral(&self) -> bool {
        self.integral
    }

    pub fn total(&self) -> BigRational {
        self.exact.iter().fold(BigRational::zero(), |acc, w| acc + w)
    }

    /// Every weight multiplied by the positive integer `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        let f = BigRational::from_integer(BigInt::from(factor));
        Self::from_exact(self.exact.iter().map(|w| w * &f).collect())
    }
}

/// `w_j = 1 + sum over followers of [j in NN(follower)] / |NN(follower)|`.
pub fn compute_weights(
    leaders: &[AnswerVector],
    followers: &[PartialAnswerVector],
    metric: DistanceMetric,
) -> Result<WeightVector> {
    if leaders.is_empty() {
        return Err(Error::invalid("cannot weight an empty leader set"));
    }
    let m = leaders.len();
    if followers.is_empty() {
        return Ok(WeightVector::unit(m));
    }
    // shares[j][d - 1]: number of followers whose nearest set has size d and contains j
    let mut shares = vec![vec![0u64; m]; m];
    for follower in followers {
        let nearest = nearest_leaders(leaders, follower, metric)?;
        let d = nearest.len();
        for &j in nearest.indices() {
            shares[j][d - 1] += 1;
        }
    }
    let exact = shares
        .into_iter()
        .map(|counts| {
            counts
                .into_iter()
                .enumerate()
                .filter(|(_, c)| *c > 0)
                .fold(BigRational::one(), |acc, (d, c)| {
                    acc + BigRational::new(BigInt::from(c), BigInt::from(d + 1))
                })
        })
        .collect();
    Ok(WeightVector::from_exact(exact))
}
