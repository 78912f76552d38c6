//! Weighted aggregation rules.
//!
//! Each rule works question by question over `(worker, answer)` pairs, so
//! the same code aggregates weighted complete leaders and unit-weight
//! partial workers (who only contribute where they answered).

use std::cmp::Ordering;
use std::fmt;

use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Answer, AnswerDomain, AnswerVector, PartialAnswerVector};
use crate::error::{Error, Result};
use crate::weighting::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationRule {
    WeightedPlurality,
    WeightedMean,
    WeightedMedian,
    /// `sum_i w_i x_i` with no normalization. Kept for comparison only; it
    /// is not a mean and does not stay inside the domain.
    WeightedSum,
}

impl AggregationRule {
    pub fn natural_for(domain: &AnswerDomain) -> Self {
        if domain.is_categorical() {
            AggregationRule::WeightedPlurality
        } else {
            AggregationRule::WeightedMean
        }
    }

    pub fn check_domain(&self, domain: &AnswerDomain) -> Result<()> {
        let ok = match self {
            AggregationRule::WeightedPlurality => domain.is_categorical(),
            _ => !domain.is_categorical(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("{self} does not apply to the {domain} domain")))
        }
    }

    /// Aggregates complete leader vectors under `weights`. Only plurality
    /// consumes randomness, and only on exact ties.
    pub fn aggregate<R: Rng + ?Sized>(
        &self,
        weights: &WeightVector,
        leaders: &[AnswerVector],
        rng: &mut R,
    ) -> Result<AnswerVector> {
        match self {
            AggregationRule::WeightedPlurality => weighted_plurality(weights, leaders, rng),
            AggregationRule::WeightedMean => weighted_mean(weights, leaders),
            AggregationRule::WeightedMedian => weighted_median(weights, leaders),
            AggregationRule::WeightedSum => weighted_sum(weights, leaders),
        }
    }

    /// Unit-weight aggregation over partial vectors: each question is
    /// aggregated over the workers who answered it. A question nobody
    /// answered gets a uniformly random label (categorical) or the domain
    /// midpoint (continuous); the number of such questions is returned.
    pub fn aggregate_partial<R: Rng + ?Sized>(
        &self,
        workers: &[PartialAnswerVector],
        domain: &AnswerDomain,
        rng: &mut R,
    ) -> Result<(AnswerVector, usize)> {
        self.check_domain(domain)?;
        let k = question_count(workers.iter().map(PartialAnswerVector::len))?;
        let weights = WeightVector::unit(workers.len());
        let mut out = Vec::with_capacity(k);
        let mut uncovered = 0;
        for j in 0..k {
            let column: Vec<(usize, Answer)> = workers
                .iter()
                .enumerate()
                .filter_map(|(i, w)| w.entries()[j].map(|a| (i, a)))
                .collect();
            if column.is_empty() {
                uncovered += 1;
                out.push(match domain {
                    AnswerDomain::Categorical { labels } => {
                        Answer::Label(rng.gen_range(0..labels.len()) as u32)
                    }
                    AnswerDomain::Continuous { upper } => Answer::Value(upper / 2.0),
                });
                continue;
            }
            out.push(match self {
                AggregationRule::WeightedPlurality => plurality_column(&column, &weights, rng)?,
                AggregationRule::WeightedMean => mean_column(&column, &weights, true)?,
                AggregationRule::WeightedSum => mean_column(&column, &weights, false)?,
                AggregationRule::WeightedMedian => median_column(&column, &weights)?,
            });
        }
        Ok((AnswerVector::from_answers(out), uncovered))
    }
}

impl fmt::Display for AggregationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationRule::WeightedPlurality => "weighted_plurality",
            AggregationRule::WeightedMean => "weighted_mean",
            AggregationRule::WeightedMedian => "weighted_median",
            AggregationRule::WeightedSum => "weighted_sum",
        })
    }
}

fn question_count(mut lengths: impl Iterator<Item = usize>) -> Result<usize> {
    let k = lengths
        .next()
        .ok_or_else(|| Error::invalid("aggregation over an empty worker set"))?;
    if lengths.any(|l| l != k) {
        return Err(Error::invalid("workers disagree on the number of questions"));
    }
    Ok(k)
}

fn by_question<F>(weights: &WeightVector, leaders: &[AnswerVector], mut per_question: F) -> Result<AnswerVector>
where
    F: FnMut(&[(usize, Answer)]) -> Result<Answer>,
{
    let k = question_count(leaders.iter().map(AnswerVector::len))?;
    if weights.len() != leaders.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} leaders",
            weights.len(),
            leaders.len()
        )));
    }
    let mut column = Vec::with_capacity(leaders.len());
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        column.clear();
        column.extend(leaders.iter().enumerate().map(|(i, x)| (i, x.get(j))));
        out.push(per_question(&column)?);
    }
    Ok(AnswerVector::from_answers(out))
}

/// Per question, the label with the largest total weight. Exact ties are
/// broken uniformly at random from `rng`.
pub fn weighted_plurality<R: Rng + ?Sized>(
    weights: &WeightVector,
    leaders: &[AnswerVector],
    rng: &mut R,
) -> Result<AnswerVector> {
    by_question(weights, leaders, |column| plurality_column(column, weights, rng))
}

/// Per question, `sum_i w_i x_i / sum_i w_i`.
pub fn weighted_mean(weights: &WeightVector, leaders: &[AnswerVector]) -> Result<AnswerVector> {
    by_question(weights, leaders, |column| mean_column(column, weights, true))
}

/// Per question, `sum_i w_i x_i` without dividing by the total weight.
pub fn weighted_sum(weights: &WeightVector, leaders: &[AnswerVector]) -> Result<AnswerVector> {
    by_question(weights, leaders, |column| mean_column(column, weights, false))
}

/// Per question, the smallest answer `v` such that leaders answering at most
/// `v` carry at least half of the total weight (lower weighted median).
pub fn weighted_median(weights: &WeightVector, leaders: &[AnswerVector]) -> Result<AnswerVector> {
    by_question(weights, leaders, |column| median_column(column, weights))
}

fn plurality_column<R: Rng + ?Sized>(
    column: &[(usize, Answer)],
    weights: &WeightVector,
    rng: &mut R,
) -> Result<Answer> {
    let w = weights.as_f64();
    let mut tally: Vec<(u32, f64)> = Vec::with_capacity(4);
    for &(i, a) in column {
        let label = a
            .label()
            .ok_or_else(|| Error::invalid("plurality over non-categorical answers"))?;
        match tally.iter_mut().find(|(l, _)| *l == label) {
            Some(entry) => entry.1 += w[i],
            None => tally.push((label, w[i])),
        }
    }
    let best = tally.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let mut tied: Vec<u32> = if weights.is_integral() {
        tally.iter().filter(|t| t.1 == best).map(|t| t.0).collect()
    } else {
        let total: f64 = column.iter().map(|&(i, _)| w[i]).sum();
        let slack = 1e-9 * total.max(1.0);
        let near: Vec<u32> = tally.iter().filter(|t| t.1 >= best - slack).map(|t| t.0).collect();
        if near.len() > 1 {
            resolve_exact(column, weights, &near)
        } else {
            near
        }
    };
    tied.sort_unstable();
    let pick = if tied.len() == 1 {
        0
    } else {
        rng.gen_range(0..tied.len())
    };
    Ok(Answer::Label(tied[pick]))
}

/// Labels among `candidates` whose exact total weight is maximal.
fn resolve_exact(column: &[(usize, Answer)], weights: &WeightVector, candidates: &[u32]) -> Vec<u32> {
    let exact = weights.exact();
    let sums: Vec<BigRational> = candidates
        .iter()
        .map(|&label| {
            column
                .iter()
                .filter(|(_, a)| a.label() == Some(label))
                .fold(BigRational::zero(), |acc, (i, _)| acc + &exact[*i])
        })
        .collect();
    let best = sums.iter().max().cloned().unwrap_or_else(BigRational::zero);
    candidates
        .iter()
        .zip(&sums)
        .filter(|(_, s)| **s == best)
        .map(|(l, _)| *l)
        .collect()
}

fn values(column: &[(usize, Answer)]) -> Result<Vec<(usize, f64)>> {
    column
        .iter()
        .map(|&(i, a)| {
            a.value()
                .map(|v| (i, v))
                .ok_or_else(|| Error::invalid("mean/median over non-continuous answers"))
        })
        .collect()
}

fn mean_column(column: &[(usize, Answer)], weights: &WeightVector, normalize: bool) -> Result<Answer> {
    let w = weights.as_f64();
    let vals = values(column)?;
    let num: f64 = vals.iter().map(|&(i, v)| w[i] * v).sum();
    if !normalize {
        return Ok(Answer::Value(num));
    }
    let den: f64 = vals.iter().map(|&(i, _)| w[i]).sum();
    if den <= 0.0 {
        return Err(Error::invalid("total weight must be positive"));
    }
    // a single distinct value is returned as is, free of rounding
    if vals.iter().all(|&(_, v)| v == vals[0].1) {
        return Ok(Answer::Value(vals[0].1));
    }
    Ok(Answer::Value(num / den))
}

fn median_column(column: &[(usize, Answer)], weights: &WeightVector) -> Result<Answer> {
    let mut vals = values(column)?;
    vals.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    if weights.is_integral() {
        let w = weights.as_f64();
        let total: f64 = vals.iter().map(|&(i, _)| w[i]).sum();
        let mut cum = 0.0;
        for &(i, v) in &vals {
            cum += w[i];
            if 2.0 * cum >= total {
                return Ok(Answer::Value(v));
            }
        }
    } else {
        let exact = weights.exact();
        let total = vals.iter().fold(BigRational::zero(), |acc, &(i, _)| acc + &exact[i]);
        let mut cum = BigRational::zero();
        for &(i, v) in &vals {
            cum += &exact[i];
            if (&cum + &cum).cmp(&total) != Ordering::Less {
                return Ok(Answer::Value(v));
            }
        }
    }
    vals.last()
        .map(|&(_, v)| Answer::Value(v))
        .ok_or_else(|| Error::invalid("median of an empty column"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn example_leaders() -> Vec<AnswerVector> {
        vec![
            AnswerVector::from_labels([0, 0, 0, 0]),
            AnswerVector::from_labels([0, 1, 0, 1]),
            AnswerVector::from_labels([0, 1, 1, 0]),
            AnswerVector::from_labels([1, 1, 1, 1]),
        ]
    }

    #[test]
    fn example_plurality() {
        let w = WeightVector::from_ratios([(4, 3), (3, 2), (4, 3), (11, 6)]);
        let out = weighted_plurality(&w, &example_leaders(), &mut seeded(0)).unwrap();
        assert_eq!(out, AnswerVector::from_labels([0, 1, 1, 1]));
    }

    #[test]
    fn simple_plurality() {
        let leaders = vec![
            AnswerVector::from_labels([0]),
            AnswerVector::from_labels([0]),
            AnswerVector::from_labels([1]),
        ];
        let out = weighted_plurality(&WeightVector::unit(3), &leaders, &mut seeded(1)).unwrap();
        assert_eq!(out, AnswerVector::from_labels([0]));
    }

    #[test]
    fn ties_are_uniform() {
        let leaders = vec![AnswerVector::from_labels([0]), AnswerVector::from_labels([1])];
        let w = WeightVector::unit(2);
        let mut rng = seeded(2024);
        let draws = 10_000;
        let zeros = (0..draws)
            .filter(|_| weighted_plurality(&w, &leaders, &mut rng).unwrap().get(0) == Answer::Label(0))
            .count();
        let freq = zeros as f64 / draws as f64;
        assert!((freq - 0.5).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn fractional_ties_are_detected_exactly() {
        // 1/3 + 1/3 + 1/3 against 1: an exact tie that f64 sums may miss
        let leaders = vec![
            AnswerVector::from_labels([0]),
            AnswerVector::from_labels([0]),
            AnswerVector::from_labels([0]),
            AnswerVector::from_labels([1]),
        ];
        let w = WeightVector::from_ratios([(1, 3), (1, 3), (1, 3), (1, 1)]);
        let mut rng = seeded(5);
        let mut seen = [false; 2];
        for _ in 0..200 {
            let l = weighted_plurality(&w, &leaders, &mut rng).unwrap().get(0).label().unwrap();
            seen[l as usize] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn mean_examples() {
        let leaders = vec![AnswerVector::from_values([0.0, 10.0]), AnswerVector::from_values([10.0, 0.0])];
        assert_eq!(
            weighted_mean(&WeightVector::unit(2), &leaders).unwrap(),
            AnswerVector::from_values([5.0, 5.0])
        );
        assert_eq!(
            weighted_mean(&WeightVector::from_integers([3, 1]), &leaders).unwrap(),
            AnswerVector::from_values([2.5, 7.5])
        );
        let single = vec![AnswerVector::from_values([3.7, 900.0])];
        let w = WeightVector::from_ratios([(7, 3)]);
        assert_eq!(weighted_mean(&w, &single).unwrap(), single[0]);
    }

    #[test]
    fn sum_is_unnormalized() {
        let leaders = vec![AnswerVector::from_values([0.0, 10.0]), AnswerVector::from_values([10.0, 0.0])];
        assert_eq!(
            weighted_sum(&WeightVector::from_integers([3, 1]), &leaders).unwrap(),
            AnswerVector::from_values([10.0, 30.0])
        );
    }

    #[test]
    fn median_examples() {
        let leaders = vec![
            AnswerVector::from_values([1.0]),
            AnswerVector::from_values([5.0]),
            AnswerVector::from_values([100.0]),
        ];
        let m = |w: &WeightVector| weighted_median(w, &leaders).unwrap().get(0).value().unwrap();
        assert_eq!(m(&WeightVector::unit(3)), 5.0);
        // cumulative weights 10, 11, 12 against half of 12
        assert_eq!(m(&WeightVector::from_integers([10, 1, 1])), 1.0);
        assert_eq!(m(&WeightVector::from_ratios([(1, 3), (1, 3), (1, 2)])), 5.0);
        let single = vec![AnswerVector::from_values([42.0])];
        assert_eq!(
            weighted_median(&WeightVector::from_integers([9]), &single).unwrap(),
            single[0]
        );
        // lower median on an even split
        let two = vec![AnswerVector::from_values([1.0]), AnswerVector::from_values([5.0])];
        assert_eq!(weighted_median(&WeightVector::unit(2), &two).unwrap().get(0), Answer::Value(1.0));
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let mut rng = seeded(0);
        assert!(weighted_plurality(&WeightVector::unit(0), &[], &mut rng).is_err());
        assert!(weighted_mean(&WeightVector::unit(0), &[]).is_err());
        assert!(weighted_median(&WeightVector::unit(0), &[]).is_err());
        let leaders = vec![AnswerVector::from_values([1.0])];
        assert!(weighted_mean(&WeightVector::unit(2), &leaders).is_err());
        assert!(weighted_plurality(&WeightVector::unit(1), &leaders, &mut rng).is_err());
    }

    #[test]
    fn rule_domain_checks() {
        let cont = AnswerDomain::continuous(10.0).unwrap();
        assert!(AggregationRule::WeightedPlurality.check_domain(&cont).is_err());
        assert!(AggregationRule::WeightedMedian.check_domain(&cont).is_ok());
        assert!(AggregationRule::WeightedMean.check_domain(&AnswerDomain::binary()).is_err());
    }

    #[test]
    fn partial_aggregation_covers_answered_questions() {
        let workers = vec![
            PartialAnswerVector::from_values([Some(2.0), None, None]),
            PartialAnswerVector::from_values([Some(4.0), Some(6.0), None]),
        ];
        let cont = AnswerDomain::continuous(10.0).unwrap();
        let (out, uncovered) = AggregationRule::WeightedMean
            .aggregate_partial(&workers, &cont, &mut seeded(0))
            .unwrap();
        assert_eq!(out, AnswerVector::from_values([3.0, 6.0, 5.0]));
        assert_eq!(uncovered, 1);
    }
}
