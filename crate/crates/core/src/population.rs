//! Worker populations: empirical datasets and synthetic binary workers with
//! uniformly distributed competence.

use rand::{Rng, RngCore};

use crate::domain::{individual_error, Answer, AnswerDomain, AnswerVector, DistanceMetric, GroundTruth};
use crate::error::{Error, Result};

/// A distribution over complete answer vectors, graded against a fixed
/// ground truth.
pub trait Population: Sync {
    fn name(&self) -> &str;
    fn domain(&self) -> &AnswerDomain;
    fn truth(&self) -> &GroundTruth;
    fn draw_worker(&self, rng: &mut dyn RngCore) -> AnswerVector;

    fn question_count(&self) -> usize {
        self.truth().len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPopulation {
    name: String,
    domain: AnswerDomain,
    truth: GroundTruth,
    workers: Vec<AnswerVector>,
}

impl EmpiricalPopulation {
    pub fn new(
        name: impl Into<String>,
        domain: AnswerDomain,
        truth: GroundTruth,
        workers: Vec<AnswerVector>,
    ) -> Result<Self> {
        domain.validate()?;
        if workers.is_empty() {
            return Err(Error::invalid("empirical population has no workers"));
        }
        let k = truth.len();
        if k == 0 || !truth.vector().is_in(&domain) {
            return Err(Error::invalid("ground truth is empty or outside the domain"));
        }
        for (i, w) in workers.iter().enumerate() {
            if w.len() != k {
                return Err(Error::invalid(format!(
                    "worker {i} answers {} questions, ground truth has {k}",
                    w.len()
                )));
            }
            if !w.is_in(&domain) {
                return Err(Error::invalid(format!("worker {i} has answers outside the domain")));
            }
        }
        Ok(Self {
            name: name.into(),
            domain,
            truth,
            workers,
        })
    }

    pub fn workers(&self) -> &[AnswerVector] {
        &self.workers
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }
}

impl Population for EmpiricalPopulation {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain(&self) -> &AnswerDomain {
        &self.domain
    }

    fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// Uniform draw with replacement.
    fn draw_worker(&self, rng: &mut dyn RngCore) -> AnswerVector {
        self.workers[rng.gen_range(0..self.workers.len())].clone()
    }
}

/// Binary workers whose competence `p` is drawn from `U[low, high]`; each
/// answer is independently correct with probability `p`. The true answer of
/// every question is label 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBinaryPopulation {
    low: f64,
    high: f64,
    name: String,
    domain: AnswerDomain,
    truth: GroundTruth,
}

impl SyntheticBinaryPopulation {
    pub fn new(low: f64, high: f64, k: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&high) || low > high {
            return Err(Error::invalid(format!(
                "competence interval [{low}, {high}] must satisfy 0 <= low <= high <= 1"
            )));
        }
        if k == 0 {
            return Err(Error::invalid("synthetic population needs at least one question"));
        }
        Ok(Self {
            low,
            high,
            name: format!("synthetic-U[{low},{high}]-k{k}"),
            domain: AnswerDomain::binary(),
            truth: GroundTruth::new(AnswerVector::from_labels(std::iter::repeat(1).take(k))),
        })
    }

    pub fn competence_range(&self) -> (f64, f64) {
        (self.low, self.high)
    }

    /// Worker with a given competence.
    pub fn draw_with_competence(&self, p: f64, rng: &mut dyn RngCore) -> AnswerVector {
        AnswerVector::from_answers(
            (0..self.truth.len())
                .map(|_| Answer::Label(u32::from(rng.gen::<f64>() < p)))
                .collect(),
        )
    }

    pub fn draw_competence(&self, rng: &mut dyn RngCore) -> f64 {
        if self.low == self.high {
            self.low
        } else {
            rng.gen_range(self.low..=self.high)
        }
    }

    /// A finite sample of `count` workers as an empirical population.
    pub fn materialize(&self, count: usize, rng: &mut dyn RngCore) -> Result<EmpiricalPopulation> {
        let workers = (0..count).map(|_| self.draw_worker(rng)).collect();
        EmpiricalPopulation::new(self.name.clone(), self.domain.clone(), self.truth.clone(), workers)
    }
}

impl Population for SyntheticBinaryPopulation {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain(&self) -> &AnswerDomain {
        &self.domain
    }

    fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    fn draw_worker(&self, rng: &mut dyn RngCore) -> AnswerVector {
        let p = self.draw_competence(rng);
        self.draw_with_competence(p, rng)
    }
}

/// Individual errors of an empirical population, binned over
/// `[0, max error]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorHistogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
    pub mean: f64,
    /// Population standard deviation (divides by the worker count).
    pub std_dev: f64,
    pub errors: Vec<f64>,
}

impl ErrorHistogram {
    pub fn bin_lower(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width
    }
}

pub fn error_histogram(
    population: &EmpiricalPopulation,
    metric: DistanceMetric,
    bins: usize,
) -> Result<ErrorHistogram> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let errors = population
        .workers()
        .iter()
        .map(|w| individual_error(w, population.truth(), metric))
        .collect::<Result<Vec<_>>>()?;
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let std_dev = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    let max = errors.iter().copied().fold(0.0, f64::max);
    let bin_width = max / bins as f64;
    let mut counts = vec![0u64; bins];
    for &e in &errors {
        let b = if bin_width > 0.0 {
            ((e / bin_width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    Ok(ErrorHistogram {
        bin_width,
        counts,
        mean,
        std_dev,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn truth4() -> GroundTruth {
        GroundTruth::new(AnswerVector::from_labels([1, 1, 1, 1]))
    }

    #[test]
    fn synthetic_extremes() {
        let pop = SyntheticBinaryPopulation::new(1.0, 1.0, 30).unwrap();
        let mut rng = seeded(3);
        for _ in 0..20 {
            assert_eq!(&pop.draw_worker(&mut rng), pop.truth().vector());
        }
        let pop = SyntheticBinaryPopulation::new(0.0, 0.0, 30).unwrap();
        for _ in 0..20 {
            assert!(pop.draw_worker(&mut rng).entries().iter().all(|a| *a == Answer::Label(0)));
        }
    }

    #[test]
    fn synthetic_competence_concentrates() {
        // Binomial(1000, 0.8): sd ~ 0.0126 in the fraction, 0.04 is > 3 sd
        let pop = SyntheticBinaryPopulation::new(0.8, 0.8, 1000).unwrap();
        let w = pop.draw_worker(&mut seeded(11));
        let correct = w.entries().iter().filter(|a| **a == Answer::Label(1)).count();
        let frac = correct as f64 / 1000.0;
        assert!((frac - 0.8).abs() <= 0.04, "{frac}");
    }

    #[test]
    fn synthetic_rejects_bad_interval() {
        assert!(SyntheticBinaryPopulation::new(0.6, 0.4, 5).is_err());
        assert!(SyntheticBinaryPopulation::new(-0.1, 0.4, 5).is_err());
        assert!(SyntheticBinaryPopulation::new(0.1, 0.4, 0).is_err());
    }

    #[test]
    fn empirical_draws_only_members() {
        let workers = vec![
            AnswerVector::from_labels([0, 1, 1, 1]),
            AnswerVector::from_labels([1, 0, 0, 1]),
        ];
        let pop = EmpiricalPopulation::new("t", AnswerDomain::binary(), truth4(), workers.clone()).unwrap();
        let mut rng = seeded(9);
        for _ in 0..100 {
            assert!(workers.contains(&pop.draw_worker(&mut rng)));
        }
    }

    #[test]
    fn empirical_validation() {
        assert!(EmpiricalPopulation::new("e", AnswerDomain::binary(), truth4(), vec![]).is_err());
        let short = vec![AnswerVector::from_labels([0, 1])];
        assert!(EmpiricalPopulation::new("s", AnswerDomain::binary(), truth4(), short).is_err());
        let out = vec![AnswerVector::from_labels([0, 1, 2, 1])];
        assert!(EmpiricalPopulation::new("o", AnswerDomain::binary(), truth4(), out).is_err());
    }

    #[test]
    fn histogram_examples() {
        let pop = EmpiricalPopulation::new(
            "perfect",
            AnswerDomain::binary(),
            truth4(),
            vec![truth4().vector().clone(); 3],
        )
        .unwrap();
        let h = error_histogram(&pop, DistanceMetric::Hamming, 4).unwrap();
        assert_eq!(h.counts, vec![3, 0, 0, 0]);
        assert_eq!((h.mean, h.std_dev), (0.0, 0.0));

        let truth = GroundTruth::new(AnswerVector::from_values([0.0]));
        let domain = AnswerDomain::continuous(100.0).unwrap();
        let workers = vec![AnswerVector::from_values([0.0]), AnswerVector::from_values([10.0])];
        let pop = EmpiricalPopulation::new("two", domain, truth, workers).unwrap();
        let h = error_histogram(&pop, DistanceMetric::L1, 2).unwrap();
        assert_eq!(h.counts, vec![1, 1]);
        assert_eq!(h.bin_width, 5.0);
        assert_eq!((h.mean, h.std_dev), (5.0, 5.0));

        assert!(error_histogram(&pop, DistanceMetric::L1, 0).is_err());
    }
}
