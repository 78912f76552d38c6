//! Qualitative behavior of proxy crowdsourcing on synthetic binary
//! populations.
//!
//! Competence intervals symmetric around 1/2, such as `U[0.1, 0.9]`, are
//! invariant under flipping every answer: flipping maps each instance to an
//! equally likely one with the same distances and turns an aggregated error
//! of `e` into `k - e`. Every policy then has expected loss `k / 2` and the
//! comparisons below would all be null, so the skewed interval `U[0.2, 1.0]`
//! is used instead.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use proxycrowd::evaluation::{estimate_all_followers_loss, estimate_loss, weight_by_rank, weighted_vs_unweighted};
use proxycrowd::policy::all_followers_policy;
use proxycrowd::rng::seeded;
use proxycrowd::theory::{disagreement_sum_law, sample_distance_differences, CompetencePair};
use proxycrowd::{
    compute_weights, weighted_plurality, AggregationRule, Answer, AnswerVector, Budget, DistanceMetric, Fraction,
    PartialAnswerVector, Policy, SyntheticBinaryPopulation,
};

const TRIALS: usize = 5000;
const SEED: u64 = 1;

fn frac(s: &str) -> Fraction {
    s.parse().unwrap()
}

fn pcs(alpha: &str, beta: &str, budget: u64) -> Policy {
    Policy::pcs(
        frac(alpha),
        frac(beta),
        Budget::CompleteVectors(budget),
        AggregationRule::WeightedPlurality,
        DistanceMetric::Hamming,
    )
}

fn skewed() -> SyntheticBinaryPopulation {
    SyntheticBinaryPopulation::new(0.2, 1.0, 25).unwrap()
}

#[test]
fn proxy_beats_plain_crowdsourcing_on_skewed_population() {
    let pop = skewed();
    let cs = estimate_loss(&pcs("0.2", "1/3", 12).baseline(), &pop, TRIALS, SEED).unwrap();
    let proxy = estimate_loss(&pcs("0.2", "1/3", 12), &pop, TRIALS, SEED).unwrap();
    let se = proxy.combined_std_error(&cs);
    assert!(cs.mean - proxy.mean > 3.0 * se, "CS {} PCS {} se {se}", cs.mean, proxy.mean);
}

#[test]
fn better_leaders_gain_more_weight() {
    let table = weight_by_rank(&pcs("0.2", "0.375", 16), &skewed(), TRIALS, SEED).unwrap();
    assert_eq!((table.m, table.n), (10, 30));
    let gap = table.rank_gap(1, table.m).unwrap();
    assert!(gap.mean > 3.0 * gap.std_error, "{gap:?}");
    // weights sum to m + n in every trial, so the means do too
    let total: f64 = table.mean_weight.iter().sum();
    assert!((total - 40.0).abs() < 1e-9);
}

#[test]
fn weighting_is_what_helps() {
    let paired = weighted_vs_unweighted(&pcs("0.2", "1/3", 12), &skewed(), TRIALS, SEED).unwrap();
    let d = paired.difference;
    assert!(d.mean < -3.0 * d.std_error, "{d:?}");
}

#[test]
fn all_followers_does_no_better_than_cs() {
    let pop = skewed();
    let af = all_followers_policy(
        frac("0.2"),
        Budget::CompleteVectors(12),
        AggregationRule::WeightedPlurality,
        DistanceMetric::Hamming,
    );
    let est = estimate_all_followers_loss(&af, &pop, TRIALS, SEED).unwrap();
    let cs = estimate_loss(&pcs("0.2", "1/3", 12).baseline(), &pop, TRIALS, SEED).unwrap();
    assert!((est.loss.mean - cs.mean).abs() <= 2.0 * est.loss.combined_std_error(&cs));
}

#[test]
fn flat_population_shows_no_effect() {
    let pop = SyntheticBinaryPopulation::new(0.45, 0.55, 25).unwrap();
    let cs = estimate_loss(&pcs("0.2", "1/3", 12).baseline(), &pop, TRIALS, SEED).unwrap();
    let proxy = estimate_loss(&pcs("0.2", "1/3", 12), &pop, TRIALS, SEED).unwrap();
    assert!((cs.mean - proxy.mean).abs() <= 2.0 * proxy.combined_std_error(&cs));
}

#[test]
fn symmetric_population_has_loss_half_of_k() {
    let pop = SyntheticBinaryPopulation::new(0.1, 0.9, 25).unwrap();
    for policy in [pcs("0.2", "1/3", 12).baseline(), pcs("0.2", "1/3", 12)] {
        let est = estimate_loss(&policy, &pop, TRIALS, SEED).unwrap();
        assert!((est.mean - 12.5).abs() <= 4.0 * est.std_error, "{est:?}");
    }
}

fn flip(v: &AnswerVector) -> AnswerVector {
    AnswerVector::from_labels(v.entries().iter().map(|a| 1 - a.label().unwrap()))
}

#[test]
fn flipping_every_answer_preserves_weights_and_flips_aggregate() {
    let leaders = vec![
        AnswerVector::from_labels([1, 0, 1, 1, 0]),
        AnswerVector::from_labels([0, 0, 1, 0, 1]),
        AnswerVector::from_labels([1, 1, 1, 0, 0]),
    ];
    let followers = vec![
        PartialAnswerVector::from_labels([Some(1), None, Some(0), None, None]),
        PartialAnswerVector::from_labels([None, Some(1), None, Some(1), Some(0)]),
    ];
    let flipped_followers: Vec<PartialAnswerVector> = followers
        .iter()
        .map(|f| {
            PartialAnswerVector::from_labels(
                f.entries().iter().map(|a| a.map(|a: Answer| 1 - a.label().unwrap())),
            )
        })
        .collect();
    let flipped_leaders: Vec<AnswerVector> = leaders.iter().map(flip).collect();
    let w = compute_weights(&leaders, &followers, DistanceMetric::Hamming).unwrap();
    let wf = compute_weights(&flipped_leaders, &flipped_followers, DistanceMetric::Hamming).unwrap();
    assert_eq!(w, wf);
    let a = weighted_plurality(&w, &leaders, &mut seeded(0)).unwrap();
    let b = weighted_plurality(&wf, &flipped_leaders, &mut seeded(0)).unwrap();
    assert_eq!(flip(&a), b);
}

#[test]
fn sampled_distance_differences_fit_the_exact_law() {
    let input = CompetencePair::new(0.85, 0.6, 0.75, 5).unwrap();
    let samples = 100_000;
    let counts = sample_distance_differences(&input, samples, SEED).unwrap();
    let law = disagreement_sum_law(&input).unwrap();
    // pool sparse cells so every expected count is at least 5
    let mut chi2 = 0.0;
    let mut cells = 0;
    let (mut obs, mut exp) = (0.0, 0.0);
    for (c, p) in counts.iter().zip(&law) {
        obs += *c as f64;
        exp += p * samples as f64;
        if exp >= 5.0 {
            chi2 += (obs - exp).powi(2) / exp;
            cells += 1;
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 {
        chi2 += (obs - exp).powi(2) / exp.max(1e-12);
        cells += 1;
    }
    let p_value = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(chi2);
    assert!(p_value > 1e-3, "chi2 {chi2} over {cells} cells, p = {p_value}");
}
