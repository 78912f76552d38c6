//! How often a follower is misled toward the weaker of two binary leaders.
//!
//! A follower with competence `p_z` answers `q` questions; leaders High and
//! Low have competence `p_h > p_l`. Per question, `B = 1` when High disagrees
//! with the follower and Low agrees, `B = -1` in the opposite case and `0`
//! otherwise, so `d(High, Z) - d(Low, Z)` is distributed as the sum of `q`
//! independent copies of `B`. The follower is misdirected when that sum is
//! `>= 0` (ties count against High). Hoeffding's inequality bounds this by
//! `exp(-q (p_h - p_l)^2 (2 p_z - 1)^2 / 2)`.
//!
//! The exact probability comes from a dynamic program over the law of the
//! sum, in `f64` or exact rationals; a Monte Carlo estimator samples the
//! three answer vectors directly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::substream;

/// Largest follower question count the exact oracle accepts.
pub const MAX_EXACT_QUESTIONS: u32 = 20;

const MC_CHUNK: usize = 4096;

/// Competences of High, Low and the follower, with the follower's question
/// count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompetencePair {
    pub p_high: f64,
    pub p_low: f64,
    pub p_follower: f64,
    pub follower_questions: u32,
}

impl CompetencePair {
    /// Requires `p_high > p_low > 0.5` and `p_follower > 0.5`.
    pub fn new(p_high: f64, p_low: f64, p_follower: f64, follower_questions: u32) -> Result<Self> {
        let pair = Self::relaxed(p_high, p_low, p_follower, follower_questions)?;
        if !(p_high > p_low && p_low > 0.5 && p_follower > 0.5) {
            return Err(Error::invalid(format!(
                "competences must satisfy p_high > p_low > 0.5 and p_follower > 0.5, \
                 got ({p_high}, {p_low}, {p_follower})"
            )));
        }
        Ok(pair)
    }

    /// Also admits the boundary cases `p_high = p_low` and
    /// `0.5 <= p_follower`, where the bound saturates at 1.
    pub fn relaxed(p_high: f64, p_low: f64, p_follower: f64, follower_questions: u32) -> Result<Self> {
        for (name, p) in [("p_high", p_high), ("p_low", p_low), ("p_follower", p_follower)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} is not a probability")));
            }
        }
        if p_high < p_low {
            return Err(Error::invalid(format!(
                "p_high = {p_high} is below p_low = {p_low}"
            )));
        }
        if p_follower < 0.5 {
            return Err(Error::invalid(format!("p_follower = {p_follower} is below 0.5")));
        }
        if follower_questions == 0 {
            return Err(Error::invalid("the follower must answer at least one question"));
        }
        Ok(Self {
            p_high,
            p_low,
            p_follower,
            follower_questions,
        })
    }

    /// Exponent of the bound, `q (p_h - p_l)^2 (2 p_z - 1)^2 / 2`.
    pub fn bound_exponent(&self) -> f64 {
        let gap = self.p_high - self.p_low;
        let lean = 2.0 * self.p_follower - 1.0;
        self.follower_questions as f64 * gap * gap * lean * lean / 2.0
    }
}

/// Inputs of the misdirection bound.
pub type BoundInput = CompetencePair;

pub fn lemma1_bound(input: &BoundInput) -> f64 {
    (-input.bound_exponent()).exp()
}

/// Law of `B` on `{-1, 0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisagreementVariable {
    pub p_minus: f64,
    pub p_zero: f64,
    pub p_plus: f64,
}

impl DisagreementVariable {
    pub fn expectation(&self) -> f64 {
        self.p_plus - self.p_minus
    }
}

pub fn b_distribution(p_high: f64, p_low: f64, p_follower: f64) -> Result<DisagreementVariable> {
    for p in [p_high, p_low, p_follower] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("{p} is not a probability")));
        }
    }
    let (h, l, z) = (p_high, p_low, p_follower);
    let p_plus = z * (1.0 - h) * l + (1.0 - z) * h * (1.0 - l);
    let p_minus = z * h * (1.0 - l) + (1.0 - z) * (1.0 - h) * l;
    Ok(DisagreementVariable {
        p_minus,
        p_zero: 1.0 - p_plus - p_minus,
        p_plus,
    })
}

fn check_exact_size(input: &CompetencePair) -> Result<usize> {
    if input.follower_questions > MAX_EXACT_QUESTIONS {
        return Err(Error::UnsupportedSize(format!(
            "exact misdirection probability supports at most {MAX_EXACT_QUESTIONS} questions, got {}",
            input.follower_questions
        )));
    }
    Ok(input.follower_questions as usize)
}

/// `P(sum = s)` for `s = -q..=q`, index `s + q`.
pub fn disagreement_sum_law(input: &CompetencePair) -> Result<Vec<f64>> {
    let q = check_exact_size(input)?;
    let b = b_distribution(input.p_high, input.p_low, input.p_follower)?;
    Ok(convolve_steps(q, [b.p_minus, b.p_zero, b.p_plus], 0.0, 1.0))
}

fn convolve_steps<T>(q: usize, step: [T; 3], zero: T, one: T) -> Vec<T>
where
    T: Clone + std::ops::Add<Output = T>,
    for<'a> &'a T: std::ops::Mul<&'a T, Output = T>,
{
    let width = 2 * q + 1;
    let mut law = vec![zero.clone(); width];
    law[q] = one;
    for _ in 0..q {
        let mut next = vec![zero.clone(); width];
        for (s, p) in law.iter().enumerate() {
            if s > 0 {
                next[s - 1] = next[s - 1].clone() + p * &step[0];
            }
            next[s] = next[s].clone() + p * &step[1];
            if s + 1 < width {
                next[s + 1] = next[s + 1].clone() + p * &step[2];
            }
        }
        law = next;
    }
    law
}

/// `P(sum >= 0)` by dynamic programming in `f64`.
pub fn misdirection_probability_exact(input: &CompetencePair) -> Result<f64> {
    let q = check_exact_size(input)?;
    let law = disagreement_sum_law(input)?;
    Ok(law[q..].iter().sum())
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite probability")
}

/// `P(sum >= 0)` in exact rational arithmetic on the binary values of the
/// inputs.
pub fn misdirection_probability_rational(input: &CompetencePair) -> Result<BigRational> {
    let q = check_exact_size(input)?;
    let (h, l, z) = (rational(input.p_high), rational(input.p_low), rational(input.p_follower));
    let one = BigRational::one();
    let p_plus = &z * (&one - &h) * &l + (&one - &z) * &h * (&one - &l);
    let p_minus = &z * &h * (&one - &l) + (&one - &z) * (&one - &h) * &l;
    let p_zero = &one - &p_plus - &p_minus;
    let law = convolve_steps(q, [p_minus, p_zero, p_plus], BigRational::zero(), one);
    Ok(law[q..].iter().fold(BigRational::zero(), |acc, p| acc + p))
}

/// Exact rational bound exponent, rounded up to a multiple of `2^-64`.
fn exponent_upper(input: &CompetencePair) -> BigRational {
    let gap = rational(input.p_high) - rational(input.p_low);
    let lean = BigRational::from_integer(BigInt::from(2)) * rational(input.p_follower) - BigRational::one();
    let x = BigRational::from_integer(BigInt::from(input.follower_questions)) * &gap * &gap * &lean * &lean
        / BigRational::from_integer(BigInt::from(2));
    let scale = BigRational::from_integer(BigInt::one() << 64);
    (x * &scale).ceil() / scale
}

/// A rational number no greater than the bound. Taylor partial sums of
/// `exp(-x)` that end on an odd (negative) term undershoot for `x >= 0`.
pub fn lemma1_bound_lower(input: &CompetencePair) -> BigRational {
    let x = exponent_upper(input);
    let x_f = x.to_f64().unwrap_or(f64::INFINITY);
    let mut terms = 25 + (4.0 * x_f).ceil() as usize;
    if terms % 2 == 0 {
        terms += 1;
    }
    let mut sum = BigRational::one();
    let mut term = BigRational::one();
    for i in 1..=terms {
        term = -term * &x / BigRational::from_integer(BigInt::from(i));
        sum += &term;
    }
    debug_assert!(term.is_negative() || term.is_zero());
    sum
}

/// Certifies `exact <= bound` with both sides rational.
pub fn bound_dominates(input: &CompetencePair) -> Result<bool> {
    Ok(misdirection_probability_rational(input)? <= lemma1_bound_lower(input))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Counts of `d(High, Z) - d(Low, Z)` over `samples` fresh draws, index
/// `diff + q`. Sampling runs in fixed-size chunks, chunk `c` on substream
/// `c` of `seed`.
pub fn sample_distance_differences(input: &CompetencePair, samples: usize, seed: u64) -> Result<Vec<u64>> {
    if samples == 0 {
        return Err(Error::invalid("at least one sample is required"));
    }
    let q = input.follower_questions as usize;
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64);
            let mut counts = vec![0u64; 2 * q + 1];
            let len = MC_CHUNK.min(samples - c * MC_CHUNK);
            for _ in 0..len {
                let mut diff: i64 = 0;
                for _ in 0..q {
                    // truth is 1 on every question
                    let z = rng.gen::<f64>() < input.p_follower;
                    let h = rng.gen::<f64>() < input.p_high;
                    let l = rng.gen::<f64>() < input.p_low;
                    diff += i64::from(h != z) - i64::from(l != z);
                }
                counts[(diff + q as i64) as usize] += 1;
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; 2 * q + 1];
    for counts in partial {
        for (t, c) in total.iter_mut().zip(counts) {
            *t += c;
        }
    }
    Ok(total)
}

pub fn misdirection_probability_mc(input: &CompetencePair, samples: usize, seed: u64) -> Result<McEstimate> {
    let q = input.follower_questions as usize;
    let counts = sample_distance_differences(input, samples, seed)?;
    let hits: u64 = counts[q..].iter().sum();
    let p = hits as f64 / samples as f64;
    Ok(McEstimate {
        probability: p,
        std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    })
}

/// One grid point of a bound check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheckRow {
    pub input: CompetencePair,
    pub bound: f64,
    pub exact: f64,
    pub dominates: bool,
    pub mc: Option<McEstimate>,
}

/// Checks every valid `(p_high, p_low, p_follower, q)` combination in the
/// grid, skipping orderings that violate `p_high > p_low > 0.5 < p_follower`.
/// With `mc_samples > 0` each point also gets a Monte Carlo estimate on its
/// own seed offset.
pub fn bound_check_grid(
    p_highs: &[f64],
    p_lows: &[f64],
    p_followers: &[f64],
    question_counts: &[u32],
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<BoundCheckRow>> {
    let mut rows = Vec::new();
    for &h in p_highs {
        for &l in p_lows {
            for &z in p_followers {
                for &q in question_counts {
                    let Ok(input) = CompetencePair::new(h, l, z, q) else {
                        continue;
                    };
                    let mc = if mc_samples > 0 {
                        let point_seed = seed.wrapping_add(rows.len() as u64);
                        Some(misdirection_probability_mc(&input, mc_samples, point_seed)?)
                    } else {
                        None
                    };
                    rows.push(BoundCheckRow {
                        bound: lemma1_bound(&input),
                        exact: misdirection_probability_exact(&input)?,
                        dominates: bound_dominates(&input)?,
                        mc,
                        input,
                    });
                }
            }
        }
    }
    Ok(rows)
}
