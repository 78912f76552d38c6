//! Proxy crowdsourcing toolkit.
//!
//! Leaders answer every question of a survey; followers answer a random
//! subset. Each follower hands its unit vote to the nearest leader(s) under
//! a distance restricted to jointly answered questions, and the weighted
//! leaders are aggregated with a standard rule (plurality, mean, median).
//! The crate also carries the budget arithmetic for comparing proxy
//! crowdsourcing against plain crowdsourcing at a fixed number of purchased
//! answers, a Monte Carlo evaluation harness, and the follower-misdirection
//! bound with exact and sampled checks.

pub mod aggregation;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod fraction;
pub mod io;
pub mod policy;
pub mod population;
pub mod rng;
pub mod theory;
pub mod weighting;

pub use aggregation::{weighted_mean, weighted_median, weighted_plurality, AggregationRule};
pub use domain::{
    individual_error, restricted_distance, Answer, AnswerDomain, AnswerVector, DistanceMetric,
    GroundTruth, PartialAnswerVector,
};
pub use error::{Error, Result};
pub use fraction::Fraction;
pub use policy::{plan, Budget, Instance, Policy, PolicyPlan};
pub use population::{EmpiricalPopulation, Population, SyntheticBinaryPopulation};
pub use weighting::{compute_weights, nearest_leaders, NearestSet, WeightVector};
