//! Answer domains, complete and partial answer vectors, and the distance
//! restricted to jointly answered questions.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The space a single answer lives in.
///
/// Binary is the two-label categorical domain; there is no separate variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerDomain {
    Categorical { labels: Vec<String> },
    Continuous { upper: f64 },
}

impl AnswerDomain {
    /// Two labels, `"0"` and `"1"`.
    pub fn binary() -> Self {
        AnswerDomain::Categorical {
            labels: vec!["0".to_string(), "1".to_string()],
        }
    }

    pub fn categorical<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::invalid("a categorical domain needs at least 2 labels"));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(Error::invalid("empty label in categorical domain"));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::invalid(format!("duplicate label {label:?}")));
            }
        }
        Ok(AnswerDomain::Categorical { labels })
    }

    /// Interval `[0, upper]`.
    pub fn continuous(upper: f64) -> Result<Self> {
        if !(upper.is_finite() && upper > 0.0) {
            return Err(Error::invalid(format!(
                "continuous upper bound must be finite and positive, got {upper}"
            )));
        }
        Ok(AnswerDomain::Continuous { upper })
    }

    /// Re-checks the invariants of a domain that arrived through
    /// deserialization.
    pub fn validate(&self) -> Result<()> {
        match self {
            AnswerDomain::Categorical { labels } => {
                Self::categorical(labels.iter().cloned()).map(|_| ())
            }
            AnswerDomain::Continuous { upper } => Self::continuous(*upper).map(|_| ()),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, AnswerDomain::Categorical { .. })
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, AnswerDomain::Categorical { labels } if labels.len() == 2)
    }

    pub fn label_count(&self) -> Option<usize> {
        match self {
            AnswerDomain::Categorical { labels } => Some(labels.len()),
            AnswerDomain::Continuous { .. } => None,
        }
    }

    pub fn contains(&self, answer: Answer) -> bool {
        match (self, answer) {
            (AnswerDomain::Categorical { labels }, Answer::Label(l)) => (l as usize) < labels.len(),
            (AnswerDomain::Continuous { upper }, Answer::Value(v)) => {
                v.is_finite() && (0.0..=*upper).contains(&v)
            }
            _ => false,
        }
    }

    /// The metric used with this domain throughout the toolkit.
    pub fn natural_metric(&self) -> DistanceMetric {
        match self {
            AnswerDomain::Categorical { .. } => DistanceMetric::Hamming,
            AnswerDomain::Continuous { .. } => DistanceMetric::L1,
        }
    }

    pub fn check_metric(&self, metric: DistanceMetric) -> Result<()> {
        if metric == self.natural_metric() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{metric} distance is not defined on the {self} domain"
            )))
        }
    }

    /// Parses one cell of a dataset file. Categorical cells must match a
    /// label exactly.
    pub fn parse_answer(&self, cell: &str) -> Result<Answer, String> {
        match self {
            AnswerDomain::Categorical { labels } => labels
                .iter()
                .position(|l| l == cell)
                .map(|i| Answer::Label(i as u32))
                .ok_or_else(|| format!("{cell:?} is not one of the domain labels")),
            AnswerDomain::Continuous { upper } => {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| format!("{cell:?} is not a number"))?;
                if v.is_finite() && (0.0..=*upper).contains(&v) {
                    Ok(Answer::Value(v))
                } else {
                    Err(format!("{v} is outside [0, {upper}]"))
                }
            }
        }
    }

    pub fn format_answer(&self, answer: Answer) -> String {
        match (self, answer) {
            (AnswerDomain::Categorical { labels }, Answer::Label(l)) => labels
                .get(l as usize)
                .cloned()
                .unwrap_or_else(|| l.to_string()),
            (_, Answer::Label(l)) => l.to_string(),
            (_, Answer::Value(v)) => v.to_string(),
        }
    }

    /// Compact textual form used in dataset file metadata, e.g. `binary`,
    /// `categorical:a;b;c` or `continuous:1000`.
    pub fn descriptor(&self) -> String {
        match self {
            AnswerDomain::Categorical { labels } if self.is_binary() && labels[0] == "0" && labels[1] == "1" => {
                "binary".to_string()
            }
            AnswerDomain::Categorical { labels } => format!("categorical:{}", labels.join(";")),
            AnswerDomain::Continuous { upper } => format!("continuous:{upper}"),
        }
    }

    pub fn from_descriptor(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "binary" {
            return Ok(Self::binary());
        }
        if let Some(rest) = text.strip_prefix("categorical:") {
            return Self::categorical(rest.split([';', ',']).map(str::trim));
        }
        if let Some(rest) = text.strip_prefix("continuous:") {
            let upper = rest
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad continuous bound {rest:?}")))?;
            return Self::continuous(upper);
        }
        Err(Error::invalid(format!("unknown domain descriptor {text:?}")))
    }
}

impl fmt::Display for AnswerDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerDomain::Categorical { labels } if labels.len() == 2 => f.write_str("binary"),
            AnswerDomain::Categorical { labels } => write!(f, "categorical({})", labels.len()),
            AnswerDomain::Continuous { upper } => write!(f, "continuous[0, {upper}]"),
        }
    }
}

/// A single answer: a label index for categorical domains, a real value for
/// continuous ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Answer {
    Label(u32),
    Value(f64),
}

impl Answer {
    pub fn label(self) -> Option<u32> {
        match self {
            Answer::Label(l) => Some(l),
            Answer::Value(_) => None,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Answer::Value(v) => Some(v),
            Answer::Label(_) => None,
        }
    }

    fn same_kind(self, other: Answer) -> bool {
        matches!(
            (self, other),
            (Answer::Label(_), Answer::Label(_)) | (Answer::Value(_), Answer::Value(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Hamming,
    L1,
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::Hamming => "hamming",
            DistanceMetric::L1 => "l1",
        })
    }
}

/// Read access shared by complete and partial vectors.
pub trait AnswerSlots {
    fn question_count(&self) -> usize;
    /// `None` marks a missing answer.
    fn slot(&self, question: usize) -> Option<Answer>;
}

/// A worker's answers to every question.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerVector {
    entries: Vec<Answer>,
}

impl AnswerVector {
    /// Builds a vector and checks every entry against `domain`.
    pub fn new(entries: Vec<Answer>, domain: &AnswerDomain) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("answer vector must have at least one question"));
        }
        if let Some((j, a)) = entries.iter().enumerate().find(|(_, a)| !domain.contains(**a)) {
            return Err(Error::invalid(format!(
                "entry {j} ({a:?}) is not in the {domain} domain"
            )));
        }
        Ok(Self { entries })
    }

    /// Label vector without a domain check; labels are indices.
    pub fn from_labels(labels: impl IntoIterator<Item = u32>) -> Self {
        Self {
            entries: labels.into_iter().map(Answer::Label).collect(),
        }
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        Self {
            entries: values.into_iter().map(Answer::Value).collect(),
        }
    }

    pub fn from_answers(entries: Vec<Answer>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Answer] {
        &self.entries
    }

    pub fn get(&self, question: usize) -> Answer {
        self.entries[question]
    }

    pub fn is_in(&self, domain: &AnswerDomain) -> bool {
        self.entries.iter().all(|a| domain.contains(*a))
    }

    /// Keeps only the answers at `questions`, masking every other slot.
    pub fn masked(&self, questions: &[usize]) -> PartialAnswerVector {
        let mut entries = vec![None; self.entries.len()];
        for &j in questions {
            entries[j] = Some(self.entries[j]);
        }
        PartialAnswerVector { entries }
    }

    pub fn to_partial(&self) -> PartialAnswerVector {
        PartialAnswerVector {
            entries: self.entries.iter().copied().map(Some).collect(),
        }
    }
}

impl AnswerSlots for AnswerVector {
    fn question_count(&self) -> usize {
        self.entries.len()
    }

    fn slot(&self, question: usize) -> Option<Answer> {
        Some(self.entries[question])
    }
}

/// A worker's answers with possibly missing slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialAnswerVector {
    entries: Vec<Option<Answer>>,
}

impl PartialAnswerVector {
    pub fn new(entries: Vec<Option<Answer>>, domain: &AnswerDomain) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("answer vector must have at least one question"));
        }
        if let Some((j, a)) = entries
            .iter()
            .enumerate()
            .find_map(|(j, a)| a.filter(|a| !domain.contains(*a)).map(|a| (j, a)))
        {
            return Err(Error::invalid(format!(
                "entry {j} ({a:?}) is not in the {domain} domain"
            )));
        }
        Ok(Self { entries })
    }

    pub fn from_labels(labels: impl IntoIterator<Item = Option<u32>>) -> Self {
        Self {
            entries: labels.into_iter().map(|l| l.map(Answer::Label)).collect(),
        }
    }

    pub fn from_values(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        Self {
            entries: values.into_iter().map(|v| v.map(Answer::Value)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Option<Answer>] {
        &self.entries
    }

    /// Indices of answered questions, ascending.
    pub fn valid_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(j, a)| a.map(|_| j))
            .collect()
    }

    /// Indices of missing questions, ascending.
    pub fn missing_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(j, a)| if a.is_none() { Some(j) } else { None })
            .collect()
    }

    pub fn valid_count(&self) -> usize {
        self.entries.iter().filter(|a| a.is_some()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.entries.iter().all(Option::is_some)
    }

    pub fn to_complete(&self) -> Option<AnswerVector> {
        self.entries
            .iter()
            .copied()
            .collect::<Option<Vec<_>>>()
            .map(|entries| AnswerVector { entries })
    }

    /// Drops the answer at `question`, if any.
    pub fn without(&self, question: usize) -> Self {
        let mut entries = self.entries.clone();
        entries[question] = None;
        Self { entries }
    }
}

impl AnswerSlots for PartialAnswerVector {
    fn question_count(&self) -> usize {
        self.entries.len()
    }

    fn slot(&self, question: usize) -> Option<Answer> {
        self.entries[question]
    }
}

/// The correct answer vector a population is graded against.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth(AnswerVector);

impl GroundTruth {
    pub fn new(truth: AnswerVector) -> Self {
        Self(truth)
    }

    pub fn vector(&self) -> &AnswerVector {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Distance over the questions answered by both `a` and `b`.
///
/// Hamming counts disagreements, L1 sums absolute differences. When the two
/// vectors share no answered question the distance is 0.
pub fn restricted_distance<A, B>(a: &A, b: &B, metric: DistanceMetric) -> Result<f64>
where
    A: AnswerSlots + ?Sized,
    B: AnswerSlots + ?Sized,
{
    let k = a.question_count();
    if k != b.question_count() {
        return Err(Error::invalid(format!(
            "length mismatch: {k} vs {} questions",
            b.question_count()
        )));
    }
    let mut total = 0.0;
    for j in 0..k {
        let (Some(x), Some(y)) = (a.slot(j), b.slot(j)) else {
            continue;
        };
        total += match (metric, x, y) {
            (DistanceMetric::Hamming, Answer::Label(p), Answer::Label(q)) => {
                if p == q {
                    0.0
                } else {
                    1.0
                }
            }
            (DistanceMetric::L1, Answer::Value(p), Answer::Value(q)) => (p - q).abs(),
            _ if !x.same_kind(y) => {
                return Err(Error::invalid(format!(
                    "domain mismatch at question {j}: {x:?} vs {y:?}"
                )))
            }
            _ => {
                return Err(Error::invalid(format!(
                    "{metric} distance does not apply to {x:?}"
                )))
            }
        };
    }
    Ok(total)
}

/// Distance from one worker's complete vector to the ground truth.
pub fn individual_error(
    worker: &AnswerVector,
    truth: &GroundTruth,
    metric: DistanceMetric,
) -> Result<f64> {
    restricted_distance(worker, truth.vector(), metric)
}
