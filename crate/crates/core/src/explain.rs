//! k-feature explanations: the size-k part of a query that pushes the class
//! probability furthest in the direction of the classification.

use std::cmp::Ordering;

use itertools::Itertools;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::SeedSpec;
use crate::inference::InferenceResult;
use crate::kb::KnowledgeBase;
use crate::model::{Model, ModelError};
use crate::query::{Domains, Query};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExplainError {
    #[error("k = {k} is outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("feature {0:?} is not a seed position (expected a1, a2, ...)")]
    NotAPosition(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// The query is positive; the explanation maximizes `π(pos)`.
    Max,
    /// The query is negative; the explanation minimizes `π(pos)`.
    Min,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub sub_query: Query,
    /// `p_avg` of the sub-query.
    pub score: f64,
    pub direction: Direction,
}

/// An explanation with everything computed on the way.
#[derive(Debug, Clone)]
pub struct ExplanationReport {
    pub explanation: Explanation,
    pub full: InferenceResult,
    /// Every size-k sub-query with its `p_avg`, sorted by serialized sub-query.
    pub scores: Vec<(Query, f64)>,
}

pub fn compute_explanation(query: &Query, kb: &KnowledgeBase, k: usize, domains: &Domains) -> Result<Explanation, ExplainError> {
    Ok(explain(&Model::Full(kb.clone()), query, k, domains)?.explanation)
}

/// Scores all `C(n, k)` sub-queries. A positive query is explained by the
/// highest-scoring one, a negative query by the lowest; ties go to the
/// lexicographically smallest serialized sub-query.
pub fn explain(model: &Model, query: &Query, k: usize, domains: &Domains) -> Result<ExplanationReport, ExplainError> {
    check_k(query, k)?;
    let full = model.classify(query, domains)?;
    explain_classified(model, query, k, domains, full)
}

fn check_k(query: &Query, k: usize) -> Result<(), ExplainError> {
    let n = query.len();
    if k == 0 || k > n {
        return Err(ExplainError::KOutOfRange { k, n });
    }
    Ok(())
}

/// [`explain`] for a query whose classification `full` is already known.
pub fn explain_classified(
    model: &Model,
    query: &Query,
    k: usize,
    domains: &Domains,
    full: InferenceResult,
) -> Result<ExplanationReport, ExplainError> {
    check_k(query, k)?;
    let n = query.len();
    let subsets: Vec<Query> = (0..n).combinations(k).map(|idx| query.select(&idx)).collect();
    let mut scores = subsets
        .into_par_iter()
        .map(|sub| {
            let r = model.classify(&sub, domains)?;
            Ok((sub.to_string(), sub, r.p_avg))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    scores.sort_by(|a, b| a.0.cmp(&b.0));

    let direction = if full.label { Direction::Max } else { Direction::Min };
    let better = |a: f64, b: f64| match direction {
        Direction::Max => a.partial_cmp(&b) == Some(Ordering::Greater),
        Direction::Min => a.partial_cmp(&b) == Some(Ordering::Less),
    };
    // sorted by name, so the first strict improvement keeps the tie-break
    let mut best = 0;
    for i in 1..scores.len() {
        if better(scores[i].2, scores[best].2) {
            best = i;
        }
    }
    let explanation = Explanation {
        sub_query: scores[best].1.clone(),
        score: scores[best].2,
        direction,
    };
    Ok(ExplanationReport {
        explanation,
        full,
        scores: scores.into_iter().map(|(_, q, s)| (q, s)).collect(),
    })
}

/// 1-based string position of a feature named `a<i>`.
fn position(feature: &str) -> Option<usize> {
    feature.strip_prefix('a')?.parse::<usize>().ok().filter(|&i| i >= 1)
}

/// Fraction of the explanation's assignments that agree with the seed.
pub fn explanation_accuracy(expl: &Explanation, spec: &SeedSpec) -> Result<f64, ExplainError> {
    let mut correct = 0;
    for (f, v) in expl.sub_query.pairs() {
        let i = position(f)
            .filter(|&i| i <= spec.length())
            .ok_or_else(|| ExplainError::NotAPosition(f.to_string()))?;
        if v.parse::<u8>().ok() == Some(spec.symbol(i - 1)) {
            correct += 1;
        }
    }
    Ok(correct as f64 / expl.sub_query.len() as f64)
}

/// A sub-query over positions `a1..a<length>` written as a string with `-`
/// at unassigned positions, e.g. `323--1-1--`.
pub fn masked_string(query: &Query, length: usize) -> String {
    (1..=length)
        .map(|i| query.get(&format!("a{i}")).unwrap_or("-").to_string())
        .collect()
}

/// Inverse of [`masked_string`] for single-character values.
pub fn query_from_masked(masked: &str) -> Query {
    Query::from_pairs(
        masked
            .chars()
            .enumerate()
            .filter(|&(_, c)| c != '-')
            .map(|(i, c)| (format!("a{}", i + 1), c.to_string())),
    )
    .expect("single characters other than reserved ones are valid names")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::parse_kb;

    fn expl(masked: &str) -> Explanation {
        Explanation {
            sub_query: query_from_masked(masked),
            score: 1.0,
            direction: Direction::Max,
        }
    }

    #[test]
    fn accuracy_against_seed() {
        let spec = SeedSpec::new("3232411132", 4, 5).unwrap();
        assert!((explanation_accuracy(&expl("-2---411-2"), &spec).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(explanation_accuracy(&expl("323--1-1--"), &spec).unwrap(), 1.0);
        assert_eq!(explanation_accuracy(&expl("3-3-4-1---"), &spec).unwrap(), 1.0);
        assert_eq!(explanation_accuracy(&expl("1111------"), &spec).unwrap(), 0.0);
        let bad = Explanation {
            sub_query: "b1=3".parse().unwrap(),
            ..expl("3")
        };
        assert!(explanation_accuracy(&bad, &spec).is_err());
        assert!(explanation_accuracy(&expl("-----------3"), &spec).is_err());
    }

    #[test]
    fn masked_round_trip() {
        let q = query_from_masked("323--1-1--");
        assert_eq!(q.to_string(), "a1=3,a2=2,a3=3,a6=1,a8=1");
        assert_eq!(masked_string(&q, 10), "323--1-1--");
    }

    #[test]
    fn k_range() {
        let kb = parse_kb("1.0 pos | !a1=0").unwrap();
        let q: Query = "a1=0,a2=1".parse().unwrap();
        let d = Domains::new();
        assert!(matches!(compute_explanation(&q, &kb, 0, &d), Err(ExplainError::KOutOfRange { .. })));
        assert!(matches!(compute_explanation(&q, &kb, 3, &d), Err(ExplainError::KOutOfRange { .. })));
    }

    #[test]
    fn full_query_explains_itself() {
        let kb = parse_kb("0.8 pos | !a1=0\n0.3 pos | !a2=1\n").unwrap();
        let q: Query = "a1=0,a2=1".parse().unwrap();
        let d = Domains::new();
        let model = Model::Full(kb.clone());
        let report = explain(&model, &q, 2, &d).unwrap();
        assert_eq!(report.explanation.sub_query, q);
        assert_eq!(report.explanation.score, report.full.p_avg);
    }

    #[test]
    fn picks_extreme_with_tie_break() {
        // a1=0 forces pos to 0.8, a2=1 leaves it in [0.3, 1]
        let kb = parse_kb("0.8 pos | !a1=0\n0.3 pos | !a2=1\n0.7 pos | !a3=0\n").unwrap();
        let q: Query = "a1=0,a2=1,a3=0".parse().unwrap();
        let d = Domains::new();
        let report = explain(&Model::Full(kb), &q, 1, &d).unwrap();
        let scores: Vec<f64> = report.scores.iter().map(|(_, s)| *s).collect();
        let want = match report.explanation.direction {
            Direction::Max => scores.iter().cloned().fold(f64::MIN, f64::max),
            Direction::Min => scores.iter().cloned().fold(f64::MAX, f64::min),
        };
        assert_eq!(report.explanation.score, want);
        let first = report.scores.iter().find(|(_, s)| *s == want).unwrap();
        assert_eq!(first.0, report.explanation.sub_query);
    }
}
