//! Evaluation pipelines: F1 on held-out data, explanation accuracy against a
//! seed string, LP timing on random knowledge bases, and knowledge injection.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{balance, split, DataError, Dataset, SeedSpec};
use crate::direct::MaxArity;
use crate::explain::{explain_classified, explanation_accuracy, ExplainError};
use crate::inference::{check_consistency, InferenceError};
use crate::kb::{Atom, Clause, KbError, KnowledgeBase, Literal, WeightedClause};
use crate::model::{Method, Model, ModelError};
use crate::query::Domains;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("test split is empty")]
    EmptyTestSet,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub n_test: usize,
    pub confusion: Confusion,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Binary F1 with `true` as the positive class; 0/0 counts as 0.
pub fn f1_score(predictions: &[bool], labels: &[bool]) -> Result<EvalReport, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut c = Confusion::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(EvalReport {
        f1,
        precision,
        recall,
        n_test: labels.len(),
        confusion: c,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub rng_seed: u64,
    pub method: Method,
    pub max_arity: MaxArity,
    pub train_fraction: f64,
    /// Clauses merged into the trained knowledge base.
    pub knowledge: Vec<WeightedClause>,
}

impl ExperimentConfig {
    pub fn new(method: Method, rng_seed: u64) -> Self {
        ExperimentConfig {
            rng_seed,
            method,
            max_arity: MaxArity::Unbounded,
            train_fraction: 0.7,
            knowledge: Vec::new(),
        }
    }
}

/// A trained model with its held-out data.
pub struct Prepared {
    pub model: Model,
    pub test: Dataset,
    pub domains: Domains,
}

/// Balances, splits, trains and merges the configured knowledge. The split
/// uses `rng_seed + 1` so it does not replay the balancing stream.
pub fn prepare(ds: &Dataset, config: &ExperimentConfig) -> Result<Prepared, EvalError> {
    let balanced = balance(ds, config.rng_seed)?;
    let (train, test) = split(&balanced, config.train_fraction, config.rng_seed.wrapping_add(1))?;
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if train.is_empty() {
        return Err(EvalError::Config("training split is empty".into()));
    }
    let model = Model::train(&train, config.method, config.max_arity)?.with_knowledge(&config.knowledge)?;
    Ok(Prepared {
        model,
        test,
        domains: balanced.domains(),
    })
}

/// Labels for every test instance, in test order.
pub fn predict(prepared: &Prepared) -> Result<Vec<bool>, EvalError> {
    let test = &prepared.test;
    let labels = test
        .instances()
        .par_iter()
        .map(|inst| Ok(prepared.model.classify(&test.query_of(inst), &prepared.domains)?.label))
        .collect::<Result<Vec<bool>, ModelError>>()?;
    Ok(labels)
}

pub fn run_eval(ds: &Dataset, config: &ExperimentConfig) -> Result<EvalReport, EvalError> {
    let prepared = prepare(ds, config)?;
    let predictions = predict(&prepared)?;
    let labels: Vec<bool> = prepared.test.instances().iter().map(|i| i.label).collect();
    f1_score(&predictions, &labels)
}

/// `runs` evaluations with seeds `rng_seed, rng_seed + 1, ...`.
pub fn run_eval_runs(ds: &Dataset, config: &ExperimentConfig, runs: usize) -> Result<Vec<EvalReport>, EvalError> {
    (0..runs as u64)
        .map(|i| {
            let mut c = config.clone();
            c.rng_seed = config.rng_seed.wrapping_add(i);
            run_eval(ds, &c)
        })
        .collect()
}

pub fn mean_f1(reports: &[EvalReport]) -> f64 {
    reports.iter().map(|r| r.f1).sum::<f64>() / reports.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplanationEval {
    pub mean_accuracy: f64,
    /// Test instances classified positive, each of which was explained.
    pub n_explained: usize,
}

/// Explains every test instance classified positive and averages the
/// explanations' agreement with the seed.
pub fn run_explanation_eval(ds: &Dataset, spec: &SeedSpec, config: &ExperimentConfig, k: usize) -> Result<ExplanationEval, EvalError> {
    Ok(run_explanation_eval_ks(ds, spec, config, &[k])?[0])
}

/// [`run_explanation_eval`] for several `k` at once; each test instance is
/// classified only once.
pub fn run_explanation_eval_ks(
    ds: &Dataset,
    spec: &SeedSpec,
    config: &ExperimentConfig,
    ks: &[usize],
) -> Result<Vec<ExplanationEval>, EvalError> {
    let prepared = prepare(ds, config)?;
    let test = &prepared.test;
    let per_instance = test
        .instances()
        .par_iter()
        .map(|inst| -> Result<Option<Vec<f64>>, EvalError> {
            let query = test.query_of(inst);
            let full = prepared.model.classify(&query, &prepared.domains)?;
            if !full.label {
                return Ok(None);
            }
            let accuracies = ks
                .iter()
                .map(|&k| {
                    let report = explain_classified(&prepared.model, &query, k, &prepared.domains, full)?;
                    Ok(explanation_accuracy(&report.explanation, spec)?)
                })
                .collect::<Result<Vec<f64>, EvalError>>()?;
            Ok(Some(accuracies))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let explained: Vec<Vec<f64>> = per_instance.into_iter().flatten().collect();
    let n = explained.len();
    Ok((0..ks.len())
        .map(|j| ExplanationEval {
            mean_accuracy: if n == 0 {
                0.0
            } else {
                explained.iter().map(|a| a[j]).sum::<f64>() / n as f64
            },
            n_explained: n,
        })
        .collect())
}

/// Longest clause drawn by [`random_kb`].
pub const MAX_RANDOM_CLAUSE_LEN: usize = 10;

/// `n_clauses` clauses over propositions `p0..p<n_atoms-1>`: lengths uniform
/// in `1..=10` (capped at `n_atoms`), distinct atoms with random signs,
/// probabilities uniform in `[0, 1]`. Duplicate clauses are redrawn.
pub fn random_kb(n_atoms: usize, n_clauses: usize, rng_seed: u64) -> Result<KnowledgeBase, EvalError> {
    if n_atoms == 0 || n_clauses == 0 {
        return Err(EvalError::Config("sizes must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let atoms: Vec<Atom> = (0..n_atoms)
        .map(|i| Atom::proposition(format!("p{i}")))
        .collect::<Result<_, _>>()?;
    let mut kb = KnowledgeBase::new();
    let mut attempts = 0usize;
    while kb.len() < n_clauses {
        attempts += 1;
        if attempts > 100 * n_clauses + 1000 {
            return Err(EvalError::Config(format!("cannot draw {n_clauses} distinct clauses over {n_atoms} atoms")));
        }
        let len = rng.random_range(1..=MAX_RANDOM_CLAUSE_LEN.min(n_atoms));
        let literals = sample(&mut rng, n_atoms, len).into_iter().map(|i| Literal {
            atom: atoms[i].clone(),
            negated: rng.random_bool(0.5),
        });
        let clause = Clause::new(literals.collect::<Vec<_>>())?;
        if kb.contains(&clause) {
            continue;
        }
        kb.insert(WeightedClause::new(rng.random_range(0.0..=1.0), clause)?)?;
    }
    Ok(kb)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchResult {
    pub n_vars: usize,
    pub n_clauses: usize,
    pub seconds: f64,
    pub objective: f64,
}

impl BenchResult {
    pub const CSV_HEADER: &'static str = "n_vars,n_clauses,seconds,objective";

    pub fn csv_row(&self) -> String {
        format!("{},{},{:.6},{:.9}", self.n_vars, self.n_clauses, self.seconds, self.objective)
    }
}

/// Times the deviation-minimizing solve on a [`random_kb`]. Generation is
/// not timed.
pub fn bench_lp(n_vars: usize, n_clauses: usize, rng_seed: u64) -> Result<BenchResult, EvalError> {
    let kb = random_kb(n_vars, n_clauses, rng_seed)?;
    let start = Instant::now();
    let c = check_consistency(&kb)?;
    Ok(BenchResult {
        n_vars,
        n_clauses,
        seconds: start.elapsed().as_secs_f64(),
        objective: c.objective_min,
    })
}

/// Rules built from the seed: a random set of positions (size uniform in
/// `1..=length`) with the seed's symbols as body, weighted by the fraction
/// of positive rows of `ds` matching the body. Bodies no row of `ds`
/// matches are redrawn; all clauses are distinct.
pub fn true_clauses(ds: &Dataset, spec: &SeedSpec, n: usize, rng: &mut impl Rng) -> Result<Vec<WeightedClause>, EvalError> {
    let len = spec.length();
    let positions: Vec<usize> = (1..=len)
        .map(|i| {
            ds.feature_index(&format!("a{i}"))
                .ok_or_else(|| EvalError::Config(format!("dataset has no feature a{i}")))
        })
        .collect::<Result<_, _>>()?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 1000 * n + 1000 {
            return Err(EvalError::Config(format!("cannot draw {n} distinct observed seed rules")));
        }
        let size = rng.random_range(1..=len);
        let mut body = sample(rng, len, size).into_vec();
        body.sort_unstable();
        if seen.contains(&body) {
            continue;
        }
        let (mut total, mut positive) = (0usize, 0usize);
        for inst in ds.instances() {
            if body
                .iter()
                .all(|&p| inst.values[positions[p]] == spec.symbol(p).to_string())
            {
                total += 1;
                positive += inst.label as usize;
            }
        }
        if total == 0 {
            continue;
        }
        let clause = Clause::rule(body.iter().map(|&p| (format!("a{}", p + 1), spec.symbol(p).to_string())))?;
        out.push(WeightedClause::new(positive as f64 / total as f64, clause)?);
        seen.insert(body);
    }
    Ok(out)
}

/// Rules with a body of random length in `1..=10` (capped at the feature
/// count) over distinct random features with random observed values, and a
/// probability uniform in `[0, 1]`. All clauses are distinct.
pub fn random_clauses(ds: &Dataset, n: usize, rng: &mut impl Rng) -> Result<Vec<WeightedClause>, EvalError> {
    let n_features = ds.features().len();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 1000 * n + 1000 {
            return Err(EvalError::Config(format!("cannot draw {n} distinct random rules")));
        }
        let len = rng.random_range(1..=MAX_RANDOM_CLAUSE_LEN.min(n_features));
        let body: Vec<(String, String)> = sample(rng, n_features, len)
            .into_iter()
            .map(|f| {
                let domain: Vec<&String> = ds.domain(f).iter().collect();
                (ds.features()[f].clone(), domain[rng.random_range(0..domain.len())].clone())
            })
            .collect();
        let clause = Clause::rule(body)?;
        if !seen.insert(clause.clone()) {
            continue;
        }
        out.push(WeightedClause::new(rng.random_range(0.0..=1.0), clause)?);
    }
    Ok(out)
}

/// [`run_eval`] with `n_true` seed rules and `n_random` random rules merged
/// into the trained knowledge base. Clauses are drawn with `rng_seed`; the
/// seed rules come first, so random rules never override them.
pub fn run_knowledge_experiment(
    ds: &Dataset,
    spec: &SeedSpec,
    config: &ExperimentConfig,
    n_true: usize,
    n_random: usize,
    rng_seed: u64,
) -> Result<EvalReport, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut knowledge = config.knowledge.clone();
    let truths = true_clauses(ds, spec, n_true, &mut rng)?;
    let taken: HashSet<Clause> = truths.iter().map(|wc| wc.clause.clone()).collect();
    knowledge.extend(truths);
    knowledge.extend(
        random_clauses(ds, n_random, &mut rng)?
            .into_iter()
            .filter(|wc| !taken.contains(&wc.clause)),
    );
    let config = ExperimentConfig {
        knowledge,
        ..config.clone()
    };
    run_eval(ds, &config)
}
