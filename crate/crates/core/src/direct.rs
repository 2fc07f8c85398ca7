//! Knowledge bases counted directly from data.
//!
//! Every non-empty subset of an instance's feature-value pairs is a rule
//! body; its probability is the fraction of positive instances among those
//! containing the body.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{Dataset, Instance};
use crate::kb::{Clause, KbError, KnowledgeBase, WeightedClause};
use crate::query::Query;

/// Above this many features an explicit arity cap is required.
pub const MAX_UNBOUNDED_FEATURES: usize = 20;

/// Rows per rayon task when counting.
const CHUNK_ROWS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DirectError {
    #[error("cannot count an empty dataset")]
    EmptyDataset,
    #[error("max arity must be at least 1")]
    ZeroArity,
    #[error("{0} features need an explicit max arity (unbounded is limited to {MAX_UNBOUNDED_FEATURES})")]
    TooManyFeatures(usize),
    #[error("counters were built over different feature-value tables")]
    SchemaMismatch,
    #[error(transparent)]
    Kb(#[from] KbError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaxArity {
    #[default]
    Unbounded,
    Limited(usize),
}

impl MaxArity {
    fn resolve(self, n_features: usize) -> Result<usize, DirectError> {
        match self {
            MaxArity::Limited(0) => Err(DirectError::ZeroArity),
            MaxArity::Limited(k) => Ok(k.min(n_features)),
            MaxArity::Unbounded if n_features > MAX_UNBOUNDED_FEATURES => {
                Err(DirectError::TooManyFeatures(n_features))
            }
            MaxArity::Unbounded => Ok(n_features),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub n_total: u64,
    pub n_positive: u64,
}

impl Counts {
    pub fn ratio(&self) -> f64 {
        self.n_positive as f64 / self.n_total as f64
    }

    fn add(&mut self, other: Counts) {
        self.n_total += other.n_total;
        self.n_positive += other.n_positive;
    }
}

/// Label counts for every observed feature-value subset.
///
/// Pairs are interned to codes assigned in `(feature, value)` order, so a
/// sorted code sequence is a body in canonical literal order.
#[derive(Debug, Clone)]
pub struct SubsetCounter {
    pairs: Vec<(String, String)>,
    codes: HashMap<(String, String), u32>,
    arity: usize,
    counts: HashMap<Box<[u32]>, Counts>,
}

impl PartialEq for SubsetCounter {
    fn eq(&self, other: &Self) -> bool {
        self.pairs == other.pairs && self.arity == other.arity && self.counts == other.counts
    }
}

impl SubsetCounter {
    /// An empty counter over the feature-value pairs observed in `ds`.
    pub fn empty(ds: &Dataset, max_arity: MaxArity) -> Result<Self, DirectError> {
        let arity = max_arity.resolve(ds.features().len())?;
        let mut pairs: Vec<(String, String)> = ds
            .features()
            .iter()
            .enumerate()
            .flat_map(|(i, f)| ds.domain(i).iter().map(move |v| (f.clone(), v.clone())))
            .collect();
        pairs.sort();
        let codes = pairs.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();
        Ok(SubsetCounter {
            pairs,
            codes,
            arity,
            counts: HashMap::new(),
        })
    }

    /// Counts all rows of `ds`, in parallel.
    pub fn build(ds: &Dataset, max_arity: MaxArity) -> Result<Self, DirectError> {
        if ds.is_empty() {
            return Err(DirectError::EmptyDataset);
        }
        let empty = SubsetCounter::empty(ds, max_arity)?;
        let rows: Vec<usize> = (0..ds.len()).collect();
        let merged = rows
            .par_chunks(CHUNK_ROWS)
            .map(|chunk| {
                let mut c = empty.clone();
                c.count(ds, chunk);
                c
            })
            .reduce(
                || empty.clone(),
                |mut a, b| {
                    a.merge_counts(b.counts);
                    a
                },
            );
        Ok(merged)
    }

    /// Adds the given rows of `ds`, which must be the dataset (or share the
    /// feature-value table of the dataset) the counter was created from.
    pub fn count(&mut self, ds: &Dataset, rows: &[usize]) {
        let mut key = Vec::with_capacity(self.arity);
        for &r in rows {
            let inst = &ds.instances()[r];
            let codes = self.encode(ds, inst);
            let delta = Counts {
                n_total: 1,
                n_positive: inst.label as u64,
            };
            let counts = &mut self.counts;
            for_each_subset(&codes, self.arity, &mut key, &mut |k| match counts.get_mut(k) {
                Some(c) => c.add(delta),
                None => {
                    counts.insert(k.into(), delta);
                }
            });
        }
    }

    fn encode(&self, ds: &Dataset, inst: &Instance) -> Vec<u32> {
        let mut codes: Vec<u32> = ds
            .features()
            .iter()
            .zip(&inst.values)
            .map(|(f, v)| self.codes[&(f.clone(), v.clone())])
            .collect();
        codes.sort_unstable();
        codes
    }

    /// Adds another counter's counts. Associative and commutative.
    pub fn merge(&mut self, other: SubsetCounter) -> Result<(), DirectError> {
        if self.pairs != other.pairs || self.arity != other.arity {
            return Err(DirectError::SchemaMismatch);
        }
        self.merge_counts(other.counts);
        Ok(())
    }

    fn merge_counts(&mut self, other: HashMap<Box<[u32]>, Counts>) {
        if self.counts.len() < other.len() {
            let mine = std::mem::replace(&mut self.counts, other);
            for (k, c) in mine {
                self.counts.entry(k).or_default().add(c);
            }
        } else {
            for (k, c) in other {
                self.counts.entry(k).or_default().add(c);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Counts for a body given as feature-value pairs, in any order.
    pub fn get<'a>(&self, body: impl IntoIterator<Item = (&'a str, &'a str)>) -> Option<Counts> {
        let mut key = Vec::new();
        for (f, v) in body {
            key.push(*self.codes.get(&(f.to_string(), v.to_string()))?);
        }
        key.sort_unstable();
        self.counts.get(key.as_slice()).copied()
    }

    fn clause(&self, key: &[u32], counts: Counts) -> Result<WeightedClause, KbError> {
        let body = key.iter().map(|&c| {
            let (f, v) = &self.pairs[c as usize];
            (f.as_str(), v.as_str())
        });
        WeightedClause::new(counts.ratio(), Clause::rule(body)?)
    }

    /// All counted bodies as rules, in sorted key order.
    pub fn to_kb(&self) -> Result<KnowledgeBase, DirectError> {
        let mut keys: Vec<(&Box<[u32]>, &Counts)> = self.counts.iter().collect();
        keys.sort_unstable_by(|a, b| a.0.cmp(b.0));
        let clauses = keys
            .into_iter()
            .map(|(k, c)| self.clause(k, *c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(KnowledgeBase::from_clauses(clauses)?)
    }

    /// The rules whose body is a non-empty subset of the query, in the same
    /// order as [`SubsetCounter::to_kb`]. Looks up each subset of the query
    /// instead of scanning all counts.
    pub fn relevant_kb(&self, query: &Query) -> Result<KnowledgeBase, DirectError> {
        let mut codes: Vec<u32> = query
            .pairs()
            .filter_map(|(f, v)| self.codes.get(&(f.to_string(), v.to_string())).copied())
            .collect();
        codes.sort_unstable();
        let mut found: Vec<(Box<[u32]>, Counts)> = Vec::new();
        let mut key = Vec::with_capacity(self.arity);
        for_each_subset(&codes, self.arity, &mut key, &mut |k| {
            if let Some(c) = self.counts.get(k) {
                found.push((k.into(), *c));
            }
        });
        found.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let clauses = found
            .iter()
            .map(|(k, c)| self.clause(k, *c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(KnowledgeBase::from_clauses(clauses)?)
    }
}

/// Calls `f` on every non-empty subset of `codes` with at most `max`
/// elements, each subset in the order of `codes`.
fn for_each_subset(codes: &[u32], max: usize, key: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
    fn go(codes: &[u32], start: usize, max: usize, key: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
        for i in start..codes.len() {
            key.push(codes[i]);
            f(key);
            if key.len() < max {
                go(codes, i + 1, max, key, f);
            }
            key.pop();
        }
    }
    key.clear();
    if max > 0 {
        go(codes, 0, max, key, f);
    }
}

pub fn build_direct_kb(train: &Dataset, max_arity: MaxArity) -> Result<KnowledgeBase, DirectError> {
    SubsetCounter::build(train, max_arity)?.to_kb()
}

/// The rules of `kb` whose body is a non-empty subset of the query's pairs.
/// Clauses of any other shape are never relevant. Keeps the order of `kb`.
pub fn relevant_kb(query: &Query, kb: &KnowledgeBase) -> KnowledgeBase {
    let clauses = kb.iter().filter(|wc| {
        wc.clause
            .rule_body()
            .is_some_and(|body| !body.is_empty() && body.iter().all(|(f, v)| query.get(f) == Some(v)))
    });
    KnowledgeBase::from_clauses(clauses.cloned()).expect("clauses come from a valid knowledge base")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::parse_kb;
    use crate::tree::clause_from_path;
    use std::collections::BTreeSet;

    fn example_strings() -> Dataset {
        Dataset::from_strings(&[
            ("0000", true),
            ("1111", true),
            ("1010", true),
            ("1100", true),
            ("0010", false),
            ("0100", false),
            ("1110", false),
            ("1000", false),
        ])
        .unwrap()
    }

    fn q(s: &str) -> Query {
        s.parse().unwrap()
    }

    /// The literal scan: every non-empty subset of the query against every
    /// clause, keeping clauses whose body is exactly that subset.
    fn nested_loop_relevant(query: &Query, kb: &KnowledgeBase) -> KnowledgeBase {
        let pairs: Vec<(&str, &str)> = query.pairs().collect();
        let mut out = KnowledgeBase::new();
        for mask in 1u32..(1 << pairs.len()) {
            let key: BTreeSet<(&str, &str)> = (0..pairs.len()).filter(|i| mask >> i & 1 == 1).map(|i| pairs[i]).collect();
            for wc in kb {
                if let Some(body) = wc.clause.rule_body() {
                    if body.into_iter().collect::<BTreeSet<_>>() == key {
                        out.insert(wc.clone()).unwrap();
                    }
                }
            }
        }
        out
    }

    #[test]
    fn relevant_for_0101() {
        let kb = build_direct_kb(&example_strings(), MaxArity::Unbounded).unwrap();
        let rel = relevant_kb(&q("a1=0,a2=1,a3=0,a4=1"), &kb);
        let expected = parse_kb(
            "0.333333333333333333 pos | !a1=0
             0.5 pos | !a2=1
             0.5 pos | !a3=0
             1.0 pos | !a4=1
             0.0 pos | !a1=0 | !a2=1
             0.5 pos | !a1=0 | !a3=0
             0.5 pos | !a2=1 | !a3=0
             1.0 pos | !a2=1 | !a4=1
             0.0 pos | !a1=0 | !a2=1 | !a3=0",
        )
        .unwrap();
        assert_eq!(rel.len(), 9);
        for wc in &expected {
            assert_eq!(rel.probability_of(&wc.clause), Some(wc.probability), "{}", wc.clause);
        }
    }

    #[test]
    fn counter_lookup_matches_scan() {
        let ds = example_strings();
        let counter = SubsetCounter::build(&ds, MaxArity::Unbounded).unwrap();
        let kb = counter.to_kb().unwrap();
        for bits in 0..16u32 {
            let query = Query::from_pairs((0..4).map(|i| (format!("a{}", i + 1), ((bits >> i) & 1).to_string()))).unwrap();
            let fast = counter.relevant_kb(&query).unwrap();
            let scan = relevant_kb(&query, &kb);
            assert_eq!(fast, scan);
            assert_eq!(fast.clauses(), scan.clauses());
            assert_eq!(scan, nested_loop_relevant(&query, &kb));
        }
        assert!(relevant_kb(&Query::new(), &kb).is_empty());
        assert_eq!(relevant_kb(&q("a4=1"), &kb), parse_kb("1.0 pos | !a4=1").unwrap());
        // partial and unseen values
        assert_eq!(counter.relevant_kb(&q("a1=7,a4=1")).unwrap(), parse_kb("1.0 pos | !a4=1").unwrap());
    }

    #[test]
    fn probabilities_match_recount() {
        let ds = example_strings();
        let kb = build_direct_kb(&ds, MaxArity::Unbounded).unwrap();
        for wc in &kb {
            let body = wc.clause.rule_body().unwrap();
            let rows: Vec<&Instance> = ds
                .instances()
                .iter()
                .filter(|i| body.iter().all(|(f, v)| i.values[ds.feature_index(f).unwrap()] == *v))
                .collect();
            let pos = rows.iter().filter(|i| i.label).count();
            assert_eq!(wc.probability, pos as f64 / rows.len() as f64);
            // no clause repeats a feature, so each is a path of some tree
            assert!(clause_from_path(&body).is_ok());
        }
    }

    #[test]
    fn small_cases() {
        let one = Dataset::new(vec!["a".into()], vec![Instance { values: vec!["x".into()], label: true }]).unwrap();
        assert_eq!(build_direct_kb(&one, MaxArity::Unbounded).unwrap(), parse_kb("1.0 pos | !a=x").unwrap());

        let full = Dataset::from_strings(&[("00", true), ("01", false), ("10", false), ("11", true)]).unwrap();
        assert_eq!(build_direct_kb(&full, MaxArity::Unbounded).unwrap().len(), 8);
        assert_eq!(build_direct_kb(&full, MaxArity::Limited(1)).unwrap().len(), 4);
        assert_eq!(build_direct_kb(&full, MaxArity::Limited(0)), Err(DirectError::ZeroArity));

        let empty = Dataset::new(vec!["a".into()], vec![]).unwrap();
        assert_eq!(build_direct_kb(&empty, MaxArity::Unbounded), Err(DirectError::EmptyDataset));

        let wide = Dataset::from_strings(&[("0".repeat(21), true)]).unwrap();
        assert_eq!(build_direct_kb(&wide, MaxArity::Unbounded), Err(DirectError::TooManyFeatures(21)));
        assert_eq!(build_direct_kb(&wide, MaxArity::Limited(1)).unwrap().len(), 21);
    }

    #[test]
    fn merge_is_partition_independent() {
        let rows: Vec<(String, bool)> = (0..200u32)
            .map(|i| (format!("{}{}{}", i % 3, i * 7 % 4, i * 13 % 5), i % 3 != 1))
            .collect();
        let ds = Dataset::from_strings(&rows).unwrap();
        let whole = SubsetCounter::build(&ds, MaxArity::Unbounded).unwrap();
        for cut in [0usize, 1, 77, 200] {
            let idx: Vec<usize> = (0..200).collect();
            let mut a = SubsetCounter::empty(&ds, MaxArity::Unbounded).unwrap();
            a.count(&ds, &idx[..cut]);
            let mut b = SubsetCounter::empty(&ds, MaxArity::Unbounded).unwrap();
            b.count(&ds, &idx[cut..]);
            let mut ab = a.clone();
            ab.merge(b.clone()).unwrap();
            b.merge(a).unwrap();
            assert_eq!(ab, whole);
            assert_eq!(b, whole);
        }
        let other = SubsetCounter::empty(&example_strings(), MaxArity::Unbounded).unwrap();
        assert_eq!(whole.clone().merge(other), Err(DirectError::SchemaMismatch));
    }
}
