//! Propositional atoms, clauses and probabilistic knowledge bases.
//!
//! A knowledge base is a set of clauses, each paired with a probability.
//! Learned knowledge bases only contain rules of the shape
//! `pos | !f1=v1 | ... | !fk=vk`, but the types accept arbitrary clauses.
//!
//! The text format holds one weighted clause per line:
//!
//! ```text
//! # comment
//! 0.330000 pos | !a1=0
//! 1.000000 pos | !a4=1
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Characters that may not appear in feature names or values.
const RESERVED: &[char] = &['=', '|', '!', ',', '#'];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KbError {
    #[error("invalid name {0:?}: must be non-empty without whitespace or any of = | ! , #")]
    InvalidName(String),
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("clause has no literals")]
    EmptyClause,
    #[error("clause contains both {0} and its negation")]
    ComplementaryLiterals(String),
    #[error("clause `{clause}` given with conflicting probabilities {first} and {second}")]
    ConflictingDuplicate {
        clause: String,
        first: f64,
        second: f64,
    },
    #[error("clause `{0}` does not contain the class atom `pos` positively")]
    MissingClassAtom(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

/// A propositional variable: the class atom `pos`, a feature taking a value,
/// or a bare named proposition (used for hand-written knowledge such as
/// `!a | b`).
///
/// The derived ordering puts the class atom first and then sorts
/// feature-value atoms by `(feature, value)`, which is the canonical
/// literal order inside a clause.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Class,
    FeatureValue { feature: String, value: String },
    Proposition(String),
}

impl Atom {
    pub fn feature_value(feature: impl Into<String>, value: impl Into<String>) -> Result<Self, KbError> {
        let feature = feature.into();
        let value = value.into();
        validate_name(&feature)?;
        validate_name(&value)?;
        Ok(Atom::FeatureValue { feature, value })
    }

    pub fn proposition(name: impl Into<String>) -> Result<Self, KbError> {
        let name = name.into();
        validate_name(&name)?;
        if name == "pos" {
            return Ok(Atom::Class);
        }
        Ok(Atom::Proposition(name))
    }

    pub fn is_class(&self) -> bool {
        matches!(self, Atom::Class)
    }

    /// `(feature, value)` for feature-value atoms.
    pub fn as_pair(&self) -> Option<(&str, &str)> {
        match self {
            Atom::FeatureValue { feature, value } => Some((feature, value)),
            _ => None,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Class => f.write_str("pos"),
            Atom::FeatureValue { feature, value } => write!(f, "{feature}={value}"),
            Atom::Proposition(name) => f.write_str(name),
        }
    }
}

pub(crate) fn validate_name(name: &str) -> Result<(), KbError> {
    if name.is_empty() || name.chars().any(|c| c.is_whitespace() || RESERVED.contains(&c)) {
        return Err(KbError::InvalidName(name.to_string()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub atom: Atom,
    pub negated: bool,
}

impl Literal {
    pub fn positive(atom: Atom) -> Self {
        Literal { atom, negated: false }
    }

    pub fn negative(atom: Atom) -> Self {
        Literal { atom, negated: true }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("!")?;
        }
        write!(f, "{}", self.atom)
    }
}

/// A disjunction of literals, kept in canonical order without duplicates.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Clause {
    literals: Vec<Literal>,
}

impl Clause {
    pub fn new(literals: impl IntoIterator<Item = Literal>) -> Result<Self, KbError> {
        let mut literals: Vec<Literal> = literals.into_iter().collect();
        literals.sort();
        literals.dedup();
        if literals.is_empty() {
            return Err(KbError::EmptyClause);
        }
        // Sorted by atom first, so complementary literals are adjacent.
        if let Some(w) = literals.windows(2).find(|w| w[0].atom == w[1].atom) {
            return Err(KbError::ComplementaryLiterals(w[0].atom.to_string()));
        }
        Ok(Clause { literals })
    }

    /// `pos | !f1=v1 | ... | !fk=vk` for the given feature-value pairs.
    pub fn rule<F, V>(body: impl IntoIterator<Item = (F, V)>) -> Result<Self, KbError>
    where
        F: Into<String>,
        V: Into<String>,
    {
        let mut literals = vec![Literal::positive(Atom::Class)];
        for (f, v) in body {
            literals.push(Literal::negative(Atom::feature_value(f, v)?));
        }
        Clause::new(literals)
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn has_positive_class(&self) -> bool {
        self.literals.first().is_some_and(|l| l.atom.is_class() && !l.negated)
    }

    /// Feature-value pairs that occur negated, in canonical order.
    pub fn negated_pairs(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.literals
            .iter()
            .filter(|l| l.negated)
            .filter_map(|l| l.atom.as_pair())
    }

    /// The body of a rule `pos | !f1=v1 | ...`; `None` for any other shape.
    pub fn rule_body(&self) -> Option<Vec<(&str, &str)>> {
        let (head, body) = self.literals.split_first()?;
        if !head.atom.is_class() || head.negated {
            return None;
        }
        body.iter()
            .map(|l| if l.negated { l.atom.as_pair() } else { None })
            .collect()
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> + '_ {
        self.literals.iter().map(|l| &l.atom)
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, lit) in self.literals.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "{lit}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedClause {
    pub probability: f64,
    pub clause: Clause,
}

impl WeightedClause {
    pub fn new(probability: f64, clause: Clause) -> Result<Self, KbError> {
        check_probability(probability)?;
        Ok(WeightedClause { probability, clause })
    }
}

impl fmt::Display for WeightedClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} {}", self.probability, self.clause)
    }
}

fn check_probability(p: f64) -> Result<(), KbError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(KbError::ProbabilityOutOfRange(p));
    }
    Ok(())
}

/// A set of weighted clauses. Clause order is the insertion order and is the
/// order in which linear programs are built.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    clauses: Vec<WeightedClause>,
    index: HashMap<Clause, usize>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_clauses(clauses: impl IntoIterator<Item = WeightedClause>) -> Result<Self, KbError> {
        let mut kb = Self::new();
        for wc in clauses {
            kb.insert(wc)?;
        }
        Ok(kb)
    }

    /// Adds a clause. Re-adding a clause with the same probability is a no-op;
    /// a different probability is an error.
    pub fn insert(&mut self, wc: WeightedClause) -> Result<(), KbError> {
        check_probability(wc.probability)?;
        match self.index.get(&wc.clause) {
            Some(&i) if self.clauses[i].probability == wc.probability => Ok(()),
            Some(&i) => Err(KbError::ConflictingDuplicate {
                clause: wc.clause.to_string(),
                first: self.clauses[i].probability,
                second: wc.probability,
            }),
            None => {
                self.index.insert(wc.clause.clone(), self.clauses.len());
                self.clauses.push(wc);
                Ok(())
            }
        }
    }

    /// Adds a clause, replacing the probability of an existing equal clause.
    /// Returns the replaced probability.
    pub fn upsert(&mut self, wc: WeightedClause) -> Result<Option<f64>, KbError> {
        check_probability(wc.probability)?;
        if let Some(&i) = self.index.get(&wc.clause) {
            let old = self.clauses[i].probability;
            self.clauses[i].probability = wc.probability;
            return Ok(Some(old));
        }
        self.index.insert(wc.clause.clone(), self.clauses.len());
        self.clauses.push(wc);
        Ok(None)
    }

    pub fn clauses(&self) -> &[WeightedClause] {
        &self.clauses
    }

    pub fn iter(&self) -> std::slice::Iter<'_, WeightedClause> {
        self.clauses.iter()
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn probability_of(&self, clause: &Clause) -> Option<f64> {
        self.index.get(clause).map(|&i| self.clauses[i].probability)
    }

    pub fn contains(&self, clause: &Clause) -> bool {
        self.index.contains_key(clause)
    }

    /// All atoms occurring in some clause.
    pub fn universe(&self) -> BTreeSet<Atom> {
        self.clauses
            .iter()
            .flat_map(|wc| wc.clause.atoms().cloned())
            .collect()
    }
}

impl PartialEq for KnowledgeBase {
    /// Set equality: same clauses with the same probabilities, in any order.
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .clauses
                .iter()
                .all(|wc| other.probability_of(&wc.clause) == Some(wc.probability))
    }
}

impl<'a> IntoIterator for &'a KnowledgeBase {
    type Item = &'a WeightedClause;
    type IntoIter = std::slice::Iter<'a, WeightedClause>;

    fn into_iter(self) -> Self::IntoIter {
        self.clauses.iter()
    }
}

pub fn parse_kb(text: &str) -> Result<KnowledgeBase, ParseError> {
    let mut kb = KnowledgeBase::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| ParseError { line: line_no, message };
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (prob, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| err("expected `<probability> <clause>`".into()))?;
        let probability = parse_probability(prob).map_err(err)?;
        let clause = parse_clause(rest.trim()).map_err(err)?;
        let wc = WeightedClause::new(probability, clause).map_err(|e| err(e.to_string()))?;
        kb.insert(wc).map_err(|e| err(e.to_string()))?;
    }
    Ok(kb)
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let well_formed = !s.is_empty()
        && s.chars().all(|c| c.is_ascii_digit() || c == '.')
        && s.chars().filter(|&c| c == '.').count() <= 1
        && s.chars().any(|c| c.is_ascii_digit());
    if !well_formed {
        return Err(format!("invalid probability {s:?}"));
    }
    let p: f64 = s.parse().map_err(|_| format!("invalid probability {s:?}"))?;
    check_probability(p).map_err(|e| e.to_string())?;
    Ok(p)
}

pub fn parse_clause(s: &str) -> Result<Clause, String> {
    let mut literals = Vec::new();
    for part in s.split('|') {
        let part = part.trim();
        let (negated, atom) = match part.strip_prefix('!') {
            Some(rest) => (true, rest),
            None => (false, part),
        };
        let atom = match atom.split_once('=') {
            Some((f, v)) => Atom::feature_value(f, v),
            None => Atom::proposition(atom),
        }
        .map_err(|e| format!("invalid literal {part:?}: {e}"))?;
        literals.push(Literal { atom, negated });
    }
    Clause::new(literals).map_err(|e| e.to_string())
}

/// One line per clause, sorted by the clause text, probabilities at 6 decimals.
pub fn serialize_kb(kb: &KnowledgeBase) -> String {
    let mut lines: Vec<(String, f64)> = kb
        .iter()
        .map(|wc| (wc.clause.to_string(), wc.probability))
        .collect();
    lines.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = String::new();
    for (clause, p) in lines {
        out.push_str(&format!("{p:.6} {clause}\n"));
    }
    out
}

/// Adds externally supplied knowledge to a knowledge base. Supplied clauses
/// override the probability of equal learned clauses. Every supplied clause
/// must contain `pos` positively.
pub fn merge(kb: &KnowledgeBase, extra: &[WeightedClause]) -> Result<KnowledgeBase, KbError> {
    let mut merged = kb.clone();
    for wc in extra {
        if !wc.clause.has_positive_class() {
            return Err(KbError::MissingClassAtom(wc.clause.to_string()));
        }
        merged.upsert(wc.clone())?;
    }
    Ok(merged)
}
