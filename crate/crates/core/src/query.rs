use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::kb::{validate_name, KbError};

/// Observed values per feature.
pub type Domains = BTreeMap<String, BTreeSet<String>>;

/// A partial assignment of values to features. Features not mentioned are
/// unknown.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Query {
    assignments: BTreeMap<String, String>,
}

impl Query {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<F, V>(pairs: impl IntoIterator<Item = (F, V)>) -> Result<Self, KbError>
    where
        F: Into<String>,
        V: Into<String>,
    {
        let mut q = Query::new();
        for (f, v) in pairs {
            q.assign(f, v)?;
        }
        Ok(q)
    }

    /// Sets a feature's value, replacing any earlier value.
    pub fn assign(&mut self, feature: impl Into<String>, value: impl Into<String>) -> Result<(), KbError> {
        let feature = feature.into();
        let value = value.into();
        validate_name(&feature)?;
        validate_name(&value)?;
        self.assignments.insert(feature, value);
        Ok(())
    }

    pub fn get(&self, feature: &str) -> Option<&str> {
        self.assignments.get(feature).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Assignments sorted by feature name.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.assignments.iter().map(|(f, v)| (f.as_str(), v.as_str()))
    }

    /// The sub-query made of the assignments at the given positions of
    /// [`Query::pairs`].
    pub fn select(&self, positions: &[usize]) -> Query {
        let pairs: Vec<_> = self.assignments.iter().collect();
        Query {
            assignments: positions
                .iter()
                .map(|&i| (pairs[i].0.clone(), pairs[i].1.clone()))
                .collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Query) -> bool {
        self.pairs().all(|(f, v)| other.get(f) == Some(v))
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (feat, val)) in self.pairs().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{feat}={val}")?;
        }
        Ok(())
    }
}

impl FromStr for Query {
    type Err = KbError;

    /// Parses `a1=0,a2=1`. An empty string is the empty query.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut q = Query::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (f, v) = part
                .split_once('=')
                .ok_or_else(|| KbError::InvalidName(part.to_string()))?;
            q.assign(f.trim(), v.trim())?;
        }
        Ok(q)
    }
}
