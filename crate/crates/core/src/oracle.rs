//! Exact probabilistic-satisfiability check over all truth assignments.
//!
//! Enumerates the `2^n` worlds over the atoms of a knowledge base and solves
//! for a distribution over them that reproduces every clause probability.
//! Exponential in the atom count, so it is capped and meant for tests and
//! small cross-checks of the linear relaxation in [`crate::inference`].

use std::collections::BTreeSet;

use thiserror::Error;

use crate::kb::{Atom, KnowledgeBase};
use crate::lp::{solve_lp_with, Backend, LinearProgram, LpError, LpStatus, Relation, Sense, VarId};

pub const MAX_ORACLE_ATOMS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("{0} atoms exceed the oracle limit of {MAX_ORACLE_ATOMS}")]
    TooManyAtoms(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub feasible: bool,
    /// Exact range of `P(target)` over all satisfying distributions; NaN when
    /// infeasible.
    pub p_min: f64,
    pub p_max: f64,
}

/// A distribution over worlds, each world a bitmask over `atoms`.
#[derive(Debug, Clone)]
pub struct WorldDistribution {
    pub atoms: Vec<Atom>,
    pub probabilities: Vec<f64>,
}

impl WorldDistribution {
    /// Probability mass of the worlds satisfying a clause.
    pub fn clause_probability(&self, clause: &crate::kb::Clause) -> f64 {
        let masks = literal_masks(&self.atoms, clause);
        self.probabilities
            .iter()
            .enumerate()
            .filter(|(w, _)| satisfies(*w, &masks))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn atom_probability(&self, atom: &Atom) -> f64 {
        let Some(bit) = self.atoms.iter().position(|a| a == atom) else {
            return 0.0;
        };
        self.probabilities
            .iter()
            .enumerate()
            .filter(|(w, _)| w >> bit & 1 == 1)
            .map(|(_, p)| p)
            .sum()
    }
}

/// `(bit, negated)` per literal.
fn literal_masks(atoms: &[Atom], clause: &crate::kb::Clause) -> Vec<(usize, bool)> {
    clause
        .literals()
        .iter()
        .map(|lit| {
            let bit = atoms
                .iter()
                .position(|a| *a == lit.atom)
                .expect("clause atom missing from world atoms");
            (bit, lit.negated)
        })
        .collect()
}

fn satisfies(world: usize, literals: &[(usize, bool)]) -> bool {
    literals
        .iter()
        .any(|&(bit, negated)| (world >> bit & 1 == 1) != negated)
}

pub fn nilsson_oracle(kb: &KnowledgeBase, target: &Atom) -> Result<OracleResult, OracleError> {
    let mut atom_set: BTreeSet<Atom> = kb.universe();
    atom_set.insert(target.clone());
    let atoms: Vec<Atom> = atom_set.into_iter().collect();
    if atoms.len() > MAX_ORACLE_ATOMS {
        return Err(OracleError::TooManyAtoms(atoms.len()));
    }
    let n_worlds = 1usize << atoms.len();

    let mut lp = LinearProgram::new();
    let worlds: Vec<VarId> = (0..n_worlds).map(|w| lp.add_var(format!("w{w}"), 0.0, 1.0)).collect();
    lp.add_constraint(worlds.iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0);
    for wc in kb {
        let masks = literal_masks(&atoms, &wc.clause);
        let terms = (0..n_worlds)
            .filter(|&w| satisfies(w, &masks))
            .map(|w| (worlds[w], 1.0))
            .collect();
        lp.add_constraint(terms, Relation::Eq, wc.probability);
    }
    let bit = atoms.iter().position(|a| a == target).expect("target inserted above");
    let target_terms: Vec<(VarId, f64)> = (0..n_worlds)
        .filter(|w| w >> bit & 1 == 1)
        .map(|w| (worlds[w], 1.0))
        .collect();

    let mut extreme = |sense: Sense| -> Result<Option<f64>, OracleError> {
        lp.set_objective(sense, target_terms.clone());
        let sol = solve_lp_with(&lp, Backend::Dense)?;
        Ok(match sol.status {
            LpStatus::Optimal => Some(sol.objective_value),
            _ => None,
        })
    };
    match (extreme(Sense::Minimize)?, extreme(Sense::Maximize)?) {
        (Some(p_min), Some(p_max)) => Ok(OracleResult {
            feasible: true,
            p_min,
            p_max,
        }),
        _ => Ok(OracleResult {
            feasible: false,
            p_min: f64::NAN,
            p_max: f64::NAN,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::parse_kb;

    #[test]
    fn modus_ponens_range() {
        let kb = parse_kb("0.6 !alpha | beta\n0.8 alpha\n").unwrap();
        let r = nilsson_oracle(&kb, &Atom::proposition("beta").unwrap()).unwrap();
        assert!(r.feasible);
        assert!((r.p_min - 0.4).abs() < 1e-9);
        assert!((r.p_max - 0.6).abs() < 1e-9);
        let r = nilsson_oracle(&kb, &Atom::proposition("alpha").unwrap()).unwrap();
        assert!((r.p_min - 0.8).abs() < 1e-9 && (r.p_max - 0.8).abs() < 1e-9);
    }

    #[test]
    fn certain_class() {
        let kb = parse_kb("1.0 pos").unwrap();
        let r = nilsson_oracle(&kb, &Atom::Class).unwrap();
        assert!(r.feasible);
        assert_eq!((r.p_min, r.p_max), (1.0, 1.0));
    }

    #[test]
    fn detects_inconsistency() {
        let kb = parse_kb("0.9 alpha\n0.2 alpha | beta\n").unwrap();
        let r = nilsson_oracle(&kb, &Atom::Class).unwrap();
        assert!(!r.feasible);
    }

    #[test]
    fn atom_cap() {
        let text: String = (0..17).map(|i| format!("0.5 p{i}\n")).collect();
        let kb = parse_kb(&text).unwrap();
        assert_eq!(
            nilsson_oracle(&kb, &Atom::Class).unwrap_err(),
            OracleError::TooManyAtoms(18)
        );
    }

    #[test]
    fn world_distribution_marginals() {
        // worlds over (alpha, beta): bit 0 = alpha, bit 1 = beta
        let d = WorldDistribution {
            atoms: vec![Atom::proposition("alpha").unwrap(), Atom::proposition("beta").unwrap()],
            probabilities: vec![0.1, 0.2, 0.3, 0.4],
        };
        let c = crate::kb::parse_clause("!alpha | beta").unwrap();
        // fails only in world alpha & !beta (bit pattern 01 -> index 1)
        assert!((d.clause_probability(&c) - 0.8).abs() < 1e-12);
        assert!((d.atom_probability(&d.atoms[0].clone()) - 0.6).abs() < 1e-12);
    }
}
