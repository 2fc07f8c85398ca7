//! Probabilistic inference over a knowledge base by linear programming.
//!
//! Every atom `z` gets two unknowns `π(z)` and `π(¬z)`, every clause `c` an
//! unknown `π(c)`. For a clause `c = z1 | ... | zl`:
//!
//! ```text
//! π(c) <= π(z1) + ... + π(zl)      union bound
//! π(c) >= π(zj)        for each j  monotonicity
//! π(z) + π(¬z) = 1     for each atom
//! 0 <= π(·) <= 1
//! ```
//!
//! The clause probabilities enter only through the objective, which
//! minimizes `Σ |π(c) - p(c)|`, linearized as `π(c) - p(c) = e⁺ - e⁻`. An
//! inconsistent knowledge base therefore still has an optimum; it just does
//! not reach zero.
//!
//! Queries fix feature-value atoms to 0 or 1. The class probability is then
//! bracketed by minimizing and maximizing `π(pos)` while holding the
//! deviation objective at its optimum.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::kb::{Atom, KnowledgeBase};
use crate::lp::{solve_lp_with, Backend, LinearProgram, LpError, LpStatus, Relation, Sense, VarId};
use crate::query::{Domains, Query};

/// Slack allowed on the deviation objective when optimizing the target.
pub const LEX_TOL: f64 = 1e-9;
/// Deviation at or below which a knowledge base is reported as possibly consistent.
pub const ZERO_TOL: f64 = 1e-6;
/// Reported bounds are rounded to this grid to absorb solver noise.
const BOUND_GRID: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("query fixings make the linear program infeasible")]
    InfeasibleQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AtomVars {
    pub positive: VarId,
    pub negative: VarId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClauseVars {
    pub clause: VarId,
    pub excess: VarId,
    pub shortfall: VarId,
}

/// The linear program of a knowledge base together with the meaning of its
/// variables.
#[derive(Debug, Clone)]
pub struct KbProgram {
    lp: LinearProgram,
    atoms: BTreeMap<Atom, AtomVars>,
    clauses: Vec<ClauseVars>,
}

impl KbProgram {
    pub fn lp(&self) -> &LinearProgram {
        &self.lp
    }

    pub fn atom_vars(&self, atom: &Atom) -> Option<AtomVars> {
        self.atoms.get(atom).copied()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&Atom, AtomVars)> + '_ {
        self.atoms.iter().map(|(a, v)| (a, *v))
    }

    pub fn clause_vars(&self) -> &[ClauseVars] {
        &self.clauses
    }

    fn deviation_terms(&self) -> Vec<(VarId, f64)> {
        self.clauses
            .iter()
            .flat_map(|c| [(c.excess, 1.0), (c.shortfall, 1.0)])
            .collect()
    }

    /// Adds `π(atom) = value` when the atom has variables; returns whether it did.
    pub fn fix_atom(&mut self, atom: &Atom, value: f64) -> bool {
        match self.atoms.get(atom) {
            Some(vars) => {
                self.lp.add_constraint(vec![(vars.positive, 1.0)], Relation::Eq, value);
                true
            }
            None => false,
        }
    }

    fn ensure_atom(&mut self, atom: &Atom) -> AtomVars {
        if let Some(v) = self.atoms.get(atom) {
            return *v;
        }
        let vars = add_atom(&mut self.lp, atom);
        self.atoms.insert(atom.clone(), vars);
        vars
    }
}

fn add_atom(lp: &mut LinearProgram, atom: &Atom) -> AtomVars {
    let positive = lp.add_var(format!("π({atom})"), 0.0, 1.0);
    let negative = lp.add_var(format!("π(!{atom})"), 0.0, 1.0);
    lp.add_constraint(vec![(positive, 1.0), (negative, 1.0)], Relation::Eq, 1.0);
    AtomVars { positive, negative }
}

/// Builds the linear program of `kb` with the deviation objective.
///
/// Variables: `π(z), π(¬z)` per atom in canonical atom order, then
/// `π(c), e⁺, e⁻` per clause in knowledge-base order. Constraints: per
/// clause the union bound followed by one monotonicity row per literal,
/// then one complement row per atom, then one deviation row per clause.
pub fn build_lp(kb: &KnowledgeBase) -> KbProgram {
    let mut lp = LinearProgram::new();
    let universe = kb.universe();
    let mut atoms = BTreeMap::new();
    for atom in &universe {
        let positive = lp.add_var(format!("π({atom})"), 0.0, 1.0);
        let negative = lp.add_var(format!("π(!{atom})"), 0.0, 1.0);
        atoms.insert(atom.clone(), AtomVars { positive, negative });
    }
    let mut clauses = Vec::with_capacity(kb.len());
    for (i, _) in kb.iter().enumerate() {
        let clause = lp.add_var(format!("π(c{i})"), 0.0, 1.0);
        let excess = lp.add_var(format!("e+{i}"), 0.0, f64::INFINITY);
        let shortfall = lp.add_var(format!("e-{i}"), 0.0, f64::INFINITY);
        clauses.push(ClauseVars {
            clause,
            excess,
            shortfall,
        });
    }
    for (wc, vars) in kb.iter().zip(&clauses) {
        let literal_vars: Vec<VarId> = wc
            .clause
            .literals()
            .iter()
            .map(|lit| {
                let a = atoms[&lit.atom];
                if lit.negated {
                    a.negative
                } else {
                    a.positive
                }
            })
            .collect();
        let mut union = vec![(vars.clause, 1.0)];
        union.extend(literal_vars.iter().map(|&v| (v, -1.0)));
        lp.add_constraint(union, Relation::Le, 0.0);
        for &v in &literal_vars {
            lp.add_constraint(vec![(vars.clause, 1.0), (v, -1.0)], Relation::Ge, 0.0);
        }
    }
    for vars in atoms.values() {
        lp.add_constraint(vec![(vars.positive, 1.0), (vars.negative, 1.0)], Relation::Eq, 1.0);
    }
    for (wc, vars) in kb.iter().zip(&clauses) {
        lp.add_constraint(
            vec![(vars.clause, 1.0), (vars.excess, -1.0), (vars.shortfall, 1.0)],
            Relation::Eq,
            wc.probability,
        );
    }
    let mut program = KbProgram { lp, atoms, clauses };
    let objective = program.deviation_terms();
    program.lp.set_objective(Sense::Minimize, objective);
    program
}

/// Adds the query's fixings: `π(a=v) = 1` for each assignment and
/// `π(a=v') = 0` for every other known value `v'` of `a`. Values are taken
/// from `domains` and from the atoms already in the program; fixings for
/// atoms that have no variables are skipped.
pub fn apply_query(program: &KbProgram, query: &Query, domains: &Domains) -> KbProgram {
    let mut program = program.clone();
    for (feature, value) in query.pairs() {
        let mut values: Vec<&str> = domains
            .get(feature)
            .map(|d| d.iter().map(String::as_str).collect())
            .unwrap_or_default();
        let in_program: Vec<String> = program
            .atoms
            .keys()
            .filter_map(|a| a.as_pair())
            .filter(|(f, _)| *f == feature)
            .map(|(_, v)| v.to_string())
            .collect();
        values.extend(in_program.iter().map(String::as_str));
        values.push(value);
        values.sort_unstable();
        values.dedup();
        for v in values {
            let atom = Atom::FeatureValue {
                feature: feature.to_string(),
                value: v.to_string(),
            };
            program.fix_atom(&atom, if v == value { 1.0 } else { 0.0 });
        }
    }
    program
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceResult {
    pub p_lower: f64,
    pub p_upper: f64,
    pub p_avg: f64,
    pub objective_min: f64,
    pub label: bool,
}

impl InferenceResult {
    fn new(p_lower: f64, p_upper: f64, objective_min: f64) -> Self {
        let snap = |x: f64| ((x * BOUND_GRID).round() / BOUND_GRID).clamp(0.0, 1.0);
        let (mut lo, mut hi) = (snap(p_lower), snap(p_upper));
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        let p_avg = (lo + hi) / 2.0;
        InferenceResult {
            p_lower: lo,
            p_upper: hi,
            p_avg,
            objective_min,
            label: p_avg > 0.5,
        }
    }
}

/// Bounds on `π(pos)` under the query.
pub fn infer_pos(kb: &KnowledgeBase, query: &Query, domains: &Domains) -> Result<InferenceResult, InferenceError> {
    infer_atom(kb, query, domains, &Atom::Class)
}

pub fn infer_atom(
    kb: &KnowledgeBase,
    query: &Query,
    domains: &Domains,
    target: &Atom,
) -> Result<InferenceResult, InferenceError> {
    infer_atom_with(kb, query, domains, target, Backend::default())
}

/// Three solves: minimum deviation `v*`, then min and max of `π(target)`
/// subject to deviation `<= v* + LEX_TOL`. A target that occurs in no clause
/// is unconstrained and gets the bounds `[0, 1]`.
pub fn infer_atom_with(
    kb: &KnowledgeBase,
    query: &Query,
    domains: &Domains,
    target: &Atom,
    backend: Backend,
) -> Result<InferenceResult, InferenceError> {
    let mut base = build_lp(kb);
    let target_vars = base.ensure_atom(target);
    let program = apply_query(&base, query, domains);

    let stage1 = solve_lp_with(&program.lp, backend)?;
    let v_star = match stage1.status {
        LpStatus::Optimal => stage1.objective_value.max(0.0),
        LpStatus::Infeasible => return Err(InferenceError::InfeasibleQuery),
        LpStatus::Unbounded => return Err(LpError::Unbounded.into()),
    };

    let mut held = program.lp.clone();
    held.add_constraint(program.deviation_terms(), Relation::Le, v_star + LEX_TOL);
    let mut bound = |sense: Sense| -> Result<f64, InferenceError> {
        held.set_objective(sense, vec![(target_vars.positive, 1.0)]);
        let sol = solve_lp_with(&held, backend)?;
        match sol.status {
            LpStatus::Optimal => Ok(sol.value(target_vars.positive)),
            LpStatus::Infeasible => Err(InferenceError::InfeasibleQuery),
            LpStatus::Unbounded => Err(LpError::Unbounded.into()),
        }
    };
    let lower = bound(Sense::Minimize)?;
    let upper = bound(Sense::Maximize)?;
    Ok(InferenceResult::new(lower, upper, v_star))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consistency {
    /// `objective_min <= ZERO_TOL`. A true hint does not prove consistency;
    /// a false one proves inconsistency.
    pub consistent_hint: bool,
    pub objective_min: f64,
}

pub fn check_consistency(kb: &KnowledgeBase) -> Result<Consistency, InferenceError> {
    let program = build_lp(kb);
    let sol = solve_lp_with(&program.lp, Backend::default())?;
    match sol.status {
        LpStatus::Optimal => {
            let objective_min = sol.objective_value.max(0.0);
            Ok(Consistency {
                consistent_hint: objective_min <= ZERO_TOL,
                objective_min,
            })
        }
        LpStatus::Infeasible => Err(LpError::Infeasible.into()),
        LpStatus::Unbounded => Err(LpError::Unbounded.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::parse_kb;
    use crate::lp::{solve_lp, FEASIBILITY_TOL};

    fn prop(name: &str) -> Atom {
        Atom::proposition(name).unwrap()
    }

    fn modus_ponens() -> KnowledgeBase {
        parse_kb("0.6 !alpha | beta\n0.8 alpha\n").unwrap()
    }

    #[test]
    fn modus_ponens_program_shape() {
        let program = build_lp(&modus_ponens());
        let lp = program.lp();
        // 2 atoms x 2 + 2 clause vars + 4 deviation vars
        assert_eq!(lp.num_vars(), 2 * 2 + 2 + 4);
        // union bounds 2, monotonicity 2 + 1, complements 2, deviations 2
        assert_eq!(lp.num_constraints(), 2 + 3 + 2 + 2);

        let a = program.atom_vars(&prop("alpha")).unwrap();
        let b = program.atom_vars(&prop("beta")).unwrap();
        let c1 = program.clause_vars()[0].clause;
        let c2 = program.clause_vars()[1].clause;
        let rows = lp.constraints();
        let has = |terms: Vec<(VarId, f64)>, rel: Relation, rhs: f64| {
            rows.iter()
                .any(|r| r.relation == rel && r.rhs == rhs && r.terms == terms)
        };
        assert!(has(vec![(c1, 1.0), (a.negative, -1.0), (b.positive, -1.0)], Relation::Le, 0.0));
        assert!(has(vec![(c2, 1.0), (a.positive, -1.0)], Relation::Le, 0.0));
        assert!(has(vec![(c1, 1.0), (a.negative, -1.0)], Relation::Ge, 0.0));
        assert!(has(vec![(c1, 1.0), (b.positive, -1.0)], Relation::Ge, 0.0));
        assert!(has(vec![(c2, 1.0), (a.positive, -1.0)], Relation::Ge, 0.0));
        assert!(has(vec![(a.positive, 1.0), (a.negative, 1.0)], Relation::Eq, 1.0));
        assert!(has(vec![(b.positive, 1.0), (b.negative, 1.0)], Relation::Eq, 1.0));
    }

    #[test]
    fn modus_ponens_solution() {
        let program = build_lp(&modus_ponens());
        let sol = solve_lp(program.lp()).unwrap();
        assert!(sol.objective_value.abs() < 1e-9);
        assert!(program.lp().is_feasible(&sol.values, FEASIBILITY_TOL));
        let a = program.atom_vars(&prop("alpha")).unwrap();
        let b = program.atom_vars(&prop("beta")).unwrap();
        assert!((sol.value(a.positive) - 0.8).abs() < 1e-7);
        let beta = sol.value(b.positive);
        assert!((0.4 - 1e-7..=0.6 + 1e-7).contains(&beta), "{beta}");
    }

    #[test]
    fn modus_ponens_bounds() {
        for backend in [Backend::Sparse, Backend::Dense] {
            let r = infer_atom_with(&modus_ponens(), &Query::new(), &Domains::new(), &prop("beta"), backend).unwrap();
            assert!((r.p_lower - 0.4).abs() < 1e-6, "{r:?}");
            assert!((r.p_upper - 0.6).abs() < 1e-6, "{r:?}");
            assert!(r.objective_min < 1e-6);
        }
    }

    #[test]
    fn certain_class_clause() {
        let kb = parse_kb("1.0 pos").unwrap();
        let program = build_lp(&kb);
        assert_eq!(program.lp().num_vars(), 2 + 1 + 2);
        let r = infer_pos(&kb, &Query::new(), &Domains::new()).unwrap();
        assert_eq!((r.p_lower, r.p_upper), (1.0, 1.0));
        assert!(r.label);
    }

    #[test]
    fn missing_target_is_unconstrained() {
        let r = infer_pos(&KnowledgeBase::new(), &Query::new(), &Domains::new()).unwrap();
        assert_eq!((r.p_lower, r.p_upper, r.p_avg), (0.0, 1.0, 0.5));
        assert!(!r.label, "0.5 is not greater than 0.5");
    }

    #[test]
    fn query_fixings() {
        let kb = parse_kb("0.5 pos | !a1=0\n0.5 pos | !a1=1 | !a2=0\n").unwrap();
        let mut domains = Domains::new();
        domains.insert("a1".into(), ["0", "1"].iter().map(|s| s.to_string()).collect());
        domains.insert("a2".into(), ["0", "1"].iter().map(|s| s.to_string()).collect());
        let base = build_lp(&kb);
        let q: Query = "a1=0".parse().unwrap();
        let fixed = apply_query(&base, &q, &domains);
        assert_eq!(fixed.lp().num_constraints(), base.lp().num_constraints() + 2);
        assert_eq!(apply_query(&base, &Query::new(), &domains).lp(), base.lp());
        // a2=1 has no variables; only a2=0 gets fixed
        let q: Query = "a2=1".parse().unwrap();
        let fixed = apply_query(&base, &q, &domains);
        assert_eq!(fixed.lp().num_constraints(), base.lp().num_constraints() + 1);
    }

    #[test]
    fn consistency_of_small_kbs() {
        let c = check_consistency(&modus_ponens()).unwrap();
        assert!(c.consistent_hint);
        let kb = parse_kb("0.9 alpha\n0.2 alpha | beta\n").unwrap();
        let c = check_consistency(&kb).unwrap();
        assert!(!c.consistent_hint);
        assert!((c.objective_min - 0.7).abs() < 1e-7);
    }
}
