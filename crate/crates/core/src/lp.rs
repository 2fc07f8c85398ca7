//! A small linear-program model with two solver backends.
//!
//! [`Backend::Sparse`] hands the problem to `microlp` (sparse revised simplex)
//! and is what inference uses. [`Backend::Dense`] is the bounded-variable
//! two-phase tableau simplex in [`crate::simplex`]; it is exact enough for
//! small problems and is kept independent of the sparse path.

use std::fmt::Write as _;

use thiserror::Error;

use crate::simplex;

/// Feasibility tolerance used when checking solutions.
pub const FEASIBILITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    pub fn is_satisfied(&self, values: &[f64], tol: f64) -> bool {
        let lhs = self.lhs(values);
        match self.relation {
            Relation::Le => lhs <= self.rhs + tol,
            Relation::Ge => lhs >= self.rhs - tol,
            Relation::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<(VarId, f64)>,
    sense: Sense,
}

impl Default for LinearProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        LinearProgram {
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
            sense: Sense::Minimize,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_constraint(&mut self, terms: Vec<(VarId, f64)>, relation: Relation, rhs: f64) {
        debug_assert!(terms.iter().all(|(v, _)| v.0 < self.variables.len()));
        self.constraints.push(Constraint { terms, relation, rhs });
    }

    pub fn set_objective(&mut self, sense: Sense, terms: Vec<(VarId, f64)>) {
        self.sense = sense;
        self.objective = terms;
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v.0]).sum()
    }

    /// Checks bounds and constraints of `values` within `tol`.
    pub fn is_feasible(&self, values: &[f64], tol: f64) -> bool {
        values.len() == self.variables.len()
            && self
                .variables
                .iter()
                .zip(values)
                .all(|(var, &x)| x >= var.lower - tol && x <= var.upper + tol)
            && self.constraints.iter().all(|c| c.is_satisfied(values, tol))
    }

    /// Writes the problem in CPLEX LP text format. Variables are renamed
    /// `x0, x1, ...`; the original names are listed in the header comment.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        for (i, var) in self.variables.iter().enumerate() {
            let _ = writeln!(out, "\\ x{i} = {}", var.name);
        }
        out.push_str(match self.sense {
            Sense::Minimize => "Minimize\n",
            Sense::Maximize => "Maximize\n",
        });
        let _ = writeln!(out, " obj: {}", format_expr(&self.objective));
        out.push_str("Subject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let op = match c.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            let _ = writeln!(out, " c{i}: {} {op} {}", format_expr(&c.terms), c.rhs);
        }
        out.push_str("Bounds\n");
        for (i, var) in self.variables.iter().enumerate() {
            let lo = fmt_bound(var.lower);
            let hi = fmt_bound(var.upper);
            let _ = writeln!(out, " {lo} <= x{i} <= {hi}");
        }
        out.push_str("End\n");
        out
    }
}

fn fmt_bound(b: f64) -> String {
    if b == f64::INFINITY {
        "+inf".into()
    } else if b == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        b.to_string()
    }
}

fn format_expr(terms: &[(VarId, f64)]) -> String {
    if terms.is_empty() {
        return "0".into();
    }
    let mut s = String::new();
    for (i, &(v, a)) in terms.iter().enumerate() {
        let sign = if a < 0.0 { "-" } else if i > 0 { "+" } else { "" };
        if i > 0 {
            s.push(' ');
        }
        let mag = a.abs();
        if mag == 1.0 {
            let _ = write!(s, "{sign} x{}", v.0);
        } else {
            let _ = write!(s, "{sign} {mag} x{}", v.0);
        }
    }
    s.trim_start().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub status: LpStatus,
}

impl LpSolution {
    fn without_values(status: LpStatus) -> Self {
        LpSolution {
            values: Vec::new(),
            objective_value: f64::NAN,
            status,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("variable {0} has no finite lower bound")]
    FreeVariable(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Sparse,
    Dense,
}

/// Solves with the default sparse backend.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_lp_with(lp, Backend::Sparse)
}

pub fn solve_lp_with(lp: &LinearProgram, backend: Backend) -> Result<LpSolution, LpError> {
    match backend {
        Backend::Sparse => solve_sparse(lp),
        Backend::Dense => simplex::solve(lp),
    }
}

/// Bound widths at or below this count as fixed during presolve.
const FIXED_TOL: f64 = 1e-12;

type Row = (Vec<(VarId, f64)>, Relation, f64);

/// A reduced problem: rows over representative variables only.
struct Presolved {
    bounds: Vec<(f64, f64)>,
    rows: Vec<Row>,
    /// Every variable's representative; fixed and untouched variables are
    /// their own.
    rep: Vec<usize>,
}

fn find(rep: &mut [usize], mut v: usize) -> usize {
    while rep[v] != v {
        rep[v] = rep[rep[v]];
        v = rep[v];
    }
    v
}

/// Exact reductions, repeated until nothing changes:
/// - variables fixed by their bounds are substituted into the rows;
/// - single-variable rows become bounds;
/// - a pair of rows `x <= y` and `x >= y` merges `x` into `y`.
///
/// A query fixing `π(a=v)` thereby also fixes `π(¬a=v)`, and the union and
/// monotonicity rows of a clause whose other literals are all false collapse
/// `π(c)` onto the remaining literal. Returns `None` when infeasible.
fn presolve(lp: &LinearProgram) -> Option<Presolved> {
    let n = lp.variables.len();
    let mut bounds: Vec<(f64, f64)> = lp.variables.iter().map(|v| (v.lower, v.upper)).collect();
    let mut rep: Vec<usize> = (0..n).collect();
    let mut rows: Vec<Row> = lp
        .constraints
        .iter()
        .map(|c| (c.terms.clone(), c.relation, c.rhs))
        .collect();
    let mut coef = vec![0.0; n];
    loop {
        let before = rows.len();
        let mut kept = Vec::with_capacity(before);
        for (terms, relation, mut rhs) in rows {
            let mut touched = Vec::with_capacity(terms.len());
            for (v, a) in terms {
                let r = find(&mut rep, v.0);
                if coef[r] == 0.0 {
                    touched.push(r);
                }
                coef[r] += a;
            }
            let mut free = Vec::with_capacity(touched.len());
            for r in touched {
                let a = std::mem::take(&mut coef[r]);
                if a == 0.0 {
                    continue;
                }
                let (lo, hi) = bounds[r];
                if hi - lo <= FIXED_TOL {
                    rhs -= a * lo;
                } else {
                    free.push((VarId(r), a));
                }
            }
            match free.as_slice() {
                [] => {
                    let c = Constraint { terms: vec![], relation, rhs };
                    if !c.is_satisfied(&[], FEASIBILITY_TOL) {
                        return None;
                    }
                }
                &[(v, a)] => {
                    let x = rhs / a;
                    let rel = if a < 0.0 { flip(relation) } else { relation };
                    let b = &mut bounds[v.0];
                    match rel {
                        Relation::Le => b.1 = b.1.min(x),
                        Relation::Ge => b.0 = b.0.max(x),
                        Relation::Eq => *b = (b.0.max(x), b.1.min(x)),
                    }
                    if b.0 > b.1 + FEASIBILITY_TOL {
                        return None;
                    }
                    b.1 = b.1.max(b.0);
                }
                _ => kept.push((free, relation, rhs)),
            }
        }

        // pairs (x, y), x < y, with x - y <= 0 and x - y >= 0 both present
        let mut sides: std::collections::HashMap<(usize, usize), (bool, bool)> = Default::default();
        for (terms, relation, rhs) in &kept {
            if let &[(x, a), (y, b)] = terms.as_slice() {
                if rhs.abs() > FIXED_TOL || a != -b {
                    continue;
                }
                let mut rel = if a < 0.0 { flip(*relation) } else { *relation };
                let key = if x.0 < y.0 {
                    (x.0, y.0)
                } else {
                    rel = flip(rel);
                    (y.0, x.0)
                };
                let e = sides.entry(key).or_default();
                match rel {
                    Relation::Le => e.0 = true,
                    Relation::Ge => e.1 = true,
                    Relation::Eq => *e = (true, true),
                }
            }
        }
        let mut merged = false;
        let mut pairs: Vec<(usize, usize)> = sides
            .into_iter()
            .filter(|(_, s)| s.0 && s.1)
            .map(|(k, _)| k)
            .collect();
        pairs.sort_unstable();
        for (x, y) in pairs {
            let (rx, ry) = (find(&mut rep, x), find(&mut rep, y));
            if rx == ry {
                continue;
            }
            let b = (bounds[rx].0.max(bounds[ry].0), bounds[rx].1.min(bounds[ry].1));
            if b.0 > b.1 + FEASIBILITY_TOL {
                return None;
            }
            bounds[ry] = (b.0, b.1.max(b.0));
            rep[rx] = ry;
            merged = true;
        }
        rows = kept;
        if !merged && rows.len() == before {
            break;
        }
    }
    for v in 0..n {
        find(&mut rep, v);
    }
    Some(Presolved { bounds, rows, rep })
}

/// A column of a row that appears in at most one other row, described
/// without its own index: coefficient in the row, cost, bounds and its entry
/// in the other row.
type PrivateKey = (u64, u64, u64, u64, Option<(usize, u64)>);

/// Merges rows that are identical up to private columns.
///
/// Rows `S·x + A·e_r = b`, one per `r` in a group, with the same shared
/// part `S`, the same `b` and private columns `e_r` that match position by
/// position in coefficient, cost, bounds and entry in an outside row, are
/// replaced by the first row with its private costs and outside entries
/// scaled by the group size. Averaging the `e_r` of a feasible point gives a
/// feasible point of the merged problem with the same objective, and copying
/// the merged `e` back to every `e_r` inverts it, so the two problems have
/// the same optimum. Returns `(dropped column, column it copies)` pairs.
fn merge_symmetric_rows(rows: &mut Vec<Row>, cost: &mut [f64], bounds: &[(f64, f64)]) -> Vec<(usize, usize)> {
    use std::collections::{HashMap, HashSet};

    let mut occurs: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for (i, (terms, _, _)) in rows.iter().enumerate() {
        for &(v, a) in terms {
            occurs.entry(v.0).or_default().push((i, a));
        }
    }
    // per row: shared part, then private columns sorted by key
    let mut groups: HashMap<(u8, u64, Vec<(usize, u64)>, Vec<PrivateKey>), Vec<usize>> = HashMap::new();
    let mut private: Vec<Vec<(PrivateKey, usize)>> = Vec::with_capacity(rows.len());
    for (i, (terms, rel, rhs)) in rows.iter().enumerate() {
        let mut shared = Vec::new();
        let mut own = Vec::new();
        for &(v, a) in terms {
            let occ = &occurs[&v.0];
            if occ.len() > 2 {
                shared.push((v.0, a.to_bits()));
                continue;
            }
            let other = occ.iter().find(|&&(r, _)| r != i).map(|&(r, b)| (r, b.to_bits()));
            let (lo, hi) = bounds[v.0];
            own.push(((a.to_bits(), cost[v.0].to_bits(), lo.to_bits(), hi.to_bits(), other), v.0));
        }
        shared.sort_unstable();
        own.sort_unstable_by(|x, y| x.0.cmp(&y.0));
        let rel = match rel {
            Relation::Le => 0,
            Relation::Ge => 1,
            Relation::Eq => 2,
        };
        if !own.is_empty() {
            let key = (rel, rhs.to_bits(), shared, own.iter().map(|p| p.0).collect());
            groups.entry(key).or_default().push(i);
        }
        private.push(own);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
    groups.sort_unstable();

    let mut members: HashSet<usize> = HashSet::new();
    let mut outside: HashSet<usize> = HashSet::new();
    let mut aliases = Vec::new();
    let mut dropped = vec![false; rows.len()];
    for group in groups {
        let others: HashSet<usize> = group
            .iter()
            .flat_map(|&r| private[r].iter().filter_map(|p| p.0 .4.map(|(o, _)| o)))
            .collect();
        if group.iter().any(|r| outside.contains(r) || others.contains(r)) || others.iter().any(|o| members.contains(o)) {
            continue;
        }
        let k = group.len() as f64;
        let head = group[0];
        for (t, &(key, col)) in private[head].iter().enumerate() {
            cost[col] *= k;
            if let Some((o, _)) = key.4 {
                for (v, a) in rows[o].0.iter_mut() {
                    if v.0 == col {
                        *a *= k;
                    }
                }
            }
            for &r in &group[1..] {
                let twin = private[r][t].1;
                aliases.push((twin, col));
                if let Some((o, _)) = key.4 {
                    rows[o].0.retain(|(v, _)| v.0 != twin);
                }
            }
        }
        for &r in &group[1..] {
            dropped[r] = true;
        }
        members.extend(group.iter().copied());
        outside.extend(others);
    }
    let mut i = 0;
    rows.retain(|_| {
        i += 1;
        !dropped[i - 1]
    });
    aliases
}

fn solve_sparse(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    use microlp::{ComparisonOp, OptimizationDirection, Problem};

    let Some(mut reduced) = presolve(lp) else {
        return Ok(LpSolution::without_values(LpStatus::Infeasible));
    };
    let direction = match lp.sense {
        Sense::Minimize => OptimizationDirection::Minimize,
        Sense::Maximize => OptimizationDirection::Maximize,
    };
    let n = lp.variables.len();
    let mut cost = vec![0.0; n];
    for &(v, c) in &lp.objective {
        cost[reduced.rep[v.0]] += c;
    }
    for (twin, col) in merge_symmetric_rows(&mut reduced.rows, &mut cost, &reduced.bounds) {
        reduced.rep[twin] = col;
    }
    for v in 0..n {
        reduced.rep[v] = find(&mut reduced.rep, v);
    }
    let mut problem = Problem::new(direction);
    let mut vars = Vec::with_capacity(n);
    for v in 0..n {
        vars.push((reduced.rep[v] == v).then(|| problem.add_var(cost[v], reduced.bounds[v])));
    }
    for (terms, rel, rhs) in &reduced.rows {
        let expr: Vec<_> = terms
            .iter()
            .map(|&(v, a)| (vars[v.0].expect("rows use representatives"), a))
            .collect();
        let op = match rel {
            Relation::Le => ComparisonOp::Le,
            Relation::Ge => ComparisonOp::Ge,
            Relation::Eq => ComparisonOp::Eq,
        };
        problem.add_constraint(expr.as_slice(), op, *rhs);
    }
    match problem.solve() {
        Ok(outcome) => {
            let solution = outcome
                .into_solution()
                .map_err(|_| LpError::Solver("solve interrupted".into()))?;
            let values: Vec<f64> = (0..n)
                .map(|v| solution.var_value(vars[reduced.rep[v]].expect("representative has a column")))
                .collect();
            Ok(LpSolution {
                objective_value: lp.objective_value(&values),
                values,
                status: LpStatus::Optimal,
            })
        }
        Err(microlp::Error::Infeasible) => Ok(LpSolution::without_values(LpStatus::Infeasible)),
        Err(microlp::Error::Unbounded) => Ok(LpSolution::without_values(LpStatus::Unbounded)),
        Err(e) => Err(LpError::Solver(e.to_string())),
    }
}

fn flip(rel: Relation) -> Relation {
    match rel {
        Relation::Le => Relation::Ge,
        Relation::Ge => Relation::Le,
        Relation::Eq => Relation::Eq,
    }
}
