//! Dense two-phase primal simplex on bounded variables with Bland's rule.
//!
//! Every variable needs a finite lower bound; upper bounds may be infinite.
//! Variables are shifted to `[0, upper - lower]`, each row gets a slack
//! (inequalities) and an artificial variable, phase one drives the
//! artificials to zero and phase two optimizes the real objective with the
//! artificials pinned at zero. Nonbasic variables sit at either bound.
//!
//! Tableau cost is `O(rows * columns)` per pivot, which is fine for the
//! small programs this is used on (the exact world-distribution oracle and
//! cross-checks of the sparse backend).

use crate::lp::{LinearProgram, LpError, LpSolution, LpStatus, Relation, Sense};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const PHASE_ONE_TOL: f64 = 1e-7;

struct Tableau {
    /// `rows x cols`, row-major.
    a: Vec<f64>,
    rows: usize,
    cols: usize,
    /// Values of the basic variables.
    beta: Vec<f64>,
    basis: Vec<usize>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    /// Reduced costs.
    d: Vec<f64>,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    fn set_costs(&mut self, cost: &[f64]) {
        self.d = cost.to_vec();
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.a[i * self.cols..(i + 1) * self.cols];
                for (dj, &aij) in self.d.iter_mut().zip(row) {
                    *dj -= cb * aij;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let p = self.at(r, j);
        for x in &mut self.a[r * cols..(r + 1) * cols] {
            *x /= p;
        }
        let pivot_row: Vec<f64> = self.a[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.at(i, j);
            if f != 0.0 {
                let row = &mut self.a[i * cols..(i + 1) * cols];
                for (x, &pr) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * pr;
                }
                row[j] = 0.0;
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for (x, &pr) in self.d.iter_mut().zip(&pivot_row) {
                *x -= f * pr;
            }
            self.d[j] = 0.0;
        }
        self.basis[r] = j;
    }

    /// Minimizes the current reduced-cost row.
    fn optimize(&mut self, max_iters: usize) -> Result<Outcome, LpError> {
        let mut is_basic = vec![false; self.cols];
        for &b in &self.basis {
            is_basic[b] = true;
        }
        for _ in 0..max_iters {
            // Bland: lowest-index improving column.
            let entering = (0..self.cols).find(|&j| {
                !is_basic[j]
                    && self.upper[j] > 0.0
                    && ((!self.at_upper[j] && self.d[j] < -COST_TOL)
                        || (self.at_upper[j] && self.d[j] > COST_TOL))
            });
            let Some(j) = entering else {
                return Ok(Outcome::Optimal);
            };
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };

            // Ratio test; ties go to the lowest basic variable index.
            let mut step = self.upper[j];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..self.rows {
                let alpha = self.at(i, j) * dir;
                let b = self.basis[i];
                let (limit, to_upper) = if alpha > PIVOT_TOL {
                    (self.beta[i].max(0.0) / alpha, false)
                } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                    ((self.upper[b] - self.beta[i]).max(0.0) / -alpha, true)
                } else {
                    continue;
                };
                // On a tie with the entering variable's own bound, flip instead.
                let take = match leave {
                    None => limit < step,
                    Some((r, _)) => limit < step || (limit == step && b < self.basis[r]),
                };
                if take {
                    step = limit;
                    leave = Some((i, to_upper));
                }
            }
            if step.is_infinite() {
                return Ok(Outcome::Unbounded);
            }
            for i in 0..self.rows {
                let alpha = self.at(i, j) * dir;
                self.beta[i] -= alpha * step;
            }
            match leave {
                None => {
                    // Bound flip, basis unchanged.
                    self.at_upper[j] = !self.at_upper[j];
                }
                Some((r, to_upper)) => {
                    let leaving = self.basis[r];
                    let entering_value = if self.at_upper[j] { self.upper[j] - step } else { step };
                    self.pivot(r, j);
                    self.beta[r] = entering_value;
                    self.at_upper[leaving] = to_upper;
                    self.at_upper[j] = false;
                    is_basic[leaving] = false;
                    is_basic[j] = true;
                }
            }
        }
        Err(LpError::Solver("simplex iteration limit reached".into()))
    }

    fn column_values(&self) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.cols)
            .map(|j| if self.at_upper[j] { self.upper[j] } else { 0.0 })
            .collect();
        for (i, &b) in self.basis.iter().enumerate() {
            x[b] = self.beta[i];
        }
        x
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.num_vars();
    for var in lp.variables() {
        if !var.lower.is_finite() {
            return Err(LpError::FreeVariable(var.name.clone()));
        }
    }
    if lp.variables().iter().any(|v| v.upper < v.lower) {
        return Ok(infeasible());
    }
    let cons = lp.constraints();
    let m = cons.len();
    let n_slack = cons.iter().filter(|c| c.relation != Relation::Eq).count();
    let cols = n + n_slack + m;
    let art0 = n + n_slack;

    let mut a = vec![0.0; m * cols];
    let mut beta = vec![0.0; m];
    let mut upper = vec![f64::INFINITY; cols];
    for (j, var) in lp.variables().iter().enumerate() {
        upper[j] = var.upper - var.lower;
    }
    let mut slack = n;
    for (i, c) in cons.iter().enumerate() {
        let row = &mut a[i * cols..(i + 1) * cols];
        let mut rhs = c.rhs;
        for &(v, coef) in &c.terms {
            row[v.0] += coef;
            rhs -= coef * lp.variables()[v.0].lower;
        }
        match c.relation {
            Relation::Le => {
                row[slack] = 1.0;
                slack += 1;
            }
            Relation::Ge => {
                row[slack] = -1.0;
                slack += 1;
            }
            Relation::Eq => {}
        }
        if rhs < 0.0 {
            for x in row.iter_mut() {
                *x = -*x;
            }
            rhs = -rhs;
        }
        row[art0 + i] = 1.0;
        beta[i] = rhs;
    }

    let mut t = Tableau {
        a,
        rows: m,
        cols,
        beta,
        basis: (art0..art0 + m).collect(),
        upper,
        at_upper: vec![false; cols],
        d: Vec::new(),
    };
    let max_iters = 200 * (cols + m) + 10_000;

    let mut phase_one = vec![0.0; cols];
    for c in &mut phase_one[art0..] {
        *c = 1.0;
    }
    t.set_costs(&phase_one);
    t.optimize(max_iters)?;
    let infeasibility: f64 = t.column_values()[art0..].iter().sum();
    let scale = 1.0 + cons.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
    if infeasibility > PHASE_ONE_TOL * scale {
        return Ok(infeasible());
    }
    for j in art0..cols {
        t.upper[j] = 0.0;
        t.at_upper[j] = false;
    }
    for (i, &b) in t.basis.iter().enumerate() {
        if b >= art0 {
            t.beta[i] = 0.0;
        }
    }

    let sign = match lp.sense() {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost = vec![0.0; cols];
    for &(v, c) in lp.objective() {
        cost[v.0] += sign * c;
    }
    t.set_costs(&cost);
    if let Outcome::Unbounded = t.optimize(max_iters)? {
        return Ok(LpSolution {
            values: Vec::new(),
            objective_value: f64::NAN,
            status: LpStatus::Unbounded,
        });
    }
    let y = t.column_values();
    let values: Vec<f64> = lp
        .variables()
        .iter()
        .zip(&y)
        .map(|(var, &yj)| (var.lower + yj).clamp(var.lower, var.upper))
        .collect();
    Ok(LpSolution {
        objective_value: lp.objective_value(&values),
        values,
        status: LpStatus::Optimal,
    })
}

fn infeasible() -> LpSolution {
    LpSolution {
        values: Vec::new(),
        objective_value: f64::NAN,
        status: LpStatus::Infeasible,
    }
}
