//! Dense two-phase simplex with shadow prices.
//!
//! Problems are `min cᵀx` subject to `aᵢᵀx {≤,≥,=} bᵢ` and `l ≤ x ≤ u`.
//! Lower bounds must be finite; upper bounds are optional. Variables are
//! shifted to `y = x − l ≥ 0` and finite upper bounds become extra rows, so
//! the tableau only ever sees nonnegative variables.
//!
//! Pivoting uses Dantzig's rule with lowest-index tie breaking and falls back
//! to Bland's rule after a run of degenerate pivots, so a given input always
//! follows the same pivot sequence.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint<T> {
    pub coeffs: Vec<T>,
    pub relation: Relation,
    pub rhs: T,
}

impl<T: Scalar> Constraint<T> {
    pub fn new(coeffs: Vec<T>, relation: Relation, rhs: T) -> Self {
        Self {
            coeffs,
            relation,
            rhs,
        }
    }

    pub fn activity(&self, x: &[T]) -> T {
        self.coeffs.iter().zip(x).map(|(&a, &v)| a * v).sum()
    }
}

#[derive(Debug, Clone)]
pub struct LinearProgram<T> {
    /// Minimized.
    pub objective: Vec<T>,
    pub constraints: Vec<Constraint<T>>,
    pub lower: Vec<T>,
    pub upper: Vec<Option<T>>,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    /// Shadow price `∂objective/∂rhs` of every constraint, in input order.
    pub duals: Vec<T>,
    /// Shadow price of every finite upper bound (zero when absent or slack).
    pub bound_duals: Vec<T>,
    /// Some basic variable sits at zero: the reported duals are one of
    /// several optimal dual solutions.
    pub degenerate: bool,
    pub iterations: usize,
}

impl<T: Scalar> LinearProgram<T> {
    /// Nonnegative variables with no upper bounds.
    pub fn new(objective: Vec<T>) -> Self {
        let n = objective.len();
        Self {
            objective,
            constraints: Vec::new(),
            lower: vec![T::zero(); n],
            upper: vec![None; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn with_bounds(mut self, lower: Vec<T>, upper: Vec<Option<T>>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn push(&mut self, coeffs: Vec<T>, relation: Relation, rhs: T) -> usize {
        self.constraints.push(Constraint::new(coeffs, relation, rhs));
        self.constraints.len() - 1
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension(format!(
                "{n} variables but {} lower / {} upper bounds",
                self.lower.len(),
                self.upper.len()
            )));
        }
        let finite = |x: &T| x.is_finite();
        if !self.objective.iter().all(finite) || !self.lower.iter().all(finite) {
            return Err(Error::Dimension("non-finite objective or lower bound".into()));
        }
        for (j, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if let Some(u) = u {
                if !u.is_finite() || *u < *l {
                    return Err(Error::Dimension(format!("bad bounds on variable {j}")));
                }
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n || !c.coeffs.iter().all(finite) || !c.rhs.is_finite() {
                return Err(Error::Dimension(format!("malformed constraint row {i}")));
            }
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpSolution<T>> {
        self.validate()?;
        Tableau::build(self).run(self)
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for c in &self.constraints {
            let lhs = c.activity(x);
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v);
            if let Some(u) = self.upper[j] {
                worst = worst.max(v - u);
            }
        }
        worst
    }

    /// Dual objective value implied by a set of shadow prices; equals the
    /// primal optimum at an optimal basis.
    pub fn dual_objective(&self, sol: &LpSolution<T>) -> T {
        // Reduced costs left over after pricing out rows and upper bounds are
        // charged to the lower bounds.
        let n = self.num_vars();
        let mut value = T::zero();
        for (c, &y) in self.constraints.iter().zip(&sol.duals) {
            value += y * c.rhs;
        }
        for j in 0..n {
            let mut reduced = self.objective[j];
            for (c, &y) in self.constraints.iter().zip(&sol.duals) {
                reduced -= y * c.coeffs[j];
            }
            if let Some(u) = self.upper[j] {
                value += sol.bound_duals[j] * u;
                reduced -= sol.bound_duals[j];
            }
            value += reduced * self.lower[j];
        }
        value
    }

    /// Plain-text tableau-style listing used for debug dumps.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let fmt_row = |row: &[T]| {
            row.iter()
                .map(|v| format!("{:>12.6}", v.as_f64()))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(s, "min  {}", fmt_row(&self.objective));
        for (i, c) in self.constraints.iter().enumerate() {
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "==",
            };
            let _ = writeln!(s, "r{i:<3} {} {rel} {:.6}", fmt_row(&c.coeffs), c.rhs.as_f64());
        }
        for j in 0..self.num_vars() {
            let up = self.upper[j].map_or("inf".to_string(), |u| format!("{:.6}", u.as_f64()));
            let _ = writeln!(s, "x{j:<3} in [{:.6}, {up}]", self.lower[j].as_f64());
        }
        s
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

struct Tableau<T> {
    /// `rows × (cols + 1)`, last column is the right-hand side.
    a: Vec<Vec<T>>,
    basis: Vec<usize>,
    kinds: Vec<ColKind>,
    /// Column holding `+e_i` for row `i` (slack or artificial).
    unit_col: Vec<usize>,
    /// Row was negated to make its rhs nonnegative.
    flipped: Vec<bool>,
    n_struct: usize,
    n_user_rows: usize,
    /// Variable index of each upper-bound row.
    bound_row_var: Vec<usize>,
    iterations: usize,
    max_iterations: usize,
    tol: T,
}

impl<T: Scalar> Tableau<T> {
    fn build(lp: &LinearProgram<T>) -> Self {
        let n = lp.num_vars();
        let mut rows: Vec<(Vec<T>, Relation, T)> = Vec::new();
        for c in &lp.constraints {
            let shift: T = c.coeffs.iter().zip(&lp.lower).map(|(&a, &l)| a * l).sum();
            rows.push((c.coeffs.clone(), c.relation, c.rhs - shift));
        }
        let mut bound_row_var = Vec::new();
        for j in 0..n {
            if let Some(u) = lp.upper[j] {
                let mut coeffs = vec![T::zero(); n];
                coeffs[j] = T::one();
                rows.push((coeffs, Relation::Le, u - lp.lower[j]));
                bound_row_var.push(j);
            }
        }
        let m = rows.len();
        let mut flipped = vec![false; m];
        for (i, row) in rows.iter_mut().enumerate() {
            if row.2 < T::zero() {
                flipped[i] = true;
                row.0.iter_mut().for_each(|v| *v = -*v);
                row.2 = -row.2;
                row.1 = match row.1 {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }

        let mut kinds = vec![ColKind::Structural; n];
        let mut slack_of = vec![None; m];
        let mut art_of = vec![None; m];
        for (i, row) in rows.iter().enumerate() {
            if row.1 != Relation::Eq {
                slack_of[i] = Some(kinds.len());
                kinds.push(ColKind::Slack);
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.1 != Relation::Le {
                art_of[i] = Some(kinds.len());
                kinds.push(ColKind::Artificial);
            }
        }
        let cols = kinds.len();
        let mut a = vec![vec![T::zero(); cols + 1]; m];
        let mut basis = vec![0; m];
        let mut unit_col = vec![0; m];
        for (i, (coeffs, rel, rhs)) in rows.into_iter().enumerate() {
            a[i][..n].copy_from_slice(&coeffs);
            a[i][cols] = rhs;
            if let Some(s) = slack_of[i] {
                a[i][s] = if rel == Relation::Ge { -T::one() } else { T::one() };
            }
            match art_of[i] {
                Some(c) => {
                    a[i][c] = T::one();
                    basis[i] = c;
                    unit_col[i] = c;
                }
                None => {
                    let s = slack_of[i].expect("le row has slack");
                    basis[i] = s;
                    unit_col[i] = s;
                }
            }
        }
        Self {
            a,
            basis,
            kinds,
            unit_col,
            flipped,
            n_struct: n,
            n_user_rows: lp.constraints.len(),
            bound_row_var,
            iterations: 0,
            max_iterations: 50_000 + 100 * (m + cols),
            tol: T::tolerance(),
        }
    }

    fn cols(&self) -> usize {
        self.kinds.len()
    }

    fn reduced_costs(&self, costs: &[T]) -> Vec<T> {
        let cols = self.cols();
        let mut d: Vec<T> = costs.to_vec();
        d.push(T::zero());
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = costs[b];
            if cb != T::zero() {
                for (dj, &aij) in d.iter_mut().zip(&self.a[i]) {
                    *dj -= cb * aij;
                }
            }
        }
        debug_assert_eq!(d.len(), cols + 1);
        d
    }

    fn pivot(&mut self, d: &mut [T], row: usize, col: usize) {
        let p = self.a[row][col];
        for v in self.a[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[row].clone();
        for (i, r) in self.a.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != T::zero() {
                for (v, &pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                r[col] = T::zero();
            }
        }
        let f = d[col];
        if f != T::zero() {
            for (v, &pv) in d.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            d[col] = T::zero();
        }
        self.basis[row] = col;
        self.iterations += 1;
    }

    /// Runs simplex iterations on the reduced-cost row `d`. Artificial columns
    /// may leave but never enter once `allow_artificial` is false.
    fn optimize(&mut self, d: &mut [T], allow_artificial: bool) -> Result<()> {
        let cols = self.cols();
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::IterationLimit(self.max_iterations));
            }
            let bland = degenerate_run > 50;
            let eligible = |j: usize| allow_artificial || self.kinds[j] != ColKind::Artificial;
            let mut enter = None;
            let mut best = -self.tol;
            for j in 0..cols {
                if !eligible(j) || d[j] >= -self.tol {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if d[j] < best {
                    best = d[j];
                    enter = Some(j);
                }
            }
            let Some(col) = enter else {
                return Ok(());
            };
            let mut leave: Option<(usize, T)> = None;
            for (i, r) in self.a.iter().enumerate() {
                let aij = r[col];
                if aij > self.tol {
                    let ratio = r[cols] / aij;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - self.tol
                                || (ratio <= lr + self.tol && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((row, ratio)) = leave else {
                return Err(Error::Unbounded);
            };
            if ratio <= self.tol {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(d, row, col);
        }
    }

    fn run(mut self, lp: &LinearProgram<T>) -> Result<LpSolution<T>> {
        let cols = self.cols();
        let has_artificial = self.kinds.contains(&ColKind::Artificial);
        if has_artificial {
            let phase1: Vec<T> = self
                .kinds
                .iter()
                .map(|k| if *k == ColKind::Artificial { T::one() } else { T::zero() })
                .collect();
            let mut d = self.reduced_costs(&phase1);
            self.optimize(&mut d, true)?;
            let infeasibility: T = self
                .basis
                .iter()
                .enumerate()
                .filter(|(_, &b)| self.kinds[b] == ColKind::Artificial)
                .map(|(i, _)| self.a[i][cols])
                .sum();
            let scale = T::one()
                + self
                    .a
                    .iter()
                    .fold(T::zero(), |acc, r| acc.max(r[cols].abs()));
            if infeasibility > self.tol.sqrt() * scale {
                return Err(Error::Infeasible);
            }
            // Drive zero-valued artificials out of the basis where a
            // non-artificial pivot exists; rows without one are redundant.
            for i in 0..self.basis.len() {
                if self.kinds[self.basis[i]] != ColKind::Artificial {
                    continue;
                }
                let col = (0..cols).find(|&j| {
                    self.kinds[j] != ColKind::Artificial && self.a[i][j].abs() > self.tol.sqrt()
                });
                if let Some(col) = col {
                    self.pivot(&mut d, i, col);
                }
            }
        }

        let mut costs = vec![T::zero(); cols];
        costs[..self.n_struct].copy_from_slice(&lp.objective);
        let mut d = self.reduced_costs(&costs);
        self.optimize(&mut d, false)?;

        let n = self.n_struct;
        let mut y = vec![T::zero(); n];
        let mut degenerate = false;
        for (i, &b) in self.basis.iter().enumerate() {
            let v = self.a[i][cols];
            if b < n {
                y[b] = v;
            }
            if v.abs() <= self.tol * T::lit(10.0) {
                degenerate = true;
            }
        }
        let x: Vec<T> = y.iter().zip(&lp.lower).map(|(&v, &l)| v + l).collect();
        let objective: T = x.iter().zip(&lp.objective).map(|(&v, &c)| v * c).sum();

        let row_dual = |i: usize| {
            let dual = -d[self.unit_col[i]];
            if self.flipped[i] {
                -dual
            } else {
                dual
            }
        };
        let duals = (0..self.n_user_rows).map(row_dual).collect();
        let mut bound_duals = vec![T::zero(); n];
        for (k, &j) in self.bound_row_var.iter().enumerate() {
            bound_duals[j] = row_dual(self.n_user_rows + k);
        }
        Ok(LpSolution {
            x,
            objective,
            duals,
            bound_duals,
            degenerate,
            iterations: self.iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_variable_lower_bound_row() {
        // min x s.t. x >= 3
        let mut lp = LinearProgram::<f64>::new(vec![1.0]);
        lp.push(vec![1.0], Relation::Ge, 3.0);
        let sol = lp.solve().unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-12);
        assert!((sol.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded_are_reported() {
        let mut lp = LinearProgram::<f64>::new(vec![1.0]);
        lp.push(vec![1.0], Relation::Le, 1.0);
        lp.push(vec![1.0], Relation::Ge, 2.0);
        assert!(matches!(lp.solve(), Err(Error::Infeasible)));

        let mut lp = LinearProgram::<f64>::new(vec![-1.0, 0.0]);
        lp.push(vec![1.0, -1.0], Relation::Le, 1.0);
        assert!(matches!(lp.solve(), Err(Error::Unbounded)));
    }

    #[test]
    fn bounded_variables_and_equality() {
        // min 10 a + 20 b, a + b = 150, a in [0,100], b in [0,100]
        let mut lp = LinearProgram::<f64>::new(vec![10.0, 20.0])
            .with_bounds(vec![0.0, 0.0], vec![Some(100.0), Some(100.0)]);
        lp.push(vec![1.0, 1.0], Relation::Eq, 150.0);
        let sol = lp.solve().unwrap();
        assert!((sol.x[0] - 100.0).abs() < 1e-9 && (sol.x[1] - 50.0).abs() < 1e-9);
        assert!((sol.duals[0] - 20.0).abs() < 1e-9);
        assert!((sol.bound_duals[0] + 10.0).abs() < 1e-9);
        assert!((sol.objective - lp.dual_objective(&sol)).abs() < 1e-9);
    }

    #[test]
    fn nonzero_lower_bounds_shift_correctly() {
        // min x + y, x + y >= 1, x in [-5, 5], y in [2, 3]
        let mut lp = LinearProgram::<f64>::new(vec![1.0, 1.0])
            .with_bounds(vec![-5.0, 2.0], vec![Some(5.0), Some(3.0)]);
        lp.push(vec![1.0, 1.0], Relation::Ge, 1.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!(lp.max_violation(&sol.x) < 1e-9);
        assert!((sol.objective - lp.dual_objective(&sol)).abs() < 1e-9);
    }

    #[test]
    fn degenerate_lp_keeps_strong_duality() {
        // Two optimal bases: the constraint x + y <= 1 and x <= 1 meet at the optimum.
        let mut lp = LinearProgram::<f64>::new(vec![-1.0, 0.0]);
        lp.push(vec![1.0, 1.0], Relation::Le, 1.0);
        lp.push(vec![1.0, 0.0], Relation::Le, 1.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective + 1.0).abs() < 1e-12);
        assert!(sol.degenerate);
        assert!((sol.objective - lp.dual_objective(&sol)).abs() < 1e-9);
    }

    #[test]
    fn repeated_solves_are_bit_identical() {
        let mut lp = LinearProgram::<f64>::new(vec![3.0, 1.0, 2.0]);
        lp.push(vec![1.0, 1.0, 1.0], Relation::Ge, 4.0);
        lp.push(vec![1.0, -1.0, 0.0], Relation::Le, 1.0);
        lp.push(vec![0.0, 1.0, 1.0], Relation::Le, 3.0);
        let a = lp.solve().unwrap();
        let b = lp.solve().unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.duals, b.duals);
    }
}
