//! Small dense linear programs via two-phase simplex.
//!
//! Problems here are tiny (a few dozen variables at most): minimax
//! strategies, correlated-equilibrium feasibility, and the TV primal
//! oracle. All variables are nonnegative.

const PIVOT_EPS: f64 = 1e-9;
const FEAS_EPS: f64 = 1e-7;

/// minimize `c . x`  subject to  `eq: A x = b`, `le: A x <= b`, `x >= 0`.
#[derive(Debug, Clone, Default)]
pub struct Lp {
    pub num_vars: usize,
    pub minimize: Vec<f64>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub le: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpResult {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
    /// Pivot limit hit without convergence.
    Stalled,
}

impl Lp {
    pub fn new(num_vars: usize, minimize: Vec<f64>) -> Self {
        assert_eq!(minimize.len(), num_vars);
        Lp {
            num_vars,
            minimize,
            eq: Vec::new(),
            le: Vec::new(),
        }
    }

    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars);
        self.eq.push((coeffs, rhs));
    }

    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars);
        self.le.push((coeffs, rhs));
    }

    pub fn solve(&self) -> LpResult {
        Tableau::build(self).solve(&self.minimize)
    }
}

struct Tableau {
    /// rows[i] has `ncols + 1` entries, the last being the rhs.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    num_vars: usize,
    num_slack: usize,
    num_art: usize,
}

impl Tableau {
    fn build(lp: &Lp) -> Tableau {
        let n = lp.num_vars;
        let m = lp.le.len() + lp.eq.len();
        let num_slack = lp.le.len();
        // Worst case every row needs an artificial.
        let ncols = n + num_slack + m;
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut basis = vec![usize::MAX; m];
        let mut num_art = 0;

        for (k, (coeffs, rhs)) in lp.le.iter().enumerate() {
            let mut row = vec![0.0; ncols + 1];
            let neg = *rhs < 0.0;
            let sign = if neg { -1.0 } else { 1.0 };
            for (j, c) in coeffs.iter().enumerate() {
                row[j] = sign * c;
            }
            row[n + k] = sign; // slack
            row[ncols] = sign * rhs;
            let i = rows.len();
            if neg {
                let art = n + num_slack + num_art;
                row[art] = 1.0;
                basis[i] = art;
                num_art += 1;
            } else {
                basis[i] = n + k;
            }
            rows.push(row);
        }
        for (coeffs, rhs) in &lp.eq {
            let mut row = vec![0.0; ncols + 1];
            let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
            for (j, c) in coeffs.iter().enumerate() {
                row[j] = sign * c;
            }
            row[ncols] = sign * rhs;
            let i = rows.len();
            let art = n + num_slack + num_art;
            row[art] = 1.0;
            basis[i] = art;
            num_art += 1;
            rows.push(row);
        }
        // Trim unused artificial columns.
        let used = n + num_slack + num_art;
        for row in &mut rows {
            let rhs = row[ncols];
            row.truncate(used);
            row.push(rhs);
        }
        Tableau {
            rows,
            basis,
            num_vars: n,
            num_slack,
            num_art,
        }
    }

    fn ncols(&self) -> usize {
        self.num_vars + self.num_slack + self.num_art
    }

    fn art_start(&self) -> usize {
        self.num_vars + self.num_slack
    }

    /// Runs simplex iterations on `cost` (a reduced-cost row of length
    /// ncols+1) over columns `0..limit`. Returns false on unboundedness.
    fn pivot_loop(&mut self, cost: &mut [f64], limit: usize) -> Option<bool> {
        let ncols = self.ncols();
        let max_iter = 200 * (self.rows.len() + ncols + 1);
        let bland_after = max_iter / 2;
        for iter in 0..max_iter {
            // Entering column.
            let mut enter = None;
            if iter < bland_after {
                let mut best = -PIVOT_EPS;
                for j in 0..limit {
                    if cost[j] < best {
                        best = cost[j];
                        enter = Some(j);
                    }
                }
            } else {
                for j in 0..limit {
                    if cost[j] < -PIVOT_EPS {
                        enter = Some(j);
                        break;
                    }
                }
            }
            let Some(enter) = enter else {
                return Some(true);
            };
            // Ratio test.
            let mut leave = None;
            let mut best_ratio = f64::INFINITY;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a > PIVOT_EPS {
                    let ratio = row[ncols] / a;
                    let better = ratio < best_ratio - PIVOT_EPS
                        || (ratio < best_ratio + PIVOT_EPS
                            && leave.is_some_and(|l: usize| self.basis[i] < self.basis[l]));
                    if better {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(leave) = leave else {
                return Some(false); // unbounded
            };
            self.pivot(leave, enter, cost);
        }
        None // stalled
    }

    fn pivot(&mut self, leave: usize, enter: usize, cost: &mut [f64]) {
        let ncols = self.ncols();
        let piv = self.rows[leave][enter];
        for v in self.rows[leave].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[leave].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == leave {
                continue;
            }
            let f = row[enter];
            if f != 0.0 {
                for j in 0..=ncols {
                    row[j] -= f * pivot_row[j];
                }
            }
        }
        let f = cost[enter];
        if f != 0.0 {
            for j in 0..=ncols {
                cost[j] -= f * pivot_row[j];
            }
        }
        self.basis[leave] = enter;
    }

    fn solve(mut self, minimize: &[f64]) -> LpResult {
        let ncols = self.ncols();
        let art_start = self.art_start();

        // Phase 1: minimize the sum of artificials.
        if self.num_art > 0 {
            let mut cost = vec![0.0; ncols + 1];
            for j in art_start..ncols {
                cost[j] = 1.0;
            }
            for (i, &b) in self.basis.iter().enumerate() {
                if b >= art_start {
                    for j in 0..=ncols {
                        cost[j] -= self.rows[i][j];
                    }
                }
            }
            match self.pivot_loop(&mut cost, ncols) {
                Some(true) => {}
                Some(false) => return LpResult::Infeasible,
                None => return LpResult::Stalled,
            }
            if -cost[ncols] > FEAS_EPS {
                return LpResult::Infeasible;
            }
            // Drive residual artificials out of the basis.
            for i in 0..self.rows.len() {
                if self.basis[i] >= art_start {
                    let mut found = None;
                    for j in 0..art_start {
                        if self.rows[i][j].abs() > PIVOT_EPS {
                            found = Some(j);
                            break;
                        }
                    }
                    if let Some(j) = found {
                        let mut dummy = vec![0.0; ncols + 1];
                        self.pivot(i, j, &mut dummy);
                    }
                    // Otherwise the row is redundant; its basic artificial
                    // sits at zero and never re-enters (phase 2 limits
                    // entering columns to the structural range).
                }
            }
        }

        // Phase 2.
        let mut cost = vec![0.0; ncols + 1];
        cost[..self.num_vars].copy_from_slice(minimize);
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.num_vars && minimize[b] != 0.0 {
                let f = minimize[b];
                for j in 0..=ncols {
                    cost[j] -= f * self.rows[i][j];
                }
            }
        }
        match self.pivot_loop(&mut cost, art_start) {
            Some(true) => {}
            Some(false) => return LpResult::Unbounded,
            None => return LpResult::Stalled,
        }

        let mut x = vec![0.0; self.num_vars];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.num_vars {
                x[b] = self.rows[i][ncols];
            }
        }
        let value = minimize.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpResult::Optimal { x, value }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(r: LpResult) -> (Vec<f64>, f64) {
        match r {
            LpResult::Optimal { x, value } => (x, value),
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn simple_min() {
        // min x0 + 2 x1 s.t. x0 + x1 = 1
        let mut lp = Lp::new(2, vec![1.0, 2.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        let (x, v) = optimal(lp.solve());
        assert!((v - 1.0).abs() < 1e-10);
        assert!((x[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn with_inequalities() {
        // min -x0 - x1 s.t. x0 + 2 x1 <= 4, 3 x0 + x1 <= 6
        let mut lp = Lp::new(2, vec![-1.0, -1.0]);
        lp.add_le(vec![1.0, 2.0], 4.0);
        lp.add_le(vec![3.0, 1.0], 6.0);
        // Optimum at the constraint intersection (1.6, 1.2).
        let (x, v) = optimal(lp.solve());
        assert!((v + 2.8).abs() < 1e-9, "v={v} x={x:?}");
        assert!((x[0] - 1.6).abs() < 1e-9 && (x[1] - 1.2).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs() {
        // min x0 s.t. -x0 <= -2  (i.e. x0 >= 2)
        let mut lp = Lp::new(1, vec![1.0]);
        lp.add_le(vec![-1.0], -2.0);
        let (_, v) = optimal(lp.solve());
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible() {
        let mut lp = Lp::new(1, vec![1.0]);
        lp.add_eq(vec![1.0], 1.0);
        lp.add_le(vec![1.0], 0.5);
        assert_eq!(lp.solve(), LpResult::Infeasible);
    }

    #[test]
    fn unbounded() {
        let mut lp = Lp::new(2, vec![-1.0, 0.0]);
        lp.add_le(vec![0.0, 1.0], 1.0);
        assert_eq!(lp.solve(), LpResult::Unbounded);
    }

    #[test]
    fn degenerate_equalities() {
        // Redundant constraint should not break phase 1.
        let mut lp = Lp::new(2, vec![1.0, 1.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        lp.add_eq(vec![2.0, 2.0], 2.0);
        let (_, v) = optimal(lp.solve());
        assert!((v - 1.0).abs() < 1e-9);
    }
}
