//! Dense linear programming.
//!
//! Problems are stated over free variables with explicit linear constraints.
//! The abstraction LPs this crate produces have a handful of variables and
//! hundreds of constraints, so the solver works on the dual in standard form
//!
//! ```text
//!   min h'λ   s.t.  G'λ = -c,  λ >= 0
//! ```
//!
//! with a two-phase tableau simplex, and reads the primal point off the
//! optimal simplex multipliers. Pricing is Dantzig's rule; after a run of
//! degenerate pivots it switches to Bland's rule, which cannot cycle.

use crate::error::{Result, SmioError};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const PHASE1_TOL: f64 = 1e-9;
const MAX_ITERS: usize = 200_000;
const DEGENERATE_RUN_BEFORE_BLAND: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// `coeffs · x (relation) rhs`
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            relation: Relation::Le,
            rhs,
        }
    }

    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            relation: Relation::Ge,
            rhs,
        }
    }

    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self {
            coeffs,
            relation: Relation::Eq,
            rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Minimize `objective · x` over free `x` subject to `constraints`.
pub fn solve_lp(objective: &[f64], constraints: &[Constraint]) -> Result<LpSolution> {
    let n = objective.len();
    let mut rows = Vec::with_capacity(constraints.len() * n);
    let mut rhs = Vec::with_capacity(constraints.len());
    let mut origin = Vec::with_capacity(constraints.len());
    for (idx, c) in constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(SmioError::DimensionMismatch {
                expected: n,
                got: c.coeffs.len(),
                context: "constraint coefficients",
            });
        }
        match c.relation {
            Relation::Le => {
                rows.extend_from_slice(&c.coeffs);
                rhs.push(c.rhs);
                origin.push(idx);
            }
            Relation::Ge => {
                rows.extend(c.coeffs.iter().map(|v| -v));
                rhs.push(-c.rhs);
                origin.push(idx);
            }
            Relation::Eq => {
                rows.extend_from_slice(&c.coeffs);
                rhs.push(c.rhs);
                origin.push(idx);
                rows.extend(c.coeffs.iter().map(|v| -v));
                rhs.push(-c.rhs);
                origin.push(idx);
            }
        }
    }
    solve_le(objective, &rows, &rhs).map_err(|e| match e {
        SmioError::Infeasible { constraint } => SmioError::Infeasible {
            constraint: origin[constraint],
        },
        other => other,
    })
}

/// Minimize `c · x` subject to `G x <= h`, with `G` given row-major
/// (`h.len()` rows of `c.len()` entries).
pub fn solve_le(c: &[f64], g_rows: &[f64], h: &[f64]) -> Result<LpSolution> {
    let n = c.len();
    let m = h.len();
    if g_rows.len() != n * m {
        return Err(SmioError::DimensionMismatch {
            expected: n * m,
            got: g_rows.len(),
            context: "constraint matrix",
        });
    }
    if c.iter().chain(g_rows).chain(h).any(|v| !v.is_finite()) {
        return Err(SmioError::InvalidInput("non-finite LP data".into()));
    }
    if n == 0 {
        return match h.iter().position(|v| *v < 0.0) {
            Some(i) => Err(SmioError::Infeasible { constraint: i }),
            None => Ok(LpSolution {
                x: vec![],
                objective: 0.0,
                iterations: 0,
            }),
        };
    }

    match DualTableau::solve(c, g_rows, h)? {
        DualOutcome::Optimal { x, iterations } => {
            let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
            Ok(LpSolution {
                x,
                objective,
                iterations,
            })
        }
        DualOutcome::DualUnbounded { ray_constraint } => Err(SmioError::Infeasible {
            constraint: ray_constraint,
        }),
        DualOutcome::DualInfeasible => {
            // Either the primal is unbounded or infeasible; a zero objective
            // separates the two cases.
            let zero = vec![0.0; n];
            match DualTableau::solve(&zero, g_rows, h)? {
                DualOutcome::DualUnbounded { ray_constraint } => Err(SmioError::Infeasible {
                    constraint: ray_constraint,
                }),
                _ => Err(SmioError::Unbounded),
            }
        }
    }
}

enum DualOutcome {
    Optimal { x: Vec<f64>, iterations: usize },
    DualUnbounded { ray_constraint: usize },
    DualInfeasible,
}

/// Standard-form tableau for `min h'λ, M λ = b, λ >= 0` with
/// `M = S G'` and `b = -S c >= 0` (S flips row signs).
struct DualTableau {
    rows: usize,
    structural: usize,
    width: usize,
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

impl DualTableau {
    fn solve(c: &[f64], g_rows: &[f64], h: &[f64]) -> Result<DualOutcome> {
        let rows = c.len();
        let structural = h.len();
        let width = structural + rows + 1;
        let rhs_col = width - 1;
        let mut t = vec![0.0; rows * width];
        let mut sign = vec![1.0; rows];
        for i in 0..rows {
            let b = -c[i];
            if b < 0.0 {
                sign[i] = -1.0;
            }
            let row = &mut t[i * width..(i + 1) * width];
            for j in 0..structural {
                row[j] = sign[i] * g_rows[j * rows + i];
            }
            row[structural + i] = 1.0;
            row[rhs_col] = sign[i] * b;
        }
        let mut tab = DualTableau {
            rows,
            structural,
            width,
            t,
            obj: vec![0.0; width],
            basis: (structural..structural + rows).collect(),
            iterations: 0,
        };

        // Phase 1: minimize the sum of artificials.
        for j in 0..width {
            if j >= structural && j < structural + rows {
                continue;
            }
            let mut s = 0.0;
            for i in 0..rows {
                s += tab.t[i * width + j];
            }
            tab.obj[j] = -s;
        }
        if let Some(_ray) = tab.run(structural + rows)? {
            // Phase-1 objective is bounded below by zero.
            unreachable!("phase one cannot be unbounded");
        }
        let infeasibility = -tab.obj[rhs_col];
        if infeasibility > PHASE1_TOL * (1.0 + c.iter().map(|v| v.abs()).sum::<f64>()) {
            return Ok(DualOutcome::DualInfeasible);
        }
        tab.drive_out_artificials();

        // Phase 2 objective row: reduced costs h_j - c_B B^-1 M_j. The
        // artificial columns carry -y, which yields the primal point.
        tab.obj.iter_mut().for_each(|v| *v = 0.0);
        tab.obj[..structural].copy_from_slice(&h[..structural]);
        for i in 0..rows {
            let bj = tab.basis[i];
            let cb = if bj < structural { h[bj] } else { 0.0 };
            if cb != 0.0 {
                for j in 0..width {
                    tab.obj[j] -= cb * tab.t[i * width + j];
                }
            }
        }
        if let Some(ray_col) = tab.run(structural)? {
            // Ray: λ_q = 1, λ_B = -T[:, q] >= 0. Report the heaviest member.
            let mut best = ray_col;
            let mut best_w = 1.0;
            for i in 0..rows {
                let bj = tab.basis[i];
                let w = -tab.t[i * width + ray_col];
                if bj < structural && w > best_w {
                    best_w = w;
                    best = bj;
                }
            }
            return Ok(DualOutcome::DualUnbounded {
                ray_constraint: best,
            });
        }
        let x = (0..rows)
            .map(|i| sign[i] * -tab.obj[structural + i])
            .collect();
        Ok(DualOutcome::Optimal {
            x,
            iterations: tab.iterations,
        })
    }

    /// Simplex iterations over entering candidates `0..enter_limit`.
    /// Returns `Some(column)` when that column proves unboundedness.
    fn run(&mut self, enter_limit: usize) -> Result<Option<usize>> {
        let rhs_col = self.width - 1;
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= MAX_ITERS {
                return Err(SmioError::InvalidInput(
                    "simplex iteration limit reached".into(),
                ));
            }
            let bland = degenerate_run >= DEGENERATE_RUN_BEFORE_BLAND;
            let mut enter = None;
            let mut most_negative = -COST_TOL;
            for j in 0..enter_limit {
                let rc = self.obj[j];
                if rc < most_negative {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    most_negative = rc;
                }
            }
            let Some(q) = enter else {
                return Ok(None);
            };

            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.rows {
                let a = self.t[i * self.width + q];
                if a > PIVOT_TOL {
                    let ratio = self.t[i * self.width + rhs_col].max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            ratio < best_ratio - 1e-12
                                || (ratio <= best_ratio + 1e-12 && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else {
                return Ok(Some(q));
            };
            if best_ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, q);
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let p = self.t[r * w + q];
        {
            let row = &mut self.t[r * w..(r + 1) * w];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * w + q];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[q] = 0.0;
            }
        }
        let f = self.obj[q];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[q] = 0.0;
        }
        self.basis[r] = q;
        self.iterations += 1;
    }

    /// Replace zero-level artificials in the basis by structural columns
    /// where possible; rows where that fails are redundant.
    fn drive_out_artificials(&mut self) {
        for i in 0..self.rows {
            if self.basis[i] < self.structural {
                continue;
            }
            let mut best = None;
            let mut best_abs = 1e-9;
            for j in 0..self.structural {
                let a = self.t[i * self.width + j].abs();
                if a > best_abs {
                    best_abs = a;
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                self.pivot(i, j);
            }
        }
    }
}
