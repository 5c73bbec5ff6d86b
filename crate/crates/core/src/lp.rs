//! Linear programs: a dense two-phase tableau simplex for the small
//! standard-form problems (transport, restricted mixtures) and HiGHS for the
//! bounded inequality form of the dual update.

use highs::{HighsModelStatus, RowProblem, Sense};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct LpSolution<S> {
    pub x: Vec<S>,
    pub objective: S,
    /// Row multipliers `pi` with `A^T pi <= c` at optimality.
    pub duals: Vec<S>,
    pub phase1_pivots: usize,
    pub phase2_pivots: usize,
}

const DEGENERATE_STREAK: usize = 50;

struct Tableau<S> {
    rows: Vec<Vec<S>>,
    obj: Vec<S>,
    basis: Vec<usize>,
    width: usize,
    tol: S,
}

impl<S: Scalar> Tableau<S> {
    fn rhs(&self, i: usize) -> S {
        self.rows[i][self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v = *v / p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != S::zero() {
                for (v, &pr) in row.iter_mut().zip(&pivot_row) {
                    *v = *v - f * pr;
                }
                row[c] = S::zero();
            }
        }
        let f = self.obj[c];
        if f != S::zero() {
            for (v, &pr) in self.obj.iter_mut().zip(&pivot_row) {
                *v = *v - f * pr;
            }
            self.obj[c] = S::zero();
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations over columns `0..allowed`. Returns pivot count.
    fn run(&mut self, allowed: usize, max_iter: usize) -> Result<usize> {
        let mut pivots = 0;
        let mut streak = 0;
        loop {
            let bland = streak >= DEGENERATE_STREAK;
            let mut enter = None;
            let mut best = -self.tol;
            for j in 0..allowed {
                let z = self.obj[j];
                if z < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = z;
                }
            }
            let Some(c) = enter else {
                return Ok(pivots);
            };
            let mut leave: Option<usize> = None;
            let mut ratio = S::infinity();
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > self.tol {
                    let q = self.rhs(i) / a;
                    let better = match leave {
                        None => true,
                        Some(l) => q < ratio || (q == ratio && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        leave = Some(i);
                        ratio = q;
                    }
                }
            }
            let Some(r) = leave else {
                return Err(Error::LpUnbounded);
            };
            if ratio <= self.tol {
                streak += 1;
            } else {
                streak = 0;
            }
            self.pivot(r, c);
            pivots += 1;
            if pivots >= max_iter {
                return Err(Error::LpIterationLimit(max_iter));
            }
        }
    }
}

/// Solves `min c^T y` subject to `A y = b`, `y >= 0`.
///
/// `a` is row-major with `b.len()` rows of `c.len()` entries.
pub fn solve_standard<S: Scalar>(
    c: &[S],
    a: &[Vec<S>],
    b: &[S],
    max_iter: usize,
) -> Result<LpSolution<S>> {
    let m = b.len();
    let n = c.len();
    if a.len() != m {
        return Err(Error::LengthMismatch {
            what: "constraint rows",
            expected: m,
            found: a.len(),
        });
    }
    for row in a {
        if row.len() != n {
            return Err(Error::LengthMismatch {
                what: "constraint row",
                expected: n,
                found: row.len(),
            });
        }
    }
    let width = n + m + 1;
    let mut sign = vec![S::one(); m];
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let flip = b[i] < S::zero();
        if flip {
            sign[i] = -S::one();
        }
        let mut row = vec![S::zero(); width];
        for j in 0..n {
            row[j] = sign[i] * a[i][j];
        }
        row[n + i] = S::one();
        row[width - 1] = sign[i] * b[i];
        rows.push(row);
    }
    let scale = rows
        .iter()
        .flat_map(|r| r.iter())
        .chain(c.iter())
        .fold(S::one(), |acc, v| acc.max(v.abs()));
    let tol = S::solver_tol() * scale;

    // Phase 1: minimize the sum of artificials.
    let mut obj = vec![S::zero(); width];
    for row in &rows {
        for j in 0..n {
            obj[j] = obj[j] - row[j];
        }
        obj[width - 1] = obj[width - 1] - row[width - 1];
    }
    let mut tab = Tableau {
        rows,
        obj,
        basis: (n..n + m).collect(),
        width,
        tol,
    };
    let phase1_pivots = tab.run(n, max_iter)?;
    let infeasibility = -tab.obj[width - 1];
    let b_scale = b.iter().fold(S::one(), |acc, v| acc.max(v.abs()));
    if infeasibility > S::solver_tol() * b_scale * S::lit(10.0) {
        return Err(Error::LpInfeasible);
    }
    // Drive zero-level artificials out of the basis where possible.
    for r in 0..m {
        if tab.basis[r] >= n {
            let col = (0..n).find(|&j| tab.rows[r][j].abs() > tol);
            if let Some(j) = col {
                tab.pivot(r, j);
            }
        }
    }

    // Phase 2 objective row: reduced costs c_j - c_B B^{-1} A_j.
    let mut obj = vec![S::zero(); width];
    obj[..n].copy_from_slice(c);
    for (r, &bj) in tab.basis.iter().enumerate() {
        let cb = if bj < n { c[bj] } else { S::zero() };
        if cb != S::zero() {
            for (v, &x) in obj.iter_mut().zip(&tab.rows[r]) {
                *v = *v - cb * x;
            }
        }
    }
    tab.obj = obj;
    let phase2_pivots = tab.run(n, max_iter.saturating_sub(phase1_pivots).max(1))?;

    let mut x = vec![S::zero(); n];
    for (r, &bj) in tab.basis.iter().enumerate() {
        if bj < n {
            x[bj] = tab.rhs(r);
        }
    }
    let objective = x.iter().zip(c).fold(S::zero(), |acc, (&xi, &ci)| acc + xi * ci);
    let duals = (0..m).map(|i| -tab.obj[n + i] * sign[i]).collect();
    Ok(LpSolution {
        x,
        objective,
        duals,
        phase1_pivots,
        phase2_pivots,
    })
}

#[derive(Clone, Debug)]
pub struct BoundedSolution<S> {
    pub x: Vec<S>,
    pub objective: S,
    pub iterations: usize,
}

/// Solves `min c^T x` subject to `G x >= h` and `lo <= x <= hi` with HiGHS,
/// in `f64`. Infinite bounds are allowed.
pub fn solve_bounded_ge<S: Scalar>(c: &[S], g: &[Vec<S>], h: &[S], bounds: &[(S, S)]) -> Result<BoundedSolution<S>> {
    let n = c.len();
    if bounds.len() != n {
        return Err(Error::LengthMismatch {
            what: "variable bounds",
            expected: n,
            found: bounds.len(),
        });
    }
    if g.len() != h.len() {
        return Err(Error::LengthMismatch {
            what: "constraint right-hand sides",
            expected: g.len(),
            found: h.len(),
        });
    }
    if let Some(row) = g.iter().find(|r| r.len() != n) {
        return Err(Error::LengthMismatch {
            what: "constraint row",
            expected: n,
            found: row.len(),
        });
    }
    let mut lp = RowProblem::default();
    let cols: Vec<_> = c
        .iter()
        .zip(bounds)
        .map(|(ci, (lo, hi))| lp.add_column(ci.as_f64(), lo.as_f64()..=hi.as_f64()))
        .collect();
    for (row, hi) in g.iter().zip(h) {
        let terms: Vec<_> = row
            .iter()
            .zip(&cols)
            .filter(|(v, _)| !v.is_zero())
            .map(|(v, &col)| (col, v.as_f64()))
            .collect();
        lp.add_row(hi.as_f64().., terms);
    }
    let mut model = lp.optimise(Sense::Minimise);
    model.make_quiet();
    model.set_option("threads", 1);
    model.set_option("primal_feasibility_tolerance", 1e-10);
    model.set_option("dual_feasibility_tolerance", 1e-10);
    let solved = model.try_solve().map_err(|e| Error::LpSolver(format!("{e:?}")))?;
    match solved.status() {
        HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => {}
        HighsModelStatus::Infeasible => return Err(Error::LpInfeasible),
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => return Err(Error::LpUnbounded),
        other => return Err(Error::LpSolver(format!("{other:?}"))),
    }
    let x: Vec<S> = if n == 0 {
        Vec::new()
    } else {
        solved.get_solution().columns().iter().map(|&v| S::lit(v)).collect()
    };
    let objective = x.iter().zip(c).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
    let mut iterations: std::os::raw::c_int = 0;
    // SAFETY: the pointer comes from a live solved model and the name is a NUL-terminated literal.
    unsafe {
        highs_sys::Highs_getIntInfoValue(solved.as_ptr(), c"simplex_iteration_count".as_ptr(), &mut iterations);
    }
    Ok(BoundedSolution {
        x,
        objective,
        iterations: iterations.max(0) as usize,
    })
}
