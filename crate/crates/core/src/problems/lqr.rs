//! Finite-horizon linear-quadratic problems and their Riccati oracle.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{fmt_vec, BlockSplit, BoxBounds, ControlProblem, ProblemParts, RunningCostFn, TerminalCostFn};
use crate::error::{Error, Result};
use crate::measures::BoundaryMeasure;
use crate::scalar::Scalar;

/// `x' = A x + B u`, `l = x^T Q x + u^T R u`, `g = x^T Qf x` on `[0, horizon]`
/// from `delta_{x0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrSpec<S> {
    pub a: Vec<Vec<S>>,
    pub b: Vec<Vec<S>>,
    pub q: Vec<Vec<S>>,
    pub r: Vec<Vec<S>>,
    pub qf: Vec<Vec<S>>,
    pub horizon: S,
    pub x0: Vec<S>,
    pub state_bound: S,
    pub control_bound: S,
}

impl<S: Scalar> LqrSpec<S> {
    /// `x' = u`, `l = x^2 + u^2`, `g = 0`, `x0 = 1`.
    pub fn scalar_integrator(horizon: S) -> Self {
        let one = S::one();
        let zero = S::zero();
        LqrSpec {
            a: vec![vec![zero]],
            b: vec![vec![one]],
            q: vec![vec![one]],
            r: vec![vec![one]],
            qf: vec![vec![zero]],
            horizon,
            x0: vec![one],
            state_bound: S::lit(2.0),
            control_bound: S::lit(3.0),
        }
    }

    /// `n` decoupled integrators `x_i' = u_i` with identity weights.
    pub fn integrators(n: usize, horizon: S) -> Self {
        let eye = identity(n);
        LqrSpec {
            a: zeros(n, n),
            b: eye.clone(),
            q: eye.clone(),
            r: eye,
            qf: zeros(n, n),
            horizon,
            x0: (0..n).map(|i| S::one() / S::from_usize_lossy(i + 1)).collect(),
            state_bound: S::lit(2.0),
            control_bound: S::lit(3.0),
        }
    }

    /// Double integrator `p' = v, v' = u` from `(1, 0)`.
    pub fn double_integrator(horizon: S) -> Self {
        let one = S::one();
        let zero = S::zero();
        LqrSpec {
            a: vec![vec![zero, one], vec![zero, zero]],
            b: vec![vec![zero], vec![one]],
            q: identity(2),
            r: vec![vec![one]],
            qf: identity(2),
            horizon,
            x0: vec![one, zero],
            state_bound: S::lit(2.0),
            control_bound: S::lit(3.0),
        }
    }

    pub fn dim_x(&self) -> usize {
        self.a.len()
    }
    pub fn dim_u(&self) -> usize {
        self.r.len()
    }
}

fn identity<S: Scalar>(n: usize) -> Vec<Vec<S>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { S::one() } else { S::zero() }).collect())
        .collect()
}

fn zeros<S: Scalar>(r: usize, c: usize) -> Vec<Vec<S>> {
    vec![vec![S::zero(); c]; r]
}

fn check_shape<S>(what: &'static str, m: &[Vec<S>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows {
        return Err(Error::LengthMismatch {
            what,
            expected: rows,
            found: m.len(),
        });
    }
    if let Some(row) = m.iter().find(|r| r.len() != cols) {
        return Err(Error::LengthMismatch {
            what,
            expected: cols,
            found: row.len(),
        });
    }
    Ok(())
}

fn to_dmatrix<S: Scalar>(m: &[Vec<S>]) -> DMatrix<f64> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows, cols, |i, j| m[i][j].as_f64())
}

fn check_psd(what: &'static str, m: &DMatrix<f64>, strict: bool) -> Result<()> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::NonPsdWeights(what));
    }
    let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
    let ok = if strict { min_eig > 1e-12 * scale } else { min_eig >= -1e-12 * scale };
    if ok {
        Ok(())
    } else {
        Err(Error::NonPsdWeights(what))
    }
}

fn is_diagonal<S: Scalar>(m: &[Vec<S>]) -> bool {
    m.iter()
        .enumerate()
        .all(|(i, row)| row.iter().enumerate().all(|(j, &v)| i == j || v == S::zero()))
}

#[inline]
fn quad<S: Scalar>(m: &[Vec<S>], x: &[S]) -> S {
    let mut acc = S::zero();
    for (i, row) in m.iter().enumerate() {
        let mut r = S::zero();
        for (j, &v) in row.iter().enumerate() {
            r = r + v * x[j];
        }
        acc = acc + x[i] * r;
    }
    acc
}

#[inline]
fn matvec<S: Scalar>(m: &[Vec<S>], x: &[S]) -> Vec<S> {
    m.iter()
        .map(|row| row.iter().zip(x).fold(S::zero(), |acc, (&a, &b)| acc + a * b))
        .collect()
}

/// Builds the LQR problem and its Riccati oracle.
///
/// When every matrix is diagonal and the system is fully actuated, the
/// problem exposes one block per coordinate.
pub fn make_lqr<S: Scalar>(spec: &LqrSpec<S>) -> Result<(ControlProblem<S>, RiccatiOracle)> {
    let n = spec.dim_x();
    let m = spec.dim_u();
    if n == 0 || m == 0 {
        return Err(Error::InvalidProblem("LQR dimensions must be positive".into()));
    }
    check_shape("A", &spec.a, n, n)?;
    check_shape("B", &spec.b, n, m)?;
    check_shape("Q", &spec.q, n, n)?;
    check_shape("R", &spec.r, m, m)?;
    check_shape("Qf", &spec.qf, n, n)?;
    if spec.x0.len() != n {
        return Err(Error::LengthMismatch {
            what: "x0",
            expected: n,
            found: spec.x0.len(),
        });
    }
    let (a, b, q, r, qf) = (
        to_dmatrix(&spec.a),
        to_dmatrix(&spec.b),
        to_dmatrix(&spec.q),
        to_dmatrix(&spec.r),
        to_dmatrix(&spec.qf),
    );
    check_psd("Q", &q, false)?;
    check_psd("Qf", &qf, false)?;
    check_psd("R", &r, true)?;
    if !(spec.state_bound > S::zero()) || !(spec.control_bound > S::zero()) {
        return Err(Error::InvalidProblem("LQR box bounds must be positive".into()));
    }
    let t0 = S::zero();
    let horizon = spec.horizon;
    let oracle = RiccatiOracle::new(a, b, q, r, qf, 0.0, horizon.as_f64(), 4000)?;

    let descriptor = format!(
        "lqr|A={}|B={}|Q={}|R={}|Qf={}|T={}|x0={}|xb={}|ub={}",
        mat_str(&spec.a),
        mat_str(&spec.b),
        mat_str(&spec.q),
        mat_str(&spec.r),
        mat_str(&spec.qf),
        horizon,
        fmt_vec(&spec.x0),
        spec.state_bound,
        spec.control_bound
    );
    let (am, bm, qm, rm, qfm) = (
        spec.a.clone(),
        spec.b.clone(),
        spec.q.clone(),
        spec.r.clone(),
        spec.qf.clone(),
    );
    let dynamics = Arc::new(move |_t: S, x: &[S], u: &[S]| {
        let ax = matvec(&am, x);
        let bu = matvec(&bm, u);
        ax.into_iter().zip(bu).map(|(p, q)| p + q).collect()
    });
    let running_cost = Arc::new(move |_t: S, x: &[S], u: &[S]| quad(&qm, x) + quad(&rm, u));
    let terminal_cost = Arc::new(move |x: &[S]| quad(&qfm, x));

    let diagonal = n == m && [&spec.a, &spec.b, &spec.q, &spec.r, &spec.qf].iter().all(|mm| is_diagonal(mm));
    let blocks = (diagonal && n > 1).then(|| {
        let mut running: Vec<RunningCostFn<S>> = Vec::new();
        let mut terminal: Vec<TerminalCostFn<S>> = Vec::new();
        for k in 0..n {
            let (qk, rk, qfk) = (spec.q[k][k], spec.r[k][k], spec.qf[k][k]);
            running.push(Arc::new(move |_t: S, x: &[S], u: &[S]| qk * x[k] * x[k] + rk * u[k] * u[k]));
            terminal.push(Arc::new(move |x: &[S]| qfk * x[k] * x[k]));
        }
        BlockSplit {
            index_sets: (0..n).map(|k| vec![k]).collect(),
            running,
            terminal,
        }
    });

    let problem = ControlProblem::new(ProblemParts {
        name: "lqr".into(),
        descriptor,
        dim_x: n,
        dim_u: m,
        t0,
        t_final: t0 + horizon,
        dynamics,
        running_cost,
        terminal_cost,
        control_box: BoxBounds::symmetric(m, spec.control_bound)?,
        state_box: BoxBounds::symmetric(n, spec.state_bound)?,
        initial_measure: BoundaryMeasure::dirac(t0, spec.x0.clone())?,
        time_homogeneous: true,
        blocks,
        perturbation: None,
    })?;
    Ok((problem, oracle))
}

fn mat_str<S: Scalar>(m: &[Vec<S>]) -> String {
    let rows: Vec<String> = m.iter().map(|r| fmt_vec(r)).collect();
    format!("[{}]", rows.join(";"))
}

/// Backward Riccati solution `P(t)` on a fine grid with cubic Hermite
/// interpolation between nodes.
#[derive(Clone, Debug)]
pub struct RiccatiOracle {
    t0: f64,
    t_final: f64,
    step: f64,
    p: Vec<DMatrix<f64>>,
    pdot: Vec<DMatrix<f64>>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    gain_factor: DMatrix<f64>,
}

impl RiccatiOracle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        qf: DMatrix<f64>,
        t0: f64,
        t_final: f64,
        steps: usize,
    ) -> Result<Self> {
        let r_inv = r
            .clone()
            .try_inverse()
            .ok_or(Error::NonPsdWeights("R"))?;
        let gain_factor = &r_inv * b.transpose();
        let s = &b * &gain_factor;
        // dP/dt = -(A^T P + P A - P S P + Q)
        let rhs = |p: &DMatrix<f64>| -(a.transpose() * p + p * &a - p * &s * p + &q);
        let h = (t_final - t0) / steps as f64;
        let mut p = vec![DMatrix::zeros(qf.nrows(), qf.ncols()); steps + 1];
        p[steps] = qf;
        for i in (0..steps).rev() {
            let pk = &p[i + 1];
            let k1 = rhs(pk);
            let k2 = rhs(&(pk - &k1 * (0.5 * h)));
            let k3 = rhs(&(pk - &k2 * (0.5 * h)));
            let k4 = rhs(&(pk - &k3 * h));
            let next = pk - (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            p[i] = (&next + next.transpose()) * 0.5;
        }
        let pdot = p.iter().map(&rhs).collect();
        Ok(RiccatiOracle {
            t0,
            t_final,
            step: h,
            p,
            pdot,
            a,
            b,
            q,
            r,
            gain_factor,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// `P(t)`, clamped to the horizon.
    pub fn p_at(&self, t: f64) -> DMatrix<f64> {
        let n = self.p.len() - 1;
        let s = ((t - self.t0) / self.step).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let u = s - i as f64;
        let h00 = 2.0 * u * u * u - 3.0 * u * u + 1.0;
        let h10 = u * u * u - 2.0 * u * u + u;
        let h01 = -2.0 * u * u * u + 3.0 * u * u;
        let h11 = u * u * u - u * u;
        &self.p[i] * h00 + &self.pdot[i] * (h10 * self.step) + &self.p[i + 1] * h01 + &self.pdot[i + 1] * (h11 * self.step)
    }

    /// `V(t, x) = x^T P(t) x`.
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        (xv.transpose() * self.p_at(t) * &xv)[(0, 0)]
    }

    pub fn optimal_cost(&self, x0: &[f64]) -> f64 {
        self.value(self.t0, x0)
    }

    /// Optimal feedback `u* = -R^{-1} B^T P(t) x`.
    pub fn feedback(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let u = -(&self.gain_factor * self.p_at(t) * xv);
        u.iter().copied().collect()
    }

    /// Closed-loop optimal trajectory from `x0` averaged onto `knots` equal
    /// piecewise-constant control intervals.
    pub fn optimal_knots(&self, x0: &[f64], knots: usize) -> Vec<Vec<f64>> {
        let sub = 200;
        let h = (self.t_final - self.t0) / (knots * sub) as f64;
        let mut x = DVector::from_column_slice(x0);
        let field = |t: f64, x: &DVector<f64>| -> DVector<f64> {
            let u = DVector::from_vec(self.feedback(t, x.as_slice()));
            &self.a * x + &self.b * u
        };
        let mut out = Vec::with_capacity(knots);
        let mut t = self.t0;
        for _ in 0..knots {
            let mut acc = DVector::zeros(self.r.nrows());
            for _ in 0..sub {
                let mid = &x + field(t, &x) * (0.5 * h);
                acc += DVector::from_vec(self.feedback(t + 0.5 * h, mid.as_slice()));
                let k1 = field(t, &x);
                let k2 = field(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
                let k3 = field(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
                let k4 = field(t + h, &(&x + &k3 * h));
                x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                t += h;
            }
            out.push((acc / sub as f64).iter().copied().collect());
        }
        out
    }

    /// Running-cost weight matrix, for building hand-made certificates.
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
}
