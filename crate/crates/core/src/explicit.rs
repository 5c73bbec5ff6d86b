//! Explicit realizations: finite test families, the residual vector of a
//! primal pair, mixtures over a rollout library and the penalized objective.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::FeatureBasis;
use crate::error::{Error, Result};
use crate::lp::solve_standard;
use crate::measures::{realized_cost, BoundaryMeasure, OccupationMeasure, PrimalPair, Provenance};
use crate::problems::ControlProblem;
use crate::scalar::{dot, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    MaxAbs,
    Euclidean,
}

impl NormKind {
    pub fn apply<S: Scalar>(&self, r: &[S]) -> S {
        match self {
            NormKind::MaxAbs => r.iter().fold(S::zero(), |m, v| m.max(v.abs())),
            NormKind::Euclidean => dot(r, r).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum TestKind {
    Polynomial { degree: u32 },
    Custom,
}

/// `V_m = span{v_1, ..., v_m}`, one test per feature of `basis`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFamily<S> {
    basis: FeatureBasis<S>,
    kind: TestKind,
    pub norm_kind: NormKind,
}

impl<S: Scalar> TestFamily<S> {
    /// All monomials in `(t, x)` of total degree `<= degree`.
    pub fn polynomial(dim_x: usize, degree: u32) -> Self {
        TestFamily {
            basis: FeatureBasis::total_degree(dim_x, degree),
            kind: TestKind::Polynomial { degree },
            norm_kind: NormKind::MaxAbs,
        }
    }

    pub fn from_basis(basis: FeatureBasis<S>) -> Self {
        TestFamily {
            basis,
            kind: TestKind::Custom,
            norm_kind: NormKind::MaxAbs,
        }
    }

    pub fn with_norm(mut self, norm_kind: NormKind) -> Self {
        self.norm_kind = norm_kind;
        self
    }

    pub fn basis(&self) -> &FeatureBasis<S> {
        &self.basis
    }
    pub fn len(&self) -> usize {
        self.basis.len()
    }
    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }
    pub fn dim_x(&self) -> usize {
        self.basis.dim_x()
    }
}

/// Nested refinement: polynomial families move to total degree `order`;
/// other families get the degree-`order` polynomials appended.
pub fn refine_tests<S: Scalar>(tests: &TestFamily<S>, order: u32) -> Result<TestFamily<S>> {
    match tests.kind {
        TestKind::Polynomial { degree } if order == degree => Ok(tests.clone()),
        TestKind::Polynomial { degree } if order < degree => Err(Error::InvalidArgument(format!(
            "refinement order {order} is below the current degree {degree}"
        ))),
        TestKind::Polynomial { .. } => Ok(TestFamily::polynomial(tests.dim_x(), order).with_norm(tests.norm_kind)),
        TestKind::Custom => {
            let basis = FeatureBasis::concat(vec![tests.basis.clone(), FeatureBasis::total_degree(tests.dim_x(), order)])?;
            Ok(TestFamily {
                basis,
                kind: TestKind::Custom,
                norm_kind: tests.norm_kind,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualVector<S> {
    pub components: Vec<S>,
    pub norm: S,
    pub norm_kind: NormKind,
}

fn boundary_feature_sum<S: Scalar>(basis: &FeatureBasis<S>, m: &BoundaryMeasure<S>) -> Vec<S> {
    let mut acc = vec![S::zero(); basis.len()];
    for a in m.atoms() {
        for (s, v) in acc.iter_mut().zip(basis.values(m.time(), &a.x)) {
            *s = *s + a.weight * v;
        }
    }
    acc
}

fn transport_feature_sum<S: Scalar>(basis: &FeatureBasis<S>, mu: &OccupationMeasure<S>, problem: &ControlProblem<S>) -> Vec<S> {
    let rows: Vec<Vec<S>> = mu
        .atoms()
        .par_iter()
        .map(|a| {
            let e = basis.eval(a.t, &a.x);
            let f = problem.dynamics(a.t, &a.x, &a.u);
            (0..e.len()).map(|j| a.weight * (e.dt[j] + dot(e.grad_row(j), &f))).collect()
        })
        .collect();
    let mut acc = vec![S::zero(); basis.len()];
    for r in rows {
        for (s, v) in acc.iter_mut().zip(r) {
            *s = *s + v;
        }
    }
    acc
}

/// `r_j = <v_j, mu_T - mu_0> - <L_f v_j, mu>` for every test.
pub fn residual_vector<S: Scalar>(
    pair: &PrimalPair<S>,
    mu0: &BoundaryMeasure<S>,
    tests: &TestFamily<S>,
    problem: &ControlProblem<S>,
) -> Result<ResidualVector<S>> {
    if tests.dim_x() != problem.dim_x() {
        return Err(Error::LengthMismatch {
            what: "test family state dimension",
            expected: problem.dim_x(),
            found: tests.dim_x(),
        });
    }
    pair.check_horizon(problem)?;
    let terminal = boundary_feature_sum(&tests.basis, &pair.terminal);
    let initial = boundary_feature_sum(&tests.basis, mu0);
    let transport = transport_feature_sum(&tests.basis, &pair.occupation, problem);
    let components: Vec<S> = (0..tests.len())
        .map(|j| terminal[j] - initial[j] - transport[j])
        .collect();
    if components.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("residual vector".into()));
    }
    Ok(ResidualVector {
        norm: tests.norm_kind.apply(&components),
        components,
        norm_kind: tests.norm_kind,
    })
}

/// Weighted mixture over a library of component pairs. Component `i`
/// enters with weight `w_i / m_i`, `m_i` its terminal mass, so weights that
/// sum to `mu_0(X)` give a mixture of the right mass.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureTrial<S> {
    pub components: Vec<PrimalPair<S>>,
    pub weights: Vec<S>,
}

impl<S: Scalar> MixtureTrial<S> {
    pub fn new(components: Vec<PrimalPair<S>>, weights: Vec<S>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::LengthMismatch {
                what: "mixture weights",
                expected: components.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < S::zero()) {
            return Err(Error::InvalidArgument("mixture weights must be finite and nonnegative".into()));
        }
        let t = components[0].terminal.time();
        if components.iter().any(|c| c.terminal.time() != t) {
            return Err(Error::InvalidArgument("mixture components end at different times".into()));
        }
        if components.iter().any(|c| !(c.terminal.total_mass() > S::zero())) {
            return Err(Error::InvalidArgument("mixture component with zero terminal mass".into()));
        }
        Ok(MixtureTrial { components, weights })
    }

    pub fn with_weights(&self, weights: Vec<S>) -> Result<Self> {
        Self::new(self.components.clone(), weights)
    }

    fn scale(&self, i: usize) -> S {
        self.weights[i] / self.components[i].terminal.total_mass()
    }
}

fn check_weight_sum<S: Scalar>(weights: &[S], mass: S) -> Result<()> {
    let sum = weights.iter().fold(S::zero(), |a, &b| a + b);
    let tol = S::lit(1e-12).max(S::epsilon() * S::lit(16.0)) * mass.abs().max(S::one());
    if (sum - mass).abs() > tol {
        return Err(Error::WeightSum {
            expected: mass.as_f64(),
            found: sum.as_f64(),
        });
    }
    Ok(())
}

/// The induced global pair `sum_i (w_i / m_i) (mu_i, mu_T,i)`.
pub fn mixture_pair<S: Scalar>(trial: &MixtureTrial<S>, mu0: &BoundaryMeasure<S>) -> Result<PrimalPair<S>> {
    check_weight_sum(&trial.weights, mu0.total_mass())?;
    let first = &trial.components[0];
    let mut occ = OccupationMeasure::empty(first.occupation.dim_x(), first.occupation.dim_u());
    let mut term = BoundaryMeasure::new(first.terminal.time(), first.terminal.dim_x(), Vec::new())?;
    for (i, c) in trial.components.iter().enumerate() {
        let a = trial.scale(i);
        occ = occ.union(&c.occupation.scaled(a)?)?;
        term = term.union(&c.terminal.scaled(a)?)?;
    }
    PrimalPair::new(
        occ,
        term,
        Provenance::ExplicitMixture {
            components: trial.components.len(),
        },
    )
}

/// `J(mixture) + lambda |r|`.
pub fn explicit_objective<S: Scalar>(
    trial: &MixtureTrial<S>,
    tests: &TestFamily<S>,
    lambda: S,
    problem: &ControlProblem<S>,
    mu0: &BoundaryMeasure<S>,
) -> Result<S> {
    if !(lambda >= S::zero()) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let pair = mixture_pair(trial, mu0)?;
    let j = realized_cost(&pair, problem)?;
    if lambda == S::zero() {
        return Ok(j);
    }
    Ok(j + lambda * residual_vector(&pair, mu0, tests, problem)?.norm)
}

/// Per-component cost and residual vector; the mixture quantities are the
/// normalized-weight combinations of these.
#[derive(Clone, Debug, PartialEq)]
pub struct LibraryTable<S> {
    pub costs: Vec<S>,
    pub residuals: Vec<Vec<S>>,
    pub mass: S,
    pub norm_kind: NormKind,
}

impl<S: Scalar> LibraryTable<S> {
    pub fn build(
        components: &[PrimalPair<S>],
        tests: &TestFamily<S>,
        problem: &ControlProblem<S>,
        mu0: &BoundaryMeasure<S>,
    ) -> Result<Self> {
        let mut costs = Vec::with_capacity(components.len());
        let mut residuals = Vec::with_capacity(components.len());
        let mass = mu0.total_mass();
        for c in components {
            // Normalize each component to the mass of mu_0 first.
            let scaled = PrimalPair::new(
                c.occupation.scaled(mass / c.terminal.total_mass())?,
                c.terminal.scaled(mass / c.terminal.total_mass())?,
                c.provenance.clone(),
            )?;
            costs.push(realized_cost(&scaled, problem)?);
            residuals.push(residual_vector(&scaled, mu0, tests, problem)?.components);
        }
        Ok(LibraryTable {
            costs,
            residuals,
            mass,
            norm_kind: tests.norm_kind,
        })
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    fn combine(&self, weights: &[S]) -> (S, Vec<S>) {
        let m = self.residuals.first().map_or(0, |r| r.len());
        let mut j = S::zero();
        let mut r = vec![S::zero(); m];
        for (i, &w) in weights.iter().enumerate() {
            let a = w / self.mass;
            j = j + a * self.costs[i];
            for (acc, &v) in r.iter_mut().zip(&self.residuals[i]) {
                *acc = *acc + a * v;
            }
        }
        (j, r)
    }

    pub fn objective(&self, weights: &[S], lambda: S) -> S {
        let (j, r) = self.combine(weights);
        j + lambda * self.norm_kind.apply(&r)
    }

    /// Component indices with `|r_i| <= eta`.
    pub fn feasible_components(&self, eta: S) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.norm_kind.apply(&self.residuals[i]) <= eta)
            .collect()
    }
}

/// Euclidean projection onto `{w >= 0, sum w = mass}`.
pub fn project_simplex<S: Scalar>(v: &[S], mass: S) -> Vec<S> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = S::zero();
    let mut theta = S::zero();
    for (k, &uk) in u.iter().enumerate() {
        cum = cum + uk;
        let t = (cum - mass) / S::from_usize_lossy(k + 1);
        if uk - t > S::zero() {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(S::zero())).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureOptions {
    pub iterations: usize,
    /// Step `step0 / sqrt(k + 1)` at iteration `k`.
    pub step0: f64,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        MixtureOptions {
            iterations: 2000,
            step0: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSolution<S> {
    pub weights: Vec<S>,
    pub objective: S,
    /// Best objective after each iteration.
    pub trace: Vec<S>,
}

/// Projected subgradient descent on the scaled simplex for
/// `J + lambda |r|`, starting from uniform weights; returns the best iterate.
pub fn optimize_mixture<S: Scalar>(table: &LibraryTable<S>, lambda: S, options: &MixtureOptions) -> Result<MixtureSolution<S>> {
    if table.is_empty() {
        return Err(Error::InvalidArgument("empty library".into()));
    }
    if !(lambda >= S::zero()) {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let n = table.len();
    let mass = table.mass;
    let mut w = vec![mass / S::from_usize_lossy(n); n];
    let mut best = (w.clone(), table.objective(&w, lambda));
    let mut trace = Vec::with_capacity(options.iterations);
    let scale = table
        .costs
        .iter()
        .map(|c| c.abs())
        .chain(table.residuals.iter().flatten().map(|r| r.abs() * lambda))
        .fold(S::zero(), S::max)
        .max(S::lit(1e-12));
    for k in 0..options.iterations {
        let (_, r) = table.combine(&w);
        let mut g: Vec<S> = table.costs.iter().map(|&c| c / mass).collect();
        if lambda > S::zero() && !r.is_empty() {
            match table.norm_kind {
                NormKind::MaxAbs => {
                    let (jstar, _) = r
                        .iter()
                        .enumerate()
                        .fold((0, S::zero()), |b, (j, v)| if v.abs() > b.1 { (j, v.abs()) } else { b });
                    let sign = if r[jstar] >= S::zero() { S::one() } else { -S::one() };
                    for (gi, res) in g.iter_mut().zip(&table.residuals) {
                        *gi = *gi + lambda * sign * res[jstar] / mass;
                    }
                }
                NormKind::Euclidean => {
                    let nr = dot(&r, &r).sqrt();
                    if nr > S::zero() {
                        for (gi, res) in g.iter_mut().zip(&table.residuals) {
                            *gi = *gi + lambda * dot(res, &r) / (nr * mass);
                        }
                    }
                }
            }
        }
        let step = S::lit(options.step0) * mass * mass / (scale * S::lit(((k + 1) as f64).sqrt()));
        let moved: Vec<S> = w.iter().zip(&g).map(|(&wi, &gi)| wi - step * gi).collect();
        w = project_simplex(&moved, mass);
        let f = table.objective(&w, lambda);
        if f < best.1 {
            best = (w.clone(), f);
        }
        trace.push(best.1);
    }
    Ok(MixtureSolution {
        weights: best.0,
        objective: best.1,
        trace,
    })
}

/// Restricted value `inf { J : |r|_max <= eta }` over the scaled simplex,
/// solved exactly as a linear program (max-abs norm).
pub fn restricted_value<S: Scalar>(table: &LibraryTable<S>, eta: S) -> Result<MixtureSolution<S>> {
    if table.is_empty() {
        return Err(Error::InvalidArgument("empty library".into()));
    }
    if table.norm_kind != NormKind::MaxAbs {
        return Err(Error::InvalidArgument("restricted value needs the max-abs norm".into()));
    }
    if !(eta >= S::zero()) {
        return Err(Error::InvalidArgument(format!("eta must be nonnegative, got {eta}")));
    }
    let n = table.len();
    let m = table.residuals[0].len();
    let mass = table.mass;
    // Variables: w (n), then 2m slacks for r_j + s = eta and -r_j + s' = eta.
    let nvar = n + 2 * m;
    let mut c: Vec<S> = table.costs.iter().map(|&v| v / mass).collect();
    c.extend(std::iter::repeat_n(S::zero(), 2 * m));
    let mut rows = Vec::with_capacity(1 + 2 * m);
    let mut rhs = Vec::with_capacity(1 + 2 * m);
    let mut sum_row = vec![S::zero(); nvar];
    sum_row[..n].iter_mut().for_each(|v| *v = S::one());
    rows.push(sum_row);
    rhs.push(mass);
    for j in 0..m {
        for sign in [S::one(), -S::one()] {
            let mut row = vec![S::zero(); nvar];
            for i in 0..n {
                row[i] = sign * table.residuals[i][j] / mass;
            }
            let slack = if sign > S::zero() { n + j } else { n + m + j };
            row[slack] = S::one();
            rows.push(row);
            rhs.push(eta);
        }
    }
    let sol = solve_standard(&c, &rows, &rhs, 50_000)?;
    let weights = sol.x[..n].iter().map(|&v| v.max(S::zero())).collect();
    Ok(MixtureSolution {
        weights,
        objective: sol.objective,
        trace: Vec::new(),
    })
}
