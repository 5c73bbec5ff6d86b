//! Certificate/realization interface: gap reports, the sampled dual update,
//! certificate-pruned primal search, comparison tables and warm starts.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{
    certified_lower_bound, estimate_feasibility, sample_slacks, gradient_bound, perturbation_degrade, time_shift, Certificate,
    FeasibilityReport, FeatureBasis, GRADIENT_SAFETY,
};
use crate::error::{Error, Result};
use crate::lp::solve_bounded_ge;
use crate::measures::{liouville_residual, pair, realized_cost, BoundaryMeasure, PrimalPair};
use crate::problems::{ControlProblem, PerturbationBudget};
use crate::rollout::{aggregates, segmented_rollout, ControlParameterization, Partition, ProbeFamily, RolloutOptions};
use crate::sampling::{SamplePlan, SampleSet};
use crate::scalar::{dot, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport<S> {
    pub j: S,
    /// `<v_psi, mu_0>`.
    pub cert_value: S,
    pub running_slack_int: S,
    pub terminal_slack_int: S,
    pub residual: S,
    pub underline_j: S,
    pub gap: S,
    pub identity_gap: S,
    /// `<s + eps, mu> + <s_T + eps_T, mu_T> + 2 [R]_+`.
    pub decomposition: S,
    pub eps: S,
    pub eps_t: S,
    pub occupation_mass: S,
    pub terminal_mass: S,
}

impl<S: Scalar> GapReport<S> {
    pub fn scale(&self) -> S {
        S::one().max(self.j.abs())
    }
}

pub fn evaluate_gap<S: Scalar>(
    pair_: &PrimalPair<S>,
    cert: &Certificate<S>,
    mu0: &BoundaryMeasure<S>,
    problem: &ControlProblem<S>,
) -> Result<GapReport<S>> {
    let j = realized_cost(pair_, problem)?;
    let cert_value = mu0.pair_field(cert)?;
    let running_slack_int = pair(
        |t, x, u| cert.running_slack(problem, t, x, u).unwrap_or(S::nan()),
        &pair_.occupation,
    )?;
    let terminal_slack_int = pair_.terminal.pair(|x| cert.terminal_slack(problem, x).unwrap_or(S::nan()))?;
    let residual = liouville_residual(pair_, mu0, cert, problem)?;
    let m = pair_.occupation.total_mass();
    let mt = pair_.terminal.total_mass();
    let underline_j = cert_value - cert.eps() * m - cert.eps_t() * mt - residual.abs();
    let two = S::lit(2.0);
    Ok(GapReport {
        j,
        cert_value,
        running_slack_int,
        terminal_slack_int,
        residual,
        underline_j,
        gap: j - underline_j,
        identity_gap: (j - (cert_value + running_slack_int + terminal_slack_int + residual)).abs(),
        decomposition: running_slack_int + cert.eps() * m + terminal_slack_int + cert.eps_t() * mt + two * residual.max(S::zero()),
        eps: cert.eps(),
        eps_t: cert.eps_t(),
        occupation_mass: m,
        terminal_mass: mt,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualUpdateConfig<S> {
    pub eps: S,
    pub eps_t: S,
    /// `|psi_j| <= box_bound`.
    pub box_bound: S,
    /// Weight of `|psi - init_psi|_1` added to the objective (needs an init).
    pub proximal_weight: Option<S>,
    /// Declared tolerances are raised to `margin * validated estimate`.
    pub validation_margin: S,
}

impl<S: Scalar> DualUpdateConfig<S> {
    pub fn new(eps: S, eps_t: S) -> Self {
        DualUpdateConfig {
            eps,
            eps_t,
            box_bound: S::lit(1e4),
            proximal_weight: None,
            validation_margin: S::lit(1.1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualUpdateReport<S> {
    pub certificate: Certificate<S>,
    /// `<s_psi, mu> + <s_T,psi, mu_T>` at the returned coefficients.
    pub objective: S,
    pub init_objective: Option<S>,
    pub init_feasible: bool,
    /// Simplex iterations summed over the tightening rounds.
    pub pivots: usize,
    /// `max(-(s + eps))` over the constraint samples; never positive.
    pub max_violation: S,
    pub validation: Option<FeasibilityReport<S>>,
}

/// Affine slack-integral objective `c0 + c^T psi` over the pair.
pub fn slack_objective<S: Scalar>(basis: &FeatureBasis<S>, pair_: &PrimalPair<S>, problem: &ControlProblem<S>) -> (S, Vec<S>) {
    let zero = Certificate::zero(basis.clone());
    let rows: Vec<(Vec<S>, S)> = pair_
        .occupation
        .atoms()
        .par_iter()
        .map(|a| {
            let (row, l) = zero.running_slack_row(problem, a.t, &a.x, &a.u);
            (row.into_iter().map(|v| a.weight * v).collect(), a.weight * l)
        })
        .collect();
    let mut c = vec![S::zero(); basis.len()];
    let mut c0 = S::zero();
    for (row, l) in rows {
        c0 = c0 + l;
        for (ci, v) in c.iter_mut().zip(row) {
            *ci = *ci + v;
        }
    }
    for a in pair_.terminal.atoms() {
        let (row, g) = zero.terminal_slack_row(problem, &a.x);
        c0 = c0 + a.weight * g;
        for (ci, v) in c.iter_mut().zip(row) {
            *ci = *ci + a.weight * v;
        }
    }
    (c0, c)
}

/// Sampled constraint rows `a^T psi >= b` for `s >= -eps`, `s_T >= -eps_T`,
/// with duplicate rows merged.
fn constraint_rows<S: Scalar>(
    basis: &FeatureBasis<S>,
    problem: &ControlProblem<S>,
    samples: &SampleSet<S>,
    eps: S,
    eps_t: S,
) -> (Vec<Vec<S>>, Vec<S>) {
    let zero = Certificate::zero(basis.clone());
    let mut raw: Vec<(Vec<S>, S)> = samples
        .running
        .par_iter()
        .map(|s| {
            let (row, l) = zero.running_slack_row(problem, s.t, &s.x, &s.u);
            (row, -eps - l)
        })
        .collect();
    raw.extend(samples.terminal.iter().map(|x| {
        let (row, g) = zero.terminal_slack_row(problem, x);
        (row, -eps_t - g)
    }));
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut rows = Vec::new();
    let mut rhs: Vec<S> = Vec::new();
    for (row, b) in raw {
        let key: Vec<u64> = row.iter().map(|v| v.as_f64().to_bits()).collect();
        match index.get(&key) {
            Some(&i) => rhs[i] = rhs[i].max(b),
            None => {
                index.insert(key, rows.len());
                rows.push(row);
                rhs.push(b);
            }
        }
    }
    (rows, rhs)
}

fn max_violation<S: Scalar>(cert: &Certificate<S>, problem: &ControlProblem<S>, samples: &SampleSet<S>, eps: S, eps_t: S) -> Result<S> {
    let r = estimate_feasibility(cert, problem, samples)?;
    Ok((-(r.min_running_slack + eps)).max(-(r.min_terminal_slack + eps_t)))
}

/// Minimizes `<s_psi, mu> + <s_T,psi, mu_T>` over `psi` subject to
/// `s_psi >= -eps` and `s_T,psi >= -eps_T` on the constraint samples.
///
/// Solved exactly by the HiGHS simplex solver; constraints are tightened by a
/// tiny margin that grows until the returned coefficients show zero sampled
/// violation. With `validation` samples the declared tolerances become
/// `max(eps, margin * eps_hat)` from that independent pass.
pub fn dual_update<S: Scalar>(
    basis: &FeatureBasis<S>,
    pair_: &PrimalPair<S>,
    problem: &ControlProblem<S>,
    samples: &SampleSet<S>,
    config: &DualUpdateConfig<S>,
    init_psi: Option<&[S]>,
    validation: Option<&SampleSet<S>>,
) -> Result<DualUpdateReport<S>> {
    samples.check_nonempty()?;
    let p = basis.len();
    for (name, v) in [("eps", config.eps), ("eps_T", config.eps_t)] {
        if !(v >= S::zero()) || !v.is_finite() {
            return Err(Error::InvalidTolerance(format!("{name} = {v}")));
        }
    }
    if let Some(init) = init_psi {
        if init.len() != p {
            return Err(Error::LengthMismatch {
                what: "initial coefficients",
                expected: p,
                found: init.len(),
            });
        }
    }
    let (c0, c) = slack_objective(basis, pair_, problem);
    let (mut rows, mut rhs) = constraint_rows(basis, problem, samples, config.eps, config.eps_t);
    // Rows without features hold or fail independently of psi.
    let constant: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].iter().all(|v| *v == S::zero())).collect();
    if constant.iter().any(|&i| rhs[i] > S::zero()) {
        return Err(Error::DualInfeasible("a sample violates the tolerance for every psi".into()));
    }
    for &i in constant.iter().rev() {
        rows.swap_remove(i);
        rhs.swap_remove(i);
    }
    let template = Certificate::new(basis.clone(), vec![S::zero(); p], config.eps, config.eps_t)?;

    let init = match init_psi {
        Some(psi) => {
            let cert = template.with_psi(psi.to_vec())?;
            let viol = max_violation(&cert, problem, samples, config.eps, config.eps_t)?;
            Some((psi.to_vec(), c0 + dot(&c, psi), viol <= S::zero()))
        }
        None => None,
    };
    let prox = match (config.proximal_weight, &init) {
        (Some(w), Some(_)) if w > S::zero() => Some(w),
        (Some(w), None) if w > S::zero() => {
            return Err(Error::InvalidArgument("proximal term needs initial coefficients".into()));
        }
        _ => None,
    };

    let nvar = if prox.is_some() { 2 * p } else { p };
    let pad = |row: &[S]| {
        let mut r = row.to_vec();
        r.resize(nvar, S::zero());
        r
    };
    let mut bounds = vec![(-config.box_bound, config.box_bound); p];
    let mut obj = c.clone();
    let mut prox_rows = Vec::new();
    let mut prox_rhs = Vec::new();
    if let (Some(w), Some((psi0, _, _))) = (prox, &init) {
        bounds.extend(std::iter::repeat_n((S::zero(), S::infinity()), p));
        obj.extend(std::iter::repeat_n(w, p));
        for j in 0..p {
            for sign in [S::one(), -S::one()] {
                let mut row = vec![S::zero(); nvar];
                row[p + j] = S::one();
                row[j] = sign;
                prox_rows.push(row);
                prox_rhs.push(sign * psi0[j]);
            }
        }
    }
    let scale = rhs.iter().fold(S::one(), |m, v| m.max(v.abs()));
    let mut margin = S::lit(1e-10).max(S::epsilon() * S::lit(1e3)) * scale;
    let mut pivots = 0;
    for _ in 0..6 {
        let mut g: Vec<Vec<S>> = rows.iter().map(|r| pad(r)).collect();
        let mut h: Vec<S> = rhs.iter().map(|&b| b + margin).collect();
        g.extend(prox_rows.iter().cloned());
        h.extend(prox_rhs.iter().copied());
        let sol = match solve_bounded_ge(&obj, &g, &h, &bounds) {
            Ok(s) => s,
            Err(Error::LpInfeasible) => {
                return Err(Error::DualInfeasible("sampled constraints admit no coefficients".into()))
            }
            Err(e) => return Err(e),
        };
        pivots += sol.iterations;
        let psi: Vec<S> = sol.x[..p].to_vec();
        let cert = template.with_psi(psi.clone())?;
        let viol = max_violation(&cert, problem, samples, config.eps, config.eps_t)?;
        if viol <= S::zero() {
            let mut objective = c0 + dot(&c, &psi);
            let mut cert = cert;
            let mut violation = viol;
            if let Some((psi0, init_obj, true)) = &init {
                if *init_obj < objective {
                    cert = template.with_psi(psi0.clone())?;
                    objective = *init_obj;
                    violation = max_violation(&cert, problem, samples, config.eps, config.eps_t)?;
                }
            }
            let (cert, validation_report) = match validation {
                Some(v) => {
                    let (c, r) = validate(&cert, problem, v, config.validation_margin)?;
                    (c, Some(r))
                }
                None => (cert, None),
            };
            return Ok(DualUpdateReport {
                certificate: cert.with_provenance(format!("dual update on {}", samples.hash())),
                objective,
                init_objective: init.as_ref().map(|i| i.1),
                init_feasible: init.as_ref().is_some_and(|i| i.2),
                pivots,
                max_violation: violation,
                validation: validation_report,
            });
        }
        margin = margin * S::lit(100.0) + viol;
    }
    Err(Error::DualInfeasible("sampled violation persists after tightening".into()))
}

/// Re-estimates feasibility on independent samples and raises the declared
/// tolerances to `max(declared, margin * estimate)`.
pub fn validate<S: Scalar>(
    cert: &Certificate<S>,
    problem: &ControlProblem<S>,
    samples: &SampleSet<S>,
    margin: S,
) -> Result<(Certificate<S>, FeasibilityReport<S>)> {
    let report = estimate_feasibility(cert, problem, samples)?;
    let out = cert.with_tolerances(cert.eps().max(margin * report.eps_hat), cert.eps_t().max(margin * report.eps_t_hat))?;
    Ok((out, report))
}

/// Dense candidate pool for [`dual_update_exchange`].
#[derive(Clone, Copy, Debug)]
pub struct Exchange<'a, S> {
    pub pool: &'a SampleSet<S>,
    pub rounds: usize,
    /// Most violated running and terminal pool points added per round.
    pub batch: usize,
}

#[derive(Clone, Debug)]
pub struct ExchangeReport<S> {
    pub update: DualUpdateReport<S>,
    pub rounds: usize,
    pub added: usize,
    /// Violation of the requested tolerances left on the pool.
    pub pool_violation: S,
}

/// Exchange method for the sampled LP: solves on `samples`, moves the most
/// violated points of the pool into the constraint set and re-solves, until
/// the pool shows no violation or the rounds run out. Validation, if given,
/// runs once on the final coefficients.
#[allow(clippy::too_many_arguments)]
pub fn dual_update_exchange<S: Scalar>(
    basis: &FeatureBasis<S>,
    pair_: &PrimalPair<S>,
    problem: &ControlProblem<S>,
    samples: &SampleSet<S>,
    exchange: Exchange<'_, S>,
    config: &DualUpdateConfig<S>,
    init_psi: Option<&[S]>,
    validation: Option<&SampleSet<S>>,
) -> Result<ExchangeReport<S>> {
    exchange.pool.check_nonempty()?;
    if exchange.batch == 0 {
        return Err(Error::InvalidArgument("exchange batch must be positive".into()));
    }
    let mut active = samples.clone();
    let mut added = 0;
    let mut round = 0;
    loop {
        let update = dual_update(basis, pair_, problem, &active, config, init_psi, None)?;
        let (running, terminal) = sample_slacks(&update.certificate, problem, exchange.pool)?;
        let worst = |slacks: &[S], eps: S| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..slacks.len()).filter(|&i| slacks[i] + eps < S::zero()).collect();
            idx.sort_by(|&a, &b| slacks[a].total_cmp(&slacks[b]).then(a.cmp(&b)));
            idx.truncate(exchange.batch);
            idx
        };
        let run_idx = worst(&running, config.eps);
        let term_idx = worst(&terminal, config.eps_t);
        let pool_violation = run_idx
            .first()
            .map_or(S::zero(), |&i| -(running[i] + config.eps))
            .max(term_idx.first().map_or(S::zero(), |&i| -(terminal[i] + config.eps_t)));
        if (run_idx.is_empty() && term_idx.is_empty()) || round == exchange.rounds {
            let (certificate, report) = match validation {
                Some(v) => {
                    let (c, r) = validate(&update.certificate, problem, v, config.validation_margin)?;
                    (c, Some(r))
                }
                None => (update.certificate.clone(), None),
            };
            return Ok(ExchangeReport {
                update: DualUpdateReport {
                    certificate,
                    validation: report,
                    ..update
                },
                rounds: round,
                added,
                pool_violation,
            });
        }
        added += run_idx.len() + term_idx.len();
        round += 1;
        let extra = SampleSet::from_points(
            run_idx.iter().map(|&i| exchange.pool.running[i].clone()).collect(),
            term_idx.iter().map(|&i| exchange.pool.terminal[i].clone()).collect(),
            &format!("exchange{round}:{}", exchange.pool.hash()),
        );
        active = active.union(&extra);
    }
}

/// Tensor grid with `per_axis` points per control coordinate.
pub fn control_grid<S: Scalar>(problem: &ControlProblem<S>, per_axis: usize) -> Vec<Vec<S>> {
    let b = problem.control_box();
    let mut out: Vec<Vec<S>> = vec![Vec::new()];
    for i in 0..b.dim() {
        let axis: Vec<S> = match per_axis {
            0 => Vec::new(),
            1 => vec![(b.lo()[i] + b.hi()[i]) * S::lit(0.5)],
            n => (0..n)
                .map(|k| b.lo()[i] + (b.hi()[i] - b.lo()[i]) * S::from_usize_lossy(k) / S::from_usize_lossy(n - 1))
                .collect(),
        };
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

fn tie_tolerance<S: Scalar>(m: S) -> S {
    S::lit(1e-12) * S::one().max(m.abs())
}

fn shifted_slack<S: Scalar>(cert: &Certificate<S>, problem: &ControlProblem<S>, t: S, x: &[S], u: &[S]) -> Result<S> {
    Ok(cert.running_slack(problem, t, x, u)? + cert.eps())
}

/// Smallest `s_psi + eps` over the candidate grid at `(t, x)`.
fn grid_min<S: Scalar>(cert: &Certificate<S>, problem: &ControlProblem<S>, t: S, x: &[S], candidates: &[Vec<S>]) -> Result<S> {
    let mut m = S::infinity();
    for u in candidates {
        m = m.min(shifted_slack(cert, problem, t, x, u)?);
    }
    Ok(m)
}

/// Indices of `U^tau(t,x) = { u : s(t,x,u) + eps <= min_grid (s + eps) + tau }`.
pub fn admissible_actions<S: Scalar>(
    cert: &Certificate<S>,
    problem: &ControlProblem<S>,
    t: S,
    x: &[S],
    tau: S,
    candidates: &[Vec<S>],
) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("candidate control grid is empty".into()));
    }
    if !(tau >= S::zero()) {
        return Err(Error::InvalidArgument(format!("tau must be nonnegative, got {tau}")));
    }
    let values = candidates
        .iter()
        .map(|u| shifted_slack(cert, problem, t, x, u))
        .collect::<Result<Vec<_>>>()?;
    let m = values.iter().fold(S::infinity(), |a, &b| a.min(b));
    let bound = m + tau + tie_tolerance(m);
    Ok((0..candidates.len()).filter(|&i| values[i] <= bound).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextKind {
    /// States of the current elite rollouts, refreshed every iteration.
    RolloutBatch,
    Grid,
    Custom,
}

/// Finite set of `(t, x)` points at which candidate readouts are checked.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionContext<S> {
    pub points: Vec<(S, Vec<S>)>,
    pub kind: ContextKind,
}

impl<S: Scalar> DecisionContext<S> {
    pub fn custom(points: Vec<(S, Vec<S>)>, problem: &ControlProblem<S>) -> Result<Self> {
        for (i, (t, x)) in points.iter().enumerate() {
            if *t < problem.t0() || *t > problem.t_final() || !problem.state_box().contains(x) {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    dim: points.len(),
                });
            }
        }
        Ok(DecisionContext {
            points,
            kind: ContextKind::Custom,
        })
    }

    /// `times x` a tensor grid with `per_axis` points per state coordinate.
    pub fn grid(problem: &ControlProblem<S>, times: &[S], per_axis: usize) -> Self {
        let plan = SamplePlan {
            grid_per_axis: 0,
            halton: 0,
            uniform: 0,
            seed: 0,
            terminal_grid_per_axis: per_axis,
            terminal_halton: 0,
        };
        let states = SampleSet::from_plan(problem, &plan).map(|s| s.terminal).unwrap_or_default();
        let points = times
            .iter()
            .flat_map(|&t| states.iter().map(move |x| (t, x.clone())))
            .collect();
        DecisionContext {
            points,
            kind: ContextKind::Grid,
        }
    }

    /// Occupation atoms of `pairs` nearest to the midpoint of each knot
    /// interval of `theta`.
    pub fn from_rollouts(pairs: &[&PrimalPair<S>], theta: &ControlParameterization<S>) -> Self {
        let n = theta.len();
        let (a, b) = (theta.t0(), theta.t_final());
        let mut points = Vec::new();
        for p in pairs {
            let atoms = p.occupation.atoms();
            if atoms.is_empty() {
                continue;
            }
            for k in 0..n {
                let mid = a + (b - a) * (S::from_usize_lossy(k) + S::lit(0.5)) / S::from_usize_lossy(n);
                let best = atoms
                    .iter()
                    .map(|at| (at.t - mid).abs())
                    .fold(S::infinity(), S::min);
                for at in atoms.iter().filter(|at| (at.t - mid).abs() == best) {
                    let q = (at.t, at.x.clone());
                    if !points.contains(&q) {
                        points.push(q);
                    }
                }
            }
        }
        DecisionContext {
            points,
            kind: ContextKind::RolloutBatch,
        }
    }
}

/// Candidate readouts `u_theta(t)` that stay within `tau` of the best grid
/// action at every context point.
pub fn theta_admissible<S: Scalar>(
    cert: &Certificate<S>,
    problem: &ControlProblem<S>,
    theta: &ControlParameterization<S>,
    context: &[(S, Vec<S>, S)],
    tau: S,
) -> Result<bool> {
    for (t, x, m) in context {
        let s = shifted_slack(cert, problem, *t, x, theta.readout(*t))?;
        if !(s <= *m + tau + tie_tolerance(*m)) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig<S> {
    /// Pruning tolerance; `inf` disables pruning.
    pub tau: S,
    pub lambda: S,
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    pub seed: u64,
    pub candidate_controls: Vec<Vec<S>>,
    /// Initial and minimal sampling spread as fractions of the control box width.
    pub init_sigma: f64,
    pub min_sigma: f64,
    pub max_relaxations: usize,
    /// Degree of the monomial probes behind `E_hat`.
    pub probe_degree: u32,
}

impl<S: Scalar> SearchConfig<S> {
    pub fn new(problem: &ControlProblem<S>, tau: S, lambda: S, seed: u64) -> Self {
        SearchConfig {
            tau,
            lambda,
            population: 48,
            elite_fraction: 0.125,
            iterations: 100,
            seed,
            candidate_controls: control_grid(problem, 21),
            init_sigma: 0.25,
            min_sigma: 0.002,
            max_relaxations: 20,
            probe_degree: 2,
        }
    }

    fn validate(&self, problem: &ControlProblem<S>) -> Result<()> {
        if !(self.tau >= S::zero()) || !(self.lambda >= S::zero()) {
            return Err(Error::InvalidArgument("tau and lambda must be nonnegative".into()));
        }
        if self.population == 0 || self.iterations == 0 {
            return Err(Error::InvalidArgument("population and iterations must be positive".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::InvalidArgument("elite fraction must lie in (0, 1]".into()));
        }
        if !(self.init_sigma > 0.0 && self.min_sigma >= 0.0) {
            return Err(Error::InvalidArgument("sampling spreads must be positive".into()));
        }
        if self.candidate_controls.is_empty() {
            return Err(Error::InvalidArgument("candidate control grid is empty".into()));
        }
        if self.candidate_controls.iter().any(|u| !problem.control_box().contains(u)) {
            return Err(Error::InvalidArgument("candidate control outside the control box".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord<S> {
    pub iteration: usize,
    pub best_score: S,
    pub j: S,
    pub d: S,
    pub e_hat: S,
    pub gap: S,
    pub evaluated: usize,
    pub pruned: usize,
    pub tau: S,
}

#[derive(Clone, Debug)]
pub struct SearchResult<S> {
    pub theta: ControlParameterization<S>,
    pub pair: PrimalPair<S>,
    pub score: S,
    pub gap_report: GapReport<S>,
    pub trace: Vec<TraceRecord<S>>,
    /// Candidates that were rolled out, including `theta0`.
    pub evaluated: usize,
    pub pruned: usize,
    /// `(iteration, tau)` for every relaxation; iteration 0 is `theta0`.
    pub relaxations: Vec<(usize, S)>,
}

#[derive(Clone, Debug)]
struct Scored<S> {
    theta: ControlParameterization<S>,
    flat: Vec<S>,
    score: S,
    j: S,
    d: S,
    e_hat: S,
    pair: Option<PrimalPair<S>>,
}

fn order_scored<S: Scalar>(a: &Scored<S>, b: &Scored<S>) -> std::cmp::Ordering {
    a.score.total_cmp(&b.score).then_with(|| {
        for (x, y) in a.flat.iter().zip(&b.flat) {
            let o = x.total_cmp(y);
            if o != std::cmp::Ordering::Equal {
                return o;
            }
        }
        std::cmp::Ordering::Equal
    })
}

struct Scorer<'a, S> {
    problem: &'a ControlProblem<S>,
    partition: &'a Partition<S>,
    options: &'a RolloutOptions<S>,
    lambda: S,
    probes: ProbeFamily<S>,
    norm_samples: SampleSet<S>,
}

impl<S: Scalar> Scorer<'_, S> {
    fn score(&self, theta: ControlParameterization<S>) -> Scored<S> {
        let flat = theta.flat();
        let failed = |theta| Scored {
            theta,
            flat: flat.clone(),
            score: S::infinity(),
            j: S::infinity(),
            d: S::zero(),
            e_hat: S::zero(),
            pair: None,
        };
        let Ok((ro, pair_)) = segmented_rollout(self.problem, &theta, self.partition, &[], self.options) else {
            return failed(theta);
        };
        let Ok(j) = realized_cost(&pair_, self.problem) else {
            return failed(theta);
        };
        let (d, e_hat) = if self.lambda > S::zero() {
            match aggregates(&ro, &self.probes, self.problem, &self.norm_samples) {
                Ok(a) => (a.d, a.e_hat),
                Err(_) => return failed(theta),
            }
        } else {
            (S::zero(), S::zero())
        };
        let score = if self.lambda > S::zero() { j + self.lambda * (d + e_hat) } else { j };
        Scored {
            theta,
            flat,
            score,
            j,
            d,
            e_hat,
            pair: Some(pair_),
        }
    }
}

fn context_minima<S: Scalar>(
    cert: &Certificate<S>,
    problem: &ControlProblem<S>,
    context: &DecisionContext<S>,
    candidates: &[Vec<S>],
) -> Result<Vec<(S, Vec<S>, S)>> {
    context
        .points
        .par_iter()
        .map(|(t, x)| Ok((*t, x.clone(), grid_min(cert, problem, *t, x, candidates)?)))
        .collect()
}

fn relax<S: Scalar>(tau: S) -> S {
    if tau > S::zero() {
        tau * S::lit(2.0)
    } else {
        S::solver_tol()
    }
}

/// Certificate-pruned, residual-aware population search over open-loop
/// knots, scored by `J + lambda (D + E_hat)`.
///
/// Every iteration draws the full Gaussian population from the seeded
/// stream, drops candidates whose readout leaves `U^tau` at a context point,
/// rolls out the survivors and keeps the best `elite_fraction` of survivors
/// and previous elites. With `tau = inf` nothing is dropped.
pub fn pruned_search<S: Scalar>(
    problem: &ControlProblem<S>,
    cert: &Certificate<S>,
    theta0: &ControlParameterization<S>,
    partition: &Partition<S>,
    options: &RolloutOptions<S>,
    config: &SearchConfig<S>,
    context: &DecisionContext<S>,
) -> Result<SearchResult<S>> {
    search(problem, cert, theta0, partition, options, config, Some(context))
}

/// The same population search with no admissibility test at all; `cert`
/// only enters the reported gaps. Reference for the `tau = inf` path.
pub fn unpruned_search<S: Scalar>(
    problem: &ControlProblem<S>,
    cert: &Certificate<S>,
    theta0: &ControlParameterization<S>,
    partition: &Partition<S>,
    options: &RolloutOptions<S>,
    config: &SearchConfig<S>,
) -> Result<SearchResult<S>> {
    search(problem, cert, theta0, partition, options, config, None)
}

fn search<S: Scalar>(
    problem: &ControlProblem<S>,
    cert: &Certificate<S>,
    theta0: &ControlParameterization<S>,
    partition: &Partition<S>,
    options: &RolloutOptions<S>,
    config: &SearchConfig<S>,
    context: Option<&DecisionContext<S>>,
) -> Result<SearchResult<S>> {
    config.validate(problem)?;
    let norm_plan = SamplePlan::new(3, 64, 0, config.seed);
    let scorer = Scorer {
        problem,
        partition,
        options,
        lambda: config.lambda,
        probes: ProbeFamily::monomials(problem.dim_x(), config.probe_degree),
        norm_samples: SampleSet::from_plan(problem, &norm_plan)?,
    };
    let mu0 = problem.initial_measure();
    let cands = &config.candidate_controls;
    let mut relaxations = Vec::new();

    let first = scorer.score(theta0.clone());
    let Some(first_pair) = first.pair.clone() else {
        return Err(Error::InvalidArgument("initial parameterization cannot be rolled out".into()));
    };
    let refresh = context.is_some_and(|c| c.kind == ContextKind::RolloutBatch);
    let mut minima = match context {
        Some(c) if c.kind == ContextKind::RolloutBatch && c.points.is_empty() => {
            context_minima(cert, problem, &DecisionContext::from_rollouts(&[&first_pair], theta0), cands)?
        }
        Some(c) => context_minima(cert, problem, c, cands)?,
        None => Vec::new(),
    };
    let mut tau0 = config.tau;
    let mut tries = 0;
    while context.is_some() && !theta_admissible(cert, problem, theta0, &minima, tau0)? {
        if tries == config.max_relaxations {
            return Err(Error::AllPruned { retries: tries });
        }
        tau0 = relax(tau0);
        tries += 1;
        relaxations.push((0, tau0));
    }

    let dim = theta0.flat().len();
    let m = problem.dim_u();
    let widths: Vec<S> = (0..dim).map(|i| problem.control_box().widths()[i % m]).collect();
    let floor: Vec<S> = widths.iter().map(|&w| w * S::lit(config.min_sigma)).collect();
    let mut sigma: Vec<S> = widths.iter().map(|&w| w * S::lit(config.init_sigma)).collect();
    let mut mean = theta0.flat();
    let n_elite = ((config.population as f64 * config.elite_fraction).ceil() as usize).max(1);
    let mut elites = vec![first];
    let mut evaluated = 1;
    let mut pruned_total = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = Vec::with_capacity(config.iterations);
    let mut best_gap: Option<(Vec<S>, S)> = None;

    for it in 1..=config.iterations {
        let mut population = Vec::with_capacity(config.population);
        for _ in 0..config.population {
            let flat: Vec<S> = (0..dim)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean[i] + sigma[i] * S::lit(z)
                })
                .collect();
            let knots: Vec<Vec<S>> = flat.chunks(m).map(|c| c.to_vec()).collect();
            population.push(ControlParameterization::clipped(theta0.t0(), theta0.t_final(), knots, problem.control_box())?);
        }
        let mut tau = config.tau;
        let mut retries = 0;
        let survivors = loop {
            if context.is_none() {
                break population.clone();
            }
            let keep = population
                .par_iter()
                .map(|th| theta_admissible(cert, problem, th, &minima, tau))
                .collect::<Result<Vec<_>>>()?;
            let s: Vec<ControlParameterization<S>> = population
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(th, _)| th.clone())
                .collect();
            if !s.is_empty() {
                break s;
            }
            if retries == config.max_relaxations {
                return Err(Error::AllPruned { retries });
            }
            tau = relax(tau);
            retries += 1;
            relaxations.push((it, tau));
        };
        let pruned = population.len() - survivors.len();
        pruned_total += pruned;
        evaluated += survivors.len();
        let scored: Vec<Scored<S>> = survivors.into_par_iter().map(|th| scorer.score(th)).collect();
        let mut pool = std::mem::take(&mut elites);
        pool.extend(scored);
        pool.sort_by(order_scored);
        pool.truncate(n_elite);
        elites = pool;

        let k = S::from_usize_lossy(elites.len());
        for i in 0..dim {
            let mu = elites.iter().fold(S::zero(), |a, e| a + e.flat[i]) / k;
            let var = elites.iter().fold(S::zero(), |a, e| a + (e.flat[i] - mu) * (e.flat[i] - mu)) / k;
            mean[i] = mu;
            sigma[i] = var.sqrt().max(floor[i]);
        }
        if refresh {
            let pairs: Vec<&PrimalPair<S>> = elites.iter().filter_map(|e| e.pair.as_ref()).collect();
            minima = context_minima(cert, problem, &DecisionContext::from_rollouts(&pairs, theta0), cands)?;
        }

        let best = &elites[0];
        let gap = match &best_gap {
            Some((flat, g)) if *flat == best.flat => *g,
            _ => {
                let g = match &best.pair {
                    Some(p) => evaluate_gap(p, cert, mu0, problem)?.gap,
                    None => S::infinity(),
                };
                best_gap = Some((best.flat.clone(), g));
                g
            }
        };
        trace.push(TraceRecord {
            iteration: it,
            best_score: best.score,
            j: best.j,
            d: best.d,
            e_hat: best.e_hat,
            gap,
            evaluated: population.len() - pruned,
            pruned,
            tau,
        });
    }

    let best = elites.swap_remove(0);
    let pair_ = best.pair.ok_or_else(|| Error::InvalidArgument("no candidate could be rolled out".into()))?;
    Ok(SearchResult {
        gap_report: evaluate_gap(&pair_, cert, mu0, problem)?,
        theta: best.theta,
        pair: pair_,
        score: best.score,
        trace,
        evaluated,
        pruned: pruned_total,
        relaxations,
    })
}

/// One entry of a comparison: a labelled certificate with its gap report.
#[derive(Clone, Debug)]
pub struct ComparisonEntry<S> {
    pub label: String,
    pub problem_id: String,
    pub certificate: Certificate<S>,
    pub report: GapReport<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow<S> {
    pub label: String,
    pub underline_p: S,
    pub underline_j: S,
    pub j: S,
    pub gap: S,
    /// Competition rank by `underline_j`, largest first; ties share a rank.
    pub rank: usize,
}

pub fn compare<S: Scalar>(entries: &[ComparisonEntry<S>], mu0: &BoundaryMeasure<S>, horizon: S) -> Result<Vec<ComparisonRow<S>>> {
    if let Some(first) = entries.first() {
        if let Some(other) = entries.iter().find(|e| e.problem_id != first.problem_id) {
            return Err(Error::MixedProblems(first.problem_id.clone(), other.problem_id.clone()));
        }
    }
    let mut rows = entries
        .iter()
        .map(|e| {
            Ok(ComparisonRow {
                label: e.label.clone(),
                underline_p: certified_lower_bound(&e.certificate, mu0, horizon)?,
                underline_j: e.report.underline_j,
                j: e.report.j,
                gap: e.report.gap,
                rank: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.underline_j.total_cmp(&a.underline_j).then_with(|| a.label.cmp(&b.label)));
    for i in 0..rows.len() {
        rows[i].rank = if i > 0 && rows[i].underline_j == rows[i - 1].underline_j {
            rows[i - 1].rank
        } else {
            i + 1
        };
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarmStart<S> {
    pub certificate: Certificate<S>,
    /// Sampled gradient bound before inflation.
    pub gradient_bound: S,
    /// Inflated bound used in the degradation.
    pub g_v: S,
}

/// `time_shift(perturbation_degrade(cert))` with `G_v` the inflated sampled
/// gradient bound; the result seeds the next dual update.
pub fn receding_horizon_step<S: Scalar>(
    cert: &Certificate<S>,
    problem: &ControlProblem<S>,
    shift: S,
    budget: &PerturbationBudget<S>,
    gradient_samples: &SampleSet<S>,
) -> Result<WarmStart<S>> {
    if shift > S::zero() && !problem.time_homogeneous() {
        return Err(Error::NotTimeHomogeneous);
    }
    let g = gradient_bound(cert, problem, gradient_samples)?;
    let g_v = g.inflated(S::lit(GRADIENT_SAFETY));
    let degraded = perturbation_degrade(cert, budget, g_v)?;
    Ok(WarmStart {
        certificate: time_shift(&degraded, shift)?,
        gradient_bound: g.value,
        g_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::project_onto_basis;
    use crate::problems::lqr::{make_lqr, LqrSpec};
    use crate::problems::{ProblemParts, RiccatiOracle};
    use crate::rollout::Integrator;
    use std::sync::Arc;

    fn lqr() -> (ControlProblem<f64>, RiccatiOracle) {
        make_lqr(&LqrSpec::scalar_integrator(1.0)).unwrap()
    }

    fn rollout(p: &ControlProblem<f64>, knots: Vec<Vec<f64>>) -> PrimalPair<f64> {
        let th = ControlParameterization::new(0.0, 1.0, knots, p.control_box()).unwrap();
        segmented_rollout(p, &th, &Partition::uniform(0.0, 1.0, 1).unwrap(), &[], &RolloutOptions::new(Integrator::Rk4, 0.01))
            .unwrap()
            .1
    }

    fn riccati_cert(p: &ControlProblem<f64>, oracle: &RiccatiOracle) -> Certificate<f64> {
        let basis = FeatureBasis::quadratic_forms(1, 4).with_time_origin(1.0);
        let pts: Vec<(f64, Vec<f64>)> = (0..=40)
            .flat_map(|i| (0..=8).map(move |k| (i as f64 / 40.0, vec![-2.0 + k as f64 * 0.5])))
            .collect();
        let psi = project_onto_basis(&basis, &pts, |t, x| oracle.value(t, x)).unwrap();
        let c = Certificate::new(basis, psi, 0.0, 0.0).unwrap();
        let samples = SampleSet::from_plan(p, &SamplePlan::new(9, 200, 0, 3)).unwrap();
        validate(&c, p, &samples, 1.1).unwrap().0
    }

    #[test]
    fn zero_certificate_gap_is_cost() {
        let (p, _) = lqr();
        let pair_ = rollout(&p, vec![vec![-0.5]; 4]);
        let r = evaluate_gap(&pair_, &Certificate::zero(FeatureBasis::total_degree(1, 2)), p.initial_measure(), &p).unwrap();
        assert_eq!(r.cert_value, 0.0);
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.underline_j, 0.0);
        assert_eq!(r.gap, r.j);
        assert!(r.identity_gap <= 1e-12);
    }

    #[test]
    fn riccati_certificate_gap_is_small() {
        let (p, oracle) = lqr();
        let cert = riccati_cert(&p, &oracle);
        let pair_ = rollout(&p, oracle.optimal_knots(&[1.0], 50));
        let r = evaluate_gap(&pair_, &cert, p.initial_measure(), &p).unwrap();
        assert!(r.identity_gap <= 1e-9 * r.scale());
        assert!((r.gap - r.decomposition).abs() <= 1e-9 * r.scale());
        assert!(r.gap >= -1e-9 && r.gap <= 0.05 * r.j, "gap {} J {}", r.gap, r.j);
    }

    #[test]
    fn constant_basis_binds_terminal_constraint() {
        let (p, _) = lqr();
        let pair_ = rollout(&p, vec![vec![-0.5]; 4]);
        let samples = SampleSet::from_plan(&p, &SamplePlan::new(5, 50, 0, 1)).unwrap();
        let basis = FeatureBasis::total_degree(1, 0);
        let rep = dual_update(&basis, &pair_, &p, &samples, &DualUpdateConfig::new(0.0, 0.05), None, None).unwrap();
        // g = 0 here, so the optimum is psi = eps_T.
        let gmin = samples.terminal.iter().map(|x| p.terminal_cost(x)).fold(f64::INFINITY, f64::min);
        assert!((rep.certificate.psi()[0] - (gmin + 0.05)).abs() < 1e-8);
        assert!(rep.max_violation <= 0.0);
    }

    #[test]
    fn dual_update_beats_feasible_init_and_validates() {
        let (p, oracle) = lqr();
        let pair_ = rollout(&p, oracle.optimal_knots(&[1.0], 20));
        let samples = SampleSet::from_plan(&p, &SamplePlan::new(7, 100, 0, 1)).unwrap();
        let dense = SampleSet::from_plan(&p, &SamplePlan::new(7, 100, 0, 1).denser(2)).unwrap();
        let basis = FeatureBasis::quadratic_forms(1, 3).with_time_origin(1.0);
        let init = vec![0.0; basis.len()];
        let rep = dual_update(&basis, &pair_, &p, &samples, &DualUpdateConfig::new(0.0, 0.0), Some(&init), Some(&dense)).unwrap();
        assert!(rep.init_feasible);
        assert!(rep.objective <= rep.init_objective.unwrap());
        let val = rep.validation.unwrap();
        assert!(rep.certificate.eps() >= val.eps_hat && rep.certificate.eps_t() >= val.eps_t_hat);
        let lb = certified_lower_bound(&rep.certificate, p.initial_measure(), 1.0).unwrap();
        assert!(lb <= oracle.optimal_cost(&[1.0]) + 1e-6);
    }

    #[test]
    fn proximal_term_keeps_feasible_init() {
        let (p, oracle) = lqr();
        let pair_ = rollout(&p, oracle.optimal_knots(&[1.0], 20));
        let samples = SampleSet::from_plan(&p, &SamplePlan::new(5, 60, 0, 1)).unwrap();
        let basis = FeatureBasis::quadratic_forms(1, 2).with_time_origin(1.0);
        let first = dual_update(&basis, &pair_, &p, &samples, &DualUpdateConfig::new(0.0, 0.0), None, None).unwrap();
        let mut cfg = DualUpdateConfig::new(0.0, 0.0);
        cfg.proximal_weight = Some(1e3);
        let again = dual_update(&basis, &pair_, &p, &samples, &cfg, Some(first.certificate.psi()), None).unwrap();
        for (a, b) in again.certificate.psi().iter().zip(first.certificate.psi()) {
            assert!((a - b).abs() < 1e-7);
        }
        cfg.proximal_weight = Some(1.0);
        assert!(dual_update(&basis, &pair_, &p, &samples, &cfg, None, None).is_err());
    }

    #[test]
    fn admissible_sets() {
        let (p, oracle) = lqr();
        let cert = riccati_cert(&p, &oracle);
        let grid = control_grid(&p, 61);
        let all = admissible_actions(&cert, &p, 0.3, &[0.8], f64::INFINITY, &grid).unwrap();
        assert_eq!(all.len(), grid.len());
        let ties = admissible_actions(&cert, &p, 0.3, &[0.8], 0.0, &grid).unwrap();
        assert_eq!(ties.len(), 1);
        let near = admissible_actions(&cert, &p, 0.3, &[0.8], 0.01, &grid).unwrap();
        let ustar = oracle.feedback(0.3, &[0.8])[0];
        assert!(near.contains(&ties[0]));
        for i in near {
            assert!((grid[i][0] - ustar).abs() < 0.15, "{} vs {ustar}", grid[i][0]);
        }
    }

    #[test]
    fn zero_cost_problem_scores_zero() {
        let (p, _) = lqr();
        let mut parts: ProblemParts<f64> = p.parts().clone();
        parts.running_cost = Arc::new(|_, _, _| 0.0);
        parts.terminal_cost = Arc::new(|_| 0.0);
        parts.blocks = None;
        parts.descriptor.push_str("|zero");
        let q = ControlProblem::new(parts).unwrap();
        let theta0 = ControlParameterization::constant(&q, 4, vec![0.0]).unwrap();
        let mut cfg = SearchConfig::new(&q, 0.0, 0.0, 5);
        cfg.iterations = 3;
        cfg.population = 8;
        let cert = Certificate::zero(FeatureBasis::total_degree(1, 1));
        let ctx = DecisionContext::grid(&q, &[0.0, 0.5], 3);
        let res = pruned_search(&q, &cert, &theta0, &Partition::uniform(0.0, 1.0, 1).unwrap(), &RolloutOptions::new(Integrator::Rk4, 0.05), &cfg, &ctx).unwrap();
        assert_eq!(res.score, 0.0);
    }

    #[test]
    fn search_is_deterministic_and_elitist() {
        let (p, oracle) = lqr();
        let cert = riccati_cert(&p, &oracle);
        let theta0 = ControlParameterization::constant(&p, 5, vec![0.0]).unwrap();
        let part = Partition::uniform(0.0, 1.0, 1).unwrap();
        let opts = RolloutOptions::new(Integrator::Rk4, 0.05);
        let mut cfg = SearchConfig::new(&p, f64::INFINITY, 0.1, 11);
        cfg.iterations = 15;
        cfg.population = 16;
        let ctx = DecisionContext { points: vec![], kind: ContextKind::RolloutBatch };
        let a = pruned_search(&p, &cert, &theta0, &part, &opts, &cfg, &ctx).unwrap();
        let b = pruned_search(&p, &cert, &theta0, &part, &opts, &cfg, &ctx).unwrap();
        assert_eq!(a.trace, b.trace);
        assert!(a.trace.windows(2).all(|w| w[1].best_score <= w[0].best_score));
        assert_eq!(a.pruned, 0);
    }

    #[test]
    fn comparison_ranks() {
        let (p, oracle) = lqr();
        let cert = riccati_cert(&p, &oracle);
        let pair_ = rollout(&p, oracle.optimal_knots(&[1.0], 20));
        let rep = evaluate_gap(&pair_, &cert, p.initial_measure(), &p).unwrap();
        let entry = |label: &str, c: &Certificate<f64>, id: &str| ComparisonEntry {
            label: label.into(),
            problem_id: id.into(),
            certificate: c.clone(),
            report: evaluate_gap(&pair_, c, p.initial_measure(), &p).unwrap(),
        };
        let loose = cert.with_tolerances(cert.eps() + 0.1, cert.eps_t()).unwrap();
        let rows = compare(&[entry("a", &cert, p.id()), entry("b", &cert, p.id()), entry("c", &loose, p.id())], p.initial_measure(), 1.0).unwrap();
        assert_eq!((rows[0].rank, rows[1].rank, rows[2].rank), (1, 1, 3));
        assert!(rows[2].underline_p < rows[0].underline_p);
        assert!(rows.iter().all(|r| r.underline_j <= r.j));
        assert_eq!(rows[0].j, rep.j);
        assert!(matches!(
            compare(&[entry("a", &cert, "x"), entry("b", &cert, "y")], p.initial_measure(), 1.0),
            Err(Error::MixedProblems(..))
        ));
    }

    #[test]
    fn warm_start_identity_and_refusal() {
        let (p, oracle) = lqr();
        let cert = riccati_cert(&p, &oracle);
        let samples = SampleSet::from_plan(&p, &SamplePlan::new(5, 20, 0, 1)).unwrap();
        let w = receding_horizon_step(&cert, &p, 0.0, &PerturbationBudget::zero(), &samples).unwrap();
        assert_eq!(w.certificate, cert);
        let mut parts = p.parts().clone();
        parts.dynamics = Arc::new(|t: f64, _x: &[f64], u: &[f64]| vec![u[0] * (1.0 + t)]);
        parts.time_homogeneous = false;
        parts.descriptor.push_str("|tv");
        let q = ControlProblem::new(parts).unwrap();
        assert!(matches!(
            receding_horizon_step(&cert, &q, 0.2, &PerturbationBudget::zero(), &samples),
            Err(Error::NotTimeHomogeneous)
        ));
    }
}
