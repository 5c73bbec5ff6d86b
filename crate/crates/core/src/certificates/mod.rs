//! Feature-linear certificates `v_psi = psi^T phi`, their slacks, sampled
//! feasibility estimates, certified lower bounds and the blockwise, shift
//! and perturbation transforms.

mod basis;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use basis::{BasisBlock, BumpBasis, FeatureBasis, FeatureEval, MonomialBasis};
pub(crate) use basis::TextLines;

use crate::error::{parse_err, Error, Result};
use crate::measures::{transport_of_jet, BoundaryMeasure, Jet, SmoothField};
use crate::problems::{ControlProblem, PerturbationBudget};
use crate::sampling::SampleSet;
use crate::scalar::{dot, parse_scalar, Scalar};

/// Default factor applied to sampled gradient bounds before degradation.
pub const GRADIENT_SAFETY: f64 = 1.1;

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate<S> {
    basis: FeatureBasis<S>,
    psi: Vec<S>,
    eps: S,
    eps_t: S,
    /// Features are evaluated at `t - time_offset`.
    time_offset: S,
    provenance: String,
}

fn check_tolerance<S: Scalar>(name: &str, v: S) -> Result<()> {
    if !v.is_finite() || v < S::zero() {
        return Err(Error::InvalidTolerance(format!("{name} = {v}")));
    }
    Ok(())
}

impl<S: Scalar> Certificate<S> {
    pub fn new(basis: FeatureBasis<S>, psi: Vec<S>, eps: S, eps_t: S) -> Result<Self> {
        if psi.len() != basis.len() {
            return Err(Error::LengthMismatch {
                what: "certificate coefficients",
                expected: basis.len(),
                found: psi.len(),
            });
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("certificate coefficients".into()));
        }
        check_tolerance("eps", eps)?;
        check_tolerance("eps_T", eps_t)?;
        Ok(Certificate {
            basis,
            psi,
            eps,
            eps_t,
            time_offset: S::zero(),
            provenance: String::new(),
        })
    }

    /// `psi = 0` with zero tolerances.
    pub fn zero(basis: FeatureBasis<S>) -> Self {
        let psi = vec![S::zero(); basis.len()];
        Certificate {
            basis,
            psi,
            eps: S::zero(),
            eps_t: S::zero(),
            time_offset: S::zero(),
            provenance: String::new(),
        }
    }

    pub fn basis(&self) -> &FeatureBasis<S> {
        &self.basis
    }
    pub fn psi(&self) -> &[S] {
        &self.psi
    }
    pub fn eps(&self) -> S {
        self.eps
    }
    pub fn eps_t(&self) -> S {
        self.eps_t
    }
    pub fn time_offset(&self) -> S {
        self.time_offset
    }
    pub fn provenance(&self) -> &str {
        &self.provenance
    }
    pub fn coefficient_count(&self) -> usize {
        self.psi.len()
    }

    pub fn with_tolerances(&self, eps: S, eps_t: S) -> Result<Self> {
        check_tolerance("eps", eps)?;
        check_tolerance("eps_T", eps_t)?;
        Ok(Certificate {
            eps,
            eps_t,
            ..self.clone()
        })
    }

    pub fn with_psi(&self, psi: Vec<S>) -> Result<Self> {
        let mut c = Self::new(self.basis.clone(), psi, self.eps, self.eps_t)?;
        c.time_offset = self.time_offset;
        c.provenance = self.provenance.clone();
        Ok(c)
    }

    pub fn with_provenance(mut self, note: impl Into<String>) -> Self {
        self.provenance = note.into().replace('\n', " ");
        self
    }

    /// Feature evaluations at `(t - time_offset, x)`.
    pub fn features(&self, t: S, x: &[S]) -> FeatureEval<S> {
        self.basis.eval(t - self.time_offset, x)
    }

    /// Value, time derivative and state gradient of `v_psi`.
    pub fn evaluate(&self, t: S, x: &[S]) -> Jet<S> {
        let e = self.features(t, x);
        let n = self.basis.dim_x();
        let mut grad = vec![S::zero(); n];
        for (j, &p) in self.psi.iter().enumerate() {
            if p == S::zero() {
                continue;
            }
            for (g, &d) in grad.iter_mut().zip(e.grad_row(j)) {
                *g = *g + p * d;
            }
        }
        Jet {
            value: dot(&self.psi, &e.value),
            dt: dot(&self.psi, &e.dt),
            grad,
        }
    }

    /// `s_psi = l + L_f v_psi`.
    pub fn running_slack(&self, problem: &ControlProblem<S>, t: S, x: &[S], u: &[S]) -> Result<S> {
        let jet = self.evaluate(t, x);
        let s = problem.running_cost(t, x, u) + transport_of_jet(&jet, problem, t, x, u)?;
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("running slack at t = {t}")));
        }
        Ok(s)
    }

    /// `s_T,psi = g - v_psi(T, .)`.
    pub fn terminal_slack(&self, problem: &ControlProblem<S>, x: &[S]) -> Result<S> {
        let s = problem.terminal_cost(x) - self.value(problem.t_final(), x);
        if !s.is_finite() {
            return Err(Error::NonFinite("terminal slack".into()));
        }
        Ok(s)
    }

    /// Coefficients `a` and offset `c` with `s_psi(t,x,u) = c + a^T psi`.
    pub fn running_slack_row(&self, problem: &ControlProblem<S>, t: S, x: &[S], u: &[S]) -> (Vec<S>, S) {
        let e = self.features(t, x);
        let f = problem.dynamics(t, x, u);
        let row = (0..e.len()).map(|j| e.dt[j] + dot(e.grad_row(j), &f)).collect();
        (row, problem.running_cost(t, x, u))
    }

    /// Coefficients `a` and offset `c` with `s_T,psi(x) = c + a^T psi`.
    pub fn terminal_slack_row(&self, problem: &ControlProblem<S>, x: &[S]) -> (Vec<S>, S) {
        let e = self.features(problem.t_final(), x);
        (e.value.iter().map(|&v| -v).collect(), problem.terminal_cost(x))
    }

    /// Value of block `k` of a blockwise certificate, `v_k(t, x_{S_k})`.
    pub fn block_value(&self, k: usize, t: S, x: &[S]) -> Result<S> {
        let range = self.basis.block_range(k).ok_or_else(|| {
            Error::InvalidArgument(format!("certificate has no block {k} (basis {})", self.basis.summary()))
        })?;
        let e = self.features(t, x);
        Ok(dot(&self.psi[range.clone()], &e.value[range]))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# fom certificate v1\n");
        let _ = writeln!(s, "eps {}", self.eps);
        let _ = writeln!(s, "eps_t {}", self.eps_t);
        let _ = writeln!(s, "time_offset {}", self.time_offset);
        let _ = writeln!(s, "provenance {}", self.provenance);
        let _ = writeln!(s, "psi {}", self.psi.len());
        for p in &self.psi {
            let _ = writeln!(s, "{p}");
        }
        s.push_str(&self.basis.to_text());
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = TextLines::new(text, 0);
        let mut field = |key: &str| -> Result<(usize, String)> {
            let (n, l) = lines.expect(key)?;
            let rest = l
                .strip_prefix(key)
                .ok_or_else(|| parse_err(n, format!("expected `{key}`, found `{l}`")))?;
            Ok((n, rest.trim().to_string()))
        };
        let scalar = |(n, v): (usize, String)| parse_scalar::<S>(&v).map_err(|e| parse_err(n, e));
        let eps = scalar(field("eps ")?)?;
        let eps_t = scalar(field("eps_t ")?)?;
        let time_offset = scalar(field("time_offset ")?)?;
        let provenance = {
            let (n, l) = lines.expect("provenance")?;
            l.strip_prefix("provenance")
                .ok_or_else(|| parse_err(n, "expected `provenance`"))?
                .trim()
                .to_string()
        };
        let (n, count) = {
            let (n, l) = lines.expect("psi")?;
            let c = l
                .strip_prefix("psi ")
                .ok_or_else(|| parse_err(n, "expected `psi <count>`"))?;
            (n, c.trim().parse::<usize>().map_err(|e| parse_err(n, e.to_string()))?)
        };
        let mut psi = Vec::with_capacity(count);
        for _ in 0..count {
            let (m, l) = lines.expect("coefficient")?;
            psi.push(parse_scalar::<S>(l).map_err(|e| parse_err(m, e))?);
        }
        let basis = FeatureBasis::parse(&mut lines)?;
        if let Some((m, l)) = lines.next() {
            return Err(parse_err(m, format!("unexpected trailing line `{l}`")));
        }
        let mut cert = Self::new(basis, psi, eps, eps_t).map_err(|e| parse_err(n, e.to_string()))?;
        cert.time_offset = time_offset;
        cert.provenance = provenance;
        Ok(cert)
    }
}

impl<S: Scalar> SmoothField<S> for Certificate<S> {
    fn dim_x(&self) -> usize {
        self.basis.dim_x()
    }
    fn jet(&self, t: S, x: &[S]) -> Jet<S> {
        self.evaluate(t, x)
    }
    fn value(&self, t: S, x: &[S]) -> S {
        dot(&self.psi, &self.basis.values(t - self.time_offset, x))
    }
}

/// Sampled feasibility of a certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport<S> {
    /// `max(0, -min s_psi)` over the running samples.
    pub eps_hat: S,
    /// `max(0, -min s_T,psi)` over the terminal samples.
    pub eps_t_hat: S,
    pub min_running_slack: S,
    pub min_terminal_slack: S,
    /// `(t, x, u)` of the smallest running slack.
    pub running_argmin: (S, Vec<S>, Vec<S>),
    pub terminal_argmin: Vec<S>,
    pub running_samples: usize,
    pub terminal_samples: usize,
    pub sample_hash: String,
}

impl<S: Scalar> FeasibilityReport<S> {
    /// Fails when the declared tolerances are below the estimates.
    pub fn check_declared(&self, cert: &Certificate<S>) -> Result<()> {
        if cert.eps() < self.eps_hat || cert.eps_t() < self.eps_t_hat {
            return Err(Error::DeclaredBelowEstimate {
                declared_eps: cert.eps().as_f64(),
                declared_eps_t: cert.eps_t().as_f64(),
                eps_hat: self.eps_hat.as_f64(),
                eps_t_hat: self.eps_t_hat.as_f64(),
            });
        }
        Ok(())
    }
}

/// Smallest value and its index; ties go to the lowest index.
fn argmin<S: Scalar>(values: &[S]) -> (usize, S) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// Running and terminal slacks over a sample set (parallel over samples).
pub fn sample_slacks<S: Scalar>(
    cert: &Certificate<S>,
    problem: &ControlProblem<S>,
    samples: &SampleSet<S>,
) -> Result<(Vec<S>, Vec<S>)> {
    let running = samples
        .running
        .par_iter()
        .map(|s| cert.running_slack(problem, s.t, &s.x, &s.u))
        .collect::<Result<Vec<_>>>()?;
    let terminal = samples
        .terminal
        .par_iter()
        .map(|x| cert.terminal_slack(problem, x))
        .collect::<Result<Vec<_>>>()?;
    Ok((running, terminal))
}

pub fn estimate_feasibility<S: Scalar>(
    cert: &Certificate<S>,
    problem: &ControlProblem<S>,
    samples: &SampleSet<S>,
) -> Result<FeasibilityReport<S>> {
    samples.check_nonempty()?;
    let (running, terminal) = sample_slacks(cert, problem, samples)?;
    let (ri, rmin) = argmin(&running);
    let (ti, tmin) = argmin(&terminal);
    let rs = &samples.running[ri];
    Ok(FeasibilityReport {
        eps_hat: (-rmin).max(S::zero()),
        eps_t_hat: (-tmin).max(S::zero()),
        min_running_slack: rmin,
        min_terminal_slack: tmin,
        running_argmin: (rs.t, rs.x.clone(), rs.u.clone()),
        terminal_argmin: samples.terminal[ti].clone(),
        running_samples: running.len(),
        terminal_samples: terminal.len(),
        sample_hash: samples.hash(),
    })
}

/// Certified lower bound
/// `<v(t0, .), mu0> - (T - t0) mu0(X) eps - mu0(X) eps_T`, with `t0` the
/// time of `mu0`.
pub fn certified_lower_bound<S: Scalar>(cert: &Certificate<S>, mu0: &BoundaryMeasure<S>, horizon: S) -> Result<S> {
    let m = mu0.total_mass();
    Ok(mu0.pair_field(cert)? - horizon * m * cert.eps() - m * cert.eps_t())
}

/// Sampled sup of `|grad_x v|` (Euclidean), an under-approximation of the
/// true sup; callers inflate it before use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientBound<S> {
    pub value: S,
    pub samples: usize,
}

impl<S: Scalar> GradientBound<S> {
    pub fn inflated(&self, factor: S) -> S {
        self.value * factor
    }
}

/// Gradient bound over the running sample points and the terminal samples
/// at `T`.
pub fn gradient_bound<S: Scalar>(
    cert: &Certificate<S>,
    problem: &ControlProblem<S>,
    samples: &SampleSet<S>,
) -> Result<GradientBound<S>> {
    samples.check_nonempty()?;
    let norm = |t: S, x: &[S]| -> Result<S> {
        let g = cert.evaluate(t, x).grad;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("certificate gradient".into()));
        }
        Ok(dot(&g, &g).sqrt())
    };
    let a = samples
        .running
        .par_iter()
        .map(|s| norm(s.t, &s.x))
        .collect::<Result<Vec<_>>>()?;
    let b = samples
        .terminal
        .par_iter()
        .map(|x| norm(problem.t_final(), x))
        .collect::<Result<Vec<_>>>()?;
    let value = a.iter().chain(&b).fold(S::zero(), |m, &v| m.max(v));
    Ok(GradientBound {
        value,
        samples: a.len() + b.len(),
    })
}

/// One block of a blockwise certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockCertificate<S> {
    pub index_set: Vec<usize>,
    pub certificate: Certificate<S>,
    pub eta: S,
}

/// `v(t, x) = sum_k v_k(t, x_{S_k})` with declared tolerances
/// `(sum eta_k, sum eta_k)`.
pub fn assemble_blockwise<S: Scalar>(dim_x: usize, blocks: Vec<BlockCertificate<S>>) -> Result<Certificate<S>> {
    let offset = blocks.first().map_or(S::zero(), |b| b.certificate.time_offset());
    let mut basis_blocks = Vec::with_capacity(blocks.len());
    let mut psi = Vec::new();
    let mut eta = S::zero();
    for b in blocks {
        check_tolerance("eta", b.eta)?;
        if b.certificate.time_offset() != offset {
            return Err(Error::InvalidArgument("block certificates have different time offsets".into()));
        }
        psi.extend_from_slice(b.certificate.psi());
        eta = eta + b.eta;
        basis_blocks.push(BasisBlock {
            index_set: b.index_set,
            basis: b.certificate.basis().clone(),
        });
    }
    let basis = FeatureBasis::blockwise(dim_x, basis_blocks)?;
    let mut cert = Certificate::new(basis, psi, eta, eta)?;
    cert.time_offset = offset;
    Ok(cert.with_provenance("blockwise assembly"))
}

/// `v^tau(t, x) = v(t - tau, x)` with unchanged tolerances.
pub fn time_shift<S: Scalar>(cert: &Certificate<S>, tau: S) -> Result<Certificate<S>> {
    if !(tau >= S::zero()) || !tau.is_finite() {
        return Err(Error::NegativeShift(tau.as_f64()));
    }
    let mut c = cert.clone();
    c.time_offset = cert.time_offset + tau;
    Ok(c)
}

/// Tolerances `(eps + delta_l + G_v delta_f, eps_T + delta_g)` for a problem
/// perturbed within `budget`.
pub fn perturbation_degrade<S: Scalar>(cert: &Certificate<S>, budget: &PerturbationBudget<S>, g_v: S) -> Result<Certificate<S>> {
    let budget = PerturbationBudget::new(budget.delta_f, budget.delta_l, budget.delta_g)?;
    if !(g_v >= S::zero()) || !g_v.is_finite() {
        return Err(Error::InvalidArgument(format!("gradient bound must be nonnegative, got {g_v}")));
    }
    if budget.is_zero() {
        return Ok(cert.clone());
    }
    cert.with_tolerances(
        cert.eps() + budget.delta_l + g_v * budget.delta_f,
        cert.eps_t() + budget.delta_g,
    )
}

/// Least-squares coefficients of `target` on `basis` over the points
/// `(t_i, x_i)` (SVD solve in `f64`).
pub fn project_onto_basis<S: Scalar>(
    basis: &FeatureBasis<S>,
    points: &[(S, Vec<S>)],
    target: impl Fn(S, &[S]) -> f64,
) -> Result<Vec<S>> {
    if points.is_empty() {
        return Err(Error::EmptySamples("projection points"));
    }
    let p = basis.len();
    let mut a = DMatrix::<f64>::zeros(points.len(), p);
    let mut b = DVector::<f64>::zeros(points.len());
    for (i, (t, x)) in points.iter().enumerate() {
        for (j, v) in basis.values(*t, x).into_iter().enumerate() {
            a[(i, j)] = v.as_f64();
        }
        b[i] = target(*t, x);
    }
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
    Ok(sol.iter().map(|&v| S::lit(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::lqr::{make_lqr, LqrSpec};
    use crate::problems::{make_unicycle_avoid, Disc, UnicycleSpec};
    use crate::sampling::SamplePlan;
    use proptest::prelude::*;

    fn lqr() -> ControlProblem<f64> {
        make_lqr(&LqrSpec::scalar_integrator(1.0)).unwrap().0
    }

    #[test]
    fn zero_certificate_evaluates_to_zero() {
        let c = Certificate::zero(FeatureBasis::<f64>::total_degree(2, 2));
        let j = c.evaluate(0.3, &[0.1, -0.4]);
        assert_eq!((j.value, j.dt, j.grad), (0.0, 0.0, vec![0.0, 0.0]));
    }

    #[test]
    fn clock_certificate() {
        let basis = FeatureBasis::monomials(1, vec![vec![0, 0], vec![1, 0]], Some(1.0)).unwrap();
        let c = Certificate::new(basis, vec![0.0, 1.0], 0.0, 0.0).unwrap();
        let j = c.evaluate(0.25, &[0.7]);
        assert_eq!((j.value, j.dt), (0.75, -1.0));
        let p = lqr();
        // s = l + L_f v = x^2 + u^2 - 1
        assert!((c.running_slack(&p, 0.25, &[0.5], &[0.5]).unwrap() - (0.5 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_certificate_slacks_are_costs() {
        let p = lqr();
        let c = Certificate::zero(FeatureBasis::total_degree(1, 2));
        assert_eq!(c.running_slack(&p, 0.1, &[0.0], &[1.5]).unwrap(), 2.25);
        assert_eq!(c.terminal_slack(&p, &[1.0]).unwrap(), 0.0);
        let samples = SampleSet::from_plan(&p, &SamplePlan::new(5, 20, 20, 1)).unwrap();
        let r = estimate_feasibility(&c, &p, &samples).unwrap();
        assert_eq!((r.eps_hat, r.eps_t_hat), (0.0, 0.0));
        assert!(r.check_declared(&c).is_ok());
        let lb = certified_lower_bound(&c, p.initial_measure(), p.horizon()).unwrap();
        assert_eq!(lb, 0.0);
    }

    #[test]
    fn constant_shift_violates_terminal_by_construction() {
        let p = lqr();
        let mut psi = vec![0.0; 6];
        psi[0] = 0.3;
        let c = Certificate::new(FeatureBasis::total_degree(1, 2), psi, 0.0, 0.0).unwrap();
        let samples = SampleSet::from_plan(&p, &SamplePlan::new(5, 20, 20, 1)).unwrap();
        let r = estimate_feasibility(&c, &p, &samples).unwrap();
        // g = 0, so the terminal slack is -0.3 everywhere; the constant does
        // not enter the running slack.
        assert!((r.eps_t_hat - 0.3).abs() < 1e-15);
        assert_eq!(r.eps_hat, 0.0);
        assert!(matches!(r.check_declared(&c), Err(Error::DeclaredBelowEstimate { .. })));
    }

    #[test]
    fn lower_bound_degradation() {
        let c = Certificate::zero(FeatureBasis::<f64>::total_degree(1, 1))
            .with_tolerances(0.01, 0.02)
            .unwrap();
        let mu0 = BoundaryMeasure::dirac(0.0, vec![1.0]).unwrap();
        let lb = certified_lower_bound(&c, &mu0, 2.0).unwrap();
        assert!((lb + (0.01 * 2.0 + 0.02)).abs() < 1e-15);
    }

    #[test]
    fn degrade_arithmetic() {
        let c = Certificate::zero(FeatureBasis::<f64>::total_degree(1, 1))
            .with_tolerances(0.01, 0.02)
            .unwrap();
        let b = PerturbationBudget::new(0.05, 0.1, 0.03).unwrap();
        let d = perturbation_degrade(&c, &b, 2.0).unwrap();
        assert!((d.eps() - 0.21).abs() < 1e-15 && (d.eps_t() - 0.05).abs() < 1e-15);
        let d0 = perturbation_degrade(&c, &PerturbationBudget::zero(), 2.0).unwrap();
        assert_eq!(d0, c);
        let only_f = PerturbationBudget::new(0.5, 0.0, 0.0).unwrap();
        assert_eq!(perturbation_degrade(&c, &only_f, 0.0).unwrap().eps(), 0.01);
        assert!(perturbation_degrade(&c, &b, -1.0).is_err());
    }

    #[test]
    fn gradient_bounds() {
        let p = make_lqr(&LqrSpec::integrators(2, 1.0)).unwrap().0;
        let samples = SampleSet::from_plan(&p, &SamplePlan::new(3, 10, 0, 1)).unwrap();
        let lin = FeatureBasis::monomials(2, vec![vec![0, 0, 0], vec![0, 1, 0], vec![0, 0, 1]], None).unwrap();
        let c = Certificate::<f64>::new(lin.clone(), vec![4.0, 3.0, -4.0], 0.0, 0.0).unwrap();
        let g = gradient_bound(&c, &p, &samples).unwrap();
        assert!((g.value - 5.0).abs() < 1e-15);
        let c = Certificate::new(lin, vec![4.0, 0.0, 0.0], 0.0, 0.0).unwrap();
        assert_eq!(gradient_bound(&c, &p, &samples).unwrap().value, 0.0);
    }

    #[test]
    fn blockwise_assembly() {
        let block = |eta: f64| BlockCertificate {
            index_set: vec![0],
            certificate: Certificate::new(FeatureBasis::total_degree(1, 1), vec![1.0, 2.0, 3.0], 0.0, 0.0).unwrap(),
            eta,
        };
        let single = assemble_blockwise(1, vec![block(0.0)]).unwrap();
        let inner = block(0.0).certificate;
        for &(t, x) in &[(0.1, 0.4), (0.9, -1.3)] {
            assert_eq!(single.evaluate(t, &[x]), inner.evaluate(t, &[x]));
        }
        let three = assemble_blockwise(1, vec![block(0.01), block(0.01), block(0.01)]).unwrap();
        assert!((three.eps() - 0.03).abs() < 1e-15 && three.eps() == three.eps_t());
        assert_eq!(three.coefficient_count(), 9);
        let mut bad = block(0.0);
        bad.index_set = vec![3];
        assert!(matches!(assemble_blockwise(2, vec![bad]), Err(Error::IndexOutOfRange { index: 3, dim: 2 })));
    }

    #[test]
    fn shift_composition_and_errors() {
        let c = Certificate::new(FeatureBasis::total_degree(1, 3), (0..10).map(|i| i as f64 * 0.1).collect(), 0.0, 0.0)
            .unwrap();
        assert_eq!(time_shift(&c, 0.0).unwrap(), c);
        let a = time_shift(&time_shift(&c, 0.25).unwrap(), 0.5).unwrap();
        let b = time_shift(&c, 0.75).unwrap();
        for &(t, x) in &[(1.0, 0.3), (0.8, -0.7)] {
            assert_eq!(a.evaluate(t, &[x]).value, b.evaluate(t, &[x]).value);
        }
        assert!(matches!(time_shift(&c, -0.1), Err(Error::NegativeShift(_))));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let basis = FeatureBasis::blockwise(
            3,
            vec![
                BasisBlock {
                    index_set: vec![0, 1],
                    basis: FeatureBasis::total_degree(2, 2),
                },
                BasisBlock {
                    index_set: vec![2],
                    basis: FeatureBasis::bump_grid(&[-1.0], &[1.0], 4, 0.8, 1).unwrap(),
                },
            ],
        )
        .unwrap();
        let psi: Vec<f64> = (0..basis.len()).map(|i| (i as f64 + 0.5).sqrt() / 7.0).collect();
        let c = time_shift(&Certificate::new(basis, psi, 1.0 / 3.0, 0.1).unwrap(), 0.2)
            .unwrap()
            .with_provenance("plan abc123");
        let back = Certificate::<f64>::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert!(Certificate::<f64>::from_text("eps 1\n").is_err());
    }

    #[test]
    fn projection_recovers_members() {
        let basis = FeatureBasis::<f64>::quadratic_forms(1, 2);
        let pts: Vec<(f64, Vec<f64>)> = (0..50).map(|i| (i as f64 / 49.0, vec![(i % 7) as f64 / 3.0 - 1.0])).collect();
        let psi = project_onto_basis(&basis, &pts, |t, x| 2.0 + t * x[0] * x[0]).unwrap();
        let c = Certificate::new(basis, psi, 0.0, 0.0).unwrap();
        assert!((c.value(0.5, &[0.8]) - (2.0 + 0.5 * 0.64)).abs() < 1e-10);
    }

    fn unicycle() -> ControlProblem<f64> {
        make_unicycle_avoid(&UnicycleSpec::new(
            vec![Disc {
                center: [0.0, 0.2],
                radius: 0.5,
            }],
            1.0,
            2.0,
        ))
        .unwrap()
    }

    proptest! {
        #[test]
        fn shift_preserves_slacks_exactly(
            t in 0.0f64..2.0, tau in 0.0f64..1.0,
            x in -3.0f64..3.0, y in -3.0f64..3.0, th in -3.0f64..3.0, u in -2.0f64..2.0,
        ) {
            let p = unicycle();
            let basis = FeatureBasis::total_degree(3, 2);
            let psi: Vec<f64> = (0..basis.len()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
            let c = Certificate::new(basis, psi, 0.0, 0.0).unwrap();
            let s = time_shift(&c, tau).unwrap();
            let shifted = p.shifted(tau).unwrap();
            let lhs = s.running_slack(&shifted, t + tau, &[x, y, th], &[u]).unwrap();
            let rhs = c.running_slack(&p, t, &[x, y, th], &[u]).unwrap();
            // Features see (t + tau) - tau, which may differ from t in the last bit.
            prop_assert!((lhs - rhs).abs() <= 1e-13);
        }

        #[test]
        fn lower_bound_is_affine_in_tolerances(e in 0.0f64..1.0, et in 0.0f64..1.0, mass in 0.1f64..3.0) {
            let basis = FeatureBasis::total_degree(1, 1);
            let c = Certificate::new(basis, vec![0.5, 0.1, 0.2], 0.0, 0.0).unwrap();
            let mu0 = BoundaryMeasure::dirac(0.0, vec![0.4]).unwrap().scaled(mass).unwrap();
            let base = certified_lower_bound(&c, &mu0, 1.5).unwrap();
            let lb = certified_lower_bound(&c.with_tolerances(e, et).unwrap(), &mu0, 1.5).unwrap();
            prop_assert!((lb - (base - 1.5 * mass * e - mass * et)).abs() < 1e-12);
        }
    }
}
