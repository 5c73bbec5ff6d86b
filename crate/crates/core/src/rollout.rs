//! Segmented rollouts: per-segment occupation measures and endpoint
//! measures, interface defects, local rollout residuals and their
//! aggregates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{Certificate, FeatureBasis};
use crate::error::{Error, Result};
use crate::lp::solve_standard;
use crate::measures::{
    liouville_residual, pair_transport, BoundaryAtom, BoundaryMeasure, OccupationAtom, OccupationMeasure, PrimalPair,
    Provenance, SmoothField,
};
use crate::problems::{BoxBounds, ControlProblem};
use crate::sampling::SampleSet;
use crate::scalar::{norm2, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    Euler,
    Rk4,
}

impl Integrator {
    pub fn name(&self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            other => Err(Error::InvalidArgument(format!("unknown integrator `{other}`"))),
        }
    }
}

/// Time nodes `tau_0 = t0 < ... < tau_K = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition<S> {
    nodes: Vec<S>,
}

impl<S: Scalar> Partition<S> {
    pub fn new(nodes: Vec<S>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidPartition("need at least two nodes".into()));
        }
        if nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidPartition("nodes must be finite".into()));
        }
        for i in 1..nodes.len() {
            if !(nodes[i] > nodes[i - 1]) {
                return Err(Error::NonMonotoneTimes { index: i });
            }
        }
        Ok(Partition { nodes })
    }

    /// `segments` equal pieces of `[t0, t1]`; the last node is exactly `t1`.
    pub fn uniform(t0: S, t1: S, segments: usize) -> Result<Self> {
        if segments == 0 {
            return Err(Error::InvalidPartition("need at least one segment".into()));
        }
        let k = S::from_usize_lossy(segments);
        let mut nodes: Vec<S> = (0..segments)
            .map(|i| t0 + (t1 - t0) * S::from_usize_lossy(i) / k)
            .collect();
        nodes.push(t1);
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }
    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }
    pub fn interval(&self, k: usize) -> (S, S) {
        (self.nodes[k], self.nodes[k + 1])
    }

    fn check_horizon(&self, problem: &ControlProblem<S>) -> Result<()> {
        let (a, b) = (self.nodes[0], *self.nodes.last().unwrap_or(&self.nodes[0]));
        if a != problem.t0() || b != problem.t_final() {
            return Err(Error::InvalidPartition(format!(
                "partition spans [{a}, {b}], problem horizon is [{}, {}]",
                problem.t0(),
                problem.t_final()
            )));
        }
        Ok(())
    }
}

/// Piecewise-constant open-loop control on equal knot intervals over
/// `[t0, T]`; the knots are the search parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlParameterization<S> {
    t0: S,
    t_final: S,
    knots: Vec<Vec<S>>,
}

impl<S: Scalar> ControlParameterization<S> {
    pub fn new(t0: S, t_final: S, knots: Vec<Vec<S>>, control_box: &BoxBounds<S>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidArgument("control parameterization needs at least one knot".into()));
        }
        if !(t_final > t0) {
            return Err(Error::InvalidArgument("control horizon must be nonempty".into()));
        }
        for (index, k) in knots.iter().enumerate() {
            if !control_box.contains(k) {
                return Err(Error::KnotOutsideBox { index });
            }
        }
        Ok(ControlParameterization { t0, t_final, knots })
    }

    /// `n` knots all equal to `u` over the problem horizon.
    pub fn constant(problem: &ControlProblem<S>, n: usize, u: Vec<S>) -> Result<Self> {
        Self::new(problem.t0(), problem.t_final(), vec![u; n], problem.control_box())
    }

    /// Knots clipped into the box.
    pub fn clipped(t0: S, t_final: S, knots: Vec<Vec<S>>, control_box: &BoxBounds<S>) -> Result<Self> {
        let knots = knots.iter().map(|k| control_box.clip(k)).collect();
        Self::new(t0, t_final, knots, control_box)
    }

    pub fn knots(&self) -> &[Vec<S>] {
        &self.knots
    }
    pub fn len(&self) -> usize {
        self.knots.len()
    }
    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }
    pub fn t0(&self) -> S {
        self.t0
    }
    pub fn t_final(&self) -> S {
        self.t_final
    }

    pub fn knot_index(&self, t: S) -> usize {
        let n = self.knots.len();
        let s = (t - self.t0) / (self.t_final - self.t0) * S::from_usize_lossy(n);
        let i = s.floor().to_isize().unwrap_or(0);
        i.clamp(0, n as isize - 1) as usize
    }

    /// `u_theta(t)`.
    pub fn readout(&self, t: S) -> &[S] {
        &self.knots[self.knot_index(t)]
    }

    /// Knots flattened row by row.
    pub fn flat(&self) -> Vec<S> {
        self.knots.iter().flatten().copied().collect()
    }
}

/// Integrator, step and optional safety box shared by every segment.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutOptions<S> {
    pub integrator: Integrator,
    pub step: S,
    /// Leaving this box aborts the rollout.
    pub safety_box: Option<BoxBounds<S>>,
}

impl<S: Scalar> RolloutOptions<S> {
    pub fn new(integrator: Integrator, step: S) -> Self {
        RolloutOptions {
            integrator,
            step,
            safety_box: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentOutput<S> {
    pub occupation: OccupationMeasure<S>,
    pub exit: BoundaryMeasure<S>,
    /// Some state left the problem's state box (diagnostic only).
    pub left_state_box: bool,
}

fn step_count<S: Scalar>(a: S, b: S, step: S) -> Result<usize> {
    let len = b - a;
    let mismatch = || Error::StepMismatch {
        step: step.as_f64(),
        start: a.as_f64(),
        end: b.as_f64(),
    };
    if !(step > S::zero()) || !step.is_finite() {
        return Err(mismatch());
    }
    let n = (len / step).round();
    let tol = S::lit(1e-9).max(S::epsilon() * S::lit(64.0)) * len.abs().max(S::one());
    if n < S::one() || (n * step - len).abs() > tol {
        return Err(mismatch());
    }
    n.to_usize().ok_or_else(mismatch)
}

fn axpy<S: Scalar>(x: &[S], a: S, d: &[S]) -> Vec<S> {
    x.iter().zip(d).map(|(&xi, &di)| xi + a * di).collect()
}

fn integrator_step<S: Scalar>(problem: &ControlProblem<S>, integrator: Integrator, t: S, x: &[S], u: &[S], h: S) -> Vec<S> {
    match integrator {
        Integrator::Euler => axpy(x, h, &problem.dynamics(t, x, u)),
        Integrator::Rk4 => {
            let half = S::lit(0.5);
            let k1 = problem.dynamics(t, x, u);
            let k2 = problem.dynamics(t + half * h, &axpy(x, half * h, &k1), u);
            let k3 = problem.dynamics(t + half * h, &axpy(x, half * h, &k2), u);
            let k4 = problem.dynamics(t + h, &axpy(x, h, &k3), u);
            let six = S::lit(6.0);
            let two = S::lit(2.0);
            x.iter()
                .enumerate()
                .map(|(i, &xi)| xi + h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
                .collect()
        }
    }
}

/// Propagates every atom of `start` over `[a, b]`.
///
/// Each step uses the knot active at its midpoint and contributes two
/// trapezoid atoms `(t_i, x_i, u)` and `(t_{i+1}, x_{i+1}, u)` of weight
/// `w h / 2`, so the segment mass is `w (b - a)` per unit start weight.
pub fn integrate_segment<S: Scalar>(
    problem: &ControlProblem<S>,
    start: &BoundaryMeasure<S>,
    controls: &ControlParameterization<S>,
    interval: (S, S),
    options: &RolloutOptions<S>,
) -> Result<SegmentOutput<S>> {
    let (a, b) = interval;
    if start.time() != a {
        return Err(Error::TimeMismatch {
            expected: a.as_f64(),
            found: start.time().as_f64(),
        });
    }
    let n = step_count(a, b, options.step)?;
    let nf = S::from_usize_lossy(n);
    let h = (b - a) / nf;
    let half = S::lit(0.5);
    let time = |i: usize| if i == n { b } else { a + (b - a) * S::from_usize_lossy(i) / nf };

    type Path<S> = (Vec<OccupationAtom<S>>, Vec<S>, bool);
    let paths: Vec<Result<Path<S>>> = start
        .atoms()
        .par_iter()
        .map(|atom| {
            let mut atoms = Vec::with_capacity(2 * n);
            let mut x = atom.x.clone();
            let mut left = !problem.state_box().contains(&x);
            let w = atom.weight * h * half;
            for i in 0..n {
                let (t, t_next) = (time(i), time(i + 1));
                let u = controls.readout(t + half * (t_next - t)).to_vec();
                let next = integrator_step(problem, options.integrator, t, &x, &u, t_next - t);
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("state at t = {t_next}")));
                }
                if let Some(sb) = &options.safety_box {
                    if !sb.contains(&next) {
                        return Err(Error::SafetyBoxExit {
                            time: t_next.as_f64(),
                            state: next.iter().map(|v| v.as_f64()).collect(),
                        });
                    }
                }
                left |= !problem.state_box().contains(&next);
                atoms.push(OccupationAtom {
                    weight: w,
                    t,
                    x: x.clone(),
                    u: u.clone(),
                });
                atoms.push(OccupationAtom {
                    weight: w,
                    t: t_next,
                    x: next.clone(),
                    u,
                });
                x = next;
            }
            Ok((atoms, x, left))
        })
        .collect();

    let mut occ = Vec::with_capacity(2 * n * start.len());
    let mut exits = Vec::with_capacity(start.len());
    let mut left_state_box = false;
    for (atom, path) in start.atoms().iter().zip(paths) {
        let (atoms, x, left) = path?;
        occ.extend(atoms);
        exits.push(BoundaryAtom { weight: atom.weight, x });
        left_state_box |= left;
    }
    Ok(SegmentOutput {
        occupation: OccupationMeasure::from_atoms(problem.dim_x(), problem.dim_u(), occ)?,
        exit: BoundaryMeasure::new(b, problem.dim_x(), exits)?,
        left_state_box,
    })
}

/// Signed endpoint difference `d_k = nu_k^- - nu_k^+` at an interior node.
#[derive(Clone, Debug, PartialEq)]
pub struct Defect<S> {
    pub node: usize,
    pub exit: BoundaryMeasure<S>,
    pub entry: BoundaryMeasure<S>,
}

impl<S: Scalar> Defect<S> {
    /// `<v(tau_k, .), d_k>`.
    pub fn pair<F: SmoothField<S> + ?Sized>(&self, v: &F) -> Result<S> {
        Ok(self.exit.pair_field(v)? - self.entry.pair_field(v)?)
    }

    pub fn norm(&self) -> Result<S> {
        flat_distance(&self.exit, &self.entry)
    }
}

/// Atom count up to which the flat distance is solved exactly.
pub const EXACT_FLAT_ATOMS: usize = 8;

/// Flat (bounded-Lipschitz) distance
/// `sup { <phi, a - b> : |phi| <= 1, Lip(phi) <= 1 }`.
///
/// Exact for at most [`EXACT_FLAT_ATOMS`] atoms per side, via the partial
/// transport LP with cost `min(|x - y|, 2)` and unit deletion cost. Larger
/// measures get the lower estimate from clamped coordinate features.
pub fn flat_distance<S: Scalar>(a: &BoundaryMeasure<S>, b: &BoundaryMeasure<S>) -> Result<S> {
    let pa: Vec<&BoundaryAtom<S>> = a.atoms().iter().filter(|x| x.weight > S::zero()).collect();
    let pb: Vec<&BoundaryAtom<S>> = b.atoms().iter().filter(|x| x.weight > S::zero()).collect();
    if pa.is_empty() || pb.is_empty() {
        let total = pa.iter().chain(&pb).map(|x| x.weight).fold(S::zero(), |s, w| s + w);
        return Ok(total);
    }
    if pa.len() <= EXACT_FLAT_ATOMS && pb.len() <= EXACT_FLAT_ATOMS {
        return exact_flat(&pa, &pb);
    }
    Ok(feature_flat_estimate(a, b))
}

fn exact_flat<S: Scalar>(pa: &[&BoundaryAtom<S>], pb: &[&BoundaryAtom<S>]) -> Result<S> {
    let (na, nb) = (pa.len(), pb.len());
    let nvar = na * nb + na + nb;
    let two = S::lit(2.0);
    let mut c = Vec::with_capacity(nvar);
    for ai in pa {
        for bj in pb {
            let d: Vec<S> = ai.x.iter().zip(&bj.x).map(|(&p, &q)| p - q).collect();
            c.push(norm2(&d).min(two));
        }
    }
    c.extend(std::iter::repeat_n(S::one(), na + nb));
    let mut rows = Vec::with_capacity(na + nb);
    let mut rhs = Vec::with_capacity(na + nb);
    for i in 0..na {
        let mut row = vec![S::zero(); nvar];
        for j in 0..nb {
            row[i * nb + j] = S::one();
        }
        row[na * nb + i] = S::one();
        rows.push(row);
        rhs.push(pa[i].weight);
    }
    for j in 0..nb {
        let mut row = vec![S::zero(); nvar];
        for i in 0..na {
            row[i * nb + j] = S::one();
        }
        row[na * nb + na + j] = S::one();
        rows.push(row);
        rhs.push(pb[j].weight);
    }
    let sol = solve_standard(&c, &rows, &rhs, 10_000)?;
    Ok(sol.objective.max(S::zero()))
}

fn feature_flat_estimate<S: Scalar>(a: &BoundaryMeasure<S>, b: &BoundaryMeasure<S>) -> S {
    let mut best = (a.total_mass() - b.total_mass()).abs();
    let n = a.dim_x();
    let points: Vec<&Vec<S>> = a.atoms().iter().chain(b.atoms()).map(|x| &x.x).collect();
    for i in 0..n {
        for p in &points {
            let c = p[i];
            let phi = |x: &[S]| (x[i] - c).max(-S::one()).min(S::one());
            let va = a.pair(phi).unwrap_or(S::zero());
            let vb = b.pair(phi).unwrap_or(S::zero());
            best = best.max((va - vb).abs());
        }
    }
    best
}

/// All segment data of one rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentedRollout<S> {
    pub partition: Partition<S>,
    pub segments: Vec<OccupationMeasure<S>>,
    /// `nu_k^+`, one per segment.
    pub entries: Vec<BoundaryMeasure<S>>,
    /// `nu_{k+1}^-`, one per segment.
    pub exits: Vec<BoundaryMeasure<S>>,
    pub defects: Vec<Defect<S>>,
    pub options: RolloutOptions<S>,
    pub left_state_box: bool,
}

/// Rolls `theta` out over the partition. Without overrides each segment
/// starts from the previous exit; an override `(tau_k, nu)` replaces the
/// entry at interior node `tau_k` and yields the defect `nu_k^- - nu`.
pub fn segmented_rollout<S: Scalar>(
    problem: &ControlProblem<S>,
    theta: &ControlParameterization<S>,
    partition: &Partition<S>,
    overrides: &[(S, BoundaryMeasure<S>)],
    options: &RolloutOptions<S>,
) -> Result<(SegmentedRollout<S>, PrimalPair<S>)> {
    partition.check_horizon(problem)?;
    let nodes = partition.nodes();
    let mut by_node: Vec<Option<&BoundaryMeasure<S>>> = vec![None; nodes.len()];
    for (t, nu) in overrides {
        let k = (1..nodes.len() - 1)
            .find(|&k| nodes[k] == *t)
            .ok_or(Error::OverrideNotAtNode(t.as_f64()))?;
        by_node[k] = Some(nu);
    }
    let mut entries = Vec::with_capacity(partition.segments());
    let mut exits: Vec<BoundaryMeasure<S>> = Vec::with_capacity(partition.segments());
    let mut segments = Vec::with_capacity(partition.segments());
    let mut defects = Vec::new();
    let mut left_state_box = false;
    for k in 0..partition.segments() {
        let entry = if k == 0 {
            problem.initial_measure().clone()
        } else {
            match by_node[k] {
                Some(nu) => {
                    let nu = nu.at_time(nodes[k]);
                    defects.push(Defect {
                        node: k,
                        exit: exits[k - 1].clone(),
                        entry: nu.clone(),
                    });
                    nu
                }
                None => exits[k - 1].clone(),
            }
        };
        let out = integrate_segment(problem, &entry, theta, partition.interval(k), options)?;
        left_state_box |= out.left_state_box;
        entries.push(entry);
        exits.push(out.exit);
        segments.push(out.occupation);
    }
    let mut occupation = OccupationMeasure::empty(problem.dim_x(), problem.dim_u());
    for s in &segments {
        occupation = occupation.union(s)?;
    }
    let terminal = exits.last().cloned().expect("at least one segment");
    let pair = PrimalPair::new(
        occupation,
        terminal,
        Provenance::Rollout {
            segments: partition.segments(),
            integrator: options.integrator,
            step: options.step.as_f64(),
        },
    )?;
    Ok((
        SegmentedRollout {
            partition: partition.clone(),
            segments,
            entries,
            exits,
            defects,
            options: options.clone(),
            left_state_box,
        },
        pair,
    ))
}

/// `e_k(v) = <v(tau_{k+1}), nu_{k+1}^-> - <v(tau_k), nu_k^+> - <L_f v, mu_k>`.
pub fn local_rollout_residual<S: Scalar, F: SmoothField<S> + ?Sized>(
    rollout: &SegmentedRollout<S>,
    k: usize,
    v: &F,
    problem: &ControlProblem<S>,
) -> Result<S> {
    if k >= rollout.segments.len() {
        return Err(Error::InvalidArgument(format!("segment {k} out of range")));
    }
    let out = rollout.exits[k].pair_field(v)?;
    let inn = rollout.entries[k].pair_field(v)?;
    let transport = pair_transport(v, problem, &rollout.segments[k])?;
    Ok(out - inn - transport)
}

/// Finite probe family standing in for the unit `C^1` ball.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeFamily<S> {
    pub probes: Vec<Certificate<S>>,
    pub descriptor: String,
}

impl<S: Scalar> ProbeFamily<S> {
    /// Every monomial of total degree `<= degree` in `(t, x)` as its own probe.
    pub fn monomials(dim_x: usize, degree: u32) -> Self {
        let basis = FeatureBasis::total_degree(dim_x, degree);
        let p = basis.len();
        let probes = (0..p)
            .map(|j| {
                let mut psi = vec![S::zero(); p];
                psi[j] = S::one();
                Certificate::new(basis.clone(), psi, S::zero(), S::zero()).expect("unit coefficients")
            })
            .collect();
        ProbeFamily {
            probes,
            descriptor: format!("monomials(n={dim_x},deg={degree})"),
        }
    }

    pub fn extended(&self, more: &ProbeFamily<S>) -> Self {
        let mut probes = self.probes.clone();
        probes.extend(more.probes.iter().cloned());
        ProbeFamily {
            probes,
            descriptor: format!("{}+{}", self.descriptor, more.descriptor),
        }
    }
}

/// Sampled `C^1` norm `sup|v| + sup|grad_x v| + sup|dv/dt|` over the
/// running sample points.
pub fn sampled_c1_norm<S: Scalar>(v: &Certificate<S>, samples: &SampleSet<S>) -> Result<S> {
    samples.check_nonempty()?;
    let (mut a, mut g, mut d) = (S::zero(), S::zero(), S::zero());
    for s in &samples.running {
        let j = v.evaluate(s.t, &s.x);
        a = a.max(j.value.abs());
        g = g.max(norm2(&j.grad));
        d = d.max(j.dt.abs());
    }
    Ok(a + g + d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualAggregates<S> {
    /// `sum_k |d_k|_def`.
    pub d: S,
    /// `max_v |sum_k e_k(v)| / |v|_C1` over the probe family; a lower
    /// estimate of the sup over the unit ball.
    pub e_hat: S,
    pub probe_descriptor: String,
    pub probes: usize,
}

pub fn aggregates<S: Scalar>(
    rollout: &SegmentedRollout<S>,
    probes: &ProbeFamily<S>,
    problem: &ControlProblem<S>,
    norm_samples: &SampleSet<S>,
) -> Result<ResidualAggregates<S>> {
    if probes.probes.is_empty() {
        return Err(Error::InvalidArgument("probe family is empty".into()));
    }
    let mut d = S::zero();
    for def in &rollout.defects {
        d = d + def.norm()?;
    }
    let mut e_hat = S::zero();
    for (i, v) in probes.probes.iter().enumerate() {
        let norm = sampled_c1_norm(v, norm_samples)?;
        if !(norm > S::zero()) {
            return Err(Error::ZeroNormProbe(i));
        }
        let mut sum = S::zero();
        for k in 0..rollout.segments.len() {
            sum = sum + local_rollout_residual(rollout, k, v, problem)?;
        }
        e_hat = e_hat.max(sum.abs() / norm);
    }
    Ok(ResidualAggregates {
        d,
        e_hat,
        probe_descriptor: probes.descriptor.clone(),
        probes: probes.probes.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck<S> {
    /// `R(v)` from the global pair.
    pub lhs: S,
    /// `sum_k e_k(v) - sum_k <v(tau_k), d_k>` with `d_k = nu_k^- - nu_k^+`.
    pub rhs: S,
    pub abs_gap: S,
}

/// Recomputes the global residual from segment data.
///
/// Summing the local residuals telescopes the interior endpoint terms into
/// `+<v(tau_k), nu_k^- - nu_k^+>`, so with `d_k = nu_k^- - nu_k^+` the exact
/// identity is `R(v) = sum e_k(v) - sum <v(tau_k), d_k>`.
pub fn decomposition_check<S: Scalar, F: SmoothField<S> + ?Sized>(
    rollout: &SegmentedRollout<S>,
    pair: &PrimalPair<S>,
    mu0: &BoundaryMeasure<S>,
    v: &F,
    problem: &ControlProblem<S>,
) -> Result<DecompositionCheck<S>> {
    let expected = Provenance::Rollout {
        segments: rollout.partition.segments(),
        integrator: rollout.options.integrator,
        step: rollout.options.step.as_f64(),
    };
    let atoms: usize = rollout.segments.iter().map(|s| s.len()).sum();
    if pair.provenance != expected
        || Some(&pair.terminal) != rollout.exits.last()
        || pair.occupation.len() != atoms
    {
        return Err(Error::ProvenanceMismatch);
    }
    let lhs = liouville_residual(pair, mu0, v, problem)?;
    let mut rhs = S::zero();
    for k in 0..rollout.segments.len() {
        rhs = rhs + local_rollout_residual(rollout, k, v, problem)?;
    }
    for d in &rollout.defects {
        rhs = rhs - d.pair(v)?;
    }
    Ok(DecompositionCheck {
        lhs,
        rhs,
        abs_gap: (lhs - rhs).abs(),
    })
}
